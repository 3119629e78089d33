#include "fracstep/femcore.hpp"

#include <cmath>
#include <stdexcept>

namespace fracstep {

namespace {

// 2-point Gauss on [0,1]: nodes g0/g1, weights 1/2 each
constexpr double kGaussA = 0.211324865405187118;  // 1/2 - 1/(2 sqrt 3)
constexpr double kGaussB = 0.788675134594812882;

struct QuadPoint {
  double xi, eta, w;
};

const std::array<QuadPoint, 4>& quad_points() {
  static const std::array<QuadPoint, 4> q = {{{kGaussA, kGaussA, 0.25},
                                              {kGaussB, kGaussA, 0.25},
                                              {kGaussA, kGaussB, 0.25},
                                              {kGaussB, kGaussB, 0.25}}};
  return q;
}

// Q1 shapes on the reference cell [0,1]^2, node order SW SE NW NE
std::array<double, 4> shapes(double xi, double eta) {
  return {(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta};
}

// reference gradients (d/dxi, d/deta)
std::array<std::array<double, 2>, 4> grads(double xi, double eta) {
  return {{{-(1 - eta), -(1 - xi)},
           {1 - eta, -xi},
           {-eta, 1 - xi},
           {eta, xi}}};
}

using Triplets = std::vector<Eigen::Triplet<double>>;

std::vector<int> all_cells(const Mesh& mesh) {
  std::vector<int> cells(mesh.cell_count());
  for (int c = 0; c < mesh.cell_count(); ++c) cells[c] = c;
  return cells;
}

}  // namespace

void CoefficientField::validate(const Mesh& mesh) const {
  if (cell.size() != mesh.cell_count())
    throw std::invalid_argument("coefficient field size mismatch");
  if (cell.minCoeff() <= 0.0)
    throw std::invalid_argument("coefficient field must be positive");
}

DofMap interior_dof_map(const Mesh& mesh) {
  DofMap d;
  d.local_of_node = mesh.interior_of_node;
  d.nodes = mesh.node_of_interior;
  return d;
}

DofMap full_dof_map(const Mesh& mesh) {
  DofMap d;
  d.local_of_node.resize(mesh.node_count());
  d.nodes.resize(mesh.node_count());
  for (int i = 0; i < mesh.node_count(); ++i) {
    d.local_of_node[i] = i;
    d.nodes[i] = i;
  }
  return d;
}

DofMap block_dof_map(const Mesh& mesh, int block) {
  DofMap d;
  d.local_of_node.assign(mesh.node_count(), -1);
  const int ref = mesh.refinement;
  const int bx = block % mesh.n_coarse, by = block / mesh.n_coarse;
  for (int iy = by * ref + 1; iy < (by + 1) * ref; ++iy)
    for (int ix = bx * ref + 1; ix < (bx + 1) * ref; ++ix) {
      const int node = mesh.node_id(ix, iy);
      d.local_of_node[node] = static_cast<int>(d.nodes.size());
      d.nodes.push_back(node);
    }
  return d;
}

DofMap region_dof_map(const Mesh& mesh, const OversampleRegion& region) {
  (void)mesh;
  DofMap d;
  d.local_of_node = region.local_of_node;
  d.nodes = region.interior_nodes;
  return d;
}

Vec to_full(const Mesh& mesh, const DofMap& dofs, const Vec& local) {
  if (local.size() != dofs.size())
    throw std::invalid_argument("to_full: size mismatch");
  Vec full = Vec::Zero(mesh.node_count());
  for (int i = 0; i < dofs.size(); ++i) full[dofs.nodes[i]] = local[i];
  return full;
}

Vec to_local(const DofMap& dofs, const Vec& full) {
  Vec local(dofs.size());
  for (int i = 0; i < dofs.size(); ++i) local[i] = full[dofs.nodes[i]];
  return local;
}

SpMat assemble_mass(const Mesh& mesh, const Vec* cell_weight, const DofMap& dofs) {
  return assemble_mass(mesh, cell_weight, dofs, all_cells(mesh));
}

SpMat assemble_mass(const Mesh& mesh, const Vec* cell_weight, const DofMap& dofs,
                    std::span<const int> cells) {
  if (cell_weight && cell_weight->minCoeff() <= 0.0)
    throw std::invalid_argument("assemble_mass: weight must be positive");
  const double h = mesh.fine_h();
  const double jac = h * h;
  Triplets trip;
  trip.reserve(cells.size() * 16);
  for (int cell : cells) {
    const auto nodes = mesh.cell_nodes(cell);
    const double w_cell = cell_weight ? (*cell_weight)[cell] : 1.0;
    std::array<std::array<double, 4>, 4> local{};
    for (const auto& q : quad_points()) {
      const auto N = shapes(q.xi, q.eta);
      const double scale = q.w * jac * w_cell;
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) local[a][b] += scale * N[a] * N[b];
    }
    for (int a = 0; a < 4; ++a) {
      const int p = dofs.local_of_node[nodes[a]];
      if (p < 0) continue;
      for (int b = 0; b < 4; ++b) {
        const int r = dofs.local_of_node[nodes[b]];
        if (r >= 0) trip.emplace_back(p, r, local[a][b]);
      }
    }
  }
  SpMat M(dofs.size(), dofs.size());
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

namespace {

// shared elementwise stiffness assembly; coeff_at_q returns the scalar factor
// multiplying grad phi_p . grad phi_q at a quadrature point
template <typename CoeffFn>
SpMat assemble_gradgrad(const Mesh& mesh, const DofMap& dofs,
                        std::span<const int> cells, CoeffFn&& coeff_at_q) {
  Triplets trip;
  trip.reserve(cells.size() * 16);
  for (int cell : cells) {
    const auto nodes = mesh.cell_nodes(cell);
    std::array<std::array<double, 4>, 4> local{};
    for (const auto& q : quad_points()) {
      const auto dN = grads(q.xi, q.eta);  // physical gradient = dN/h
      const double scale = q.w * coeff_at_q(cell, nodes, q.xi, q.eta);
      // the cell jacobian h^2 cancels the two 1/h gradient factors
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          local[a][b] += scale * (dN[a][0] * dN[b][0] + dN[a][1] * dN[b][1]);
    }
    for (int a = 0; a < 4; ++a) {
      const int p = dofs.local_of_node[nodes[a]];
      if (p < 0) continue;
      for (int b = 0; b < 4; ++b) {
        const int r = dofs.local_of_node[nodes[b]];
        if (r >= 0) trip.emplace_back(p, r, local[a][b]);
      }
    }
  }
  SpMat A(dofs.size(), dofs.size());
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

}  // namespace

SpMat assemble_stiffness_linear(const Mesh& mesh, const Vec& kappa_cells,
                                const DofMap& dofs) {
  return assemble_stiffness_linear(mesh, kappa_cells, dofs, all_cells(mesh));
}

SpMat assemble_stiffness_linear(const Mesh& mesh, const Vec& kappa_cells,
                                const DofMap& dofs, std::span<const int> cells) {
  return assemble_gradgrad(mesh, dofs, cells,
                           [&](int cell, const std::array<int, 4>&, double, double) {
                             return kappa_cells[cell];
                           });
}

SpMat assemble_stiffness_state(const Mesh& mesh, const Vec& kappa_cells,
                               const Vec& full_state, const DofMap& dofs) {
  return assemble_gradgrad(
      mesh, dofs, all_cells(mesh),
      [&](int cell, const std::array<int, 4>& nodes, double xi, double eta) {
        const auto N = shapes(xi, eta);
        double u = 0.0;
        for (int a = 0; a < 4; ++a) u += N[a] * full_state[nodes[a]];
        return kappa_cells[cell] * (1.0 + u * u);
      });
}

SpMat assemble_stiffness(const Mesh& mesh, const CoefficientField& kappa,
                         const std::optional<Vec>& full_state, const DofMap& dofs) {
  kappa.validate(mesh);
  if (kappa.kind == FKind::linear)
    return assemble_stiffness_linear(mesh, kappa.cell, dofs);
  if (!full_state)
    throw std::invalid_argument("quadratic diffusion needs a state field");
  return assemble_stiffness_state(mesh, kappa.cell, *full_state, dofs);
}

SpMat assemble_f_jacobian(const Mesh& mesh, const Vec& kappa_cells,
                          const Vec& full_state, const DofMap& dofs) {
  // J_pq = int kappa (1+u^2) grad phi_q . grad phi_p + 2 int kappa u phi_q grad u . grad phi_p
  const double h = mesh.fine_h();
  Triplets trip;
  trip.reserve(static_cast<std::size_t>(mesh.cell_count()) * 16);
  for (int cell = 0; cell < mesh.cell_count(); ++cell) {
    const auto nodes = mesh.cell_nodes(cell);
    std::array<std::array<double, 4>, 4> local{};
    for (const auto& q : quad_points()) {
      const auto N = shapes(q.xi, q.eta);
      const auto dN = grads(q.xi, q.eta);
      double u = 0.0, gx = 0.0, gy = 0.0;
      for (int a = 0; a < 4; ++a) {
        u += N[a] * full_state[nodes[a]];
        gx += dN[a][0] / h * full_state[nodes[a]];
        gy += dN[a][1] / h * full_state[nodes[a]];
      }
      const double k = kappa_cells[cell];
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          const double gradgrad = (dN[a][0] * dN[b][0] + dN[a][1] * dN[b][1]);
          const double cross = (dN[a][0] / h * gx + dN[a][1] / h * gy) * N[b];
          local[a][b] += q.w * (k * (1 + u * u) * gradgrad +
                                h * h * 2.0 * k * u * cross);
        }
    }
    for (int a = 0; a < 4; ++a) {
      const int p = dofs.local_of_node[nodes[a]];
      if (p < 0) continue;
      for (int b = 0; b < 4; ++b) {
        const int r = dofs.local_of_node[nodes[b]];
        if (r >= 0) trip.emplace_back(p, r, local[a][b]);
      }
    }
  }
  SpMat J(dofs.size(), dofs.size());
  J.setFromTriplets(trip.begin(), trip.end());
  return J;
}

double g_pointwise(double u, double g0, GKind g) {
  switch (g) {
    case GKind::none: return 0.0;
    case GKind::cubic: return -(10.0 * u * (u * u - 1.0) + g0);
    case GKind::rational:
      if (u <= -2.0)
        throw std::domain_error("rational reaction: state reached u <= -2");
      return -(-10.0 * u / (u + 2.0) + g0);
  }
  return 0.0;
}

double g_prime_pointwise(double u, GKind g) {
  switch (g) {
    case GKind::none: return 0.0;
    case GKind::cubic: return 10.0 - 30.0 * u * u;
    case GKind::rational:
      if (u <= -2.0)
        throw std::domain_error("rational reaction: state reached u <= -2");
      return 20.0 / ((u + 2.0) * (u + 2.0));
  }
  return 0.0;
}

double g_density(double u, double g0, GKind g) {
  switch (g) {
    case GKind::none: return 0.0;
    case GKind::cubic: return -(10.0 * (u * u * u * u / 4.0 - u * u / 2.0) + g0 * u);
    case GKind::rational:
      if (u <= -2.0)
        throw std::domain_error("rational reaction: state reached u <= -2");
      // antiderivative of 10u/(u+2), shifted so it vanishes at u=0
      return 10.0 * u - 20.0 * std::log((u + 2.0) / 2.0) - g0 * u;
  }
  return 0.0;
}

SpMat assemble_g_jacobian(const Mesh& mesh, const Vec& full_state, GKind g,
                          const DofMap& dofs) {
  const double h = mesh.fine_h();
  const double jac = h * h;
  Triplets trip;
  trip.reserve(static_cast<std::size_t>(mesh.cell_count()) * 16);
  for (int cell = 0; cell < mesh.cell_count(); ++cell) {
    const auto nodes = mesh.cell_nodes(cell);
    std::array<std::array<double, 4>, 4> local{};
    for (const auto& q : quad_points()) {
      const auto N = shapes(q.xi, q.eta);
      double u = 0.0;
      for (int a = 0; a < 4; ++a) u += N[a] * full_state[nodes[a]];
      const double gp = g_prime_pointwise(u, g);
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) local[a][b] += q.w * jac * gp * N[a] * N[b];
    }
    for (int a = 0; a < 4; ++a) {
      const int p = dofs.local_of_node[nodes[a]];
      if (p < 0) continue;
      for (int b = 0; b < 4; ++b) {
        const int r = dofs.local_of_node[nodes[b]];
        if (r >= 0) trip.emplace_back(p, r, local[a][b]);
      }
    }
  }
  SpMat J(dofs.size(), dofs.size());
  J.setFromTriplets(trip.begin(), trip.end());
  return J;
}

Vec apply_f(const Mesh& mesh, const CoefficientField& kappa, const Vec& u_interior) {
  const DofMap dofs = interior_dof_map(mesh);
  if (u_interior.size() != dofs.size())
    throw std::invalid_argument("apply_f: field size mismatch");
  std::optional<Vec> state;
  if (kappa.kind == FKind::quadratic) state = to_full(mesh, dofs, u_interior);
  const SpMat A = assemble_stiffness(mesh, kappa, state, dofs);
  return A * u_interior;
}

Vec apply_g(const Mesh& mesh, const Vec& u_interior, const Vec& g0_interior,
            GKind g) {
  return apply_g(mesh, u_interior, g0_interior, g, interior_dof_map(mesh));
}

Vec apply_g(const Mesh& mesh, const Vec& u_dofs, const Vec& g0_dofs, GKind g,
            const DofMap& dofs) {
  if (u_dofs.size() != dofs.size() || g0_dofs.size() != dofs.size())
    throw std::invalid_argument("apply_g: field size mismatch");
  const Vec u_full = to_full(mesh, dofs, u_dofs);
  const Vec g0_full = to_full(mesh, dofs, g0_dofs);
  const double h = mesh.fine_h();
  const double jac = h * h;
  Vec out = Vec::Zero(dofs.size());
  for (int cell = 0; cell < mesh.cell_count(); ++cell) {
    const auto nodes = mesh.cell_nodes(cell);
    for (const auto& q : quad_points()) {
      const auto N = shapes(q.xi, q.eta);
      double u = 0.0, g0 = 0.0;
      for (int a = 0; a < 4; ++a) {
        u += N[a] * u_full[nodes[a]];
        g0 += N[a] * g0_full[nodes[a]];
      }
      const double val = g_pointwise(u, g0, g);
      for (int a = 0; a < 4; ++a) {
        const int p = dofs.local_of_node[nodes[a]];
        if (p >= 0) out[p] += q.w * jac * val * N[a];
      }
    }
  }
  return out;
}

double energy_F(const Mesh& mesh, const Vec& kappa_cells, const Vec& u_interior) {
  const DofMap dofs = interior_dof_map(mesh);
  const Vec u_full = to_full(mesh, dofs, u_interior);
  const double h = mesh.fine_h();
  double energy = 0.0;
  for (int cell = 0; cell < mesh.cell_count(); ++cell) {
    const auto nodes = mesh.cell_nodes(cell);
    for (const auto& q : quad_points()) {
      const auto dN = grads(q.xi, q.eta);
      double gx = 0.0, gy = 0.0;
      for (int a = 0; a < 4; ++a) {
        gx += dN[a][0] / h * u_full[nodes[a]];
        gy += dN[a][1] / h * u_full[nodes[a]];
      }
      energy += q.w * h * h * 0.5 * kappa_cells[cell] * (gx * gx + gy * gy);
    }
  }
  return energy;
}

double energy_G(const Mesh& mesh, const Vec& u_interior, const Vec& g0_interior,
                GKind g) {
  const DofMap dofs = interior_dof_map(mesh);
  const Vec u_full = to_full(mesh, dofs, u_interior);
  const Vec g0_full = to_full(mesh, dofs, g0_interior);
  const double h = mesh.fine_h();
  const double jac = h * h;
  double energy = 0.0;
  for (int cell = 0; cell < mesh.cell_count(); ++cell) {
    const auto nodes = mesh.cell_nodes(cell);
    for (const auto& q : quad_points()) {
      const auto N = shapes(q.xi, q.eta);
      double u = 0.0, g0 = 0.0;
      for (int a = 0; a < 4; ++a) {
        u += N[a] * u_full[nodes[a]];
        g0 += N[a] * g0_full[nodes[a]];
      }
      energy += q.w * jac * g_density(u, g0, g);
    }
  }
  return energy;
}

}  // namespace fracstep
