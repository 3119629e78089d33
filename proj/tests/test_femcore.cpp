#include <doctest.h>

#include <random>

#include "fracstep/femcore.hpp"

using namespace fracstep;

namespace {

Vec random_field(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

double sym_error(const SpMat& A) {
  const SpMat D = SpMat(A.transpose()) - A;
  double num = 0.0, den = 0.0;
  for (int k = 0; k < D.outerSize(); ++k)
    for (SpMat::InnerIterator it(D, k); it; ++it) num = std::max(num, std::abs(it.value()));
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) den = std::max(den, std::abs(it.value()));
  return den > 0 ? num / den : 0.0;
}

// independent residual oracle: per-cell quadrature of the quadratic-diffusion
// form, written without the assembled-operator route
Vec quadratic_residual_oracle(const Mesh& mesh, const Vec& kappa_cells,
                              const Vec& u_interior) {
  const DofMap dofs = interior_dof_map(mesh);
  const Vec full = to_full(mesh, dofs, u_interior);
  const double h = mesh.fine_h();
  const double ga = 0.5 - 0.5 / std::sqrt(3.0), gb = 0.5 + 0.5 / std::sqrt(3.0);
  Vec out = Vec::Zero(dofs.size());
  for (int cell = 0; cell < mesh.cell_count(); ++cell) {
    const auto nodes = mesh.cell_nodes(cell);
    for (double xi : {ga, gb})
      for (double eta : {ga, gb}) {
        const double N[4] = {(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta,
                             xi * eta};
        const double dN[4][2] = {{-(1 - eta), -(1 - xi)},
                                 {1 - eta, -xi},
                                 {-eta, 1 - xi},
                                 {eta, xi}};
        double u = 0, gx = 0, gy = 0;
        for (int a = 0; a < 4; ++a) {
          u += N[a] * full[nodes[a]];
          gx += dN[a][0] / h * full[nodes[a]];
          gy += dN[a][1] / h * full[nodes[a]];
        }
        const double coeff = kappa_cells[cell] * (1.0 + u * u);
        for (int a = 0; a < 4; ++a) {
          const int p = dofs.local_of_node[nodes[a]];
          if (p >= 0)
            out[p] += 0.25 * h * h * coeff *
                      (gx * dN[a][0] / h + gy * dN[a][1] / h);
        }
      }
  }
  return out;
}

}  // namespace

TEST_CASE("mass assembly basics") {
  SUBCASE("unit mesh has no interior dofs") {
    const Mesh mesh = build_grid(1, 1);
    const SpMat M = assemble_mass(mesh, nullptr, interior_dof_map(mesh));
    CHECK(M.rows() == 0);
  }
  SUBCASE("total mass over all nodes equals the domain area") {
    const Mesh mesh = build_grid(3, 4);
    const SpMat M = assemble_mass(mesh, nullptr, full_dof_map(mesh));
    double total = 0.0;
    for (int k = 0; k < M.outerSize(); ++k)
      for (SpMat::InnerIterator it(M, k); it; ++it) total += it.value();
    CHECK(total == doctest::Approx(1.0).epsilon(1e-13));
  }
  SUBCASE("full-matrix row sums give h^2 at interior nodes") {
    const Mesh mesh = build_grid(2, 4);
    const SpMat M = assemble_mass(mesh, nullptr, full_dof_map(mesh));
    const Vec sums = M * Vec::Ones(mesh.node_count());
    const double cell_area = mesh.fine_h() * mesh.fine_h();
    for (int node = 0; node < mesh.node_count(); ++node)
      if (!mesh.node_on_boundary(node))
        CHECK(sums[node] == doctest::Approx(cell_area).epsilon(1e-13));
  }
  SUBCASE("constant weight scales linearly") {
    const Mesh mesh = build_grid(2, 3);
    const Vec two = Vec::Constant(mesh.cell_count(), 2.0);
    const SpMat M1 = assemble_mass(mesh, nullptr, interior_dof_map(mesh));
    const SpMat M2 = assemble_mass(mesh, &two, interior_dof_map(mesh));
    CHECK((Eigen::MatrixXd(M2) - 2.0 * Eigen::MatrixXd(M1)).norm() <= 1e-15);
  }
  SUBCASE("non-positive weight rejected") {
    const Mesh mesh = build_grid(2, 2);
    Vec w = Vec::Ones(mesh.cell_count());
    w[3] = 0.0;
    CHECK_THROWS_AS(assemble_mass(mesh, &w, interior_dof_map(mesh)),
                    std::invalid_argument);
  }
  SUBCASE("mass positive definite on meshes up to (5,5)") {
    for (int nc : {2, 3, 5}) {
      const Mesh mesh = build_grid(nc, 5);
      const SpMat M = assemble_mass(mesh, nullptr, interior_dof_map(mesh));
      const Eigen::MatrixXd Md(M);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Md);
      CHECK(eig.eigenvalues().minCoeff() > 0.0);
    }
  }
}

TEST_CASE("stiffness assembly") {
  const Mesh mesh = build_grid(2, 2);
  const Vec ones = Vec::Ones(mesh.cell_count());
  const SpMat A = assemble_stiffness_linear(mesh, ones, interior_dof_map(mesh));

  SUBCASE("interior stencil is 8/3 with -1/3 neighbors") {
    // center node of the 3x3 interior grid
    const Eigen::MatrixXd Ad(A);
    CHECK(Ad(4, 4) == doctest::Approx(8.0 / 3.0));
    for (int j : {0, 1, 2, 3, 5, 6, 7, 8})
      CHECK(Ad(4, j) == doctest::Approx(-1.0 / 3.0));
  }

  SUBCASE("interpolant energy approaches the analytic integral 1/45") {
    // v = x(1-x)y(1-y): int |grad v|^2 = 1/45, interpolation error O(h^2)
    auto energy_on = [&](const Mesh& m) {
      const DofMap dofs = interior_dof_map(m);
      const Vec k1 = Vec::Ones(m.cell_count());
      const SpMat As = assemble_stiffness_linear(m, k1, dofs);
      Vec v(dofs.size());
      for (int i = 0; i < dofs.size(); ++i) {
        const double x = m.node_x(dofs.nodes[i]), y = m.node_y(dofs.nodes[i]);
        v[i] = x * (1 - x) * y * (1 - y);
      }
      return v.dot(As * v);
    };
    const double exact = 1.0 / 45.0;
    const double err_coarse = std::abs(energy_on(build_grid(2, 2)) - exact) / exact;
    const double err_fine = std::abs(energy_on(build_grid(4, 2)) - exact) / exact;
    CHECK(err_fine <= 0.05);
    CHECK(err_coarse / err_fine == doctest::Approx(4.0).epsilon(0.3));
  }

  SUBCASE("quadratic assembly at zero state equals the linear one") {
    const Vec zero_state = Vec::Zero(mesh.node_count());
    const SpMat Aq = assemble_stiffness_state(mesh, ones, zero_state,
                                              interior_dof_map(mesh));
    CHECK((Eigen::MatrixXd(Aq) - Eigen::MatrixXd(A)).norm() == 0.0);
  }

  SUBCASE("kappa scaling is exact") {
    const Vec ten = Vec::Constant(mesh.cell_count(), 10.0);
    const SpMat A10 = assemble_stiffness_linear(mesh, ten, interior_dof_map(mesh));
    CHECK((Eigen::MatrixXd(A10) - 10.0 * Eigen::MatrixXd(A)).norm() <= 1e-12);
  }

  SUBCASE("quadratic descriptor requires a state") {
    CoefficientField kappa{ones, FKind::quadratic};
    CHECK_THROWS_AS(
        assemble_stiffness(mesh, kappa, std::nullopt, interior_dof_map(mesh)),
        std::invalid_argument);
  }

  SUBCASE("assembled operators are symmetric") {
    std::mt19937_64 rng(3);
    const Mesh m2 = build_grid(3, 3);
    const Vec state = random_field(rng, m2.node_count());
    const Vec kap = Vec::Constant(m2.cell_count(), 2.5);
    CHECK(sym_error(assemble_stiffness_linear(m2, kap, interior_dof_map(m2))) <= 1e-12);
    CHECK(sym_error(assemble_stiffness_state(m2, kap, state, interior_dof_map(m2))) <=
          1e-12);
    CHECK(sym_error(assemble_mass(m2, &kap, interior_dof_map(m2))) <= 1e-12);
  }
}

TEST_CASE("apply_f") {
  const Mesh mesh = build_grid(3, 3);
  std::mt19937_64 rng(11);
  const Vec kappa_cells = Vec::Constant(mesh.cell_count(), 1.0);

  SUBCASE("zero field maps to zero") {
    CoefficientField kappa{kappa_cells, FKind::linear};
    const Vec out = apply_f(mesh, kappa, Vec::Zero(mesh.interior_count()));
    CHECK(out.norm() == 0.0);
  }
  SUBCASE("linear case equals stiffness times coefficients") {
    CoefficientField kappa{kappa_cells, FKind::linear};
    const Vec u = random_field(rng, mesh.interior_count());
    const SpMat A = assemble_stiffness_linear(mesh, kappa_cells,
                                              interior_dof_map(mesh));
    CHECK((apply_f(mesh, kappa, u) - A * u).norm() <= 1e-13 * u.norm());
  }
  SUBCASE("quadratic case matches the per-cell quadrature oracle") {
    CoefficientField kappa{kappa_cells, FKind::quadratic};
    for (int trial = 0; trial < 5; ++trial) {
      const Vec u = random_field(rng, mesh.interior_count(), 0.3);
      const Vec got = apply_f(mesh, kappa, u);
      const Vec want = quadratic_residual_oracle(mesh, kappa_cells, u);
      CHECK((got - want).norm() <= 1e-12 * std::max(1.0, want.norm()));
    }
  }
  SUBCASE("linear residual scales with kappa") {
    const Vec u = random_field(rng, mesh.interior_count());
    CoefficientField k1{kappa_cells, FKind::linear};
    CoefficientField k5{5.0 * kappa_cells, FKind::linear};
    CHECK((apply_f(mesh, k5, u) - 5.0 * apply_f(mesh, k1, u)).norm() <=
          1e-12 * u.norm());
  }
}

TEST_CASE("apply_g") {
  const Mesh mesh = build_grid(3, 2);
  const Vec zero = Vec::Zero(mesh.interior_count());

  SUBCASE("cubic at u=0 with no source vanishes") {
    CHECK(apply_g(mesh, zero, zero, GKind::cubic).norm() == 0.0);
  }
  SUBCASE("rational at u=0 with no source vanishes") {
    CHECK(apply_g(mesh, zero, zero, GKind::rational).norm() == 0.0);
  }
  SUBCASE("cubic vanishes on the constant state u=1 (root of the reaction)") {
    const DofMap all = full_dof_map(mesh);
    const Vec ones = Vec::Ones(all.size());
    const Vec g0 = Vec::Zero(all.size());
    CHECK(apply_g(mesh, ones, g0, GKind::cubic, all).norm() <= 1e-15);
  }
  SUBCASE("pointwise roots") {
    CHECK(g_pointwise(0.0, 0.0, GKind::cubic) == 0.0);
    CHECK(g_pointwise(1.0, 0.0, GKind::cubic) == 0.0);
    CHECK(g_pointwise(0.0, 0.0, GKind::rational) == 0.0);
  }
  SUBCASE("rational singularity raises") {
    const DofMap all = full_dof_map(mesh);
    const Vec bad = Vec::Constant(all.size(), -2.5);
    const Vec g0 = Vec::Zero(all.size());
    CHECK_THROWS_AS(apply_g(mesh, bad, g0, GKind::rational, all),
                    std::domain_error);
  }
}

TEST_CASE("energies and gradient consistency") {
  const Mesh mesh = build_grid(3, 3);
  std::mt19937_64 rng(17);
  const Vec kappa_cells = Vec::Constant(mesh.cell_count(), 1.0);
  const Vec zero = Vec::Zero(mesh.interior_count());

  SUBCASE("energies vanish at zero state") {
    CHECK(energy_F(mesh, kappa_cells, zero) == 0.0);
    CHECK(energy_G(mesh, zero, zero, GKind::cubic) == 0.0);
    CHECK(energy_G(mesh, zero, zero, GKind::rational) == 0.0);
  }
  SUBCASE("diffusion energy is quadratic in the state") {
    const Vec u = random_field(rng, mesh.interior_count());
    const double e1 = energy_F(mesh, kappa_cells, u);
    const double e3 = energy_F(mesh, kappa_cells, 3.0 * u);
    CHECK(e3 == doctest::Approx(9.0 * e1).epsilon(1e-12));
  }
  SUBCASE("apply_f is the gradient of energy_F (linear case)") {
    const double eps = 1e-5;
    for (int trial = 0; trial < 3; ++trial) {
      const Vec u = random_field(rng, mesh.interior_count());
      const Vec v = random_field(rng, mesh.interior_count());
      const double fd = (energy_F(mesh, kappa_cells, u + eps * v) -
                         energy_F(mesh, kappa_cells, u - eps * v)) /
                        (2 * eps);
      CoefficientField kappa{kappa_cells, FKind::linear};
      const double directional = apply_f(mesh, kappa, u).dot(v);
      CHECK(fd == doctest::Approx(directional).epsilon(1e-6));
    }
  }
  SUBCASE("apply_g is the gradient of energy_G (both variants)") {
    const double eps = 1e-5;
    for (GKind g : {GKind::cubic, GKind::rational}) {
      for (int trial = 0; trial < 3; ++trial) {
        const Vec u = random_field(rng, mesh.interior_count(), 0.4);
        const Vec v = random_field(rng, mesh.interior_count(), 0.4);
        const Vec g0 = random_field(rng, mesh.interior_count(), 1.0);
        const double fd = (energy_G(mesh, u + eps * v, g0, g) -
                           energy_G(mesh, u - eps * v, g0, g)) /
                          (2 * eps);
        const double directional = apply_g(mesh, u, g0, g).dot(v);
        CHECK(fd == doctest::Approx(directional).epsilon(1e-6));
      }
    }
  }
}
