#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <optional>
#include <span>
#include <vector>

#include "fracstep/grid.hpp"

namespace fracstep {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

enum class FKind { linear, quadratic };   // kappa or kappa*(1+u^2)
enum class GKind { none, cubic, rational };

/// Cellwise permeability plus the diffusion nonlinearity descriptor.
struct CoefficientField {
  Vec cell;  // one positive value per fine cell
  FKind kind = FKind::linear;

  double contrast() const { return cell.maxCoeff() / cell.minCoeff(); }
  void validate(const Mesh& mesh) const;
};

/// Selection of nodes carrying degrees of freedom (rows/cols of assembled
/// operators). local_of_node is -1 on excluded nodes.
struct DofMap {
  std::vector<int> local_of_node;
  std::vector<int> nodes;
  int size() const { return static_cast<int>(nodes.size()); }
};

DofMap interior_dof_map(const Mesh& mesh);
DofMap full_dof_map(const Mesh& mesh);
DofMap block_dof_map(const Mesh& mesh, int block);      // nodes strictly inside block
DofMap region_dof_map(const Mesh& mesh, const OversampleRegion& region);

// scatter local coefficients to a full nodal vector (zeros elsewhere)
Vec to_full(const Mesh& mesh, const DofMap& dofs, const Vec& local);
// gather a full nodal vector onto a dof map
Vec to_local(const DofMap& dofs, const Vec& full);

// ---- assembly (2x2 tensor Gauss; exact for Q1 forms with cellwise weights)

// M_pq = int w phi_p phi_q; w = nullptr means unit weight
SpMat assemble_mass(const Mesh& mesh, const Vec* cell_weight, const DofMap& dofs);
SpMat assemble_mass(const Mesh& mesh, const Vec* cell_weight, const DofMap& dofs,
                    std::span<const int> cells);

// A_pq = int kappa grad phi_p . grad phi_q
SpMat assemble_stiffness_linear(const Mesh& mesh, const Vec& kappa_cells,
                                const DofMap& dofs);
SpMat assemble_stiffness_linear(const Mesh& mesh, const Vec& kappa_cells,
                                const DofMap& dofs, std::span<const int> cells);

// A(u)_pq = int kappa (1+u^2) grad phi_p . grad phi_q, u given on all nodes
SpMat assemble_stiffness_state(const Mesh& mesh, const Vec& kappa_cells,
                               const Vec& full_state, const DofMap& dofs);

// descriptor-dispatching variant per the CoefficientField contract
SpMat assemble_stiffness(const Mesh& mesh, const CoefficientField& kappa,
                         const std::optional<Vec>& full_state, const DofMap& dofs);

// d/du of the quadratic-diffusion residual: A(u) + 2 int kappa u phi_q grad u . grad phi_p
SpMat assemble_f_jacobian(const Mesh& mesh, const Vec& kappa_cells,
                          const Vec& full_state, const DofMap& dofs);

// d/du of the reaction residual: int g'(u) phi_p phi_q
SpMat assemble_g_jacobian(const Mesh& mesh, const Vec& full_state, GKind g,
                          const DofMap& dofs);

// ---- nonlinear operators in Galerkin form (interior dofs)

// (f(u), phi_p) = sum_q A(u)_pq u_q
Vec apply_f(const Mesh& mesh, const CoefficientField& kappa, const Vec& u_interior);

// (g(u), phi_p) by quadrature, u and g0 interpolated at quadrature points
Vec apply_g(const Mesh& mesh, const Vec& u_interior, const Vec& g0_interior, GKind g);
Vec apply_g(const Mesh& mesh, const Vec& u_dofs, const Vec& g0_dofs, GKind g,
            const DofMap& dofs);

// F(u) = 1/2 int kappa |grad u|^2  (linear diffusion energy)
double energy_F(const Mesh& mesh, const Vec& kappa_cells, const Vec& u_interior);
// G(u) with antiderivative fixed so the g0-independent part vanishes at u=0
double energy_G(const Mesh& mesh, const Vec& u_interior, const Vec& g0_interior,
                GKind g);

// pointwise reaction density, its u-derivative, and the G-density
double g_pointwise(double u, double g0, GKind g);
double g_prime_pointwise(double u, GKind g);
double g_density(double u, double g0, GKind g);

}  // namespace fracstep
