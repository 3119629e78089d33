#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "fracstep/femcore.hpp"
#include "fracstep/grid.hpp"

namespace fracstep {

enum class AuxWeight { pou_gradient, h_scaled };  // kappa sum|grad chi|^2 or kappa H^-2

struct SpaceConfig {
  int l_per_block = 3;   // auxiliary eigenfunctions per block
  int j_per_block = 3;   // second-family eigenfunctions per block
  int layers = 2;        // oversampling layers
  AuxWeight weight = AuxWeight::pou_gradient;
};

struct BlockEigs {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // block-interior dofs x count, B-orthonormal
};

/// Per-block spectral problem results: a(psi, v) = lambda s_i(psi, v) on
/// V(K_i), with s_i the kappa~-weighted L2 form. Eigenvectors are
/// s_i-orthonormal. Also carries the global s-matrix used by the projection
/// and the constraint rows of the energy-minimization solves.
struct AuxSpace {
  int l_per_block = 0;
  AuxWeight weight = AuxWeight::pou_gradient;
  Vec kappa_tilde_cells;
  std::vector<DofMap> block_dofs;
  std::vector<BlockEigs> blocks;
  SpMat s_interior;  // s-form over interior dofs of the whole domain

  int total_aux() const;
  // global interior-sized auxiliary vector for (block, j)
  Vec aux_vector(const Mesh& mesh, int block, int j) const;
};

Vec make_kappa_tilde(const Mesh& mesh, const Vec& kappa_cells, AuxWeight weight);

BlockEigs solve_aux_eigen(const Mesh& mesh, const Vec& kappa_cells,
                          const Vec& kappa_tilde_cells, int block, int count);

AuxSpace build_aux_space(const Mesh& mesh, const Vec& kappa_cells, int l_per_block,
                         AuxWeight weight);

/// s-orthogonal projection onto the span of all auxiliary functions;
/// block-diagonal in the s inner product.
class Projection {
 public:
  Projection(const Mesh& mesh, const AuxSpace& aux);
  Vec apply(const Vec& interior) const;

 private:
  struct BlockData {
    std::vector<int> psi_rows;   // interior indices of the block dofs
    Eigen::MatrixXd psi;         // local eigenvectors
    std::vector<int> sup_rows;   // interior indices where S psi_j is nonzero
    Eigen::MatrixXd weights;     // (S psi_j) gathered on sup_rows, one column per j
  };
  std::vector<BlockData> blocks_;
  Eigen::Index dim_ = 0;
};

Projection build_projection(const Mesh& mesh, const AuxSpace& aux);

/// Energy-minimizing basis for auxiliary target (block, j), solved on the
/// oversampled region with zero trace and the s-matching constraints;
/// extended by zero to an interior-sized vector.
Vec solve_cem_basis(const Mesh& mesh, const Vec& kappa_cells, const AuxSpace& aux,
                    int block, int j, int layers);

/// General-target variant: constraint_rhs holds one entry per auxiliary
/// function of the region, ordered by (ascending block id, eigen index). A
/// zero vector yields the zero minimizer.
Vec solve_cem_basis_rhs(const Mesh& mesh, const Vec& kappa_cells,
                        const AuxSpace& aux, int block, int layers,
                        const Vec& constraint_rhs);

/// Second-family spectral problem on V(K_i) restricted to the s-orthogonal
/// complement of the block's auxiliary span; eigenvectors L2(K_i)-orthonormal.
BlockEigs solve_vh2_eigen(const Mesh& mesh, const Vec& kappa_cells,
                          const AuxSpace& aux, int block, int count);

/// Energy-minimizing representative of the second-family target (block, j):
/// two multiplier families enforce s-orthogonality to all auxiliary functions
/// and L2 matching against the second auxiliary family within the region.
Vec solve_vh2_basis(const Mesh& mesh, const Vec& kappa_cells, const AuxSpace& aux,
                    const std::vector<BlockEigs>& aux2, int block, int j, int layers);

struct BasisInfo {
  int block = 0;
  int index = 0;
  enum class Type { cem, aux2 } type = Type::cem;
};

struct MultiscaleSpace {
  SpaceConfig cfg;
  Eigen::MatrixXd R1;  // interior dofs x CEM basis count
  Eigen::MatrixXd R2;  // interior dofs x second-family count
  std::vector<BasisInfo> info;  // columns of R1 then R2

  Eigen::MatrixXd M11, M12, M22;  // reduced mass blocks
  Eigen::MatrixXd A11, A12, A22;  // reduced (linear) stiffness blocks
};

/// Full construction: auxiliary space, CEM solves, second family, per block,
/// executed concurrently over blocks with a deterministic merge.
MultiscaleSpace build_multiscale_space(const Mesh& mesh, const Vec& kappa_cells,
                                       const SpaceConfig& cfg);

/// M_ab = R_a^T M R_b and A_ab = R_a^T A R_b for a,b in {1,2}.
void assemble_reduced(MultiscaleSpace& space, const SpMat& mass, const SpMat& stiffness);

// column-major dense text export plus a (block, index, type) manifest
void save_basis(const std::string& path_prefix, const MultiscaleSpace& space);
MultiscaleSpace load_basis(const std::string& path_prefix);

}  // namespace fracstep
