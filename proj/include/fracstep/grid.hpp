#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

namespace fracstep {

/// Uniform fine grid on [0,1]^2 with a coarse-block partition.
///
/// Coarse blocks per side: n_coarse (H = 1/n_coarse); each block is split
/// into refinement x refinement fine cells (h = H/refinement). Node and cell
/// ids are x-fastest row-major. Homogeneous Dirichlet: interior node indexing
/// excludes every node on the domain boundary.
struct Mesh {
  int n_coarse = 0;
  int refinement = 0;

  std::vector<int> interior_of_node;  // node id -> interior index, -1 on boundary
  std::vector<int> node_of_interior;  // interior index -> node id

  int cells_per_side() const { return n_coarse * refinement; }
  int nodes_per_side() const { return cells_per_side() + 1; }
  int node_count() const { return nodes_per_side() * nodes_per_side(); }
  int cell_count() const { return cells_per_side() * cells_per_side(); }
  int block_count() const { return n_coarse * n_coarse; }
  int interior_count() const { return static_cast<int>(node_of_interior.size()); }

  double coarse_h() const { return 1.0 / n_coarse; }
  double fine_h() const { return 1.0 / cells_per_side(); }

  int node_id(int ix, int iy) const { return iy * nodes_per_side() + ix; }
  int cell_id(int cx, int cy) const { return cy * cells_per_side() + cx; }
  int block_id(int bx, int by) const { return by * n_coarse + bx; }

  double node_x(int node) const { return (node % nodes_per_side()) * fine_h(); }
  double node_y(int node) const { return (node / nodes_per_side()) * fine_h(); }

  bool node_on_boundary(int node) const { return interior_of_node[node] < 0; }

  // corner nodes of a fine cell, order SW, SE, NW, NE
  std::array<int, 4> cell_nodes(int cell) const {
    const int n = cells_per_side();
    const int cx = cell % n, cy = cell / n;
    const int sw = node_id(cx, cy);
    return {sw, sw + 1, sw + nodes_per_side(), sw + nodes_per_side() + 1};
  }

  int cell_block(int cell) const {
    const int n = cells_per_side();
    return block_id((cell % n) / refinement, (cell / n) / refinement);
  }

  std::vector<int> block_cells(int block) const;
};

Mesh build_grid(int n_coarse, int refinement);

/// Coarse block neighborhood K_i^+ : all blocks within `layers` in Chebyshev
/// distance, clipped to the domain. Always a rectangle of blocks. local
/// numbering covers fine nodes strictly inside the region (zero trace on its
/// boundary, which may include part of the domain boundary).
struct OversampleRegion {
  int center_block = -1;
  int layers = 0;
  int bx0 = 0, bx1 = 0, by0 = 0, by1 = 0;  // inclusive block rectangle
  std::vector<int> blocks;                 // ascending block ids
  std::vector<int> interior_nodes;         // ascending global node ids
  std::vector<int> local_of_node;          // node id -> local index, -1 outside

  bool contains_block(int block, const Mesh& mesh) const {
    const int bx = block % mesh.n_coarse, by = block / mesh.n_coarse;
    return bx >= bx0 && bx <= bx1 && by >= by0 && by <= by1;
  }
};

OversampleRegion oversample(const Mesh& mesh, int block, int layers);

/// Coarse bilinear hat functions, one per coarse vertex, sampled on all fine
/// nodes. They sum to 1 everywhere on the closed domain.
std::vector<Eigen::VectorXd> partition_of_unity(const Mesh& mesh);

// sum_i |grad chi_i|^2 evaluated at fine-cell centers (cellwise weight for
// the s-form)
Eigen::VectorXd pou_gradient_sq_cells(const Mesh& mesh);

}  // namespace fracstep
