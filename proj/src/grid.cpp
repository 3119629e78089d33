#include "fracstep/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fracstep {

std::vector<int> Mesh::block_cells(int block) const {
  const int bx = block % n_coarse, by = block / n_coarse;
  std::vector<int> cells;
  cells.reserve(refinement * refinement);
  for (int ly = 0; ly < refinement; ++ly)
    for (int lx = 0; lx < refinement; ++lx)
      cells.push_back(cell_id(bx * refinement + lx, by * refinement + ly));
  return cells;
}

Mesh build_grid(int n_coarse, int refinement) {
  if (n_coarse < 1 || refinement < 1)
    throw std::invalid_argument("build_grid: sizes must be >= 1");
  Mesh mesh;
  mesh.n_coarse = n_coarse;
  mesh.refinement = refinement;
  const int np = mesh.nodes_per_side();
  mesh.interior_of_node.assign(static_cast<std::size_t>(np) * np, -1);
  for (int iy = 1; iy < np - 1; ++iy)
    for (int ix = 1; ix < np - 1; ++ix) {
      mesh.interior_of_node[mesh.node_id(ix, iy)] =
          static_cast<int>(mesh.node_of_interior.size());
      mesh.node_of_interior.push_back(mesh.node_id(ix, iy));
    }
  return mesh;
}

OversampleRegion oversample(const Mesh& mesh, int block, int layers) {
  if (block < 0 || block >= mesh.block_count())
    throw std::invalid_argument("oversample: invalid block index");
  if (layers < 0) throw std::invalid_argument("oversample: layers must be >= 0");
  OversampleRegion r;
  r.center_block = block;
  r.layers = layers;
  const int bx = block % mesh.n_coarse, by = block / mesh.n_coarse;
  r.bx0 = std::max(0, bx - layers);
  r.bx1 = std::min(mesh.n_coarse - 1, bx + layers);
  r.by0 = std::max(0, by - layers);
  r.by1 = std::min(mesh.n_coarse - 1, by + layers);
  for (int y = r.by0; y <= r.by1; ++y)
    for (int x = r.bx0; x <= r.bx1; ++x) r.blocks.push_back(mesh.block_id(x, y));

  const int ref = mesh.refinement;
  const int ix0 = r.bx0 * ref, ix1 = (r.bx1 + 1) * ref;  // node range of region
  const int iy0 = r.by0 * ref, iy1 = (r.by1 + 1) * ref;
  r.local_of_node.assign(mesh.node_count(), -1);
  for (int iy = iy0 + 1; iy < iy1; ++iy)
    for (int ix = ix0 + 1; ix < ix1; ++ix) {
      const int node = mesh.node_id(ix, iy);
      r.local_of_node[node] = static_cast<int>(r.interior_nodes.size());
      r.interior_nodes.push_back(node);
    }
  return r;
}

namespace {
double hat(double t) { return std::max(0.0, 1.0 - std::abs(t)); }
}  // namespace

std::vector<Eigen::VectorXd> partition_of_unity(const Mesh& mesh) {
  const int nv = mesh.n_coarse + 1;
  const double H = mesh.coarse_h();
  std::vector<Eigen::VectorXd> chi(static_cast<std::size_t>(nv) * nv);
  for (int vy = 0; vy < nv; ++vy)
    for (int vx = 0; vx < nv; ++vx) {
      Eigen::VectorXd values(mesh.node_count());
      for (int node = 0; node < mesh.node_count(); ++node)
        values[node] = hat(mesh.node_x(node) / H - vx) * hat(mesh.node_y(node) / H - vy);
      chi[static_cast<std::size_t>(vy) * nv + vx] = std::move(values);
    }
  return chi;
}

Eigen::VectorXd pou_gradient_sq_cells(const Mesh& mesh) {
  // Only the 4 hats of the enclosing block are nonzero at a cell center; with
  // local coordinates (xi, eta) in the block the sum is
  //   2((1-xi)^2 + xi^2 + (1-eta)^2 + eta^2) / H^2.
  const double H = mesh.coarse_h();
  const int n = mesh.cells_per_side();
  Eigen::VectorXd w(mesh.cell_count());
  for (int cell = 0; cell < mesh.cell_count(); ++cell) {
    const int cx = cell % n, cy = cell / n;
    const double xi = ((cx % mesh.refinement) + 0.5) / mesh.refinement;
    const double eta = ((cy % mesh.refinement) + 0.5) / mesh.refinement;
    w[cell] = 2.0 *
              ((1 - xi) * (1 - xi) + xi * xi + (1 - eta) * (1 - eta) + eta * eta) /
              (H * H);
  }
  return w;
}

}  // namespace fracstep
