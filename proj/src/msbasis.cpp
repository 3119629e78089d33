#include "fracstep/msbasis.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fracstep/threads.hpp"

namespace fracstep {

namespace {

// deterministic sign convention: largest-magnitude entry positive
void fix_signs(Eigen::MatrixXd& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    Eigen::Index imax = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
      const double a = std::abs(vectors(r, c));
      if (a > best) {
        best = a;
        imax = r;
      }
    }
    if (vectors(imax, c) < 0.0) vectors.col(c) = -vectors.col(c);
  }
}

Eigen::MatrixXd dense(const SpMat& m) { return Eigen::MatrixXd(m); }

}  // namespace

int AuxSpace::total_aux() const {
  int n = 0;
  for (const auto& b : blocks) n += static_cast<int>(b.values.size());
  return n;
}

Vec AuxSpace::aux_vector(const Mesh& mesh, int block, int j) const {
  const auto& dofs = block_dofs[block];
  Vec out = Vec::Zero(mesh.interior_count());
  for (int i = 0; i < dofs.size(); ++i)
    out[mesh.interior_of_node[dofs.nodes[i]]] = blocks[block].vectors(i, j);
  return out;
}

Vec make_kappa_tilde(const Mesh& mesh, const Vec& kappa_cells, AuxWeight weight) {
  if (weight == AuxWeight::h_scaled) {
    const double H = mesh.coarse_h();
    return kappa_cells / (H * H);
  }
  return kappa_cells.cwiseProduct(pou_gradient_sq_cells(mesh));
}

BlockEigs solve_aux_eigen(const Mesh& mesh, const Vec& kappa_cells,
                          const Vec& kappa_tilde_cells, int block, int count) {
  const DofMap dofs = block_dof_map(mesh, block);
  if (count > dofs.size())
    throw std::invalid_argument("solve_aux_eigen: count exceeds block dimension");
  const auto cells = mesh.block_cells(block);
  const Eigen::MatrixXd A = dense(assemble_stiffness_linear(mesh, kappa_cells, dofs, cells));
  const Eigen::MatrixXd S = dense(assemble_mass(mesh, &kappa_tilde_cells, dofs, cells));
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(A, S);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("solve_aux_eigen: eigensolver failed");
  BlockEigs out;
  out.values = solver.eigenvalues().head(count);
  out.vectors = solver.eigenvectors().leftCols(count);
  fix_signs(out.vectors);
  return out;
}

AuxSpace build_aux_space(const Mesh& mesh, const Vec& kappa_cells, int l_per_block,
                         AuxWeight weight) {
  AuxSpace aux;
  aux.l_per_block = l_per_block;
  aux.weight = weight;
  aux.kappa_tilde_cells = make_kappa_tilde(mesh, kappa_cells, weight);
  aux.block_dofs.resize(mesh.block_count());
  aux.blocks.resize(mesh.block_count());
  parallel_for(mesh.block_count(), [&](std::size_t b) {
    const int block = static_cast<int>(b);
    aux.block_dofs[b] = block_dof_map(mesh, block);
    aux.blocks[b] =
        solve_aux_eigen(mesh, kappa_cells, aux.kappa_tilde_cells, block, l_per_block);
  });
  aux.s_interior =
      assemble_mass(mesh, &aux.kappa_tilde_cells, interior_dof_map(mesh));
  return aux;
}

Projection::Projection(const Mesh& mesh, const AuxSpace& aux) {
  dim_ = mesh.interior_count();
  blocks_.resize(aux.blocks.size());
  for (std::size_t b = 0; b < aux.blocks.size(); ++b) {
    const DofMap& dofs = aux.block_dofs[b];
    BlockData data;
    data.psi_rows.resize(dofs.size());
    for (int i = 0; i < dofs.size(); ++i)
      data.psi_rows[i] = mesh.interior_of_node[dofs.nodes[i]];
    data.psi = aux.blocks[b].vectors;

    // s(u, psi_j) couples u values on the whole block closure; gather the
    // nonzero rows of S psi_j once
    const int count = static_cast<int>(aux.blocks[b].values.size());
    Eigen::MatrixXd smeared(dim_, count);
    for (int j = 0; j < count; ++j) {
      Vec glob = Vec::Zero(dim_);
      for (int i = 0; i < dofs.size(); ++i)
        glob[data.psi_rows[i]] = data.psi(i, j);
      smeared.col(j) = aux.s_interior * glob;
    }
    for (int r = 0; r < smeared.rows(); ++r)
      if (smeared.row(r).cwiseAbs().maxCoeff() != 0.0) data.sup_rows.push_back(r);
    data.weights.resize(data.sup_rows.size(), count);
    for (std::size_t r = 0; r < data.sup_rows.size(); ++r)
      data.weights.row(r) = smeared.row(data.sup_rows[r]);
    blocks_[b] = std::move(data);
  }
}

Vec Projection::apply(const Vec& interior) const {
  if (interior.size() != dim_)
    throw std::invalid_argument("projection: field size mismatch");
  Vec out = Vec::Zero(dim_);
  for (const auto& blk : blocks_) {
    Vec gathered(blk.sup_rows.size());
    for (std::size_t i = 0; i < blk.sup_rows.size(); ++i)
      gathered[i] = interior[blk.sup_rows[i]];
    const Vec coeff = blk.weights.transpose() * gathered;
    const Vec expanded = blk.psi * coeff;
    for (std::size_t i = 0; i < blk.psi_rows.size(); ++i)
      out[blk.psi_rows[i]] += expanded[i];
  }
  return out;
}

Projection build_projection(const Mesh& mesh, const AuxSpace& aux) {
  return Projection(mesh, aux);
}

namespace {

// Constraint rows for an energy-minimization solve on a region: one row per
// auxiliary function of every block inside the region, entries s(e_p, psi)
// over the region dofs.
struct ConstraintRows {
  std::vector<Eigen::Triplet<double>> triplets;  // (row, region col, value)
  std::vector<std::pair<int, int>> which;        // row -> (block, j)
  int count = 0;
};

ConstraintRows gather_constraints(const Mesh& mesh, const OversampleRegion& region,
                                  const SpMat& form, const AuxSpace& aux,
                                  const std::vector<BlockEigs>& family) {
  ConstraintRows rows;
  for (int block : region.blocks) {
    const auto& eigs = family[block];
    const DofMap& dofs = aux.block_dofs[block];
    for (int j = 0; j < eigs.values.size(); ++j) {
      Vec glob = Vec::Zero(form.rows());
      for (int i = 0; i < dofs.size(); ++i)
        glob[mesh.interior_of_node[dofs.nodes[i]]] = eigs.vectors(i, j);
      const Vec smeared = form * glob;
      for (std::size_t p = 0; p < region.interior_nodes.size(); ++p) {
        const double v = smeared[mesh.interior_of_node[region.interior_nodes[p]]];
        if (v != 0.0)
          rows.triplets.emplace_back(rows.count, static_cast<int>(p), v);
      }
      rows.which.emplace_back(block, j);
      ++rows.count;
    }
  }
  return rows;
}

Vec scatter_region(const Mesh& mesh, const OversampleRegion& region, const Vec& x) {
  Vec out = Vec::Zero(mesh.interior_count());
  for (std::size_t p = 0; p < region.interior_nodes.size(); ++p)
    out[mesh.interior_of_node[region.interior_nodes[p]]] = x[p];
  return out;
}

/// KKT solver for one region; reused across the right-hand sides of a block.
class SaddleSolver {
 public:
  SaddleSolver(const Mesh& mesh, const Vec& kappa_cells,
               const OversampleRegion& region,
               const std::vector<ConstraintRows*>& families)
      : region_(region) {
    const DofMap rdofs = region_dof_map(mesh, region);
    std::vector<int> cells;
    for (int block : region.blocks) {
      auto bc = mesh.block_cells(block);
      cells.insert(cells.end(), bc.begin(), bc.end());
    }
    const SpMat A = assemble_stiffness_linear(mesh, kappa_cells, rdofs, cells);
    nr_ = rdofs.size();
    nc_ = 0;
    for (const auto* f : families) nc_ += f->count;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(A.nonZeros() + 4 * families.size() * 64);
    for (int k = 0; k < A.outerSize(); ++k)
      for (SpMat::InnerIterator it(A, k); it; ++it)
        trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                          it.value());
    int row_base = nr_;
    for (const auto* f : families) {
      for (const auto& t : f->triplets) {
        trip.emplace_back(row_base + t.row(), t.col(), t.value());
        trip.emplace_back(t.col(), row_base + t.row(), t.value());
      }
      row_base += f->count;
    }
    SpMat kkt(nr_ + nc_, nr_ + nc_);
    kkt.setFromTriplets(trip.begin(), trip.end());
    kkt.makeCompressed();
    lu_.compute(kkt);
    if (lu_.info() != Eigen::Success)
      throw std::runtime_error("singular saddle-point system on block " +
                               std::to_string(region.center_block));
  }

  // rhs_constraints laid out per family, concatenated
  Vec solve(const Mesh& mesh, const Vec& rhs_constraints) const {
    Vec rhs = Vec::Zero(nr_ + nc_);
    rhs.tail(nc_) = rhs_constraints;
    const Vec x = lu_.solve(rhs);
    if (lu_.info() != Eigen::Success)
      throw std::runtime_error("saddle-point solve failed on block " +
                               std::to_string(region_.center_block));
    return scatter_region(mesh, region_, x.head(nr_));
  }

  int constraint_count() const { return nc_; }

 private:
  const OversampleRegion& region_;
  int nr_ = 0, nc_ = 0;
  Eigen::SparseLU<SpMat> lu_;
};

int constraint_position(const ConstraintRows& rows, int block, int j) {
  for (int r = 0; r < rows.count; ++r)
    if (rows.which[r] == std::make_pair(block, j)) return r;
  throw std::logic_error("constraint target not present in region");
}

}  // namespace

Vec solve_cem_basis(const Mesh& mesh, const Vec& kappa_cells, const AuxSpace& aux,
                    int block, int j, int layers) {
  const OversampleRegion region = oversample(mesh, block, layers);
  ConstraintRows rows = gather_constraints(mesh, region, aux.s_interior, aux, aux.blocks);
  SaddleSolver solver(mesh, kappa_cells, region, {&rows});
  Vec rhs = Vec::Zero(rows.count);
  rhs[constraint_position(rows, block, j)] = 1.0;  // s-orthonormal family
  return solver.solve(mesh, rhs);
}

Vec solve_cem_basis_rhs(const Mesh& mesh, const Vec& kappa_cells,
                        const AuxSpace& aux, int block, int layers,
                        const Vec& constraint_rhs) {
  const OversampleRegion region = oversample(mesh, block, layers);
  ConstraintRows rows = gather_constraints(mesh, region, aux.s_interior, aux, aux.blocks);
  if (constraint_rhs.size() != rows.count)
    throw std::invalid_argument("solve_cem_basis_rhs: rhs size mismatch");
  SaddleSolver solver(mesh, kappa_cells, region, {&rows});
  return solver.solve(mesh, constraint_rhs);
}

BlockEigs solve_vh2_eigen(const Mesh& mesh, const Vec& kappa_cells,
                          const AuxSpace& aux, int block, int count) {
  const DofMap& dofs = aux.block_dofs[block];
  const int nb = dofs.size();
  const int L = static_cast<int>(aux.blocks[block].values.size());
  if (count > nb - L)
    throw std::invalid_argument("solve_vh2_eigen: count exceeds constrained dimension");
  const auto cells = mesh.block_cells(block);
  const Eigen::MatrixXd A = dense(assemble_stiffness_linear(mesh, kappa_cells, dofs, cells));
  const Eigen::MatrixXd M = dense(assemble_mass(mesh, nullptr, dofs, cells));
  const Eigen::MatrixXd S = dense(assemble_mass(mesh, &aux.kappa_tilde_cells, dofs, cells));

  // orthonormal basis of the null space of the s-constraints
  const Eigen::MatrixXd C = aux.blocks[block].vectors.transpose() * S;  // L x nb
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(C.transpose());
  const Eigen::MatrixXd Q = qr.householderQ();
  const Eigen::MatrixXd Z = Q.rightCols(nb - L);

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      Z.transpose() * A * Z, Z.transpose() * M * Z);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("solve_vh2_eigen: eigensolver failed");
  BlockEigs out;
  out.values = solver.eigenvalues().head(count);
  out.vectors = Z * solver.eigenvectors().leftCols(count);
  fix_signs(out.vectors);
  return out;
}

Vec solve_vh2_basis(const Mesh& mesh, const Vec& kappa_cells, const AuxSpace& aux,
                    const std::vector<BlockEigs>& aux2, int block, int j, int layers) {
  const OversampleRegion region = oversample(mesh, block, layers);
  const SpMat mass = assemble_mass(mesh, nullptr, interior_dof_map(mesh));
  ConstraintRows s_rows = gather_constraints(mesh, region, aux.s_interior, aux, aux.blocks);
  ConstraintRows m_rows = gather_constraints(mesh, region, mass, aux, aux2);
  SaddleSolver solver(mesh, kappa_cells, region, {&s_rows, &m_rows});
  Vec rhs = Vec::Zero(s_rows.count + m_rows.count);
  rhs[s_rows.count + constraint_position(m_rows, block, j)] = 1.0;  // L2-orthonormal
  return solver.solve(mesh, rhs);
}

MultiscaleSpace build_multiscale_space(const Mesh& mesh, const Vec& kappa_cells,
                                       const SpaceConfig& cfg) {
  MultiscaleSpace space;
  space.cfg = cfg;
  const AuxSpace aux = build_aux_space(mesh, kappa_cells, cfg.l_per_block, cfg.weight);
  const SpMat mass = assemble_mass(mesh, nullptr, interior_dof_map(mesh));

  const int nblocks = mesh.block_count();
  std::vector<BlockEigs> aux2(nblocks);
  if (cfg.j_per_block > 0)
    parallel_for(nblocks, [&](std::size_t b) {
      aux2[b] = solve_vh2_eigen(mesh, kappa_cells, aux, static_cast<int>(b),
                                cfg.j_per_block);
    });

  std::vector<Eigen::MatrixXd> cem_cols(nblocks), vh2_cols(nblocks);
  parallel_for(nblocks, [&](std::size_t b) {
    const int block = static_cast<int>(b);
    const OversampleRegion region = oversample(mesh, block, cfg.layers);
    ConstraintRows s_rows =
        gather_constraints(mesh, region, aux.s_interior, aux, aux.blocks);

    {
      SaddleSolver solver(mesh, kappa_cells, region, {&s_rows});
      Eigen::MatrixXd cols(mesh.interior_count(), cfg.l_per_block);
      for (int j = 0; j < cfg.l_per_block; ++j) {
        Vec rhs = Vec::Zero(s_rows.count);
        rhs[constraint_position(s_rows, block, j)] = 1.0;
        cols.col(j) = solver.solve(mesh, rhs);
      }
      cem_cols[b] = std::move(cols);
    }

    if (cfg.j_per_block > 0) {
      ConstraintRows m_rows = gather_constraints(mesh, region, mass, aux, aux2);
      SaddleSolver solver(mesh, kappa_cells, region, {&s_rows, &m_rows});
      Eigen::MatrixXd cols(mesh.interior_count(), cfg.j_per_block);
      for (int j = 0; j < cfg.j_per_block; ++j) {
        Vec rhs = Vec::Zero(s_rows.count + m_rows.count);
        rhs[s_rows.count + constraint_position(m_rows, block, j)] = 1.0;
        cols.col(j) = solver.solve(mesh, rhs);
      }
      vh2_cols[b] = std::move(cols);
    }
  });

  space.R1.resize(mesh.interior_count(), nblocks * cfg.l_per_block);
  space.R2.resize(mesh.interior_count(), nblocks * cfg.j_per_block);
  for (int b = 0; b < nblocks; ++b) {
    for (int j = 0; j < cfg.l_per_block; ++j) {
      space.R1.col(b * cfg.l_per_block + j) = cem_cols[b].col(j);
      space.info.push_back({b, j, BasisInfo::Type::cem});
    }
  }
  for (int b = 0; b < nblocks; ++b)
    for (int j = 0; j < cfg.j_per_block; ++j) {
      space.R2.col(b * cfg.j_per_block + j) = vh2_cols[b].col(j);
      space.info.push_back({b, j, BasisInfo::Type::aux2});
    }
  return space;
}

void assemble_reduced(MultiscaleSpace& space, const SpMat& mass,
                      const SpMat& stiffness) {
  if (space.R1.rows() != mass.rows() || space.R1.rows() != stiffness.rows())
    throw std::invalid_argument("assemble_reduced: dimension mismatch");
  const Eigen::MatrixXd MR1 = mass * space.R1;
  const Eigen::MatrixXd AR1 = stiffness * space.R1;
  space.M11 = space.R1.transpose() * MR1;
  space.A11 = space.R1.transpose() * AR1;
  if (space.R2.cols() > 0) {
    const Eigen::MatrixXd MR2 = mass * space.R2;
    const Eigen::MatrixXd AR2 = stiffness * space.R2;
    space.M12 = space.R1.transpose() * MR2;
    space.M22 = space.R2.transpose() * MR2;
    space.A12 = space.R1.transpose() * AR2;
    space.A22 = space.R2.transpose() * AR2;
  } else {
    space.M12.resize(space.R1.cols(), 0);
    space.M22.resize(0, 0);
    space.A12.resize(space.R1.cols(), 0);
    space.A22.resize(0, 0);
  }
}

void save_basis(const std::string& path_prefix, const MultiscaleSpace& space) {
  std::ofstream mat(path_prefix + "_basis.txt");
  if (!mat) throw std::runtime_error("cannot write basis file");
  char buf[32];
  mat << space.R1.rows() << " " << space.R1.cols() << " " << space.R2.cols() << "\n";
  auto write_cols = [&](const Eigen::MatrixXd& R) {
    for (Eigen::Index c = 0; c < R.cols(); ++c) {
      for (Eigen::Index r = 0; r < R.rows(); ++r) {
        std::snprintf(buf, sizeof buf, "%.17g", R(r, c));
        mat << buf << (r + 1 < R.rows() ? " " : "");
      }
      mat << "\n";
    }
  };
  write_cols(space.R1);
  write_cols(space.R2);

  std::ofstream man(path_prefix + "_manifest.txt");
  man << "# l=" << space.cfg.l_per_block << " j=" << space.cfg.j_per_block
      << " layers=" << space.cfg.layers << " weight="
      << (space.cfg.weight == AuxWeight::pou_gradient ? "pou_gradient" : "h_scaled")
      << "\n";
  for (std::size_t c = 0; c < space.info.size(); ++c)
    man << c << " " << space.info[c].block << " " << space.info[c].index << " "
        << (space.info[c].type == BasisInfo::Type::cem ? "cem" : "aux2") << "\n";
}

MultiscaleSpace load_basis(const std::string& path_prefix) {
  std::ifstream mat(path_prefix + "_basis.txt");
  if (!mat) throw std::runtime_error("cannot read basis file");
  Eigen::Index rows, c1, c2;
  mat >> rows >> c1 >> c2;
  MultiscaleSpace space;
  space.R1.resize(rows, c1);
  space.R2.resize(rows, c2);
  for (Eigen::Index c = 0; c < c1; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) mat >> space.R1(r, c);
  for (Eigen::Index c = 0; c < c2; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) mat >> space.R2(r, c);
  if (!mat) throw std::runtime_error("basis file truncated");

  std::ifstream man(path_prefix + "_manifest.txt");
  if (man) {
    std::string line;
    if (std::getline(man, line) && line.rfind("# ", 0) == 0) {
      std::istringstream hdr(line.substr(2));
      std::string tok;
      while (hdr >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "l") space.cfg.l_per_block = std::stoi(val);
        else if (key == "j") space.cfg.j_per_block = std::stoi(val);
        else if (key == "layers") space.cfg.layers = std::stoi(val);
        else if (key == "weight")
          space.cfg.weight =
              val == "h_scaled" ? AuxWeight::h_scaled : AuxWeight::pou_gradient;
      }
    }
    std::size_t col;
    BasisInfo info;
    std::string type;
    while (man >> col >> info.block >> info.index >> type) {
      info.type = type == "cem" ? BasisInfo::Type::cem : BasisInfo::Type::aux2;
      space.info.push_back(info);
    }
  }
  return space;
}

}  // namespace fracstep
