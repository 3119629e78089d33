#include "fracstep/schemes.hpp"

#include <Eigen/SparseLU>
#include <cstdio>

namespace fracstep {

std::pair<Vec, NonlinearRecord> iterate_to_tolerance(const ResidualFn& residual,
                                                     const SolverBuilder& builder,
                                                     Vec initial, double tol,
                                                     int max_iter) {
  Vec x = std::move(initial);
  NonlinearRecord rec;
  Vec r = residual(x);
  rec.residual_norm = r.norm();
  while (rec.residual_norm > tol) {
    if (rec.iterations >= max_iter) {
      char msg[128];
      std::snprintf(msg, sizeof msg,
                    "nonlinear solver did not converge: |r| = %.3e after %d "
                    "iterations",
                    rec.residual_norm, rec.iterations);
      throw NonlinearError(msg, rec);
    }
    const auto solve = builder(x);
    x -= solve(r);
    r = residual(x);
    ++rec.iterations;
    rec.residual_norm = r.norm();
  }
  rec.converged = true;
  return {std::move(x), rec};
}

std::pair<Vec, NonlinearRecord> picard_solve(const ResidualFn& residual,
                                             const SolverBuilder& lagged_operator,
                                             Vec initial, double tol, int max_iter) {
  return iterate_to_tolerance(residual, lagged_operator, std::move(initial), tol,
                              max_iter);
}

std::pair<Vec, NonlinearRecord> newton_solve(const ResidualFn& residual,
                                             const SolverBuilder& jacobian,
                                             Vec initial, double tol, int max_iter) {
  return iterate_to_tolerance(residual, jacobian, std::move(initial), tol, max_iter);
}

// ---------------------------------------------------------------- FineSystem

FineSystem::FineSystem(const Mesh& mesh, CoefficientField kappa, Vec g0_interior,
                       GKind g)
    : mesh_(mesh), kappa_(std::move(kappa)), g0_(std::move(g0_interior)), g_(g) {
  kappa_.validate(mesh_);
  const DofMap dofs = interior_dof_map(mesh_);
  mass_ = assemble_mass(mesh_, nullptr, dofs);
  stiff_linear_ = assemble_stiffness_linear(mesh_, kappa_.cell, dofs);
  mass_solver_ = std::make_shared<Eigen::SimplicialLDLT<SpMat>>(mass_);
  if (mass_solver_->info() != Eigen::Success)
    throw std::runtime_error("fine mass factorization failed");
}

Eigen::Index FineSystem::dim() const { return mass_.rows(); }
Vec FineSystem::mass_mul(const Vec& v) const { return mass_ * v; }
Vec FineSystem::mass_solve(const Vec& v) const { return mass_solver_->solve(v); }

Vec FineSystem::f_vec(const Vec& u) const {
  if (kappa_.kind == FKind::linear) return stiff_linear_ * u;
  return apply_f(mesh_, kappa_, u);
}

Vec FineSystem::g_vec(const Vec& u) const {
  if (g_ == GKind::none) return Vec::Zero(u.size());
  return apply_g(mesh_, u, g0_, g_);
}

std::function<Vec(const Vec&)> FineSystem::step_solver(const Vec& state,
                                                       double mass_coeff,
                                                       NonlinearMethod method,
                                                       bool g_implicit) const {
  const bool needs_g_jac =
      g_implicit && g_ != GKind::none && method == NonlinearMethod::newton;
  const bool state_free = kappa_.kind == FKind::linear && !needs_g_jac;
  if (state_free && cached_lu_ && cached_coeff_ == mass_coeff)
    return [lu = cached_lu_](const Vec& r) { return lu->solve(r); };

  SpMat K = mass_coeff * mass_;
  if (kappa_.kind == FKind::linear) {
    K += stiff_linear_;
  } else {
    const Vec full = to_full(mesh_, interior_dof_map(mesh_), state);
    if (method == NonlinearMethod::newton)
      K += assemble_f_jacobian(mesh_, kappa_.cell, full, interior_dof_map(mesh_));
    else
      K += assemble_stiffness_state(mesh_, kappa_.cell, full, interior_dof_map(mesh_));
  }
  if (needs_g_jac) {
    const Vec full = to_full(mesh_, interior_dof_map(mesh_), state);
    K += assemble_g_jacobian(mesh_, full, g_, interior_dof_map(mesh_));
  }
  auto lu = std::make_shared<Eigen::SparseLU<SpMat>>();
  K.makeCompressed();
  lu->compute(K);
  if (lu->info() != Eigen::Success)
    throw std::runtime_error("step operator factorization failed");
  if (state_free) {
    cached_lu_ = lu;
    cached_coeff_ = mass_coeff;
  }
  return [lu](const Vec& r) { return lu->solve(r); };
}

// ------------------------------------------------------------- ReducedSystem

ReducedSystem::ReducedSystem(const Mesh& mesh, CoefficientField kappa,
                             Vec g0_interior, GKind g, Eigen::MatrixXd basis)
    : mesh_(mesh),
      kappa_(std::move(kappa)),
      g0_(std::move(g0_interior)),
      g_(g),
      basis_(std::move(basis)) {
  kappa_.validate(mesh_);
  fine_mass_ = assemble_mass(mesh_, nullptr, interior_dof_map(mesh_));
  mass_red_ = basis_.transpose() * (fine_mass_ * basis_);
  mass_lu_.compute(mass_red_);
  if (kappa_.kind == FKind::linear) {
    const SpMat A =
        assemble_stiffness_linear(mesh_, kappa_.cell, interior_dof_map(mesh_));
    stiff_red_ = basis_.transpose() * (A * basis_);
  }
}

Eigen::Index ReducedSystem::dim() const { return basis_.cols(); }
Vec ReducedSystem::mass_mul(const Vec& v) const { return mass_red_ * v; }
Vec ReducedSystem::mass_solve(const Vec& v) const { return mass_lu_.solve(v); }

Vec ReducedSystem::f_vec(const Vec& u) const {
  if (kappa_.kind == FKind::linear) return stiff_red_ * u;
  return basis_.transpose() * apply_f(mesh_, kappa_, basis_ * u);
}

Vec ReducedSystem::g_vec(const Vec& u) const {
  if (g_ == GKind::none) return Vec::Zero(u.size());
  return basis_.transpose() * apply_g(mesh_, basis_ * u, g0_, g_);
}

Vec ReducedSystem::project(const Vec& fine) const {
  return mass_lu_.solve(basis_.transpose() * (fine_mass_ * fine));
}

std::function<Vec(const Vec&)> ReducedSystem::step_solver(const Vec& state,
                                                          double mass_coeff,
                                                          NonlinearMethod method,
                                                          bool g_implicit) const {
  const bool needs_g_jac =
      g_implicit && g_ != GKind::none && method == NonlinearMethod::newton;
  const bool state_free = kappa_.kind == FKind::linear && !needs_g_jac;
  if (state_free && cached_lu_ && cached_coeff_ == mass_coeff)
    return [lu = cached_lu_](const Vec& r) { return lu->solve(r); };

  const DofMap dofs = interior_dof_map(mesh_);
  Eigen::MatrixXd K = mass_coeff * mass_red_;
  if (kappa_.kind == FKind::linear) {
    K += stiff_red_;
  } else {
    const Vec full = to_full(mesh_, dofs, basis_ * state);
    const SpMat Af = method == NonlinearMethod::newton
                         ? assemble_f_jacobian(mesh_, kappa_.cell, full, dofs)
                         : assemble_stiffness_state(mesh_, kappa_.cell, full, dofs);
    K += basis_.transpose() * (Af * basis_);
  }
  if (needs_g_jac) {
    const Vec full = to_full(mesh_, dofs, basis_ * state);
    const SpMat Jg = assemble_g_jacobian(mesh_, full, g_, dofs);
    K += basis_.transpose() * (Jg * basis_);
  }
  auto lu = std::make_shared<Eigen::PartialPivLU<Eigen::MatrixXd>>(K);
  if (state_free) {
    cached_lu_ = lu;
    cached_coeff_ = mass_coeff;
  }
  return [lu](const Vec& r) { return lu->solve(r); };
}

// -------------------------------------------------------------- ScalarSystem

ScalarSystem::ScalarSystem(std::function<double(double)> f,
                           std::function<double(double)> fprime,
                           std::function<double(double)> g,
                           std::function<double(double)> gprime)
    : f_(std::move(f)), fp_(std::move(fprime)), g_(std::move(g)), gp_(std::move(gprime)) {}

Vec ScalarSystem::f_vec(const Vec& u) const {
  Vec out(1);
  out[0] = f_(u[0]);
  return out;
}

Vec ScalarSystem::g_vec(const Vec& u) const {
  Vec out(1);
  out[0] = g_(u[0]);
  return out;
}

std::function<Vec(const Vec&)> ScalarSystem::step_solver(const Vec& state,
                                                         double mass_coeff,
                                                         NonlinearMethod,
                                                         bool g_implicit) const {
  double slope = mass_coeff + fp_(state[0]);
  if (g_implicit) slope += gp_(state[0]);
  return [slope](const Vec& r) { return Vec(r / slope); };
}

// ----------------------------------------------------------- ImplicitStepper

ImplicitStepper::ImplicitStepper(const SchemeSystem& system, FractionalKernel kernel,
                                 SolverSettings settings, GTreatment g_treatment,
                                 Vec u0)
    : system_(system),
      kernel_(std::move(kernel)),
      settings_(settings),
      g_treatment_(g_treatment),
      u_(std::move(u0)) {}

void ImplicitStepper::step() {
  const double c = kernel_.b[0] / kernel_.alpha0;
  const Vec hist = k_ > 0 ? Vec(history_combination(kernel_, increments_, k_) /
                                kernel_.alpha0)
                          : Vec(Vec::Zero(u_.size()));
  const Vec hist_m = system_.mass_mul(hist);
  const Vec uk = u_;
  const bool g_impl = g_treatment_ == GTreatment::implicit_g;
  const Vec g_expl = g_impl ? Vec() : system_.g_vec(uk);

  ResidualFn residual = [&](const Vec& v) -> Vec {
    Vec r = c * system_.mass_mul(v - uk) + hist_m + system_.f_vec(v);
    r += g_impl ? system_.g_vec(v) : g_expl;
    return r;
  };
  SolverBuilder builder = [&](const Vec& v) {
    return system_.step_solver(v, c, settings_.method, g_impl);
  };
  auto [next, rec] = iterate_to_tolerance(residual, builder, uk,
                                          settings_.tolerance,
                                          settings_.max_iterations);
  records_.push_back(rec);
  increments_.push_back(next - uk);
  u_ = std::move(next);
  ++k_;
}

// ----------------------------------------------------------- ExplicitStepper

ExplicitStepper::ExplicitStepper(const SchemeSystem& system, FractionalKernel kernel,
                                 Vec u0)
    : system_(system), kernel_(std::move(kernel)), u_(std::move(u0)) {}

void ExplicitStepper::step() {
  // b0 (u^{k+1}-u^k) = -hist - alpha0 M^{-1}(F+G)(u^k), b0 = 1
  const Vec hist = k_ > 0 ? history_combination(kernel_, increments_, k_)
                          : Vec(Vec::Zero(u_.size()));
  const Vec fg = system_.f_vec(u_) + system_.g_vec(u_);
  const Vec next = u_ - hist - kernel_.alpha0 * system_.mass_solve(fg);
  increments_.push_back(next - u_);
  u_ = next;
  ++k_;
}

// -------------------------------------------------------------- SplitStepper

SplitStepper::FineOps SplitStepper::default_ops(const Mesh& mesh,
                                                CoefficientField kappa,
                                                Vec g0_interior, GKind g) {
  auto kap = std::make_shared<CoefficientField>(std::move(kappa));
  auto g0 = std::make_shared<Vec>(std::move(g0_interior));
  FineOps ops;
  ops.f_constant = kap->kind == FKind::linear;
  if (ops.f_constant) {
    auto stiff = std::make_shared<SpMat>(
        assemble_stiffness_linear(mesh, kap->cell, interior_dof_map(mesh)));
    ops.f = [stiff](const Vec& u) { return Vec(*stiff * u); };
  } else {
    ops.f = [&mesh, kap](const Vec& u) { return apply_f(mesh, *kap, u); };
  }
  ops.g = [&mesh, g0, g](const Vec& u) {
    if (g == GKind::none) return Vec(Vec::Zero(u.size()));
    return apply_g(mesh, u, *g0, g);
  };
  ops.f_linearized = [&mesh, kap](const Vec& u) {
    const DofMap dofs = interior_dof_map(mesh);
    if (kap->kind == FKind::linear)
      return assemble_stiffness_linear(mesh, kap->cell, dofs);
    return assemble_stiffness_state(mesh, kap->cell, to_full(mesh, dofs, u), dofs);
  };
  ops.f_jacobian = [&mesh, kap](const Vec& u) {
    const DofMap dofs = interior_dof_map(mesh);
    if (kap->kind == FKind::linear)
      return assemble_stiffness_linear(mesh, kap->cell, dofs);
    return assemble_f_jacobian(mesh, kap->cell, to_full(mesh, dofs, u), dofs);
  };
  return ops;
}

SplitStepper::SplitStepper(const MultiscaleSpace& space, FineOps ops,
                           FractionalKernel kernel, SolverSettings settings,
                           Vec u1_0, Vec u2_0)
    : space_(space),
      ops_(std::move(ops)),
      kernel_(std::move(kernel)),
      settings_(settings),
      u1_(std::move(u1_0)),
      u2_(std::move(u2_0)),
      m1_(space.R1.cols()),
      m2_(space.R2.cols()) {
  if (space_.M11.rows() != m1_ || space_.M22.rows() != m2_)
    throw std::invalid_argument("split stepper needs assembled reduced blocks");
}

Vec SplitStepper::reconstruct() const {
  Vec fine = space_.R1 * u1_;
  if (m2_ > 0) fine += space_.R2 * u2_;
  return fine;
}

void SplitStepper::step() {
  const double c = kernel_.b[0] / kernel_.alpha0;
  const Vec hist1 = k_ > 0 ? history_combination(kernel_, inc1_, k_)
                           : Vec(Vec::Zero(m1_));
  const Vec hist2 = (m2_ > 0 && k_ > 0) ? history_combination(kernel_, inc2_, k_)
                                        : Vec(Vec::Zero(m2_));
  // history tested against both components, scaled by 1/alpha0
  Vec hist_a1 = space_.M11 * hist1;
  Vec hist_a2 = space_.M12.transpose() * hist1;
  if (m2_ > 0) {
    hist_a1 += space_.M12 * hist2;
    hist_a2 += space_.M22 * hist2;
  }
  hist_a1 /= kernel_.alpha0;
  hist_a2 /= kernel_.alpha0;

  const Vec u1k = u1_, u2k = u2_;
  const Vec fine_k = reconstruct();
  const Vec g_fine = ops_.g(fine_k);
  const Vec g1 = space_.R1.transpose() * g_fine;
  const Vec g2 = space_.R2.transpose() * g_fine;
  const Vec r2u2k = m2_ > 0 ? Vec(space_.R2 * u2k) : Vec(Vec::Zero(space_.R1.rows()));

  // unknowns stacked z = (u1, u2)
  ResidualFn residual = [&](const Vec& z) -> Vec {
    const Vec v1 = z.head(m1_), v2 = z.tail(m2_);
    const Vec w = space_.R1 * v1 + r2u2k;  // f argument: u1 implicit, u2 lagged
    const Vec f_fine = ops_.f(w);
    Vec r(m1_ + m2_);
    r.head(m1_) = c * (space_.M11 * (v1 - u1k)) + hist_a1 +
                  space_.R1.transpose() * f_fine + g1;
    if (m2_ > 0) {
      r.head(m1_) += c * (space_.M12 * (v2 - u2k));
      r.tail(m2_) = c * (space_.M12.transpose() * (v1 - u1k)) +
                    c * (space_.M22 * (v2 - u2k)) + hist_a2 +
                    space_.R2.transpose() * f_fine + g2;
    }
    return r;
  };
  SolverBuilder builder = [&](const Vec& z) {
    if (ops_.f_constant && cached_lu_)
      return std::function<Vec(const Vec&)>(
          [lu = cached_lu_](const Vec& r) { return lu->solve(r); });
    const Vec v1 = z.head(m1_);
    const Vec w = space_.R1 * v1 + r2u2k;
    const SpMat Jf = settings_.method == NonlinearMethod::newton
                         ? ops_.f_jacobian(w)
                         : ops_.f_linearized(w);
    const Eigen::MatrixXd JfR1 = Jf * space_.R1;
    Eigen::MatrixXd K(m1_ + m2_, m1_ + m2_);
    K.topLeftCorner(m1_, m1_) = c * space_.M11 + space_.R1.transpose() * JfR1;
    if (m2_ > 0) {
      K.topRightCorner(m1_, m2_) = c * space_.M12;
      K.bottomLeftCorner(m2_, m1_) =
          c * space_.M12.transpose() + space_.R2.transpose() * JfR1;
      K.bottomRightCorner(m2_, m2_) = c * space_.M22;
    }
    auto lu = std::make_shared<Eigen::PartialPivLU<Eigen::MatrixXd>>(K);
    if (ops_.f_constant) cached_lu_ = lu;
    return std::function<Vec(const Vec&)>(
        [lu](const Vec& r) { return lu->solve(r); });
  };

  Vec z0(m1_ + m2_);
  z0.head(m1_) = u1k;
  z0.tail(m2_) = u2k;
  auto [z, rec] = iterate_to_tolerance(residual, builder, std::move(z0),
                                       settings_.tolerance, settings_.max_iterations);
  records_.push_back(rec);
  const Vec u1_next = z.head(m1_), u2_next = z.tail(m2_);
  inc1_.push_back(u1_next - u1k);
  if (m2_ > 0) inc2_.push_back(u2_next - u2k);
  u1_ = u1_next;
  u2_ = u2_next;
  ++k_;
}

std::pair<Vec, Vec> project_split(const MultiscaleSpace& space, const SpMat& mass,
                                  const Vec& fine) {
  const Eigen::Index m1 = space.R1.cols(), m2 = space.R2.cols();
  Eigen::MatrixXd M(m1 + m2, m1 + m2);
  Vec rhs(m1 + m2);
  M.topLeftCorner(m1, m1) = space.M11;
  rhs.head(m1) = space.R1.transpose() * (mass * fine);
  if (m2 > 0) {
    M.topRightCorner(m1, m2) = space.M12;
    M.bottomLeftCorner(m2, m1) = space.M12.transpose();
    M.bottomRightCorner(m2, m2) = space.M22;
    rhs.tail(m2) = space.R2.transpose() * (mass * fine);
  }
  const Vec c = Eigen::PartialPivLU<Eigen::MatrixXd>(M).solve(rhs);
  return {c.head(m1), c.tail(m2)};
}

}  // namespace fracstep
