#include "fracstep/stability.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include "fracstep/caputo.hpp"

namespace fracstep {

double estimate_gamma(const Eigen::MatrixXd& M11, const Eigen::MatrixXd& M12,
                      const Eigen::MatrixXd& M22) {
  if (M12.rows() == 0 || M12.cols() == 0) return 0.0;
  Eigen::LLT<Eigen::MatrixXd> l1(M11), l2(M22);
  if (l1.info() != Eigen::Success || l2.info() != Eigen::Success)
    throw std::runtime_error("estimate_gamma: indefinite diagonal block");
  // L1^{-1} M12 L2^{-T}
  Eigen::MatrixXd B = l1.matrixL().solve(M12);
  B = l2.matrixL().solve(B.transpose()).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(B);
  return svd.singularValues()[0];
}

double sup_ratio(const Eigen::MatrixXd& A22, const Eigen::MatrixXd& M22) {
  if (A22.rows() == 0) return 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt(M22);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("sup_ratio: mass block not positive definite");
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(A22, M22);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("sup_ratio: eigensolver failed");
  return solver.eigenvalues().maxCoeff();
}

CurvatureEstimates estimate_curvatures(const Mesh& mesh, const Vec& kappa_cells,
                                       FKind f, GKind g,
                                       const std::vector<Vec>& sample_fields,
                                       double u_lo, double u_hi,
                                       const MultiscaleSpace* space) {
  CurvatureEstimates est;

  if (f == FKind::linear) {
    est.c_bar = 1.0;  // the V-norm is the diffusion form itself
    est.C2_bar = 1.0;
  } else {
    if (sample_fields.empty())
      throw std::invalid_argument("estimate_curvatures: empty sample set");
    if (!space)
      throw std::invalid_argument(
          "estimate_curvatures: nonlinear diffusion needs the reduced space");
    const DofMap dofs = interior_dof_map(mesh);
    const Eigen::Index m1 = space->R1.cols(), m2 = space->R2.cols();
    Eigen::MatrixXd A_gram(m1 + m2, m1 + m2);  // V-norm Gram over V_H
    A_gram.topLeftCorner(m1, m1) = space->A11;
    A_gram.topRightCorner(m1, m2) = space->A12;
    A_gram.bottomLeftCorner(m2, m1) = space->A12.transpose();
    A_gram.bottomRightCorner(m2, m2) = space->A22;
    Eigen::LLT<Eigen::MatrixXd> l_full(A_gram), l_22(space->A22);
    if (l_full.info() != Eigen::Success || l_22.info() != Eigen::Success)
      throw std::runtime_error("estimate_curvatures: stiffness Gram not SPD");

    double c_min = std::numeric_limits<double>::infinity();
    double c2_max = 0.0;
    Eigen::MatrixXd R(space->R1.rows(), m1 + m2);
    R << space->R1, space->R2;
    for (const Vec& state : sample_fields) {
      const Vec full = to_full(mesh, dofs, state);
      const SpMat J = assemble_f_jacobian(mesh, kappa_cells, full, dofs);
      const Eigen::MatrixXd JR = J * R;
      Eigen::MatrixXd J_red = R.transpose() * JR;
      J_red = 0.5 * (J_red + J_red.transpose());  // symmetrized second variation
      Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(J_red, A_gram);
      c_min = std::min(c_min, eig.eigenvalues().minCoeff());
      if (m2 > 0) {
        // sup_{v in V_H, w in V_{H,2}} d2F(v,w)/(|v|_V |w|_V)
        Eigen::MatrixXd mixed = J_red.rightCols(m2);
        Eigen::MatrixXd scaled = l_full.matrixL().solve(mixed);
        scaled = l_22.matrixL().solve(scaled.transpose()).transpose();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled);
        c2_max = std::max(c2_max, svd.singularValues()[0]);
      }
    }
    est.c_bar = c_min;
    est.C2_bar = c2_max;
  }

  if (g != GKind::none) {
    // scan the curvature of the reaction density over the expected range
    const int samples = 10001;
    double gp_min = std::numeric_limits<double>::infinity();
    double gp_absmax = 0.0;
    for (int i = 0; i < samples; ++i) {
      const double u = u_lo + (u_hi - u_lo) * i / (samples - 1);
      const double gp = g_prime_pointwise(u, g);
      gp_min = std::min(gp_min, gp);
      gp_absmax = std::max(gp_absmax, std::abs(gp));
    }
    est.B = gp_absmax;
    est.b_lower = std::max(0.0, -gp_min);
  }
  return est;
}

StabilityReport check_condition(const ConditionInputs& in) {
  StabilityReport rep;
  rep.alpha = in.alpha;
  rep.dt = in.dt;
  rep.gamma = in.gamma;
  rep.lambda2 = in.lambda2;
  rep.curvature = in.curvature;
  rep.safety = in.safety;
  rep.alpha0 = std::tgamma(2.0 - in.alpha) * std::pow(in.dt, in.alpha);

  if (in.curvature.c_bar <= 0.0) {
    // coercivity lost over the sampled range: no step is certifiable
    rep.condition_lhs = std::numeric_limits<double>::infinity();
    rep.condition_rhs =
        (1.0 - in.gamma) / rep.alpha0 - in.curvature.B * (1.0 + in.gamma);
    rep.satisfied = false;
    rep.max_stable_dt = 0.0;
    return rep;
  }
  const double ratio = in.curvature.C2_bar / in.curvature.c_bar;
  const double lhs_raw = ratio * in.lambda2;
  rep.condition_lhs = in.safety * lhs_raw;
  rep.condition_rhs =
      (1.0 - in.gamma) / rep.alpha0 - in.curvature.B * (1.0 + in.gamma);
  rep.satisfied = rep.condition_lhs <= rep.condition_rhs;
  rep.safety_margin_consumed =
      !rep.satisfied && lhs_raw <= rep.condition_rhs;

  // equality case inverted through alpha0 = Gamma(2-alpha) dt^alpha
  const double denom =
      rep.condition_lhs + in.curvature.B * (1.0 + in.gamma);
  if (denom <= 0.0) {
    rep.max_stable_dt = std::numeric_limits<double>::infinity();
  } else {
    const double alpha0_max = (1.0 - in.gamma) / denom;
    rep.max_stable_dt =
        std::pow(alpha0_max / std::tgamma(2.0 - in.alpha), 1.0 / in.alpha);
    // at the returned step the right side equals the (nonnegative) left side
    const double a0 = std::tgamma(2.0 - in.alpha) *
                      std::pow(rep.max_stable_dt, in.alpha);
    const double rhs_at_max =
        (1.0 - in.gamma) / a0 - in.curvature.B * (1.0 + in.gamma);
    if (rhs_at_max < -1e-9)
      throw std::logic_error("no stable step: right side negative at computed dt");
  }
  return rep;
}

namespace {
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

std::string StabilityReport::text() const {
  std::ostringstream os;
  os << "alpha=" << fmt(alpha) << "\n"
     << "dt=" << fmt(dt) << "\n"
     << "alpha0=" << fmt(alpha0) << "\n"
     << "gamma=" << fmt(gamma) << "\n"
     << "lambda2=" << fmt(lambda2) << "\n"
     << "c_bar=" << fmt(curvature.c_bar) << "\n"
     << "C2_bar=" << fmt(curvature.C2_bar) << "\n"
     << "B=" << fmt(curvature.B) << "\n"
     << "b_lower=" << fmt(curvature.b_lower) << "\n"
     << "safety=" << fmt(safety) << "\n"
     << "condition_lhs=" << fmt(condition_lhs) << "\n"
     << "condition_rhs=" << fmt(condition_rhs) << "\n"
     << "satisfied=" << (satisfied ? 1 : 0) << "\n"
     << "safety_margin_consumed=" << (safety_margin_consumed ? 1 : 0) << "\n"
     << "max_stable_dt=" << fmt(max_stable_dt) << "\n";
  return os.str();
}

std::string StabilityReport::csv_header() const {
  return "alpha,dt,alpha0,gamma,lambda2,c_bar,C2_bar,B,b_lower,safety,"
         "condition_lhs,condition_rhs,satisfied,safety_margin_consumed,"
         "max_stable_dt";
}

std::string StabilityReport::csv_row() const {
  std::ostringstream os;
  os << fmt(alpha) << ',' << fmt(dt) << ',' << fmt(alpha0) << ',' << fmt(gamma)
     << ',' << fmt(lambda2) << ',' << fmt(curvature.c_bar) << ','
     << fmt(curvature.C2_bar) << ',' << fmt(curvature.B) << ','
     << fmt(curvature.b_lower) << ',' << fmt(safety) << ',' << fmt(condition_lhs)
     << ',' << fmt(condition_rhs) << ',' << (satisfied ? 1 : 0) << ','
     << (safety_margin_consumed ? 1 : 0) << ',' << fmt(max_stable_dt);
  return os.str();
}

Lemma1Result lemma1_check(double alpha, int n_steps, int trials,
                          unsigned long long seed) {
  if (n_steps > 200) throw std::invalid_argument("lemma1_check: n_steps > 200");
  const FractionalKernel kernel = FractionalKernel::make(alpha, 1.0, n_steps + 1);
  Lemma1Result result;
  result.trials = trials;

  // Toeplitz T_{kj} = b_{|k-j|} positive definite (Cholesky succeeds)
  const int n = n_steps + 1;
  Eigen::MatrixXd T(n, n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j) T(k, j) = kernel.b[std::abs(k - j)];
  Eigen::LLT<Eigen::MatrixXd> llt(T);
  result.toeplitz_positive_definite = llt.info() == Eigen::Success;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int dim = 8;  // vector increments under the Euclidean inner product
  for (int t = 0; t < trials; ++t) {
    std::vector<Vec> d(n);
    for (auto& v : d) {
      v.resize(dim);
      for (int i = 0; i < dim; ++i) v[i] = normal(rng);
    }
    double lhs = 0.0, rhs = 0.0;
    for (int k = 0; k < n; ++k) {
      for (int j = 0; j <= k; ++j) lhs += kernel.b[k - j] * d[j].dot(d[k]);
      rhs += 0.5 * d[k].squaredNorm();
    }
    if (lhs < rhs - 1e-12 * std::max(1.0, rhs)) ++result.failures;
  }
  return result;
}

}  // namespace fracstep
