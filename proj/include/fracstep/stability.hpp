#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "fracstep/femcore.hpp"
#include "fracstep/msbasis.hpp"

namespace fracstep {

/// Curvature bounds of the two nonlinearities over a sampled state range:
/// c_bar/C2_bar bound the diffusion second variation (exactly 1 for the
/// linear operator), B/b_lower bound the reaction curvature.
struct CurvatureEstimates {
  double c_bar = 1.0;
  double C2_bar = 1.0;
  double B = 0.0;
  double b_lower = 0.0;
};

struct StabilityReport {
  double alpha = 0.0;
  double dt = 0.0;
  double alpha0 = 0.0;
  double gamma = 0.0;
  double lambda2 = 0.0;
  CurvatureEstimates curvature;
  double safety = 1.0;          // multiplies C2_bar for estimated (nonlinear) bounds
  double condition_lhs = 0.0;   // safety * (C2_bar/c_bar) * lambda2
  double condition_rhs = 0.0;   // (1-gamma)/alpha0 - B(1+gamma)
  bool satisfied = false;
  bool safety_margin_consumed = false;  // passes raw, fails with safety factor
  double max_stable_dt = 0.0;           // +inf when the condition never binds

  std::string text() const;      // flat key=value block
  std::string csv_header() const;
  std::string csv_row() const;
};

/// Strengthened Cauchy-Schwarz constant between the two spaces in the L2
/// inner product: largest singular value of M11^{-1/2} M12 M22^{-1/2}.
double estimate_gamma(const Eigen::MatrixXd& M11, const Eigen::MatrixXd& M12,
                      const Eigen::MatrixXd& M22);

/// sup over the second space of |v|_V^2 / |v|^2: largest eigenvalue of
/// A22 x = lambda M22 x. Zero for an empty space.
double sup_ratio(const Eigen::MatrixXd& A22, const Eigen::MatrixXd& M22);

/// Reaction curvature bounds scanned over [u_lo, u_hi]; diffusion bounds from
/// Rayleigh quotients of the (symmetrized) second variation over the sample
/// states, with the mixed bound restricted to second-space directions. The
/// linear diffusion returns exactly (1, 1).
CurvatureEstimates estimate_curvatures(const Mesh& mesh, const Vec& kappa_cells,
                                       FKind f, GKind g,
                                       const std::vector<Vec>& sample_fields,
                                       double u_lo, double u_hi,
                                       const MultiscaleSpace* space);

struct ConditionInputs {
  double alpha = 0.8;
  double dt = 0.0;
  double gamma = 0.0;
  double lambda2 = 0.0;
  CurvatureEstimates curvature;
  double safety = 1.0;
};

StabilityReport check_condition(const ConditionInputs& in);

struct Lemma1Result {
  int trials = 0;
  int failures = 0;
  bool toeplitz_positive_definite = false;
  bool passed() const { return failures == 0 && toeplitz_positive_definite; }
};

/// Random-increment verification of the history quadratic-form lower bound
/// and Cholesky positivity of the b-Toeplitz matrix.
Lemma1Result lemma1_check(double alpha, int n_steps, int trials,
                          unsigned long long seed = 12345);

}  // namespace fracstep
