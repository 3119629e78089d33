#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace fracstep {

/// L1 discretization data for the Caputo derivative of order alpha in (0,1):
/// weights b_k = (k+1)^{1-alpha} - k^{1-alpha} and the scale
/// alpha0 = Gamma(2-alpha) dt^alpha. The derivative at t_{k+1} is
/// (1/alpha0) sum_{j<=k} b_{k-j} (u^{j+1}-u^j).
struct FractionalKernel {
  double alpha = 0.0;
  double dt = 0.0;
  double alpha0 = 0.0;
  int steps = 0;
  std::vector<double> b;  // b_0..b_{steps-1}

  static FractionalKernel make(double alpha, double dt, int steps);
};

/// Lagged part of the L1 sum: sum_{j=0}^{k-1} b_{k-j} (u^{j+1}-u^j).
/// increments[j] holds u^{j+1}-u^j. The j=k term belongs to the scheme since
/// u^{k+1} is the unknown there.
Eigen::VectorXd history_combination(const FractionalKernel& kernel,
                                    std::span<const Eigen::VectorXd> increments,
                                    int k);

/// Discrete Caputo derivative of a scalar sample sequence u(t_0..t_K);
/// returns values at t_1..t_K. Exact for affine-in-time samples.
std::vector<double> l1_derivative_scalar(std::span<const double> samples,
                                         const FractionalKernel& kernel);

}  // namespace fracstep
