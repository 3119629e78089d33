#include "fracstep/caputo.hpp"

#include <cmath>
#include <stdexcept>

#include "fracstep/kernels.hpp"

namespace fracstep {

FractionalKernel FractionalKernel::make(double alpha, double dt, int steps) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("fractional order must lie strictly in (0,1)");
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
  if (steps < 1) throw std::invalid_argument("need at least one step");
  FractionalKernel k;
  k.alpha = alpha;
  k.dt = dt;
  k.steps = steps;
  k.alpha0 = std::tgamma(2.0 - alpha) * std::pow(dt, alpha);
  k.b.resize(steps);
  const double e = 1.0 - alpha;
  for (int i = 0; i < steps; ++i)
    k.b[i] = std::pow(i + 1.0, e) - std::pow(static_cast<double>(i), e);
  return k;
}

Eigen::VectorXd history_combination(const FractionalKernel& kernel,
                                    std::span<const Eigen::VectorXd> increments,
                                    int k) {
  if (k < 0 || static_cast<std::size_t>(k) > increments.size())
    throw std::out_of_range("history_combination: k exceeds stored history");
  if (k >= kernel.steps)  // needs weights up to b_k
    throw std::out_of_range("history_combination: k exceeds kernel length");
  const Eigen::Index n = increments.empty() ? 0 : increments[0].size();
  if (k == 0) return Eigen::VectorXd::Zero(n);

  // weights b_{k-j} for j = 0..k-1, contiguous pointers for the kernel call
  std::vector<double> w(k);
  std::vector<const double*> ptrs(k);
  for (int j = 0; j < k; ++j) {
    w[j] = kernel.b[k - j];
    ptrs[j] = increments[j].data();
  }
  Eigen::VectorXd out(n);
  kernels::weighted_sum(w.data(), ptrs.data(), static_cast<std::size_t>(k),
                        out.data(), static_cast<std::size_t>(n));
  return out;
}

std::vector<double> l1_derivative_scalar(std::span<const double> samples,
                                         const FractionalKernel& kernel) {
  if (samples.size() < 2)
    throw std::invalid_argument("l1_derivative_scalar: need at least 2 samples");
  const int K = static_cast<int>(samples.size()) - 1;
  if (K > kernel.steps)
    throw std::invalid_argument("l1_derivative_scalar: kernel too short");
  std::vector<double> out(K);
  for (int k = 0; k < K; ++k) {
    double s = 0.0;
    for (int j = 0; j <= k; ++j) s += kernel.b[k - j] * (samples[j + 1] - samples[j]);
    out[k] = s / kernel.alpha0;
  }
  return out;
}

}  // namespace fracstep
