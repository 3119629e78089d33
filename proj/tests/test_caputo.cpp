#include <doctest.h>

#include <cmath>
#include <random>

#include "fracstep/caputo.hpp"

using namespace fracstep;

TEST_CASE("kernel coefficients") {
  const FractionalKernel k = FractionalKernel::make(0.8, 0.01, 100);
  CHECK(k.b[0] == 1.0);
  CHECK(k.b[1] == doctest::Approx(std::pow(2.0, 0.2) - 1.0).epsilon(1e-14));

  SUBCASE("positivity and strict decrease") {
    for (int i = 0; i < 100; ++i) CHECK(k.b[i] > 0.0);
    for (int i = 1; i < 100; ++i) CHECK(k.b[i] < k.b[i - 1]);
  }
  SUBCASE("positivity, monotonicity, telescoping partial sums") {
    for (double alpha : {0.2, 0.5, 0.8}) {
      const int K = 10000;
      const FractionalKernel kern = FractionalKernel::make(alpha, 1.0, K);
      double sum = 0.0;
      bool positive = true, decreasing = true;
      for (int m = 1; m <= K; ++m) {
        sum += kern.b[m - 1];
        positive = positive && kern.b[m - 1] > 0.0;
        if (m > 1) decreasing = decreasing && kern.b[m - 1] < kern.b[m - 2];
        const double expect = std::pow(static_cast<double>(m), 1.0 - alpha);
        if (m <= 100 || m % 997 == 0)
          CHECK(std::abs(sum - expect) / expect <= 1e-12);
      }
      CHECK(positive);
      CHECK(decreasing);
    }
  }
  SUBCASE("paper-scale alpha0") {
    const double dt = 0.05 / 4000.0;
    const FractionalKernel kern = FractionalKernel::make(0.8, dt, 10);
    CHECK(kern.alpha0 ==
          doctest::Approx(std::tgamma(1.2) * std::pow(dt, 0.8)).epsilon(1e-15));
  }
}

TEST_CASE("kernel construction guards") {
  CHECK_THROWS_AS(FractionalKernel::make(0.0, 0.1, 10), std::invalid_argument);
  CHECK_THROWS_AS(FractionalKernel::make(1.0, 0.1, 10), std::invalid_argument);
  CHECK_THROWS_AS(FractionalKernel::make(1.3, 0.1, 10), std::invalid_argument);
  CHECK_THROWS_AS(FractionalKernel::make(0.5, 0.0, 10), std::invalid_argument);
  CHECK_THROWS_AS(FractionalKernel::make(0.5, 0.1, 0), std::invalid_argument);
}

TEST_CASE("history combination") {
  const FractionalKernel k = FractionalKernel::make(0.7, 0.1, 20);
  SUBCASE("empty history yields zero") {
    const Eigen::VectorXd out = history_combination(k, {}, 0);
    CHECK(out.size() == 0);
  }
  SUBCASE("k=0 with stored increments yields a zero field of matching size") {
    std::vector<Eigen::VectorXd> inc(5, Eigen::VectorXd::Ones(7));
    const Eigen::VectorXd out = history_combination(k, inc, 0);
    CHECK(out.size() == 7);
    CHECK(out.norm() == 0.0);
  }
  SUBCASE("zero increments yield zero") {
    std::vector<Eigen::VectorXd> inc(5, Eigen::VectorXd::Zero(7));
    CHECK(history_combination(k, inc, 5).norm() == 0.0);
  }
  SUBCASE("affine trajectory reproduces the telescoped sum") {
    // u^j = j dt: full L1 sum / alpha0 must equal t_{k+1}^{1-alpha}/Gamma(2-a)
    const double dt = k.dt;
    std::vector<Eigen::VectorXd> inc(19, Eigen::VectorXd::Constant(1, dt));
    for (int step = 0; step < 19; ++step) {
      const Eigen::VectorXd lagged = history_combination(k, inc, step);
      const double full = (lagged[0] + k.b[0] * dt) / k.alpha0;
      const double t = (step + 1) * dt;
      const double exact = std::pow(t, 1.0 - k.alpha) / std::tgamma(2.0 - k.alpha);
      CHECK(std::abs(full - exact) / exact <= 1e-12);
    }
  }
  SUBCASE("rejects requests beyond the stored history") {
    std::vector<Eigen::VectorXd> inc(3, Eigen::VectorXd::Zero(2));
    CHECK_THROWS_AS(history_combination(k, inc, 4), std::out_of_range);
  }
}

TEST_CASE("scalar L1 derivative") {
  SUBCASE("constant samples differentiate to zero") {
    const FractionalKernel k = FractionalKernel::make(0.5, 0.1, 10);
    std::vector<double> samples(11, 3.14);
    for (double v : l1_derivative_scalar(samples, k)) CHECK(v == 0.0);
  }
  SUBCASE("affine samples are exact") {
    const FractionalKernel k = FractionalKernel::make(0.8, 0.05, 20);
    std::vector<double> samples(21);
    for (int i = 0; i <= 20; ++i) samples[i] = 2.0 + 0.7 * (i * k.dt);
    const auto deriv = l1_derivative_scalar(samples, k);
    for (int i = 0; i < 20; ++i) {
      const double t = (i + 1) * k.dt;
      const double exact =
          0.7 * std::pow(t, 1.0 - k.alpha) / std::tgamma(2.0 - k.alpha);
      CHECK(deriv[i] == doctest::Approx(exact).epsilon(1e-12));
    }
  }
  SUBCASE("quadratic samples converge at order 2 - alpha") {
    const double alpha = 0.8;
    std::vector<double> errors;
    for (int K : {40, 80, 160, 320}) {
      const double dt = 1.0 / K;
      const FractionalKernel k = FractionalKernel::make(alpha, dt, K);
      std::vector<double> samples(K + 1);
      for (int i = 0; i <= K; ++i) samples[i] = (i * dt) * (i * dt);
      const auto deriv = l1_derivative_scalar(samples, k);
      double err = 0.0;
      for (int i = 0; i < K; ++i) {
        const double t = (i + 1) * dt;
        err = std::max(err, std::abs(deriv[i] - 2.0 * std::pow(t, 2.0 - alpha) /
                                                    std::tgamma(3.0 - alpha)));
      }
      errors.push_back(err);
    }
    for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
      const double order = std::log2(errors[i] / errors[i + 1]);
      CHECK(order == doctest::Approx(2.0 - alpha).epsilon(0.1));
    }
  }
  SUBCASE("too few samples rejected") {
    const FractionalKernel k = FractionalKernel::make(0.5, 0.1, 10);
    std::vector<double> one{1.0};
    CHECK_THROWS_AS(l1_derivative_scalar(one, k), std::invalid_argument);
  }
}
