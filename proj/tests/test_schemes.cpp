#include <doctest.h>

#include <cmath>

#include "fracstep/harness.hpp"
#include "fracstep/schemes.hpp"

using namespace fracstep;

namespace {

ScalarSystem linear_scalar(double lambda) {
  return ScalarSystem([lambda](double u) { return lambda * u; },
                      [lambda](double) { return lambda; },
                      [](double) { return 0.0; }, [](double) { return 0.0; });
}

// independently coded scalar L1 recurrence for the implicit linear problem
std::vector<double> scalar_implicit_oracle(double alpha, double dt, int K,
                                           double lambda, double u0) {
  const double a0 = std::tgamma(2.0 - alpha) * std::pow(dt, alpha);
  std::vector<double> b(K + 1);
  for (int i = 0; i <= K; ++i)
    b[i] = std::pow(i + 1.0, 1.0 - alpha) - std::pow(static_cast<double>(i), 1.0 - alpha);
  std::vector<double> u{u0}, du;
  for (int k = 0; k < K; ++k) {
    double hist = 0.0;
    for (int j = 0; j < k; ++j) hist += b[k - j] * du[j];
    const double next = (b[0] * u.back() - hist) / (b[0] + a0 * lambda);
    du.push_back(next - u.back());
    u.push_back(next);
  }
  return u;
}

Vec one(double v) { return Vec::Constant(1, v); }

}  // namespace

TEST_CASE("nonlinear solver drivers") {
  SUBCASE("linear residual converges in one iteration") {
    Eigen::MatrixXd A(2, 2);
    A << 4, 1, 1, 3;
    const Vec b = one(1.0).replicate(2, 1);
    ResidualFn residual = [&](const Vec& x) { return Vec(A * x - b); };
    SolverBuilder builder = [&](const Vec&) {
      return [&](const Vec& r) { return Vec(A.lu().solve(r)); };
    };
    auto [x, rec] = newton_solve(residual, builder, Vec::Zero(2), 1e-12, 50);
    CHECK(rec.iterations == 1);
    CHECK(rec.converged);
    CHECK((A * x - b).norm() <= 1e-12);
  }
  SUBCASE("already-converged guess returns zero iterations") {
    ResidualFn residual = [](const Vec& x) { return Vec(x - x); };
    SolverBuilder builder = [](const Vec&) {
      return [](const Vec& r) { return r; };
    };
    auto [x, rec] = picard_solve(residual, builder, one(2.0), 1e-10, 5);
    CHECK(rec.iterations == 0);
    CHECK(x[0] == 2.0);
  }
  SUBCASE("scalar cubic root matches a bisection oracle") {
    const double c = 0.5;
    auto f = [&](double u) { return 10.0 * u * (u * u - 1.0) + u - c; };
    double lo = -0.5, hi = 0.5;  // brackets the root in Newton's basin
    REQUIRE(f(lo) * f(hi) < 0);
    while (hi - lo > 1e-15) {
      const double mid = 0.5 * (lo + hi);
      (f(lo) * f(mid) <= 0 ? hi : lo) = mid;
    }
    const double root = 0.5 * (lo + hi);

    ResidualFn residual = [&](const Vec& x) { return one(f(x[0])); };
    SolverBuilder jacobian = [&](const Vec& x) {
      const double slope = 30.0 * x[0] * x[0] - 10.0 + 1.0;
      return [slope](const Vec& r) { return Vec(r / slope); };
    };
    auto [x, rec] = newton_solve(residual, jacobian, one(0.1), 1e-12, 50);
    CHECK(rec.converged);
    CHECK(x[0] == doctest::Approx(root).epsilon(1e-10));
  }
  SUBCASE("non-convergence carries the last residual") {
    ResidualFn residual = [](const Vec& x) { return one(x[0] * 0.0 + 1.0); };
    SolverBuilder builder = [](const Vec&) {
      return [](const Vec&) { return one(0.0); };  // never makes progress
    };
    CHECK_THROWS_AS((void)newton_solve(residual, builder, one(0.0), 1e-10, 3),
                    NonlinearError);
    try {
      (void)newton_solve(residual, builder, one(0.0), 1e-10, 3);
    } catch (const NonlinearError& e) {
      CHECK(e.record.iterations == 3);
      CHECK(e.record.residual_norm == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("implicit stepper against the scalar recurrence oracle") {
  const double alpha = 0.8, dt = 0.01, lambda = 5.0;
  const int K = 30;
  const auto oracle = scalar_implicit_oracle(alpha, dt, K, lambda, 1.0);
  const ScalarSystem system = linear_scalar(lambda);
  const FractionalKernel kernel = FractionalKernel::make(alpha, dt, K);
  ImplicitStepper stepper(system, kernel, SolverSettings{}, GTreatment::implicit_g,
                          one(1.0));
  for (int k = 0; k < K; ++k) {
    stepper.step();
    CHECK(stepper.current()[0] == doctest::Approx(oracle[k + 1]).epsilon(1e-12));
  }
}

TEST_CASE("near-classical order approaches backward Euler") {
  const double alpha = 0.99, dt = 0.1, lambda = 1.0;
  const int K = 10;
  const ScalarSystem system = linear_scalar(lambda);
  const FractionalKernel kernel = FractionalKernel::make(alpha, dt, K);
  ImplicitStepper stepper(system, kernel, SolverSettings{}, GTreatment::implicit_g,
                          one(1.0));
  double be = 1.0;
  for (int k = 0; k < K; ++k) {
    stepper.step();
    be /= (1.0 + dt * lambda);
    CHECK(std::abs(stepper.current()[0] - be) / be <= 0.05);
  }
}

TEST_CASE("explicit stepper") {
  SUBCASE("zero operators make the state constant") {
    const ScalarSystem system = linear_scalar(0.0);
    const FractionalKernel kernel = FractionalKernel::make(0.5, 0.1, 10);
    ExplicitStepper stepper(system, kernel, one(3.0));
    for (int k = 0; k < 10; ++k) {
      stepper.step();
      CHECK(stepper.current()[0] == 3.0);
    }
  }
  SUBCASE("stiff scalar problem diverges") {
    const ScalarSystem system = linear_scalar(1e4);
    const FractionalKernel kernel = FractionalKernel::make(0.8, 0.01, 50);
    ExplicitStepper stepper(system, kernel, one(1.0));
    for (int k = 0; k < 50; ++k) stepper.step();
    CHECK(std::abs(stepper.current()[0]) > 1e6);
  }
  SUBCASE("agrees with the implicit stepper to first order in dt") {
    const double alpha = 0.8, lambda = 1.0, T = 0.5;
    auto gap = [&](int K) {
      const double dt = T / K;
      const ScalarSystem system = linear_scalar(lambda);
      const FractionalKernel kernel = FractionalKernel::make(alpha, dt, K);
      ImplicitStepper imp(system, kernel, SolverSettings{}, GTreatment::implicit_g,
                          one(1.0));
      ExplicitStepper exp(system, kernel, one(1.0));
      double worst = 0.0;
      for (int k = 0; k < K; ++k) {
        imp.step();
        exp.step();
        worst = std::max(worst,
                         std::abs(imp.current()[0] - exp.current()[0]));
      }
      return worst;
    };
    const double g1 = gap(10), g2 = gap(20);
    CHECK(g1 / g2 > 1.5);  // halving dt roughly halves the spread
    CHECK(g1 / g2 < 3.5);
  }
}

TEST_CASE("schemes coincide when both operators vanish") {
  const ScalarSystem zero = linear_scalar(0.0);
  const FractionalKernel kernel = FractionalKernel::make(0.6, 0.05, 8);
  ImplicitStepper imp(zero, kernel, SolverSettings{}, GTreatment::implicit_g, one(2.0));
  ExplicitStepper exp(zero, kernel, one(2.0));
  for (int k = 0; k < 8; ++k) {
    imp.step();
    exp.step();
    CHECK(imp.current()[0] == doctest::Approx(exp.current()[0]).epsilon(1e-15));
    CHECK(imp.current()[0] == doctest::Approx(2.0).epsilon(1e-15));
  }
}

TEST_CASE("split stepper also freezes when both operators vanish") {
  const Mesh mesh = build_grid(3, 3);
  const Vec kappa = Vec::Ones(mesh.cell_count());
  SpaceConfig cfg;
  cfg.l_per_block = 2;
  cfg.j_per_block = 1;
  cfg.layers = 1;
  MultiscaleSpace space = build_multiscale_space(mesh, kappa, cfg);
  const SpMat mass = assemble_mass(mesh, nullptr, interior_dof_map(mesh));
  const SpMat stiff = assemble_stiffness_linear(mesh, kappa, interior_dof_map(mesh));
  assemble_reduced(space, mass, stiff);

  SplitStepper::FineOps ops;
  const int n = mesh.interior_count();
  ops.f = [n](const Vec&) { return Vec(Vec::Zero(n)); };
  ops.g = [n](const Vec&) { return Vec(Vec::Zero(n)); };
  ops.f_linearized = [n](const Vec&) { return SpMat(n, n); };
  ops.f_jacobian = [n](const Vec&) { return SpMat(n, n); };

  Vec u10 = Vec::Ones(space.R1.cols()), u20 = Vec::Ones(space.R2.cols());
  const FractionalKernel kernel = FractionalKernel::make(0.6, 0.05, 8);
  SplitStepper split(space, ops, kernel, SolverSettings{}, u10, u20);
  const Vec initial = split.reconstruct();
  for (int k = 0; k < 8; ++k) {
    split.step();
    CHECK((split.reconstruct() - initial).norm() <= 1e-13 * initial.norm());
  }
}

namespace {

struct SplitFixture {
  Mesh mesh = build_grid(5, 5);
  Vec kappa_cells;
  CoefficientField kappa;
  Vec g0;
  MultiscaleSpace space;
  SpMat mass, stiff;

  SplitFixture() {
    kappa_cells = generate_kappa(mesh, 1e3, 5, 7);
    kappa = CoefficientField{kappa_cells, FKind::linear};
    g0 = make_source(mesh, SourceKind::singular);
    SpaceConfig cfg;
    cfg.l_per_block = 2;
    cfg.j_per_block = 2;
    space = build_multiscale_space(mesh, kappa_cells, cfg);
    mass = assemble_mass(mesh, nullptr, interior_dof_map(mesh));
    stiff = assemble_stiffness_linear(mesh, kappa_cells, interior_dof_map(mesh));
    assemble_reduced(space, mass, stiff);
  }
};

}  // namespace

TEST_CASE("split stepper") {
  SplitFixture fx;
  const double dt = 1e-5;
  const FractionalKernel kernel = FractionalKernel::make(0.8, dt, 40);

  SUBCASE("empty second family reproduces the implicit scheme with lagged g") {
    MultiscaleSpace degenerate = fx.space;
    degenerate.R2.resize(fx.mesh.interior_count(), 0);
    degenerate.M12.resize(degenerate.R1.cols(), 0);
    degenerate.M22.resize(0, 0);
    degenerate.A12.resize(degenerate.R1.cols(), 0);
    degenerate.A22.resize(0, 0);

    SplitStepper split(degenerate,
                       SplitStepper::default_ops(fx.mesh, fx.kappa, fx.g0, GKind::cubic),
                       kernel, SolverSettings{}, Vec::Zero(fx.space.R1.cols()),
                       Vec::Zero(0));
    ReducedSystem system(fx.mesh, fx.kappa, fx.g0, GKind::cubic, fx.space.R1);
    ImplicitStepper imp(system, kernel, SolverSettings{}, GTreatment::explicit_g,
                        Vec::Zero(fx.space.R1.cols()));
    for (int k = 0; k < 5; ++k) {
      split.step();
      imp.step();
      const Vec a = split.u1();
      const Vec b = imp.current();
      CHECK((a - b).norm() <= 1e-12 * std::max(1.0, b.norm()));
    }
  }

  SUBCASE("linear diffusion converges in a single pass") {
    SplitStepper split(fx.space,
                       SplitStepper::default_ops(fx.mesh, fx.kappa, fx.g0, GKind::cubic),
                       kernel, SolverSettings{}, Vec::Zero(fx.space.R1.cols()),
                       Vec::Zero(fx.space.R2.cols()));
    for (int k = 0; k < 3; ++k) {
      split.step();
      CHECK(split.records()[k].iterations == 1);
    }
  }

  SUBCASE("split trajectory satisfies the monolithic residual identity") {
    SplitStepper split(fx.space,
                       SplitStepper::default_ops(fx.mesh, fx.kappa, fx.g0, GKind::cubic),
                       kernel, SolverSettings{NonlinearMethod::newton, 1e-12, 50},
                       Vec::Zero(fx.space.R1.cols()), Vec::Zero(fx.space.R2.cols()));
    std::vector<Vec> fine_states{split.reconstruct()};
    const int K = 6;
    for (int k = 0; k < K; ++k) {
      split.step();
      fine_states.push_back(split.reconstruct());
    }
    // rebuild the residual of the final step from the stored fine states and
    // test it against both reduced families
    const int k = K - 1;
    Vec l1_sum = Vec::Zero(fx.mesh.interior_count());
    for (int j = 0; j <= k; ++j)
      l1_sum += kernel.b[k - j] * (fine_states[j + 1] - fine_states[j]);
    const Vec w = fx.space.R1 * split.u1() + fx.space.R2 *
                   Vec(split.u2() - split.increments2().back());  // u1^{k+1}+u2^k
    const Vec residual_fine = fx.mass * l1_sum / kernel.alpha0 +
                              apply_f(fx.mesh, fx.kappa, w) +
                              apply_g(fx.mesh, fine_states[k], fx.g0, GKind::cubic);
    const double r1 = (fx.space.R1.transpose() * residual_fine).norm();
    const double r2 = (fx.space.R2.transpose() * residual_fine).norm();
    CHECK(r1 <= 1e-10);
    CHECK(r2 <= 1e-10);
  }
}

TEST_CASE("implicit energy decay under the Theorem 1 step bound") {
  // zero source, cubic reaction, nonzero start; alpha0 well below 1/b_lower
  const Mesh mesh = build_grid(4, 4);
  const Vec kappa_cells = Vec::Ones(mesh.cell_count());
  const CoefficientField kappa{kappa_cells, FKind::linear};
  const Vec g0 = Vec::Zero(mesh.interior_count());
  const DofMap dofs = interior_dof_map(mesh);
  Vec u0(dofs.size());
  for (int i = 0; i < dofs.size(); ++i) {
    const double x = mesh.node_x(dofs.nodes[i]), y = mesh.node_y(dofs.nodes[i]);
    u0[i] = 0.8 * std::sin(M_PI * x) * std::sin(M_PI * y);
  }
  const int K = 40;
  const double dt = 0.002;
  const double alpha = 0.8;
  const double alpha0 = std::tgamma(2.0 - alpha) * std::pow(dt, alpha);
  CHECK(alpha0 <= 1.0 / 20.0);  // b_lower = 20 on the sampled range

  FineSystem system(mesh, kappa, g0, GKind::cubic);
  const FractionalKernel kernel = FractionalKernel::make(alpha, dt, K);
  ImplicitStepper stepper(system, kernel, SolverSettings{}, GTreatment::implicit_g,
                          u0);
  const double e0 = energy_F(mesh, kappa_cells, u0) +
                    energy_G(mesh, u0, g0, GKind::cubic);
  for (int k = 0; k < K; ++k) {
    stepper.step();
    const double e = energy_F(mesh, kappa_cells, stepper.current()) +
                     energy_G(mesh, stepper.current(), g0, GKind::cubic);
    CHECK(e <= e0 + 1e-10);
  }
}
