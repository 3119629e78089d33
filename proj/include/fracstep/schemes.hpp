#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "fracstep/caputo.hpp"
#include "fracstep/femcore.hpp"
#include "fracstep/msbasis.hpp"

namespace fracstep {

enum class NonlinearMethod { picard, newton };
enum class GTreatment { implicit_g, explicit_g };

struct SolverSettings {
  NonlinearMethod method = NonlinearMethod::newton;
  double tolerance = 1e-10;  // absolute, on the residual two-norm
  int max_iterations = 50;
};

struct NonlinearRecord {
  int iterations = 0;
  double residual_norm = 0.0;
  bool converged = false;
};

struct NonlinearError : std::runtime_error {
  NonlinearError(const std::string& what, NonlinearRecord rec)
      : std::runtime_error(what), record(rec) {}
  NonlinearRecord record;
};

using ResidualFn = std::function<Vec(const Vec&)>;
// builds a solver for the linearized operator at the given state
using SolverBuilder = std::function<std::function<Vec(const Vec&)>(const Vec&)>;

/// Quasi-Newton iteration x <- x - B(x)^{-1} r(x) until |r| <= tol. Picard
/// passes the lagged-coefficient operator as B, Newton the full Jacobian;
/// both converge in one pass when the problem is linear and B exact.
std::pair<Vec, NonlinearRecord> iterate_to_tolerance(const ResidualFn& residual,
                                                     const SolverBuilder& builder,
                                                     Vec initial, double tol,
                                                     int max_iter);

std::pair<Vec, NonlinearRecord> picard_solve(const ResidualFn& residual,
                                             const SolverBuilder& lagged_operator,
                                             Vec initial, double tol, int max_iter);
std::pair<Vec, NonlinearRecord> newton_solve(const ResidualFn& residual,
                                             const SolverBuilder& jacobian,
                                             Vec initial, double tol, int max_iter);

/// A Galerkin-discretized problem the steppers operate on: mass action/solve
/// plus the two nonlinear residual terms with their linearizations.
class SchemeSystem {
 public:
  virtual ~SchemeSystem() = default;
  virtual Eigen::Index dim() const = 0;
  virtual Vec mass_mul(const Vec& v) const = 0;
  virtual Vec mass_solve(const Vec& v) const = 0;
  virtual Vec f_vec(const Vec& u) const = 0;
  virtual Vec g_vec(const Vec& u) const = 0;
  // solver for mass_coeff*M + f-linearization(state) [+ g-Jacobian(state)]
  virtual std::function<Vec(const Vec&)> step_solver(const Vec& state,
                                                     double mass_coeff,
                                                     NonlinearMethod method,
                                                     bool g_implicit) const = 0;
};

/// Fine-grid system over interior nodes (sparse path).
class FineSystem : public SchemeSystem {
 public:
  FineSystem(const Mesh& mesh, CoefficientField kappa, Vec g0_interior, GKind g);
  Eigen::Index dim() const override;
  Vec mass_mul(const Vec& v) const override;
  Vec mass_solve(const Vec& v) const override;
  Vec f_vec(const Vec& u) const override;
  Vec g_vec(const Vec& u) const override;
  std::function<Vec(const Vec&)> step_solver(const Vec& state, double mass_coeff,
                                             NonlinearMethod method,
                                             bool g_implicit) const override;
  const SpMat& mass() const { return mass_; }
  const SpMat& stiffness_linear() const { return stiff_linear_; }

 private:
  const Mesh& mesh_;
  CoefficientField kappa_;
  Vec g0_;
  GKind g_;
  SpMat mass_;
  SpMat stiff_linear_;
  std::shared_ptr<Eigen::SimplicialLDLT<SpMat>> mass_solver_;
  // the linear-diffusion step operator is state independent; factor it once
  mutable double cached_coeff_ = -1.0;
  mutable std::shared_ptr<Eigen::SparseLU<SpMat>> cached_lu_;
};

/// Reduced system u = R c over a basis matrix R (dense path).
class ReducedSystem : public SchemeSystem {
 public:
  ReducedSystem(const Mesh& mesh, CoefficientField kappa, Vec g0_interior, GKind g,
                Eigen::MatrixXd basis);
  Eigen::Index dim() const override;
  Vec mass_mul(const Vec& v) const override;
  Vec mass_solve(const Vec& v) const override;
  Vec f_vec(const Vec& u) const override;
  Vec g_vec(const Vec& u) const override;
  std::function<Vec(const Vec&)> step_solver(const Vec& state, double mass_coeff,
                                             NonlinearMethod method,
                                             bool g_implicit) const override;
  const Eigen::MatrixXd& basis() const { return basis_; }
  Vec reconstruct(const Vec& coeff) const { return basis_ * coeff; }
  Vec project(const Vec& fine) const;  // mass-orthogonal projection coefficients

 private:
  const Mesh& mesh_;
  CoefficientField kappa_;
  Vec g0_;
  GKind g_;
  Eigen::MatrixXd basis_;
  SpMat fine_mass_;
  Eigen::MatrixXd mass_red_;
  Eigen::PartialPivLU<Eigen::MatrixXd> mass_lu_;
  Eigen::MatrixXd stiff_red_;  // reduced linear stiffness (linear kind only)
  mutable double cached_coeff_ = -1.0;
  mutable std::shared_ptr<Eigen::PartialPivLU<Eigen::MatrixXd>> cached_lu_;
};

/// Scalar single-dof system (unit mass), used by the surrogate oracles.
class ScalarSystem : public SchemeSystem {
 public:
  ScalarSystem(std::function<double(double)> f, std::function<double(double)> fprime,
               std::function<double(double)> g, std::function<double(double)> gprime);
  Eigen::Index dim() const override { return 1; }
  Vec mass_mul(const Vec& v) const override { return v; }
  Vec mass_solve(const Vec& v) const override { return v; }
  Vec f_vec(const Vec& u) const override;
  Vec g_vec(const Vec& u) const override;
  std::function<Vec(const Vec&)> step_solver(const Vec& state, double mass_coeff,
                                             NonlinearMethod method,
                                             bool g_implicit) const override;

 private:
  std::function<double(double)> f_, fp_, g_, gp_;
};

/// L1 backward stepper: both f and g at u^{k+1} by default; explicit_g moves
/// the reaction to u^k.
class ImplicitStepper {
 public:
  ImplicitStepper(const SchemeSystem& system, FractionalKernel kernel,
                  SolverSettings settings, GTreatment g_treatment, Vec u0);
  void step();
  const Vec& current() const { return u_; }
  int step_index() const { return k_; }
  const std::vector<Vec>& increments() const { return increments_; }
  const std::vector<NonlinearRecord>& records() const { return records_; }

 private:
  const SchemeSystem& system_;
  FractionalKernel kernel_;
  SolverSettings settings_;
  GTreatment g_treatment_;
  Vec u_;
  int k_ = 0;
  std::vector<Vec> increments_;
  std::vector<NonlinearRecord> records_;
};

/// Fully explicit L1 stepper: u^{k+1} = u^k - hist - alpha0 M^{-1}(F+G)(u^k).
class ExplicitStepper {
 public:
  ExplicitStepper(const SchemeSystem& system, FractionalKernel kernel, Vec u0);
  void step();
  const Vec& current() const { return u_; }
  int step_index() const { return k_; }

 private:
  const SchemeSystem& system_;
  FractionalKernel kernel_;
  Vec u_;
  int k_ = 0;
  std::vector<Vec> increments_;
};

/// Partially explicit stepper over V_{H,1} + V_{H,2}: the fractional mass
/// term couples both components implicitly, f is implicit in the first
/// component only (evaluated at R1 u1^{k+1} + R2 u2^k), g fully explicit.
class SplitStepper {
 public:
  // fine-space evaluators, injectable for tests
  struct FineOps {
    std::function<Vec(const Vec&)> f;                 // interior residual
    std::function<Vec(const Vec&)> g;                 // interior residual
    std::function<SpMat(const Vec&)> f_linearized;    // Picard operator A(u)
    std::function<SpMat(const Vec&)> f_jacobian;      // Newton operator
    bool f_constant = false;  // linearizations are state independent
  };
  static FineOps default_ops(const Mesh& mesh, CoefficientField kappa,
                             Vec g0_interior, GKind g);

  SplitStepper(const MultiscaleSpace& space, FineOps ops, FractionalKernel kernel,
               SolverSettings settings, Vec u1_0, Vec u2_0);
  void step();
  Vec reconstruct() const;  // fine-grid field R1 u1 + R2 u2
  const Vec& u1() const { return u1_; }
  const Vec& u2() const { return u2_; }
  int step_index() const { return k_; }
  const std::vector<Vec>& increments1() const { return inc1_; }
  const std::vector<Vec>& increments2() const { return inc2_; }
  const std::vector<NonlinearRecord>& records() const { return records_; }

 private:
  const MultiscaleSpace& space_;
  FineOps ops_;
  FractionalKernel kernel_;
  SolverSettings settings_;
  Vec u1_, u2_;
  int k_ = 0;
  std::vector<Vec> inc1_, inc2_;
  std::vector<NonlinearRecord> records_;
  Eigen::Index m1_ = 0, m2_ = 0;
  std::shared_ptr<Eigen::PartialPivLU<Eigen::MatrixXd>> cached_lu_;
};

/// Mass-orthogonal projection of a fine interior field onto the coupled
/// reduced space; returns (u1, u2) coefficients.
std::pair<Vec, Vec> project_split(const MultiscaleSpace& space, const SpMat& mass,
                                  const Vec& fine);

}  // namespace fracstep
