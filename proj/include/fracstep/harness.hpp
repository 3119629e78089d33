#pragma once

#include <string>
#include <vector>

#include "fracstep/femcore.hpp"
#include "fracstep/msbasis.hpp"
#include "fracstep/schemes.hpp"
#include "fracstep/stability.hpp"

namespace fracstep {

enum class SchemeChoice {
  implicit_fine,
  implicit_cem,
  implicit_cem_plus,
  partially_explicit,
  explicit_fine
};

enum class SourceKind { singular, smooth, file };
enum class KappaKind { generated, file };

struct ExperimentConfig {
  double alpha = 0.8;
  double final_time = 0.05;
  int steps = 200;

  int n_coarse = 5;
  int refinement = 5;

  FKind f = FKind::linear;
  GKind g = GKind::cubic;

  SourceKind source_kind = SourceKind::singular;
  std::string source_path;

  KappaKind kappa_kind = KappaKind::generated;
  double contrast = 1e4;
  int strikes = 5;
  unsigned long long seed = 7;
  std::string kappa_path;

  SpaceConfig space;
  std::string basis_path;  // nonempty: reuse an exported basis when present

  SchemeChoice scheme = SchemeChoice::implicit_fine;
  SolverSettings solver;

  double curvature_range = 1.5;  // reaction curvature scanned on [-r, r]
  double safety = 2.0;           // applied to estimated diffusion bounds

  std::string output_dir = "out";
  int snapshot_stride = 0;  // 0: final time only

  double dt() const { return final_time / steps; }
  void validate() const;
};

ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& config);

const char* scheme_name(SchemeChoice scheme);

// ---- field generation and file formats (plain text grids, %.17g, LF)

/// Background 1 with `strikes` axis-aligned one-cell-thick rectangles of
/// value `contrast`, placed without overlap; deterministic per seed.
Vec generate_kappa(const Mesh& mesh, double contrast, int strikes,
                   unsigned long long seed);

/// singular: +/-10 block indicators on two separated interior coarse blocks;
/// smooth: 10 sin(pi x) sin(pi y); file: node grid from disk.
Vec make_source(const Mesh& mesh, SourceKind kind, const std::string& path = {});

void write_cell_grid(const std::string& path, const Mesh& mesh, const Vec& cells);
Vec read_cell_grid(const std::string& path, const Mesh& mesh);
void write_node_grid(const std::string& path, const Mesh& mesh,
                     const Vec& interior_field);
Vec read_node_grid(const std::string& path, const Mesh& mesh);

// ---- error norms

struct ErrorPair {
  double rel_l2 = 0.0;
  double rel_energy = 0.0;
  bool zero_reference = false;  // reference norm vanished; absolute norms reported
};

ErrorPair error_norms(const Vec& u, const Vec& u_ref, const SpMat& mass,
                      const SpMat& stiffness);

// ---- runs

struct RunReport {
  std::string scheme;
  std::vector<double> rel_l2;      // per step, against the fine reference
  std::vector<double> rel_energy;
  std::vector<int> iterations;     // nonlinear iterations per step
  int steps_completed = 0;
  bool diverged = false;
  bool zero_reference = false;
  double wall_seconds = 0.0;
};

struct Trajectory {
  std::vector<Vec> states;  // fine interior coefficients, indices 0..K
  std::vector<int> iterations;
};

/// Implicit fine-grid trajectory from u0 = 0 (the error baseline).
Trajectory run_reference(const ExperimentConfig& config, const Mesh& mesh,
                         const CoefficientField& kappa, const Vec& g0);

struct ComparisonResult {
  Trajectory reference;
  std::vector<RunReport> reports;  // implicit-cem, implicit-cem-plus, partially-explicit
};

/// The three reduced schemes against the stored reference; writes errors.csv
/// and snapshots under config.output_dir.
ComparisonResult run_comparison(const ExperimentConfig& config);

/// Runs config.scheme alone; writes snapshots; returns the trajectory of fine
/// reconstructions at snapshot steps plus iteration counts.
RunReport run_single(const ExperimentConfig& config);

/// Stability analysis of the configured space at the configured step size;
/// writes stability.csv under config.output_dir.
StabilityReport analyze_stability(const ExperimentConfig& config);

/// Smooth sample states spanning [-range, range] for curvature estimation.
std::vector<Vec> curvature_samples(const Mesh& mesh, double range);

struct KernelCheck {
  double max_rel_err_affine = 0.0;  // exactness on u(t) = t
  double observed_order = 0.0;      // on u(t) = t^2, expected 2 - alpha
  bool pass = false;
};

KernelCheck run_kernel_checks(double alpha);

}  // namespace fracstep
