#include "fracstep/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "fracstep/caputo.hpp"

namespace fracstep {

namespace {

using nlohmann::json;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

FKind parse_f(const std::string& s) {
  if (s == "linear") return FKind::linear;
  if (s == "quadratic") return FKind::quadratic;
  throw std::invalid_argument("unknown diffusion kind: " + s);
}

GKind parse_g(const std::string& s) {
  if (s == "cubic") return GKind::cubic;
  if (s == "rational") return GKind::rational;
  if (s == "none") return GKind::none;
  throw std::invalid_argument("unknown reaction kind: " + s);
}

SourceKind parse_source(const std::string& s) {
  if (s == "singular") return SourceKind::singular;
  if (s == "smooth") return SourceKind::smooth;
  if (s == "file") return SourceKind::file;
  throw std::invalid_argument("unknown source kind: " + s);
}

SchemeChoice parse_scheme(const std::string& s) {
  if (s == "implicit-fine") return SchemeChoice::implicit_fine;
  if (s == "implicit-cem") return SchemeChoice::implicit_cem;
  if (s == "implicit-cem-plus") return SchemeChoice::implicit_cem_plus;
  if (s == "partially-explicit") return SchemeChoice::partially_explicit;
  if (s == "explicit") return SchemeChoice::explicit_fine;
  throw std::invalid_argument("unknown scheme: " + s);
}

AuxWeight parse_weight(const std::string& s) {
  if (s == "pou_gradient") return AuxWeight::pou_gradient;
  if (s == "h_scaled") return AuxWeight::h_scaled;
  throw std::invalid_argument("unknown auxiliary weight: " + s);
}

// deterministic draws independent of library distribution internals
std::uint64_t draw(std::mt19937_64& rng) { return rng(); }
int draw_int(std::mt19937_64& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(draw(rng) % static_cast<std::uint64_t>(hi - lo + 1));
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!(final_time > 0.0)) throw std::invalid_argument("final_time must be > 0");
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("alpha must lie in (0,1)");
  if (n_coarse < 1 || refinement < 1)
    throw std::invalid_argument("mesh sizes must be >= 1");
  if (contrast < 1.0) throw std::invalid_argument("contrast must be >= 1");
  if (strikes < 0) throw std::invalid_argument("strikes must be >= 0");
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json j = json::parse(in);
  ExperimentConfig c;
  c.alpha = j.value("alpha", c.alpha);
  c.final_time = j.value("final_time", c.final_time);
  c.steps = j.value("steps", c.steps);
  if (j.contains("mesh")) {
    c.n_coarse = j["mesh"].value("n_coarse", c.n_coarse);
    c.refinement = j["mesh"].value("refinement", c.refinement);
  }
  if (j.contains("operators")) {
    c.f = parse_f(j["operators"].value("f", "linear"));
    c.g = parse_g(j["operators"].value("g", "cubic"));
  }
  if (j.contains("source")) {
    c.source_kind = parse_source(j["source"].value("kind", "singular"));
    c.source_path = j["source"].value("path", "");
  }
  if (j.contains("kappa")) {
    const auto& k = j["kappa"];
    c.kappa_kind = k.value("kind", "generated") == "file" ? KappaKind::file
                                                          : KappaKind::generated;
    c.contrast = k.value("contrast", c.contrast);
    c.strikes = k.value("strikes", c.strikes);
    c.seed = k.value("seed", c.seed);
    c.kappa_path = k.value("path", "");
  }
  if (j.contains("space")) {
    const auto& s = j["space"];
    c.space.l_per_block = s.value("l_per_block", c.space.l_per_block);
    c.space.j_per_block = s.value("j_per_block", c.space.j_per_block);
    c.space.layers = s.value("layers", c.space.layers);
    c.space.weight = parse_weight(s.value("weight", "pou_gradient"));
    c.basis_path = s.value("basis_path", "");
  }
  if (j.contains("scheme")) c.scheme = parse_scheme(j["scheme"].get<std::string>());
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    c.solver.method = s.value("method", "newton") == "picard"
                          ? NonlinearMethod::picard
                          : NonlinearMethod::newton;
    c.solver.tolerance = s.value("tolerance", c.solver.tolerance);
    c.solver.max_iterations = s.value("max_iterations", c.solver.max_iterations);
  }
  if (j.contains("stability")) {
    c.curvature_range = j["stability"].value("curvature_range", c.curvature_range);
    c.safety = j["stability"].value("safety", c.safety);
  }
  if (j.contains("output")) {
    c.output_dir = j["output"].value("directory", c.output_dir);
    c.snapshot_stride = j["output"].value("snapshot_stride", c.snapshot_stride);
  }
  c.validate();
  return c;
}

const char* scheme_name(SchemeChoice scheme) {
  switch (scheme) {
    case SchemeChoice::implicit_fine: return "implicit-fine";
    case SchemeChoice::implicit_cem: return "implicit-cem";
    case SchemeChoice::implicit_cem_plus: return "implicit-cem-plus";
    case SchemeChoice::partially_explicit: return "partially-explicit";
    case SchemeChoice::explicit_fine: return "explicit";
  }
  return "?";
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["alpha"] = c.alpha;
  j["final_time"] = c.final_time;
  j["steps"] = c.steps;
  j["mesh"] = {{"n_coarse", c.n_coarse}, {"refinement", c.refinement}};
  j["operators"] = {{"f", c.f == FKind::linear ? "linear" : "quadratic"},
                    {"g", c.g == GKind::cubic     ? "cubic"
                          : c.g == GKind::rational ? "rational"
                                                   : "none"}};
  j["source"] = {{"kind", c.source_kind == SourceKind::singular ? "singular"
                          : c.source_kind == SourceKind::smooth ? "smooth"
                                                                : "file"},
                 {"path", c.source_path}};
  j["kappa"] = {{"kind", c.kappa_kind == KappaKind::file ? "file" : "generated"},
                {"contrast", c.contrast},
                {"strikes", c.strikes},
                {"seed", c.seed},
                {"path", c.kappa_path}};
  j["space"] = {{"l_per_block", c.space.l_per_block},
                {"j_per_block", c.space.j_per_block},
                {"layers", c.space.layers},
                {"weight", c.space.weight == AuxWeight::pou_gradient ? "pou_gradient"
                                                                     : "h_scaled"},
                {"basis_path", c.basis_path}};
  j["scheme"] = scheme_name(c.scheme);
  j["solver"] = {
      {"method", c.solver.method == NonlinearMethod::picard ? "picard" : "newton"},
      {"tolerance", c.solver.tolerance},
      {"max_iterations", c.solver.max_iterations}};
  j["stability"] = {{"curvature_range", c.curvature_range}, {"safety", c.safety}};
  j["output"] = {{"directory", c.output_dir}, {"snapshot_stride", c.snapshot_stride}};
  return j.dump(2);
}

Vec generate_kappa(const Mesh& mesh, double contrast, int strikes,
                   unsigned long long seed) {
  if (contrast < 1.0) throw std::invalid_argument("contrast must be >= 1");
  const int n = mesh.cells_per_side();
  Vec cells = Vec::Ones(mesh.cell_count());
  if (contrast == 1.0 || strikes == 0) return cells;

  std::mt19937_64 rng(seed);
  std::vector<char> occupied(mesh.cell_count(), 0);
  const int max_retries = 200;
  // strikes stay pairwise separated by at least one background cell
  auto blocked = [&](int cx, int cy) {
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int x = cx + dx, y = cy + dy;
        if (x >= 0 && x < n && y >= 0 && y < n && occupied[mesh.cell_id(x, y)])
          return true;
      }
    return false;
  };
  for (int s = 0; s < strikes; ++s) {
    bool placed = false;
    for (int attempt = 0; attempt < max_retries && !placed; ++attempt) {
      const bool horizontal = draw(rng) & 1u;
      int len = draw_int(rng, 10, 40);
      len = std::min(len, n - 2);
      len = std::max(len, 2);
      const int row = draw_int(rng, 0, n - 1);
      const int col0 = draw_int(rng, 0, n - len);
      bool clash = false;
      for (int t = 0; t < len && !clash; ++t)
        clash = horizontal ? blocked(col0 + t, row) : blocked(row, col0 + t);
      if (clash) continue;
      for (int t = 0; t < len; ++t) {
        const int cell = horizontal ? mesh.cell_id(col0 + t, row)
                                    : mesh.cell_id(row, col0 + t);
        occupied[cell] = 1;
        cells[cell] = contrast;
      }
      placed = true;
    }
    if (!placed)
      throw std::runtime_error("strike placement failed after retries (overcrowded)");
  }
  return cells;
}

Vec make_source(const Mesh& mesh, SourceKind kind, const std::string& path) {
  const DofMap dofs = interior_dof_map(mesh);
  Vec g0 = Vec::Zero(dofs.size());
  switch (kind) {
    case SourceKind::smooth: {
      for (int i = 0; i < dofs.size(); ++i) {
        const int node = dofs.nodes[i];
        g0[i] = 10.0 * std::sin(std::numbers::pi * mesh.node_x(node)) *
                std::sin(std::numbers::pi * mesh.node_y(node));
      }
      return g0;
    }
    case SourceKind::singular: {
      if (mesh.n_coarse < 5)
        throw std::invalid_argument(
            "singular source needs n_coarse >= 5 for separated blocks");
      const int ref = mesh.refinement;
      auto block_value = [&](int node, int bx, int by) {
        const int ix = node % mesh.nodes_per_side();
        const int iy = node / mesh.nodes_per_side();
        return ix >= bx * ref && ix <= (bx + 1) * ref && iy >= by * ref &&
               iy <= (by + 1) * ref;
      };
      const int hi = mesh.n_coarse - 2;
      for (int i = 0; i < dofs.size(); ++i) {
        const int node = dofs.nodes[i];
        if (block_value(node, 1, 1)) g0[i] = 10.0;
        else if (block_value(node, hi, hi)) g0[i] = -10.0;
      }
      return g0;
    }
    case SourceKind::file: return read_node_grid(path, mesh);
  }
  return g0;
}

void write_cell_grid(const std::string& path, const Mesh& mesh, const Vec& cells) {
  if (cells.size() != mesh.cell_count())
    throw std::invalid_argument("write_cell_grid: size mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const int n = mesh.cells_per_side();
  for (int cy = 0; cy < n; ++cy) {
    for (int cx = 0; cx < n; ++cx)
      out << fmt17(cells[mesh.cell_id(cx, cy)]) << (cx + 1 < n ? " " : "");
    out << "\n";
  }
}

Vec read_cell_grid(const std::string& path, const Mesh& mesh) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  Vec cells(mesh.cell_count());
  const int n = mesh.cells_per_side();
  for (int cy = 0; cy < n; ++cy)
    for (int cx = 0; cx < n; ++cx)
      if (!(in >> cells[mesh.cell_id(cx, cy)]))
        throw std::runtime_error("cell grid shape mismatch in " + path);
  return cells;
}

void write_node_grid(const std::string& path, const Mesh& mesh,
                     const Vec& interior_field) {
  const Vec full = to_full(mesh, interior_dof_map(mesh), interior_field);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const int np = mesh.nodes_per_side();
  for (int iy = 0; iy < np; ++iy) {
    for (int ix = 0; ix < np; ++ix)
      out << fmt17(full[mesh.node_id(ix, iy)]) << (ix + 1 < np ? " " : "");
    out << "\n";
  }
}

Vec read_node_grid(const std::string& path, const Mesh& mesh) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  Vec full(mesh.node_count());
  const int np = mesh.nodes_per_side();
  for (int iy = 0; iy < np; ++iy)
    for (int ix = 0; ix < np; ++ix)
      if (!(in >> full[mesh.node_id(ix, iy)]))
        throw std::runtime_error("node grid shape mismatch in " + path);
  return to_local(interior_dof_map(mesh), full);
}

ErrorPair error_norms(const Vec& u, const Vec& u_ref, const SpMat& mass,
                      const SpMat& stiffness) {
  ErrorPair e;
  const Vec d = u - u_ref;
  const double l2_ref = std::sqrt(u_ref.dot(mass * u_ref));
  const double en_ref = std::sqrt(u_ref.dot(stiffness * u_ref));
  const double l2_err = std::sqrt(d.dot(mass * d));
  const double en_err = std::sqrt(d.dot(stiffness * d));
  if (l2_ref == 0.0 || en_ref == 0.0) {
    e.zero_reference = true;
    e.rel_l2 = l2_err;
    e.rel_energy = en_err;
  } else {
    e.rel_l2 = l2_err / l2_ref;
    e.rel_energy = en_err / en_ref;
  }
  return e;
}

namespace {

struct ProblemData {
  Mesh mesh;
  CoefficientField kappa;
  Vec g0;
  SpMat mass;
  SpMat stiffness;  // linear kappa-weighted (energy norm)
};

ProblemData setup_problem(const ExperimentConfig& config) {
  ProblemData p;
  p.mesh = build_grid(config.n_coarse, config.refinement);
  Vec cells = config.kappa_kind == KappaKind::file
                  ? read_cell_grid(config.kappa_path, p.mesh)
                  : generate_kappa(p.mesh, config.contrast, config.strikes,
                                   config.seed);
  p.kappa = CoefficientField{std::move(cells), config.f};
  p.kappa.validate(p.mesh);
  p.g0 = make_source(p.mesh, config.source_kind, config.source_path);
  const DofMap dofs = interior_dof_map(p.mesh);
  p.mass = assemble_mass(p.mesh, nullptr, dofs);
  p.stiffness = assemble_stiffness_linear(p.mesh, p.kappa.cell, dofs);
  return p;
}

double mass_norm(const SpMat& mass, const Vec& v) {
  return std::sqrt(v.dot(mass * v));
}

MultiscaleSpace obtain_space(const ExperimentConfig& config, const ProblemData& p) {
  MultiscaleSpace space;
  bool loaded = false;
  if (!config.basis_path.empty() &&
      std::filesystem::exists(config.basis_path + "_basis.txt")) {
    space = load_basis(config.basis_path);
    if (space.R1.rows() != p.mesh.interior_count())
      throw std::runtime_error("stored basis does not match the mesh");
    loaded = true;
  }
  if (!loaded) space = build_multiscale_space(p.mesh, p.kappa.cell, config.space);
  assemble_reduced(space, p.mass, p.stiffness);
  return space;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(Clock::now() - start_).count();
  }

 private:
  using Clock = std::chrono::steady_clock;
  Clock::time_point start_ = Clock::now();
};

void write_snapshot(const ExperimentConfig& config, const Mesh& mesh,
                    const std::string& scheme, int step, const Vec& fine) {
  const std::string path = config.output_dir + "/snapshot_" + scheme + "_step" +
                           std::to_string(step) + ".txt";
  write_node_grid(path, mesh, fine);
}

bool want_snapshot(const ExperimentConfig& config, int step) {
  if (step == config.steps) return true;
  return config.snapshot_stride > 0 && step % config.snapshot_stride == 0;
}

}  // namespace

Trajectory run_reference(const ExperimentConfig& config, const Mesh& mesh,
                         const CoefficientField& kappa, const Vec& g0) {
  const FractionalKernel kernel =
      FractionalKernel::make(config.alpha, config.dt(), config.steps);
  FineSystem system(mesh, kappa, g0, config.g);
  Vec u0 = Vec::Zero(mesh.interior_count());
  ImplicitStepper stepper(system, kernel, config.solver, GTreatment::implicit_g,
                          std::move(u0));
  Trajectory traj;
  traj.states.reserve(config.steps + 1);
  traj.states.push_back(stepper.current());
  for (int k = 0; k < config.steps; ++k) {
    stepper.step();
    traj.states.push_back(stepper.current());
    traj.iterations.push_back(stepper.records().back().iterations);
    if (!stepper.current().allFinite())
      throw std::runtime_error("reference solve produced non-finite values at step " +
                               std::to_string(k + 1));
  }
  return traj;
}

namespace {

// advance fn(k) -> fine reconstruction after step k+1; errors vs reference
RunReport run_against_reference(const ExperimentConfig& config,
                                const ProblemData& p, const Trajectory& reference,
                                const std::string& name,
                                const std::function<Vec(int)>& advance,
                                const std::function<int(int)>& iteration_count) {
  RunReport report;
  report.scheme = name;
  Stopwatch watch;
  double baseline = 0.0;
  for (int k = 0; k < config.steps; ++k) {
    Vec fine;
    try {
      fine = advance(k);
    } catch (const NonlinearError&) {
      // blow-up drives the residual floor above an absolute tolerance;
      // flag and truncate instead of spewing non-finite rows
      report.diverged = true;
      break;
    } catch (const std::domain_error&) {
      report.diverged = true;  // diverging state crossed the reaction pole
      break;
    }
    if (k == 0) baseline = std::max(baseline, mass_norm(p.mass, fine));
    const double norm = mass_norm(p.mass, fine);
    if (!fine.allFinite() || (baseline > 0.0 && norm > 1e6 * baseline)) {
      report.diverged = true;
      break;
    }
    const ErrorPair e =
        error_norms(fine, reference.states[k + 1], p.mass, p.stiffness);
    report.rel_l2.push_back(e.rel_l2);
    report.rel_energy.push_back(e.rel_energy);
    report.zero_reference |= e.zero_reference;
    report.iterations.push_back(iteration_count(k));
    report.steps_completed = k + 1;
    if (want_snapshot(config, k + 1))
      write_snapshot(config, p.mesh, name, k + 1, fine);
  }
  report.wall_seconds = watch.seconds();
  return report;
}

void write_errors_csv(const ExperimentConfig& config,
                      const std::vector<RunReport>& reports) {
  std::ofstream out(config.output_dir + "/errors.csv");
  if (!out) throw std::runtime_error("cannot write errors.csv");
  out << "step,t,scheme,rel_l2,rel_energy\n";
  for (const auto& report : reports)
    for (int k = 0; k < report.steps_completed; ++k)
      out << (k + 1) << ',' << fmt17((k + 1) * config.dt()) << ',' << report.scheme
          << ',' << fmt17(report.rel_l2[k]) << ',' << fmt17(report.rel_energy[k])
          << "\n";
}

}  // namespace

ComparisonResult run_comparison(const ExperimentConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);
  const ProblemData p = setup_problem(config);
  const FractionalKernel kernel =
      FractionalKernel::make(config.alpha, config.dt(), config.steps);

  ComparisonResult result;
  result.reference = run_reference(config, p.mesh, p.kappa, p.g0);
  for (int k = 1; k <= config.steps; ++k)
    if (want_snapshot(config, k))
      write_snapshot(config, p.mesh, "implicit-fine", k, result.reference.states[k]);

  const MultiscaleSpace space = obtain_space(config, p);
  const Vec zero1 = Vec::Zero(space.R1.cols());
  const Vec zero2 = Vec::Zero(space.R2.cols());

  {  // implicit scheme on the CEM space
    ReducedSystem system(p.mesh, p.kappa, p.g0, config.g, space.R1);
    ImplicitStepper stepper(system, kernel, config.solver, GTreatment::implicit_g,
                            zero1);
    result.reports.push_back(run_against_reference(
        config, p, result.reference, "implicit-cem",
        [&](int) {
          stepper.step();
          return system.reconstruct(stepper.current());
        },
        [&](int k) { return stepper.records()[k].iterations; }));
  }
  {  // implicit scheme with the second family appended
    Eigen::MatrixXd R(space.R1.rows(), space.R1.cols() + space.R2.cols());
    R << space.R1, space.R2;
    ReducedSystem system(p.mesh, p.kappa, p.g0, config.g, std::move(R));
    ImplicitStepper stepper(system, kernel, config.solver, GTreatment::implicit_g,
                            Vec::Zero(space.R1.cols() + space.R2.cols()));
    result.reports.push_back(run_against_reference(
        config, p, result.reference, "implicit-cem-plus",
        [&](int) {
          stepper.step();
          return system.reconstruct(stepper.current());
        },
        [&](int k) { return stepper.records()[k].iterations; }));
  }
  {  // partially explicit splitting
    SplitStepper stepper(space,
                         SplitStepper::default_ops(p.mesh, p.kappa, p.g0, config.g),
                         kernel, config.solver, zero1, zero2);
    result.reports.push_back(run_against_reference(
        config, p, result.reference, "partially-explicit",
        [&](int) {
          stepper.step();
          return stepper.reconstruct();
        },
        [&](int k) { return stepper.records()[k].iterations; }));
  }

  write_errors_csv(config, result.reports);
  return result;
}

RunReport run_single(const ExperimentConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);
  const ProblemData p = setup_problem(config);
  const FractionalKernel kernel =
      FractionalKernel::make(config.alpha, config.dt(), config.steps);

  RunReport report;
  report.scheme = scheme_name(config.scheme);
  Stopwatch watch;
  double baseline = 0.0;
  auto step_guarded = [&](auto& stepper) {
    try {
      stepper.step();
      return true;
    } catch (const NonlinearError&) {
      report.diverged = true;
      return false;
    } catch (const std::domain_error&) {
      report.diverged = true;
      return false;
    }
  };
  auto guard_and_snapshot = [&](int k, const Vec& fine) {
    if (k == 0) baseline = std::max(baseline, mass_norm(p.mass, fine));
    if (!fine.allFinite() || (baseline > 0.0 &&
                              mass_norm(p.mass, fine) > 1e6 * baseline)) {
      report.diverged = true;
      return false;
    }
    report.steps_completed = k + 1;
    if (want_snapshot(config, k + 1))
      write_snapshot(config, p.mesh, report.scheme, k + 1, fine);
    return true;
  };

  switch (config.scheme) {
    case SchemeChoice::implicit_fine: {
      FineSystem system(p.mesh, p.kappa, p.g0, config.g);
      ImplicitStepper stepper(system, kernel, config.solver,
                              GTreatment::implicit_g,
                              Vec::Zero(p.mesh.interior_count()));
      for (int k = 0; k < config.steps; ++k) {
        if (!step_guarded(stepper)) break;
        report.iterations.push_back(stepper.records().back().iterations);
        if (!guard_and_snapshot(k, stepper.current())) break;
      }
      break;
    }
    case SchemeChoice::explicit_fine: {
      FineSystem system(p.mesh, p.kappa, p.g0, config.g);
      ExplicitStepper stepper(system, kernel, Vec::Zero(p.mesh.interior_count()));
      for (int k = 0; k < config.steps; ++k) {
        if (!step_guarded(stepper)) break;
        report.iterations.push_back(0);
        if (!guard_and_snapshot(k, stepper.current())) break;
      }
      break;
    }
    case SchemeChoice::implicit_cem:
    case SchemeChoice::implicit_cem_plus: {
      const MultiscaleSpace space = obtain_space(config, p);
      Eigen::MatrixXd R = space.R1;
      if (config.scheme == SchemeChoice::implicit_cem_plus) {
        R.conservativeResize(Eigen::NoChange, space.R1.cols() + space.R2.cols());
        R.rightCols(space.R2.cols()) = space.R2;
      }
      ReducedSystem system(p.mesh, p.kappa, p.g0, config.g, std::move(R));
      ImplicitStepper stepper(system, kernel, config.solver,
                              GTreatment::implicit_g, Vec::Zero(system.dim()));
      for (int k = 0; k < config.steps; ++k) {
        if (!step_guarded(stepper)) break;
        report.iterations.push_back(stepper.records().back().iterations);
        if (!guard_and_snapshot(k, system.reconstruct(stepper.current()))) break;
      }
      break;
    }
    case SchemeChoice::partially_explicit: {
      const MultiscaleSpace space = obtain_space(config, p);
      SplitStepper stepper(space,
                           SplitStepper::default_ops(p.mesh, p.kappa, p.g0, config.g),
                           kernel, config.solver, Vec::Zero(space.R1.cols()),
                           Vec::Zero(space.R2.cols()));
      for (int k = 0; k < config.steps; ++k) {
        if (!step_guarded(stepper)) break;
        report.iterations.push_back(stepper.records().back().iterations);
        if (!guard_and_snapshot(k, stepper.reconstruct())) break;
      }
      break;
    }
  }
  report.wall_seconds = watch.seconds();
  return report;
}

std::vector<Vec> curvature_samples(const Mesh& mesh, double range) {
  const DofMap dofs = interior_dof_map(mesh);
  auto bump = [&](double fx, double fy) {
    Vec v(dofs.size());
    for (int i = 0; i < dofs.size(); ++i) {
      const int node = dofs.nodes[i];
      v[i] = std::sin(fx * std::numbers::pi * mesh.node_x(node)) *
             std::sin(fy * std::numbers::pi * mesh.node_y(node));
    }
    return v;
  };
  const Vec b1 = bump(1, 1), b2 = bump(2, 2);
  std::vector<Vec> samples;
  samples.push_back(Vec::Zero(dofs.size()));
  samples.push_back(range * b1);
  samples.push_back(-range * b1);
  samples.push_back(range * b2);
  samples.push_back(0.5 * range * (b1 + b2));
  return samples;
}

StabilityReport analyze_stability(const ExperimentConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);
  const ProblemData p = setup_problem(config);
  const MultiscaleSpace space = obtain_space(config, p);

  ConditionInputs in;
  in.alpha = config.alpha;
  in.dt = config.dt();
  in.gamma = estimate_gamma(space.M11, space.M12, space.M22);
  in.lambda2 = sup_ratio(space.A22, space.M22);
  in.curvature = estimate_curvatures(
      p.mesh, p.kappa.cell, config.f, config.g,
      curvature_samples(p.mesh, config.curvature_range), -config.curvature_range,
      config.curvature_range, &space);
  in.safety = config.f == FKind::linear ? 1.0 : config.safety;
  StabilityReport report = check_condition(in);

  std::ofstream csv(config.output_dir + "/stability.csv");
  csv << report.csv_header() << "\n" << report.csv_row() << "\n";
  return report;
}

KernelCheck run_kernel_checks(double alpha) {
  KernelCheck check;
  {  // exactness on u(t) = t over K = 100 steps
    const int K = 100;
    const double dt = 1.0 / K;
    const FractionalKernel kernel = FractionalKernel::make(alpha, dt, K);
    std::vector<double> samples(K + 1);
    for (int i = 0; i <= K; ++i) samples[i] = i * dt;
    const auto deriv = l1_derivative_scalar(samples, kernel);
    for (int k = 0; k < K; ++k) {
      const double t = (k + 1) * dt;
      const double exact = std::pow(t, 1.0 - alpha) / std::tgamma(2.0 - alpha);
      check.max_rel_err_affine =
          std::max(check.max_rel_err_affine, std::abs(deriv[k] - exact) / exact);
    }
  }
  {  // order on u(t) = t^2 under halving
    std::vector<double> errors;
    for (int K : {40, 80, 160, 320}) {
      const double dt = 1.0 / K;
      const FractionalKernel kernel = FractionalKernel::make(alpha, dt, K);
      std::vector<double> samples(K + 1);
      for (int i = 0; i <= K; ++i) samples[i] = (i * dt) * (i * dt);
      const auto deriv = l1_derivative_scalar(samples, kernel);
      double err = 0.0;
      for (int k = 0; k < K; ++k) {
        const double t = (k + 1) * dt;
        const double exact =
            2.0 * std::pow(t, 2.0 - alpha) / std::tgamma(3.0 - alpha);
        err = std::max(err, std::abs(deriv[k] - exact));
      }
      errors.push_back(err);
    }
    double order = 0.0;
    for (std::size_t i = 0; i + 1 < errors.size(); ++i)
      order += std::log2(errors[i] / errors[i + 1]);
    check.observed_order = order / (errors.size() - 1);
  }
  check.pass = check.max_rel_err_affine <= 1e-12 &&
               std::abs(check.observed_order - (2.0 - alpha)) <= 0.15;
  return check;
}

}  // namespace fracstep
