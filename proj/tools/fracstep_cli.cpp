// Command-line driver: field generation, basis construction, single runs,
// the three-scheme comparison, stability analysis, and kernel self-checks.

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>

#include "fracstep/harness.hpp"
#include "fracstep/kernels.hpp"

namespace {

using namespace fracstep;

int cmd_gen_field(const std::string& config_path) {
  const ExperimentConfig config = load_config(config_path);
  std::filesystem::create_directories(config.output_dir);
  const Mesh mesh = build_grid(config.n_coarse, config.refinement);
  const Vec kappa =
      generate_kappa(mesh, config.contrast, config.strikes, config.seed);
  write_cell_grid(config.output_dir + "/kappa.txt", mesh, kappa);
  if (config.source_kind != SourceKind::file) {
    const Vec g0 = make_source(mesh, config.source_kind, config.source_path);
    write_node_grid(config.output_dir + "/source.txt", mesh, g0);
  }
  std::cout << "wrote " << config.output_dir << "/kappa.txt (min="
            << kappa.minCoeff() << ", max=" << kappa.maxCoeff() << ")\n";
  return 0;
}

int cmd_build_basis(const std::string& config_path) {
  const ExperimentConfig config = load_config(config_path);
  if (config.basis_path.empty())
    throw std::runtime_error("build-basis requires space.basis_path in the config");
  const Mesh mesh = build_grid(config.n_coarse, config.refinement);
  const Vec kappa = config.kappa_kind == KappaKind::file
                        ? read_cell_grid(config.kappa_path, mesh)
                        : generate_kappa(mesh, config.contrast, config.strikes,
                                         config.seed);
  const MultiscaleSpace space = build_multiscale_space(mesh, kappa, config.space);
  std::filesystem::create_directories(
      std::filesystem::path(config.basis_path).parent_path().empty()
          ? "."
          : std::filesystem::path(config.basis_path).parent_path().string());
  save_basis(config.basis_path, space);
  std::cout << "wrote basis (" << space.R1.cols() << " + " << space.R2.cols()
            << " columns) to " << config.basis_path << "_basis.txt\n";
  return 0;
}

int cmd_run(const std::string& config_path) {
  const ExperimentConfig config = load_config(config_path);
  const RunReport report = run_single(config);
  std::cout << "scheme=" << report.scheme
            << " steps_completed=" << report.steps_completed
            << " diverged=" << (report.diverged ? 1 : 0)
            << " wall_seconds=" << report.wall_seconds << "\n";
  return report.diverged ? 2 : 0;
}

int cmd_compare(const std::string& config_path) {
  const ExperimentConfig config = load_config(config_path);
  const ComparisonResult result = run_comparison(config);
  for (const auto& report : result.reports) {
    std::cout << report.scheme << ": steps=" << report.steps_completed;
    if (report.steps_completed > 0)
      std::cout << " final_rel_l2=" << report.rel_l2.back()
                << " final_rel_energy=" << report.rel_energy.back();
    std::cout << " diverged=" << (report.diverged ? 1 : 0)
              << " wall_seconds=" << report.wall_seconds << "\n";
  }
  std::cout << "wrote " << config.output_dir << "/errors.csv\n";
  return 0;
}

int cmd_check_stability(const std::string& config_path) {
  const ExperimentConfig config = load_config(config_path);
  const StabilityReport report = analyze_stability(config);
  std::cout << report.text();
  std::cout << "satisfied=" << (report.satisfied ? "yes" : "no")
            << " max_stable_dt=" << report.max_stable_dt << "\n";
  return 0;
}

int cmd_kernel_test(double alpha) {
  const KernelCheck check = run_kernel_checks(alpha);
  std::printf("simd backend: %s\n",
              kernels::isa_name(kernels::active_isa()));
  std::printf("L1 exactness on u=t: max rel err %.3e (tolerance 1e-12) %s\n",
              check.max_rel_err_affine,
              check.max_rel_err_affine <= 1e-12 ? "PASS" : "FAIL");
  std::printf("L1 order on u=t^2: observed %.4f, expected %.4f +/- 0.15 %s\n",
              check.observed_order, 2.0 - alpha,
              std::abs(check.observed_order - (2.0 - alpha)) <= 0.15 ? "PASS"
                                                                     : "FAIL");
  return check.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"time-fractional diffusion-reaction solver on high-contrast media"};
  app.require_subcommand(1);

  std::string config_path;
  double alpha = 0.8;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config path")->required();
  };
  add_config(app.add_subcommand("gen-field", "generate the permeability field"));
  add_config(app.add_subcommand("build-basis", "construct and export the basis"));
  add_config(app.add_subcommand("run", "run the configured scheme"));
  add_config(app.add_subcommand("compare", "three-scheme comparison vs reference"));
  add_config(app.add_subcommand("check-stability", "evaluate the step-size condition"));
  app.add_subcommand("kernel-test", "L1 kernel self-checks")
      ->add_option("--alpha", alpha, "fractional order")
      ->check(CLI::Range(0.01, 0.99));

  CLI11_PARSE(app, argc, argv);

  try {
    const std::string sub = app.get_subcommands().front()->get_name();
    if (sub == "gen-field") return cmd_gen_field(config_path);
    if (sub == "build-basis") return cmd_build_basis(config_path);
    if (sub == "run") return cmd_run(config_path);
    if (sub == "compare") return cmd_compare(config_path);
    if (sub == "check-stability") return cmd_check_stability(config_path);
    if (sub == "kernel-test") return cmd_kernel_test(alpha);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
