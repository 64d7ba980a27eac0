#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "gformula/analysis.hpp"
#include "gformula/errors.hpp"

namespace {

int print_findings(const std::vector<gformula::Finding>& findings) {
  int errors = 0;
  for (const auto& f : findings) {
    const bool err = f.level == gformula::Finding::Level::Error;
    errors += err ? 1 : 0;
    std::cerr << (err ? "error" : "warning") << ": " << f.path << ": " << f.message << "\n";
  }
  return errors;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parametric g-formula estimation engine"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool emit_sim_data = false;
  bool rmses = false;

  auto* run = app.add_subcommand("run", "Execute an analysis and write result artifacts");
  run->add_option("config", config_path, "Analysis config file (JSON)")->required();
  run->add_option("--output-dir", output_dir, "Directory for result artifacts");
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--workers", workers, "Worker threads (default: config, then GFORMULA_WORKERS)");
  run->add_flag("--emit-sim-data", emit_sim_data, "Dump simulated trajectories per intervention");
  run->add_flag("--rmses", rmses, "Append per-model RMSE values to the text report");

  auto* validate = app.add_subcommand("validate", "Check a config file and print findings");
  validate->add_option("config", config_path, "Analysis config file (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    gformula::AnalysisConfig cfg = gformula::parse_config_file(config_path);
    if (validate->parsed()) {
      const auto findings = gformula::validate_config(cfg);
      const int errors = print_findings(findings);
      if (errors == 0) std::cout << "config ok (" << findings.size() << " finding(s))\n";
      return errors == 0 ? 0 : 2;
    }

    if (seed) cfg.seed = *seed;
    if (workers) {
      cfg.workers = *workers;
    } else if (const char* env = std::getenv("GFORMULA_WORKERS")) {
      cfg.workers = std::max(1, std::atoi(env));
    }
    if (emit_sim_data) cfg.keep_sim_data = true;
    if (rmses) cfg.rmses = true;

    const auto findings = gformula::validate_config(cfg);
    if (print_findings(findings) > 0) return 2;

    gformula::Plugins plugins;
    const auto result = gformula::run_analysis(cfg, plugins);
    const auto written = gformula::write_artifacts(result, cfg, output_dir);
    std::cout << gformula::render_results_text(result, cfg.rmses);
    for (const auto& p : written) std::cerr << "wrote " << p << "\n";
    return 0;
  } catch (const gformula::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
}
