#pragma once

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "gformula/engine.hpp"
#include "gformula/inference.hpp"

namespace gformula {

struct Finding {
  enum class Level { Error, Warning } level;
  std::string path;
  std::string message;
};

struct InterventionConfig {
  std::string label;
  std::vector<InterventionRule> rules;
};

// A full analysis description: the config file maps 1:1 onto this.
struct AnalysisConfig {
  std::string data_path;
  PanelSchema schema;  // covariate column kinds derived from covtypes
  EngineSpec engine;   // covariates, histories, models, restrictions
  std::vector<InterventionConfig> interventions;
  std::size_t reference = 0;  // 0 = natural course
  std::size_t nsimul = 0;     // 0 -> number of subjects at baseline
  std::size_t nsamples = 0;   // bootstrap replicates
  std::uint64_t seed = 1234;
  int workers = 1;
  bool keep_sim_data = false;
  bool emit_plot_data = true;
  bool rmses = false;
  std::optional<std::pair<std::size_t, std::size_t>> hazard_ratio_pair;
};

AnalysisConfig parse_config(const nlohmann::json& doc);
AnalysisConfig parse_config_file(const std::string& path);

// Cross-reference checks; returns findings instead of throwing.  Hard errors
// (e.g. simulated-data dump combined with bootstrapping) come back as
// Level::Error findings.
std::vector<Finding> validate_config(const AnalysisConfig& cfg);

struct ModelReport {
  std::string name, role, family, link;
  std::vector<std::string> coef_names;
  std::vector<std::vector<double>> coefficients;  // rows: response levels - 1 (1 otherwise)
  std::vector<std::vector<double>> stderrs;
  double rmse = 0.0;
  double residual_mse = std::numeric_limits<double>::quiet_NaN();
  bool converged = true;
  int iterations = 0;
};

struct PlotRow {
  int k;
  std::string quantity;  // "risk" or "mean_<covariate>"
  double nonparametric;
  double parametric;
};

struct HazardRatioReport {
  std::size_t arm0, arm1;
  std::optional<double> value;
  std::optional<double> se, lo, hi;
};

// Everything the artifacts render from; the text table is a rendering of
// these numbers, never a second computation.
struct AnalysisResult {
  OutcomeKind outcome_kind;
  int time_points;
  std::size_t sample_size;
  std::size_t nsimul;
  std::size_t nsamples, effective_samples;
  std::vector<std::string> bootstrap_failures;
  std::uint64_t seed;
  std::size_t reference;
  std::vector<std::string> labels;                 // per intervention, 0 = natural course
  std::vector<std::vector<double>> estimates;      // [intervention][horizon] (eof: one entry)
  std::vector<double> np_natural;                  // per horizon (eof: one entry)
  ContrastTables contrast;
  std::optional<BootstrapResult> bootstrap;
  std::optional<HazardRatioReport> hazard_ratio;
  std::vector<ModelReport> models;
  std::vector<PlotRow> plot_data;
  std::vector<std::string> notes;  // estimation conventions recorded in output
  // Simulated trajectory dumps, one per intervention, when requested.
  std::vector<std::pair<std::string, Table>> sim_dumps;
};

AnalysisResult run_analysis(const AnalysisConfig& cfg, Plugins& plugins);

std::string render_results_text(const AnalysisResult& r, bool with_rmses);
nlohmann::ordered_json results_json(const AnalysisResult& r);
std::string render_plotdata_csv(const AnalysisResult& r);
std::string render_sim_dump_csv(const Table& table, int time_points);

// Writes results.txt, results.json, natural_course_plotdata.csv and optional
// simdata.<index>.csv under `outdir`; returns the list of paths written.
std::vector<std::string> write_artifacts(const AnalysisResult& r, const AnalysisConfig& cfg,
                                         const std::string& outdir);

}  // namespace gformula
