#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gformula/engine.hpp"
#include "gformula/panel.hpp"

namespace gformula {

// Per-run point estimates handed through the bootstrap: one estimate vector
// per intervention (risks by horizon for survival; a single end-of-follow-up
// mean otherwise), plus the optional hazard ratio.
struct RunEstimates {
  std::vector<std::vector<double>> estimates;
  std::optional<double> hazard_ratio;
};

// Ratio and difference tables versus the reference intervention; ratios are
// NaN where the reference estimate is zero, differences always computed.
struct ContrastTables {
  std::vector<std::vector<double>> ratio;
  std::vector<std::vector<double>> difference;
};

ContrastTables contrasts(const std::vector<std::vector<double>>& estimates, std::size_t reference);

// Nearest-rank percentile: the ceil(q*n)-th order statistic (1-indexed).
double quantile_nearest_rank(std::vector<double> values, double q);

using RunClosure = std::function<RunEstimates(const PanelDataset& data, std::uint64_t run_seed)>;

// Percentile bootstrap over the whole pipeline: subjects resampled with
// replacement n-out-of-n per replicate, replicate b's rng derived from
// (seed, b), replicates that fail are logged and excluded.
struct BootstrapResult {
  std::size_t requested = 0;
  std::size_t effective = 0;
  std::vector<std::string> failures;
  // [intervention][horizon]
  std::vector<std::vector<double>> se, lo, hi;
  std::vector<std::vector<double>> ratio_se, ratio_lo, ratio_hi;
  std::vector<std::vector<double>> diff_se, diff_lo, diff_hi;
  std::optional<double> hr_se, hr_lo, hr_hi;
};

BootstrapResult bootstrap(const PanelDataset& data, const RunClosure& run, std::size_t B,
                          std::uint64_t seed, int workers, std::size_t reference);

// Hazard ratio comparing two simulated arms: one Bernoulli event-time
// realization per trajectory from its predicted hazards (trajectory censored
// at its first event of interest), both arms stacked with a group indicator,
// and a pooled-over-time logistic fit of event ~ group + factor(time).
// Competing-event realizations follow the subdistribution convention:
// competing failures stay in later risk sets with the event impossible.
// Returns nullopt when either arm has no realized events.
std::optional<double> hazard_ratio(const SimulationResult& arm0, const SimulationResult& arm1,
                                   std::uint64_t stream_seed);

}  // namespace gformula
