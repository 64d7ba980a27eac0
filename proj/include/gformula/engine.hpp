#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gformula/covariates.hpp"
#include "gformula/histories.hpp"
#include "gformula/interventions.hpp"
#include "gformula/panel.hpp"

namespace gformula {

// Outcome (or competing-event) hazard restriction: the model is fit and used
// only where the condition holds; elsewhere the hazard/mean is the value.
struct YRestriction {
  Condition condition;
  double value;
};

struct Plugins {
  HistoryRegistry histories;
  CovtypeRegistry covtypes;
  InterventionRegistry interventions;
};

// Everything describing one analysis besides the data and interventions.
struct EngineSpec {
  OutcomeKind outcome_kind = OutcomeKind::Survival;
  std::vector<CovariateSpec> covariates;  // factorization (simulation) order
  std::vector<std::string> baseline;
  std::vector<HistorySpec> histories;
  ModelFormula ymodel;
  std::optional<ModelFormula> compevent_model;
  std::vector<YRestriction> yrestrictions;
  std::vector<YRestriction> compevent_restrictions;
  int time_points = 0;  // K+1; simulation horizon
};

// Patterns lag<i>_X / lag_cumavg<i>_X referenced anywhere in the model
// formulas force the matching history's max_lag up to i.
void infer_history_lags(EngineSpec& spec);

struct ModelSummary {
  std::string name;  // covariate name, outcome name, or competing-event name
  std::string role;  // "covariate" | "covariate-zero" | "outcome" | "compevent"
  const FittedModel* model;
};

// Output of estimation step 1: fitted covariate bundles, the outcome hazard /
// mean model and the optional competing-event model, plus the prepared
// observed table (histories materialized, categorical-time derived).
struct FittedSuite {
  EngineSpec spec;
  Table obs;  // prepared observed working table
  LevelRegistry levels;
  std::string time_name, id_name, outcome_name;
  std::vector<CovariateBundle> covariates;
  DesignSchema y_design;
  FittedModel y_model;
  std::optional<DesignSchema> comp_design;
  std::optional<FittedModel> comp_model;

  std::vector<ModelSummary> summaries() const;
};

// Prepares the observed working table in place on a copy of data.table():
// derives categorical-time columns and materializes history columns.
Table prepare_observed(const PanelDataset& data, const EngineSpec& spec, const Plugins& plugins);

FittedSuite fit_all(const PanelDataset& data, const EngineSpec& spec, const Plugins& plugins);

struct SimOptions {
  std::size_t nsimul = 0;
  std::uint64_t stream_seed = 0;  // trajectory streams derive from (this, v)
  int workers = 1;
  bool keep_table = false;  // forces the single-threaded path
  std::vector<std::size_t> baseline_sources;  // original-subject index per trajectory
};

// Monte Carlo trajectories under one intervention: per-(v,k) event and
// competing hazards evaluated on assigned treatment, end-of-follow-up
// predicted means, and simulated covariate means per time.
struct SimulationResult {
  std::size_t s = 0;
  int T = 0;
  bool has_compevent = false;
  OutcomeKind outcome_kind = OutcomeKind::Survival;
  std::vector<double> p;         // s*T event hazards (v-major)
  std::vector<double> q;         // s*T competing hazards (empty if absent)
  std::vector<double> eof;       // s predicted means (eof kinds)
  std::vector<double> cov_mean;  // T*ncov simulated covariate means
  std::vector<std::string> cov_names;
  std::optional<Table> table;    // kept when keep_table
};

SimulationResult simulate(const FittedSuite& suite, const InterventionSpec& intervention,
                          const SimOptions& opt, const Plugins& plugins);

// (1/s) sum_v sum_{k<=t} p_kv prod_{j<k} (1-p_jv)(1-q_{j+1,v}).
double risk_estimate(const SimulationResult& r, int t);
std::vector<double> risk_curve(const SimulationResult& r);
// Per-trajectory contributions at horizon t (for Monte Carlo standard errors).
std::vector<double> risk_contributions(const SimulationResult& r, int t);

// (1/s) sum_v mu_v for end-of-follow-up outcomes.
double mean_estimate(const SimulationResult& r);

// Exact g-formula summation over all discrete covariate paths; replaces the
// Monte Carlo entirely.  Requires every covariate draw to be discrete
// (binary/categorical/absorbing/categorical-time, or deterministic custom
// plugins) and a deterministic built-in treatment rule; the natural course
// enumerates treatment under its fitted conditional law.
struct EnumerateResult {
  std::vector<double> risk;  // per horizon (survival)
  double mean = 0.0;         // eof kinds
  std::size_t paths = 0;
};

EnumerateResult enumerate_gformula(const FittedSuite& suite, const InterventionSpec& intervention,
                                   const Plugins& plugins, std::size_t max_paths = 1000000);

}  // namespace gformula
