#include "gformula/engine.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <mutex>
#include <thread>

#include "gformula/errors.hpp"
#include "gformula/np_estimators.hpp"

namespace gformula {

namespace {

constexpr std::size_t kBlock = 4096;  // fixed reduction block, independent of workers

bool parse_history_ref(const std::string& name, bool& is_lagavg, int& lag, std::string& var) {
  auto try_prefix = [&](const char* prefix) -> bool {
    const std::size_t plen = std::strlen(prefix);
    if (name.size() <= plen || name.compare(0, plen, prefix) != 0) return false;
    std::size_t i = plen;
    if (!std::isdigit(static_cast<unsigned char>(name[i]))) return false;
    int v = 0;
    while (i < name.size() && std::isdigit(static_cast<unsigned char>(name[i]))) {
      v = v * 10 + (name[i] - '0');
      ++i;
    }
    if (i >= name.size() || name[i] != '_' || i + 1 >= name.size()) return false;
    lag = v;
    var = name.substr(i + 1);
    return true;
  };
  if (try_prefix("lag_cumavg")) {
    is_lagavg = true;
    return true;
  }
  if (try_prefix("lag")) {
    is_lagavg = false;
    return true;
  }
  return false;
}

}  // namespace

void infer_history_lags(EngineSpec& spec) {
  auto scan = [&](const ModelFormula& f) {
    for (const auto& t : f.terms) {
      bool lagavg = false;
      int lag = 0;
      std::string var;
      if (!parse_history_ref(term_variable(t), lagavg, lag, var)) continue;
      for (auto& h : spec.histories) {
        const bool kind_match =
            (lagavg && h.kind == HistoryKind::Lagavg) || (!lagavg && h.kind == HistoryKind::Lagged);
        if (!kind_match) continue;
        if (std::find(h.variables.begin(), h.variables.end(), var) == h.variables.end()) continue;
        h.max_lag = std::max(h.max_lag, lag);
      }
    }
  };
  for (const auto& c : spec.covariates)
    if (c.formula) scan(*c.formula);
  scan(spec.ymodel);
  if (spec.compevent_model) scan(*spec.compevent_model);
}

Table prepare_observed(const PanelDataset& data, const EngineSpec& spec, const Plugins& plugins) {
  Table t = data.table();
  const std::size_t time_col = data.time_col();
  for (const auto& c : spec.covariates) {
    if (c.covtype != Covtype::CategoricalTime) continue;
    const std::size_t col = t.add_column(c.name);
    for (std::size_t r = 0; r < t.n_rows(); ++r)
      t.set(r, col,
            cat_time_category(static_cast<int>(t.get(r, time_col)), c.cat_time_thresholds));
  }
  materialize_histories(t, spec.histories, plugins.histories, data.schema().time_name,
                        data.schema().id_name);
  return t;
}

std::vector<ModelSummary> FittedSuite::summaries() const {
  std::vector<ModelSummary> out;
  for (const auto& b : covariates) {
    if (b.zero_model) out.push_back({b.spec.name, "covariate-zero", &*b.zero_model});
    if (b.model) out.push_back({b.spec.name, "covariate", &*b.model});
  }
  out.push_back({outcome_name, "outcome", &y_model});
  if (comp_model) out.push_back({spec.compevent_model->response, "compevent", &*comp_model});
  return out;
}

FittedSuite fit_all(const PanelDataset& data, const EngineSpec& spec_in, const Plugins& plugins) {
  FittedSuite suite;
  suite.spec = spec_in;
  infer_history_lags(suite.spec);
  EngineSpec& spec = suite.spec;

  const int max_t = data.max_time();
  if (spec.time_points <= 0) spec.time_points = max_t + 1;
  if (spec.time_points > max_t + 1)
    throw FitError("time_points " + std::to_string(spec.time_points) +
                   " exceeds the data's max records per subject (" + std::to_string(max_t + 1) + ")");
  if (spec.outcome_kind != OutcomeKind::Survival && spec.time_points != max_t + 1)
    throw FitError("time_points cannot be changed for end-of-follow-up outcomes");
  if (spec.outcome_kind != OutcomeKind::Survival && spec.compevent_model)
    throw FitError("competing-event models apply to survival outcomes only");

  suite.time_name = data.schema().time_name;
  suite.id_name = data.schema().id_name;
  suite.outcome_name = data.schema().outcome_name;
  suite.obs = prepare_observed(data, spec, plugins);
  suite.levels = data.levels();
  for (const auto& c : spec.covariates) {
    if (c.covtype != Covtype::CategoricalTime) continue;
    Levels lv;
    lv.match = Levels::Match::Indexed;
    for (int cat = 0; cat <= static_cast<int>(c.cat_time_thresholds.size()); ++cat)
      lv.labels.push_back(std::to_string(cat));
    suite.levels.put(c.name, std::move(lv));
  }

  FitContext ctx{suite.obs, suite.levels, spec.time_points, plugins.covtypes, {}};
  for (const auto& c : spec.covariates) {
    if (!c.visit) continue;
    auto [it, inserted] = ctx.visit_indicators.emplace(c.visit->visit_indicator, c.visit->max_missed);
    if (!inserted && it->second != c.visit->max_missed)
      throw FitError("visit indicator '" + c.visit->visit_indicator +
                     "' linked with inconsistent max_missed values");
  }

  for (std::size_t j = 0; j < spec.covariates.size(); ++j)
    suite.covariates.push_back(fit_covariate(spec.covariates[j], ctx, j));

  const Table& obs = suite.obs;
  auto restricted_rows = [&](const std::vector<YRestriction>& rs, bool eof_only,
                             bool need_outcome) {
    std::vector<std::size_t> rows;
    const auto T = static_cast<std::size_t>(spec.time_points);
    for (std::size_t s = 0; s < obs.n_subjects(); ++s) {
      const std::size_t len = std::min(obs.length(s), T);
      for (std::size_t k = eof_only ? T - 1 : 0; k < len; ++k) {
        const std::size_t r = obs.row(s, k);
        if (need_outcome && std::isnan(obs.get(r, obs.column(suite.outcome_name)))) continue;
        bool ok = true;
        for (const auto& yr : rs)
          if (!eval_condition(yr.condition, obs, r)) {
            ok = false;
            break;
          }
        if (ok) rows.push_back(r);
      }
    }
    return rows;
  };

  const bool survival = spec.outcome_kind == OutcomeKind::Survival;
  const auto yrows = restricted_rows(spec.yrestrictions, !survival, true);
  if (yrows.empty()) throw FitError("outcome model: no fitting records");
  suite.y_design = compile_design(spec.ymodel, obs, suite.levels, yrows);
  {
    auto dm = build_design(suite.y_design, obs, yrows);
    try {
      if (spec.outcome_kind == OutcomeKind::ContinuousEof)
        suite.y_model = fit_gaussian(dm, Link::Identity);
      else
        suite.y_model = fit_binomial(dm, Link::Logit);
    } catch (const Error& e) {
      throw FitError("outcome model '" + suite.outcome_name + "': " + e.what());
    }
  }

  if (survival && spec.compevent_model) {
    const auto crows = restricted_rows(spec.compevent_restrictions, false, false);
    if (crows.empty()) throw FitError("competing-event model: no fitting records");
    suite.comp_design = compile_design(*spec.compevent_model, obs, suite.levels, crows);
    auto dm = build_design(*suite.comp_design, obs, crows);
    try {
      suite.comp_model = fit_binomial(dm, Link::Logit);
    } catch (const Error& e) {
      throw FitError("competing-event model '" + spec.compevent_model->response + "': " + e.what());
    }
  }
  return suite;
}

namespace {

struct ThrowingRowRng final : RowRng {
  double uniform(std::size_t) override {
    throw UnsupportedError("custom covtype draws are not available during exact enumeration");
  }
  double normal(std::size_t) override {
    throw UnsupportedError("custom covtype draws are not available during exact enumeration");
  }
};

struct StreamRowRng final : RowRng {
  std::vector<RngStream>* streams;
  const std::vector<std::size_t>* rows;
  int T;
  std::size_t local_base;
  double uniform(std::size_t i) override {
    return (*streams)[(*rows)[i] / static_cast<std::size_t>(T) - local_base].uniform();
  }
  double normal(std::size_t i) override {
    return (*streams)[(*rows)[i] / static_cast<std::size_t>(T) - local_base].normal();
  }
};

// Shared per-trajectory machinery: the working table, bound models, and
// hazard evaluation used by both the Monte Carlo workers and the enumerator.
struct TrajectoryMachine {
  const FittedSuite& suite;
  const InterventionSpec& itv;
  const Plugins& plugins;
  int T;
  std::size_t capacity;
  Table table;
  std::size_t time_col = 0;
  std::vector<std::size_t> carry_sim, carry_obs;
  std::vector<SimBinding> bindings;
  std::vector<std::optional<std::size_t>> natural_cols;
  std::vector<const InterventionRule*> rules;
  std::optional<RowBuilder> y_rb, comp_rb;
  std::vector<double> ybuf, cbuf;
  bool bound = false;

  TrajectoryMachine(const FittedSuite& st, const InterventionSpec& iv, const Plugins& pl,
                    std::size_t cap)
      : suite(st), itv(iv), plugins(pl), T(st.spec.time_points), capacity(cap) {
    for (const auto& rule : itv.rules) {
      bool found = false;
      for (const auto& c : suite.spec.covariates) found = found || c.name == rule.variable;
      if (!found)
        throw InterventionError("intervention '" + itv.label + "' targets '" + rule.variable +
                                "' which is not a covariate in the simulation order");
      if (const auto* cr = std::get_if<CustomRule>(&rule.rule))
        plugins.interventions.get(cr->plugin_id);  // throws when unknown
    }
    table = Table::uniform(capacity, static_cast<std::size_t>(T));
    table.add_column(suite.time_name);
    time_col = table.column(suite.time_name);
    for (const auto& b : suite.spec.baseline) {
      table.add_column(b);
      carry_sim.push_back(table.column(b));
      carry_obs.push_back(suite.obs.column(b));
    }
    for (const auto& c : suite.spec.covariates) {
      table.add_column(c.name);
      carry_sim.push_back(table.column(c.name));
      carry_obs.push_back(suite.obs.column(c.name));
    }
    for (const auto& c : suite.spec.covariates) {
      if (c.is_treatment) table.add_column("natural_" + c.name);
    }
    for (std::size_t j = 0; j < suite.spec.covariates.size(); ++j) {
      const auto& c = suite.spec.covariates[j];
      natural_cols.push_back(c.is_treatment
                                 ? std::optional<std::size_t>(table.column("natural_" + c.name))
                                 : std::nullopt);
      rules.push_back(itv.rule_for(c.name));
      if (rules.back() && !c.is_treatment)
        throw InterventionError("intervention variable '" + c.name +
                                "' must be flagged as a treatment covariate");
    }
  }

  void init_k0(std::size_t local, std::size_t source_subject) {
    const std::size_t row = local * static_cast<std::size_t>(T);
    const std::size_t src = suite.obs.row(source_subject, 0);
    for (std::size_t m = 0; m < carry_sim.size(); ++m)
      table.set(row, carry_sim[m], suite.obs.get(src, carry_obs[m]));
    table.set(row, time_col, 0.0);
  }

  void carry_forward(std::size_t local, int k) {
    const std::size_t row = local * static_cast<std::size_t>(T) + static_cast<std::size_t>(k);
    for (std::size_t m = 0; m < carry_sim.size(); ++m)
      table.set(row, carry_sim[m], table.get(row - 1, carry_sim[m]));
    table.set(row, time_col, static_cast<double>(k));
  }

  void refresh_histories(int k) {
    for (const auto& h : suite.spec.histories)
      apply_history(table, h, k, plugins.histories, suite.time_name, suite.id_name);
  }

  // Binding requires history/plugin columns to exist; call after the first
  // k=0 row is initialized.
  void ensure_bound() {
    if (bound) return;
    refresh_histories(0);
    for (const auto& b : suite.covariates) bindings.push_back(bind_covariate(b, table));
    y_rb.emplace(suite.y_design, table);
    ybuf.resize(y_rb->width());
    if (suite.comp_design) {
      comp_rb.emplace(*suite.comp_design, table);
      cbuf.resize(comp_rb->width());
    }
    bound = true;
  }

  double eval_y(std::size_t row) {
    for (const auto& yr : suite.spec.yrestrictions)
      if (!eval_condition(yr.condition, table, row)) return yr.value;
    y_rb->fill(table, row, ybuf.data());
    const double v = link_inverse(suite.y_model.link, suite.y_model.linear_predictor(ybuf.data()));
    if (!std::isfinite(v))
      throw SimulationError("outcome model produced a non-finite prediction (converged=" +
                            std::string(suite.y_model.diag.converged ? "true" : "false") + ")");
    return v;
  }

  double eval_q(std::size_t row) {
    if (!comp_rb) return 0.0;
    for (const auto& yr : suite.spec.compevent_restrictions)
      if (!eval_condition(yr.condition, table, row)) return yr.value;
    comp_rb->fill(table, row, cbuf.data());
    const double v =
        link_inverse(suite.comp_model->link, suite.comp_model->linear_predictor(cbuf.data()));
    if (!std::isfinite(v))
      throw SimulationError("competing-event model produced a non-finite prediction");
    return v;
  }
};

// One worker's Monte Carlo pass over fixed trajectory blocks.
struct SimWorker {
  TrajectoryMachine mach;
  std::uint64_t seed;
  std::vector<RngStream> streams;
  std::vector<std::vector<GraceTracker>> trackers;  // per covariate with a grace rule
  std::vector<double> plugin_out;
  std::vector<std::size_t> plugin_rows;

  SimWorker(const FittedSuite& st, const InterventionSpec& iv, const Plugins& pl,
            std::size_t capacity, std::uint64_t sd)
      : mach(st, iv, pl, capacity), seed(sd) {
    trackers.resize(mach.rules.size());
  }

  // Simulates trajectories [v0, v1) into table rows starting at local
  // trajectory index `base` (0 for per-block scratch tables, v0 when the full
  // table is kept).
  void run_block(std::size_t v0, std::size_t v1, std::size_t base,
                 const std::vector<std::size_t>& sources, SimulationResult& res,
                 double* cov_sums) {
    const std::size_t n = v1 - v0;
    const auto T = static_cast<std::size_t>(mach.T);
    streams.clear();
    streams.reserve(n);
    for (std::size_t v = v0; v < v1; ++v)
      streams.emplace_back(mix_seed({seed, rng_tag::kTrajectory, v}));
    for (std::size_t j = 0; j < mach.rules.size(); ++j)
      if (mach.rules[j] && std::holds_alternative<GracePeriodRule>(mach.rules[j]->rule))
        trackers[j].assign(n, GraceTracker{});

    for (std::size_t i = 0; i < n; ++i) mach.init_k0(base + i, sources[v0 + i]);
    mach.ensure_bound();

    const auto& covs = mach.suite.spec.covariates;
    for (int k = 0; k < mach.T; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      if (k > 0)
        for (std::size_t i = 0; i < n; ++i) mach.carry_forward(base + i, k);
      for (std::size_t j = 0; j < covs.size(); ++j) {
        mach.refresh_histories(k);
        const auto& binding = mach.bindings[j];
        if (k > 0) {
          if (covs[j].covtype == Covtype::Custom) {
            simulate_custom(j, k, base, n);
          } else {
            for (std::size_t i = 0; i < n; ++i)
              simulate_covariate(binding, mach.table, (base + i) * T + uk, (base + i) * T, k,
                                 streams[i]);
          }
        }
        if (mach.natural_cols[j]) {
          const std::size_t ncol = *mach.natural_cols[j];
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t row = (base + i) * T + uk;
            mach.table.set(row, ncol, mach.table.get(row, binding.col));
          }
          const InterventionRule* rule = mach.rules[j];
          if (rule && rule->applies_at(k)) {
            if (const auto* cr = std::get_if<CustomRule>(&rule->rule)) {
              plugin_rows.clear();
              for (std::size_t i = 0; i < n; ++i) plugin_rows.push_back((base + i) * T + uk);
              mach.plugins.interventions.get(cr->plugin_id)(
                  mach.table, plugin_rows, rule->variable, cr->parameters, mach.suite.time_name, k);
            } else {
              for (std::size_t i = 0; i < n; ++i) {
                const std::size_t row = (base + i) * T + uk;
                GraceTracker dummy;
                GraceTracker& tr = trackers[j].empty() ? dummy : trackers[j][i];
                const double natural = mach.table.get(row, binding.col);
                mach.table.set(row, binding.col,
                               apply_rule(rule->rule, natural, tr, k, mach.table, row));
              }
            }
          }
        }
      }
      mach.refresh_histories(k);
      const bool survival = mach.suite.spec.outcome_kind == OutcomeKind::Survival;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t row = (base + i) * T + uk;
        if (survival) {
          res.p[(v0 + i) * T + uk] = mach.eval_y(row);
          if (mach.comp_rb) res.q[(v0 + i) * T + uk] = mach.eval_q(row);
        } else if (k + 1 == mach.T) {
          res.eof[v0 + i] = mach.eval_y(row);
        }
      }
    }

    // Per-block simulated covariate sums, reduced later in block order.
    for (std::size_t k = 0; k < T; ++k)
      for (std::size_t j = 0; j < covs.size(); ++j) {
        double sum = 0.0;
        const std::size_t col = mach.bindings[j].col;
        for (std::size_t i = 0; i < n; ++i) sum += mach.table.get((base + i) * T + k, col);
        cov_sums[k * covs.size() + j] += sum;
      }
  }

  void simulate_custom(std::size_t j, int k, std::size_t base, std::size_t n) {
    const auto T = static_cast<std::size_t>(mach.T);
    const auto uk = static_cast<std::size_t>(k);
    const auto& binding = mach.bindings[j];
    const auto& spec = mach.suite.covariates[j].spec;
    plugin_rows.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t row = (base + i) * T + uk;
      if (spec.restriction && !eval_condition(spec.restriction->condition, mach.table, row)) {
        const double v = spec.restriction->action == Restriction::Action::Assign
                             ? spec.restriction->value
                             : mach.table.get(row - 1, binding.col);
        mach.table.set(row, binding.col, v);
        continue;
      }
      if (binding.visit_col && mach.table.get(row, *binding.visit_col) == 0.0) {
        mach.table.set(row, binding.col, mach.table.get(row - 1, binding.col));
        continue;
      }
      plugin_rows.push_back(row);
    }
    if (plugin_rows.empty()) return;
    StreamRowRng rr;
    rr.streams = &streams;
    rr.rows = &plugin_rows;
    rr.T = mach.T;
    rr.local_base = base;
    plugin_out.clear();
    mach.plugins.covtypes.get(spec.custom_id)
        .second(mach.suite.obs, mach.table, plugin_rows, mach.suite.covariates[j].custom_fitted,
                mach.suite.time_name, k, spec.name, spec, rr, plugin_out);
    if (plugin_out.size() != plugin_rows.size())
      throw PluginError("custom covtype '" + spec.custom_id + "' returned " +
                        std::to_string(plugin_out.size()) + " values for " +
                        std::to_string(plugin_rows.size()) + " rows");
    for (std::size_t i = 0; i < plugin_rows.size(); ++i)
      mach.table.set(plugin_rows[i], binding.col, plugin_out[i]);
  }
};

}  // namespace

SimulationResult simulate(const FittedSuite& suite, const InterventionSpec& intervention,
                          const SimOptions& opt, const Plugins& plugins) {
  const auto T = static_cast<std::size_t>(suite.spec.time_points);
  const std::size_t s = opt.nsimul;
  if (s == 0) throw ArgumentError("simulate: nsimul must be >= 1");
  if (opt.baseline_sources.size() != s)
    throw ArgumentError("simulate: baseline_sources must have one entry per trajectory");

  SimulationResult res;
  res.s = s;
  res.T = suite.spec.time_points;
  res.outcome_kind = suite.spec.outcome_kind;
  res.has_compevent = suite.comp_model.has_value();
  const bool survival = suite.spec.outcome_kind == OutcomeKind::Survival;
  if (survival) {
    res.p.assign(s * T, 0.0);
    if (res.has_compevent) res.q.assign(s * T, 0.0);
  } else {
    res.eof.assign(s, 0.0);
  }
  const std::size_t ncov = suite.spec.covariates.size();
  for (const auto& c : suite.spec.covariates) res.cov_names.push_back(c.name);

  const std::size_t n_blocks = (s + kBlock - 1) / kBlock;
  std::vector<double> block_sums(n_blocks * T * ncov, 0.0);

  if (opt.keep_table || opt.workers <= 1 || s <= kBlock) {
    // Single-threaded path; when the table is kept it spans every trajectory.
    SimWorker worker(suite, intervention, plugins, opt.keep_table ? s : std::min(s, kBlock),
                     opt.stream_seed);
    for (std::size_t b = 0; b < n_blocks; ++b) {
      const std::size_t v0 = b * kBlock;
      const std::size_t v1 = std::min(s, v0 + kBlock);
      worker.run_block(v0, v1, opt.keep_table ? v0 : 0, opt.baseline_sources, res,
                       &block_sums[b * T * ncov]);
    }
    if (opt.keep_table) res.table = std::move(worker.mach.table);
  } else {
    const auto W = static_cast<std::size_t>(opt.workers);
    std::vector<std::thread> threads;
    std::mutex err_mutex;
    std::exception_ptr first_error;
    for (std::size_t w = 0; w < W; ++w) {
      threads.emplace_back([&, w]() {
        try {
          SimWorker worker(suite, intervention, plugins, std::min(s, kBlock), opt.stream_seed);
          for (std::size_t b = w; b < n_blocks; b += W) {
            const std::size_t v0 = b * kBlock;
            const std::size_t v1 = std::min(s, v0 + kBlock);
            worker.run_block(v0, v1, 0, opt.baseline_sources, res, &block_sums[b * T * ncov]);
          }
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  res.cov_mean.assign(T * ncov, 0.0);
  for (std::size_t b = 0; b < n_blocks; ++b)
    for (std::size_t i = 0; i < T * ncov; ++i) res.cov_mean[i] += block_sums[b * T * ncov + i];
  for (auto& v : res.cov_mean) v /= static_cast<double>(s);
  return res;
}

// Per-trajectory accumulation: term_k = p_k * prod_{j<k}(1-p_j) *
// prod_{j<=k}(1-q_j) -- competing-event survival through the interval of the
// event, so constant hazards give sum_k p (1-p)^k (1-q)^(k+1).
double risk_estimate(const SimulationResult& r, int t) {
  if (r.outcome_kind != OutcomeKind::Survival)
    throw ArgumentError("risk_estimate requires a survival outcome");
  if (t < 0 || t >= r.T)
    throw BoundsError("risk horizon t=" + std::to_string(t) + " outside [0, " +
                      std::to_string(r.T - 1) + "]");
  double total = 0.0;
  const auto T = static_cast<std::size_t>(r.T);
  for (std::size_t v = 0; v < r.s; ++v) {
    double surv = 1.0;
    double acc = 0.0;
    for (int k = 0; k <= t; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      if (k > 0) surv *= 1.0 - r.p[v * T + uk - 1];
      if (!r.q.empty()) surv *= 1.0 - r.q[v * T + uk];
      acc += r.p[v * T + uk] * surv;
    }
    total += acc;
  }
  return total / static_cast<double>(r.s);
}

std::vector<double> risk_contributions(const SimulationResult& r, int t) {
  if (t < 0 || t >= r.T) throw BoundsError("risk horizon out of range");
  std::vector<double> out(r.s);
  const auto T = static_cast<std::size_t>(r.T);
  for (std::size_t v = 0; v < r.s; ++v) {
    double surv = 1.0;
    double acc = 0.0;
    for (int k = 0; k <= t; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      if (k > 0) surv *= 1.0 - r.p[v * T + uk - 1];
      if (!r.q.empty()) surv *= 1.0 - r.q[v * T + uk];
      acc += r.p[v * T + uk] * surv;
    }
    out[v] = acc;
  }
  return out;
}

std::vector<double> risk_curve(const SimulationResult& r) {
  if (r.outcome_kind != OutcomeKind::Survival)
    throw ArgumentError("risk_curve requires a survival outcome");
  std::vector<double> out(static_cast<std::size_t>(r.T), 0.0);
  const auto T = static_cast<std::size_t>(r.T);
  for (std::size_t v = 0; v < r.s; ++v) {
    double surv = 1.0;
    for (std::size_t k = 0; k < T; ++k) {
      if (k > 0) surv *= 1.0 - r.p[v * T + k - 1];
      if (!r.q.empty()) surv *= 1.0 - r.q[v * T + k];
      out[k] += r.p[v * T + k] * surv;
    }
  }
  double cum = 0.0;
  for (auto& v : out) {
    cum += v / static_cast<double>(r.s);
    v = cum;
  }
  return out;
}

double mean_estimate(const SimulationResult& r) {
  if (r.outcome_kind == OutcomeKind::Survival)
    throw ArgumentError("mean_estimate requires an end-of-follow-up outcome");
  double total = 0.0;
  for (double v : r.eof) total += v;
  return total / static_cast<double>(r.s);
}

namespace {

// Exact summation over all discrete covariate paths for one subject at a
// time; mirrors the Monte Carlo step semantics exactly (carry-forward row
// initialization, per-step history refresh, assigned-treatment hazards).
struct Enumerator {
  TrajectoryMachine mach;
  std::size_t max_paths;
  std::vector<double> risk;
  double mean = 0.0;
  std::size_t paths = 0;
  std::vector<GraceTracker> trackers;
  ThrowingRowRng norng;
  std::vector<std::pair<double, double>> branch_buf;

  Enumerator(const FittedSuite& st, const InterventionSpec& iv, const Plugins& pl,
             std::size_t maxp)
      : mach(st, iv, pl, 1), max_paths(maxp) {
    risk.assign(static_cast<std::size_t>(mach.T), 0.0);
    trackers.resize(mach.rules.size());
    for (std::size_t j = 0; j < mach.suite.spec.covariates.size(); ++j) {
      switch (mach.suite.spec.covariates[j].covtype) {
        case Covtype::Normal:
        case Covtype::BoundedNormal:
        case Covtype::ZeroInflatedNormal:
        case Covtype::TruncatedNormal:
          throw UnsupportedError("enumerate_gformula: continuous covariate '" +
                                 mach.suite.spec.covariates[j].name + "' present");
        default:
          break;
      }
      if (mach.rules[j] && std::holds_alternative<CustomRule>(mach.rules[j]->rule))
        throw UnsupportedError("enumerate_gformula: custom intervention rules are not enumerable");
    }
  }

  void subject(std::size_t s) {
    mach.init_k0(0, s);
    mach.ensure_bound();
    for (auto& t : trackers) t = GraceTracker{};
    // Treatment rules still apply at k=0 on the copied observed values.
    mach.refresh_histories(0);
    for (std::size_t j = 0; j < mach.rules.size(); ++j) {
      if (!mach.natural_cols[j]) continue;
      const std::size_t row = 0;
      const double natural = mach.table.get(row, mach.bindings[j].col);
      mach.table.set(row, *mach.natural_cols[j], natural);
      const InterventionRule* rule = mach.rules[j];
      if (rule && rule->applies_at(0))
        mach.table.set(row, mach.bindings[j].col,
                       apply_rule(rule->rule, natural, trackers[j], 0, mach.table, row));
    }
    hazard_step(0, 1.0, 1.0, 0.0);
  }

  void hazard_step(int k, double weight, double surv_prev, double p_prev) {
    mach.refresh_histories(k);
    const auto row = static_cast<std::size_t>(k);
    const bool survival = mach.suite.spec.outcome_kind == OutcomeKind::Survival;
    double surv = surv_prev;
    if (survival) {
      const double p = mach.eval_y(row);
      const double q = mach.comp_rb ? mach.eval_q(row) : 0.0;
      surv = (k > 0 ? surv_prev * (1.0 - p_prev) : 1.0) * (1.0 - q);
      risk[static_cast<std::size_t>(k)] += weight * p * surv;
      if (k + 1 == mach.T) {
        leaf();
        return;
      }
      cov_step(k + 1, 0, weight, surv, p);
    } else {
      if (k + 1 == mach.T) {
        mean += weight * mach.eval_y(row);
        leaf();
        return;
      }
      cov_step(k + 1, 0, weight, 1.0, 0.0);
    }
  }

  void leaf() {
    if (++paths > max_paths)
      throw SizeError("enumerate_gformula: path count exceeds the guard of " +
                      std::to_string(max_paths));
  }

  void cov_step(int k, std::size_t j, double weight, double surv, double p_prev) {
    const auto row = static_cast<std::size_t>(k);
    const auto& covs = mach.suite.spec.covariates;
    // Restore the carry-forward initialization for not-yet-drawn covariates so
    // stale reads match the Monte Carlo exactly on every branch.
    if (j == 0) mach.table.set(row, mach.time_col, static_cast<double>(k));
    for (std::size_t jj = j; jj < covs.size(); ++jj) {
      const std::size_t c = mach.bindings[jj].col;
      mach.table.set(row, c, mach.table.get(row - 1, c));
    }
    for (const auto& b : mach.suite.spec.baseline) {
      const std::size_t c = mach.table.column(b);
      mach.table.set(row, c, mach.table.get(row - 1, c));
    }
    if (j == covs.size()) {
      hazard_step(k, weight, surv, p_prev);
      return;
    }
    mach.refresh_histories(k);

    const InterventionRule* rule = mach.rules[j];
    const bool ruled = rule && rule->applies_at(k);
    // Deterministic static rules do not depend on the natural draw, so the
    // draw marginalizes out and a single branch suffices.
    if (ruled && std::holds_alternative<StaticRule>(rule->rule)) {
      const double assigned =
          std::get<StaticRule>(rule->rule).values[static_cast<std::size_t>(k)];
      if (mach.natural_cols[j]) mach.table.set(row, *mach.natural_cols[j], assigned);
      mach.table.set(row, mach.bindings[j].col, assigned);
      cov_step(k, j + 1, weight, surv, p_prev);
      return;
    }

    auto branches = branch_values(j, k, row);
    for (const auto& [value, prob] : branches) {
      if (prob <= 0.0) continue;
      mach.table.set(row, mach.bindings[j].col, value);
      GraceTracker saved;
      if (mach.natural_cols[j]) {
        mach.table.set(row, *mach.natural_cols[j], value);
        if (ruled) {
          saved = trackers[j];
          mach.table.set(row, mach.bindings[j].col,
                         apply_rule(rule->rule, value, trackers[j], k, mach.table, row));
        }
      }
      cov_step(k, j + 1, weight * prob, surv, p_prev);
      if (mach.natural_cols[j] && ruled) trackers[j] = saved;
      // Restore the carry value consumed by deeper branches of this column.
      mach.table.set(row, mach.bindings[j].col, mach.table.get(row - 1, mach.bindings[j].col));
    }
  }

  std::vector<std::pair<double, double>> branch_values(std::size_t j, int k, std::size_t row) {
    const auto& binding = mach.bindings[j];
    const auto& bundle = mach.suite.covariates[j];
    const auto& spec = bundle.spec;
    std::vector<std::pair<double, double>> out;
    if (spec.restriction && !eval_condition(spec.restriction->condition, mach.table, row)) {
      const double v = spec.restriction->action == Restriction::Action::Assign
                           ? spec.restriction->value
                           : mach.table.get(row - 1, binding.col);
      out.emplace_back(v, 1.0);
      return out;
    }
    if (binding.visit_col && mach.table.get(row, *binding.visit_col) == 0.0) {
      out.emplace_back(mach.table.get(row - 1, binding.col), 1.0);
      return out;
    }
    if (spec.covtype == Covtype::CategoricalTime) {
      out.emplace_back(cat_time_category(k, spec.cat_time_thresholds), 1.0);
      return out;
    }
    if (bundle.constant) {
      out.emplace_back(bundle.constant_value, 1.0);
      return out;
    }
    switch (spec.covtype) {
      case Covtype::Absorbing: {
        if (mach.table.get(row - 1, binding.col) == 1.0) {
          out.emplace_back(1.0, 1.0);
          return out;
        }
        binding.rb->fill(mach.table, row, binding.scratch.data());
        const double p = link_inverse(bundle.model->link,
                                      bundle.model->linear_predictor(binding.scratch.data()));
        out.emplace_back(0.0, 1.0 - p);
        out.emplace_back(1.0, p);
        return out;
      }
      case Covtype::Binary: {
        if (bundle.visit_force_s && k >= 1) {
          int missed = 0;
          const std::size_t base = row - static_cast<std::size_t>(k);
          for (std::size_t r = row; r > base && mach.table.get(r - 1, binding.col) == 0.0; --r)
            ++missed;
          if (missed >= *bundle.visit_force_s) {
            out.emplace_back(1.0, 1.0);
            return out;
          }
        }
        binding.rb->fill(mach.table, row, binding.scratch.data());
        const double p = link_inverse(bundle.model->link,
                                      bundle.model->linear_predictor(binding.scratch.data()));
        out.emplace_back(0.0, 1.0 - p);
        out.emplace_back(1.0, p);
        return out;
      }
      case Covtype::Categorical: {
        binding.rb->fill(mach.table, row, binding.scratch.data());
        bundle.model->predict_probs({binding.scratch.data(), binding.scratch.size()},
                                    binding.probs);
        for (std::size_t c = 0; c < binding.probs.size(); ++c)
          out.emplace_back(static_cast<double>(c), binding.probs[c]);
        return out;
      }
      case Covtype::Custom: {
        std::vector<std::size_t> rows{row};
        std::vector<double> vals;
        mach.plugins.covtypes.get(spec.custom_id)
            .second(mach.suite.obs, mach.table, rows, bundle.custom_fitted, mach.suite.time_name,
                    k, spec.name, spec, norng, vals);
        if (vals.size() != 1)
          throw PluginError("custom covtype '" + spec.custom_id + "' returned " +
                            std::to_string(vals.size()) + " values for 1 row");
        out.emplace_back(vals[0], 1.0);
        return out;
      }
      default:
        throw UnsupportedError("enumerate_gformula: covtype of '" + spec.name +
                               "' is not enumerable");
    }
  }
};

}  // namespace

EnumerateResult enumerate_gformula(const FittedSuite& suite, const InterventionSpec& intervention,
                                   const Plugins& plugins, std::size_t max_paths) {
  Enumerator en(suite, intervention, plugins, max_paths);
  const std::size_t n = suite.obs.n_subjects();
  for (std::size_t s = 0; s < n; ++s) en.subject(s);
  EnumerateResult res;
  res.paths = en.paths;
  res.mean = en.mean / static_cast<double>(n);
  res.risk.resize(en.risk.size());
  double cum = 0.0;
  for (std::size_t k = 0; k < en.risk.size(); ++k) {
    cum += en.risk[k] / static_cast<double>(n);
    res.risk[k] = cum;
  }
  return res;
}

}  // namespace gformula
