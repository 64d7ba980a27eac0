#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gformula/engine.hpp"
#include "gformula/errors.hpp"
#include "gformula/np_estimators.hpp"
#include "helpers.hpp"
#include "synth.hpp"

using namespace gformula;
using test_helpers::panel_from_csv;

namespace {

SimulationResult hand_result(const std::vector<double>& p, const std::vector<double>& q) {
  SimulationResult r;
  r.outcome_kind = OutcomeKind::Survival;
  r.s = 1;
  r.T = static_cast<int>(p.size());
  r.p = p;
  r.q = q;
  r.has_compevent = !q.empty();
  return r;
}

}  // namespace

TEST_CASE("risk accumulates geometrically from constant hazards") {
  auto r = hand_result({0.5, 0.5}, {});
  CHECK(risk_estimate(r, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(risk_estimate(r, 1) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_THROWS_AS(risk_estimate(r, 2), BoundsError);
  CHECK_THROWS_AS(risk_estimate(r, -1), BoundsError);

  auto zero = hand_result({0.0, 0.0, 0.0}, {});
  for (int t = 0; t < 3; ++t) CHECK(risk_estimate(zero, t) == 0.0);
}

TEST_CASE("competing hazards discount through the interval of the event") {
  // term_k = p (1-p)^k (1-q)^(k+1)
  const double p = 0.3, q = 0.2;
  auto r = hand_result({p, p, p}, {q, q, q});
  double expect = 0.0;
  for (int k = 0; k < 3; ++k) {
    expect += p * std::pow(1 - p, k) * std::pow(1 - q, k + 1);
    CHECK(risk_estimate(r, k) == doctest::Approx(expect).epsilon(1e-15));
  }
  // Monotone in t and bounded by 1.
  CHECK(risk_estimate(r, 0) <= risk_estimate(r, 1));
  CHECK(risk_estimate(r, 1) <= risk_estimate(r, 2));
  CHECK(risk_estimate(r, 2) <= 1.0);
  auto curve = risk_curve(r);
  for (int k = 0; k < 3; ++k) CHECK(curve[k] == doctest::Approx(risk_estimate(r, k)).epsilon(1e-15));
}

TEST_CASE("mean estimate averages per-trajectory predictions") {
  SimulationResult r;
  r.outcome_kind = OutcomeKind::ContinuousEof;
  r.s = 4;
  r.T = 1;
  r.eof = {2.0, 2.0, 2.0, 2.0};
  CHECK(mean_estimate(r) == 2.0);
  r.eof = {1.0, 2.0, 3.0, 6.0};
  CHECK(mean_estimate(r) == 3.0);
  CHECK_THROWS_AS(risk_estimate(r, 0), ArgumentError);
}

TEST_CASE("history lag inference scans every model formula") {
  EngineSpec spec = synth::null_spec(3);
  spec.ymodel = parse_formula("Y ~ A + lag2_A + L");
  infer_history_lags(spec);
  CHECK(spec.histories[0].max_lag == 2);
  spec.covariates[0].formula = parse_formula("L ~ lag3_L");
  infer_history_lags(spec);
  CHECK(spec.histories[0].max_lag == 3);
}

TEST_CASE("fit_all routes end-of-follow-up fits to the last line only") {
  PanelSchema schema;
  schema.id_name = "id";
  schema.time_name = "t0";
  schema.outcome_name = "Y";
  schema.outcome_kind = OutcomeKind::ContinuousEof;
  schema.covariates = {{"X", ColumnType::Continuous}};
  const char* csv =
      "id,t0,X,Y\n"
      "1,0,1.0,0\n"
      "1,1,2.0,5.5\n"
      "2,0,0.5,0\n"
      "2,1,1.5,4.5\n"
      "3,0,0.0,0\n"
      "3,1,1.0,NA\n";
  auto data = panel_from_csv(csv, schema);

  EngineSpec spec;
  spec.outcome_kind = OutcomeKind::ContinuousEof;
  spec.time_points = 2;
  CovariateSpec x;
  x.name = "X";
  x.covtype = Covtype::Normal;
  x.formula = parse_formula("X ~ 1");
  spec.covariates = {x};
  spec.ymodel = parse_formula("Y ~ 1");
  Plugins plugins;
  auto suite = fit_all(data, spec, plugins);
  CHECK(suite.y_model.n_obs == 2);  // k=K rows with a non-missing outcome
  CHECK(suite.y_model.family == Family::Gaussian);
  CHECK(suite.y_model.coef(0, 0) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK_FALSE(suite.comp_model.has_value());

  // End-of-follow-up outcomes pin time_points to the data's record count.
  spec.time_points = 1;
  CHECK_THROWS_AS(fit_all(data, spec, plugins), FitError);
}

TEST_CASE("fit_all without a competing column fits no competing model") {
  auto data = panel_from_csv(synth::null_csv(3, 300, 3), synth::null_schema());
  Plugins plugins;
  auto suite = fit_all(data, synth::null_spec(3), plugins);
  CHECK_FALSE(suite.comp_model.has_value());
  CHECK(suite.y_model.family == Family::Binomial);
  // lag1_A referenced by the ymodel forced materialization.
  CHECK(suite.obs.has_column("lag1_A"));
  CHECK(suite.obs.has_column("lag1_L"));
}

TEST_CASE("static interventions assign the rule value at every applicable time") {
  auto data = panel_from_csv(synth::null_csv(5, 400, 3), synth::null_schema());
  Plugins plugins;
  auto suite = fit_all(data, synth::null_spec(3), plugins);
  InterventionSpec always{"Always treat", {{"A", StaticRule{{1, 1, 1, 1}}, std::nullopt}}};
  SimOptions opt;
  opt.nsimul = 400;
  opt.stream_seed = 77;
  opt.keep_table = true;
  for (const auto& d : data.resample_baseline(400, 77)) opt.baseline_sources.push_back(d.subject);
  auto sim = simulate(suite, always, opt, plugins);
  REQUIRE(sim.table.has_value());
  const auto& t = *sim.table;
  const std::size_t a = t.column("A");
  const std::size_t na = t.column("natural_A");
  bool all_one = true;
  bool natural_varies = false;
  for (std::size_t r = 0; r < t.n_rows(); ++r) {
    all_one = all_one && t.get(r, a) == 1.0;
    natural_varies = natural_varies || t.get(r, na) == 0.0;
  }
  CHECK(all_one);
  CHECK(natural_varies);  // natural draws kept alongside assigned values
}

TEST_CASE("simulation is bitwise deterministic across worker counts") {
  auto data = panel_from_csv(synth::null_csv(11, 600, 3), synth::null_schema());
  Plugins plugins;
  auto suite = fit_all(data, synth::null_spec(3), plugins);
  InterventionSpec natural = natural_course_spec();
  auto run = [&](int workers) {
    SimOptions opt;
    opt.nsimul = 9000;  // spans multiple reduction blocks
    opt.stream_seed = 2024;
    opt.workers = workers;
    for (const auto& d : data.resample_baseline(9000, 2024))
      opt.baseline_sources.push_back(d.subject);
    return simulate(suite, natural, opt, plugins);
  };
  auto one = run(1);
  auto four = run(4);
  auto eight = run(8);
  CHECK(one.p == four.p);
  CHECK(one.p == eight.p);
  CHECK(one.cov_mean == four.cov_mean);
  CHECK(one.cov_mean == eight.cov_mean);
}

TEST_CASE("intercept-only enumeration matches the closed-form geometric sum") {
  const int K = 3;
  auto data = panel_from_csv(synth::constant_hazard_csv(17, 60, K, 0.3, 0.2),
                             synth::constant_hazard_schema(true));
  Plugins plugins;
  auto suite = fit_all(data, synth::constant_hazard_spec(true, K), plugins);
  const double p = link_inverse(Link::Logit, suite.y_model.coef(0, 0));
  const double q = link_inverse(Link::Logit, suite.comp_model->coef(0, 0));
  auto en = enumerate_gformula(suite, natural_course_spec(), plugins);
  double expect = 0.0;
  for (int k = 0; k <= K; ++k) {
    expect += p * std::pow(1 - p, k) * std::pow(1 - q, k + 1);
    CHECK(en.risk[static_cast<std::size_t>(k)] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("forcing the competing model to zero equals dropping the q term") {
  const int K = 2;
  auto data = panel_from_csv(synth::constant_hazard_csv(19, 80, K, 0.25, 0.15),
                             synth::constant_hazard_schema(true));
  Plugins plugins;
  auto with_q = fit_all(data, synth::constant_hazard_spec(true, K), plugins);
  FittedSuite no_q = with_q;
  no_q.comp_model.reset();
  no_q.comp_design.reset();
  no_q.spec.compevent_model.reset();
  FittedSuite zero_q = with_q;
  zero_q.comp_model->coef(0, 0) = -1e9;  // expit underflows to exactly 0
  auto a = enumerate_gformula(no_q, natural_course_spec(), plugins);
  auto b = enumerate_gformula(zero_q, natural_course_spec(), plugins);
  for (int k = 0; k <= K; ++k)
    CHECK(a.risk[static_cast<std::size_t>(k)] ==
          doctest::Approx(b.risk[static_cast<std::size_t>(k)]).epsilon(1e-14));
}

TEST_CASE("saturated two-timepoint system: enumeration equals the product-limit") {
  auto data = panel_from_csv(synth::twopoint_csv(101, 1500), synth::twopoint_schema());
  Plugins plugins;
  synth::register_composite_plugins(plugins);
  auto suite = fit_all(data, synth::twopoint_spec(), plugins);
  auto en = enumerate_gformula(suite, natural_course_spec(), plugins);
  // Saturated fits reproduce the empirical conditionals, so the plug-in
  // natural course equals the nonparametric benchmark up to fit tolerance.
  CHECK(en.risk[0] == doctest::Approx(product_limit_risk(data, 0)).epsilon(1e-6));
  CHECK(en.risk[1] == doctest::Approx(product_limit_risk(data, 1)).epsilon(1e-6));
}

TEST_CASE("monte carlo at 1e5 trajectories agrees with enumeration within 3 SE") {
  auto data = panel_from_csv(synth::twopoint_csv(202, 1200), synth::twopoint_schema());
  Plugins plugins;
  synth::register_composite_plugins(plugins);
  auto suite = fit_all(data, synth::twopoint_spec(), plugins);

  std::set<int> k1{1};
  std::vector<InterventionSpec> itvs = {
      natural_course_spec(),
      {"Never treat", {{"A", StaticRule{{0, 0}}, k1}}},
      {"Always treat", {{"A", StaticRule{{1, 1}}, k1}}},
  };
  const std::size_t s = 100000;
  SimOptions opt;
  opt.nsimul = s;
  opt.stream_seed = 314;
  opt.workers = 2;
  for (const auto& d : data.resample_baseline(s, 314)) opt.baseline_sources.push_back(d.subject);
  for (const auto& itv : itvs) {
    auto sim = simulate(suite, itv, opt, plugins);
    auto en = enumerate_gformula(suite, itv, plugins);
    for (int t = 0; t < 2; ++t) {
      const auto contrib = risk_contributions(sim, t);
      const double mc = std::accumulate(contrib.begin(), contrib.end(), 0.0) / contrib.size();
      double ss = 0.0;
      for (double c : contrib) ss += (c - mc) * (c - mc);
      const double se = std::sqrt(ss / static_cast<double>(contrib.size() - 1)) /
                        std::sqrt(static_cast<double>(contrib.size()));
      CHECK(std::fabs(mc - en.risk[static_cast<std::size_t>(t)]) < 3 * se + 1e-12);
    }
  }
}

TEST_CASE("natural course simulation reproduces the empirical joint law at k=1") {
  auto data = panel_from_csv(synth::twopoint_csv(303, 1500), synth::twopoint_schema());
  Plugins plugins;
  synth::register_composite_plugins(plugins);
  auto suite = fit_all(data, synth::twopoint_spec(), plugins);
  const std::size_t s = 100000;
  SimOptions opt;
  opt.nsimul = s;
  opt.stream_seed = 99;
  opt.keep_table = true;
  for (const auto& d : data.resample_baseline(s, 99)) opt.baseline_sources.push_back(d.subject);
  auto sim = simulate(suite, natural_course_spec(), opt, plugins);
  REQUIRE(sim.table.has_value());

  // Empirical joint law of (L1, A1) among k=1 records, weighted by survival.
  const auto& obs = data.table();
  double emp[4] = {0, 0, 0, 0};
  double n_at_risk = 0;
  for (std::size_t subj = 0; subj < data.n_subjects(); ++subj) {
    if (obs.length(subj) < 2) continue;
    const std::size_t r = obs.row(subj, 1);
    emp[static_cast<int>(obs.get(r, obs.column("LA")))] += 1;
    n_at_risk += 1;
  }
  const double p_surv_emp = n_at_risk / static_cast<double>(data.n_subjects());
  // Simulated law: P(survive interval 1) * P(LA1 = cell | survived) from the
  // trajectory table, hazard-weighting survival through k=0.
  const auto& t = *sim.table;
  double simj[4] = {0, 0, 0, 0};
  double wsum = 0.0;
  for (std::size_t v = 0; v < s; ++v) {
    const double w = 1.0 - sim.p[v * 2];  // survive interval 1
    simj[static_cast<int>(t.get(t.row(v, 1), t.column("LA")))] += w;
    wsum += w;
  }
  for (int cell = 0; cell < 4; ++cell) {
    const double target = emp[cell] / n_at_risk * p_surv_emp;
    const double got = simj[cell] / static_cast<double>(s);
    const double se = std::sqrt(target * (1 - target) / static_cast<double>(s));
    CHECK(std::fabs(got - target) < 3 * se + 1e-3);
  }
  CHECK(wsum / static_cast<double>(s) == doctest::Approx(p_surv_emp).epsilon(0.02));
}

TEST_CASE("the natural-course estimate converges to the enumeration value in s") {
  auto data = panel_from_csv(synth::twopoint_csv(404, 900), synth::twopoint_schema());
  Plugins plugins;
  synth::register_composite_plugins(plugins);
  auto suite = fit_all(data, synth::twopoint_spec(), plugins);
  const double exact = enumerate_gformula(suite, natural_course_spec(), plugins).risk[1];
  std::vector<double> errs;
  for (std::size_t s : {std::size_t{1000}, std::size_t{10000}, std::size_t{100000}}) {
    SimOptions opt;
    opt.nsimul = s;
    opt.stream_seed = 11;
    for (const auto& d : data.resample_baseline(s, 11)) opt.baseline_sources.push_back(d.subject);
    auto sim = simulate(suite, natural_course_spec(), opt, plugins);
    errs.push_back(std::fabs(risk_estimate(sim, 1) - exact));
  }
  CHECK(errs[2] < errs[0]);
  CHECK(errs[2] < 2e-3);
}

TEST_CASE("saturated system: simulated covariate means match risk-set means") {
  auto data = panel_from_csv(synth::twopoint_csv(505, 1500), synth::twopoint_schema());
  Plugins plugins;
  synth::register_composite_plugins(plugins);
  auto suite = fit_all(data, synth::twopoint_spec(), plugins);
  const std::size_t s = 100000;
  SimOptions opt;
  opt.nsimul = s;
  opt.stream_seed = 21;
  for (const auto& d : data.resample_baseline(s, 21)) opt.baseline_sources.push_back(d.subject);
  auto sim = simulate(suite, natural_course_spec(), opt, plugins);
  // Observed mean of L over the k=1 risk set; simulated means cover every
  // trajectory, so compare against the survival-unweighted simulated mean for
  // the whole-population quantity at k=0 and within tolerance at k=1.
  const auto& obs = data.table();
  const std::size_t lc = obs.column("L");
  double mean0 = 0.0;
  for (auto r : data.risk_set(0)) mean0 += obs.get(r, lc);
  mean0 /= static_cast<double>(data.risk_set(0).size());
  const std::size_t ncov = sim.cov_names.size();
  const double sim_mean0 = sim.cov_mean[0 * ncov + 0];  // L is the first covariate
  const double se0 = std::sqrt(0.25 / static_cast<double>(s));
  CHECK(std::fabs(sim_mean0 - mean0) < 3 * se0 + 1e-9);
}

TEST_CASE("zeroed treatment coefficients make interventions coincide exactly") {
  auto data = panel_from_csv(synth::null_csv(7, 500, 3), synth::null_schema());
  Plugins plugins;
  auto suite = fit_all(data, synth::null_spec(3), plugins);
  // Null the treatment's influence everywhere it can enter.
  auto zero_cols = [&](FittedModel& m, const std::vector<std::string>& names) {
    for (std::size_t j = 0; j < m.coef_names.size(); ++j)
      for (const auto& nm : names)
        if (m.coef_names[j] == nm) m.coef(0, static_cast<Eigen::Index>(j)) = 0.0;
  };
  for (auto& b : suite.covariates)
    if (b.model) zero_cols(*b.model, {"A", "lag1_A"});
  zero_cols(suite.y_model, {"A", "lag1_A"});

  SimOptions opt;
  opt.nsimul = 2000;
  opt.stream_seed = 555;
  for (const auto& d : data.resample_baseline(2000, 555)) opt.baseline_sources.push_back(d.subject);
  InterventionSpec never{"never", {{"A", StaticRule{{0, 0, 0, 0}}, std::nullopt}}};
  InterventionSpec always{"always", {{"A", StaticRule{{1, 1, 1, 1}}, std::nullopt}}};
  auto s0 = simulate(suite, never, opt, plugins);
  auto s1 = simulate(suite, always, opt, plugins);
  CHECK(s0.p == s1.p);  // exact: treatment cannot propagate anywhere
}

TEST_CASE("a custom covtype delegating to the binomial fit matches covtype binary bitwise") {
  auto data = panel_from_csv(synth::null_csv(31, 400, 3), synth::null_schema());

  struct DelegateFit {
    DesignSchema design;
    FittedModel model;
  };
  Plugins plugins;
  plugins.covtypes.register_custom_covtype(
      "binomial_delegate",
      [](const CovariateSpec& spec, const Table& obs, const std::vector<std::size_t>& rows,
         std::size_t) -> std::shared_ptr<void> {
        LevelRegistry levels;
        auto out = std::make_shared<DelegateFit>();
        out->design = compile_design(*spec.formula, obs, levels, rows);
        out->model = fit_binomial(build_design(out->design, obs, rows), Link::Logit);
        return out;
      },
      [](const Table&, const Table& sim, const std::vector<std::size_t>& rows,
         const std::shared_ptr<void>& fitted, const std::string&, int, const std::string&,
         const CovariateSpec&, RowRng& rng, std::vector<double>& out) {
        const auto* fit = static_cast<const DelegateFit*>(fitted.get());
        RowBuilder rb(fit->design, sim);
        std::vector<double> buf(rb.width());
        out.clear();
        for (std::size_t i = 0; i < rows.size(); ++i) {
          rb.fill(sim, rows[i], buf.data());
          const double p =
              link_inverse(fit->model.link, fit->model.linear_predictor(buf.data()));
          out.push_back(rng.uniform(i) < p ? 1.0 : 0.0);
        }
      });

  EngineSpec builtin = synth::null_spec(3);
  EngineSpec delegated = builtin;
  delegated.covariates[0].covtype = Covtype::Custom;
  delegated.covariates[0].custom_id = "binomial_delegate";

  auto run_spec = [&](const EngineSpec& spec) {
    auto suite = fit_all(data, spec, plugins);
    SimOptions opt;
    opt.nsimul = 1200;
    opt.stream_seed = 808;
    for (const auto& d : data.resample_baseline(1200, 808))
      opt.baseline_sources.push_back(d.subject);
    return simulate(suite, natural_course_spec(), opt, plugins);
  };
  auto a = run_spec(builtin);
  auto b = run_spec(delegated);
  CHECK(a.p == b.p);  // identical draws, identical hazards
}

TEST_CASE("a constant custom covtype propagates its value into every row") {
  auto data = panel_from_csv(synth::null_csv(37, 200, 2), synth::null_schema());
  Plugins plugins;
  plugins.covtypes.register_custom_covtype(
      "const7",
      [](const CovariateSpec&, const Table&, const std::vector<std::size_t>&, std::size_t) {
        return std::shared_ptr<void>();
      },
      [](const Table&, const Table&, const std::vector<std::size_t>& rows,
         const std::shared_ptr<void>&, const std::string&, int, const std::string&,
         const CovariateSpec&, RowRng&, std::vector<double>& out) {
        out.assign(rows.size(), 7.0);
      });
  EngineSpec spec = synth::null_spec(2);
  CovariateSpec seven;
  seven.name = "S7";
  seven.covtype = Covtype::Custom;
  seven.custom_id = "const7";
  spec.covariates.push_back(seven);
  spec.ymodel = parse_formula("Y ~ A + L + t0");
  // The observed data lacks S7; give the loader a derived column via a copy.
  PanelSchema schema = synth::null_schema();
  std::string csv = synth::null_csv(37, 200, 2);
  // Rewrite the csv with an S7 column fixed at 7.
  std::istringstream in(csv);
  std::ostringstream os;
  std::string line;
  std::getline(in, line);
  os << line << ",S7\n";
  while (std::getline(in, line)) os << line << ",7\n";
  schema.covariates.push_back({"S7", ColumnType::Continuous});
  std::istringstream in2(os.str());
  auto data7 = PanelDataset::load(in2, schema);

  auto suite = fit_all(data7, spec, plugins);
  SimOptions opt;
  opt.nsimul = 150;
  opt.stream_seed = 3;
  opt.keep_table = true;
  for (const auto& d : data7.resample_baseline(150, 3)) opt.baseline_sources.push_back(d.subject);
  auto sim = simulate(suite, natural_course_spec(), opt, plugins);
  const auto& t = *sim.table;
  const std::size_t c = t.column("S7");
  bool all7 = true;
  for (std::size_t r = 0; r < t.n_rows(); ++r) all7 = all7 && t.get(r, c) == 7.0;
  CHECK(all7);
}

TEST_CASE("custom intervention rules mutate the treatment column in place") {
  auto data = panel_from_csv(synth::null_csv(41, 300, 3), synth::null_schema());
  Plugins plugins;
  // Treat exactly the subjects whose current L is 1; leave others untreated.
  plugins.interventions.register_custom_intervention(
      "treat_if_L", [](Table& sim, const std::vector<std::size_t>& rows, const std::string& var,
                       const std::vector<double>& params, const std::string&, int) {
        const std::size_t a = sim.column(var);
        const std::size_t l = sim.column("L");
        for (auto r : rows) sim.set(r, a, sim.get(r, l) >= params.at(0) ? 1.0 : 0.0);
      });
  auto suite = fit_all(data, synth::null_spec(3), plugins);
  InterventionSpec itv{"treat when L", {{"A", CustomRule{"treat_if_L", {1.0}}, std::nullopt}}};
  SimOptions opt;
  opt.nsimul = 400;
  opt.stream_seed = 17;
  opt.keep_table = true;
  for (const auto& d : data.resample_baseline(400, 17)) opt.baseline_sources.push_back(d.subject);
  auto sim = simulate(suite, itv, opt, plugins);
  const auto& t = *sim.table;
  const std::size_t a = t.column("A"), l = t.column("L");
  bool rule_holds = true;
  for (std::size_t r = 0; r < t.n_rows(); ++r)
    rule_holds = rule_holds && t.get(r, a) == (t.get(r, l) >= 1.0 ? 1.0 : 0.0);
  CHECK(rule_holds);
}

TEST_CASE("enumeration guards its path count and rejects continuous covariates") {
  auto data = panel_from_csv(synth::twopoint_csv(55, 200), synth::twopoint_schema());
  Plugins plugins;
  synth::register_composite_plugins(plugins);
  auto suite = fit_all(data, synth::twopoint_spec(), plugins);
  CHECK_THROWS_AS(enumerate_gformula(suite, natural_course_spec(), plugins, 10), SizeError);

  auto ndata = panel_from_csv(synth::null_csv(3, 200, 2), synth::null_schema());
  EngineSpec nspec = synth::null_spec(2);
  nspec.covariates[0].covtype = Covtype::Normal;  // continuous confounder
  Plugins nplugins;
  auto nsuite = fit_all(ndata, nspec, nplugins);
  CHECK_THROWS_AS(enumerate_gformula(nsuite, natural_course_spec(), nplugins), UnsupportedError);
}

TEST_CASE("categorical-time columns are derived, fitted around, and simulated deterministically") {
  // The tf column does not exist in the input; it is derived from t0 with
  // thresholds {1} and usable inside factor() terms.
  auto data = panel_from_csv(synth::null_csv(29, 400, 3), synth::null_schema());
  EngineSpec spec = synth::null_spec(3);
  CovariateSpec tf;
  tf.name = "tf";
  tf.covtype = Covtype::CategoricalTime;
  tf.cat_time_thresholds = {1.0};
  spec.covariates.insert(spec.covariates.begin(), tf);
  spec.covariates[1].formula = parse_formula("L ~ lag1_L + factor(tf)");
  spec.ymodel = parse_formula("Y ~ A + L + factor(tf)");
  Plugins plugins;
  auto suite = fit_all(data, spec, plugins);
  CHECK(suite.obs.has_column("tf"));
  CHECK(suite.obs.get(suite.obs.row(0, 0), suite.obs.column("tf")) == 0.0);

  SimOptions opt;
  opt.nsimul = 300;
  opt.stream_seed = 4;
  opt.keep_table = true;
  for (const auto& d : data.resample_baseline(300, 4)) opt.baseline_sources.push_back(d.subject);
  auto sim = simulate(suite, natural_course_spec(), opt, plugins);
  const auto& t = *sim.table;
  const std::size_t tfc = t.column("tf");
  bool deterministic = true;
  for (std::size_t v = 0; v < 300; ++v)
    for (std::size_t k = 0; k < 4; ++k)
      deterministic = deterministic && t.get(t.row(v, k), tfc) == (k <= 1 ? 0.0 : 1.0);
  CHECK(deterministic);
}

TEST_CASE("simulated values respect supports over many trajectories") {
  auto data = panel_from_csv(synth::null_csv(23, 400, 3), synth::null_schema());
  Plugins plugins;
  auto suite = fit_all(data, synth::null_spec(3), plugins);
  SimOptions opt;
  opt.nsimul = 5000;
  opt.stream_seed = 8;
  opt.keep_table = true;
  for (const auto& d : data.resample_baseline(5000, 8)) opt.baseline_sources.push_back(d.subject);
  auto sim = simulate(suite, natural_course_spec(), opt, plugins);
  const auto& t = *sim.table;
  bool supports = true;
  for (std::size_t r = 0; r < t.n_rows(); ++r) {
    const double l = t.get(r, t.column("L"));
    const double a = t.get(r, t.column("A"));
    supports = supports && (l == 0.0 || l == 1.0) && (a == 0.0 || a == 1.0);
  }
  CHECK(supports);
  bool hazards_in_range = true;
  for (double p : sim.p) hazards_in_range = hazards_in_range && p >= 0.0 && p <= 1.0;
  CHECK(hazards_in_range);
}
