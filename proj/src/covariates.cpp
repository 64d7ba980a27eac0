#include "gformula/covariates.hpp"

#include <algorithm>
#include <cmath>

#include "gformula/errors.hpp"

namespace gformula {

bool eval_condition(const Condition& c, const Table& table, std::size_t row) {
  const double v = table.get(row, table.column(c.variable));
  switch (c.op) {
    case CmpOp::Eq: return v == c.constant;
    case CmpOp::Ne: return v != c.constant;
    case CmpOp::Lt: return v < c.constant;
    case CmpOp::Le: return v <= c.constant;
    case CmpOp::Gt: return v > c.constant;
    case CmpOp::Ge: return v >= c.constant;
  }
  return false;
}

CmpOp parse_cmp_op(const std::string& s) {
  if (s == "==") return CmpOp::Eq;
  if (s == "!=") return CmpOp::Ne;
  if (s == "<") return CmpOp::Lt;
  if (s == "<=") return CmpOp::Le;
  if (s == ">") return CmpOp::Gt;
  if (s == ">=") return CmpOp::Ge;
  throw ParseError("unknown comparison operator '" + s + "'");
}

std::string cmp_op_name(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "==";
    case CmpOp::Ne: return "!=";
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
  }
  return "?";
}

Link CovariateSpec::effective_link() const {
  if (link) return *link;
  switch (covtype) {
    case Covtype::Binary:
    case Covtype::Absorbing:
      return Link::Logit;
    default:
      return Link::Identity;
  }
}

std::string CovtypeRegistry::register_custom_covtype(const std::string& id, CustomFitFn fit,
                                                     CustomPredictFn predict) {
  if (id.empty()) throw ArgumentError("custom covtype id must be non-empty");
  if (fns_.count(id)) throw ArgumentError("custom covtype '" + id + "' already registered");
  if (!fit || !predict) throw ArgumentError("custom covtype requires both fit and predict plugins");
  fns_[id] = {std::move(fit), std::move(predict)};
  return id;
}

const std::pair<CustomFitFn, CustomPredictFn>& CovtypeRegistry::get(const std::string& id) const {
  auto it = fns_.find(id);
  if (it == fns_.end()) throw NameError("unknown custom covtype '" + id + "'");
  return it->second;
}

int consecutive_missed(const Table& table, std::size_t visit_col, std::size_t subject, int k) {
  if (k < 1) throw ArgumentError("consecutive_missed requires k >= 1");
  const std::size_t base = table.offset(subject);
  int count = 0;
  for (int t = k - 1; t >= 0; --t) {
    if (table.get(base + static_cast<std::size_t>(t), visit_col) == 0.0)
      ++count;
    else
      break;
  }
  return count;
}

int cat_time_category(int k, const std::vector<double>& thresholds) {
  int cat = 0;
  for (double th : thresholds)
    if (static_cast<double>(k) > th) ++cat;
  return cat;
}

std::vector<std::size_t> covariate_fit_rows(const CovariateSpec& spec, const FitContext& ctx) {
  const Table& obs = ctx.obs;
  const std::size_t col = obs.column(spec.name);
  std::optional<std::size_t> visit_col;
  if (spec.visit) visit_col = obs.column(spec.visit->visit_indicator);
  std::optional<std::size_t> self_visit_col;
  int self_s = 0;
  if (auto it = ctx.visit_indicators.find(spec.name); it != ctx.visit_indicators.end()) {
    self_visit_col = col;
    self_s = it->second;
  }

  std::vector<std::size_t> rows;
  for (std::size_t s = 0; s < obs.n_subjects(); ++s) {
    const std::size_t len = obs.length(s);
    const auto kmax = std::min<std::size_t>(len, static_cast<std::size_t>(ctx.time_points));
    for (std::size_t k = 1; k < kmax; ++k) {
      const std::size_t r = obs.row(s, k);
      if (spec.restriction && !eval_condition(spec.restriction->condition, obs, r)) continue;
      if (visit_col && obs.get(r, *visit_col) != 1.0) continue;
      if (spec.covtype == Covtype::Absorbing && obs.get(r - 1, col) != 0.0) continue;
      if (self_visit_col &&
          consecutive_missed(obs, *self_visit_col, s, static_cast<int>(k)) >= self_s)
        continue;
      rows.push_back(r);
    }
  }
  return rows;
}

namespace {

ObservedRange column_range(const Table& obs, std::size_t col) {
  ObservedRange r;
  bool first = true;
  for (std::size_t i = 0; i < obs.n_rows(); ++i) {
    const double v = obs.get(i, col);
    if (std::isnan(v)) continue;
    if (first) {
      r.min = r.max = v;
      first = false;
    } else {
      r.min = std::min(r.min, v);
      r.max = std::max(r.max, v);
    }
  }
  return r;
}

}  // namespace

CovariateBundle fit_covariate(const CovariateSpec& spec, const FitContext& ctx,
                              std::size_t order_index) {
  CovariateBundle b;
  b.spec = spec;
  if (auto it = ctx.visit_indicators.find(spec.name); it != ctx.visit_indicators.end())
    b.visit_force_s = it->second;

  const Table& obs = ctx.obs;
  const std::size_t col = obs.column(spec.name);
  b.range = column_range(obs, col);

  if (spec.covtype == Covtype::CategoricalTime) {
    Levels lv;
    lv.match = Levels::Match::Indexed;
    for (int c = 0; c <= static_cast<int>(spec.cat_time_thresholds.size()); ++c)
      lv.labels.push_back(std::to_string(c));
    b.response_levels = std::move(lv);
    return b;  // deterministic function of time; nothing to fit
  }

  const auto rows = covariate_fit_rows(spec, ctx);
  b.n_fit_rows = rows.size();
  if (rows.empty())
    throw FitError("covariate '" + spec.name +
                   "': no fitting records (restriction/visit conditions exclude every row)");

  if (spec.covtype == Covtype::Custom) {
    b.custom_fitted = ctx.plugins.get(spec.custom_id).first(spec, obs, rows, order_index);
    return b;
  }

  // Degenerate constant covariate: skip the model, simulate the constant.
  if (b.range.constant()) {
    b.constant = true;
    b.constant_value = b.range.min;
    return b;
  }

  if (!spec.formula)
    throw FitError("covariate '" + spec.name + "': covtype requires a model formula");
  b.design = compile_design(*spec.formula, obs, ctx.levels, rows);

  switch (spec.covtype) {
    case Covtype::Binary:
    case Covtype::Absorbing: {
      auto dm = build_design(*b.design, obs, rows);
      b.model = fit_binomial(dm, spec.effective_link());
      break;
    }
    case Covtype::Normal: {
      auto dm = build_design(*b.design, obs, rows);
      b.model = fit_gaussian(dm, spec.effective_link());
      break;
    }
    case Covtype::BoundedNormal: {
      auto dm = build_design(*b.design, obs, rows);
      // Standardize the response to [0,1] by the observed range over all times.
      const double span = b.range.max - b.range.min;
      for (Eigen::Index i = 0; i < dm.response.size(); ++i)
        dm.response(i) = (dm.response(i) - b.range.min) / span;
      b.model = fit_gaussian(dm, spec.effective_link());
      break;
    }
    case Covtype::ZeroInflatedNormal: {
      auto dm = build_design(*b.design, obs, rows);
      Eigen::VectorXd raw = dm.response;
      // Indicator model: probability the value is non-zero.
      for (Eigen::Index i = 0; i < dm.response.size(); ++i)
        dm.response(i) = raw(i) != 0.0 ? 1.0 : 0.0;
      b.zero_design = b.design;
      b.zero_model = fit_binomial(dm, Link::Logit);
      std::vector<std::size_t> pos_rows;
      for (std::size_t i = 0; i < rows.size(); ++i)
        if (raw(static_cast<Eigen::Index>(i)) > 0.0) pos_rows.push_back(rows[i]);
      if (pos_rows.empty())
        throw FitError("covariate '" + spec.name + "': no positive records for the mean component");
      auto dmp = build_design(*b.design, obs, pos_rows);
      b.model = fit_gaussian(dmp, spec.effective_link());
      ObservedRange nr;
      bool first = true;
      for (std::size_t i = 0; i < obs.n_rows(); ++i) {
        const double v = obs.get(i, col);
        if (std::isnan(v) || v == 0.0) continue;
        if (first) {
          nr.min = nr.max = v;
          first = false;
        } else {
          nr.min = std::min(nr.min, v);
          nr.max = std::max(nr.max, v);
        }
      }
      b.nonzero_range = nr;
      break;
    }
    case Covtype::TruncatedNormal: {
      if (!spec.truncation)
        throw FitError("covariate '" + spec.name + "': truncated-normal requires a truncation point");
      auto dm = build_design(*b.design, obs, rows);
      b.model = fit_truncated_normal(dm, spec.truncation->point, spec.truncation->direction);
      break;
    }
    case Covtype::Categorical: {
      if (!ctx.levels.has(spec.name))
        throw FitError("covariate '" + spec.name + "': categorical covtype requires declared levels");
      b.response_levels = ctx.levels.get(spec.name);
      auto dm = build_design(*b.design, obs, rows);
      b.model = fit_multinomial(dm, b.response_levels);
      break;
    }
    default:
      throw FitError("covariate '" + spec.name + "': unsupported covtype");
  }
  return b;
}

SimBinding bind_covariate(const CovariateBundle& bundle, const Table& sim) {
  SimBinding b;
  b.bundle = &bundle;
  b.col = sim.column(bundle.spec.name);
  if (bundle.design) b.rb = std::make_unique<RowBuilder>(*bundle.design, sim);
  if (bundle.zero_design) b.zero_rb = std::make_unique<RowBuilder>(*bundle.zero_design, sim);
  if (bundle.spec.restriction)
    b.restr_col = sim.column(bundle.spec.restriction->condition.variable);
  if (bundle.spec.visit) b.visit_col = sim.column(bundle.spec.visit->visit_indicator);
  if (b.rb) b.scratch.resize(b.rb->width());
  return b;
}

namespace {

double clamp_range(double v, const ObservedRange& r) {
  return std::min(r.max, std::max(r.min, v));
}

double checked_prob(double p, const CovariateSpec& spec, const FittedModel& m) {
  if (!(p >= 0.0 && p <= 1.0))
    throw SimulationError("covariate '" + spec.name + "': predicted probability " +
                          std::to_string(p) + " outside [0,1] (model converged=" +
                          (m.diag.converged ? "true" : "false") +
                          ", iterations=" + std::to_string(m.diag.iterations) + ")");
  return p;
}

}  // namespace

double simulate_covariate(const SimBinding& b, Table& sim, std::size_t row,
                          std::size_t subject_base, int k, RngStream& rng) {
  const CovariateBundle& bundle = *b.bundle;
  const CovariateSpec& spec = bundle.spec;

  // Deterministic knowledge first: restriction, then visit carry-forward.
  if (spec.restriction && !eval_condition(spec.restriction->condition, sim, row)) {
    const double v = spec.restriction->action == Restriction::Action::Assign
                         ? spec.restriction->value
                         : sim.get(row - 1, b.col);
    sim.set(row, b.col, v);
    return v;
  }
  if (b.visit_col && sim.get(row, *b.visit_col) == 0.0) {
    const double v = sim.get(row - 1, b.col);
    sim.set(row, b.col, v);
    return v;
  }
  if (spec.covtype == Covtype::CategoricalTime) {
    const double v = cat_time_category(k, spec.cat_time_thresholds);
    sim.set(row, b.col, v);
    return v;
  }
  if (bundle.constant) {
    sim.set(row, b.col, bundle.constant_value);
    return bundle.constant_value;
  }

  double value = 0.0;
  switch (spec.covtype) {
    case Covtype::Absorbing: {
      if (sim.get(row - 1, b.col) == 1.0) {
        value = 1.0;
        break;
      }
      b.rb->fill(sim, row, b.scratch.data());
      const double p = checked_prob(
          link_inverse(bundle.model->link, bundle.model->linear_predictor(b.scratch.data())),
          spec, *bundle.model);
      value = rng.bernoulli(p) ? 1.0 : 0.0;
      break;
    }
    case Covtype::Binary: {
      // Visit indicators are forced to 1 once s consecutive visits were missed.
      if (bundle.visit_force_s && k >= 1) {
        int missed = 0;
        for (std::size_t r = row; r > subject_base && sim.get(r - 1, b.col) == 0.0; --r) ++missed;
        if (missed >= *bundle.visit_force_s) {
          value = 1.0;
          break;
        }
      }
      b.rb->fill(sim, row, b.scratch.data());
      const double p = checked_prob(
          link_inverse(bundle.model->link, bundle.model->linear_predictor(b.scratch.data())),
          spec, *bundle.model);
      value = rng.bernoulli(p) ? 1.0 : 0.0;
      break;
    }
    case Covtype::Normal: {
      b.rb->fill(sim, row, b.scratch.data());
      const double mean =
          link_inverse(bundle.model->link, bundle.model->linear_predictor(b.scratch.data()));
      const double draw = mean + std::sqrt(bundle.model->residual_mse) * rng.normal();
      value = clamp_range(draw, bundle.range);
      break;
    }
    case Covtype::BoundedNormal: {
      b.rb->fill(sim, row, b.scratch.data());
      const double mean =
          link_inverse(bundle.model->link, bundle.model->linear_predictor(b.scratch.data()));
      double draw = mean + std::sqrt(bundle.model->residual_mse) * rng.normal();
      draw = std::min(1.0, std::max(0.0, draw));  // clamp on the standardized scale
      value = bundle.range.min + draw * (bundle.range.max - bundle.range.min);
      break;
    }
    case Covtype::ZeroInflatedNormal: {
      b.zero_rb->fill(sim, row, b.scratch.data());
      const double p_nonzero = checked_prob(
          link_inverse(bundle.zero_model->link,
                       bundle.zero_model->linear_predictor(b.scratch.data())),
          spec, *bundle.zero_model);
      // Both draws are always consumed so stream positions do not depend on
      // the indicator outcome.
      const bool nonzero = rng.bernoulli(p_nonzero);
      const double z = rng.normal();
      if (nonzero) {
        b.rb->fill(sim, row, b.scratch.data());
        const double mean =
            link_inverse(bundle.model->link, bundle.model->linear_predictor(b.scratch.data()));
        value = clamp_range(mean + std::sqrt(bundle.model->residual_mse) * z,
                            bundle.nonzero_range);
      } else {
        value = 0.0;
      }
      break;
    }
    case Covtype::TruncatedNormal: {
      b.rb->fill(sim, row, b.scratch.data());
      const double mean = bundle.model->linear_predictor(b.scratch.data());
      const double sd = std::sqrt(bundle.model->residual_mse);
      const auto& tr = *bundle.model->truncation;
      const double u = rng.uniform();
      double draw;
      if (!std::isfinite(tr.point)) {
        draw = mean + sd * norm_quantile(std::min(1.0 - 1e-16, std::max(1e-16, u)));
      } else if (tr.direction == TruncationDirection::Left) {
        const double lo = norm_cdf((tr.point - mean) / sd);
        const double uu = std::min(1.0 - 1e-16, std::max(1e-16, lo + u * (1.0 - lo)));
        draw = mean + sd * norm_quantile(uu);
      } else {
        const double hi = norm_cdf((tr.point - mean) / sd);
        const double uu = std::min(1.0 - 1e-16, std::max(1e-16, u * hi));
        draw = mean + sd * norm_quantile(uu);
      }
      value = clamp_range(draw, bundle.range);
      break;
    }
    case Covtype::Categorical: {
      b.rb->fill(sim, row, b.scratch.data());
      bundle.model->predict_probs({b.scratch.data(), b.scratch.size()}, b.probs);
      const double u = rng.uniform();
      double cum = 0.0;
      std::size_t pick = b.probs.size() - 1;
      for (std::size_t c = 0; c < b.probs.size(); ++c) {
        cum += b.probs[c];
        if (u < cum) {
          pick = c;
          break;
        }
      }
      value = static_cast<double>(pick);
      break;
    }
    case Covtype::Custom:
      throw PluginError("custom covtypes are simulated through the engine batch path");
    case Covtype::CategoricalTime:
      break;  // handled above
  }
  sim.set(row, b.col, value);
  return value;
}

}  // namespace gformula
