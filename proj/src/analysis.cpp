#include "gformula/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "gformula/errors.hpp"
#include "gformula/np_estimators.hpp"

namespace gformula {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path + ": " + msg);
}

const json& need(const json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key)) fail(path, "missing required field '" + key + "'");
  return j.at(key);
}

std::string need_string(const json& j, const std::string& key, const std::string& path) {
  const json& v = need(j, key, path);
  if (!v.is_string()) fail(path + "." + key, "expected a string");
  return v.get<std::string>();
}

double json_number(const json& v, const std::string& path) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "+inf" || s == "Inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf" || s == "-Inf") return -std::numeric_limits<double>::infinity();
  }
  fail(path, "expected a number (or \"inf\"/\"-inf\")");
}

Covtype parse_covtype(const std::string& s, const std::string& path) {
  if (s == "binary") return Covtype::Binary;
  if (s == "normal") return Covtype::Normal;
  if (s == "categorical") return Covtype::Categorical;
  if (s == "bounded normal") return Covtype::BoundedNormal;
  if (s == "zero-inflated normal") return Covtype::ZeroInflatedNormal;
  if (s == "truncated normal") return Covtype::TruncatedNormal;
  if (s == "absorbing") return Covtype::Absorbing;
  if (s == "categorical time") return Covtype::CategoricalTime;
  if (s == "custom") return Covtype::Custom;
  fail(path, "unknown covtype '" + s + "'");
}

std::string covtype_name(Covtype t) {
  switch (t) {
    case Covtype::Binary: return "binary";
    case Covtype::Normal: return "normal";
    case Covtype::Categorical: return "categorical";
    case Covtype::BoundedNormal: return "bounded normal";
    case Covtype::ZeroInflatedNormal: return "zero-inflated normal";
    case Covtype::TruncatedNormal: return "truncated normal";
    case Covtype::Absorbing: return "absorbing";
    case Covtype::CategoricalTime: return "categorical time";
    case Covtype::Custom: return "custom";
  }
  return "?";
}

Link parse_link(const std::string& s, const std::string& path) {
  if (s == "logit") return Link::Logit;
  if (s == "probit") return Link::Probit;
  if (s == "identity") return Link::Identity;
  if (s == "log") return Link::Log;
  fail(path, "unknown link '" + s + "'");
}

std::string link_name(Link l) {
  switch (l) {
    case Link::Logit: return "logit";
    case Link::Probit: return "probit";
    case Link::Identity: return "identity";
    case Link::Log: return "log";
  }
  return "?";
}

std::string family_name(Family f) {
  switch (f) {
    case Family::Binomial: return "binomial";
    case Family::Gaussian: return "gaussian";
    case Family::Multinomial: return "multinomial";
    case Family::TruncatedNormal: return "truncated-normal";
  }
  return "?";
}

Condition parse_condition(const json& j, const std::string& path) {
  Condition c;
  c.variable = need_string(j, "variable", path);
  c.op = parse_cmp_op(need_string(j, "op", path));
  c.constant = json_number(need(j, "value", path), path + ".value");
  return c;
}

ModelFormula parse_formula_at(const std::string& text, const std::string& path) {
  try {
    return parse_formula(text);
  } catch (const Error& e) {
    fail(path, e.what());
  }
}

}  // namespace

AnalysisConfig parse_config(const json& doc) {
  AnalysisConfig cfg;
  const json& data = need(doc, "data", "config");
  cfg.data_path = need_string(data, "path", "data");
  if (data.contains("delimiter")) {
    const auto d = data.at("delimiter").get<std::string>();
    if (d == ",")
      cfg.schema.delimiter = ',';
    else if (d == "\t" || d == "tab")
      cfg.schema.delimiter = '\t';
    else
      fail("data.delimiter", "expected \",\" or \"tab\"");
  }
  cfg.schema.id_name = need_string(data, "id", "data");
  cfg.schema.time_name = need_string(data, "time", "data");
  cfg.schema.outcome_name = need_string(data, "outcome", "data");
  if (data.contains("compevent") && !data.at("compevent").is_null())
    cfg.schema.compevent_name = data.at("compevent").get<std::string>();

  const std::string kind = need_string(doc, "outcome_kind", "config");
  if (kind == "survival")
    cfg.engine.outcome_kind = OutcomeKind::Survival;
  else if (kind == "binary_eof")
    cfg.engine.outcome_kind = OutcomeKind::BinaryEof;
  else if (kind == "continuous_eof")
    cfg.engine.outcome_kind = OutcomeKind::ContinuousEof;
  else
    fail("outcome_kind", "expected survival | binary_eof | continuous_eof");
  cfg.schema.outcome_kind = cfg.engine.outcome_kind;

  if (doc.contains("time_points"))
    cfg.engine.time_points = doc.at("time_points").get<int>();

  if (doc.contains("baseline")) {
    std::size_t i = 0;
    for (const auto& b : doc.at("baseline")) {
      const std::string path = "baseline[" + std::to_string(i++) + "]";
      ColumnSpec cs;
      if (b.is_string()) {
        cs.name = b.get<std::string>();
      } else {
        cs.name = need_string(b, "name", path);
        if (b.contains("type")) {
          const auto t = b.at("type").get<std::string>();
          if (t == "binary")
            cs.type = ColumnType::Binary;
          else if (t == "continuous")
            cs.type = ColumnType::Continuous;
          else if (t == "categorical")
            cs.type = ColumnType::Categorical;
          else
            fail(path + ".type", "expected binary | continuous | categorical");
        }
      }
      cfg.schema.baseline.push_back(cs);
      cfg.engine.baseline.push_back(cs.name);
    }
  }

  std::size_t ci = 0;
  for (const auto& c : need(doc, "covariates", "config")) {
    const std::string path = "covariates[" + std::to_string(ci++) + "]";
    CovariateSpec spec;
    spec.name = need_string(c, "name", path);
    spec.covtype = parse_covtype(need_string(c, "covtype", path), path + ".covtype");
    if (c.contains("formula"))
      spec.formula = parse_formula_at(c.at("formula").get<std::string>(), path + ".formula");
    if (c.contains("link")) spec.link = parse_link(c.at("link").get<std::string>(), path + ".link");
    if (c.contains("truncation")) {
      const json& t = c.at("truncation");
      Truncation tr;
      tr.point = json_number(need(t, "point", path + ".truncation"), path + ".truncation.point");
      const auto dir = need_string(t, "direction", path + ".truncation");
      if (dir == "left")
        tr.direction = TruncationDirection::Left;
      else if (dir == "right")
        tr.direction = TruncationDirection::Right;
      else
        fail(path + ".truncation.direction", "expected left | right");
      spec.truncation = tr;
    }
    if (c.contains("restriction")) {
      const json& r = c.at("restriction");
      Restriction re;
      re.condition = parse_condition(need(r, "condition", path + ".restriction"),
                                     path + ".restriction.condition");
      const auto action = need_string(r, "otherwise", path + ".restriction");
      if (action == "assign") {
        re.action = Restriction::Action::Assign;
        re.value = json_number(need(r, "value", path + ".restriction"),
                               path + ".restriction.value");
      } else if (action == "carry_forward") {
        re.action = Restriction::Action::CarryForward;
      } else {
        fail(path + ".restriction.otherwise", "expected assign | carry_forward");
      }
      spec.restriction = re;
    }
    if (c.contains("visit")) {
      const json& v = c.at("visit");
      VisitLink vl;
      vl.visit_indicator = need_string(v, "indicator", path + ".visit");
      vl.max_missed = need(v, "max_missed", path + ".visit").get<int>();
      spec.visit = vl;
    }
    if (c.contains("thresholds"))
      for (const auto& t : c.at("thresholds"))
        spec.cat_time_thresholds.push_back(json_number(t, path + ".thresholds"));
    if (c.contains("custom_id")) spec.custom_id = c.at("custom_id").get<std::string>();
    cfg.engine.covariates.push_back(spec);

    if (spec.covtype != Covtype::CategoricalTime) {
      ColumnSpec cs;
      cs.name = spec.name;
      switch (spec.covtype) {
        case Covtype::Binary:
        case Covtype::Absorbing:
          cs.type = ColumnType::Binary;
          break;
        case Covtype::Categorical:
          cs.type = ColumnType::Categorical;
          break;
        default:
          cs.type = ColumnType::Continuous;
          break;
      }
      cfg.schema.covariates.push_back(cs);
    }
  }

  if (doc.contains("histories")) {
    std::size_t hi = 0;
    for (const auto& h : doc.at("histories")) {
      const std::string path = "histories[" + std::to_string(hi++) + "]";
      HistorySpec hs;
      const auto k = need_string(h, "kind", path);
      if (k == "lagged")
        hs.kind = HistoryKind::Lagged;
      else if (k == "cumavg")
        hs.kind = HistoryKind::Cumavg;
      else if (k == "lagavg")
        hs.kind = HistoryKind::Lagavg;
      else if (k == "custom") {
        hs.kind = HistoryKind::Custom;
        hs.custom_id = need_string(h, "id", path);
      } else {
        fail(path + ".kind", "expected lagged | cumavg | lagavg | custom");
      }
      for (const auto& v : need(h, "variables", path)) hs.variables.push_back(v.get<std::string>());
      cfg.engine.histories.push_back(hs);
    }
  }

  cfg.engine.ymodel = parse_formula_at(need_string(doc, "ymodel", "config"), "ymodel");
  if (doc.contains("compevent_model") && !doc.at("compevent_model").is_null())
    cfg.engine.compevent_model =
        parse_formula_at(doc.at("compevent_model").get<std::string>(), "compevent_model");

  auto parse_yrestr = [&](const char* key, std::vector<YRestriction>& out) {
    if (!doc.contains(key)) return;
    std::size_t i = 0;
    for (const auto& r : doc.at(key)) {
      const std::string path = std::string(key) + "[" + std::to_string(i++) + "]";
      YRestriction yr;
      yr.condition = parse_condition(need(r, "condition", path), path + ".condition");
      yr.value = json_number(need(r, "value", path), path + ".value");
      out.push_back(yr);
    }
  };
  parse_yrestr("yrestrictions", cfg.engine.yrestrictions);
  parse_yrestr("compevent_restrictions", cfg.engine.compevent_restrictions);

  if (doc.contains("interventions")) {
    std::size_t ii = 0;
    for (const auto& it : doc.at("interventions")) {
      const std::string path = "interventions[" + std::to_string(ii) + "]";
      InterventionConfig ic;
      ic.label = it.contains("label") ? it.at("label").get<std::string>()
                                      : "Intervention " + std::to_string(ii + 1);
      std::size_t ri = 0;
      for (const auto& r : need(it, "rules", path)) {
        const std::string rpath = path + ".rules[" + std::to_string(ri++) + "]";
        InterventionRule rule;
        rule.variable = need_string(r, "variable", rpath);
        const auto kind = need_string(r, "rule", rpath);
        if (kind == "static") {
          StaticRule sr;
          for (const auto& v : need(r, "values", rpath))
            sr.values.push_back(json_number(v, rpath + ".values"));
          rule.rule = sr;
        } else if (kind == "threshold") {
          ThresholdRule tr;
          tr.min = json_number(need(r, "min", rpath), rpath + ".min");
          tr.max = json_number(need(r, "max", rpath), rpath + ".max");
          rule.rule = tr;
        } else if (kind == "natural") {
          rule.rule = NaturalCourseRule{};
        } else if (kind == "grace_period") {
          GracePeriodRule gr;
          gr.condition = parse_condition(need(r, "condition", rpath), rpath + ".condition");
          gr.grace = need(r, "grace", rpath).get<int>();
          rule.rule = gr;
        } else if (kind == "custom") {
          CustomRule cr;
          cr.plugin_id = need_string(r, "plugin", rpath);
          if (r.contains("parameters"))
            for (const auto& p : r.at("parameters"))
              cr.parameters.push_back(json_number(p, rpath + ".parameters"));
          rule.rule = cr;
        } else {
          fail(rpath + ".rule", "expected static | threshold | natural | grace_period | custom");
        }
        if (r.contains("times")) {
          std::set<int> times;
          for (const auto& t : r.at("times")) times.insert(t.get<int>());
          rule.applicable_times = times;
        }
        ic.rules.push_back(std::move(rule));
      }
      cfg.interventions.push_back(std::move(ic));
      ++ii;
    }
  }

  if (doc.contains("reference")) cfg.reference = doc.at("reference").get<std::size_t>();
  if (doc.contains("nsimul")) cfg.nsimul = doc.at("nsimul").get<std::size_t>();
  if (doc.contains("nsamples")) cfg.nsamples = doc.at("nsamples").get<std::size_t>();
  if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
  if (doc.contains("workers")) cfg.workers = doc.at("workers").get<int>();
  if (doc.contains("flags")) {
    const json& f = doc.at("flags");
    if (f.contains("keep_sim_data")) cfg.keep_sim_data = f.at("keep_sim_data").get<bool>();
    if (f.contains("emit_plot_data")) cfg.emit_plot_data = f.at("emit_plot_data").get<bool>();
    if (f.contains("rmses")) cfg.rmses = f.at("rmses").get<bool>();
  }
  if (doc.contains("hazard_ratio") && !doc.at("hazard_ratio").is_null()) {
    const json& hr = doc.at("hazard_ratio");
    if (!hr.is_array() || hr.size() != 2) fail("hazard_ratio", "expected a pair of indices");
    cfg.hazard_ratio_pair = {hr.at(0).get<std::size_t>(), hr.at(1).get<std::size_t>()};
  }
  return cfg;
}

AnalysisConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

namespace {

bool matches_history_column(const std::string& name, const std::vector<HistorySpec>& histories) {
  auto try_numbered = [&](const std::string& prefix, HistoryKind kind) -> bool {
    if (name.size() <= prefix.size() || name.compare(0, prefix.size(), prefix) != 0) return false;
    std::size_t i = prefix.size();
    if (!std::isdigit(static_cast<unsigned char>(name[i]))) return false;
    while (i < name.size() && std::isdigit(static_cast<unsigned char>(name[i]))) ++i;
    if (i >= name.size() || name[i] != '_') return false;
    const std::string var = name.substr(i + 1);
    for (const auto& h : histories)
      if (h.kind == kind &&
          std::find(h.variables.begin(), h.variables.end(), var) != h.variables.end())
        return true;
    return false;
  };
  if (try_numbered("lag_cumavg", HistoryKind::Lagavg)) return true;
  if (try_numbered("lag", HistoryKind::Lagged)) return true;
  if (name.rfind("cumavg_", 0) == 0) {
    const std::string var = name.substr(7);
    for (const auto& h : histories)
      if (h.kind == HistoryKind::Cumavg &&
          std::find(h.variables.begin(), h.variables.end(), var) != h.variables.end())
        return true;
  }
  for (const auto& h : histories) {
    if (h.kind != HistoryKind::Custom) continue;
    for (const auto& var : h.variables)
      if (name == h.custom_id + "_" + var) return true;
  }
  return false;
}

}  // namespace

std::vector<Finding> validate_config(const AnalysisConfig& cfg) {
  std::vector<Finding> out;
  auto error = [&](const std::string& path, const std::string& msg) {
    out.push_back({Finding::Level::Error, path, msg});
  };
  auto warning = [&](const std::string& path, const std::string& msg) {
    out.push_back({Finding::Level::Warning, path, msg});
  };

  const auto& covs = cfg.engine.covariates;
  auto cov_index = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t j = 0; j < covs.size(); ++j)
      if (covs[j].name == name) return j;
    return std::nullopt;
  };
  auto is_baseline = [&](const std::string& name) {
    return std::find(cfg.engine.baseline.begin(), cfg.engine.baseline.end(), name) !=
           cfg.engine.baseline.end();
  };
  auto is_categorical = [&](const std::string& name) {
    auto j = cov_index(name);
    if (j && (covs[*j].covtype == Covtype::Categorical ||
              covs[*j].covtype == Covtype::CategoricalTime))
      return true;
    for (const auto& b : cfg.schema.baseline)
      if (b.name == name && b.type == ColumnType::Categorical) return true;
    return false;
  };
  auto resolvable = [&](const std::string& name) {
    return name == cfg.schema.time_name || cov_index(name).has_value() || is_baseline(name) ||
           matches_history_column(name, cfg.engine.histories);
  };

  auto check_formula = [&](const ModelFormula& f, const std::string& path,
                           std::optional<std::size_t> owner) {
    for (const auto& t : f.terms) {
      const std::string& var = term_variable(t);
      if (!resolvable(var))
        error(path, "term references '" + var +
                        "' which is not a column, a declared history column, or the time index");
      if (is_categorical(var) && !std::holds_alternative<FactorExpand>(t))
        error(path, "categorical variable '" + var + "' must appear inside factor()");
      if (owner) {
        auto j = cov_index(var);
        if (j && *j >= *owner)
          warning(path, "reference to '" + var +
                            "' which is not yet drawn at the current time; the previous "
                            "time's value is used during simulation");
        if (var.rfind("cumavg_", 0) == 0) {
          auto jj = cov_index(var.substr(7));
          if (jj && *jj >= *owner)
            warning(path, "cumavg of '" + var.substr(7) +
                              "' includes a value not yet drawn at the current time");
        }
      }
    }
  };

  // Covariate declarations.
  std::map<std::string, int> visit_s;
  for (std::size_t j = 0; j < covs.size(); ++j) {
    const auto& c = covs[j];
    const std::string path = "covariates[" + std::to_string(j) + "]";
    if (c.covtype == Covtype::CategoricalTime) {
      if (c.formula) error(path, "categorical-time covariates take no model formula");
      if (c.cat_time_thresholds.empty()) error(path, "categorical-time requires thresholds");
      if (!std::is_sorted(c.cat_time_thresholds.begin(), c.cat_time_thresholds.end()))
        error(path + ".thresholds", "thresholds must be sorted");
    } else if (c.covtype == Covtype::Custom) {
      if (c.custom_id.empty()) error(path, "custom covtype requires custom_id");
    } else {
      if (!c.formula) error(path, "covtype '" + covtype_name(c.covtype) + "' requires a formula");
    }
    if (c.formula && c.formula->response != c.name)
      error(path + ".formula", "response '" + c.formula->response + "' must be '" + c.name + "'");
    if (c.formula) check_formula(*c.formula, path + ".formula", j);
    if (c.covtype == Covtype::TruncatedNormal && !c.truncation)
      error(path, "truncated normal requires a truncation point and direction");
    if (c.truncation && c.covtype != Covtype::TruncatedNormal)
      error(path, "truncation applies to the truncated normal covtype only");
    if (c.restriction && !resolvable(c.restriction->condition.variable))
      error(path + ".restriction", "condition variable '" + c.restriction->condition.variable +
                                       "' is not resolvable");
    if (c.visit) {
      auto vj = cov_index(c.visit->visit_indicator);
      if (!vj) {
        error(path + ".visit", "visit indicator '" + c.visit->visit_indicator +
                                   "' is not a declared covariate");
      } else {
        if (*vj >= j)
          error(path + ".visit",
                "visit indicator '" + c.visit->visit_indicator +
                    "' must precede the linked covariate in the covariate order");
        if (covs[*vj].covtype != Covtype::Binary)
          error(path + ".visit", "visit indicator must be a binary covariate");
      }
      if (c.visit->max_missed < 1) error(path + ".visit", "max_missed must be >= 1");
      auto [it, inserted] = visit_s.emplace(c.visit->visit_indicator, c.visit->max_missed);
      if (!inserted && it->second != c.visit->max_missed)
        error(path + ".visit", "visit indicator '" + c.visit->visit_indicator +
                                   "' linked with inconsistent max_missed values");
    }
  }

  check_formula(cfg.engine.ymodel, "ymodel", std::nullopt);
  if (cfg.engine.ymodel.response != cfg.schema.outcome_name)
    error("ymodel", "response must be the outcome '" + cfg.schema.outcome_name + "'");
  if (cfg.engine.compevent_model) {
    check_formula(*cfg.engine.compevent_model, "compevent_model", std::nullopt);
    if (!cfg.schema.compevent_name)
      error("compevent_model", "a competing-event model requires data.compevent");
    else if (cfg.engine.compevent_model->response != *cfg.schema.compevent_name)
      error("compevent_model", "response must be '" + *cfg.schema.compevent_name + "'");
    if (cfg.engine.outcome_kind != OutcomeKind::Survival)
      error("compevent_model", "competing-event models apply to survival outcomes only");
  }
  if (cfg.schema.compevent_name && !cfg.engine.compevent_model &&
      cfg.engine.outcome_kind == OutcomeKind::Survival)
    error("compevent_model",
          "data.compevent is declared, so a competing-event model is required (omit the column "
          "to treat competing events as censoring)");

  for (std::size_t i = 0; i < cfg.engine.yrestrictions.size(); ++i)
    if (!resolvable(cfg.engine.yrestrictions[i].condition.variable))
      error("yrestrictions[" + std::to_string(i) + "]", "condition variable not resolvable");
  for (std::size_t i = 0; i < cfg.engine.compevent_restrictions.size(); ++i)
    if (!resolvable(cfg.engine.compevent_restrictions[i].condition.variable))
      error("compevent_restrictions[" + std::to_string(i) + "]",
            "condition variable not resolvable");

  for (std::size_t h = 0; h < cfg.engine.histories.size(); ++h)
    for (const auto& v : cfg.engine.histories[h].variables)
      if (!cov_index(v))
        error("histories[" + std::to_string(h) + "]",
              "history variable '" + v + "' is not a declared covariate");

  for (std::size_t i = 0; i < cfg.interventions.size(); ++i) {
    const auto& itv = cfg.interventions[i];
    const std::string path = "interventions[" + std::to_string(i) + "]";
    std::set<std::string> seen;
    for (std::size_t r = 0; r < itv.rules.size(); ++r) {
      const auto& rule = itv.rules[r];
      const std::string rpath = path + ".rules[" + std::to_string(r) + "]";
      if (!cov_index(rule.variable))
        error(rpath, "intervention variable '" + rule.variable + "' is not a declared covariate");
      if (!seen.insert(rule.variable).second)
        error(rpath, "duplicate rule for variable '" + rule.variable + "'");
      if (const auto* sr = std::get_if<StaticRule>(&rule.rule)) {
        if (cfg.engine.time_points > 0 &&
            sr->values.size() != static_cast<std::size_t>(cfg.engine.time_points))
          error(rpath, "static values vector must have time_points (" +
                           std::to_string(cfg.engine.time_points) + ") entries, got " +
                           std::to_string(sr->values.size()));
      } else if (const auto* tr = std::get_if<ThresholdRule>(&rule.rule)) {
        if (!(tr->min <= tr->max)) error(rpath, "threshold min must be <= max");
        if (std::isinf(tr->min) && std::isinf(tr->max) && tr->min < 0 && tr->max > 0)
          warning(rpath, "threshold (-inf, inf) never modifies the natural value");
      } else if (const auto* gr = std::get_if<GracePeriodRule>(&rule.rule)) {
        if (gr->grace < 1) error(rpath, "grace length must be >= 1");
        if (!resolvable(gr->condition.variable))
          error(rpath, "grace condition variable '" + gr->condition.variable +
                           "' is not resolvable");
      }
    }
  }

  if (cfg.reference > cfg.interventions.size())
    error("reference", "reference index " + std::to_string(cfg.reference) +
                           " exceeds the number of interventions (natural course is 0)");
  if (cfg.hazard_ratio_pair) {
    if (cfg.engine.outcome_kind != OutcomeKind::Survival)
      error("hazard_ratio", "hazard ratios apply to survival outcomes only");
    const auto [a, b] = *cfg.hazard_ratio_pair;
    if (a > cfg.interventions.size() || b > cfg.interventions.size())
      error("hazard_ratio", "pair index exceeds the number of interventions");
    if (a == b) error("hazard_ratio", "pair must name two distinct interventions");
  }
  if (cfg.keep_sim_data && cfg.nsamples > 0)
    error("flags.keep_sim_data",
          "simulated-data dumps cannot be combined with bootstrapping; set nsamples to 0");
  if (cfg.nsimul > 0 && cfg.nsimul < 10000)
    warning("nsimul", "nsimul = " + std::to_string(cfg.nsimul) +
                          " is below the recommended minimum of 10000");
  return out;
}

namespace {

struct OnceOut {
  RunEstimates est;
  std::vector<SimulationResult> sims;
  std::optional<FittedSuite> suite;
};

}  // namespace

AnalysisResult run_analysis(const AnalysisConfig& cfg, Plugins& plugins) {
  {
    auto findings = validate_config(cfg);
    std::string msg;
    for (const auto& f : findings)
      if (f.level == Finding::Level::Error) msg += (msg.empty() ? "" : "; ") + f.path + ": " + f.message;
    if (!msg.empty()) throw ConfigError(msg);
  }

  const PanelDataset data = PanelDataset::load_file(cfg.data_path, cfg.schema);

  EngineSpec espec = cfg.engine;
  if (espec.time_points <= 0) espec.time_points = data.max_time() + 1;
  for (const auto& itv : cfg.interventions)
    for (const auto& rule : itv.rules) {
      if (const auto* sr = std::get_if<StaticRule>(&rule.rule))
        if (sr->values.size() != static_cast<std::size_t>(espec.time_points))
          throw ConfigError("intervention '" + itv.label + "': static values vector must have " +
                            std::to_string(espec.time_points) + " entries");
      for (auto& c : espec.covariates)
        if (c.name == rule.variable) c.is_treatment = true;
    }

  std::vector<InterventionSpec> itvs;
  itvs.push_back(natural_course_spec());
  for (const auto& ic : cfg.interventions) itvs.push_back({ic.label, ic.rules});

  const std::size_t n = data.n_subjects();
  const std::size_t s = cfg.nsimul ? cfg.nsimul : n;
  const bool survival = espec.outcome_kind == OutcomeKind::Survival;
  const int T = espec.time_points;

  auto run_once = [&](const PanelDataset& d, std::uint64_t run_seed, bool keep_tables,
                      int sim_workers, bool keep_details) -> OnceOut {
    OnceOut once;
    FittedSuite suite = fit_all(d, espec, plugins);
    SimOptions so;
    so.nsimul = s;
    so.stream_seed = run_seed;
    so.workers = sim_workers;
    so.keep_table = keep_tables;
    for (const auto& draw : d.resample_baseline(s, run_seed))
      so.baseline_sources.push_back(draw.subject);
    for (const auto& itv : itvs) {
      SimulationResult sr = simulate(suite, itv, so, plugins);
      if (survival)
        once.est.estimates.push_back(risk_curve(sr));
      else
        once.est.estimates.push_back({mean_estimate(sr)});
      once.sims.push_back(std::move(sr));
    }
    if (cfg.hazard_ratio_pair)
      once.est.hazard_ratio = hazard_ratio(once.sims[cfg.hazard_ratio_pair->first],
                                           once.sims[cfg.hazard_ratio_pair->second], run_seed);
    if (keep_details)
      once.suite = std::move(suite);
    else
      once.sims.clear();
    return once;
  };

  OnceOut point = run_once(data, cfg.seed, cfg.keep_sim_data,
                           cfg.nsamples > 0 ? 1 : cfg.workers, true);

  AnalysisResult out;
  out.outcome_kind = espec.outcome_kind;
  out.time_points = T;
  out.sample_size = n;
  out.nsimul = s;
  out.nsamples = cfg.nsamples;
  out.effective_samples = 0;
  out.seed = cfg.seed;
  out.reference = cfg.reference;
  for (const auto& itv : itvs) out.labels.push_back(itv.label);
  out.estimates = point.est.estimates;
  out.contrast = contrasts(out.estimates, cfg.reference);

  if (survival) {
    for (int t = 0; t < T; ++t)
      out.np_natural.push_back(cfg.schema.compevent_name ? aalen_johansen_risk(data, t)
                                                         : product_limit_risk(data, t));
  } else {
    out.np_natural.push_back(empirical_eof_mean(data));
  }

  if (cfg.hazard_ratio_pair) {
    HazardRatioReport hr;
    hr.arm0 = cfg.hazard_ratio_pair->first;
    hr.arm1 = cfg.hazard_ratio_pair->second;
    hr.value = point.est.hazard_ratio;
    out.hazard_ratio = hr;
  }

  for (const auto& ms : point.suite->summaries()) {
    ModelReport mr;
    mr.name = ms.name;
    mr.role = ms.role;
    mr.family = family_name(ms.model->family);
    mr.link = link_name(ms.model->link);
    mr.coef_names = ms.model->coef_names;
    for (Eigen::Index r = 0; r < ms.model->coef.rows(); ++r) {
      std::vector<double> row, se;
      for (Eigen::Index c = 0; c < ms.model->coef.cols(); ++c) {
        row.push_back(ms.model->coef(r, c));
        se.push_back(ms.model->stderrs(r, c));
      }
      mr.coefficients.push_back(row);
      mr.stderrs.push_back(se);
    }
    mr.rmse = ms.model->diag.rmse;
    mr.residual_mse = ms.model->residual_mse;
    mr.converged = ms.model->diag.converged;
    mr.iterations = ms.model->diag.iterations;
    out.models.push_back(std::move(mr));
  }

  // Natural-course comparison plot data: parametric vs nonparametric risk and
  // covariate means by time.
  if (cfg.emit_plot_data) {
    const auto& nat = point.sims[0];
    const Table& obs = data.table();
    for (int k = 0; k < T; ++k) {
      if (survival)
        out.plot_data.push_back(
            {k, "risk", out.np_natural[static_cast<std::size_t>(k)],
             out.estimates[0][static_cast<std::size_t>(k)]});
    }
    for (std::size_t j = 0; j < nat.cov_names.size(); ++j) {
      if (!obs.has_column(nat.cov_names[j])) continue;  // derived categorical-time
      const std::size_t col = obs.column(nat.cov_names[j]);
      for (int k = 0; k < T; ++k) {
        double sum = 0.0;
        std::size_t count = 0;
        if (survival) {
          for (auto r : data.risk_set(k)) {
            sum += obs.get(r, col);
            ++count;
          }
        } else {
          for (std::size_t subj = 0; subj < data.n_subjects(); ++subj) {
            if (static_cast<std::size_t>(k) >= obs.length(subj)) continue;
            sum += obs.get(obs.row(subj, static_cast<std::size_t>(k)), col);
            ++count;
          }
        }
        out.plot_data.push_back(
            {k, "mean_" + nat.cov_names[j], count ? sum / static_cast<double>(count) : kNaN,
             nat.cov_mean[static_cast<std::size_t>(k) * nat.cov_names.size() + j]});
      }
    }
  }

  if (cfg.keep_sim_data)
    for (std::size_t i = 0; i < itvs.size(); ++i)
      out.sim_dumps.emplace_back(itvs[i].label, std::move(*point.sims[i].table));

  if (cfg.nsamples > 0) {
    RunClosure closure = [&](const PanelDataset& d, std::uint64_t run_seed) {
      return run_once(d, run_seed, false, 1, false).est;
    };
    out.bootstrap = bootstrap(data, closure, cfg.nsamples, cfg.seed, cfg.workers, cfg.reference);
    out.effective_samples = out.bootstrap->effective;
    out.bootstrap_failures = out.bootstrap->failures;
    if (out.hazard_ratio) {
      out.hazard_ratio->se = out.bootstrap->hr_se;
      out.hazard_ratio->lo = out.bootstrap->hr_lo;
      out.hazard_ratio->hi = out.bootstrap->hr_hi;
    }
  }

  out.notes = {
      "competing events are treated as censoring when no competing-event column is declared",
      "the risk accumulation aligns the competing-event survival factor at interval j+1",
      "truncated-normal simulation draws use the maximum-likelihood sigma",
      "bounded-normal covariates are standardized by the observed range before fitting",
      "percentile intervals use nearest-rank order statistics",
      "bootstrap resampling draws whole subjects n-out-of-n",
  };
  return out;
}

namespace {

std::string fmt7(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.7f", v);
  return buf;
}

std::string fmt_full(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string render_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      os << ' ';
      os << std::string(width[c] - cells[c].size(), ' ') << cells[c];
    }
    os << '\n';
  };
  emit(header);
  for (const auto& row : rows) emit(row);
  return os.str();
}

}  // namespace

std::string render_results_text(const AnalysisResult& r, bool with_rmses) {
  const bool survival = r.outcome_kind == OutcomeKind::Survival;
  std::ostringstream os;
  os << "PREDICTED RISK UNDER MULTIPLE INTERVENTIONS\n\n";
  os << "Intervention \t Description\n";
  for (std::size_t i = 0; i < r.labels.size(); ++i)
    os << i << "              " << r.labels[i] << "\n";
  os << "\nSample size = " << r.sample_size << ", Monte Carlo sample size = " << r.nsimul << "\n";
  os << "Number of bootstrap samples = " << r.nsamples;
  if (r.nsamples > 0 && r.effective_samples != r.nsamples)
    os << " (effective " << r.effective_samples << ")";
  os << "\n";
  if (r.reference == 0)
    os << "Reference intervention = natural course (0)\n";
  else
    os << "Reference intervention = " << r.reference << " (" << r.labels[r.reference] << ")\n";
  os << " \n\n";

  const bool boot = r.bootstrap.has_value();
  std::vector<std::string> header = {"k", "Interv.", survival ? "NP risk" : "NP mean",
                                     survival ? "g-form risk" : "g-form mean"};
  if (boot) {
    header.push_back(survival ? "Risk SE" : "Mean SE");
    header.push_back(survival ? "Risk lower 95" : "Mean lower 95");
    header.push_back(survival ? "Risk upper 95" : "Mean upper 95");
  }
  header.push_back(survival ? "Risk ratio" : "Mean ratio");
  if (boot) {
    header.push_back(survival ? "RR SE" : "MR SE");
    header.push_back(survival ? "RR lower 95" : "MR lower 95");
    header.push_back(survival ? "RR upper 95" : "MR upper 95");
  }
  header.push_back(survival ? "Risk difference" : "Mean difference");
  if (boot) {
    header.push_back(survival ? "RD SE" : "MD SE");
    header.push_back(survival ? "RD lower 95" : "MD lower 95");
    header.push_back(survival ? "RD upper 95" : "MD upper 95");
  }

  const std::size_t kfin = r.estimates.front().size() - 1;
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    std::vector<std::string> row;
    row.push_back(std::to_string(r.time_points - 1));
    row.push_back(std::to_string(i));
    row.push_back(i == 0 ? fmt7(r.np_natural.back()) : "NA");
    row.push_back(fmt7(r.estimates[i][kfin]));
    if (boot) {
      row.push_back(fmt7(r.bootstrap->se[i][kfin]));
      row.push_back(fmt7(r.bootstrap->lo[i][kfin]));
      row.push_back(fmt7(r.bootstrap->hi[i][kfin]));
    }
    row.push_back(fmt7(r.contrast.ratio[i][kfin]));
    if (boot) {
      row.push_back(fmt7(r.bootstrap->ratio_se[i][kfin]));
      row.push_back(fmt7(r.bootstrap->ratio_lo[i][kfin]));
      row.push_back(fmt7(r.bootstrap->ratio_hi[i][kfin]));
    }
    row.push_back(fmt7(r.contrast.difference[i][kfin]));
    if (boot) {
      row.push_back(fmt7(r.bootstrap->diff_se[i][kfin]));
      row.push_back(fmt7(r.bootstrap->diff_lo[i][kfin]));
      row.push_back(fmt7(r.bootstrap->diff_hi[i][kfin]));
    }
    rows.push_back(std::move(row));
  }
  os << render_table(header, rows);

  if (r.hazard_ratio) {
    os << "\nHazard ratio (intervention " << r.hazard_ratio->arm0 << " vs "
       << r.hazard_ratio->arm1 << ")";
    if (r.hazard_ratio->value) {
      os << " = " << fmt7(*r.hazard_ratio->value);
      if (r.hazard_ratio->lo && r.hazard_ratio->hi)
        os << "  95% CI [" << fmt7(*r.hazard_ratio->lo) << ", " << fmt7(*r.hazard_ratio->hi)
           << "]";
    } else {
      os << " = NA (no events realized in one arm)";
    }
    os << "\n";
  }

  if (with_rmses) {
    os << "\n RMSE Values\n";
    for (const auto& m : r.models)
      os << m.name << (m.role == "covariate-zero" ? " (zero indicator)" : "") << ": "
         << fmt7(m.rmse) << "\n";
  }
  return os.str();
}

ordered_json results_json(const AnalysisResult& r) {
  ordered_json doc;
  const bool survival = r.outcome_kind == OutcomeKind::Survival;
  ordered_json meta;
  meta["outcome_kind"] = survival ? "survival"
                         : r.outcome_kind == OutcomeKind::BinaryEof ? "binary_eof"
                                                                    : "continuous_eof";
  meta["sample_size"] = r.sample_size;
  meta["nsimul"] = r.nsimul;
  meta["time_points"] = r.time_points;
  meta["nsamples"] = r.nsamples;
  meta["effective_samples"] = r.effective_samples;
  meta["failed_replicates"] = r.bootstrap_failures;
  meta["seed"] = r.seed;
  meta["reference"] = r.reference;
  meta["conventions"] = r.notes;
  doc["meta"] = meta;

  if (survival) {
    ordered_json np;
    std::vector<int> ks;
    for (int k = 0; k < r.time_points; ++k) ks.push_back(k);
    np["k"] = ks;
    np["risk"] = r.np_natural;
    doc["natural_course_np"] = np;
  } else {
    doc["natural_course_np"] = ordered_json{{"mean", r.np_natural.front()}};
  }

  doc["interventions"] = ordered_json::array();
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    ordered_json itv;
    itv["index"] = i;
    itv["label"] = r.labels[i];
    ordered_json est;
    if (survival) {
      std::vector<int> ks;
      for (int k = 0; k < r.time_points; ++k) ks.push_back(k);
      est["k"] = ks;
      est["risk"] = r.estimates[i];
      est["risk_ratio"] = r.contrast.ratio[i];
      est["risk_difference"] = r.contrast.difference[i];
      if (r.bootstrap) {
        est["risk_se"] = r.bootstrap->se[i];
        est["risk_lower95"] = r.bootstrap->lo[i];
        est["risk_upper95"] = r.bootstrap->hi[i];
        est["ratio_se"] = r.bootstrap->ratio_se[i];
        est["ratio_lower95"] = r.bootstrap->ratio_lo[i];
        est["ratio_upper95"] = r.bootstrap->ratio_hi[i];
        est["difference_se"] = r.bootstrap->diff_se[i];
        est["difference_lower95"] = r.bootstrap->diff_lo[i];
        est["difference_upper95"] = r.bootstrap->diff_hi[i];
      }
    } else {
      est["mean"] = r.estimates[i][0];
      est["mean_ratio"] = r.contrast.ratio[i][0];
      est["mean_difference"] = r.contrast.difference[i][0];
      if (r.bootstrap) {
        est["mean_se"] = r.bootstrap->se[i][0];
        est["mean_lower95"] = r.bootstrap->lo[i][0];
        est["mean_upper95"] = r.bootstrap->hi[i][0];
        est["ratio_se"] = r.bootstrap->ratio_se[i][0];
        est["ratio_lower95"] = r.bootstrap->ratio_lo[i][0];
        est["ratio_upper95"] = r.bootstrap->ratio_hi[i][0];
        est["difference_se"] = r.bootstrap->diff_se[i][0];
        est["difference_lower95"] = r.bootstrap->diff_lo[i][0];
        est["difference_upper95"] = r.bootstrap->diff_hi[i][0];
      }
    }
    itv["estimates"] = est;
    doc["interventions"].push_back(itv);
  }

  doc["models"] = ordered_json::array();
  for (const auto& m : r.models) {
    ordered_json mj;
    mj["name"] = m.name;
    mj["role"] = m.role;
    mj["family"] = m.family;
    mj["link"] = m.link;
    mj["coefficient_names"] = m.coef_names;
    mj["coefficients"] = m.coefficients;
    mj["stderrs"] = m.stderrs;
    mj["rmse"] = m.rmse;
    if (!std::isnan(m.residual_mse)) mj["residual_mse"] = m.residual_mse;
    mj["converged"] = m.converged;
    mj["iterations"] = m.iterations;
    doc["models"].push_back(mj);
  }

  if (r.hazard_ratio) {
    ordered_json hj;
    hj["arms"] = {r.hazard_ratio->arm0, r.hazard_ratio->arm1};
    hj["value"] = r.hazard_ratio->value ? ordered_json(*r.hazard_ratio->value) : ordered_json();
    if (r.hazard_ratio->se) {
      hj["se"] = *r.hazard_ratio->se;
      hj["lower95"] = *r.hazard_ratio->lo;
      hj["upper95"] = *r.hazard_ratio->hi;
    }
    doc["hazard_ratio"] = hj;
  } else {
    doc["hazard_ratio"] = nullptr;
  }
  return doc;
}

std::string render_plotdata_csv(const AnalysisResult& r) {
  std::ostringstream os;
  os << "k,quantity,nonparametric,parametric\n";
  for (const auto& row : r.plot_data)
    os << row.k << "," << row.quantity << "," << fmt_full(row.nonparametric) << ","
       << fmt_full(row.parametric) << "\n";
  return os.str();
}

std::string render_sim_dump_csv(const Table& table, int time_points) {
  std::ostringstream os;
  os << "sim_id";
  for (const auto& n : table.names()) os << "," << n;
  os << "\n";
  const auto T = static_cast<std::size_t>(time_points);
  for (std::size_t s = 0; s < table.n_subjects(); ++s)
    for (std::size_t k = 0; k < T; ++k) {
      os << s + 1;
      const std::size_t row = table.row(s, k);
      for (std::size_t c = 0; c < table.n_columns(); ++c) os << "," << fmt_full(table.get(row, c));
      os << "\n";
    }
  return os.str();
}

std::vector<std::string> write_artifacts(const AnalysisResult& r, const AnalysisConfig& cfg,
                                         const std::string& outdir) {
  namespace fs = std::filesystem;
  fs::create_directories(outdir);
  std::vector<std::string> written;
  auto write = [&](const std::string& name, const std::string& content) {
    const auto path = (fs::path(outdir) / name).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << content;
    written.push_back(path);
  };
  write("results.txt", render_results_text(r, cfg.rmses));
  write("results.json", results_json(r).dump(2) + "\n");
  if (cfg.emit_plot_data) write("natural_course_plotdata.csv", render_plotdata_csv(r));
  for (std::size_t i = 0; i < r.sim_dumps.size(); ++i)
    write("simdata." + std::to_string(i) + ".csv",
          render_sim_dump_csv(r.sim_dumps[i].second, r.time_points));
  return written;
}

}  // namespace gformula
