#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>
#include <optional>
#include <sstream>

#include "gformula/analysis.hpp"
#include "gformula/errors.hpp"
#include "gformula/models.hpp"
#include "gformula/np_estimators.hpp"

namespace py = pybind11;
using namespace gformula;

namespace {

PanelSchema make_schema(const std::string& id, const std::string& time, const std::string& outcome,
                        const std::optional<std::string>& compevent,
                        const std::vector<std::string>& binary,
                        const std::vector<std::string>& continuous,
                        const std::vector<std::string>& categorical,
                        const std::vector<std::string>& baseline,
                        const std::string& outcome_kind) {
  PanelSchema s;
  s.id_name = id;
  s.time_name = time;
  s.outcome_name = outcome;
  s.compevent_name = compevent;
  for (const auto& n : binary) s.covariates.push_back({n, ColumnType::Binary});
  for (const auto& n : continuous) s.covariates.push_back({n, ColumnType::Continuous});
  for (const auto& n : categorical) s.covariates.push_back({n, ColumnType::Categorical});
  for (const auto& n : baseline) s.baseline.push_back({n, ColumnType::Continuous});
  if (outcome_kind == "survival")
    s.outcome_kind = OutcomeKind::Survival;
  else if (outcome_kind == "binary_eof")
    s.outcome_kind = OutcomeKind::BinaryEof;
  else if (outcome_kind == "continuous_eof")
    s.outcome_kind = OutcomeKind::ContinuousEof;
  else
    throw ArgumentError("outcome_kind must be survival | binary_eof | continuous_eof");
  return s;
}

AnalysisConfig config_with_overrides(AnalysisConfig cfg, std::optional<std::uint64_t> seed,
                                     std::optional<int> workers) {
  if (seed) cfg.seed = *seed;
  if (workers) cfg.workers = *workers;
  return cfg;
}

std::string run_to_json(const AnalysisConfig& cfg, const std::optional<std::string>& output_dir) {
  Plugins plugins;
  auto result = run_analysis(cfg, plugins);
  if (output_dir) write_artifacts(result, cfg, *output_dir);
  return results_json(result).dump();
}

}  // namespace

PYBIND11_MODULE(_gformula, m) {
  m.doc() = "Parametric g-formula estimation engine";

  py::register_exception<Error>(m, "GFormulaError");

  py::class_<PanelDataset>(m, "PanelData")
      .def_static(
          "from_csv",
          [](const std::string& path, const std::string& id, const std::string& time,
             const std::string& outcome, const std::optional<std::string>& compevent,
             const std::vector<std::string>& binary, const std::vector<std::string>& continuous,
             const std::vector<std::string>& categorical, const std::vector<std::string>& baseline,
             const std::string& outcome_kind) {
            return PanelDataset::load_file(
                path, make_schema(id, time, outcome, compevent, binary, continuous, categorical,
                                  baseline, outcome_kind));
          },
          py::arg("path"), py::arg("id") = "id", py::arg("time") = "t0", py::arg("outcome") = "Y",
          py::arg("compevent") = std::nullopt, py::arg("binary") = std::vector<std::string>{},
          py::arg("continuous") = std::vector<std::string>{},
          py::arg("categorical") = std::vector<std::string>{},
          py::arg("baseline") = std::vector<std::string>{}, py::arg("outcome_kind") = "survival")
      .def_property_readonly("n_subjects", &PanelDataset::n_subjects)
      .def_property_readonly("max_time", &PanelDataset::max_time)
      .def("risk_set_size", [](const PanelDataset& d, int k) { return d.risk_set(k).size(); },
           py::arg("k"));

  m.def("product_limit_risk", &product_limit_risk, py::arg("data"), py::arg("t"),
        "Complement of the product-limit survival estimator by t+1.");
  m.def("aalen_johansen_risk", &aalen_johansen_risk, py::arg("data"), py::arg("t"),
        "Aalen-Johansen cumulative incidence of the event of interest by t+1.");
  m.def("empirical_eof_mean", &empirical_eof_mean, py::arg("data"),
        "Mean outcome over uncensored completers at the end of follow-up.");

  m.def(
      "normalize_formula",
      [](const std::string& text) { return print_formula(parse_formula(text)); },
      py::arg("text"), "Parses a model statement and prints its normalized form.");

  m.def("rcs_basis", &rcs_basis, py::arg("x"), py::arg("knots"),
        "Restricted cubic spline basis values at x (length len(knots) - 2).");

  m.def(
      "fit_binomial",
      [](const std::vector<std::vector<double>>& x, const std::vector<double>& y,
         const std::string& link) {
        if (x.empty()) throw ArgumentError("fit_binomial: empty design");
        DesignMatrix dm;
        dm.values.resize(static_cast<Eigen::Index>(x.size()),
                         static_cast<Eigen::Index>(x.front().size()));
        dm.response.resize(static_cast<Eigen::Index>(y.size()));
        for (std::size_t i = 0; i < x.size(); ++i) {
          for (std::size_t j = 0; j < x[i].size(); ++j)
            dm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x[i][j];
          dm.response(static_cast<Eigen::Index>(i)) = y[i];
        }
        for (std::size_t j = 0; j < x.front().size(); ++j)
          dm.column_names.push_back("x" + std::to_string(j));
        auto fm = fit_binomial(dm, link == "probit" ? Link::Probit : Link::Logit);
        std::vector<double> coef, se;
        for (Eigen::Index j = 0; j < fm.coef.cols(); ++j) {
          coef.push_back(fm.coef(0, j));
          se.push_back(fm.stderrs(0, j));
        }
        py::dict out;
        out["coefficients"] = coef;
        out["stderrs"] = se;
        out["converged"] = fm.diag.converged;
        out["rmse"] = fm.diag.rmse;
        return out;
      },
      py::arg("x"), py::arg("y"), py::arg("link") = "logit",
      "Pooled logistic/probit maximum likelihood on a dense design matrix.");

  m.def(
      "run_to_json",
      [](const std::string& config_path, const std::optional<std::string>& output_dir,
         std::optional<std::uint64_t> seed, std::optional<int> workers) {
        return run_to_json(config_with_overrides(parse_config_file(config_path), seed, workers),
                           output_dir);
      },
      py::arg("config_path"), py::arg("output_dir") = std::nullopt, py::arg("seed") = std::nullopt,
      py::arg("workers") = std::nullopt,
      "Runs an analysis from a config file; returns the result document as a JSON string.");

  m.def(
      "run_config_string_to_json",
      [](const std::string& config_json, const std::optional<std::string>& output_dir,
         std::optional<std::uint64_t> seed, std::optional<int> workers) {
        nlohmann::json doc;
        try {
          doc = nlohmann::json::parse(config_json);
        } catch (const nlohmann::json::exception& e) {
          throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
        return run_to_json(config_with_overrides(parse_config(doc), seed, workers), output_dir);
      },
      py::arg("config_json"), py::arg("output_dir") = std::nullopt,
      py::arg("seed") = std::nullopt, py::arg("workers") = std::nullopt,
      "Runs an analysis from a JSON config string; returns the result document as JSON.");

  m.def(
      "validate_to_json",
      [](const std::string& config_json) {
        nlohmann::json doc = nlohmann::json::parse(config_json);
        auto findings = validate_config(parse_config(doc));
        nlohmann::json out = nlohmann::json::array();
        for (const auto& f : findings)
          out.push_back({{"level", f.level == Finding::Level::Error ? "error" : "warning"},
                         {"path", f.path},
                         {"message", f.message}});
        return out.dump();
      },
      py::arg("config_json"), "Validates a JSON config string; returns findings as JSON.");

#ifdef VERSION_INFO
  m.attr("__version__") = VERSION_INFO;
#else
  m.attr("__version__") = "dev";
#endif
}
