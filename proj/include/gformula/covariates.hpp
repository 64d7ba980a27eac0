#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gformula/models.hpp"
#include "gformula/rng.hpp"
#include "gformula/table.hpp"

namespace gformula {

enum class Covtype {
  Binary,
  Normal,
  Categorical,
  BoundedNormal,
  ZeroInflatedNormal,
  TruncatedNormal,
  Absorbing,
  CategoricalTime,
  Custom,
};

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };

struct Condition {
  std::string variable;
  CmpOp op;
  double constant;
};

bool eval_condition(const Condition& c, const Table& table, std::size_t row);
CmpOp parse_cmp_op(const std::string& s);
std::string cmp_op_name(CmpOp op);

// A priori knowledge: the covariate is modeled only where `condition` holds;
// elsewhere the simulation assigns a constant or carries the previous value
// forward.
struct Restriction {
  Condition condition;
  enum class Action { Assign, CarryForward } action = Action::Assign;
  double value = 0.0;
};

// Ties a covariate to a measurement-visit indicator earlier in the order.
struct VisitLink {
  std::string visit_indicator;
  int max_missed;  // s: forced visit after s consecutive misses
};

struct ObservedRange {
  double min = 0.0;
  double max = 0.0;
  bool constant() const { return min == max; }
};

struct CovariateSpec {
  std::string name;
  Covtype covtype = Covtype::Binary;
  std::optional<ModelFormula> formula;  // absent for categorical-time
  std::optional<Link> link;             // default depends on covtype
  std::optional<Truncation> truncation; // truncated-normal only
  std::optional<Restriction> restriction;
  std::optional<VisitLink> visit;
  std::vector<double> cat_time_thresholds;  // categorical-time
  std::string custom_id;                    // custom covtype plugin
  bool is_treatment = false;                // set when an intervention targets it

  Link effective_link() const;
};

// Per-row random access handed to custom covtype predictions; draws consume
// the owning trajectory's stream so plugins keep the determinism contract.
class RowRng {
 public:
  virtual ~RowRng() = default;
  virtual double uniform(std::size_t i) = 0;
  virtual double normal(std::size_t i) = 0;
};

using CustomFitFn = std::function<std::shared_ptr<void>(
    const CovariateSpec& spec, const Table& obs, const std::vector<std::size_t>& fit_rows,
    std::size_t order_index)>;
// Writes one simulated value per entry of rows_at_k into `out`.
using CustomPredictFn = std::function<void(
    const Table& obs, const Table& sim, const std::vector<std::size_t>& rows_at_k,
    const std::shared_ptr<void>& fitted, const std::string& time_name, int k,
    const std::string& covname, const CovariateSpec& spec, RowRng& rng,
    std::vector<double>& out)>;

class CovtypeRegistry {
 public:
  std::string register_custom_covtype(const std::string& id, CustomFitFn fit,
                                      CustomPredictFn predict);
  bool has(const std::string& id) const { return fns_.count(id) != 0; }
  const std::pair<CustomFitFn, CustomPredictFn>& get(const std::string& id) const;

 private:
  std::map<std::string, std::pair<CustomFitFn, CustomPredictFn>> fns_;
};

// Output of estimation step 1.a for one covariate: the fitted model(s) plus
// the observed ranges and constants simulation needs.
struct CovariateBundle {
  CovariateSpec spec;
  std::optional<DesignSchema> design;
  std::optional<DesignSchema> zero_design;  // zero-inflated indicator model
  std::optional<FittedModel> model;
  std::optional<FittedModel> zero_model;
  ObservedRange range;
  ObservedRange nonzero_range;          // zero-inflated
  bool constant = false;                // degenerate covariate: no fit
  double constant_value = 0.0;
  Levels response_levels;               // categorical / categorical-time
  std::shared_ptr<void> custom_fitted;
  std::optional<int> visit_force_s;     // set when this covariate is a visit indicator
  std::size_t n_fit_rows = 0;
};

struct FitContext {
  const Table& obs;
  const LevelRegistry& levels;
  int time_points;  // fits use records with 0 < k < time_points
  const CovtypeRegistry& plugins;
  // max_missed per visit-indicator column (from the VisitLinks naming it)
  std::map<std::string, int> visit_indicators;
};

// Rows eligible for this covariate's fit: k > 0, restriction condition true,
// current visit == 1 under a VisitLink, lag-1 value 0 for absorbing, and
// consecutive missed visits < s when the covariate is a visit indicator.
std::vector<std::size_t> covariate_fit_rows(const CovariateSpec& spec, const FitContext& ctx);

CovariateBundle fit_covariate(const CovariateSpec& spec, const FitContext& ctx,
                              std::size_t order_index);

// Number of consecutive times t in {k-1, k-2, ...} with visit indicator 0,
// stopping at the first 1.  Requires k >= 1.
int consecutive_missed(const Table& table, std::size_t visit_col, std::size_t subject, int k);

// A bundle bound to a concrete simulation-table layout.
struct SimBinding {
  const CovariateBundle* bundle = nullptr;
  std::size_t col = 0;
  std::unique_ptr<RowBuilder> rb, zero_rb;
  std::optional<std::size_t> restr_col;
  std::optional<std::size_t> visit_col;
  mutable std::vector<double> scratch;
  mutable std::vector<double> probs;
};

SimBinding bind_covariate(const CovariateBundle& bundle, const Table& sim);

// Draws (or deterministically assigns) the covariate value for `row` at time
// k and writes it into the bound column.  `subject_base` is the row of the
// owning trajectory at k=0.
double simulate_covariate(const SimBinding& b, Table& sim, std::size_t row,
                          std::size_t subject_base, int k, RngStream& rng);

int cat_time_category(int k, const std::vector<double>& thresholds);

}  // namespace gformula
