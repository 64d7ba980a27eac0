#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "gformula/covariates.hpp"
#include "gformula/table.hpp"

namespace gformula {

// Treatment rules applied to the natural (drawn) value of treatment at k.
struct StaticRule {
  std::vector<double> values;  // length K+1, indexed by k
};
struct ThresholdRule {
  double min;  // -inf when no minimum
  double max;  // +inf when no maximum
};
struct NaturalCourseRule {};
// "Start treatment within m intervals of the condition first holding":
// 0 before the condition holds, the natural draw during the grace window,
// forced 1 from first-condition-time + m on; treatment absorbs once 1.
struct GracePeriodRule {
  Condition condition;
  int grace;  // m >= 1
};
struct CustomRule {
  std::string plugin_id;
  std::vector<double> parameters;
};
using Rule = std::variant<StaticRule, ThresholdRule, NaturalCourseRule, GracePeriodRule, CustomRule>;

struct InterventionRule {
  std::string variable;            // a treatment covariate in the simulation order
  Rule rule;
  std::optional<std::set<int>> applicable_times;  // default: all of 0..K
  bool applies_at(int k) const {
    return !applicable_times || applicable_times->count(k) != 0;
  }
};

// A named strategy; multiple rules form a joint intervention.
struct InterventionSpec {
  std::string label;
  std::vector<InterventionRule> rules;

  const InterventionRule* rule_for(const std::string& variable) const;
};

// The always-computed benchmark assigning every treatment its natural value.
InterventionSpec natural_course_spec();

bool is_natural_course(const InterventionSpec& spec);

// Per-trajectory, per-rule grace-period state.
struct GraceTracker {
  bool condition_met_ever = false;
  std::optional<int> first_met_time;
  bool initiated = false;
};

void grace_period_state_update(GraceTracker& state, bool condition_value, int k);

// Assigned treatment value under `rule` given the natural draw.  `tracker`
// must outlive the trajectory for grace-period rules.
double apply_rule(const Rule& rule, double natural_value, GraceTracker& tracker, int k,
                  const Table& sim, std::size_t row);

// Custom intervention plugins mutate the treatment column (and any auxiliary
// columns) in place over the rows at time k; the accumulated simulated values
// for times < k are in the same table.  The treatment cell holds the natural
// draw on entry, so plugins implementing "do not intervene" leave it alone.
using InterventionFn = std::function<void(Table& sim, const std::vector<std::size_t>& rows_at_k,
                                          const std::string& variable,
                                          const std::vector<double>& parameters,
                                          const std::string& time_name, int k)>;

class InterventionRegistry {
 public:
  std::string register_custom_intervention(const std::string& id, InterventionFn fn);
  bool has(const std::string& id) const { return fns_.count(id) != 0; }
  const InterventionFn& get(const std::string& id) const;

 private:
  std::map<std::string, InterventionFn> fns_;
};

}  // namespace gformula
