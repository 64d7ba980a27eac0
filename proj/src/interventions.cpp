#include "gformula/interventions.hpp"

#include <algorithm>
#include <cmath>

#include "gformula/errors.hpp"

namespace gformula {

const InterventionRule* InterventionSpec::rule_for(const std::string& variable) const {
  for (const auto& r : rules)
    if (r.variable == variable) return &r;
  return nullptr;
}

InterventionSpec natural_course_spec() {
  // No rules: every treatment keeps its natural draw.
  return InterventionSpec{"Natural course", {}};
}

bool is_natural_course(const InterventionSpec& spec) {
  for (const auto& r : spec.rules)
    if (!std::holds_alternative<NaturalCourseRule>(r.rule)) return false;
  return true;
}

void grace_period_state_update(GraceTracker& state, bool condition_value, int k) {
  if (condition_value && !state.condition_met_ever) {
    state.condition_met_ever = true;
    state.first_met_time = k;
  }
}

double apply_rule(const Rule& rule, double natural_value, GraceTracker& tracker, int k,
                  const Table& sim, std::size_t row) {
  return std::visit(
      [&](const auto& r) -> double {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, StaticRule>) {
          if (static_cast<std::size_t>(k) >= r.values.size())
            throw InterventionError("static rule has no value for k=" + std::to_string(k));
          return r.values[static_cast<std::size_t>(k)];
        } else if constexpr (std::is_same_v<T, ThresholdRule>) {
          return std::min(r.max, std::max(r.min, natural_value));
        } else if constexpr (std::is_same_v<T, NaturalCourseRule>) {
          return natural_value;
        } else if constexpr (std::is_same_v<T, GracePeriodRule>) {
          grace_period_state_update(tracker, eval_condition(r.condition, sim, row), k);
          if (tracker.initiated) return 1.0;
          if (!tracker.condition_met_ever) return 0.0;
          double assigned = natural_value;
          if (k >= *tracker.first_met_time + r.grace) assigned = 1.0;
          if (assigned == 1.0) tracker.initiated = true;
          return assigned;
        } else {
          throw InterventionError("custom rules are applied through the engine batch path");
        }
      },
      rule);
}

std::string InterventionRegistry::register_custom_intervention(const std::string& id,
                                                               InterventionFn fn) {
  if (id.empty()) throw ArgumentError("custom intervention id must be non-empty");
  if (fns_.count(id)) throw ArgumentError("custom intervention '" + id + "' already registered");
  fns_[id] = std::move(fn);
  return id;
}

const InterventionFn& InterventionRegistry::get(const std::string& id) const {
  auto it = fns_.find(id);
  if (it == fns_.end()) throw NameError("unknown custom intervention '" + id + "'");
  return it->second;
}

}  // namespace gformula
