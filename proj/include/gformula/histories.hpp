#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gformula/table.hpp"

namespace gformula {

enum class HistoryKind { Lagged, Cumavg, Lagavg, Custom };

// A derived-history declaration.  max_lag is inferred from the largest lag
// index any model formula references (lag2_X forces r >= 2).
struct HistorySpec {
  HistoryKind kind;
  std::vector<std::string> variables;
  int max_lag = 1;            // lagged / lagavg
  std::string custom_id;      // custom
};

// Custom history functions update the table in place at time k and must
// behave identically on observed tables (possibly fewer rows per id) and
// simulated tables (exactly K+1 rows per id).  They return nothing.
using HistoryFn = std::function<void(Table& table, const std::vector<std::string>& variables,
                                     const std::string& time_name, int k,
                                     const std::string& id_name)>;

class HistoryRegistry {
 public:
  // Registers a plugin writing columns named `prefix_<var>`; prefixes
  // colliding with the built-ins (lag, cumavg, lag_cumavg) are rejected.
  std::string register_custom(const std::string& prefix, HistoryFn fn);
  const HistoryFn& get(const std::string& id) const;
  bool has(const std::string& id) const { return fns_.count(id) != 0; }

 private:
  std::map<std::string, HistoryFn> fns_;
};

// Column names produced by a spec for one variable.
std::vector<std::string> history_columns(const HistorySpec& spec, const std::string& var);

// Ensures the output columns of `spec` exist on `table`.
void ensure_history_columns(Table& table, const HistorySpec& spec);

// Updates the spec's derived columns at time k for every subject that has a
// row at k.  History values at k are a pure function of raw values at times
// <= k; repeated application at the same k is idempotent.
void apply_history(Table& table, const HistorySpec& spec, int k, const HistoryRegistry& registry,
                   const std::string& time_name, const std::string& id_name);

// Applies every spec at every time over an observed table (fit preprocessing).
void materialize_histories(Table& table, const std::vector<HistorySpec>& specs,
                           const HistoryRegistry& registry, const std::string& time_name,
                           const std::string& id_name);

}  // namespace gformula
