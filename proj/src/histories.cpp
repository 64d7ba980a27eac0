#include "gformula/histories.hpp"

#include <algorithm>

#include "gformula/errors.hpp"

namespace gformula {

std::string HistoryRegistry::register_custom(const std::string& prefix, HistoryFn fn) {
  static const char* kReserved[] = {"lag", "cumavg", "lag_cumavg"};
  for (const char* r : kReserved)
    if (prefix == r)
      throw ArgumentError("custom history prefix '" + prefix + "' collides with a reserved prefix");
  if (prefix.empty()) throw ArgumentError("custom history prefix must be non-empty");
  if (fns_.count(prefix)) throw ArgumentError("custom history '" + prefix + "' already registered");
  fns_[prefix] = std::move(fn);
  return prefix;
}

const HistoryFn& HistoryRegistry::get(const std::string& id) const {
  auto it = fns_.find(id);
  if (it == fns_.end()) throw NameError("unknown custom history '" + id + "'");
  return it->second;
}

std::vector<std::string> history_columns(const HistorySpec& spec, const std::string& var) {
  std::vector<std::string> out;
  switch (spec.kind) {
    case HistoryKind::Lagged:
      for (int i = 1; i <= spec.max_lag; ++i) out.push_back("lag" + std::to_string(i) + "_" + var);
      break;
    case HistoryKind::Cumavg:
      out.push_back("cumavg_" + var);
      break;
    case HistoryKind::Lagavg:
      for (int i = 1; i <= spec.max_lag; ++i)
        out.push_back("lag_cumavg" + std::to_string(i) + "_" + var);
      break;
    case HistoryKind::Custom:
      out.push_back(spec.custom_id + "_" + var);
      break;
  }
  return out;
}

void ensure_history_columns(Table& table, const HistorySpec& spec) {
  if (spec.kind == HistoryKind::Custom) return;  // plugins add their own columns
  for (const auto& var : spec.variables)
    for (const auto& name : history_columns(spec, var))
      if (!table.has_column(name)) table.add_column(name);
}

void apply_history(Table& table, const HistorySpec& spec, int k, const HistoryRegistry& registry,
                   const std::string& time_name, const std::string& id_name) {
  if (spec.kind == HistoryKind::Custom) {
    registry.get(spec.custom_id)(table, spec.variables, time_name, k, id_name);
    return;
  }
  ensure_history_columns(table, spec);
  const auto uk = static_cast<std::size_t>(k);
  for (const auto& var : spec.variables) {
    const std::size_t raw = table.column(var);
    switch (spec.kind) {
      case HistoryKind::Lagged:
        for (int i = 1; i <= spec.max_lag; ++i) {
          const std::size_t dst = table.column("lag" + std::to_string(i) + "_" + var);
          for (std::size_t s = 0; s < table.n_subjects(); ++s) {
            if (uk >= table.length(s)) continue;
            const std::size_t r = table.row(s, uk);
            table.set(r, dst, k >= i ? table.get(r - static_cast<std::size_t>(i), raw) : 0.0);
          }
        }
        break;
      case HistoryKind::Cumavg: {
        const std::size_t dst = table.column("cumavg_" + var);
        for (std::size_t s = 0; s < table.n_subjects(); ++s) {
          if (uk >= table.length(s)) continue;
          const std::size_t base = table.offset(s);
          double sum = 0.0;
          for (std::size_t t = 0; t <= uk; ++t) sum += table.get(base + t, raw);
          table.set(base + uk, dst, sum / static_cast<double>(uk + 1));
        }
        break;
      }
      case HistoryKind::Lagavg:
        for (int i = 1; i <= spec.max_lag; ++i) {
          const std::size_t dst = table.column("lag_cumavg" + std::to_string(i) + "_" + var);
          for (std::size_t s = 0; s < table.n_subjects(); ++s) {
            if (uk >= table.length(s)) continue;
            const std::size_t base = table.offset(s);
            if (k < i) {
              table.set(base + uk, dst, 0.0);
              continue;
            }
            const auto upto = uk - static_cast<std::size_t>(i);
            double sum = 0.0;
            for (std::size_t t = 0; t <= upto; ++t) sum += table.get(base + t, raw);
            table.set(base + uk, dst, sum / static_cast<double>(upto + 1));
          }
        }
        break;
      case HistoryKind::Custom:
        break;
    }
  }
}

void materialize_histories(Table& table, const std::vector<HistorySpec>& specs,
                           const HistoryRegistry& registry, const std::string& time_name,
                           const std::string& id_name) {
  std::size_t max_len = 0;
  for (std::size_t s = 0; s < table.n_subjects(); ++s) max_len = std::max(max_len, table.length(s));
  for (const auto& spec : specs) ensure_history_columns(table, spec);
  for (std::size_t k = 0; k < max_len; ++k)
    for (const auto& spec : specs)
      apply_history(table, spec, static_cast<int>(k), registry, time_name, id_name);
}

}  // namespace gformula
