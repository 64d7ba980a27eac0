#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace gformula {

// Categorical level set with a fixed deterministic ordering (lexicographic
// over the string form).  Cells of an `Indexed` column store the level index;
// `Valued` levels (built from distinct numeric values, e.g. factor(t0)) are
// matched against the raw cell value.
struct Levels {
  enum class Match { Indexed, Valued };
  Match match = Match::Indexed;
  std::vector<std::string> labels;
  std::vector<double> values;  // parallel to labels for Match::Valued

  std::size_t size() const { return labels.size(); }
  // Level index of a cell value, or nullopt when the value is not a level.
  std::optional<std::size_t> level_of(double cell) const;
};

class LevelRegistry {
 public:
  bool has(const std::string& column) const { return map_.count(column) != 0; }
  const Levels& get(const std::string& column) const;
  void put(const std::string& column, Levels levels) { map_[column] = std::move(levels); }
  const std::map<std::string, Levels>& all() const { return map_; }

 private:
  std::map<std::string, Levels> map_;
};

// Dense column-oriented table.  Rows are grouped by subject and each
// subject's rows cover times 0..len-1 contiguously, so the row of
// (subject s, time k) is offset(s) + k.
class Table {
 public:
  Table() = default;

  // Subjects with uniform `times` rows each.
  static Table uniform(std::size_t n_subjects, std::size_t times);
  // Subjects with per-subject row counts.
  static Table ragged(const std::vector<std::size_t>& lengths);

  std::size_t n_subjects() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t n_rows() const { return offsets_.empty() ? 0 : offsets_.back(); }
  std::size_t offset(std::size_t s) const { return offsets_[s]; }
  std::size_t length(std::size_t s) const { return offsets_[s + 1] - offsets_[s]; }
  std::size_t row(std::size_t s, std::size_t k) const { return offsets_[s] + k; }

  bool has_column(const std::string& name) const { return index_.count(name) != 0; }
  // Throws NameError listing available columns.
  std::size_t column(const std::string& name) const;
  std::size_t add_column(const std::string& name, double fill = 0.0);
  std::size_t n_columns() const { return cols_.size(); }
  const std::string& name(std::size_t c) const { return names_[c]; }
  const std::vector<std::string>& names() const { return names_; }

  double get(std::size_t row, std::size_t c) const { return cols_[c][row]; }
  void set(std::size_t row, std::size_t c, double v) { cols_[c][row] = v; }
  const std::vector<double>& col(std::size_t c) const { return cols_[c]; }
  std::vector<double>& col(std::size_t c) { return cols_[c]; }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<double>> cols_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::size_t> offsets_;
};

}  // namespace gformula
