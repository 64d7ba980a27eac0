#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gformula/table.hpp"

namespace gformula {

enum class OutcomeKind { Survival, BinaryEof, ContinuousEof };

enum class ColumnType { Binary, Continuous, Categorical };

struct ColumnSpec {
  std::string name;
  ColumnType type = ColumnType::Continuous;
};

// Column-role mapping for the long-format input stream.
struct PanelSchema {
  std::string id_name;
  std::string time_name;
  std::string outcome_name;
  std::optional<std::string> compevent_name;
  std::vector<ColumnSpec> covariates;  // time-varying, simulation order
  std::vector<ColumnSpec> baseline;
  OutcomeKind outcome_kind = OutcomeKind::Survival;
  char delimiter = ',';
};

// Validated long-format longitudinal dataset.  Immutable after load; cells of
// categorical columns hold the level index in the registered level order and
// a missing outcome is stored as NaN.
class PanelDataset {
 public:
  static PanelDataset load(std::istream& in, const PanelSchema& schema);
  static PanelDataset load_file(const std::string& path, const PanelSchema& schema);

  // Writes delimited text that load() accepts; load(save(x)) == x.
  void save(std::ostream& out) const;

  const PanelSchema& schema() const { return schema_; }
  const Table& table() const { return table_; }
  const LevelRegistry& levels() const { return levels_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::size_t n_subjects() const { return ids_.size(); }

  // K: the largest last time index over subjects (follow-up end is K+1).
  int max_time() const { return max_time_; }
  // Number of records of subject s (= last time index + 1).
  std::size_t n_records(std::size_t s) const { return table_.length(s); }

  std::size_t outcome_col() const { return outcome_col_; }
  std::optional<std::size_t> compevent_col() const { return compevent_col_; }
  std::size_t time_col() const { return time_col_; }

  double outcome(std::size_t row) const { return table_.get(row, outcome_col_); }
  bool outcome_missing(std::size_t row) const;

  // Records at time k whose outcome is non-missing (the hazard-model /
  // nonparametric risk set); 0-coded censored records stay in.
  std::vector<std::size_t> risk_set(int k) const;

  // s draws with replacement from the original subjects, assigned new ids
  // 1..s; identity mapping when s == n (resampling disabled).
  struct Draw {
    std::string new_id;
    std::size_t subject;  // index of the original subject
  };
  std::vector<Draw> resample_baseline(std::size_t s, std::uint64_t seed) const;

  // New dataset of n subjects drawn with replacement (all records of each
  // drawn subject), for bootstrap replicates.
  PanelDataset resample_subjects(std::uint64_t seed) const;

 private:
  PanelSchema schema_;
  std::vector<std::string> ids_;
  Table table_;
  LevelRegistry levels_;
  int max_time_ = 0;
  std::size_t outcome_col_ = 0;
  std::size_t time_col_ = 0;
  std::optional<std::size_t> compevent_col_;

  void validate() const;
  friend class PanelBuilder;
};

}  // namespace gformula
