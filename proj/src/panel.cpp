#include "gformula/panel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "gformula/errors.hpp"
#include "gformula/rng.hpp"

namespace gformula {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool is_missing_token(const std::string& t) { return t.empty() || t == "NA"; }

bool parse_number(const std::string& t, double& out) {
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size();
}

std::string format_number(double v) {
  if (v == std::floor(v) && std::fabs(v) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f", v);
    return buf;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct RawSubject {
  std::string id;
  // time -> row of raw tokens per data column
  std::map<long, std::vector<std::string>> rows;
};

}  // namespace

bool PanelDataset::outcome_missing(std::size_t row) const {
  return std::isnan(table_.get(row, outcome_col_));
}

PanelDataset PanelDataset::load_file(const std::string& path, const PanelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file '" + path + "'");
  return load(in, schema);
}

PanelDataset PanelDataset::load(std::istream& in, const PanelSchema& schema) {
  std::string header;
  if (!std::getline(in, header)) throw StructuralError("empty input: header row required");
  const auto header_names = split(header, schema.delimiter);
  std::map<std::string, std::size_t> header_index;
  for (std::size_t i = 0; i < header_names.size(); ++i) header_index[header_names[i]] = i;

  auto require_col = [&](const std::string& name) -> std::size_t {
    auto it = header_index.find(name);
    if (it == header_index.end()) throw StructuralError("column '" + name + "' not found in header");
    return it->second;
  };

  const std::size_t id_idx = require_col(schema.id_name);
  const std::size_t time_idx = require_col(schema.time_name);
  require_col(schema.outcome_name);
  if (schema.compevent_name) require_col(*schema.compevent_name);

  // Data columns in canonical order: time, outcome, compevent?, covariates, baseline.
  std::vector<std::string> data_cols;
  data_cols.push_back(schema.time_name);
  data_cols.push_back(schema.outcome_name);
  if (schema.compevent_name) data_cols.push_back(*schema.compevent_name);
  for (const auto& c : schema.covariates) data_cols.push_back(c.name);
  for (const auto& c : schema.baseline) data_cols.push_back(c.name);
  std::vector<std::size_t> src_idx;
  for (const auto& n : data_cols) src_idx.push_back(require_col(n));

  // Collect raw rows grouped by id; subjects ordered lexicographically by id.
  std::map<std::string, RawSubject> subjects;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto toks = split(line, schema.delimiter);
    if (toks.size() != header_names.size())
      throw StructuralError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header_names.size()) + " fields, got " +
                            std::to_string(toks.size()));
    const std::string id = toks[id_idx];
    if (id.empty()) throw StructuralError("line " + std::to_string(line_no) + ": empty id");
    double tval;
    if (!parse_number(toks[time_idx], tval) || tval != std::floor(tval) || tval < 0)
      throw StructuralError("subject '" + id + "': time index '" + toks[time_idx] +
                            "' is not a nonnegative integer");
    auto k = static_cast<long>(tval);
    auto& subj = subjects[id];
    subj.id = id;
    if (subj.rows.count(k))
      throw StructuralError("subject '" + id + "': duplicate record at k=" + std::to_string(k));
    std::vector<std::string> row;
    row.reserve(src_idx.size());
    for (auto i : src_idx) row.push_back(toks[i]);
    subj.rows[k] = std::move(row);
  }
  if (subjects.empty()) throw StructuralError("no data rows");

  // Structural checks: times start at 0 and increment by 1 with no gaps.
  for (const auto& [id, subj] : subjects) {
    long expect = 0;
    for (const auto& [k, row] : subj.rows) {
      if (k != expect) {
        if (expect == 0)
          throw StructuralError("subject '" + id + "': time does not start at 0");
        throw StructuralError("subject '" + id + "': time gap at k=" + std::to_string(expect));
      }
      ++expect;
    }
  }

  PanelDataset ds;
  ds.schema_ = schema;

  std::vector<std::size_t> lengths;
  for (const auto& [id, subj] : subjects) {
    ds.ids_.push_back(id);
    lengths.push_back(subj.rows.size());
  }
  ds.table_ = Table::ragged(lengths);

  // Column typing: categorical levels collected first for deterministic codes.
  auto type_of = [&](const std::string& name) -> std::optional<ColumnType> {
    for (const auto& c : schema.covariates)
      if (c.name == name) return c.type;
    for (const auto& c : schema.baseline)
      if (c.name == name) return c.type;
    return std::nullopt;
  };
  for (std::size_t c = 0; c < data_cols.size(); ++c) {
    auto t = type_of(data_cols[c]);
    if (t && *t == ColumnType::Categorical) {
      std::set<std::string> seen;
      for (const auto& [id, subj] : subjects)
        for (const auto& [k, row] : subj.rows) seen.insert(row[c]);
      Levels lv;
      lv.match = Levels::Match::Indexed;
      lv.labels.assign(seen.begin(), seen.end());
      ds.levels_.put(data_cols[c], std::move(lv));
    }
  }

  for (const auto& n : data_cols) ds.table_.add_column(n);
  ds.time_col_ = ds.table_.column(schema.time_name);
  ds.outcome_col_ = ds.table_.column(schema.outcome_name);
  if (schema.compevent_name) ds.compevent_col_ = ds.table_.column(*schema.compevent_name);

  const bool survival = schema.outcome_kind == OutcomeKind::Survival;
  std::size_t s = 0;
  for (const auto& [id, subj] : subjects) {
    const long last_k = static_cast<long>(subj.rows.size()) - 1;
    for (const auto& [k, row] : subj.rows) {
      const std::size_t r = ds.table_.row(s, static_cast<std::size_t>(k));
      for (std::size_t c = 0; c < data_cols.size(); ++c) {
        const std::string& name = data_cols[c];
        const std::string& tok = row[c];
        const std::size_t tc = ds.table_.column(name);
        const bool is_outcome = name == schema.outcome_name;
        auto t = type_of(name);
        if (t && *t == ColumnType::Categorical) {
          const auto& lv = ds.levels_.get(name);
          auto it = std::lower_bound(lv.labels.begin(), lv.labels.end(), tok);
          ds.table_.set(r, tc, static_cast<double>(it - lv.labels.begin()));
          continue;
        }
        if (is_missing_token(tok)) {
          // Only the outcome may be missing.  End-of-follow-up outcomes are
          // meaningful only on line K, so missing is fine anywhere for them.
          if (!is_outcome)
            throw ValidationError("subject '" + id + "': missing value in column '" + name +
                                  "' at k=" + std::to_string(k));
          ds.table_.set(r, tc, std::nan(""));
          continue;
        }
        double v;
        if (!parse_number(tok, v))
          throw ValidationError("subject '" + id + "': non-numeric value '" + tok +
                                "' in column '" + name + "' at k=" + std::to_string(k));
        const bool eof_ignored = !survival && is_outcome && k < last_k;
        if (t && *t == ColumnType::Binary && !eof_ignored && v != 0.0 && v != 1.0)
          throw ValidationError("subject '" + id + "': binary column '" + name + "' has value " +
                                tok + " outside {0,1} at k=" + std::to_string(k));
        if (is_outcome && !eof_ignored) {
          const bool binary_outcome = survival || schema.outcome_kind == OutcomeKind::BinaryEof;
          if (binary_outcome && v != 0.0 && v != 1.0)
            throw ValidationError("subject '" + id + "': outcome value " + tok +
                                  " outside {0,1} at k=" + std::to_string(k));
        }
        if (schema.compevent_name && name == *schema.compevent_name && v != 0.0 && v != 1.0)
          throw ValidationError("subject '" + id + "': competing event value " + tok +
                                " outside {0,1} at k=" + std::to_string(k));
        ds.table_.set(r, tc, v);
      }
    }
    ++s;
  }

  ds.max_time_ = 0;
  for (std::size_t i = 0; i < ds.n_subjects(); ++i)
    ds.max_time_ = std::max(ds.max_time_, static_cast<int>(ds.table_.length(i)) - 1);

  ds.validate();
  return ds;
}

void PanelDataset::validate() const {
  const bool survival = schema_.outcome_kind == OutcomeKind::Survival;
  for (std::size_t s = 0; s < n_subjects(); ++s) {
    const std::size_t len = table_.length(s);
    // Baseline covariates constant within subject.
    for (const auto& b : schema_.baseline) {
      const std::size_t c = table_.column(b.name);
      const double v0 = table_.get(table_.row(s, 0), c);
      for (std::size_t k = 1; k < len; ++k)
        if (table_.get(table_.row(s, k), c) != v0)
          throw ValidationError("subject '" + ids_[s] + "': baseline covariate '" + b.name +
                                "' varies within subject");
    }
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t r = table_.row(s, k);
      const bool last = k + 1 == len;
      if (compevent_col_ && table_.get(r, *compevent_col_) == 1.0) {
        if (!outcome_missing(r))
          throw ValidationError("subject '" + ids_[s] +
                                "': competing event at k=" + std::to_string(k) +
                                " requires a missing outcome on that record");
        if (!last)
          throw ValidationError("subject '" + ids_[s] +
                                "': records continue past competing event at k=" + std::to_string(k));
      }
      if (survival && !last) {
        if (outcome_missing(r))
          throw ValidationError("subject '" + ids_[s] + "': missing outcome at k=" +
                                std::to_string(k) + " must be the last record");
        if (outcome(r) == 1.0)
          throw ValidationError("subject '" + ids_[s] + "': records continue past event at k=" +
                                std::to_string(k));
      }
    }
  }
}

std::vector<std::size_t> PanelDataset::risk_set(int k) const {
  if (k < 0 || k > max_time_)
    throw BoundsError("risk_set: k=" + std::to_string(k) + " outside [0, " +
                      std::to_string(max_time_) + "]");
  std::vector<std::size_t> rows;
  for (std::size_t s = 0; s < n_subjects(); ++s) {
    if (static_cast<std::size_t>(k) >= table_.length(s)) continue;
    const std::size_t r = table_.row(s, static_cast<std::size_t>(k));
    if (!outcome_missing(r)) rows.push_back(r);
  }
  return rows;
}

std::vector<PanelDataset::Draw> PanelDataset::resample_baseline(std::size_t s,
                                                                std::uint64_t seed) const {
  if (s == 0) throw ArgumentError("resample_baseline: s must be >= 1");
  std::vector<Draw> out;
  out.reserve(s);
  if (s == n_subjects()) {
    for (std::size_t i = 0; i < s; ++i) out.push_back({std::to_string(i + 1), i});
    return out;
  }
  RngStream rng(mix_seed({seed, rng_tag::kNsimulResample}));
  const std::size_t n = n_subjects();
  for (std::size_t i = 0; i < s; ++i) {
    auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
    if (j >= n) j = n - 1;
    out.push_back({std::to_string(i + 1), j});
  }
  return out;
}

PanelDataset PanelDataset::resample_subjects(std::uint64_t seed) const {
  RngStream rng(seed);
  const std::size_t n = n_subjects();
  std::vector<std::size_t> picks(n);
  for (auto& p : picks) {
    auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
    p = j >= n ? n - 1 : j;
  }

  PanelDataset ds;
  ds.schema_ = schema_;
  ds.levels_ = levels_;
  ds.max_time_ = 0;
  std::vector<std::size_t> lengths(n);
  for (std::size_t i = 0; i < n; ++i) {
    lengths[i] = table_.length(picks[i]);
    ds.ids_.push_back(std::to_string(i + 1));
    ds.max_time_ = std::max(ds.max_time_, static_cast<int>(lengths[i]) - 1);
  }
  ds.table_ = Table::ragged(lengths);
  for (const auto& nme : table_.names()) ds.table_.add_column(nme);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = table_.offset(picks[i]);
    const std::size_t dst = ds.table_.offset(i);
    for (std::size_t k = 0; k < lengths[i]; ++k)
      for (std::size_t c = 0; c < table_.n_columns(); ++c)
        ds.table_.set(dst + k, c, table_.get(src + k, c));
  }
  ds.time_col_ = time_col_;
  ds.outcome_col_ = outcome_col_;
  ds.compevent_col_ = compevent_col_;
  return ds;
}

void PanelDataset::save(std::ostream& out) const {
  const char d = schema_.delimiter;
  out << schema_.id_name;
  for (const auto& n : table_.names()) out << d << n;
  out << "\n";
  for (std::size_t s = 0; s < n_subjects(); ++s) {
    for (std::size_t k = 0; k < table_.length(s); ++k) {
      const std::size_t r = table_.row(s, k);
      out << ids_[s];
      for (std::size_t c = 0; c < table_.n_columns(); ++c) {
        out << d;
        const double v = table_.get(r, c);
        if (std::isnan(v)) {
          out << "NA";
        } else if (levels_.has(table_.name(c))) {
          out << levels_.get(table_.name(c)).labels[static_cast<std::size_t>(v)];
        } else {
          out << format_number(v);
        }
      }
      out << "\n";
    }
  }
}

}  // namespace gformula
