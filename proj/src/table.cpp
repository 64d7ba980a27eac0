#include "gformula/table.hpp"

#include <cmath>
#include <sstream>

#include "gformula/errors.hpp"

namespace gformula {

std::optional<std::size_t> Levels::level_of(double cell) const {
  if (match == Match::Indexed) {
    if (cell < 0 || std::floor(cell) != cell) return std::nullopt;
    auto idx = static_cast<std::size_t>(cell);
    if (idx >= labels.size()) return std::nullopt;
    return idx;
  }
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] == cell) return i;
  return std::nullopt;
}

const Levels& LevelRegistry::get(const std::string& column) const {
  auto it = map_.find(column);
  if (it == map_.end()) throw NameError("no categorical levels registered for column '" + column + "'");
  return it->second;
}

Table Table::uniform(std::size_t n_subjects, std::size_t times) {
  Table t;
  t.offsets_.resize(n_subjects + 1);
  for (std::size_t s = 0; s <= n_subjects; ++s) t.offsets_[s] = s * times;
  return t;
}

Table Table::ragged(const std::vector<std::size_t>& lengths) {
  Table t;
  t.offsets_.resize(lengths.size() + 1, 0);
  for (std::size_t s = 0; s < lengths.size(); ++s) t.offsets_[s + 1] = t.offsets_[s] + lengths[s];
  return t;
}

std::size_t Table::column(const std::string& name) const {
  auto it = index_.find(name);
  if (it != index_.end()) return it->second;
  std::ostringstream os;
  os << "unknown column '" << name << "'; available:";
  for (const auto& n : names_) os << " " << n;
  throw NameError(os.str());
}

std::size_t Table::add_column(const std::string& name, double fill) {
  auto it = index_.find(name);
  if (it != index_.end()) return it->second;  // existing columns keep their values
  names_.push_back(name);
  cols_.emplace_back(n_rows(), fill);
  index_[name] = cols_.size() - 1;
  return cols_.size() - 1;
}

}  // namespace gformula
