#pragma once

#include <cmath>
#include <sstream>
#include <string>

#include "gformula/panel.hpp"

namespace test_helpers {

inline gformula::PanelDataset panel_from_csv(const std::string& csv,
                                             const gformula::PanelSchema& schema) {
  std::istringstream in(csv);
  return gformula::PanelDataset::load(in, schema);
}

inline bool cells_equal(double a, double b) {
  if (std::isnan(a) && std::isnan(b)) return true;
  return a == b;
}

inline bool panels_equal(const gformula::PanelDataset& a, const gformula::PanelDataset& b) {
  if (a.ids() != b.ids()) return false;
  const auto& ta = a.table();
  const auto& tb = b.table();
  if (ta.names() != tb.names() || ta.n_rows() != tb.n_rows()) return false;
  for (std::size_t s = 0; s < a.n_subjects(); ++s)
    if (ta.length(s) != tb.length(s)) return false;
  for (std::size_t r = 0; r < ta.n_rows(); ++r)
    for (std::size_t c = 0; c < ta.n_columns(); ++c)
      if (!cells_equal(ta.get(r, c), tb.get(r, c))) return false;
  return true;
}

}  // namespace test_helpers
