#include "gformula/np_estimators.hpp"

#include <cmath>
#include <limits>

#include "gformula/errors.hpp"

namespace gformula {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Counts {
  double n = 0;  // risk set size
  double d = 0;  // events of interest
  double c = 0;  // competing events
};

// Risk-set counts at k.  With a competing-event column, D=1 records count as
// competing events and stay in the risk set; records with missing outcome and
// no competing event are censored-out.
Counts counts_at(const PanelDataset& data, int k) {
  Counts out;
  const Table& t = data.table();
  const auto comp = data.compevent_col();
  for (std::size_t s = 0; s < data.n_subjects(); ++s) {
    if (static_cast<std::size_t>(k) >= t.length(s)) continue;
    const std::size_t r = t.row(s, static_cast<std::size_t>(k));
    const bool competing = comp && t.get(r, *comp) == 1.0;
    if (competing) {
      out.n += 1;
      out.c += 1;
      continue;
    }
    if (data.outcome_missing(r)) continue;
    out.n += 1;
    if (data.outcome(r) == 1.0) out.d += 1;
  }
  return out;
}

void check_horizon(const PanelDataset& data, int t) {
  if (t < 0 || t > data.max_time())
    throw BoundsError("horizon t=" + std::to_string(t) + " outside [0, " +
                      std::to_string(data.max_time()) + "]");
}

}  // namespace

double product_limit_risk(const PanelDataset& data, int t) {
  check_horizon(data, t);
  double surv = 1.0;
  for (int k = 0; k <= t; ++k) {
    const Counts c = counts_at(data, k);
    const double atrisk = c.n - c.c;  // competing records do not enter here
    if (atrisk == 0) return kNaN;     // not estimable from k on
    surv *= 1.0 - c.d / atrisk;
  }
  return 1.0 - surv;
}

double aalen_johansen_risk(const PanelDataset& data, int t) {
  check_horizon(data, t);
  double cif = 0.0;
  double surv = 1.0;  // all-cause survival through k-1
  for (int k = 0; k <= t; ++k) {
    const Counts c = counts_at(data, k);
    if (c.n == 0) return kNaN;
    cif += surv * c.d / c.n;
    surv *= 1.0 - (c.d + c.c) / c.n;
  }
  return cif;
}

double aalen_johansen_competing_risk(const PanelDataset& data, int t) {
  check_horizon(data, t);
  double cif = 0.0;
  double surv = 1.0;
  for (int k = 0; k <= t; ++k) {
    const Counts c = counts_at(data, k);
    if (c.n == 0) return kNaN;
    cif += surv * c.c / c.n;
    surv *= 1.0 - (c.d + c.c) / c.n;
  }
  return cif;
}

double all_cause_survival(const PanelDataset& data, int t) {
  check_horizon(data, t);
  double surv = 1.0;
  for (int k = 0; k <= t; ++k) {
    const Counts c = counts_at(data, k);
    if (c.n == 0) return kNaN;
    surv *= 1.0 - (c.d + c.c) / c.n;
  }
  return surv;
}

double empirical_eof_mean(const PanelDataset& data) {
  const Table& t = data.table();
  const auto K = static_cast<std::size_t>(data.max_time());
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t s = 0; s < data.n_subjects(); ++s) {
    if (t.length(s) != K + 1) continue;
    const std::size_t r = t.row(s, K);
    if (data.outcome_missing(r)) continue;
    sum += data.outcome(r);
    ++n;
  }
  return n == 0 ? kNaN : sum / static_cast<double>(n);
}

}  // namespace gformula
