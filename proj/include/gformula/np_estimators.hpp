#pragma once

#include <vector>

#include "gformula/panel.hpp"

namespace gformula {

// Nonparametric natural-course benchmarks.  Completely unadjusted: no
// censoring weights; records with a missing outcome leave the risk set,
// records coded 0 stay.

// 1 - prod_{k<=t} (1 - d_k / n_k).  Competing events absent or treated as
// censoring.  Returns NaN from the first horizon where n_k = 0 while events
// remain possible later.
double product_limit_risk(const PanelDataset& data, int t);

// Aalen-Johansen cause-specific cumulative incidence of the event of
// interest by t+1; competing-event records stay in the risk set count.
double aalen_johansen_risk(const PanelDataset& data, int t);

// Companion quantities for the decomposition identity
// CIF_event + CIF_competing + survival = 1.
double aalen_johansen_competing_risk(const PanelDataset& data, int t);
double all_cause_survival(const PanelDataset& data, int t);

// Mean outcome over subjects with a non-missing outcome on line K.
// Returns NaN when there are no completers.
double empirical_eof_mean(const PanelDataset& data);

}  // namespace gformula
