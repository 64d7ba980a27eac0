#include <doctest.h>

#include <cmath>

#include "gformula/errors.hpp"
#include "gformula/np_estimators.hpp"
#include "helpers.hpp"

using namespace gformula;
using test_helpers::panel_from_csv;

namespace {

PanelSchema survival_schema(bool compevent) {
  PanelSchema s;
  s.id_name = "id";
  s.time_name = "t0";
  s.outcome_name = "Y";
  if (compevent) s.compevent_name = "D";
  return s;
}

}  // namespace

TEST_CASE("product-limit risk on the hand fixture: hazards 1/4 then 1/3") {
  // k=0: 4 at risk, 1 event; k=1: 3 at risk, 1 event.
  const char* csv =
      "id,t0,Y\n"
      "1,0,1\n"
      "2,0,0\n"
      "2,1,1\n"
      "3,0,0\n"
      "3,1,0\n"
      "4,0,0\n"
      "4,1,0\n";
  auto ds = panel_from_csv(csv, survival_schema(false));
  CHECK(std::fabs(product_limit_risk(ds, 0) - 0.25) < 1e-12);
  CHECK(std::fabs(product_limit_risk(ds, 1) - 0.5) < 1e-12);
  CHECK_THROWS_AS(product_limit_risk(ds, 2), BoundsError);
}

TEST_CASE("no events means zero risk at every horizon") {
  const char* csv =
      "id,t0,Y\n"
      "1,0,0\n"
      "1,1,0\n"
      "2,0,0\n";
  auto ds = panel_from_csv(csv, survival_schema(false));
  CHECK(product_limit_risk(ds, 0) == 0.0);
  CHECK(product_limit_risk(ds, 1) == 0.0);
}

TEST_CASE("without censoring the product-limit equals the empirical cumulative proportion") {
  // 6 subjects, events at intervals 1, 2 and 3; no censoring.
  const char* csv =
      "id,t0,Y\n"
      "1,0,1\n"
      "2,0,0\n"
      "2,1,1\n"
      "3,0,0\n"
      "3,1,0\n"
      "3,2,1\n"
      "4,0,0\n"
      "4,1,0\n"
      "4,2,0\n"
      "5,0,0\n"
      "5,1,0\n"
      "5,2,0\n"
      "6,0,0\n"
      "6,1,1\n";
  auto ds = panel_from_csv(csv, survival_schema(false));
  CHECK(product_limit_risk(ds, 0) == doctest::Approx(1.0 / 6).epsilon(1e-12));
  CHECK(product_limit_risk(ds, 1) == doctest::Approx(3.0 / 6).epsilon(1e-12));
  CHECK(product_limit_risk(ds, 2) == doctest::Approx(4.0 / 6).epsilon(1e-12));
  // Monotone in t.
  double prev = 0.0;
  for (int t = 0; t <= ds.max_time(); ++t) {
    const double r = product_limit_risk(ds, t);
    CHECK(r >= prev);
    prev = r;
  }
}

TEST_CASE("4-subject Aalen-Johansen hand fixture") {
  // Event at k=0; competing at k=1; survivor through k=2; censored at k=1.
  const char* csv =
      "id,t0,D,Y\n"
      "1,0,0,1\n"
      "2,0,0,0\n"
      "2,1,1,NA\n"
      "3,0,0,0\n"
      "3,1,0,0\n"
      "3,2,0,0\n"
      "4,0,0,0\n"
      "4,1,0,NA\n";
  auto ds = panel_from_csv(csv, survival_schema(true));
  // Hand tables: k=0: n=4, d=1, c=0 -> CIF_e=1/4, S=3/4.
  //              k=1: n=2 (competing record stays, censored leaves), d=0, c=1
  //                   -> CIF_c = (1/2)(3/4) = 3/8, S = 3/8.
  //              k=2: n=1, no events.
  CHECK(std::fabs(aalen_johansen_risk(ds, 0) - 0.25) < 1e-12);
  CHECK(std::fabs(aalen_johansen_risk(ds, 1) - 0.25) < 1e-12);
  CHECK(std::fabs(aalen_johansen_risk(ds, 2) - 0.25) < 1e-12);
  CHECK(std::fabs(aalen_johansen_competing_risk(ds, 1) - 0.375) < 1e-12);
  CHECK(std::fabs(all_cause_survival(ds, 2) - 0.375) < 1e-12);
}

TEST_CASE("CIF decomposition identity holds exactly without censoring") {
  const char* csv =
      "id,t0,D,Y\n"
      "1,0,0,1\n"
      "2,0,1,NA\n"
      "3,0,0,0\n"
      "3,1,0,1\n"
      "4,0,0,0\n"
      "4,1,1,NA\n"
      "5,0,0,0\n"
      "5,1,0,0\n"
      "5,2,0,0\n";
  auto ds = panel_from_csv(csv, survival_schema(true));
  for (int t = 0; t <= 2; ++t) {
    const double sum = aalen_johansen_risk(ds, t) + aalen_johansen_competing_risk(ds, t) +
                       all_cause_survival(ds, t);
    CHECK(std::fabs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("without competing events Aalen-Johansen reduces to the product limit") {
  const char* csv =
      "id,t0,D,Y\n"
      "1,0,0,1\n"
      "2,0,0,0\n"
      "2,1,0,1\n"
      "3,0,0,0\n"
      "3,1,0,0\n"
      "3,2,0,0\n";
  auto ds = panel_from_csv(csv, survival_schema(true));
  for (int t = 0; t <= 2; ++t)
    CHECK(aalen_johansen_risk(ds, t) == doctest::Approx(product_limit_risk(ds, t)).epsilon(1e-14));
}

TEST_CASE("estimators are invariant to subject ordering") {
  const char* csv1 =
      "id,t0,Y\n"
      "a,0,1\n"
      "b,0,0\n"
      "b,1,1\n"
      "c,0,0\n"
      "c,1,0\n";
  const char* csv2 =
      "id,t0,Y\n"
      "c,0,0\n"
      "c,1,0\n"
      "a,0,1\n"
      "b,0,0\n"
      "b,1,1\n";
  auto d1 = panel_from_csv(csv1, survival_schema(false));
  auto d2 = panel_from_csv(csv2, survival_schema(false));
  for (int t = 0; t <= 1; ++t) CHECK(product_limit_risk(d1, t) == product_limit_risk(d2, t));
}

TEST_CASE("risk sets emptying out yield missing values from that horizon") {
  const char* csv =
      "id,t0,Y\n"
      "1,0,0\n"
      "1,1,NA\n"
      "2,0,0\n"
      "2,1,NA\n";
  auto ds = panel_from_csv(csv, survival_schema(false));
  CHECK(product_limit_risk(ds, 0) == 0.0);
  CHECK(std::isnan(product_limit_risk(ds, 1)));
}

TEST_CASE("empirical end-of-follow-up mean averages the completers") {
  PanelSchema s;
  s.id_name = "id";
  s.time_name = "t0";
  s.outcome_name = "Y";
  s.outcome_kind = OutcomeKind::BinaryEof;
  const char* csv =
      "id,t0,Y\n"
      "1,0,0\n"
      "1,1,0\n"
      "2,0,0\n"
      "2,1,1\n"
      "3,0,0\n"
      "3,1,1\n"
      "4,0,0\n"
      "4,1,NA\n";
  auto ds = panel_from_csv(csv, s);
  CHECK(empirical_eof_mean(ds) == doctest::Approx(2.0 / 3).epsilon(1e-14));

  const char* constant =
      "id,t0,Y\n"
      "1,0,0\n"
      "1,1,1\n"
      "2,0,0\n"
      "2,1,1\n";
  CHECK(empirical_eof_mean(panel_from_csv(constant, s)) == 1.0);

  const char* none =
      "id,t0,Y\n"
      "1,0,0\n"
      "1,1,NA\n";
  CHECK(std::isnan(empirical_eof_mean(panel_from_csv(none, s))));
}
