#include <doctest.h>

#include <cmath>

#include "gformula/errors.hpp"
#include "gformula/interventions.hpp"
#include "gformula/rng.hpp"

using namespace gformula;

namespace {

Table cond_table(std::size_t times, const std::string& var) {
  Table t = Table::uniform(1, times);
  t.add_column(var);
  return t;
}

}  // namespace

TEST_CASE("threshold clamps the natural value into the range") {
  Table t = cond_table(1, "z");
  GraceTracker tr;
  Rule rule = ThresholdRule{2.0, std::numeric_limits<double>::infinity()};
  CHECK(apply_rule(rule, 1.5, tr, 0, t, 0) == 2.0);
  CHECK(apply_rule(rule, 3.7, tr, 0, t, 0) == 3.7);
  Rule capped = ThresholdRule{-std::numeric_limits<double>::infinity(), 1.0};
  CHECK(apply_rule(capped, 1.5, tr, 0, t, 0) == 1.0);
}

TEST_CASE("static rules assign the per-time value") {
  Table t = cond_table(3, "z");
  GraceTracker tr;
  Rule rule = StaticRule{{0.0, 0.0, 0.0}};
  for (int k = 0; k < 3; ++k) CHECK(apply_rule(rule, 1.0, tr, k, t, 0) == 0.0);
  CHECK_THROWS_AS(apply_rule(rule, 1.0, tr, 3, t, 0), InterventionError);
}

TEST_CASE("natural course and wide-open thresholds are extensionally identical") {
  Table t = cond_table(1, "z");
  GraceTracker tr;
  Rule natural = NaturalCourseRule{};
  Rule open = ThresholdRule{-std::numeric_limits<double>::infinity(),
                            std::numeric_limits<double>::infinity()};
  RngStream rng(8);
  for (int i = 0; i < 200; ++i) {
    const double nat = rng.normal() * 10.0;
    CHECK(apply_rule(natural, nat, tr, 0, t, 0) == apply_rule(open, nat, tr, 0, t, 0));
  }
}

TEST_CASE("grace tracker latches the first condition time") {
  GraceTracker tr;
  grace_period_state_update(tr, false, 0);
  CHECK_FALSE(tr.condition_met_ever);
  grace_period_state_update(tr, true, 3);
  CHECK(tr.condition_met_ever);
  CHECK(tr.first_met_time == 3);
  grace_period_state_update(tr, true, 5);
  CHECK(tr.first_met_time == 3);

  GraceTracker at0;
  grace_period_state_update(at0, true, 0);
  CHECK(at0.first_met_time == 0);
}

TEST_CASE("grace period: natural initiation inside the window") {
  // Condition (cond >= 1) first met at k=3; natural draws give initiation at
  // k=4; treatment must be 1 from k=4 onward.
  Table t = cond_table(10, "cond");
  const std::size_t c = t.column("cond");
  for (std::size_t k = 0; k < 10; ++k) t.set(k, c, k >= 3 ? 1.0 : 0.0);
  Rule rule = GracePeriodRule{{"cond", CmpOp::Ge, 1.0}, 6};
  GraceTracker tr;
  std::vector<double> assigned;
  for (int k = 0; k < 10; ++k) {
    const double natural = k == 4 ? 1.0 : 0.0;
    assigned.push_back(apply_rule(rule, natural, tr, k, t, static_cast<std::size_t>(k)));
  }
  CHECK(assigned == std::vector<double>{0, 0, 0, 0, 1, 1, 1, 1, 1, 1});
  CHECK(tr.first_met_time == 3);
}

TEST_CASE("grace period: forced initiation at the end of the window") {
  // Condition met at k=0, natural draws never initiate; treatment is forced
  // at k = 0 + m = 6.
  Table t = cond_table(10, "cond");
  const std::size_t c = t.column("cond");
  for (std::size_t k = 0; k < 10; ++k) t.set(k, c, 1.0);
  Rule rule = GracePeriodRule{{"cond", CmpOp::Ge, 1.0}, 6};
  GraceTracker tr;
  std::vector<double> assigned;
  for (int k = 0; k < 10; ++k)
    assigned.push_back(apply_rule(rule, 0.0, tr, k, t, static_cast<std::size_t>(k)));
  CHECK(assigned == std::vector<double>{0, 0, 0, 0, 0, 0, 1, 1, 1, 1});
  CHECK(tr.first_met_time == 0);
}

TEST_CASE("grace period: condition never met keeps treatment at 0") {
  Table t = cond_table(5, "cond");
  Rule rule = GracePeriodRule{{"cond", CmpOp::Ge, 1.0}, 2};
  GraceTracker tr;
  for (int k = 0; k < 5; ++k)
    CHECK(apply_rule(rule, 1.0, tr, k, t, static_cast<std::size_t>(k)) == 0.0);
}

TEST_CASE("grace-period assignment is monotone non-decreasing") {
  Table t = cond_table(8, "cond");
  const std::size_t c = t.column("cond");
  for (std::size_t k = 0; k < 8; ++k) t.set(k, c, k >= 2 ? 1.0 : 0.0);
  Rule rule = GracePeriodRule{{"cond", CmpOp::Ge, 1.0}, 3};
  RngStream rng(44);
  for (int rep = 0; rep < 50; ++rep) {
    GraceTracker tr;
    double prev = 0.0;
    for (int k = 0; k < 8; ++k) {
      const double nat = rng.bernoulli(0.3) ? 1.0 : 0.0;
      const double a = apply_rule(rule, nat, tr, k, t, static_cast<std::size_t>(k));
      CHECK(a >= prev);
      prev = a;
    }
    CHECK(prev == 1.0);  // forced by k = 2 + 3 at the latest
  }
}

TEST_CASE("the natural course spec is always available and rule-free") {
  auto spec = natural_course_spec();
  CHECK(spec.label == "Natural course");
  CHECK(spec.rules.empty());
  CHECK(is_natural_course(spec));
  CHECK(spec.rule_for("A") == nullptr);
}

TEST_CASE("applicable_times gate where a rule applies") {
  InterventionRule r;
  r.variable = "A";
  r.rule = StaticRule{{1, 1, 1}};
  CHECK(r.applies_at(0));
  r.applicable_times = std::set<int>{2, 3};
  CHECK_FALSE(r.applies_at(0));
  CHECK(r.applies_at(2));
}

TEST_CASE("custom intervention plugins register and dispatch") {
  InterventionRegistry reg;
  reg.register_custom_intervention(
      "zero_out", [](Table& t, const std::vector<std::size_t>& rows, const std::string& var,
                     const std::vector<double>&, const std::string&, int) {
        const std::size_t c = t.column(var);
        for (auto r : rows) t.set(r, c, 0.0);
      });
  CHECK(reg.has("zero_out"));
  CHECK_THROWS_AS(reg.get("missing"), NameError);
  CHECK_THROWS_AS(reg.register_custom_intervention("zero_out", nullptr), ArgumentError);

  Table t = cond_table(2, "A");
  t.set(0, t.column("A"), 1.0);
  t.set(1, t.column("A"), 1.0);
  reg.get("zero_out")(t, {0, 1}, "A", {}, "t0", 0);
  CHECK(t.get(0, t.column("A")) == 0.0);
  CHECK(t.get(1, t.column("A")) == 0.0);
}
