#pragma once

#include <cstdint>
#include <string>

#include "gformula/engine.hpp"

// Synthetic data-generating processes used by the engine tests and the
// acceptance suite.
namespace synth {

// Two-timepoint survival system (K=1) with one binary confounder L and one
// binary treatment A.  Deterministic composite columns CL/LA/TLA make every
// model saturated with respect to its full conditioning set:
//   L  ~ factor(lag1_LA)        (L1 | L0, A0)
//   A  ~ factor(CL)             (A1 | L1, L0, A0), CL = 2*lag1_LA + L
//   Y  ~ factor(TLA)            (Y  | k, Lk, Ak),  TLA = 4*t0 + LA, LA = 2L + A
std::string twopoint_csv(std::uint64_t seed, std::size_t n);
gformula::PanelSchema twopoint_schema();
gformula::EngineSpec twopoint_spec();
void register_composite_plugins(gformula::Plugins& plugins);

// Null system: treatment A is pure noise, the hazard depends on L only.
std::string null_csv(std::uint64_t seed, std::size_t n, int K);
gformula::PanelSchema null_schema();
gformula::EngineSpec null_spec(int K);

// Intercept-only hazards: covariate-free survival data with a competing
// event, for closed-form checks.
std::string constant_hazard_csv(std::uint64_t seed, std::size_t n, int K, double p, double q);
gformula::PanelSchema constant_hazard_schema(bool compevent);
gformula::EngineSpec constant_hazard_spec(bool compevent, int K);

// Survival system exercising every built-in covtype plus a visit process and
// a carry-forward restriction (K=3): visit/cd4 (visit-linked normal), bmi
// (bounded normal), grp (categorical), dia (absorbing), dose (left-truncated
// normal), act (zero-inflated normal), smk (binary modeled at k<=1 then
// carried forward), and treatment A.
std::string rich_csv(std::uint64_t seed, std::size_t n);
gformula::PanelSchema rich_schema();
gformula::EngineSpec rich_spec();

// Single-subject fixtures for the grace-period regime traces; `cond_at_base`
// selects whether the condition already holds at k=0.
std::string grace_csv(bool cond_at_base);
gformula::PanelSchema grace_schema();
gformula::EngineSpec grace_spec();
// Registers cond/art plugins: cond = 1(k >= 3) for the in-window trace or
// constant 1 for the forced trace; art's natural draw initiates at k=4 in the
// first trace and never in the second.
void register_grace_plugins(gformula::Plugins& plugins, bool cond_at_base);

}  // namespace synth
