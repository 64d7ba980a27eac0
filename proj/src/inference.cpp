#include "gformula/inference.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <thread>

#include "gformula/errors.hpp"
#include "gformula/models.hpp"
#include "gformula/rng.hpp"

namespace gformula {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

ContrastTables contrasts(const std::vector<std::vector<double>>& estimates,
                         std::size_t reference) {
  if (reference >= estimates.size())
    throw ArgumentError("contrasts: reference index " + std::to_string(reference) +
                        " out of range");
  ContrastTables out;
  const auto& ref = estimates[reference];
  out.ratio.resize(estimates.size());
  out.difference.resize(estimates.size());
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    if (estimates[i].size() != ref.size())
      throw ArgumentError("contrasts: estimate vectors differ in length");
    out.ratio[i].resize(ref.size());
    out.difference[i].resize(ref.size());
    for (std::size_t k = 0; k < ref.size(); ++k) {
      out.difference[i][k] = estimates[i][k] - ref[k];
      out.ratio[i][k] = ref[k] == 0.0 ? kNaN : estimates[i][k] / ref[k];
    }
  }
  return out;
}

double quantile_nearest_rank(std::vector<double> values, double q) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  if (rank < 1) rank = 1;
  if (rank > values.size()) rank = values.size();
  return values[rank - 1];
}

namespace {

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return kNaN;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

struct Summary {
  double se, lo, hi;
};

Summary summarize(const std::vector<double>& v) {
  return {sample_sd(v), quantile_nearest_rank(v, 0.025), quantile_nearest_rank(v, 0.975)};
}

}  // namespace

BootstrapResult bootstrap(const PanelDataset& data, const RunClosure& run, std::size_t B,
                          std::uint64_t seed, int workers, std::size_t reference) {
  if (B < 1) throw ArgumentError("bootstrap: B must be >= 1");

  struct Slot {
    bool ok = false;
    std::string error;
    RunEstimates est;
  };
  std::vector<Slot> slots(B);

  auto run_replicate = [&](std::size_t b) {
    try {
      PanelDataset replicate = data.resample_subjects(mix_seed({seed, rng_tag::kBootstrap, b}));
      slots[b].est = run(replicate, mix_seed({seed, rng_tag::kReplicateRun, b}));
      slots[b].ok = true;
    } catch (const std::exception& e) {
      slots[b].error = e.what();
    }
  };

  if (workers <= 1 || B == 1) {
    for (std::size_t b = 0; b < B; ++b) run_replicate(b);
  } else {
    const auto W = static_cast<std::size_t>(workers);
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < W; ++w)
      threads.emplace_back([&, w]() {
        for (std::size_t b = w; b < B; b += W) run_replicate(b);
      });
    for (auto& t : threads) t.join();
  }

  BootstrapResult out;
  out.requested = B;
  std::vector<const RunEstimates*> good;
  for (std::size_t b = 0; b < B; ++b) {
    if (slots[b].ok)
      good.push_back(&slots[b].est);
    else
      out.failures.push_back("replicate " + std::to_string(b) + ": " + slots[b].error);
  }
  out.effective = good.size();
  if (good.empty())
    throw InferenceError("all " + std::to_string(B) +
                         " bootstrap replicates failed; first failure: " + out.failures.front());

  const std::size_t n_itv = good.front()->estimates.size();
  const std::size_t n_k = good.front()->estimates.front().size();
  auto alloc = [&](std::vector<std::vector<double>>& m) {
    m.assign(n_itv, std::vector<double>(n_k, kNaN));
  };
  alloc(out.se);
  alloc(out.lo);
  alloc(out.hi);
  alloc(out.ratio_se);
  alloc(out.ratio_lo);
  alloc(out.ratio_hi);
  alloc(out.diff_se);
  alloc(out.diff_lo);
  alloc(out.diff_hi);

  std::vector<double> vals, rvals, dvals;
  for (std::size_t i = 0; i < n_itv; ++i)
    for (std::size_t k = 0; k < n_k; ++k) {
      vals.clear();
      rvals.clear();
      dvals.clear();
      for (const auto* est : good) {
        const double e = est->estimates[i][k];
        const double ref = est->estimates[reference][k];
        vals.push_back(e);
        dvals.push_back(e - ref);
        if (ref != 0.0) rvals.push_back(e / ref);
      }
      const Summary sv = summarize(vals);
      out.se[i][k] = sv.se;
      out.lo[i][k] = sv.lo;
      out.hi[i][k] = sv.hi;
      if (!rvals.empty()) {
        const Summary sr = summarize(rvals);
        out.ratio_se[i][k] = sr.se;
        out.ratio_lo[i][k] = sr.lo;
        out.ratio_hi[i][k] = sr.hi;
      }
      const Summary sd = summarize(dvals);
      out.diff_se[i][k] = sd.se;
      out.diff_lo[i][k] = sd.lo;
      out.diff_hi[i][k] = sd.hi;
    }

  std::vector<double> hrs;
  for (const auto* est : good)
    if (est->hazard_ratio) hrs.push_back(*est->hazard_ratio);
  if (!hrs.empty()) {
    const Summary sh = summarize(hrs);
    out.hr_se = sh.se;
    out.hr_lo = sh.lo;
    out.hr_hi = sh.hi;
  }
  return out;
}

std::optional<double> hazard_ratio(const SimulationResult& arm0, const SimulationResult& arm1,
                                   std::uint64_t stream_seed) {
  if (arm0.outcome_kind != OutcomeKind::Survival || arm1.outcome_kind != OutcomeKind::Survival)
    throw ArgumentError("hazard_ratio requires survival outcomes");
  if (arm0.T != arm1.T) throw ArgumentError("hazard_ratio: arms have different horizons");
  const auto T = static_cast<std::size_t>(arm0.T);

  struct Row {
    int time;
    int group;
    double event;
  };
  std::vector<Row> rows;
  rows.reserve((arm0.s + arm1.s) * T / 2);
  std::size_t events[2] = {0, 0};

  auto realize = [&](const SimulationResult& arm, int group) {
    const bool has_q = !arm.q.empty();
    for (std::size_t v = 0; v < arm.s; ++v) {
      RngStream rng(mix_seed({stream_seed, rng_tag::kHazardRatio, v}));
      bool comp_failed = false;
      for (std::size_t k = 0; k < T; ++k) {
        double uc = has_q ? rng.uniform() : 1.0;
        const double ue = rng.uniform();
        if (!comp_failed && has_q && uc < arm.q[v * T + k]) {
          // Competing failure: the subject stays in later risk sets
          // (subdistribution convention) with the event impossible.
          comp_failed = true;
          rows.push_back({static_cast<int>(k), group, 0.0});
          continue;
        }
        if (!comp_failed && ue < arm.p[v * T + k]) {
          rows.push_back({static_cast<int>(k), group, 1.0});
          ++events[group];
          break;  // censored at the first event of interest
        }
        rows.push_back({static_cast<int>(k), group, 0.0});
      }
    }
  };
  realize(arm0, 0);
  realize(arm1, 1);
  if (events[0] == 0 || events[1] == 0) return std::nullopt;

  // Pooled logistic: event ~ group + factor(time), indicators only for time
  // levels that actually appear (first present level is the reference).
  std::vector<int> present;
  {
    std::vector<bool> seen(T, false);
    for (const auto& r : rows) seen[static_cast<std::size_t>(r.time)] = true;
    for (std::size_t k = 0; k < T; ++k)
      if (seen[k]) present.push_back(static_cast<int>(k));
  }
  std::vector<int> time_col(T, -1);
  DesignMatrix dm;
  dm.column_names = {"(Intercept)", "group"};
  for (std::size_t l = 1; l < present.size(); ++l) {
    time_col[static_cast<std::size_t>(present[l])] = static_cast<int>(dm.column_names.size());
    dm.column_names.push_back("t=" + std::to_string(present[l]));
  }
  dm.values.resize(static_cast<Eigen::Index>(rows.size()),
                   static_cast<Eigen::Index>(dm.column_names.size()));
  dm.response.resize(static_cast<Eigen::Index>(rows.size()));
  dm.values.setZero();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto ei = static_cast<Eigen::Index>(i);
    dm.values(ei, 0) = 1.0;
    dm.values(ei, 1) = rows[i].group;
    const int tc = time_col[static_cast<std::size_t>(rows[i].time)];
    if (tc >= 0) dm.values(ei, tc) = 1.0;
    dm.response(ei) = rows[i].event;
  }
  FittedModel fit = fit_binomial(dm, Link::Logit);
  return std::exp(fit.coef(0, 1));
}

}  // namespace gformula
