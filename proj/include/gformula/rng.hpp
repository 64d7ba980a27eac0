#pragma once

#include <cstdint>
#include <initializer_list>

namespace gformula {

// Deterministic, platform-independent random streams.  Every logical unit of
// work (trajectory, bootstrap replicate) derives its own stream from the run
// seed and its logical indices, never from worker identity, so results are
// identical for any worker count.

std::uint64_t splitmix64(std::uint64_t& state);

// Mixes an arbitrary list of 64-bit components into one stream seed.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

// xoshiro256++ with splitmix64 seeding.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0);

  std::uint64_t next_u64();

  // Uniform draw on [0, 1) with 53-bit resolution.
  double uniform();

  // Standard normal via the inverse-CDF transform of one uniform draw.
  double normal();

  // Bernoulli(p) consuming exactly one uniform.
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t s_[4];
};

// Stream-purpose tags keeping independent uses of the same run seed apart.
namespace rng_tag {
inline constexpr std::uint64_t kTrajectory = 0x72616a6563746f72ull;
inline constexpr std::uint64_t kNsimulResample = 0x6e73696d756c0001ull;
inline constexpr std::uint64_t kBootstrap = 0x626f6f7473747261ull;
inline constexpr std::uint64_t kReplicateRun = 0x7265706c72756e01ull;
inline constexpr std::uint64_t kHazardRatio = 0x687a726472617469ull;
}  // namespace rng_tag

// High-accuracy standard normal CDF (|error| < 1e-15).
double norm_cdf(double x);

// Standard normal density.
double norm_pdf(double x);

// Inverse standard normal CDF (Wichura's AS241 PPND16, |relative error| ~ 1e-15).
double norm_quantile(double p);

// Inverse Mills ratio phi(x)/Phi(x), stable for very negative x.
double inverse_mills(double x);

}  // namespace gformula
