#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "navtoken/error.hpp"

// Budget-aware temporal sampling: an exponential "forgetting curve" over the
// frame history whose decay rate is solved so that the expected number of
// visual tokens stays inside a fixed budget.
//
//   P(t)   = (1 - eps) * exp(k (t - T) / T) + eps,   1 <= t <= T
//   E(k)   = integral_0^T P(t) dt = (1 - eps) (1 - e^-k) / k * T + eps * T
//   tokens = ((4 + 1) E + (64 + 1)) * N <= B
//
// Every historical frame costs 4 coarse tokens plus one indicator; the latest
// frame costs 64 fine tokens plus one indicator, per camera.
namespace navtoken::bats {

inline constexpr int kCoarseTokens = 4;
inline constexpr int kFineTokens = 64;
inline constexpr int kHistoricalFrameCost = kCoarseTokens + 1;
inline constexpr int kLatestFrameCost = kFineTokens + 1;
inline constexpr double kDefaultEpsilon = 0.1;
inline constexpr double kDefaultTolerance = 1e-9;

// Solver bracket for k.
inline constexpr double kMinDecayRate = 1e-6;
inline constexpr double kMaxDecayRate = 1e3;

enum class CurveStatus { Feasible, NoSamplingNeeded, Infeasible };

std::string_view to_string(CurveStatus status) noexcept;

struct SamplingCurve {
  int latest = 1;         // T
  int cameras = 1;        // N
  int budget = 0;         // B
  double epsilon = kDefaultEpsilon;
  double cap = 0.0;       // max expected frames allowed by the budget
  CurveStatus status = CurveStatus::NoSamplingNeeded;
  std::optional<double> decay_rate;  // k, present iff Feasible

  bool feasible() const noexcept { return status == CurveStatus::Feasible; }
};

struct SamplePlan {
  std::vector<int> kept;  // ascending, always ends with `latest`
  int latest = 1;
  std::uint64_t seed = 0;

  std::size_t historical_count() const noexcept { return kept.empty() ? 0 : kept.size() - 1; }
  friend bool operator==(const SamplePlan&, const SamplePlan&) = default;
};

// (B - 65N) / (5N). Throws BudgetTooSmall when B <= 65N.
double budget_cap(int budget, int cameras);

// Visual tokens spent on `historical` coarse frames plus the latest fine frame.
constexpr long long visual_token_count(long long historical, long long cameras) noexcept {
  return (kHistoricalFrameCost * historical + kLatestFrameCost) * cameras;
}

// Closed-form expectation of the continuous curve over [0, T].
double expected_frames(double decay_rate, int latest, double epsilon);

double sampling_probability(int t, int latest, double decay_rate, double epsilon);

// Expected number of frames a drawn plan keeps: the latest frame plus the sum
// of P(t) over the discrete history 1..T-1.
double expected_kept_discrete(const SamplingCurve& curve);

SamplingCurve solve_decay_rate(int latest, int cameras, int budget, double epsilon = kDefaultEpsilon,
                               double tolerance = kDefaultTolerance);

// Bernoulli draw of every historical frame with probability P(t); the latest
// frame is always kept. Pure function of (curve, seed).
SamplePlan draw_plan(const SamplingCurve& curve, std::uint64_t seed);

// Draw for the infeasible regime: every historical frame at the floor
// probability eps (the k -> infinity limit of the curve). Callers trim the
// result with fallback_trim.
SamplePlan draw_floor_plan(int latest, double epsilon, std::uint64_t seed);

// Removes the oldest timesteps until at most `cap_frames` remain; the largest
// timestep is never removed.
std::vector<int> fallback_trim(std::span<const int> kept, int cap_frames);

// Largest number of historical frames that fits the budget: floor(cap).
int max_historical_frames(int budget, int cameras);

// One curve per T in 1..T_max (index T - 1).
std::vector<SamplingCurve> precompute_table(int budget, int cameras, double epsilon, int max_latest,
                                            double tolerance = kDefaultTolerance);

}  // namespace navtoken::bats
