#include "navtoken/bats.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "navtoken/random.hpp"
#include "navtoken/root_finding.hpp"

namespace navtoken::bats {

std::string_view to_string(CurveStatus status) noexcept {
  switch (status) {
    case CurveStatus::Feasible: return "feasible";
    case CurveStatus::NoSamplingNeeded: return "no_sampling_needed";
    case CurveStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

namespace {

void check_epsilon(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw Error(ErrorCode::FieldOutOfRange, "epsilon must lie in (0, 1)");
  }
}

}  // namespace

double budget_cap(int budget, int cameras) {
  if (cameras < 1) throw Error(ErrorCode::FieldOutOfRange, "camera count must be >= 1");
  const long long reserved = static_cast<long long>(kLatestFrameCost) * cameras;
  if (budget <= reserved) {
    throw Error(ErrorCode::BudgetTooSmall, "budget " + std::to_string(budget) + " <= " +
                                               std::to_string(reserved) + " (65 tokens per camera)");
  }
  return static_cast<double>(budget - reserved) / (static_cast<double>(kHistoricalFrameCost) * cameras);
}

int max_historical_frames(int budget, int cameras) {
  return static_cast<int>(std::floor(budget_cap(budget, cameras)));
}

double expected_frames(double decay_rate, int latest, double epsilon) {
  if (!(decay_rate > 0.0)) throw Error(ErrorCode::FieldOutOfRange, "decay rate must be positive");
  // -expm1(-k)/k stays accurate as k -> 0 where (1 - e^-k)/k cancels.
  const double shape = -std::expm1(-decay_rate) / decay_rate;
  return (1.0 - epsilon) * shape * latest + epsilon * latest;
}

double sampling_probability(int t, int latest, double decay_rate, double epsilon) {
  const double exponent = decay_rate * static_cast<double>(t - latest) / latest;
  return (1.0 - epsilon) * std::exp(exponent) + epsilon;
}

double expected_kept_discrete(const SamplingCurve& curve) {
  switch (curve.status) {
    case CurveStatus::NoSamplingNeeded: return curve.latest;
    case CurveStatus::Infeasible: return curve.epsilon * (curve.latest - 1) + 1.0;
    case CurveStatus::Feasible: break;
  }
  double sum = 1.0;
  for (int t = 1; t < curve.latest; ++t) {
    sum += sampling_probability(t, curve.latest, *curve.decay_rate, curve.epsilon);
  }
  return sum;
}

SamplingCurve solve_decay_rate(int latest, int cameras, int budget, double epsilon, double tolerance) {
  if (latest < 1) throw Error(ErrorCode::FieldOutOfRange, "latest timestep must be >= 1");
  check_epsilon(epsilon);
  SamplingCurve curve;
  curve.latest = latest;
  curve.cameras = cameras;
  curve.budget = budget;
  curve.epsilon = epsilon;
  curve.cap = budget_cap(budget, cameras);

  if (curve.cap >= latest) {
    curve.status = CurveStatus::NoSamplingNeeded;
    return curve;
  }
  // E(k) decreases strictly from T (k -> 0) to eps*T (k -> inf), so a root
  // exists iff eps*T <= cap. At equality the root sits at infinity and a
  // large finite k lands within tolerance.
  const double floor_frames = epsilon * latest;
  if (floor_frames - curve.cap > tolerance) {
    curve.status = CurveStatus::Infeasible;
    return curve;
  }

  const auto residual = [&](double k) { return expected_frames(k, latest, epsilon) - curve.cap; };
  double hi = kMaxDecayRate;
  double f_hi = residual(hi);
  while (f_hi > tolerance && hi < 1e18) {
    hi *= 10.0;
    f_hi = residual(hi);
  }
  if (f_hi > 0.0 && f_hi <= tolerance) {
    curve.status = CurveStatus::Feasible;
    curve.decay_rate = hi;
    return curve;
  }

  const RootResult root = brent_root(residual, kMinDecayRate, hi, tolerance);
  if (!root.converged) {
    throw Error(ErrorCode::NonConvergence, "decay-rate solve for T=" + std::to_string(latest) +
                                               " ended with residual " + std::to_string(root.fx));
  }
  curve.status = CurveStatus::Feasible;
  curve.decay_rate = root.x;
  return curve;
}

SamplePlan draw_plan(const SamplingCurve& curve, std::uint64_t seed) {
  SamplePlan plan;
  plan.latest = curve.latest;
  plan.seed = seed;
  switch (curve.status) {
    case CurveStatus::Infeasible:
      throw Error(ErrorCode::InfeasibleCurve, "T=" + std::to_string(curve.latest) +
                                                  " exceeds the budget even at the floor probability");
    case CurveStatus::NoSamplingNeeded:
      plan.kept.resize(curve.latest);
      for (int t = 1; t <= curve.latest; ++t) plan.kept[t - 1] = t;
      return plan;
    case CurveStatus::Feasible: break;
  }
  DeterministicRng rng(seed);
  const double k = *curve.decay_rate;
  for (int t = 1; t < curve.latest; ++t) {
    if (rng.uniform() < sampling_probability(t, curve.latest, k, curve.epsilon)) plan.kept.push_back(t);
  }
  plan.kept.push_back(curve.latest);
  return plan;
}

SamplePlan draw_floor_plan(int latest, double epsilon, std::uint64_t seed) {
  check_epsilon(epsilon);
  SamplePlan plan;
  plan.latest = latest;
  plan.seed = seed;
  DeterministicRng rng(seed);
  for (int t = 1; t < latest; ++t) {
    if (rng.uniform() < epsilon) plan.kept.push_back(t);
  }
  plan.kept.push_back(latest);
  return plan;
}

std::vector<int> fallback_trim(std::span<const int> kept, int cap_frames) {
  std::vector<int> out(kept.begin(), kept.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  const auto limit = static_cast<std::size_t>(std::max(cap_frames, 1));
  if (out.size() > limit) out.erase(out.begin(), out.end() - static_cast<std::ptrdiff_t>(limit));
  return out;
}

std::vector<SamplingCurve> precompute_table(int budget, int cameras, double epsilon, int max_latest,
                                            double tolerance) {
  budget_cap(budget, cameras);
  std::vector<SamplingCurve> table;
  table.reserve(static_cast<std::size_t>(std::max(max_latest, 0)));
  for (int t = 1; t <= max_latest; ++t) table.push_back(solve_decay_rate(t, cameras, budget, epsilon, tolerance));
  return table;
}

}  // namespace navtoken::bats
