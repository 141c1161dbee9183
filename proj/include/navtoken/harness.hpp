#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "navtoken/bats.hpp"
#include "navtoken/cache.hpp"
#include "navtoken/core.hpp"
#include "navtoken/organizer.hpp"

namespace navtoken::harness {

enum class Strategy { Bats, Uniform, Linear };

std::string_view to_string(Strategy s) noexcept;
Strategy parse_strategy(std::string_view name);

struct SimConfig {
  int max_latest = 300;  // T_max
  int cameras = 4;       // N
  int budget = 1600;     // B
  double epsilon = bats::kDefaultEpsilon;
  int channels = 64;     // C
  int pe_dim = 64;
  int text_tokens = 16;
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::Bats;

  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

// Throws ConfigError listing the first offending field.
void validate_config(const SimConfig& config);

// JSON object; absent fields keep their defaults. Unknown keys are errors.
SimConfig parse_config(std::string_view text);
SimConfig load_config(const std::filesystem::path& path);
std::string config_json(const SimConfig& config, int indent = 2);

// Baseline plans with `cap` historical frames (expected, for Linear).
//   Uniform: cap positions rounded from an even spacing over 1..T-1.
//   Linear:  P(t) = min(1, c t) with c chosen so sum_{t<T} P(t) = cap.
// Either way the latest frame is always kept, and cap >= T-1 keeps everything.
bats::SamplePlan baseline_plan(Strategy strategy, int latest, int cap, std::uint64_t seed);

// Keep probability of frame t under the Linear baseline.
std::vector<double> linear_probabilities(int latest, double cap);

// Seeded pseudo-random 576 x C patch grids, pooled on first use and memoized.
// Not thread-safe; one instance per simulation.
class SyntheticFeatures : public organizer::FeatureSource {
 public:
  SyntheticFeatures(int channels, std::uint64_t seed);

  organizer::FeatureMatrix coarse(int t, int camera) const override;
  organizer::FeatureMatrix fine(int t, int camera) const override;

 private:
  struct Pooled {
    organizer::FeatureMatrix coarse;
    organizer::FeatureMatrix fine;
  };
  const Pooled& ensure(int t, int camera) const;

  int channels_;
  std::uint64_t seed_;
  mutable std::map<std::pair<int, int>, Pooled> memo_;
};

// Resolves FrameRef::data_ref strings of an ingested episode:
//   "file:<path>"  raw 576 x C grid; relative paths resolve against base_dir
//   "cache:"       coarse tokens from `store` under (episode id, t, camera)
//   "synthetic"    seeded pseudo-random grid, as in SyntheticFeatures
// Grids are pooled once and memoized. Not thread-safe.
class EpisodeFeatures : public organizer::FeatureSource {
 public:
  EpisodeFeatures(const EpisodeStream& stream, std::filesystem::path base_dir, int channels, std::uint64_t seed,
                  const cache::CacheStore* store = nullptr);

  organizer::FeatureMatrix coarse(int t, int camera) const override;
  organizer::FeatureMatrix fine(int t, int camera) const override;

 private:
  const std::string& ref(int t, int camera) const;
  const organizer::FeatureMatrix& pooled(int t, int camera, int target) const;

  const EpisodeStream& stream_;
  std::filesystem::path base_dir_;
  int channels_;
  const cache::CacheStore* store_;
  SyntheticFeatures synthetic_;
  mutable std::map<std::tuple<int, int, int>, organizer::FeatureMatrix> memo_;
};

struct StepTrace {
  int t = 0;
  std::vector<int> kept;
  std::size_t visual_tokens = 0;
  double assemble_seconds = 0.0;
  // Standard deviation of the visual token count implied by the Bernoulli
  // draw at this step, before any trimming.
  double predicted_token_std = 0.0;
  bool trimmed = false;

  friend bool operator==(const StepTrace&, const StepTrace&) = default;
};

struct SimSummary {
  std::size_t steps = 0;
  std::size_t max_tokens = 0;
  double mean_tokens = 0.0;
  double p95_assemble_seconds = 0.0;
  double mean_assemble_seconds = 0.0;
  double cv_assemble = 0.0;  // std / mean of assemble time
  // First step whose full history would exceed the budget; absent if none.
  std::optional<int> first_over_budget;
  double plateau_mean_tokens = 0.0;
  double plateau_std_tokens = 0.0;
  double plateau_predicted_std = 0.0;  // RMS of predicted_token_std over the plateau
  std::size_t steps_over_budget = 0;

  friend bool operator==(const SimSummary&, const SimSummary&) = default;
};

struct SimResult {
  SimConfig config;
  std::vector<StepTrace> traces;
  SimSummary summary;
};

// Kept set for step t under the configured strategy, hard-trimmed to the
// budget. `table` is the BATS curve table (index t - 1).
bats::SamplePlan plan_step(const SimConfig& config, std::span<const bats::SamplingCurve> table, int t);

SimResult simulate(const SimConfig& config);

// Independent configurations on a pool of worker threads; results keep input
// order. threads == 0 uses the hardware concurrency.
std::vector<SimResult> simulate_many(std::span<const SimConfig> configs, unsigned threads = 0);

SimSummary summarize(std::span<const StepTrace> traces, int budget, int cameras);

// CSV columns: t,kept_frames,visual_tokens,assemble_seconds,predicted_token_std,trimmed
void write_trace_csv(std::ostream& out, std::span<const StepTrace> traces);
std::string result_json(const SimResult& result, int indent = 2);
SimResult parse_result_json(std::string_view text);
// Writes <stem>.csv and <stem>.json.
void report(const SimResult& result, const std::filesystem::path& stem);

}  // namespace navtoken::harness
