#include "navtoken/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "navtoken/random.hpp"
#include "navtoken/root_finding.hpp"
#include "navtoken/trajectory.hpp"
#include "navtoken/tvi.hpp"

namespace navtoken::harness {

using nlohmann::json;

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::Bats: return "bats";
    case Strategy::Uniform: return "uniform";
    case Strategy::Linear: return "linear";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "bats") return Strategy::Bats;
  if (name == "uniform") return Strategy::Uniform;
  if (name == "linear") return Strategy::Linear;
  throw Error(ErrorCode::ConfigError, "unknown strategy '" + std::string(name) + "' (bats, uniform, linear)");
}

void validate_config(const SimConfig& c) {
  const auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
  if (c.max_latest < 1) fail("T_max must be >= 1");
  if (c.cameras < 1) fail("N must be >= 1");
  if (static_cast<long long>(c.budget) <= static_cast<long long>(bats::kLatestFrameCost) * c.cameras) {
    fail("B must exceed 65 * N = " + std::to_string(bats::kLatestFrameCost * c.cameras));
  }
  if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) fail("epsilon must lie in (0, 1)");
  if (c.channels < 1) fail("C must be >= 1");
  if (c.pe_dim < 4 || c.pe_dim % 4 != 0) fail("pe_dim must be a positive multiple of 4");
  if (c.text_tokens < 0) fail("text_tokens must be >= 0");
  if (c.strategy != Strategy::Bats && bats::max_historical_frames(c.budget, c.cameras) < 1) {
    fail("baseline strategies need room for at least one historical frame");
  }
}

SimConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
  SimConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "T_max") c.max_latest = value.get<int>();
      else if (key == "N") c.cameras = value.get<int>();
      else if (key == "B") c.budget = value.get<int>();
      else if (key == "epsilon") c.epsilon = value.get<double>();
      else if (key == "C") c.channels = value.get<int>();
      else if (key == "pe_dim") c.pe_dim = value.get<int>();
      else if (key == "text_tokens") c.text_tokens = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "strategy") c.strategy = parse_strategy(value.get<std::string>());
      else throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("bad config value: ") + e.what());
  }
  validate_config(c);
  return c;
}

SimConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace {

json config_to_json(const SimConfig& c) {
  return {{"T_max", c.max_latest}, {"N", c.cameras},           {"B", c.budget},
          {"epsilon", c.epsilon},  {"C", c.channels},          {"pe_dim", c.pe_dim},
          {"text_tokens", c.text_tokens}, {"seed", c.seed}, {"strategy", std::string(to_string(c.strategy))}};
}

}  // namespace

std::string config_json(const SimConfig& config, int indent) { return config_to_json(config).dump(indent); }

std::vector<double> linear_probabilities(int latest, double cap) {
  const int history = latest - 1;
  std::vector<double> p(static_cast<std::size_t>(std::max(history, 0)), 1.0);
  if (cap >= history) return p;
  const auto mass = [&](double c) {
    double s = 0.0;
    for (int t = 1; t <= history; ++t) s += std::min(1.0, c * t);
    return s - cap;
  };
  // mass(0) = -cap < 0 and mass(1) = history - cap > 0.
  const auto root = brent_root(mass, 0.0, 1.0, 1e-12, 1e-15);
  for (int t = 1; t <= history; ++t) p[t - 1] = std::min(1.0, root.x * t);
  return p;
}

bats::SamplePlan baseline_plan(Strategy strategy, int latest, int cap, std::uint64_t seed) {
  if (cap < 1) throw Error(ErrorCode::ConfigError, "baseline cap must be >= 1");
  if (latest < 1) throw Error(ErrorCode::ConfigError, "latest timestep must be >= 1");
  bats::SamplePlan plan;
  plan.latest = latest;
  plan.seed = seed;
  const int history = latest - 1;
  if (cap >= history) {
    for (int t = 1; t <= latest; ++t) plan.kept.push_back(t);
    return plan;
  }
  switch (strategy) {
    case Strategy::Uniform:
      if (cap == 1) {
        plan.kept.push_back(1);
      } else {
        // Positions are at least one apart, so rounding keeps them distinct.
        const double step = static_cast<double>(history - 1) / (cap - 1);
        for (int i = 0; i < cap; ++i) plan.kept.push_back(static_cast<int>(std::lround(1.0 + i * step)));
      }
      break;
    case Strategy::Linear: {
      const auto p = linear_probabilities(latest, cap);
      DeterministicRng rng(seed);
      for (int t = 1; t <= history; ++t) {
        if (rng.uniform() < p[t - 1]) plan.kept.push_back(t);
      }
      break;
    }
    case Strategy::Bats: throw Error(ErrorCode::ConfigError, "bats is not a baseline strategy");
  }
  plan.kept.push_back(latest);
  return plan;
}

SyntheticFeatures::SyntheticFeatures(int channels, std::uint64_t seed) : channels_(channels), seed_(seed) {}

const SyntheticFeatures::Pooled& SyntheticFeatures::ensure(int t, int camera) const {
  const auto key = std::make_pair(t, camera);
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  DeterministicRng rng(mix_seed(mix_seed(seed_, static_cast<std::uint64_t>(t)), static_cast<std::uint64_t>(camera)));
  std::vector<float> values(static_cast<std::size_t>(kPatchCount) * channels_);
  for (auto& v : values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const organizer::FeatureMatrix grid(kPatchCount, channels_, std::move(values));
  Pooled pooled{organizer::grid_pool(grid, organizer::kCoarseTarget), organizer::grid_pool(grid, organizer::kFineTarget)};
  return memo_.emplace(key, std::move(pooled)).first->second;
}

organizer::FeatureMatrix SyntheticFeatures::coarse(int t, int camera) const { return ensure(t, camera).coarse; }
organizer::FeatureMatrix SyntheticFeatures::fine(int t, int camera) const { return ensure(t, camera).fine; }

EpisodeFeatures::EpisodeFeatures(const EpisodeStream& stream, std::filesystem::path base_dir, int channels,
                                 std::uint64_t seed, const cache::CacheStore* store)
    : stream_(stream), base_dir_(std::move(base_dir)), channels_(channels), store_(store), synthetic_(channels, seed) {
  if (store_ && store_->channels() != channels_) {
    throw Error(ErrorCode::DimensionMismatch, "cache store has C=" + std::to_string(store_->channels()) +
                                                  ", expected " + std::to_string(channels_));
  }
}

const std::string& EpisodeFeatures::ref(int t, int camera) const {
  const auto it = std::lower_bound(stream_.steps.begin(), stream_.steps.end(), t,
                                   [](const EpisodeStep& s, int v) { return s.t < v; });
  if (it == stream_.steps.end() || it->t != t) {
    throw Error(ErrorCode::MissingFeature, "episode has no step t=" + std::to_string(t));
  }
  for (const auto& f : it->frames) {
    if (f.camera == camera) return f.data_ref;
  }
  throw Error(ErrorCode::MissingFeature, "step t=" + std::to_string(t) + " has no camera " + std::to_string(camera));
}

const organizer::FeatureMatrix& EpisodeFeatures::pooled(int t, int camera, int target) const {
  const auto key = std::make_tuple(t, camera, target);
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  const std::string& r = ref(t, camera);
  organizer::FeatureMatrix out;
  if (r.rfind("file:", 0) == 0) {
    std::filesystem::path path = r.substr(5);
    if (path.is_relative()) path = base_dir_ / path;
    const auto grid = load_grid_file(path, t, camera);
    if (grid.channels() != channels_) {
      throw Error(ErrorCode::DimensionMismatch, path.string() + " has C=" + std::to_string(grid.channels()));
    }
    out = organizer::grid_pool(grid, target);
  } else if (r.rfind("cache:", 0) == 0) {
    if (target != organizer::kCoarseTarget) {
      throw Error(ErrorCode::MissingFeature, "t=" + std::to_string(t) + " camera " + std::to_string(camera) +
                                                 " is cache-only; fine tokens need a grid");
    }
    if (!store_) throw Error(ErrorCode::MissingFeature, "frame refers to a cache but no store was given");
    out = cache::CachedFeatures(*store_, stream_.episode_id).coarse(t, camera);
  } else if (r == "synthetic" || r.rfind("synthetic:", 0) == 0) {
    out = target == organizer::kCoarseTarget ? synthetic_.coarse(t, camera) : synthetic_.fine(t, camera);
  } else {
    throw Error(ErrorCode::MissingFeature, "unsupported data_ref '" + r + "'");
  }
  return memo_.emplace(key, std::move(out)).first->second;
}

organizer::FeatureMatrix EpisodeFeatures::coarse(int t, int camera) const {
  return pooled(t, camera, organizer::kCoarseTarget);
}

organizer::FeatureMatrix EpisodeFeatures::fine(int t, int camera) const {
  return pooled(t, camera, organizer::kFineTarget);
}

namespace {

struct DrawnStep {
  bats::SamplePlan plan;
  double predicted_std = 0.0;
  bool trimmed = false;
};

DrawnStep draw_step(const SimConfig& config, std::span<const bats::SamplingCurve> table, int t) {
  const int cap_frames = bats::max_historical_frames(config.budget, config.cameras);
  const std::uint64_t step_seed = mix_seed(config.seed, static_cast<std::uint64_t>(t));
  DrawnStep out;
  double variance = 0.0;
  switch (config.strategy) {
    case Strategy::Bats: {
      const auto& curve = table[static_cast<std::size_t>(t - 1)];
      switch (curve.status) {
        case bats::CurveStatus::NoSamplingNeeded:
        case bats::CurveStatus::Feasible:
          out.plan = bats::draw_plan(curve, step_seed);
          if (curve.feasible()) {
            for (int h = 1; h < t; ++h) {
              const double p = bats::sampling_probability(h, t, *curve.decay_rate, curve.epsilon);
              variance += p * (1.0 - p);
            }
          }
          break;
        case bats::CurveStatus::Infeasible:
          out.plan = bats::draw_floor_plan(t, config.epsilon, step_seed);
          variance = config.epsilon * (1.0 - config.epsilon) * (t - 1);
          break;
      }
      break;
    }
    case Strategy::Uniform:
      out.plan = baseline_plan(Strategy::Uniform, t, cap_frames, step_seed);
      break;
    case Strategy::Linear:
      out.plan = baseline_plan(Strategy::Linear, t, cap_frames, step_seed);
      for (double p : linear_probabilities(t, cap_frames)) variance += p * (1.0 - p);
      break;
  }
  out.predicted_std = bats::kHistoricalFrameCost * config.cameras * std::sqrt(variance);
  // Hard cap: floor(cap) historical frames plus the latest always fit B.
  const auto before = out.plan.kept.size();
  out.plan.kept = bats::fallback_trim(out.plan.kept, cap_frames + 1);
  out.trimmed = out.plan.kept.size() != before;
  return out;
}

std::vector<bats::SamplingCurve> curve_table(const SimConfig& config) {
  if (config.strategy != Strategy::Bats) return {};
  return bats::precompute_table(config.budget, config.cameras, config.epsilon, config.max_latest);
}

}  // namespace

bats::SamplePlan plan_step(const SimConfig& config, std::span<const bats::SamplingCurve> table, int t) {
  if (config.strategy == Strategy::Bats && (t < 1 || static_cast<std::size_t>(t) > table.size())) {
    throw Error(ErrorCode::ConfigError, "step " + std::to_string(t) + " outside the curve table");
  }
  return draw_step(config, table, t).plan;
}

SimResult simulate(const SimConfig& config) {
  validate_config(config);
  SimResult result;
  result.config = config;
  const auto table = curve_table(config);
  const CameraRig rig = make_ring_rig(config.cameras);
  const auto params = tvi::init_params(config.channels, config.pe_dim, mix_seed(config.seed, 0x7469));
  organizer::IndicatorBuilder indicators(params);
  const SyntheticFeatures features(config.channels, mix_seed(config.seed, 0x6665));

  organizer::FeatureMatrix text(config.text_tokens, config.channels);
  DeterministicRng text_rng(mix_seed(config.seed, 0x7478));
  for (auto& v : text.values) v = static_cast<float>(text_rng.uniform(-1.0, 1.0));

  result.traces.reserve(static_cast<std::size_t>(config.max_latest));
  for (int t = 1; t <= config.max_latest; ++t) {
    auto drawn = draw_step(config, table, t);
    // Feature generation is not part of the timed region.
    for (int h : drawn.plan.kept) {
      for (int cam = 0; cam < config.cameras; ++cam) {
        if (h == t) features.fine(h, cam);
        else features.coarse(h, cam);
      }
    }
    const auto start = std::chrono::steady_clock::now();
    const auto seq = organizer::assemble_navigation(drawn.plan, rig, features, text, indicators);
    const auto stop = std::chrono::steady_clock::now();

    StepTrace trace;
    trace.t = t;
    trace.kept = std::move(drawn.plan.kept);
    trace.visual_tokens = organizer::count_tokens(seq).visual_region();
    trace.assemble_seconds = std::chrono::duration<double>(stop - start).count();
    trace.predicted_token_std = drawn.predicted_std;
    trace.trimmed = drawn.trimmed;
    result.traces.push_back(std::move(trace));
  }
  result.summary = summarize(result.traces, config.budget, config.cameras);
  return result;
}

std::vector<SimResult> simulate_many(std::span<const SimConfig> configs, unsigned threads) {
  std::vector<SimResult> results(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(configs.size(), 1)));
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        results[i] = simulate(configs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

SimSummary summarize(std::span<const StepTrace> traces, int budget, int cameras) {
  SimSummary s;
  s.steps = traces.size();
  if (traces.empty()) return s;
  std::vector<double> times;
  times.reserve(traces.size());
  double token_sum = 0.0;
  for (const auto& tr : traces) {
    s.max_tokens = std::max(s.max_tokens, tr.visual_tokens);
    token_sum += static_cast<double>(tr.visual_tokens);
    times.push_back(tr.assemble_seconds);
    if (tr.visual_tokens > static_cast<std::size_t>(budget)) ++s.steps_over_budget;
    if (!s.first_over_budget && bats::visual_token_count(tr.t - 1, cameras) > budget) s.first_over_budget = tr.t;
  }
  s.mean_tokens = token_sum / static_cast<double>(traces.size());

  double time_sum = 0.0, time_sq = 0.0;
  for (double x : times) {
    time_sum += x;
    time_sq += x * x;
  }
  const auto n = static_cast<double>(times.size());
  s.mean_assemble_seconds = time_sum / n;
  const double time_var = std::max(0.0, time_sq / n - s.mean_assemble_seconds * s.mean_assemble_seconds);
  s.cv_assemble = s.mean_assemble_seconds > 0.0 ? std::sqrt(time_var) / s.mean_assemble_seconds : 0.0;
  std::sort(times.begin(), times.end());
  s.p95_assemble_seconds = trajectory::quantile_sorted(times, 0.95);

  if (s.first_over_budget) {
    double sum = 0.0, pred_sq = 0.0;
    std::size_t count = 0;
    for (const auto& tr : traces) {
      if (tr.t < *s.first_over_budget) continue;
      sum += static_cast<double>(tr.visual_tokens);
      pred_sq += tr.predicted_token_std * tr.predicted_token_std;
      ++count;
    }
    s.plateau_mean_tokens = sum / static_cast<double>(count);
    double var = 0.0;
    for (const auto& tr : traces) {
      if (tr.t < *s.first_over_budget) continue;
      const double d = static_cast<double>(tr.visual_tokens) - s.plateau_mean_tokens;
      var += d * d;
    }
    s.plateau_std_tokens = std::sqrt(var / static_cast<double>(count));
    s.plateau_predicted_std = std::sqrt(pred_sq / static_cast<double>(count));
  }
  return s;
}

void write_trace_csv(std::ostream& out, std::span<const StepTrace> traces) {
  out << "t,kept_frames,visual_tokens,assemble_seconds,predicted_token_std,trimmed\n";
  for (const auto& tr : traces) {
    out << tr.t << ',' << tr.kept.size() << ',' << tr.visual_tokens << ',' << tr.assemble_seconds << ','
        << tr.predicted_token_std << ',' << (tr.trimmed ? 1 : 0) << '\n';
  }
}

std::string result_json(const SimResult& r, int indent) {
  const auto& s = r.summary;
  json summary = {{"steps", s.steps},
                  {"max_tokens", s.max_tokens},
                  {"mean_tokens", s.mean_tokens},
                  {"p95_assemble_seconds", s.p95_assemble_seconds},
                  {"mean_assemble_seconds", s.mean_assemble_seconds},
                  {"cv_assemble", s.cv_assemble},
                  {"first_over_budget", s.first_over_budget ? json(*s.first_over_budget) : json(nullptr)},
                  {"plateau_mean_tokens", s.plateau_mean_tokens},
                  {"plateau_std_tokens", s.plateau_std_tokens},
                  {"plateau_predicted_std", s.plateau_predicted_std},
                  {"steps_over_budget", s.steps_over_budget}};
  json steps = json::array();
  for (const auto& tr : r.traces) {
    steps.push_back({{"t", tr.t},
                     {"kept", tr.kept},
                     {"visual_tokens", tr.visual_tokens},
                     {"assemble_seconds", tr.assemble_seconds},
                     {"predicted_token_std", tr.predicted_token_std},
                     {"trimmed", tr.trimmed}});
  }
  return json{{"config", config_to_json(r.config)}, {"summary", summary}, {"steps", steps}}.dump(indent);
}

SimResult parse_result_json(std::string_view text) {
  SimResult r;
  try {
    const auto j = json::parse(text);
    r.config = parse_config(j.at("config").dump());
    const auto& s = j.at("summary");
    r.summary.steps = s.at("steps").get<std::size_t>();
    r.summary.max_tokens = s.at("max_tokens").get<std::size_t>();
    r.summary.mean_tokens = s.at("mean_tokens").get<double>();
    r.summary.p95_assemble_seconds = s.at("p95_assemble_seconds").get<double>();
    r.summary.mean_assemble_seconds = s.at("mean_assemble_seconds").get<double>();
    r.summary.cv_assemble = s.at("cv_assemble").get<double>();
    if (!s.at("first_over_budget").is_null()) r.summary.first_over_budget = s.at("first_over_budget").get<int>();
    r.summary.plateau_mean_tokens = s.at("plateau_mean_tokens").get<double>();
    r.summary.plateau_std_tokens = s.at("plateau_std_tokens").get<double>();
    r.summary.plateau_predicted_std = s.at("plateau_predicted_std").get<double>();
    r.summary.steps_over_budget = s.at("steps_over_budget").get<std::size_t>();
    for (const auto& st : j.at("steps")) {
      StepTrace tr;
      tr.t = st.at("t").get<int>();
      tr.kept = st.at("kept").get<std::vector<int>>();
      tr.visual_tokens = st.at("visual_tokens").get<std::size_t>();
      tr.assemble_seconds = st.at("assemble_seconds").get<double>();
      tr.predicted_token_std = st.at("predicted_token_std").get<double>();
      tr.trimmed = st.at("trimmed").get<bool>();
      r.traces.push_back(std::move(tr));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("simulation report: ") + e.what());
  }
  return r;
}

void report(const SimResult& result, const std::filesystem::path& stem) {
  if (result.traces.empty()) throw Error(ErrorCode::EmptySet, "no traces to report");
  auto csv_path = stem;
  csv_path += ".csv";
  auto json_path = stem;
  json_path += ".json";
  std::ofstream csv(csv_path);
  if (!csv) throw Error(ErrorCode::IoError, "cannot write " + csv_path.string());
  write_trace_csv(csv, result.traces);
  std::ofstream js(json_path);
  if (!js) throw Error(ErrorCode::IoError, "cannot write " + json_path.string());
  js << result_json(result) << '\n';
  if (!csv || !js) throw Error(ErrorCode::IoError, "write failed for " + stem.string());
}

}  // namespace navtoken::harness
