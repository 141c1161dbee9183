// navtoken command-line front end.
//
// Exit codes: 0 ok, 1 runtime/data error, 2 usage or config error,
// 3 infeasible or too-small budget.

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "navtoken/bats.hpp"
#include "navtoken/cache.hpp"
#include "navtoken/core.hpp"
#include "navtoken/error.hpp"
#include "navtoken/harness.hpp"
#include "navtoken/metrics.hpp"
#include "navtoken/organizer.hpp"
#include "navtoken/random.hpp"
#include "navtoken/trajectory.hpp"
#include "navtoken/tvi.hpp"

namespace {

using namespace navtoken;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBudget = 3;

// Writes to --out when given, stdout otherwise.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw Error(ErrorCode::IoError, "cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file (see docs/formats.md)");
  cmd->add_option("--seed", c.seed, "Random seed (overrides the config)");
  cmd->add_option("--out", c.out, "Output path (stdout when omitted)");
}

// A budget that cannot hold the latest frame maps to exit code 3, not 2.
void validate(const harness::SimConfig& cfg) {
  bats::budget_cap(cfg.budget, std::max(cfg.cameras, 1));
  harness::validate_config(cfg);
}

harness::SimConfig base_config(const Common& c) {
  harness::SimConfig cfg;
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot read config " + c.config);
    std::stringstream ss;
    ss << in.rdbuf();
    const auto j = json::parse(ss.str(), nullptr, false);
    if (j.is_object() && j.contains("B") && j.contains("N") && j["B"].is_number_integer() &&
        j["N"].is_number_integer()) {
      bats::budget_cap(j["B"].get<int>(), std::max(j["N"].get<int>(), 1));
    }
    cfg = harness::parse_config(ss.str());
  }
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

// ---------------------------------------------------------------- plan

struct PlanArgs {
  Common common;
  std::optional<int> budget, cameras, t_max, latest;
  std::optional<double> epsilon;
  bool draw = false;
};

int run_plan(const PlanArgs& a) {
  auto cfg = base_config(a.common);
  if (a.budget) cfg.budget = *a.budget;
  if (a.cameras) cfg.cameras = *a.cameras;
  if (a.t_max) cfg.max_latest = *a.t_max;
  if (a.epsilon) cfg.epsilon = *a.epsilon;
  validate(cfg);
  Output out(a.common.out);
  auto& os = out.stream();

  if (a.latest) {
    const auto curve = bats::solve_decay_rate(*a.latest, cfg.cameras, cfg.budget, cfg.epsilon);
    if (curve.status == bats::CurveStatus::Infeasible) {
      std::cerr << "T=" << *a.latest << " is infeasible for B=" << cfg.budget << ", N=" << cfg.cameras
                << " (cap " << curve.cap << " < eps*T " << cfg.epsilon * *a.latest << ")\n";
      return kExitBudget;
    }
    if (a.draw) {
      const auto plan = bats::draw_plan(curve, mix_seed(cfg.seed, static_cast<std::uint64_t>(*a.latest)));
      os << json{{"latest", plan.latest}, {"seed", plan.seed}, {"kept", plan.kept}}.dump() << '\n';
      return kExitOk;
    }
    os << "t,probability\n";
    for (int t = 1; t <= *a.latest; ++t) {
      const double p = curve.feasible() ? bats::sampling_probability(t, *a.latest, *curve.decay_rate, cfg.epsilon) : 1.0;
      os << t << ',' << format_double(p) << '\n';
    }
    return kExitOk;
  }

  os << "T,k,feasible,expected_frames\n";
  for (const auto& curve : bats::precompute_table(cfg.budget, cfg.cameras, cfg.epsilon, cfg.max_latest)) {
    os << curve.latest << ',';
    if (curve.decay_rate) os << format_double(*curve.decay_rate);
    os << ',' << (curve.status == bats::CurveStatus::Infeasible ? 0 : 1) << ',';
    if (curve.feasible()) os << format_double(bats::expected_frames(*curve.decay_rate, curve.latest, curve.epsilon));
    else if (curve.status == bats::CurveStatus::NoSamplingNeeded) os << curve.latest;
    os << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------- organize

struct OrganizeArgs {
  Common common;
  std::string episode, params, store, strategy;
  std::optional<int> step, budget, channels;
  std::optional<double> epsilon;
  bool vectors = false;
};

int run_organize(const OrganizeArgs& a) {
  auto cfg = base_config(a.common);
  if (a.budget) cfg.budget = *a.budget;
  if (a.epsilon) cfg.epsilon = *a.epsilon;
  if (a.channels) cfg.channels = *a.channels;
  if (!a.strategy.empty()) cfg.strategy = harness::parse_strategy(a.strategy);

  const auto stream = ingest_episode_file(a.episode);
  const int latest = a.step.value_or(stream.steps.back().t);
  cfg.max_latest = latest;
  cfg.cameras = static_cast<int>(stream.rig.size());
  validate(cfg);

  const auto params = a.params.empty() ? tvi::init_params(cfg.channels, cfg.pe_dim, mix_seed(cfg.seed, 0x7469))
                                       : tvi::load_params(a.params, cfg.channels);
  std::optional<cache::CacheStore> store;
  if (!a.store.empty()) store = cache::CacheStore::open(a.store, cfg.channels);

  const auto table = cfg.strategy == harness::Strategy::Bats
                         ? bats::precompute_table(cfg.budget, cfg.cameras, cfg.epsilon, latest)
                         : std::vector<bats::SamplingCurve>{};
  const auto plan = harness::plan_step(cfg, table, latest);
  const harness::EpisodeFeatures features(stream, std::filesystem::path(a.episode).parent_path(), cfg.channels,
                                          cfg.seed, store ? &*store : nullptr);

  int text_len = 0;
  for (const auto& s : stream.steps) {
    if (s.t == latest) text_len = s.text_len;
  }
  organizer::FeatureMatrix text(text_len, cfg.channels);
  DeterministicRng rng(mix_seed(cfg.seed, 0x7478));
  for (auto& v : text.values) v = static_cast<float>(rng.uniform(-1.0, 1.0));

  const auto seq = organizer::assemble_navigation(plan, stream.rig, features, text, params);
  Output out(a.common.out);
  auto layout = json::parse(organizer::layout_json(seq, a.vectors, -1));
  layout["episode"] = stream.episode_id;
  layout["plan"] = {{"latest", plan.latest}, {"seed", plan.seed}, {"kept", plan.kept}};
  out.stream() << layout.dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  Common common;
  std::string strategy;
  bool compare = false;
  unsigned threads = 0;
};

int run_simulate(const SimulateArgs& a) {
  auto cfg = base_config(a.common);
  if (!a.strategy.empty()) cfg.strategy = harness::parse_strategy(a.strategy);
  validate(cfg);

  std::vector<harness::SimConfig> configs{cfg};
  if (a.compare) {
    configs.clear();
    for (auto s : {harness::Strategy::Bats, harness::Strategy::Uniform, harness::Strategy::Linear}) {
      auto c = cfg;
      c.strategy = s;
      harness::validate_config(c);
      configs.push_back(c);
    }
  }
  const auto results = harness::simulate_many(configs, a.threads);

  json summary = json::array();
  for (const auto& r : results) {
    if (!a.common.out.empty()) {
      std::filesystem::path stem = a.common.out;
      if (a.compare) stem += "_" + std::string(harness::to_string(r.config.strategy));
      harness::report(r, stem);
    }
    auto j = json::parse(harness::result_json(r, -1));
    summary.push_back({{"strategy", j["config"]["strategy"]}, {"summary", j["summary"]}});
  }
  std::cout << (a.compare ? summary : summary.front()).dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  Common common;
  std::string input, csv;
};

int run_eval(const EvalArgs& a) {
  std::ifstream in(a.input);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + a.input);
  const auto results = metrics::read_episode_results(in);
  const auto report = metrics::aggregate(results);
  if (!a.csv.empty()) {
    std::vector<metrics::EpisodeMetrics> rows;
    for (const auto& r : results) rows.push_back(metrics::evaluate_episode(r));
    std::ofstream csv(a.csv);
    if (!csv) throw Error(ErrorCode::IoError, "cannot write " + a.csv);
    metrics::write_episode_csv(csv, rows);
  }
  Output out(a.common.out);
  out.stream() << metrics::report_json(report) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- cache

struct CacheArgs {
  Common common;
  std::string store, episode, episode_id;
  int channels = tvi::kDefaultChannels;
  int t = 1;
  int camera = 0;
};

json stats_json(const cache::CacheStats& s) {
  return {{"entries", s.entries},
          {"payload_bytes", s.payload_bytes},
          {"file_bytes", s.file_bytes},
          {"per_episode", s.per_episode}};
}

int run_cache_create(const CacheArgs& a) {
  const auto store = cache::CacheStore::create(a.store, a.channels);
  std::cout << stats_json(store.stats()).dump(2) << '\n';
  return kExitOk;
}

int run_cache_stats(const CacheArgs& a) {
  const auto store = cache::CacheStore::open(a.store);
  Output out(a.common.out);
  auto j = stats_json(store.stats());
  j["channels"] = store.channels();
  out.stream() << j.dump(2) << '\n';
  return kExitOk;
}

int run_cache_ingest(const CacheArgs& a) {
  auto store = cache::CacheStore::open(a.store);
  const auto stream = ingest_episode_file(a.episode);
  const auto base = std::filesystem::path(a.episode).parent_path();
  std::size_t added = 0, skipped = 0;
  for (const auto& step : stream.steps) {
    for (const auto& frame : step.frames) {
      const cache::CacheKey key{stream.episode_id, step.t, frame.camera};
      if (frame.data_ref.rfind("file:", 0) != 0 || store.contains(key)) {
        ++skipped;
        continue;
      }
      std::filesystem::path path = frame.data_ref.substr(5);
      if (path.is_relative()) path = base / path;
      const auto grid = load_grid_file(path, step.t, frame.camera);
      store.put(key, cache::CacheEntry(organizer::grid_pool(grid, organizer::kCoarseTarget)));
      ++added;
    }
  }
  store.sync();
  auto j = stats_json(store.stats());
  j["added"] = added;
  j["skipped"] = skipped;
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int run_cache_get(const CacheArgs& a) {
  const auto store = cache::CacheStore::open(a.store);
  const auto entry = store.get({a.episode_id, a.t, a.camera});
  Output out(a.common.out);
  out.stream() << json{{"episode", a.episode_id}, {"t", a.t}, {"camera", a.camera}, {"channels", entry.channels()},
                       {"values", std::vector<float>(entry.values().begin(), entry.values().end())}}
                      .dump()
               << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- fit-alpha

struct FitArgs {
  Common common;
  std::string input;
  double percentile = 0.99;
};

int run_fit_alpha(const FitArgs& a) {
  std::ifstream in(a.input);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + a.input);
  const auto all = trajectory::read_trajectories(in);
  std::map<EmbodimentKind, std::vector<trajectory::Trajectory>> groups;
  for (const auto& t : all) groups[t.embodiment].push_back(t);
  if (groups.empty()) throw Error(ErrorCode::InsufficientData, "no trajectories in " + a.input);

  Output out(a.common.out);
  auto& os = out.stream();
  const auto cell = [](std::optional<double> v) {
    std::ostringstream ss;
    if (v) ss << std::fixed << std::setprecision(3) << *v;
    else ss << "-";
    return ss.str();
  };
  os << std::left << std::setw(10) << "embodiment" << std::setw(8) << "n" << std::setw(12) << "alpha_x"
     << std::setw(12) << "alpha_y" << std::setw(12) << "alpha_z" << std::setw(12) << "alpha_theta" << "reference\n";
  for (const auto& [kind, trajs] : groups) {
    const auto fit = trajectory::fit_scaling_factors(trajs, a.percentile);
    const auto ref = trajectory::ScalingFactors::reference(kind);
    os << std::left << std::setw(10) << to_string(kind) << std::setw(8) << trajs.size() << std::setw(12)
       << cell(fit.x) << std::setw(12) << cell(fit.y) << std::setw(12) << cell(fit.z) << std::setw(12)
       << cell(fit.theta) << cell(ref.x) << ' ' << cell(ref.y) << ' ' << cell(ref.z) << ' ' << cell(ref.theta)
       << '\n';
  }
  return kExitOk;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::ConfigError: return kExitConfig;
    case ErrorCode::BudgetTooSmall:
    case ErrorCode::InfeasibleCurve: return kExitBudget;
    default: return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Token pipeline tools for multi-camera navigation"};
  app.require_subcommand(1);

  PlanArgs plan;
  auto* plan_cmd = app.add_subcommand("plan", "Sampling curves and decay-rate tables as CSV");
  add_common(plan_cmd, plan.common);
  plan_cmd->add_option("-B,--budget", plan.budget, "Visual token budget");
  plan_cmd->add_option("-N,--cameras", plan.cameras, "Camera count");
  plan_cmd->add_option("--epsilon", plan.epsilon, "Probability floor");
  plan_cmd->add_option("--t-max", plan.t_max, "Largest T in the table");
  plan_cmd->add_option("--latest", plan.latest, "Emit P(t) for this T instead of the table");
  plan_cmd->add_flag("--draw", plan.draw, "With --latest: draw one plan and print its kept set");

  OrganizeArgs org;
  auto* org_cmd = app.add_subcommand("organize", "Assemble one navigation step and print its layout");
  add_common(org_cmd, org.common);
  org_cmd->add_option("--episode", org.episode, "Episode JSONL")->required()->check(CLI::ExistingFile);
  org_cmd->add_option("--step", org.step, "Latest timestep (default: last step)");
  org_cmd->add_option("-B,--budget", org.budget, "Visual token budget");
  org_cmd->add_option("--epsilon", org.epsilon, "Probability floor");
  org_cmd->add_option("--channels", org.channels, "Feature width C");
  org_cmd->add_option("--strategy", org.strategy, "bats, uniform or linear");
  org_cmd->add_option("--params", org.params, "TVI parameter file (TVIP)");
  org_cmd->add_option("--cache", org.store, "Feature cache for cache: references");
  org_cmd->add_flag("--vectors", org.vectors, "Include token vectors in the output");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Run the per-step pipeline on a synthetic episode");
  add_common(sim_cmd, sim.common);
  sim_cmd->add_option("--strategy", sim.strategy, "bats, uniform or linear");
  sim_cmd->add_flag("--compare", sim.compare, "Run all three strategies in parallel");
  sim_cmd->add_option("--threads", sim.threads, "Worker threads (0 = hardware)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Navigation metrics over episode JSONL");
  add_common(eval_cmd, ev.common);
  eval_cmd->add_option("--input", ev.input, "Episode results JSONL")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--csv", ev.csv, "Per-episode CSV output");

  CacheArgs ca;
  auto* cache_cmd = app.add_subcommand("cache", "Coarse feature cache maintenance");
  cache_cmd->require_subcommand(1);
  auto* c_create = cache_cmd->add_subcommand("create", "Create an empty store");
  auto* c_stats = cache_cmd->add_subcommand("stats", "Entry and byte counts");
  auto* c_ingest = cache_cmd->add_subcommand("ingest", "Pool and store every file: grid of an episode");
  auto* c_get = cache_cmd->add_subcommand("get", "Print one entry");
  for (auto* c : {c_create, c_stats, c_ingest, c_get}) {
    add_common(c, ca.common);
    c->add_option("--store", ca.store, "Store path")->required();
  }
  c_create->add_option("--channels", ca.channels, "Feature width C");
  c_ingest->add_option("--episode", ca.episode, "Episode JSONL")->required()->check(CLI::ExistingFile);
  c_get->add_option("--episode-id", ca.episode_id, "Episode id")->required();
  c_get->add_option("--t", ca.t, "Timestep")->required();
  c_get->add_option("--camera", ca.camera, "Camera index")->required();

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit-alpha", "Fit per-embodiment scaling factors");
  add_common(fit_cmd, fit.common);
  fit_cmd->add_option("--input", fit.input, "Trajectory JSONL")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--percentile", fit.percentile, "Quantile in (0, 1]")->check(CLI::Range(0.0, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*plan_cmd) return run_plan(plan);
    if (*org_cmd) return run_organize(org);
    if (*sim_cmd) return run_simulate(sim);
    if (*eval_cmd) return run_eval(ev);
    if (*c_create) return run_cache_create(ca);
    if (*c_stats) return run_cache_stats(ca);
    if (*c_ingest) return run_cache_ingest(ca);
    if (*c_get) return run_cache_get(ca);
    if (*fit_cmd) return run_fit_alpha(fit);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}
