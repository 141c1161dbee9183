#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "json.hpp"
#include "navtoken/metrics.hpp"
#include "oracles.hpp"

using namespace navtoken;
using namespace navtoken::metrics;

namespace {

EpisodeResult straight_episode(const std::string& id, double end_x, double goal_x = 10.0) {
  EpisodeResult r;
  r.id = id;
  for (int i = 0; i <= 10; ++i) r.reference.push_back({static_cast<double>(i), 0, 0});
  const int steps = 10;
  for (int i = 0; i <= steps; ++i) r.executed.push_back({end_x * i / steps, 0, 0});
  r.goal = {goal_x, 0, 0};
  r.shortest_path_length = 10.0;
  return r;
}

std::vector<Point> random_path(std::mt19937& gen, std::size_t n) {
  std::uniform_real_distribution<double> u(-5, 5);
  std::vector<Point> p(n);
  for (auto& q : p) q = {u(gen), u(gen), u(gen)};
  return p;
}

std::vector<oracle::P3> to_p3(const std::vector<Point>& p) {
  std::vector<oracle::P3> out;
  for (const auto& q : p) out.push_back({q.x, q.y, q.z});
  return out;
}

}  // namespace

TEST(NavigationError, ThreeFourFive) {
  EpisodeResult r;
  r.executed = {{0, 0, 0}, {3, 4, 0}};
  r.goal = {0, 0, 0};
  EXPECT_DOUBLE_EQ(navigation_error(r), 5.0);
  r.executed.back() = {1, 2, 2};
  EXPECT_DOUBLE_EQ(navigation_error(r), 3.0);
  r.executed.clear();
  EXPECT_THROW(navigation_error(r), Error);
}

TEST(Success, OracleVersusFinal) {
  EpisodeResult r;
  r.goal = {10, 0, 0};
  r.executed = {{0, 0, 0}, {9, 0, 0}, {0, 0, 0}};
  r.reference = {{0, 0, 0}, {10, 0, 0}};
  r.shortest_path_length = 10;
  EXPECT_TRUE(oracle_success(r));
  EXPECT_FALSE(success(r));
  EXPECT_EQ(spl_term(r), 0.0);
  r.executed.pop_back();
  EXPECT_TRUE(success(r));
}

TEST(Spl, Examples) {
  auto r = straight_episode("a", 10.0);
  EXPECT_DOUBLE_EQ(spl_term(r), 1.0);
  // Detour of total length 20 that still ends on the goal.
  r.executed = {{0, 0, 0}, {5, 5 * std::sqrt(3.0), 0}, {10, 0, 0}};
  EXPECT_NEAR(spl_term(r), 0.5, 1e-12);
  r.shortest_path_length = 0.0;
  try {
    spl_term(r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroShortestPath);
  }
}

TEST(Ndtw, IdenticalPathsScoreOne) {
  std::mt19937 gen(1);
  const auto p = random_path(gen, 12);
  EXPECT_EQ(dtw_distance(p, p), 0.0);
  EXPECT_EQ(ndtw(p, p, 3.0), 1.0);
}

TEST(Ndtw, ConstantPerpendicularOffset) {
  std::vector<Point> ref, exe;
  const double delta = 0.7;
  for (int i = 0; i < 20; ++i) {
    ref.push_back({static_cast<double>(i), 0, 0});
    exe.push_back({static_cast<double>(i), delta, 0});
  }
  EXPECT_NEAR(dtw_distance(exe, ref), 20 * delta, 1e-12);
  EXPECT_NEAR(ndtw(exe, ref, 3.0), std::exp(-delta / 3.0), 1e-12);
}

TEST(Dtw, MatchesExhaustiveEnumeration) {
  std::mt19937 gen(2);
  for (std::size_t n = 1; n <= 6; ++n) {
    for (std::size_t m = 1; m <= 6; ++m) {
      for (int rep = 0; rep < 3; ++rep) {
        const auto a = random_path(gen, n);
        const auto b = random_path(gen, m);
        const double expect = oracle::dtw_exhaustive(to_p3(a), to_p3(b));
        EXPECT_NEAR(dtw_distance(a, b), expect, 1e-9 * std::max(1.0, expect)) << n << "x" << m;
        EXPECT_NEAR(dtw_distance(b, a), expect, 1e-9 * std::max(1.0, expect));
      }
    }
  }
}

TEST(Dtw, TranslationInvariant) {
  std::mt19937 gen(3);
  const auto a = random_path(gen, 7);
  const auto b = random_path(gen, 9);
  auto a2 = a, b2 = b;
  for (auto& p : a2) p = {p.x + 13, p.y - 4, p.z + 2};
  for (auto& p : b2) p = {p.x + 13, p.y - 4, p.z + 2};
  EXPECT_NEAR(dtw_distance(a, b), dtw_distance(a2, b2), 1e-9);
  EXPECT_THROW(dtw_distance(a, std::vector<Point>{}), Error);
}

TEST(TrackingRate, HalfAndMissing) {
  EpisodeResult r;
  r.tracked = std::vector<bool>{true, false, true, false};
  EXPECT_DOUBLE_EQ(tracking_rate(r), 0.5);
  r.tracked.reset();
  try {
    tracking_rate(r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingFlags);
  }
}

TEST(AvgL2, Horizons) {
  const std::vector<Point> gt{{1, 0, 0}, {2, 0, 0}, {3, 0, 0}, {4, 0, 0}};
  const std::vector<Point> pred{{1, 1, 0}, {2, 0, 0}, {3, 3, 0}, {4, 4, 0}};
  const std::vector<int> h{1, 2, 4};
  const auto out = avg_l2(pred, gt, h);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_DOUBLE_EQ(out[0], 1.0);
  EXPECT_DOUBLE_EQ(out[1], 0.5);
  EXPECT_DOUBLE_EQ(out[2], 2.0);
  const std::vector<int> bad{5};
  try {
    avg_l2(pred, gt, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::HorizonOutOfRange);
  }
}

TEST(AvgL2, TrajectoryIgnoresZUnlessUav) {
  trajectory::Trajectory a, b;
  b.waypoints[0].z = 5.0;
  const std::vector<int> h{1};
  EXPECT_EQ(avg_l2(a, b, h).front(), 0.0);
  a.embodiment = b.embodiment = EmbodimentKind::UAV;
  EXPECT_DOUBLE_EQ(avg_l2(a, b, h).front(), 5.0);
}

TEST(Aggregate, HalfSuccess) {
  const std::vector<EpisodeResult> eps{straight_episode("hit", 10.0), straight_episode("miss", 2.0)};
  const auto rep = aggregate(eps);
  EXPECT_EQ(rep.episodes, 2u);
  EXPECT_DOUBLE_EQ(rep.sr, 0.5);
  EXPECT_DOUBLE_EQ(rep.os, 0.5);
  EXPECT_DOUBLE_EQ(rep.ne, (0.0 + 8.0) / 2);
  EXPECT_DOUBLE_EQ(rep.spl, 0.5);
  EXPECT_FALSE(rep.tr.has_value());
  EXPECT_FALSE(rep.avg_l2.has_value());
}

TEST(Aggregate, SingleEpisodeMatchesPerEpisode) {
  const auto ep = straight_episode("one", 9.0);
  const auto rep = aggregate(std::vector<EpisodeResult>{ep});
  const auto m = evaluate_episode(ep);
  EXPECT_EQ(rep.ne, m.ne);
  EXPECT_EQ(rep.sr, m.success ? 1.0 : 0.0);
  EXPECT_EQ(rep.spl, m.spl);
  EXPECT_EQ(rep.ndtw, m.ndtw);
}

TEST(Aggregate, EmptySet) {
  try {
    aggregate(std::vector<EpisodeResult>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySet);
  }
}

TEST(Aggregate, RandomSetsInvariants) {
  std::mt19937 gen(4);
  std::uniform_real_distribution<double> u(-8, 8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<EpisodeResult> eps;
    const int n = 1 + static_cast<int>(gen() % 10);
    for (int i = 0; i < n; ++i) {
      EpisodeResult r;
      r.id = std::to_string(i);
      r.executed = random_path(gen, 2 + gen() % 8);
      r.reference = random_path(gen, 2 + gen() % 8);
      r.goal = r.reference.back();
      r.shortest_path_length = 0.5 + std::abs(u(gen));
      if (gen() % 2) r.tracked = std::vector<bool>{gen() % 2 == 0, gen() % 2 == 0};
      eps.push_back(std::move(r));
    }
    const auto rep = aggregate(eps);
    EXPECT_GE(rep.os, rep.sr);
    EXPECT_LE(rep.spl, rep.sr + 1e-15);
    EXPECT_GE(rep.ndtw, 0.0);
    EXPECT_LE(rep.ndtw, 1.0);
    auto shuffled = eps;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    const auto rep2 = aggregate(shuffled);
    EXPECT_NEAR(rep2.ne, rep.ne, 1e-12);
    EXPECT_NEAR(rep2.spl, rep.spl, 1e-12);
    EXPECT_NEAR(rep2.ndtw, rep.ndtw, 1e-12);
    EXPECT_EQ(rep2.sr, rep.sr);
  }
}

TEST(Reader, JsonlDefaultsAndErrors) {
  std::istringstream in(
      "{\"id\": \"e1\", \"executed\": [[0, 0], [3, 4]], \"reference\": [[0, 0], [3, 0], [3, 4]], \"tracked\": [true, false]}\n"
      "\n"
      "{\"executed\": [[0, 0, 1]], \"reference\": [[0, 0, 1]], \"goal\": [0, 0, 2], \"shortest_path_length\": 2.5, "
      "\"success_distance\": 0.5, \"planned\": [[1, 1]], \"planned_gt\": [[1, 2]]}\n");
  const auto eps = read_episode_results(in);
  ASSERT_EQ(eps.size(), 2u);
  EXPECT_EQ(eps[0].id, "e1");
  EXPECT_EQ(eps[0].goal, (Point{3, 4, 0}));
  EXPECT_DOUBLE_EQ(eps[0].shortest_path_length, 7.0);
  EXPECT_EQ(eps[1].id, "3");
  EXPECT_EQ(eps[1].executed[0].z, 1.0);
  EXPECT_DOUBLE_EQ(eps[1].success_distance, 0.5);
  ASSERT_TRUE(eps[1].planned.has_value());
  const auto rep = aggregate(eps);
  EXPECT_DOUBLE_EQ(*rep.tr, 0.5);
  EXPECT_DOUBLE_EQ(*rep.avg_l2, 1.0);

  std::istringstream bad("{\"executed\": [[0, 0]], \"reference\": [[0, 0]]}\n{\"executed\": []}\n");
  try {
    read_episode_results(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Report, JsonAndCsv) {
  const std::vector<EpisodeResult> eps{straight_episode("hit", 10.0), straight_episode("miss", 2.0)};
  const auto j = nlohmann::json::parse(report_json(aggregate(eps)));
  EXPECT_EQ(j["SR"]["value"], 0.5);
  EXPECT_EQ(j["NE"]["unit"], "m");
  EXPECT_TRUE(j["TR"].is_null());
  std::vector<EpisodeMetrics> rows;
  for (const auto& e : eps) rows.push_back(evaluate_episode(e));
  std::ostringstream out;
  write_episode_csv(out, rows);
  std::istringstream lines(out.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "id,ne,success,oracle_success,spl,ndtw,tr,avg_l2");
  std::getline(lines, line);
  EXPECT_EQ(line.substr(0, 12), "hit,0,1,1,1,");
  EXPECT_EQ(line.back(), ',');
}
