#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "navtoken/trajectory.hpp"

namespace navtoken::metrics {

inline constexpr double kDefaultSuccessDistance = 3.0;  // meters

// 2D paths leave z at 0.
struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

double distance(const Point& a, const Point& b);
double path_length(std::span<const Point> path);

struct EpisodeResult {
  std::string id;
  std::vector<Point> executed;
  std::vector<Point> reference;
  Point goal;
  double shortest_path_length = 0.0;
  double success_distance = kDefaultSuccessDistance;
  std::optional<std::vector<bool>> tracked;
  // Open-loop planning pair (predicted vs ground-truth waypoints), optional.
  std::optional<std::vector<Point>> planned;
  std::optional<std::vector<Point>> planned_gt;
};

void validate_episode(const EpisodeResult& r);

double navigation_error(const EpisodeResult& r);
bool success(const EpisodeResult& r);
bool oracle_success(const EpisodeResult& r);

// S * l / max(p, l) for one episode.
double spl_term(const EpisodeResult& r);
double spl(std::span<const EpisodeResult> results);

// Minimal cumulative Euclidean cost over monotone alignments (steps (1,0),
// (0,1), (1,1)) from the first pair of points to the last.
double dtw_distance(std::span<const Point> a, std::span<const Point> b);

// exp(-DTW(executed, reference) / (|reference| * d_th)).
double ndtw(std::span<const Point> executed, std::span<const Point> reference, double success_distance);
double ndtw(const EpisodeResult& r);

double tracking_rate(const EpisodeResult& r);

// For each 1-based horizon h: mean Euclidean displacement over waypoints 1..h.
std::vector<double> avg_l2(std::span<const Point> pred, std::span<const Point> gt, std::span<const int> horizons);
// Same on trajectories; z only enters for UAVs.
std::vector<double> avg_l2(const trajectory::Trajectory& pred, const trajectory::Trajectory& gt,
                           std::span<const int> horizons);

struct EpisodeMetrics {
  std::string id;
  double ne = 0.0;
  bool success = false;
  bool oracle_success = false;
  double spl = 0.0;
  double ndtw = 0.0;
  std::optional<double> tracking_rate;
  std::optional<double> avg_l2;  // over the full planned horizon
};

EpisodeMetrics evaluate_episode(const EpisodeResult& r);

struct MetricsReport {
  std::size_t episodes = 0;
  double ne = 0.0;    // m
  double sr = 0.0;    // ratio
  double os = 0.0;    // ratio
  double spl = 0.0;   // ratio
  double ndtw = 0.0;  // ratio
  std::optional<double> tr;      // ratio, over episodes with tracking flags
  std::optional<double> avg_l2;  // m, over episodes with a planned pair
};

MetricsReport aggregate(std::span<const EpisodeResult> results);

std::string report_json(const MetricsReport& report, int indent = 2);
void write_episode_csv(std::ostream& out, std::span<const EpisodeMetrics> rows);

// JSONL, one episode per line; see docs/formats.md.
std::vector<EpisodeResult> read_episode_results(std::istream& in);

}  // namespace navtoken::metrics
