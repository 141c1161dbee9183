#include "navtoken/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

#include "json.hpp"

namespace navtoken::metrics {

double distance(const Point& a, const Point& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

double path_length(std::span<const Point> path) {
  double len = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) len += distance(path[i - 1], path[i]);
  return len;
}

void validate_episode(const EpisodeResult& r) {
  if (r.executed.empty() || r.reference.empty()) throw Error(ErrorCode::EmptyPath, "episode '" + r.id + "'");
  if (!(r.shortest_path_length > 0.0)) throw Error(ErrorCode::ZeroShortestPath, "episode '" + r.id + "'");
  if (!(r.success_distance > 0.0)) throw Error(ErrorCode::FieldOutOfRange, "success distance must be positive");
}

double navigation_error(const EpisodeResult& r) {
  if (r.executed.empty()) throw Error(ErrorCode::EmptyPath, "episode '" + r.id + "' has no executed path");
  return distance(r.executed.back(), r.goal);
}

bool success(const EpisodeResult& r) { return navigation_error(r) <= r.success_distance; }

bool oracle_success(const EpisodeResult& r) {
  if (r.executed.empty()) throw Error(ErrorCode::EmptyPath, "episode '" + r.id + "' has no executed path");
  return std::any_of(r.executed.begin(), r.executed.end(),
                     [&](const Point& p) { return distance(p, r.goal) <= r.success_distance; });
}

double spl_term(const EpisodeResult& r) {
  if (!(r.shortest_path_length > 0.0)) throw Error(ErrorCode::ZeroShortestPath, "episode '" + r.id + "'");
  if (!success(r)) return 0.0;
  const double l = r.shortest_path_length;
  return l / std::max(path_length(r.executed), l);
}

double spl(std::span<const EpisodeResult> results) {
  if (results.empty()) throw Error(ErrorCode::EmptySet, "no episodes");
  double sum = 0.0;
  for (const auto& r : results) sum += spl_term(r);
  return sum / static_cast<double>(results.size());
}

double dtw_distance(std::span<const Point> a, std::span<const Point> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyPath, "DTW needs two non-empty paths");
  const std::size_t n = a.size(), m = b.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  // Two rolling rows of the (n+1) x (m+1) table.
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j) {
      const double best = std::min({prev[j], cur[j - 1], prev[j - 1]});
      cur[j] = distance(a[i - 1], b[j - 1]) + best;
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double ndtw(std::span<const Point> executed, std::span<const Point> reference, double success_distance) {
  if (!(success_distance > 0.0)) throw Error(ErrorCode::FieldOutOfRange, "success distance must be positive");
  const double cost = dtw_distance(executed, reference);
  return std::exp(-cost / (static_cast<double>(reference.size()) * success_distance));
}

double ndtw(const EpisodeResult& r) { return ndtw(r.executed, r.reference, r.success_distance); }

double tracking_rate(const EpisodeResult& r) {
  if (!r.tracked || r.tracked->empty()) throw Error(ErrorCode::MissingFlags, "episode '" + r.id + "' has no tracking flags");
  const auto hits = std::count(r.tracked->begin(), r.tracked->end(), true);
  return static_cast<double>(hits) / static_cast<double>(r.tracked->size());
}

std::vector<double> avg_l2(std::span<const Point> pred, std::span<const Point> gt, std::span<const int> horizons) {
  if (pred.size() != gt.size()) throw Error(ErrorCode::HorizonOutOfRange, "predicted and reference lengths differ");
  std::vector<double> out;
  out.reserve(horizons.size());
  for (int h : horizons) {
    if (h < 1 || static_cast<std::size_t>(h) > pred.size()) {
      throw Error(ErrorCode::HorizonOutOfRange, "horizon " + std::to_string(h) + " outside 1.." +
                                                    std::to_string(pred.size()));
    }
    double sum = 0.0;
    for (int i = 0; i < h; ++i) sum += distance(pred[i], gt[i]);
    out.push_back(sum / h);
  }
  return out;
}

std::vector<double> avg_l2(const trajectory::Trajectory& pred, const trajectory::Trajectory& gt,
                           std::span<const int> horizons) {
  if (pred.embodiment != gt.embodiment) throw Error(ErrorCode::EmbodimentMismatch, "avg_l2 across embodiments");
  std::vector<Point> a, b;
  for (int i = 0; i < trajectory::kWaypointCount; ++i) {
    const auto& p = pred.waypoints[i];
    const auto& g = gt.waypoints[i];
    a.push_back({p.x, p.y, gt.z_valid() ? p.z : 0.0});
    b.push_back({g.x, g.y, gt.z_valid() ? g.z : 0.0});
  }
  return avg_l2(a, b, horizons);
}

EpisodeMetrics evaluate_episode(const EpisodeResult& r) {
  validate_episode(r);
  EpisodeMetrics m;
  m.id = r.id;
  m.ne = navigation_error(r);
  m.success = m.ne <= r.success_distance;
  m.oracle_success = oracle_success(r);
  m.spl = spl_term(r);
  m.ndtw = ndtw(r);
  if (r.tracked && !r.tracked->empty()) m.tracking_rate = tracking_rate(r);
  if (r.planned && r.planned_gt) {
    const int h = static_cast<int>(r.planned->size());
    if (h > 0) m.avg_l2 = avg_l2(*r.planned, *r.planned_gt, std::span<const int>(&h, 1)).front();
  }
  return m;
}

MetricsReport aggregate(std::span<const EpisodeResult> results) {
  if (results.empty()) throw Error(ErrorCode::EmptySet, "no episodes to aggregate");
  MetricsReport rep;
  rep.episodes = results.size();
  double tr_sum = 0.0, l2_sum = 0.0;
  std::size_t tr_n = 0, l2_n = 0;
  for (const auto& r : results) {
    const auto m = evaluate_episode(r);
    rep.ne += m.ne;
    rep.sr += m.success ? 1.0 : 0.0;
    rep.os += m.oracle_success ? 1.0 : 0.0;
    rep.spl += m.spl;
    rep.ndtw += m.ndtw;
    if (m.tracking_rate) {
      tr_sum += *m.tracking_rate;
      ++tr_n;
    }
    if (m.avg_l2) {
      l2_sum += *m.avg_l2;
      ++l2_n;
    }
  }
  const auto n = static_cast<double>(results.size());
  rep.ne /= n;
  rep.sr /= n;
  rep.os /= n;
  rep.spl /= n;
  rep.ndtw /= n;
  if (tr_n) rep.tr = tr_sum / static_cast<double>(tr_n);
  if (l2_n) rep.avg_l2 = l2_sum / static_cast<double>(l2_n);
  return rep;
}

std::string report_json(const MetricsReport& report, int indent) {
  nlohmann::json j = {{"episodes", report.episodes},
                      {"NE", {{"value", report.ne}, {"unit", "m"}}},
                      {"SR", {{"value", report.sr}, {"unit", "ratio"}}},
                      {"OS", {{"value", report.os}, {"unit", "ratio"}}},
                      {"SPL", {{"value", report.spl}, {"unit", "ratio"}}},
                      {"nDTW", {{"value", report.ndtw}, {"unit", "ratio"}}}};
  j["TR"] = report.tr ? nlohmann::json{{"value", *report.tr}, {"unit", "ratio"}} : nlohmann::json(nullptr);
  j["avg_L2"] = report.avg_l2 ? nlohmann::json{{"value", *report.avg_l2}, {"unit", "m"}} : nlohmann::json(nullptr);
  return j.dump(indent);
}

void write_episode_csv(std::ostream& out, std::span<const EpisodeMetrics> rows) {
  out << "id,ne,success,oracle_success,spl,ndtw,tr,avg_l2\n";
  for (const auto& m : rows) {
    out << m.id << ',' << m.ne << ',' << (m.success ? 1 : 0) << ',' << (m.oracle_success ? 1 : 0) << ',' << m.spl
        << ',' << m.ndtw << ',';
    if (m.tracking_rate) out << *m.tracking_rate;
    out << ',';
    if (m.avg_l2) out << *m.avg_l2;
    out << '\n';
  }
}

namespace {

std::vector<Point> points_from_json(const nlohmann::json& j) {
  std::vector<Point> out;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() < 2 || p.size() > 3) throw Error(ErrorCode::FieldOutOfRange, "point must be [x, y] or [x, y, z]");
    out.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.size() == 3 ? p.at(2).get<double>() : 0.0});
  }
  return out;
}

}  // namespace

std::vector<EpisodeResult> read_episode_results(std::istream& in) {
  std::vector<EpisodeResult> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      EpisodeResult r;
      r.id = j.value("id", std::to_string(line_no));
      r.executed = points_from_json(j.at("executed"));
      r.reference = points_from_json(j.at("reference"));
      if (r.executed.empty() || r.reference.empty()) throw Error(ErrorCode::EmptyPath, "episode '" + r.id + "'");
      r.goal = j.contains("goal") ? points_from_json(nlohmann::json::array({j.at("goal")})).front() : r.reference.back();
      r.shortest_path_length = j.contains("shortest_path_length") ? j.at("shortest_path_length").get<double>()
                                                                   : path_length(r.reference);
      r.success_distance = j.value("success_distance", kDefaultSuccessDistance);
      if (j.contains("tracked")) r.tracked = j.at("tracked").get<std::vector<bool>>();
      if (j.contains("planned") && j.contains("planned_gt")) {
        r.planned = points_from_json(j.at("planned"));
        r.planned_gt = points_from_json(j.at("planned_gt"));
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const Error& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

}  // namespace navtoken::metrics
