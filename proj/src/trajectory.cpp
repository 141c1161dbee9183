#include "navtoken/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "json.hpp"
#include "navtoken/random.hpp"

namespace navtoken::trajectory {

double wrap_angle(double theta) {
  double r = std::remainder(theta, kTwoPi);  // [-pi, pi]
  if (r <= -std::numbers::pi) r += kTwoPi;
  return r;
}

ScalingFactors ScalingFactors::reference(EmbodimentKind kind) {
  switch (kind) {
    case EmbodimentKind::IndoorRobot: return {kind, 1.0, 0.433, std::nullopt, 2.09};
    case EmbodimentKind::UAV: return {kind, 7.93, 3.19, 7.85, 1.04};
    case EmbodimentKind::Car: return {kind, 50.8, 14.9, std::nullopt, 1.52};
  }
  throw Error(ErrorCode::FieldOutOfRange, "unknown embodiment");
}

double ScalingFactors::for_dim(int dim) const {
  switch (dim) {
    case 0: return x;
    case 1: return y;
    case 2: return z.value_or(0.0);
    default: return theta;
  }
}

void validate_scaling(const ScalingFactors& alpha) {
  const bool wants_z = alpha.embodiment == EmbodimentKind::UAV;
  if (!(alpha.x > 0 && alpha.y > 0 && alpha.theta > 0) || (alpha.z && !(*alpha.z > 0))) {
    throw Error(ErrorCode::FieldOutOfRange, "scaling factors must be positive");
  }
  if (wants_z != alpha.z.has_value()) {
    throw Error(ErrorCode::FieldOutOfRange, "z scaling must be present exactly for UAVs");
  }
}

namespace {

void check_embodiment(EmbodimentKind a, EmbodimentKind b) {
  if (a != b) {
    throw Error(ErrorCode::EmbodimentMismatch, std::string(to_string(a)) + " vs " + std::string(to_string(b)));
  }
}

double& component(Waypoint& w, int dim) {
  switch (dim) {
    case 0: return w.x;
    case 1: return w.y;
    case 2: return w.z;
    default: return w.theta;
  }
}

double component(const Waypoint& w, int dim) {
  switch (dim) {
    case 0: return w.x;
    case 1: return w.y;
    case 2: return w.z;
    default: return w.theta;
  }
}

bool dim_valid(const Trajectory& t, int dim) { return dim != 2 || t.z_valid(); }

double gelu(double x) {
  constexpr double c = 0.7978845608028654;
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
  constexpr double c = 0.7978845608028654;
  const double t = std::tanh(c * (x + 0.044715 * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * x * x);
}

void affine(const DenseLayer& layer, std::span<const double> in, std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(layer.out_dim), 0.0);
  for (int o = 0; o < layer.out_dim; ++o) {
    double acc = layer.b[o];
    const double* row = layer.w.data() + static_cast<std::size_t>(o) * layer.in_dim;
    for (int i = 0; i < layer.in_dim; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

// Pre-activations and activations of every layer for one input.
struct ForwardTrace {
  std::vector<double> z1, a1, z2, a2, z3, out;
};

ForwardTrace trace_forward(const PlanningHead& head, std::span<const double> e) {
  if (e.size() != static_cast<std::size_t>(head.input_dim())) {
    throw Error(ErrorCode::ShapeMismatch, "planning head expects input of width " +
                                              std::to_string(head.input_dim()) + ", got " + std::to_string(e.size()));
  }
  ForwardTrace tr;
  affine(head.layers[0], e, tr.z1);
  tr.a1.resize(tr.z1.size());
  std::transform(tr.z1.begin(), tr.z1.end(), tr.a1.begin(), gelu);
  affine(head.layers[1], tr.a1, tr.z2);
  tr.a2.resize(tr.z2.size());
  std::transform(tr.z2.begin(), tr.z2.end(), tr.a2.begin(), gelu);
  affine(head.layers[2], tr.a2, tr.z3);
  tr.out.resize(tr.z3.size());
  std::transform(tr.z3.begin(), tr.z3.end(), tr.out.begin(), [](double v) { return std::tanh(v); });
  return tr;
}

DenseLayer make_layer(int in, int out) {
  return {in, out, std::vector<double>(static_cast<std::size_t>(in) * out, 0.0),
          std::vector<double>(static_cast<std::size_t>(out), 0.0)};
}

void check_head(const PlanningHead& head) {
  for (int l = 0; l < 3; ++l) {
    const auto& layer = head.layers[l];
    if (layer.w.size() != static_cast<std::size_t>(layer.in_dim) * layer.out_dim ||
        layer.b.size() != static_cast<std::size_t>(layer.out_dim) ||
        (l > 0 && layer.in_dim != head.layers[l - 1].out_dim)) {
      throw Error(ErrorCode::ShapeMismatch, "planning head layer " + std::to_string(l) + " is malformed");
    }
  }
  if (head.layers[2].out_dim != kHeadOutputs) throw Error(ErrorCode::ShapeMismatch, "planning head must emit 32 values");
}

}  // namespace

NormalizedTrajectory normalize(const Trajectory& traj, const ScalingFactors& alpha) {
  validate_scaling(alpha);
  check_embodiment(traj.embodiment, alpha.embodiment);
  NormalizedTrajectory out{traj, false};
  for (auto& w : out.trajectory.waypoints) {
    for (int d = 0; d < kWaypointDims; ++d) {
      double& v = component(w, d);
      if (!dim_valid(traj, d)) {
        v = 0.0;
        continue;
      }
      v /= alpha.for_dim(d);
      if (v > 1.0 || v < -1.0) {
        v = std::clamp(v, -1.0, 1.0);
        out.clamped = true;
      }
    }
  }
  return out;
}

Trajectory denormalize(const Trajectory& normalized, const ScalingFactors& alpha) {
  validate_scaling(alpha);
  check_embodiment(normalized.embodiment, alpha.embodiment);
  Trajectory out = normalized;
  for (auto& w : out.waypoints) {
    for (int d = 0; d < kWaypointDims; ++d) {
      double& v = component(w, d);
      v = dim_valid(out, d) ? v * alpha.for_dim(d) : 0.0;
    }
  }
  return out;
}

double masked_mse(const Trajectory& pred, const Trajectory& gt) {
  check_embodiment(pred.embodiment, gt.embodiment);
  double sum = 0.0;
  for (int i = 0; i < kWaypointCount; ++i) {
    for (int d = 0; d < kWaypointDims; ++d) {
      if (!dim_valid(gt, d)) continue;
      const double r = component(pred.waypoints[i], d) - component(gt.waypoints[i], d);
      sum += r * r;
    }
  }
  return sum / (kWaypointCount * gt.valid_dims());
}

double combined_loss(double nav_loss, double qa_loss, double weight) { return weight * nav_loss + qa_loss; }

std::size_t PlanningHead::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.w.size() + l.b.size();
  return n;
}

double& PlanningHead::parameter(std::size_t index) {
  for (auto& l : layers) {
    if (index < l.w.size()) return l.w[index];
    index -= l.w.size();
    if (index < l.b.size()) return l.b[index];
    index -= l.b.size();
  }
  throw Error(ErrorCode::FieldOutOfRange, "parameter index out of range");
}

double PlanningHead::parameter(std::size_t index) const { return const_cast<PlanningHead&>(*this).parameter(index); }

PlanningHead zero_head(int input_dim, int hidden_dim) {
  if (input_dim <= 0 || hidden_dim <= 0) throw Error(ErrorCode::ShapeMismatch, "head dimensions must be positive");
  return {{make_layer(input_dim, hidden_dim), make_layer(hidden_dim, hidden_dim), make_layer(hidden_dim, kHeadOutputs)}};
}

PlanningHead init_head(int input_dim, int hidden_dim, std::uint64_t seed) {
  PlanningHead head = zero_head(input_dim, hidden_dim);
  DeterministicRng rng(seed);
  for (auto& l : head.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_dim));
    for (auto& v : l.w) v = rng.uniform(-bound, bound);
    for (auto& v : l.b) v = rng.uniform(-bound, bound);
  }
  return head;
}

std::array<double, kHeadOutputs> head_forward_normalized(const PlanningHead& head, std::span<const double> e) {
  check_head(head);
  const auto tr = trace_forward(head, e);
  std::array<double, kHeadOutputs> out{};
  std::copy(tr.out.begin(), tr.out.end(), out.begin());
  return out;
}

Trajectory head_forward(const PlanningHead& head, std::span<const double> e, const ScalingFactors& alpha) {
  validate_scaling(alpha);
  const auto o = head_forward_normalized(head, e);
  Trajectory t;
  t.embodiment = alpha.embodiment;
  for (int i = 0; i < kWaypointCount; ++i) {
    auto& w = t.waypoints[i];
    w.x = o[4 * i] * alpha.x;
    w.y = o[4 * i + 1] * alpha.y;
    w.z = t.z_valid() ? o[4 * i + 2] * *alpha.z : 0.0;
    w.theta = wrap_angle(o[4 * i + 3] * alpha.theta);
  }
  return t;
}

PlanningHead head_gradient(const PlanningHead& head, std::span<const double> e, const Trajectory& gt,
                           const ScalingFactors& alpha) {
  validate_scaling(alpha);
  check_embodiment(gt.embodiment, alpha.embodiment);
  check_head(head);
  const auto tr = trace_forward(head, e);

  // dL/dz3 through the masked mean, the alpha rescale and tanh.
  const double norm = 2.0 / (kWaypointCount * gt.valid_dims());
  std::vector<double> d3(kHeadOutputs, 0.0);
  for (int i = 0; i < kWaypointCount; ++i) {
    for (int d = 0; d < kWaypointDims; ++d) {
      if (!dim_valid(gt, d)) continue;
      const int j = 4 * i + d;
      const double a = alpha.for_dim(d);
      const double residual = tr.out[j] * a - component(gt.waypoints[i], d);
      d3[j] = norm * residual * a * (1.0 - tr.out[j] * tr.out[j]);
    }
  }

  PlanningHead grad = zero_head(head.input_dim(), head.layers[0].out_dim);
  const auto backprop_layer = [](const DenseLayer& layer, std::span<const double> delta, std::span<const double> input,
                                 DenseLayer& g, std::vector<double>* delta_in) {
    for (int o = 0; o < layer.out_dim; ++o) {
      g.b[o] = delta[o];
      double* grow = g.w.data() + static_cast<std::size_t>(o) * layer.in_dim;
      for (int i = 0; i < layer.in_dim; ++i) grow[i] = delta[o] * input[i];
    }
    if (delta_in) {
      delta_in->assign(static_cast<std::size_t>(layer.in_dim), 0.0);
      for (int o = 0; o < layer.out_dim; ++o) {
        const double* row = layer.w.data() + static_cast<std::size_t>(o) * layer.in_dim;
        for (int i = 0; i < layer.in_dim; ++i) (*delta_in)[i] += row[i] * delta[o];
      }
    }
  };

  std::vector<double> d2, d1;
  backprop_layer(head.layers[2], d3, tr.a2, grad.layers[2], &d2);
  for (std::size_t i = 0; i < d2.size(); ++i) d2[i] *= gelu_grad(tr.z2[i]);
  backprop_layer(head.layers[1], d2, tr.a1, grad.layers[1], &d1);
  for (std::size_t i = 0; i < d1.size(); ++i) d1[i] *= gelu_grad(tr.z1[i]);
  backprop_layer(head.layers[0], d1, e, grad.layers[0], nullptr);
  return grad;
}

std::vector<Pose2> accumulate_poses(std::span<const DiscreteAction> actions, double step, double turn_degrees) {
  const double turn = turn_degrees * std::numbers::pi / 180.0;
  std::vector<Pose2> poses;
  Pose2 pose;
  for (const auto a : actions) {
    switch (a) {
      case DiscreteAction::Stop: return poses;
      case DiscreteAction::Forward:
        pose.x += step * std::cos(pose.theta);
        pose.y += step * std::sin(pose.theta);
        break;
      case DiscreteAction::Left: pose.theta = wrap_angle(pose.theta + turn); break;
      case DiscreteAction::Right: pose.theta = wrap_angle(pose.theta - turn); break;
    }
    poses.push_back(pose);
  }
  return poses;
}

Trajectory discretize_to_trajectory(std::span<const DiscreteAction> actions, double step, double turn_degrees) {
  if (actions.empty()) throw Error(ErrorCode::EmptyActionList, "no actions to convert");
  const auto first = actions.subspan(0, std::min<std::size_t>(actions.size(), kWaypointCount));
  const auto poses = accumulate_poses(first, step, turn_degrees);
  Trajectory t;
  t.embodiment = EmbodimentKind::IndoorRobot;
  Pose2 last;
  for (int i = 0; i < kWaypointCount; ++i) {
    if (static_cast<std::size_t>(i) < poses.size()) last = poses[i];
    t.waypoints[i] = {last.x, last.y, 0.0, last.theta};
  }
  return t;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(ErrorCode::InsufficientData, "quantile of empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

ScalingFactors fit_scaling_factors(std::span<const Trajectory> trajectories, double percentile) {
  if (trajectories.size() < 100) {
    throw Error(ErrorCode::InsufficientData, "need at least 100 trajectories, got " + std::to_string(trajectories.size()));
  }
  const auto kind = trajectories.front().embodiment;
  std::array<std::vector<double>, kWaypointDims> mags;
  for (auto& m : mags) m.reserve(trajectories.size() * kWaypointCount);
  for (const auto& t : trajectories) {
    check_embodiment(t.embodiment, kind);
    for (const auto& w : t.waypoints) {
      for (int d = 0; d < kWaypointDims; ++d) mags[d].push_back(std::abs(component(w, d)));
    }
  }
  std::array<double, kWaypointDims> alpha{};
  for (int d = 0; d < kWaypointDims; ++d) {
    if (d == 2 && kind != EmbodimentKind::UAV) continue;
    std::sort(mags[d].begin(), mags[d].end());
    alpha[d] = quantile_sorted(mags[d], percentile);
    if (!(alpha[d] > 0.0)) {
      throw Error(ErrorCode::InsufficientData, "dimension " + std::to_string(d) + " has a zero percentile magnitude");
    }
  }
  ScalingFactors out{kind, alpha[0], alpha[1], std::nullopt, alpha[3]};
  if (kind == EmbodimentKind::UAV) out.z = alpha[2];
  return out;
}

std::vector<Trajectory> read_trajectories(std::istream& in) {
  using nlohmann::json;
  std::vector<Trajectory> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      Trajectory t;
      t.embodiment = parse_embodiment(j.at("embodiment").get<std::string>());
      const auto& wps = j.at("waypoints");
      if (!wps.is_array() || wps.size() != kWaypointCount) throw ParseError(line_no, "expected 8 waypoints");
      for (int i = 0; i < kWaypointCount; ++i) {
        const auto& w = wps.at(i);
        if (!w.is_array() || w.size() != kWaypointDims) throw ParseError(line_no, "waypoint must be [x, y, z, theta]");
        t.waypoints[i] = {w.at(0).get<double>(), w.at(1).get<double>(), t.z_valid() ? w.at(2).get<double>() : 0.0,
                          w.at(3).get<double>()};
      }
      out.push_back(t);
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

void write_trajectories(std::ostream& out, std::span<const Trajectory> trajectories) {
  using nlohmann::json;
  for (const auto& t : trajectories) {
    json wps = json::array();
    for (const auto& w : t.waypoints) wps.push_back({w.x, w.y, w.z, w.theta});
    out << json{{"embodiment", to_string(t.embodiment)}, {"waypoints", wps}}.dump() << '\n';
  }
}

}  // namespace navtoken::trajectory
