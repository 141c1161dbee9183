#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "navtoken/core.hpp"

namespace navtoken::trajectory {

inline constexpr int kWaypointCount = 8;
inline constexpr int kWaypointDims = 4;  // x, y, z, theta
inline constexpr int kHeadOutputs = kWaypointCount * kWaypointDims;
inline constexpr double kDefaultLossWeight = 10.0;
inline constexpr double kAtomicStep = 0.125;       // meters
inline constexpr double kAtomicTurnDegrees = 15.0;

// Wraps to (-pi, pi].
double wrap_angle(double theta);

struct Waypoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double theta = 0.0;

  friend bool operator==(const Waypoint&, const Waypoint&) = default;
};

// Eight egocentric waypoints expressed in the frame of the current pose. z is
// stored as 0 and ignored for embodiments other than UAV.
struct Trajectory {
  EmbodimentKind embodiment = EmbodimentKind::IndoorRobot;
  std::array<Waypoint, kWaypointCount> waypoints{};

  bool z_valid() const noexcept { return embodiment == EmbodimentKind::UAV; }
  int valid_dims() const noexcept { return z_valid() ? 4 : 3; }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct ScalingFactors {
  EmbodimentKind embodiment = EmbodimentKind::IndoorRobot;
  double x = 1.0;
  double y = 1.0;
  std::optional<double> z;  // UAV only
  double theta = 1.0;

  // Reference per-embodiment factors (99th-percentile magnitudes).
  static ScalingFactors reference(EmbodimentKind kind);
  double for_dim(int dim) const;  // 0..3; 0 for an absent z
  friend bool operator==(const ScalingFactors&, const ScalingFactors&) = default;
};

void validate_scaling(const ScalingFactors& alpha);

struct NormalizedTrajectory {
  Trajectory trajectory;
  bool clamped = false;  // some component fell outside [-1, 1] and was clamped
};

NormalizedTrajectory normalize(const Trajectory& traj, const ScalingFactors& alpha);
Trajectory denormalize(const Trajectory& normalized, const ScalingFactors& alpha);

// Mean squared error over the embodiment's valid dimensions, averaged over
// waypoints and dimensions.
double masked_mse(const Trajectory& pred, const Trajectory& gt);

double combined_loss(double nav_loss, double qa_loss, double weight = kDefaultLossWeight);

struct DenseLayer {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Three-layer perceptron C -> hidden -> hidden -> 32. GELU on the hidden
// layers, tanh on the output so every normalized component is in [-1, 1].
struct PlanningHead {
  std::array<DenseLayer, 3> layers;

  int input_dim() const noexcept { return layers[0].in_dim; }
  std::size_t parameter_count() const noexcept;
  // Flat views over all weights then biases, layer by layer.
  double& parameter(std::size_t index);
  double parameter(std::size_t index) const;
  friend bool operator==(const PlanningHead&, const PlanningHead&) = default;
};

PlanningHead init_head(int input_dim, int hidden_dim, std::uint64_t seed);
PlanningHead zero_head(int input_dim, int hidden_dim);

std::array<double, kHeadOutputs> head_forward_normalized(const PlanningHead& head, std::span<const double> e);

// Rescales the bounded outputs by alpha. Yaw is wrapped into (-pi, pi].
Trajectory head_forward(const PlanningHead& head, std::span<const double> e, const ScalingFactors& alpha);

// Analytic gradient of masked_mse(head_forward(head, e, alpha), gt) with
// respect to every head parameter, laid out like PlanningHead. Assumes
// |alpha.theta| <= pi so the yaw wrap is inactive.
PlanningHead head_gradient(const PlanningHead& head, std::span<const double> e, const Trajectory& gt,
                           const ScalingFactors& alpha);

enum class DiscreteAction { Forward, Left, Right, Stop };

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

// Folds atomic actions through SE(2), one pose per Forward/Left/Right, stopping
// at the first Stop. Starts at the origin facing +x; Left turns counterclockwise.
std::vector<Pose2> accumulate_poses(std::span<const DiscreteAction> actions, double step = kAtomicStep,
                                    double turn_degrees = kAtomicTurnDegrees);

// First eight accumulated poses as an indoor trajectory, padded with the
// terminal pose. Throws EmptyActionList.
Trajectory discretize_to_trajectory(std::span<const DiscreteAction> actions, double step = kAtomicStep,
                                    double turn_degrees = kAtomicTurnDegrees);

// Linear-interpolated quantile of sorted data (q in [0, 1]).
double quantile_sorted(std::span<const double> sorted, double q);

// Per-dimension 99th percentile of |value| over every waypoint. Needs at least
// 100 trajectories, all of one embodiment.
ScalingFactors fit_scaling_factors(std::span<const Trajectory> trajectories, double percentile = 0.99);

// JSONL: {"embodiment": "indoor|uav|car", "waypoints": [[x, y, z, theta] x 8]}
std::vector<Trajectory> read_trajectories(std::istream& in);
void write_trajectories(std::ostream& out, std::span<const Trajectory> trajectories);

}  // namespace navtoken::trajectory
