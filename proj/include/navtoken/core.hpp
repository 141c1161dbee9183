#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "navtoken/error.hpp"

namespace navtoken {

inline constexpr int kPatchCount = 576;
inline constexpr int kPatchGridSide = 24;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum class TaskMode { Navigation, VideoQA, ImageQA };

// Only a UAV has a meaningful z dimension.
enum class EmbodimentKind { IndoorRobot, UAV, Car };

std::string_view to_string(TaskMode mode) noexcept;
std::string_view to_string(EmbodimentKind kind) noexcept;
EmbodimentKind parse_embodiment(std::string_view name);

// Azimuth is measured from straight ahead, counterclockwise seen from above.
// hfov and height are carried as metadata; the token math never reads them.
struct CameraSpec {
  double azimuth = 0.0;  // [0, 2pi)
  double hfov = std::numbers::pi / 2.0;
  double height = 1.0;

  friend bool operator==(const CameraSpec&, const CameraSpec&) = default;
};

struct CameraRig {
  std::vector<CameraSpec> cameras;

  std::size_t size() const noexcept { return cameras.size(); }
  friend bool operator==(const CameraRig&, const CameraRig&) = default;
};

// Returns the rig sorted by ascending azimuth (front camera first). Throws
// ValidationError listing every violated invariant.
CameraRig validate_rig(const CameraRig& rig);

// Evenly spaced cameras starting at azimuth 0; n = 4 gives the default
// four-view rig {0, pi/2, pi, 3pi/2}.
CameraRig make_ring_rig(int n);

// Encoder output for one camera at one timestep: 576 patches (24x24, raster
// order) by `channels` values.
class PatchFeatureGrid {
 public:
  PatchFeatureGrid(int timestep, int camera, int channels, std::vector<float> values);

  int timestep() const noexcept { return timestep_; }
  int camera() const noexcept { return camera_; }
  int channels() const noexcept { return channels_; }
  std::span<const float> values() const noexcept { return values_; }
  std::span<const float> patch(int index) const;

 private:
  int timestep_;
  int camera_;
  int channels_;
  std::vector<float> values_;
};

// Raw little-endian f32 file holding 576 x C values, no header.
PatchFeatureGrid load_grid_file(const std::filesystem::path& path, int timestep, int camera);
void save_grid_file(const std::filesystem::path& path, const PatchFeatureGrid& grid);

struct FrameRef {
  int camera = 0;
  std::string data_ref;

  friend bool operator==(const FrameRef&, const FrameRef&) = default;
};

struct EpisodeStep {
  int t = 0;
  std::vector<FrameRef> frames;  // one per camera, sorted by camera index
  int text_len = 0;

  friend bool operator==(const EpisodeStep&, const EpisodeStep&) = default;
};

struct EpisodeStream {
  std::string episode_id;
  CameraRig rig;
  std::vector<EpisodeStep> steps;

  std::size_t frame_count() const noexcept;
  int instruction_tokens() const noexcept { return steps.empty() ? 0 : steps.front().text_len; }
  friend bool operator==(const EpisodeStream&, const EpisodeStream&) = default;
};

// Reads the JSONL episode format documented in docs/formats.md. An optional
// header line ({"episode": ..., "rig": [...]}) overrides `default_rig` and
// `default_id`.
EpisodeStream ingest_episode(std::istream& in, const CameraRig& default_rig = make_ring_rig(4),
                             std::string default_id = "episode");
EpisodeStream ingest_episode_file(const std::filesystem::path& path,
                                  const CameraRig& default_rig = make_ring_rig(4));

// Writes a header line followed by one line per step.
void serialize_episode(std::ostream& out, const EpisodeStream& stream);

}  // namespace navtoken
