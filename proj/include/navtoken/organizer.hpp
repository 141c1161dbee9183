#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "navtoken/bats.hpp"
#include "navtoken/core.hpp"
#include "navtoken/tvi.hpp"

namespace navtoken::organizer {

inline constexpr int kFineTarget = 64;
inline constexpr int kCoarseTarget = 4;
inline constexpr std::string_view kLayoutVersion = "visual-text-action/1";

// Dense row-major rows x cols block of token vectors.
struct FeatureMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> values;

  FeatureMatrix() = default;
  FeatureMatrix(int rows, int cols);
  FeatureMatrix(int rows, int cols, std::vector<float> values);

  std::span<const float> row(int i) const;
  std::span<float> row(int i);
  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

// Channel-wise concatenation, a's channels first.
FeatureMatrix fuse_channels(const FeatureMatrix& a, const FeatureMatrix& b);

// Average-pools a 24x24 patch grid over non-overlapping blocks: 3x3 blocks for
// target 64, 12x12 blocks for target 4. Output rows follow block raster order.
FeatureMatrix grid_pool(const FeatureMatrix& grid, int target);
FeatureMatrix grid_pool(const PatchFeatureGrid& grid, int target);

enum class TokenRole { Indicator, VisualFine, VisualCoarse, Text, ActionSlot };

std::string_view to_string(TokenRole role) noexcept;

struct Provenance {
  std::optional<int> t;
  std::optional<int> camera;
  std::optional<int> group;       // pooled block index within the frame
  std::optional<int> text_index;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct TokenInfo {
  TokenRole role = TokenRole::Text;
  Provenance provenance;

  friend bool operator==(const TokenInfo&, const TokenInfo&) = default;
};

// Token vectors are stored contiguously; token i occupies
// values[i * channels, (i + 1) * channels).
class TokenSequence {
 public:
  TokenSequence(TaskMode mode, int channels);

  TaskMode mode() const noexcept { return mode_; }
  int channels() const noexcept { return channels_; }
  std::size_t total_count() const noexcept { return tokens_.size(); }
  const std::vector<TokenInfo>& tokens() const noexcept { return tokens_; }
  std::span<const float> vector(std::size_t i) const;
  std::span<const float> values() const noexcept { return values_; }

  void push(TokenRole role, Provenance provenance, std::span<const float> vec);
  void reserve(std::size_t tokens);

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;

 private:
  TaskMode mode_;
  int channels_;
  std::vector<TokenInfo> tokens_;
  std::vector<float> values_;
};

struct RoleCounts {
  std::size_t indicator = 0;
  std::size_t visual_fine = 0;
  std::size_t visual_coarse = 0;
  std::size_t text = 0;
  std::size_t action_slot = 0;

  std::size_t total() const noexcept { return indicator + visual_fine + visual_coarse + text + action_slot; }
  std::size_t visual_region() const noexcept { return indicator + visual_fine + visual_coarse; }
  friend bool operator==(const RoleCounts&, const RoleCounts&) = default;
};

RoleCounts count_tokens(const TokenSequence& seq);

// Supplies pooled visual tokens for (timestep, camera). Implementations throw
// MissingFeature for unknown frames.
class FeatureSource {
 public:
  virtual ~FeatureSource() = default;
  virtual FeatureMatrix coarse(int t, int camera) const = 0;
  virtual FeatureMatrix fine(int t, int camera) const = 0;
};

class InMemoryFeatures : public FeatureSource {
 public:
  void add_coarse(int t, int camera, FeatureMatrix tokens);
  void add_fine(int t, int camera, FeatureMatrix tokens);
  // Pools a raw grid into both resolutions.
  void add_grid(const PatchFeatureGrid& grid);

  FeatureMatrix coarse(int t, int camera) const override;
  FeatureMatrix fine(int t, int camera) const override;

 private:
  std::map<std::pair<int, int>, FeatureMatrix> coarse_;
  std::map<std::pair<int, int>, FeatureMatrix> fine_;
};

// Memoizes the projected time/angle terms so indicator construction is a pair
// of vector adds. Produces vectors identical to tvi::tvi_token. Not
// thread-safe; use one builder per worker.
class IndicatorBuilder {
 public:
  explicit IndicatorBuilder(const tvi::TviParams& params);

  const tvi::TviParams& params() const noexcept { return params_; }
  std::vector<float> navigation(int t, double azimuth);
  std::vector<float> video(int t);
  std::vector<float> image() const { return params_.base; }

 private:
  const std::vector<float>& time_term(int t);
  const std::vector<float>& angle_term(double azimuth);

  const tvi::TviParams& params_;
  std::unordered_map<int, std::vector<float>> time_terms_;
  std::map<double, std::vector<float>> angle_terms_;
};

// Navigation layout: for each kept historical t (ascending) and each camera in
// rig order, [Indicator(t, phi)] + 4 coarse tokens; then per camera
// [Indicator(T, phi)] + 64 fine tokens; then the text tokens; then one
// action slot. Visual region size is (5H + 65) N.
TokenSequence assemble_navigation(const bats::SamplePlan& plan, const CameraRig& rig, const FeatureSource& features,
                                  const FeatureMatrix& text, IndicatorBuilder& indicators);
TokenSequence assemble_navigation(const bats::SamplePlan& plan, const CameraRig& rig, const FeatureSource& features,
                                  const FeatureMatrix& text, const tvi::TviParams& params);

struct VideoFrame {
  int t = 0;
  FeatureMatrix coarse;  // 4 x C
};

// Per frame (ascending t): [Indicator(t)] + 4 coarse tokens; then text.
TokenSequence assemble_video_qa(std::span<const VideoFrame> frames, const FeatureMatrix& text,
                                const tvi::TviParams& params);

// Per image: [Indicator(base)] + 64 fine tokens; then text.
TokenSequence assemble_image_qa(std::span<const FeatureMatrix> images, const FeatureMatrix& text,
                                const tvi::TviParams& params);

// Layout description for inspection: roles, provenance, per-role counts and
// layout_version; token vectors only when requested.
std::string layout_json(const TokenSequence& seq, bool include_vectors = false, int indent = 2);

}  // namespace navtoken::organizer
