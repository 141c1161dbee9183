#include "navtoken/organizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "json.hpp"

namespace navtoken::organizer {

FeatureMatrix::FeatureMatrix(int rows_, int cols_)
    : rows(rows_), cols(cols_), values(static_cast<std::size_t>(rows_) * cols_, 0.0f) {}

FeatureMatrix::FeatureMatrix(int rows_, int cols_, std::vector<float> values_)
    : rows(rows_), cols(cols_), values(std::move(values_)) {
  if (rows < 0 || cols < 0 || values.size() != static_cast<std::size_t>(rows) * cols) {
    throw Error(ErrorCode::ShapeMismatch, "matrix values do not match " + std::to_string(rows) + " x " +
                                              std::to_string(cols));
  }
}

std::span<const float> FeatureMatrix::row(int i) const {
  return std::span<const float>(values).subspan(static_cast<std::size_t>(i) * cols, cols);
}

std::span<float> FeatureMatrix::row(int i) {
  return std::span<float>(values).subspan(static_cast<std::size_t>(i) * cols, cols);
}

FeatureMatrix fuse_channels(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.rows != b.rows) {
    throw Error(ErrorCode::PatchCountMismatch, std::to_string(a.rows) + " vs " + std::to_string(b.rows) + " patches");
  }
  FeatureMatrix out(a.rows, a.cols + b.cols);
  for (int r = 0; r < a.rows; ++r) {
    auto dst = out.row(r);
    const auto ra = a.row(r);
    const auto rb = b.row(r);
    std::copy(ra.begin(), ra.end(), dst.begin());
    std::copy(rb.begin(), rb.end(), dst.begin() + a.cols);
  }
  return out;
}

FeatureMatrix grid_pool(const FeatureMatrix& grid, int target) {
  if (grid.rows != kPatchCount) {
    throw Error(ErrorCode::BadPatchCount, "expected 576 patches, got " + std::to_string(grid.rows));
  }
  int block;
  if (target == kFineTarget) {
    block = 3;
  } else if (target == kCoarseTarget) {
    block = 12;
  } else {
    throw Error(ErrorCode::BadTarget, "pool target must be 64 or 4, got " + std::to_string(target));
  }
  const int blocks_per_side = kPatchGridSide / block;
  const double inv_area = 1.0 / (block * block);
  FeatureMatrix out(target, grid.cols);
  std::vector<double> acc(static_cast<std::size_t>(grid.cols));
  for (int by = 0; by < blocks_per_side; ++by) {
    for (int bx = 0; bx < blocks_per_side; ++bx) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int y = by * block; y < (by + 1) * block; ++y) {
        for (int x = bx * block; x < (bx + 1) * block; ++x) {
          const auto src = grid.row(y * kPatchGridSide + x);
          for (int c = 0; c < grid.cols; ++c) acc[c] += src[c];
        }
      }
      auto dst = out.row(by * blocks_per_side + bx);
      for (int c = 0; c < grid.cols; ++c) dst[c] = static_cast<float>(acc[c] * inv_area);
    }
  }
  return out;
}

FeatureMatrix grid_pool(const PatchFeatureGrid& grid, int target) {
  const auto v = grid.values();
  return grid_pool(FeatureMatrix(kPatchCount, grid.channels(), std::vector<float>(v.begin(), v.end())), target);
}

std::string_view to_string(TokenRole role) noexcept {
  switch (role) {
    case TokenRole::Indicator: return "indicator";
    case TokenRole::VisualFine: return "visual_fine";
    case TokenRole::VisualCoarse: return "visual_coarse";
    case TokenRole::Text: return "text";
    case TokenRole::ActionSlot: return "action_slot";
  }
  return "unknown";
}

TokenSequence::TokenSequence(TaskMode mode, int channels) : mode_(mode), channels_(channels) {
  if (channels <= 0) throw Error(ErrorCode::BadDimension, "token width must be positive");
}

std::span<const float> TokenSequence::vector(std::size_t i) const {
  return std::span<const float>(values_).subspan(i * channels_, channels_);
}

void TokenSequence::push(TokenRole role, Provenance provenance, std::span<const float> vec) {
  if (vec.size() != static_cast<std::size_t>(channels_)) {
    throw Error(ErrorCode::ShapeMismatch, std::string(to_string(role)) + " token has width " +
                                              std::to_string(vec.size()) + ", sequence width is " +
                                              std::to_string(channels_));
  }
  tokens_.push_back({role, std::move(provenance)});
  values_.insert(values_.end(), vec.begin(), vec.end());
}

void TokenSequence::reserve(std::size_t tokens) {
  tokens_.reserve(tokens);
  values_.reserve(tokens * channels_);
}

RoleCounts count_tokens(const TokenSequence& seq) {
  RoleCounts c;
  for (const auto& tok : seq.tokens()) {
    switch (tok.role) {
      case TokenRole::Indicator: ++c.indicator; break;
      case TokenRole::VisualFine: ++c.visual_fine; break;
      case TokenRole::VisualCoarse: ++c.visual_coarse; break;
      case TokenRole::Text: ++c.text; break;
      case TokenRole::ActionSlot: ++c.action_slot; break;
    }
  }
  return c;
}

void InMemoryFeatures::add_coarse(int t, int camera, FeatureMatrix tokens) {
  coarse_[{t, camera}] = std::move(tokens);
}

void InMemoryFeatures::add_fine(int t, int camera, FeatureMatrix tokens) {
  fine_[{t, camera}] = std::move(tokens);
}

void InMemoryFeatures::add_grid(const PatchFeatureGrid& grid) {
  add_coarse(grid.timestep(), grid.camera(), grid_pool(grid, kCoarseTarget));
  add_fine(grid.timestep(), grid.camera(), grid_pool(grid, kFineTarget));
}

namespace {

FeatureMatrix lookup(const std::map<std::pair<int, int>, FeatureMatrix>& m, int t, int camera, const char* what) {
  const auto it = m.find({t, camera});
  if (it == m.end()) {
    throw Error(ErrorCode::MissingFeature, std::string("no ") + what + " tokens for t=" + std::to_string(t) +
                                               " camera=" + std::to_string(camera));
  }
  return it->second;
}

void check_block(const FeatureMatrix& m, int rows, int channels, const char* what) {
  if (m.rows != rows || m.cols != channels) {
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + " block is " + std::to_string(m.rows) + " x " +
                                              std::to_string(m.cols) + ", expected " + std::to_string(rows) +
                                              " x " + std::to_string(channels));
  }
}

void push_text(TokenSequence& seq, const FeatureMatrix& text) {
  if (text.rows > 0 && text.cols != seq.channels()) {
    throw Error(ErrorCode::ShapeMismatch, "text tokens have width " + std::to_string(text.cols));
  }
  for (int i = 0; i < text.rows; ++i) {
    Provenance p;
    p.text_index = i;
    seq.push(TokenRole::Text, p, text.row(i));
  }
}

void push_visual(TokenSequence& seq, TokenRole role, const FeatureMatrix& block, std::optional<int> t,
                 std::optional<int> camera) {
  for (int g = 0; g < block.rows; ++g) seq.push(role, {t, camera, g, std::nullopt}, block.row(g));
}

void check_plan(const bats::SamplePlan& plan) {
  if (plan.kept.empty() || plan.kept.back() != plan.latest) {
    throw Error(ErrorCode::PlanMismatch, "plan must end with its latest timestep");
  }
  if (plan.kept.front() < 1) throw Error(ErrorCode::PlanMismatch, "plan contains timestep < 1");
  for (std::size_t i = 1; i < plan.kept.size(); ++i) {
    if (plan.kept[i] <= plan.kept[i - 1]) throw Error(ErrorCode::PlanMismatch, "plan timesteps not strictly ascending");
  }
}

}  // namespace

FeatureMatrix InMemoryFeatures::coarse(int t, int camera) const { return lookup(coarse_, t, camera, "coarse"); }
FeatureMatrix InMemoryFeatures::fine(int t, int camera) const { return lookup(fine_, t, camera, "fine"); }

IndicatorBuilder::IndicatorBuilder(const tvi::TviParams& params) : params_(params) { tvi::validate_params(params_); }

const std::vector<float>& IndicatorBuilder::time_term(int t) {
  auto it = time_terms_.find(t);
  if (it == time_terms_.end()) it = time_terms_.emplace(t, tvi::time_term(params_, t)).first;
  return it->second;
}

const std::vector<float>& IndicatorBuilder::angle_term(double azimuth) {
  auto it = angle_terms_.find(azimuth);
  if (it == angle_terms_.end()) it = angle_terms_.emplace(azimuth, tvi::angle_term(params_, azimuth)).first;
  return it->second;
}

std::vector<float> IndicatorBuilder::navigation(int t, double azimuth) {
  const auto& time = time_term(t);
  const auto& angle = angle_term(azimuth);
  return tvi::compose_indicator(params_, time, angle);
}

std::vector<float> IndicatorBuilder::video(int t) { return tvi::compose_indicator(params_, time_term(t), {}); }

TokenSequence assemble_navigation(const bats::SamplePlan& plan, const CameraRig& rig, const FeatureSource& features,
                                  const FeatureMatrix& text, IndicatorBuilder& indicators) {
  check_plan(plan);
  if (rig.cameras.empty()) throw Error(ErrorCode::EmptyRig, "navigation needs at least one camera");
  const int channels = indicators.params().channels;
  const auto n = static_cast<int>(rig.size());
  const auto history = static_cast<int>(plan.kept.size()) - 1;

  TokenSequence seq(TaskMode::Navigation, channels);
  seq.reserve(static_cast<std::size_t>(bats::visual_token_count(history, n)) + text.rows + 1);

  for (int i = 0; i < history; ++i) {
    const int t = plan.kept[i];
    for (int cam = 0; cam < n; ++cam) {
      const auto block = features.coarse(t, cam);
      check_block(block, kCoarseTarget, channels, "coarse");
      seq.push(TokenRole::Indicator, {t, cam, std::nullopt, std::nullopt},
               indicators.navigation(t, rig.cameras[cam].azimuth));
      push_visual(seq, TokenRole::VisualCoarse, block, t, cam);
    }
  }
  for (int cam = 0; cam < n; ++cam) {
    const auto block = features.fine(plan.latest, cam);
    check_block(block, kFineTarget, channels, "fine");
    seq.push(TokenRole::Indicator, {plan.latest, cam, std::nullopt, std::nullopt},
             indicators.navigation(plan.latest, rig.cameras[cam].azimuth));
    push_visual(seq, TokenRole::VisualFine, block, plan.latest, cam);
  }
  push_text(seq, text);
  const std::vector<float> slot(static_cast<std::size_t>(channels), 0.0f);
  seq.push(TokenRole::ActionSlot, {}, slot);
  return seq;
}

TokenSequence assemble_navigation(const bats::SamplePlan& plan, const CameraRig& rig, const FeatureSource& features,
                                  const FeatureMatrix& text, const tvi::TviParams& params) {
  IndicatorBuilder indicators(params);
  return assemble_navigation(plan, rig, features, text, indicators);
}

TokenSequence assemble_video_qa(std::span<const VideoFrame> frames, const FeatureMatrix& text,
                                const tvi::TviParams& params) {
  IndicatorBuilder indicators(params);
  std::vector<const VideoFrame*> order;
  for (const auto& f : frames) order.push_back(&f);
  std::stable_sort(order.begin(), order.end(), [](const VideoFrame* a, const VideoFrame* b) { return a->t < b->t; });

  TokenSequence seq(TaskMode::VideoQA, params.channels);
  for (const auto* f : order) {
    if (f->coarse.rows == 0) {
      throw Error(ErrorCode::MissingFeature, "video frame t=" + std::to_string(f->t) + " has no coarse tokens");
    }
    check_block(f->coarse, kCoarseTarget, params.channels, "coarse");
    seq.push(TokenRole::Indicator, {f->t, std::nullopt, std::nullopt, std::nullopt}, indicators.video(f->t));
    push_visual(seq, TokenRole::VisualCoarse, f->coarse, f->t, std::nullopt);
  }
  push_text(seq, text);
  return seq;
}

TokenSequence assemble_image_qa(std::span<const FeatureMatrix> images, const FeatureMatrix& text,
                                const tvi::TviParams& params) {
  tvi::validate_params(params);
  TokenSequence seq(TaskMode::ImageQA, params.channels);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].rows == 0) throw Error(ErrorCode::MissingFeature, "image " + std::to_string(i) + " has no tokens");
    check_block(images[i], kFineTarget, params.channels, "fine");
    seq.push(TokenRole::Indicator, {}, params.base);
    push_visual(seq, TokenRole::VisualFine, images[i], std::nullopt, std::nullopt);
  }
  push_text(seq, text);
  return seq;
}

std::string layout_json(const TokenSequence& seq, bool include_vectors, int indent) {
  using nlohmann::json;
  const auto counts = count_tokens(seq);
  json j;
  j["layout_version"] = kLayoutVersion;
  j["mode"] = to_string(seq.mode());
  j["channels"] = seq.channels();
  j["total_count"] = seq.total_count();
  j["counts"] = {{"indicator", counts.indicator},   {"visual_fine", counts.visual_fine},
                 {"visual_coarse", counts.visual_coarse}, {"text", counts.text},
                 {"action_slot", counts.action_slot}, {"visual_region", counts.visual_region()}};
  json tokens = json::array();
  for (std::size_t i = 0; i < seq.total_count(); ++i) {
    const auto& info = seq.tokens()[i];
    json tok = {{"role", to_string(info.role)}};
    if (info.provenance.t) tok["t"] = *info.provenance.t;
    if (info.provenance.camera) tok["camera"] = *info.provenance.camera;
    if (info.provenance.group) tok["group"] = *info.provenance.group;
    if (info.provenance.text_index) tok["text_index"] = *info.provenance.text_index;
    if (include_vectors) {
      const auto v = seq.vector(i);
      tok["vector"] = std::vector<float>(v.begin(), v.end());
    }
    tokens.push_back(std::move(tok));
  }
  j["tokens"] = std::move(tokens);
  return j.dump(indent);
}

}  // namespace navtoken::organizer
