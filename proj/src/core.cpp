#include "navtoken/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace navtoken {

using nlohmann::json;

std::string_view to_string(TaskMode mode) noexcept {
  switch (mode) {
    case TaskMode::Navigation: return "navigation";
    case TaskMode::VideoQA: return "video_qa";
    case TaskMode::ImageQA: return "image_qa";
  }
  return "unknown";
}

std::string_view to_string(EmbodimentKind kind) noexcept {
  switch (kind) {
    case EmbodimentKind::IndoorRobot: return "indoor";
    case EmbodimentKind::UAV: return "uav";
    case EmbodimentKind::Car: return "car";
  }
  return "unknown";
}

EmbodimentKind parse_embodiment(std::string_view name) {
  if (name == "indoor") return EmbodimentKind::IndoorRobot;
  if (name == "uav") return EmbodimentKind::UAV;
  if (name == "car") return EmbodimentKind::Car;
  throw Error(ErrorCode::FieldOutOfRange, "unknown embodiment '" + std::string(name) + "'");
}

namespace {

constexpr double kAzimuthTolerance = 1e-9;

double circular_gap(double a, double b) {
  double d = std::fmod(std::abs(a - b), kTwoPi);
  return std::min(d, kTwoPi - d);
}

}  // namespace

CameraRig validate_rig(const CameraRig& rig) {
  std::vector<ValidationError::Violation> violations;
  if (rig.cameras.empty()) {
    violations.push_back({ErrorCode::EmptyRig, "rig has no cameras"});
  }
  for (std::size_t i = 0; i < rig.cameras.size(); ++i) {
    const auto& cam = rig.cameras[i];
    const auto where = "camera " + std::to_string(i);
    if (!std::isfinite(cam.azimuth) || cam.azimuth < 0.0 || cam.azimuth >= kTwoPi) {
      violations.push_back({ErrorCode::FieldOutOfRange, where + ": azimuth outside [0, 2pi)"});
    }
    if (!std::isfinite(cam.hfov) || cam.hfov <= 0.0 || cam.hfov > std::numbers::pi) {
      violations.push_back({ErrorCode::FieldOutOfRange, where + ": hfov outside (0, pi]"});
    }
    if (!std::isfinite(cam.height) || cam.height <= 0.0) {
      violations.push_back({ErrorCode::FieldOutOfRange, where + ": height must be positive"});
    }
  }
  for (std::size_t i = 0; i < rig.cameras.size(); ++i) {
    for (std::size_t j = i + 1; j < rig.cameras.size(); ++j) {
      if (circular_gap(rig.cameras[i].azimuth, rig.cameras[j].azimuth) <= kAzimuthTolerance) {
        violations.push_back({ErrorCode::DuplicateAzimuth,
                              "cameras " + std::to_string(i) + " and " + std::to_string(j)});
      }
    }
  }
  if (!violations.empty()) throw ValidationError(std::move(violations));

  CameraRig out = rig;
  std::stable_sort(out.cameras.begin(), out.cameras.end(),
                   [](const CameraSpec& a, const CameraSpec& b) { return a.azimuth < b.azimuth; });
  return out;
}

CameraRig make_ring_rig(int n) {
  if (n < 1) throw Error(ErrorCode::EmptyRig, "ring rig needs at least one camera");
  CameraRig rig;
  for (int i = 0; i < n; ++i) {
    rig.cameras.push_back({kTwoPi * i / n, std::numbers::pi / 2.0, 1.0});
  }
  return rig;
}

PatchFeatureGrid::PatchFeatureGrid(int timestep, int camera, int channels, std::vector<float> values)
    : timestep_(timestep), camera_(camera), channels_(channels), values_(std::move(values)) {
  if (timestep_ < 0) throw Error(ErrorCode::FieldOutOfRange, "negative timestep");
  if (channels_ <= 0) throw Error(ErrorCode::FieldOutOfRange, "channel count must be positive");
  if (values_.size() != static_cast<std::size_t>(kPatchCount) * channels_) {
    throw Error(ErrorCode::BadPatchCount, "grid must hold 576 x " + std::to_string(channels_) +
                                              " values, got " + std::to_string(values_.size()));
  }
  for (float v : values_) {
    if (!std::isfinite(v)) throw Error(ErrorCode::FieldOutOfRange, "non-finite feature value");
  }
}

std::span<const float> PatchFeatureGrid::patch(int index) const {
  if (index < 0 || index >= kPatchCount) throw Error(ErrorCode::FieldOutOfRange, "patch index");
  return std::span<const float>(values_).subspan(static_cast<std::size_t>(index) * channels_, channels_);
}

PatchFeatureGrid load_grid_file(const std::filesystem::path& path, int timestep, int camera) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  const std::size_t per_channel = static_cast<std::size_t>(kPatchCount) * sizeof(float);
  if (bytes == 0 || bytes % per_channel != 0) {
    throw Error(ErrorCode::BadPatchCount, path.string() + " is not a 576 x C f32 grid");
  }
  std::vector<float> values(bytes / sizeof(float));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw Error(ErrorCode::IoError, "short read on " + path.string());
  const int channels = static_cast<int>(bytes / per_channel);
  return PatchFeatureGrid(timestep, camera, channels, std::move(values));
}

void save_grid_file(const std::filesystem::path& path, const PatchFeatureGrid& grid) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  const auto values = grid.values();
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size_bytes()));
  if (!out) throw Error(ErrorCode::IoError, "short write on " + path.string());
}

std::size_t EpisodeStream::frame_count() const noexcept {
  std::size_t n = 0;
  for (const auto& s : steps) n += s.frames.size();
  return n;
}

namespace {

CameraRig rig_from_json(const json& j, std::size_t line) {
  if (!j.is_array()) throw ParseError(line, "\"rig\" must be an array");
  CameraRig rig;
  for (const auto& c : j) {
    CameraSpec spec;
    spec.azimuth = c.at("azimuth").get<double>();
    spec.hfov = c.value("hfov", spec.hfov);
    spec.height = c.value("height", spec.height);
    rig.cameras.push_back(spec);
  }
  return validate_rig(rig);
}

EpisodeStep step_from_json(const json& j, std::size_t line) {
  EpisodeStep step;
  if (!j.contains("t") || !j.at("t").is_number_integer()) throw ParseError(line, "missing integer \"t\"");
  if (!j.contains("frames") || !j.at("frames").is_array()) throw ParseError(line, "missing \"frames\" array");
  step.t = j.at("t").get<int>();
  step.text_len = j.value("text_len", 0);
  if (step.text_len < 0) throw ParseError(line, "negative text_len");
  for (const auto& f : j.at("frames")) {
    if (!f.contains("cam") || !f.at("cam").is_number_integer()) throw ParseError(line, "frame missing \"cam\"");
    if (!f.contains("data_ref") || !f.at("data_ref").is_string()) {
      throw ParseError(line, "frame missing \"data_ref\"");
    }
    step.frames.push_back({f.at("cam").get<int>(), f.at("data_ref").get<std::string>()});
  }
  std::sort(step.frames.begin(), step.frames.end(),
            [](const FrameRef& a, const FrameRef& b) { return a.camera < b.camera; });
  return step;
}

void check_step_against_rig(const EpisodeStep& step, const CameraRig& rig, std::size_t line) {
  const auto n = static_cast<int>(rig.size());
  bool complete = step.frames.size() == rig.size();
  for (std::size_t i = 0; complete && i < step.frames.size(); ++i) {
    complete = step.frames[i].camera == static_cast<int>(i);
  }
  if (!complete) {
    throw Error(ErrorCode::RigMismatch, "line " + std::to_string(line) + ": step t=" +
                                            std::to_string(step.t) + " does not carry exactly one frame for each of " +
                                            std::to_string(n) + " cameras");
  }
}

}  // namespace

EpisodeStream ingest_episode(std::istream& in, const CameraRig& default_rig, std::string default_id) {
  EpisodeStream stream;
  stream.episode_id = std::move(default_id);
  stream.rig = validate_rig(default_rig);

  std::string text;
  std::size_t line_no = 0;
  bool seen_any = false;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    }
    if (!j.is_object()) throw ParseError(line_no, "record is not an object");

    try {
      if (j.contains("episode")) {
        if (seen_any) throw ParseError(line_no, "header must be the first record");
        stream.episode_id = j.at("episode").get<std::string>();
        if (j.contains("rig")) stream.rig = rig_from_json(j.at("rig"), line_no);
        seen_any = true;
        continue;
      }
      auto step = step_from_json(j, line_no);
      check_step_against_rig(step, stream.rig, line_no);
      const int expected_min = stream.steps.empty() ? 1 : stream.steps.back().t + 1;
      if (stream.steps.empty() ? step.t != 1 : step.t < expected_min) {
        throw Error(ErrorCode::NonMonotonicTimestep,
                    "line " + std::to_string(line_no) + ": t=" + std::to_string(step.t) +
                        (stream.steps.empty() ? " (episodes start at t=1)" : " does not increase"));
      }
      stream.steps.push_back(std::move(step));
      seen_any = true;
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  if (stream.steps.empty()) throw ParseError(0, "episode contains no steps");
  return stream;
}

EpisodeStream ingest_episode_file(const std::filesystem::path& path, const CameraRig& default_rig) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return ingest_episode(in, default_rig, path.stem().string());
}

void serialize_episode(std::ostream& out, const EpisodeStream& stream) {
  json header = {{"episode", stream.episode_id}, {"rig", json::array()}};
  for (const auto& c : stream.rig.cameras) {
    header["rig"].push_back({{"azimuth", c.azimuth}, {"hfov", c.hfov}, {"height", c.height}});
  }
  out << header.dump() << '\n';
  for (const auto& step : stream.steps) {
    json j = {{"t", step.t}, {"frames", json::array()}, {"text_len", step.text_len}};
    for (const auto& f : step.frames) j["frames"].push_back({{"cam", f.camera}, {"data_ref", f.data_ref}});
    out << j.dump() << '\n';
  }
}

}  // namespace navtoken
