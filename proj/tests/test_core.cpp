#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>
#include <sstream>

#include "navtoken/core.hpp"

using namespace navtoken;

namespace {

constexpr double kPi = std::numbers::pi;

CameraRig rig_of(std::initializer_list<double> azimuths) {
  CameraRig rig;
  for (double a : azimuths) rig.cameras.push_back({a, kPi / 2, 1.0});
  return rig;
}

std::string two_camera_episode() {
  return R"({"episode": "ep-7", "rig": [{"azimuth": 0.0}, {"azimuth": 3.141592653589793, "hfov": 1.5, "height": 0.8}]}
{"t": 1, "frames": [{"cam": 0, "data_ref": "file:a1.f32"}, {"cam": 1, "data_ref": "file:b1.f32"}], "text_len": 12}
{"t": 2, "frames": [{"cam": 1, "data_ref": "file:b2.f32"}, {"cam": 0, "data_ref": "file:a2.f32"}], "text_len": 12}
{"t": 3, "frames": [{"cam": 0, "data_ref": "cache:"}, {"cam": 1, "data_ref": "cache:"}], "text_len": 12}
)";
}

}  // namespace

TEST(ValidateRig, TwoOppositeCameras) {
  const auto rig = validate_rig(rig_of({kPi, 0.0}));
  ASSERT_EQ(rig.size(), 2u);
  EXPECT_EQ(rig.cameras[0].azimuth, 0.0);
  EXPECT_EQ(rig.cameras[1].azimuth, kPi);
}

TEST(ValidateRig, DuplicateAzimuth) {
  try {
    validate_rig(rig_of({0.0, 0.0}));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_TRUE(e.has(ErrorCode::DuplicateAzimuth));
    EXPECT_EQ(e.code(), ErrorCode::DuplicateAzimuth);
  }
}

TEST(ValidateRig, FourViewDefault) {
  const auto rig = validate_rig(rig_of({0.0, kPi / 2, kPi, 3 * kPi / 2}));
  EXPECT_EQ(rig, make_ring_rig(4));
}

TEST(ValidateRig, ReportsEveryViolation) {
  CameraRig bad = rig_of({0.0, 0.0, 7.0});
  bad.cameras[1].height = -1.0;
  try {
    validate_rig(bad);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_TRUE(e.has(ErrorCode::DuplicateAzimuth));
    EXPECT_TRUE(e.has(ErrorCode::FieldOutOfRange));
    EXPECT_GE(e.violations().size(), 3u);
  }
  try {
    validate_rig(CameraRig{});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_TRUE(e.has(ErrorCode::EmptyRig));
  }
}

TEST(ValidateRig, HfovRange) {
  auto rig = rig_of({0.0});
  rig.cameras[0].hfov = 0.0;
  EXPECT_THROW(validate_rig(rig), ValidationError);
  rig.cameras[0].hfov = kPi;
  EXPECT_NO_THROW(validate_rig(rig));
}

TEST(ValidateRig, Idempotent) {
  const auto once = validate_rig(rig_of({3.0, 1.0, 5.0, 0.5}));
  EXPECT_EQ(validate_rig(once), once);
  EXPECT_TRUE(std::is_sorted(once.cameras.begin(), once.cameras.end(),
                             [](const auto& a, const auto& b) { return a.azimuth < b.azimuth; }));
}

TEST(RingRig, Spacing) {
  for (int n = 1; n <= 8; ++n) {
    const auto rig = make_ring_rig(n);
    ASSERT_EQ(rig.size(), static_cast<std::size_t>(n));
    EXPECT_EQ(rig.cameras[0].azimuth, 0.0);
    for (int i = 0; i < n; ++i) EXPECT_NEAR(rig.cameras[i].azimuth, kTwoPi * i / n, 1e-15);
  }
  EXPECT_THROW(make_ring_rig(0), Error);
}

TEST(PatchFeatureGrid, Validation) {
  EXPECT_NO_THROW(PatchFeatureGrid(0, 0, 2, std::vector<float>(576 * 2, 1.0f)));
  try {
    PatchFeatureGrid(0, 0, 2, std::vector<float>(575 * 2, 1.0f));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadPatchCount);
  }
  std::vector<float> v(576, 0.0f);
  v[17] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(PatchFeatureGrid(0, 0, 1, v), Error);
}

TEST(PatchFeatureGrid, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "navtoken_core_grid.f32";
  std::vector<float> v(576 * 3);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i) * 0.25f - 7.0f;
  save_grid_file(path, PatchFeatureGrid(2, 1, 3, v));
  const auto back = load_grid_file(path, 2, 1);
  EXPECT_EQ(back.channels(), 3);
  EXPECT_TRUE(std::equal(v.begin(), v.end(), back.values().begin()));
  std::filesystem::remove(path);
}

TEST(IngestEpisode, ThreeStepsTwoCameras) {
  std::istringstream in(two_camera_episode());
  const auto s = ingest_episode(in);
  EXPECT_EQ(s.episode_id, "ep-7");
  EXPECT_EQ(s.rig.size(), 2u);
  EXPECT_EQ(s.steps.size(), 3u);
  EXPECT_EQ(s.frame_count(), 6u);
  EXPECT_EQ(s.instruction_tokens(), 12);
  EXPECT_EQ(s.steps[1].frames[0].camera, 0);
  EXPECT_EQ(s.steps[1].frames[0].data_ref, "file:a2.f32");
  EXPECT_DOUBLE_EQ(s.rig.cameras[1].hfov, 1.5);
}

TEST(IngestEpisode, MissingCamera) {
  std::istringstream in(R"({"t": 1, "frames": [{"cam": 0, "data_ref": "x"}, {"cam": 1, "data_ref": "y"}]}
{"t": 2, "frames": [{"cam": 0, "data_ref": "x"}]}
)");
  try {
    ingest_episode(in, make_ring_rig(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RigMismatch);
  }
}

TEST(IngestEpisode, EmptyFile) {
  std::istringstream in("");
  try {
    ingest_episode(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 0u);
  }
}

TEST(IngestEpisode, MalformedLineNumber) {
  std::istringstream in("{\"t\": 1, \"frames\": [{\"cam\": 0, \"data_ref\": \"x\"}]}\n{not json\n");
  try {
    ingest_episode(in, make_ring_rig(1));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(IngestEpisode, Timesteps) {
  std::istringstream starts_late("{\"t\": 2, \"frames\": [{\"cam\": 0, \"data_ref\": \"x\"}]}\n");
  try {
    ingest_episode(starts_late, make_ring_rig(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonMonotonicTimestep);
  }
  std::istringstream repeats(
      "{\"t\": 1, \"frames\": [{\"cam\": 0, \"data_ref\": \"x\"}]}\n{\"t\": 1, \"frames\": [{\"cam\": 0, \"data_ref\": \"x\"}]}\n");
  try {
    ingest_episode(repeats, make_ring_rig(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonMonotonicTimestep);
  }
}

TEST(IngestEpisode, RoundTrip) {
  std::istringstream in(two_camera_episode());
  const auto first = ingest_episode(in);
  std::ostringstream out;
  serialize_episode(out, first);
  std::istringstream again(out.str());
  EXPECT_EQ(ingest_episode(again), first);
}

TEST(Names, Embodiment) {
  EXPECT_EQ(parse_embodiment("uav"), EmbodimentKind::UAV);
  EXPECT_EQ(to_string(EmbodimentKind::Car), "car");
  EXPECT_THROW(parse_embodiment("boat"), Error);
  EXPECT_EQ(to_string(TaskMode::VideoQA), "video_qa");
}
