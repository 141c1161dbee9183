#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "navtoken/core.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int exit_code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(NAVTOKEN_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("navtoken_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
    return (dir_ / name).string();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, PlanTable) {
  const auto r = run("plan -B 2048 -N 4 --t-max 900");
  ASSERT_EQ(r.exit_code, 0);
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "T,k,feasible,expected_frames");
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 900u);
  EXPECT_EQ(rows[893].substr(0, 4), "894,");
  EXPECT_NE(rows[893].find(",1,"), std::string::npos);
  EXPECT_EQ(rows[894].substr(0, 5), "895,,");
  EXPECT_NE(rows[894].find(",0,"), std::string::npos);
}

TEST_F(CliTest, PlanInfeasibleAndTinyBudget) {
  EXPECT_EQ(run("plan -B 2048 -N 4 --latest 1120").exit_code, 3);
  EXPECT_EQ(run("plan -B 100 -N 4").exit_code, 3);
  const auto r = run("plan -B 2048 -N 4 --latest 125 --draw --seed 3");
  ASSERT_EQ(r.exit_code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["kept"].back(), 125);
}

TEST_F(CliTest, UsageAndConfigErrors) {
  EXPECT_EQ(run("").exit_code, 2);
  EXPECT_EQ(run("plan --no-such-flag").exit_code, 2);
  const auto bad = write("bad.json", R"({"colour": 1})");
  EXPECT_EQ(run("simulate --config " + bad).exit_code, 2);
  const auto small = write("small.json", R"({"B": 200, "N": 4})");
  EXPECT_EQ(run("simulate --config " + small).exit_code, 3);
}

TEST_F(CliTest, SimulateWritesReport) {
  const auto cfg = write("c.json", R"({"T_max": 90, "B": 1600, "N": 4, "C": 8, "pe_dim": 8})");
  const auto stem = (dir_ / "run").string();
  const auto r = run("simulate --config " + cfg + " --seed 2 --out " + stem);
  ASSERT_EQ(r.exit_code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_LE(j["summary"]["max_tokens"].get<int>(), 1600);
  EXPECT_EQ(j["summary"]["steps_over_budget"], 0);
  EXPECT_TRUE(fs::exists(stem + ".csv"));
  EXPECT_TRUE(fs::exists(stem + ".json"));
  const auto cmp = run("simulate --config " + cfg + " --compare --out " + stem);
  ASSERT_EQ(cmp.exit_code, 0);
  EXPECT_TRUE(fs::exists(stem + "_uniform.csv"));
  EXPECT_TRUE(fs::exists(stem + "_linear.json"));
}

TEST_F(CliTest, Eval) {
  const auto in = write("eps.jsonl",
                        "{\"id\": \"a\", \"executed\": [[0, 0], [10, 0]], \"reference\": [[0, 0], [10, 0]]}\n"
                        "{\"id\": \"b\", \"executed\": [[0, 0], [1, 0]], \"reference\": [[0, 0], [10, 0]]}\n");
  const auto csv = (dir_ / "per.csv").string();
  const auto r = run("eval --input " + in + " --csv " + csv);
  ASSERT_EQ(r.exit_code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["SR"]["value"], 0.5);
  EXPECT_TRUE(fs::exists(csv));
  const auto bad = write("bad.jsonl", "{\"executed\": []}\n");
  EXPECT_EQ(run("eval --input " + bad).exit_code, 1);
}

TEST_F(CliTest, CacheLifecycle) {
  const auto store = (dir_ / "s.nfc").string();
  ASSERT_EQ(run("cache create --store " + store + " --channels 4").exit_code, 0);
  EXPECT_NE(run("cache create --store " + store + " --channels 4").exit_code, 0);
  std::vector<float> grid(576 * 4, 0.25f);
  navtoken::save_grid_file(dir_ / "g.f32", navtoken::PatchFeatureGrid(1, 0, 4, grid));
  const auto ep = write("ep.jsonl", R"({"episode": "e", "rig": [{"azimuth": 0.0}]}
{"t": 1, "frames": [{"cam": 0, "data_ref": "file:g.f32"}]}
)");
  ASSERT_EQ(run("cache ingest --store " + store + " --episode " + ep).exit_code, 0);
  const auto stats = nlohmann::json::parse(run("cache stats --store " + store).out);
  EXPECT_EQ(stats["entries"], 1);
  const auto got = run("cache get --store " + store + " --episode-id e --t 1 --camera 0");
  ASSERT_EQ(got.exit_code, 0);
  EXPECT_NE(got.out.find("0.25"), std::string::npos);
  EXPECT_NE(run("cache get --store " + store + " --episode-id e --t 2 --camera 0").exit_code, 0);
}

TEST_F(CliTest, OrganizeSynthetic) {
  std::ostringstream ep;
  ep << R"({"episode": "syn", "rig": [{"azimuth": 0.0}, {"azimuth": 3.14159}]})" << "\n";
  for (int t = 1; t <= 30; ++t) {
    ep << R"({"t": )" << t << R"(, "frames": [{"cam": 0, "data_ref": "synthetic"}, {"cam": 1, "data_ref": "synthetic"}], "text_len": 5})"
       << "\n";
  }
  const auto path = write("syn.jsonl", ep.str());
  const auto r = run("organize --episode " + path + " --channels 8 -B 400 --seed 1");
  ASSERT_EQ(r.exit_code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_LE(j["counts"]["visual_region"].get<int>(), 400);
  EXPECT_EQ(j["counts"]["text"], 5);
  EXPECT_EQ(j["episode"], "syn");
  EXPECT_EQ(j["plan"]["latest"], 30);
}

TEST_F(CliTest, FitAlpha) {
  std::ostringstream data;
  for (int i = 0; i < 120; ++i) {
    data << R"({"embodiment": "car", "waypoints": [)";
    for (int k = 0; k < 8; ++k) data << (k ? ", " : "") << "[" << 0.5 * k << ", 1.0, 0, 0.2]";
    data << "]}\n";
  }
  const auto r = run("fit-alpha --input " + write("traj.jsonl", data.str()));
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_NE(r.out.find("car"), std::string::npos);
  EXPECT_NE(r.out.find("50.8"), std::string::npos);
  std::ostringstream few;
  for (int i = 0; i < 10; ++i) few << R"({"embodiment": "car", "waypoints": [[1, 1, 0, 1], [1, 1, 0, 1], [1, 1, 0, 1], [1, 1, 0, 1], [1, 1, 0, 1], [1, 1, 0, 1], [1, 1, 0, 1], [1, 1, 0, 1]]})" << "\n";
  EXPECT_EQ(run("fit-alpha --input " + write("few.jsonl", few.str())).exit_code, 1);
}
