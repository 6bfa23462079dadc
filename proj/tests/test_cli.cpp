#include "rclio/io.hpp"
#include "rclio/sim.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace rclio {
namespace {

namespace fs = std::filesystem;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           ("rclio_cli_" + std::to_string(::getpid()) + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    // Small sensor so every run takes a fraction of a second.
    write("small.cfg", "sim.azimuth_steps = 300\nsim.duration = 3\nsim.scenario = stationary\n");
  }
  void TearDown() override { fs::remove_all(dir_); }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  // Exit status of the CLI with the given arguments; output goes to a log file.
  int cli(const std::string& args) const {
    const std::string cmd = std::string(RCLIO_CLI_PATH) + " " + args + " >> " +
                            (dir_ / "cli.log").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string p(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST_F(Cli, SimulateWritesSequence) {
  ASSERT_EQ(cli("simulate -c " + p("small.cfg") + " -o " + p("seq")), 0);
  for (const char* f : {"imu.csv", "lidar.bin", "ground_truth.txt", "sequence.meta", "config.used"}) {
    EXPECT_TRUE(fs::exists(dir_ / "seq" / f)) << f;
  }
  ASSERT_EQ(cli("simulate -c " + p("small.cfg") + " --scenario corridor --duration 2 -o " +
                p("seq2")),
            0);
  EXPECT_EQ(io::read_meta(dir_ / "seq2").scenario, "corridor");
}

TEST_F(Cli, RunWritesTrajectoryAndMetrics) {
  ASSERT_EQ(cli("simulate -c " + p("small.cfg") + " -o " + p("seq")), 0);
  ASSERT_EQ(cli("run -c " + p("small.cfg") + " -s " + p("seq") + " -o " + p("out")), 0);
  EXPECT_FALSE(io::read_tum(dir_ / "out" / "trajectory.txt").empty());
  const auto j = nlohmann::json::parse(slurp(dir_ / "out" / "metrics.json"));
  EXPECT_EQ(j["status"], "ok");
  EXPECT_LT(j["ate_rmse"].get<double>(), 0.05);
  EXPECT_TRUE(j.contains("timing_ms_per_scan"));
  EXPECT_TRUE(fs::exists(dir_ / "out" / "config.used"));
}

TEST_F(Cli, RunsAreByteIdentical) {
  ASSERT_EQ(cli("simulate -c " + p("small.cfg") + " --seed 9 -o " + p("seq")), 0);
  ASSERT_EQ(cli("run -c " + p("small.cfg") + " --seed 9 -s " + p("seq") + " -o " + p("a")), 0);
  ASSERT_EQ(cli("run -c " + p("small.cfg") + " --seed 9 -s " + p("seq") + " -o " + p("b")), 0);
  const std::string a = slurp(dir_ / "a" / "trajectory.txt");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir_ / "b" / "trajectory.txt"));
}

TEST_F(Cli, EvaluateIdenticalFilesGivesZero) {
  ASSERT_EQ(cli("simulate -c " + p("small.cfg") + " --scenario gentle --duration 15 -o " + p("seq")),
            0);
  const std::string gt = p("seq/ground_truth.txt");
  ASSERT_EQ(cli("evaluate --est " + gt + " --gt " + gt + " -o " + p("ev")), 0);
  const auto j = nlohmann::json::parse(slurp(dir_ / "ev" / "metrics.json"));
  EXPECT_NEAR(j["ate_rmse"].get<double>(), 0.0, 1e-9);
  EXPECT_NEAR(j["rte_per_10m"].get<double>(), 0.0, 1e-9);
}

TEST_F(Cli, BenchRowsAreWorkloadsTimesStructures) {
  write("bench.cfg", "sim.azimuth_steps = 300\nbench.scans = 15\nbench.workloads = gentle, corridor\n");
  ASSERT_EQ(cli("bench-map -c " + p("bench.cfg") + " -o " + p("bench")), 0);
  std::ifstream in(dir_ / "bench" / "bench.csv");
  std::string line;
  std::size_t rows = 0;
  std::getline(in, line);
  EXPECT_NE(line.find("structure"), std::string::npos);
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  EXPECT_EQ(rows, 2U * 3U);
}

TEST_F(Cli, UsageAndConfigErrorsExitTwo) {
  EXPECT_EQ(cli(""), 2);
  EXPECT_EQ(cli("simulate --bogus -o " + p("x")), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  write("bad.cfg", "map.lambda = huge\n");
  EXPECT_EQ(cli("simulate -c " + p("bad.cfg") + " -o " + p("x")), 2);
  write("unknown.cfg", "no.such.key = 1\n");
  EXPECT_EQ(cli("simulate -c " + p("unknown.cfg") + " -o " + p("x")), 2);
  EXPECT_EQ(cli("simulate -c " + p("small.cfg") + " --scenario nowhere -o " + p("x")), 2);
  fs::create_directories(dir_ / "empty");
  EXPECT_EQ(cli("run -s " + p("empty") + " -o " + p("x")), 2);
  write("bad.txt", "0 1 2\n");
  EXPECT_EQ(cli("evaluate --est " + p("bad.txt") + " --gt " + p("bad.txt") + " -o " + p("x")), 2);
}

TEST_F(Cli, TrackingFailureExitsThree) {
  sim::SensorConfig sensors;
  sensors.lidar.azimuth_steps = 300;
  sensors.imu.noise_enabled = false;
  const sim::Scenario sc = sim::make_scenario("stationary", 3.0);
  sim::SimSequence seq = sim::generate(sc.world, sc.profile, sensors, 1);
  double height = 20.0;
  for (LidarScan& scan : seq.scans) {
    if (scan.t_start < 1.5) continue;
    height += 2.0;
    for (std::size_t i = 0; i < scan.points.size(); ++i) {
      scan.points[i].position = Vec3(static_cast<double>(i % 20) * 0.2 - 2.0,
                                     static_cast<double>(i / 20 % 20) * 0.2 - 2.0, height);
    }
  }
  io::write_sequence(dir_ / "lost", seq, "stationary", true);
  write("lost.cfg", "pipeline.max_failed_subframes = 3\n");
  EXPECT_EQ(cli("run -c " + p("lost.cfg") + " -s " + p("lost") + " -o " + p("out")), 3);
  const auto j = nlohmann::json::parse(slurp(dir_ / "out" / "metrics.json"));
  EXPECT_EQ(j["status"], "tracking_failure");
  EXPECT_FALSE(io::read_tum(dir_ / "out" / "trajectory.txt").empty());
}

}  // namespace
}  // namespace rclio
