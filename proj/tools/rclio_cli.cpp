// Command-line front end: simulate, run, evaluate, bench-map.

#include "rclio/bench.hpp"
#include "rclio/config.hpp"
#include "rclio/evaluation.hpp"
#include "rclio/io.hpp"
#include "rclio/pipeline.hpp"
#include "rclio/sim.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using rclio::AppConfig;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitTracking = 3;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

AppConfig load(const CommonArgs& args) {
  AppConfig cfg = args.config_path.empty() ? rclio::parse_config("")
                                           : rclio::load_config(args.config_path);
  if (args.seed) {
    cfg.seed = *args.seed;
    cfg.pipeline.seed = *args.seed;
  }
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw rclio::io::FormatError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

rclio::sim::SensorConfig sensors_from(const rclio::SimSettings& s, const AppConfig& cfg) {
  rclio::sim::SensorConfig sensors;
  sensors.imu.rate = s.imu_rate;
  sensors.imu.noise = cfg.pipeline.imu_noise;
  sensors.imu.noise_enabled = s.imu_noise;
  sensors.lidar.range_noise = s.range_noise;
  sensors.lidar.beams = s.beams;
  sensors.lidar.azimuth_steps = s.azimuth_steps;
  sensors.lidar.scan_period = s.scan_period;
  sensors.lidar.max_range = s.max_range;
  sensors.extrinsic = cfg.pipeline.extrinsic;
  return sensors;
}

rclio::sim::SimSequence simulate_scenario(const AppConfig& cfg, const std::string& scenario,
                                          double duration) {
  const rclio::sim::Scenario sc = rclio::sim::make_scenario(scenario, duration);
  return rclio::sim::generate(sc.world, sc.profile, sensors_from(cfg.sim, cfg), cfg.seed);
}

nlohmann::json metrics_json(const rclio::PipelineResult& r) {
  const rclio::MetricsReport& m = r.metrics;
  nlohmann::json j;
  j["status"] = r.status == rclio::RunStatus::kOk ? "ok" : "tracking_failure";
  j["message"] = r.message;
  j["ate_rmse"] = m.ate_rmse >= 0.0 ? nlohmann::json(m.ate_rmse) : nlohmann::json(nullptr);
  j["rte_per_10m"] = m.rte_per_10m >= 0.0 ? nlohmann::json(m.rte_per_10m) : nlohmann::json(nullptr);
  j["timing_ms_per_scan"] = {{"subframe", m.mean_per_scan.subframe_ms},
                             {"propagation_update", m.mean_per_scan.propagation_update_ms},
                             {"smooth_integrity", m.mean_per_scan.smooth_integrity_ms},
                             {"mapping", m.mean_per_scan.mapping_ms},
                             {"total", m.mean_per_scan.total_ms}};
  j["map"] = {{"points", m.map_points},
              {"grids", m.map_grids},
              {"memory_bytes", m.map_memory_bytes},
              {"inserted_points", m.inserted_points}};
  j["scans"] = m.scans;
  j["subframes"] = m.subframes;
  j["flagged_insufficient"] = m.flagged_insufficient;
  j["dropped_insufficient"] = m.dropped_insufficient;
  return j;
}

void evaluate_into(rclio::MetricsReport& m, const rclio::Trajectory& est,
                   const rclio::Trajectory& gt) {
  try {
    m.ate_rmse = rclio::evaluate_ate(est, gt).rmse;
  } catch (const std::invalid_argument& e) {
    spdlog::warn("ATE not available: {}", e.what());
  }
  try {
    m.rte_per_10m = rclio::evaluate_rte(est, gt).rmse;
  } catch (const std::invalid_argument& e) {
    spdlog::warn("RTE not available: {}", e.what());
  }
}

int cmd_simulate(const CommonArgs& args, const std::string& scenario_flag, double duration_flag) {
  AppConfig cfg = load(args);
  if (!scenario_flag.empty()) cfg.sim.scenario = scenario_flag;
  if (duration_flag > 0.0) cfg.sim.duration = duration_flag;
  const rclio::sim::SimSequence seq = simulate_scenario(cfg, cfg.sim.scenario, cfg.sim.duration);
  rclio::io::write_sequence(args.out_dir, seq, cfg.sim.scenario, cfg.sim.lidar_format == "csv");
  write_text(fs::path(args.out_dir) / "config.used", rclio::dump_config(cfg));
  spdlog::info("simulated '{}' ({} scans, {} IMU samples) into {}", cfg.sim.scenario,
               seq.scans.size(), seq.imu.size(), args.out_dir);
  return kExitOk;
}

int cmd_run(const CommonArgs& args, const std::string& sequence_dir, bool no_smoothing,
            bool no_divider, int forced_n) {
  AppConfig cfg = load(args);
  if (no_smoothing) cfg.pipeline.smoothing_enabled = false;
  if (no_divider) cfg.pipeline.divider_enabled = false;
  if (forced_n > 0) cfg.pipeline.forced_subframes = forced_n;
  try {
    cfg.pipeline.validate();
  } catch (const std::invalid_argument& e) {
    throw rclio::ConfigError(e.what());
  }
  rclio::io::SequenceMeta meta;
  const rclio::SensorData data = rclio::io::read_sequence(sequence_dir, &meta);
  rclio::PipelineResult result = rclio::run_pipeline(cfg.pipeline, data);

  const fs::path gt_path = fs::path(sequence_dir) / meta.ground_truth_file;
  if (fs::exists(gt_path)) {
    evaluate_into(result.metrics, result.trajectory, rclio::io::read_tum(gt_path));
  }
  fs::create_directories(args.out_dir);
  rclio::io::write_tum(fs::path(args.out_dir) / "trajectory.txt", result.trajectory);
  write_json(fs::path(args.out_dir) / "metrics.json", metrics_json(result));
  write_text(fs::path(args.out_dir) / "config.used", rclio::dump_config(cfg));
  if (result.status != rclio::RunStatus::kOk) {
    spdlog::error("tracking failure: {}", result.message);
    return kExitTracking;
  }
  spdlog::info("run finished: {} poses, ATE {:.4f} m", result.trajectory.size(),
               result.metrics.ate_rmse);
  return kExitOk;
}

int cmd_evaluate(const CommonArgs& args, const std::string& est_path, const std::string& gt_path,
                 double interval) {
  load(args);
  const rclio::Trajectory est = rclio::io::read_tum(est_path);
  const rclio::Trajectory gt = rclio::io::read_tum(gt_path);
  nlohmann::json j;
  try {
    const rclio::AteResult ate = rclio::evaluate_ate(est, gt);
    j["ate_rmse"] = ate.rmse;
    j["ate_pairs"] = ate.pairs;
  } catch (const std::invalid_argument& e) {
    throw rclio::io::FormatError(std::string("evaluate: ") + e.what());
  }
  try {
    const rclio::RteResult rte = rclio::evaluate_rte(est, gt, interval);
    j["rte_per_10m"] = rte.rmse;
    j["rte_segments"] = rte.segments;
  } catch (const std::invalid_argument& e) {
    spdlog::warn("RTE not available: {}", e.what());
    j["rte_per_10m"] = nullptr;
    j["rte_segments"] = 0;
  }
  fs::create_directories(args.out_dir);
  write_json(fs::path(args.out_dir) / "metrics.json", j);
  std::cout << j.dump() << '\n';
  return kExitOk;
}

int cmd_bench(const CommonArgs& args) {
  const AppConfig cfg = load(args);
  std::vector<rclio::bench::BenchRow> rows;
  const double scan_period = cfg.sim.scan_period;
  for (const std::string& name : cfg.bench.workloads) {
    // One scan period of margin so the requested scan count fits inside the sequence.
    const double duration = static_cast<double>(cfg.bench.scans + 1) * scan_period;
    const rclio::sim::SimSequence seq = simulate_scenario(cfg, name, duration);
    const rclio::bench::Workload w =
        rclio::bench::record_workload(name, seq, cfg.pipeline.preprocess, cfg.bench.scans);
    rows.push_back(rclio::bench::bench_rcvox(w, cfg.pipeline.map, cfg.bench.knn_k));
    rows.push_back(rclio::bench::bench_kdtree(w, cfg.pipeline.map, cfg.bench.knn_k));
    rows.push_back(rclio::bench::bench_bruteforce(w, cfg.pipeline.map, cfg.bench.knn_k,
                                                  cfg.bench.bruteforce_stride));
    for (std::size_t i = rows.size() - 3; i < rows.size(); ++i) {
      spdlog::info("{:>10} {:>10}: {:.2f} ms/scan", rows[i].workload, rows[i].structure,
                   rows[i].ms_per_scan);
    }
  }
  fs::create_directories(args.out_dir);
  rclio::bench::write_csv(fs::path(args.out_dir) / "bench.csv", rows);
  write_text(fs::path(args.out_dir) / "config.used", rclio::dump_config(cfg));
  return kExitOk;
}

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("-c,--config", args.config_path, "key = value configuration file")
      ->check(CLI::ExistingFile);
  sub->add_option("--seed", args.seed, "random seed (overrides the config)");
  sub->add_option("-o,--out", args.out_dir, "output / run directory")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rclio: lidar-inertial odometry with sub-frames, smoothing and RC-Vox mapping"};
  app.require_subcommand(1);
  CommonArgs args;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic sequence");
  add_common(sim, args);
  std::string scenario;
  double duration = 0.0;
  sim->add_option("--scenario", scenario,
                  "stationary | gentle | aggressive | corridor | open_plane | spin");
  sim->add_option("--duration", duration, "sequence length in seconds");

  auto* run = app.add_subcommand("run", "run the odometry pipeline on a sequence directory");
  add_common(run, args);
  std::string sequence_dir;
  bool no_smoothing = false;
  bool no_divider = false;
  int forced_n = 0;
  run->add_option("-s,--sequence", sequence_dir, "sequence directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  run->add_flag("--no-smoothing", no_smoothing, "disable the backward smoother");
  run->add_flag("--no-divider", no_divider, "one sub-frame per scan");
  run->add_option("--forced-n", forced_n, "fixed sub-frame count")->check(CLI::NonNegativeNumber);

  auto* eval = app.add_subcommand("evaluate", "ATE / RTE of an estimate against ground truth");
  add_common(eval, args);
  std::string est_path;
  std::string gt_path;
  double interval = 10.0;
  eval->add_option("--est", est_path, "estimated trajectory")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", gt_path, "ground-truth trajectory")->required()->check(CLI::ExistingFile);
  eval->add_option("--interval", interval, "RTE segment length in meters")
      ->check(CLI::PositiveNumber);

  auto* bench = app.add_subcommand("bench-map", "RC-Vox vs k-d tree vs brute force");
  add_common(bench, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*sim) return cmd_simulate(args, scenario, duration);
    if (*run) return cmd_run(args, sequence_dir, no_smoothing, no_divider, forced_n);
    if (*eval) return cmd_evaluate(args, est_path, gt_path, interval);
    if (*bench) return cmd_bench(args);
  } catch (const rclio::ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const rclio::io::FormatError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}
