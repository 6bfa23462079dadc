// Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when any
// criterion fails.

#include "rclio/bench.hpp"
#include "rclio/evaluation.hpp"
#include "rclio/io.hpp"
#include "rclio/knn.hpp"
#include "rclio/pipeline.hpp"
#include "rclio/rcvox_map.hpp"
#include "rclio/sim.hpp"

#include "oracles.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace rclio;

namespace {

// Pinned tolerances.
constexpr std::size_t kKnnPoints = 100000;
constexpr int kKnnQueries = 10000;
constexpr double kKnnSeconds = 30.0;
constexpr int kFuzzSteps = 1000;
constexpr double kFuzzSeconds = 60.0;
constexpr double kSmootherRelTol = 1e-8;
constexpr double kJacobianRelTol = 1e-5;
constexpr int kJacobianTrials = 100;
constexpr double kGainRelTol = 1e-8;
constexpr int kGainTrials = 100;
constexpr double kGentleAte = 0.05;
constexpr double kGentleRte = 0.03;
constexpr double kGentleSeconds = 120.0;
constexpr double kAggressivePeak = 20.0;
constexpr double kAggressiveRatio = 0.5;
constexpr double kAggressiveAbortAte = 0.2;
constexpr double kBenchSpeedup = 2.0;
constexpr std::size_t kBenchScans = 600;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

using Key = std::array<int, 3>;
Key key(const Index3& i) { return {i.x(), i.y(), i.z()}; }

// 1. RC-Vox k-NN equals brute force over the adjacency footprint of the query voxel.
Verdict knn_exactness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  RcVoxConfig cfg;
  RcVoxMap map(cfg, Vec3::Zero());
  std::vector<Vec3> cloud(kKnnPoints);
  for (Vec3& p : cloud) p = Vec3(u(rng), u(rng), u(rng));
  map.insert(cloud);

  // Stored points bucketed by their global voxel index.
  std::map<Key, std::vector<Vec3>> buckets;
  std::vector<Vec3> stored;
  map.for_each_point([&](const Vec3& p, const Index3& gv) {
    buckets[key(gv)].push_back(p);
    stored.push_back(p);
  });
  const KdTree tree(stored);
  const auto offsets = neighbor_offsets(cfg.neighbor_mode);

  std::size_t mismatches = 0;
  std::size_t agree = 0;
  for (int q = 0; q < kKnnQueries; ++q) {
    const Vec3 query(u(rng), u(rng), u(rng));
    const Index3 gv = map.global_voxel(query);
    std::vector<Vec3> footprint;
    auto add = [&](const Index3& v) {
      if (auto it = buckets.find(key(v)); it != buckets.end()) {
        footprint.insert(footprint.end(), it->second.begin(), it->second.end());
      }
    };
    add(gv);
    for (const Index3& d : offsets) add(gv + d);
    const auto got = map.knn(query, 5);
    const auto oracle = brute_force_knn(footprint, query, 5);
    bool same = got.size() == oracle.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) {
      same = got[i].squared_distance == oracle[i].squared_distance;
    }
    mismatches += same ? 0 : 1;
    const auto full = tree.knn(query, 5);
    bool unrestricted = got.size() == full.size();
    for (std::size_t i = 0; unrestricted && i < got.size(); ++i) {
      unrestricted = got[i].point == full[i].point;
    }
    agree += unrestricted ? 1 : 0;
  }
  const double secs = seconds_since(t0);
  const double rate = static_cast<double>(agree) / kKnnQueries;
  return {mismatches == 0 && secs < kKnnSeconds,
          "mismatches=" + std::to_string(mismatches) + " over " + std::to_string(kKnnQueries) +
              " queries, unrestricted agreement=" + fmt("%.4f", rate) + ", " + fmt("%.1f", secs) +
              " s (limit " + fmt("%.0f", kKnnSeconds) + " s)"};
}

// 2. Worked index example with l=10, lambda=1, g=2, v=0.5, plus negative coordinates.
Verdict index_math() {
  RcVoxConfig cfg;
  cfg.lidar_range = 10.0;
  cfg.lambda = 1.0;
  cfg.grid_size = 2.0;
  cfg.voxel_size = 0.5;
  RcVoxMap map(cfg, Vec3::Zero());
  bool ok = map.t_init() == Vec3(-10, -10, -10);
  map.update_origin(Vec3::Zero());
  const Vec3 p(3.7, -2.1, 0.4);
  ok = ok && map.tla_index(p) == Index3(6, 3, 5);
  const Vec3 b_ori = map.grid_origin(p);
  ok = ok && b_ori == Vec3(2, -4, 0);
  ok = ok && bla_index(p, b_ori, cfg.voxel_size) == Index3(3, 3, 0);
  map.update_origin(Vec3(-31.0, 0.5, 0.5));
  ok = ok && map.it_m_curr() == Index3(9, 5, 5);
  ok = ok && map.m_curr() == Vec3(-32, 0, 0);
  ok = ok && map.tla_index(Vec3(-33.5, 0.5, 0.5)) == Index3(8, 5, 5);
  return {ok, "t_init=(-10,-10,-10) IT=(6,3,5) b_ori=(2,-4,0) IB=(3,3,0), wrap of x=-31 to slot 9"};
}

// 3. No query returns a point outside the current window after a long random walk.
Verdict stale_points() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1003);
  RcVoxConfig cfg;
  cfg.lidar_range = 10.0;
  cfg.grid_size = 2.5;
  RcVoxMap map(cfg, Vec3::Zero());
  std::normal_distribution<double> step(0.0, 1.5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 robot = Vec3::Zero();
  std::size_t stale = 0;
  std::size_t returned = 0;
  for (int s = 0; s < kFuzzSteps; ++s) {
    robot += Vec3(step(rng), step(rng), 0.3 * step(rng));
    map.update_origin(robot);
    std::vector<Vec3> pts(300);
    for (Vec3& p : pts) p = robot + Vec3(u(rng), u(rng), u(rng)) * 10.0;
    map.insert(pts);
    for (int q = 0; q < 50; ++q) {
      const Vec3 query = robot + Vec3(u(rng), u(rng), u(rng)) * 12.0;
      if (!map.contains(query)) continue;
      for (const Neighbor& nb : map.knn(query, 5)) {
        ++returned;
        if (!map.contains(nb.point)) ++stale;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {stale == 0 && returned > 0 && secs < kFuzzSeconds,
          "stale=" + std::to_string(stale) + " of " + std::to_string(returned) + " returned over " +
              std::to_string(kFuzzSteps) + " steps, " + fmt("%.1f", secs) + " s (limit " +
              fmt("%.0f", kFuzzSeconds) + " s)"};
}

// 4. Backward smoother against a dense batch solution on linear toys.
Verdict smoother_correctness() {
  double mean_err = 0.0;
  double cov_err = 0.0;
  bool trace_ok = true;
  for (int n : {10, 25, 50, 100}) {
    std::mt19937_64 rng(1004 + n);
    const oracle::LinearToy toy = oracle::make_toy(rng, n);
    const auto out = backward_smooth(toy.nodes);
    const oracle::BatchComparison c = oracle::compare_with_batch(toy, out);
    mean_err = std::max(mean_err, c.mean_error);
    cov_err = std::max(cov_err, c.cov_error);
    for (std::size_t k = 0; k < out.size(); ++k) {
      const double f = toy.nodes[k].filtered_cov.trace();
      trace_ok = trace_ok && out[k].covariance.trace() <= f * (1.0 + 1e-12);
    }
  }
  return {mean_err < kSmootherRelTol && cov_err < kSmootherRelTol && trace_ok,
          "max relative error mean=" + fmt("%.2e", mean_err) + " cov=" + fmt("%.2e", cov_err) +
              " (tol " + fmt("%.0e", kSmootherRelTol) + "), trace(smoothed) <= trace(filtered): " +
              (trace_ok ? "yes" : "no")};
}

// 5. Analytic Jacobians against central differences.
Verdict jacobian_fidelity() {
  std::mt19937_64 rng(1005);
  double worst_f = 0.0;
  for (int i = 0; i < kJacobianTrials; ++i) {
    const NominalState x = oracle::random_state(rng);
    const ImuSample u = oracle::random_input(rng);
    const double dt = 1e-3;
    const TransitionRecord tr = build_transition(x, u, dt, ImuNoiseParams{});
    worst_f = std::max(worst_f,
                       oracle::rel_frobenius(tr.transition, oracle::numerical_transition(x, u, dt)));
  }
  ExtrinsicCalib calib;
  calib.rotation_lidar_to_imu = so3_exp(Vec3(0.02, -0.01, 0.03));
  calib.translation_lidar_to_imu = Vec3(0.05, 0.01, -0.08);
  double worst_h = 0.0;
  for (int i = 0; i < kJacobianTrials; ++i) {
    const NominalState x = oracle::random_state(rng);
    PlanePatch plane;
    plane.normal = oracle::random_vec(rng, 1.0).normalized();
    plane.centroid = oracle::random_vec(rng, 5.0);
    plane.valid = true;
    const Vec3 pt = oracle::random_vec(rng, 10.0);
    const ResidualRow row = residual_and_jacobian(x, pt, plane, calib);
    const JacobianRow fd = oracle::numerical_residual_jacobian(x, pt, plane, calib);
    worst_h = std::max(worst_h, (fd - row.jacobian).norm() / row.jacobian.norm());
  }
  return {worst_f < kJacobianRelTol && worst_h < kJacobianRelTol,
          "transition " + fmt("%.2e", worst_f) + ", residual " + fmt("%.2e", worst_h) +
              " worst relative over " + std::to_string(kJacobianTrials) + " each (tol " +
              fmt("%.0e", kJacobianRelTol) + ")"};
}

// 6. Information-form gain against the covariance form.
Verdict gain_equivalence() {
  std::mt19937_64 rng(1006);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> r(0.001, 0.01);
  double worst = 0.0;
  for (int t = 0; t < kGainTrials; ++t) {
    const CovMat p = oracle::random_spd(rng, 1.0, 0.1);
    const int m = 5 + t % 40;
    Eigen::Matrix<double, Eigen::Dynamic, kErrorDim> h(m, kErrorDim);
    for (int i = 0; i < m; ++i) {
      for (int c = 0; c < kErrorDim; ++c) h(i, c) = n(rng);
    }
    Eigen::VectorXd rd(m);
    for (int i = 0; i < m; ++i) rd(i) = r(rng);
    const Eigen::MatrixXd k = state_space_gain(p, h, rd);
    const Eigen::MatrixXd ref = oracle::covariance_form_gain(p, h, rd);
    worst = std::max(worst, (k - ref).norm() / ref.norm());
  }
  return {worst < kGainRelTol, "worst relative " + fmt("%.2e", worst) + " over " +
                                   std::to_string(kGainTrials) + " instances (tol " +
                                   fmt("%.0e", kGainRelTol) + ")"};
}

sim::SimSequence simulate(const std::string& scenario, double duration, std::uint64_t seed) {
  const sim::Scenario sc = sim::make_scenario(scenario, duration);
  return sim::generate(sc.world, sc.profile, sim::SensorConfig{}, seed);
}

double run_ate(const PipelineResult& r, const sim::SimSequence& seq) {
  return evaluate_ate(r.trajectory, io::ground_truth_trajectory(seq.ground_truth)).rmse;
}

// 7. Gentle room loop.
Verdict gentle_accuracy() {
  const auto t0 = Clock::now();
  const sim::SimSequence seq = simulate("gentle", 60.0, 7);
  const PipelineResult r = run_pipeline(PipelineConfig{}, {seq.imu, seq.scans});
  const double secs = seconds_since(t0);
  if (r.status != RunStatus::kOk) return {false, "tracking failure: " + r.message};
  const Trajectory gt = io::ground_truth_trajectory(seq.ground_truth);
  const double ate = evaluate_ate(r.trajectory, gt).rmse;
  const double rte = evaluate_rte(r.trajectory, gt).rmse;
  return {ate < kGentleAte && rte < kGentleRte && secs < kGentleSeconds,
          "ATE=" + fmt("%.4f", ate) + " m (< " + fmt("%.2f", kGentleAte) + "), RTE(10 m)=" +
              fmt("%.4f", rte) + " m (< " + fmt("%.2f", kGentleRte) + "), " + fmt("%.1f", secs) +
              " s (limit " + fmt("%.0f", kGentleSeconds) + " s)"};
}

// 8. Aggressive profile: adaptive sub-frames against a single sub-frame per scan.
Verdict aggressive_robustness() {
  const sim::Scenario sc = sim::make_scenario("aggressive", 20.0);
  double peak = 0.0;
  for (double t = 0.0; t < sc.profile.duration(); t += 1e-3) {
    peak = std::max(peak, sc.profile.at(t).angular_velocity.norm());
  }
  const sim::SimSequence seq = sim::generate(sc.world, sc.profile, sim::SensorConfig{}, 8);
  const PipelineResult full = run_pipeline(PipelineConfig{}, {seq.imu, seq.scans});
  PipelineConfig single;
  single.forced_subframes = 1;
  const PipelineResult one = run_pipeline(single, {seq.imu, seq.scans});
  const bool full_ok = full.status == RunStatus::kOk;
  const bool one_ok = one.status == RunStatus::kOk;
  const double ate_full = full_ok ? run_ate(full, seq) : -1.0;
  const double ate_one = one_ok ? run_ate(one, seq) : -1.0;
  bool pass = false;
  if (full_ok && one_ok) pass = ate_full <= kAggressiveRatio * ate_one;
  if (full_ok && !one_ok) pass = ate_full < kAggressiveAbortAte;
  const auto describe = [](bool ok, double ate) {
    return ok ? fmt("%.4f", ate) + " m" : std::string("aborted");
  };
  return {pass && peak >= kAggressivePeak,
          "peak " + fmt("%.1f", peak) + " rad/s, ATE adaptive=" + describe(full_ok, ate_full) +
              " vs n=1 " + describe(one_ok, ate_one) + " (need adaptive <= " +
              fmt("%.1f", kAggressiveRatio) + " x n=1, or n=1 aborts and adaptive < " +
              fmt("%.1f", kAggressiveAbortAte) + " m)"};
}

// Along-axis (x) RMSE in the world frame over the estimate's own poses.
double along_axis_rmse(const PipelineResult& r, const sim::SimSequence& seq) {
  Vec3 p0;
  Quat q0;
  seq.ground_truth.pose_at(0.0, p0, q0);
  const Trajectory gt = io::ground_truth_trajectory(seq.ground_truth);
  const auto pairs = associate(r.trajectory, gt);
  double sum = 0.0;
  for (const auto& [e, g] : pairs) {
    const Vec3 world = p0 + q0 * r.trajectory[e].position;
    sum += std::pow(world.x() - gt[g].position.x(), 2);
  }
  return pairs.empty() ? std::numeric_limits<double>::infinity()
                       : std::sqrt(sum / static_cast<double>(pairs.size()));
}

// 9. Corridor degeneracy.
Verdict degeneracy_handling() {
  const sim::SimSequence seq = simulate("corridor", 20.0, 9);
  const PipelineResult on = run_pipeline(PipelineConfig{}, {seq.imu, seq.scans});
  PipelineConfig cfg_off;
  cfg_off.smoothing_enabled = false;
  const PipelineResult off = run_pipeline(cfg_off, {seq.imu, seq.scans});
  const double rmse_on = along_axis_rmse(on, seq);
  const double rmse_off = along_axis_rmse(off, seq);
  const std::size_t flagged = on.metrics.flagged_insufficient;
  const auto status = [](const PipelineResult& r) {
    return r.status == RunStatus::kOk ? std::string("ok") : std::string("aborted");
  };
  return {rmse_on < rmse_off && flagged >= 1,
          "along-corridor RMSE smoothing on=" + fmt("%.3f", rmse_on) + " m (" + status(on) +
              ") vs off=" + fmt("%.3f", rmse_off) + " m (" + status(off) +
              "), flagged insufficient=" + std::to_string(flagged)};
}

// 10. Map-structure timing on a recorded workload.
Verdict map_performance(const fs::path& csv_dir) {
  const sim::SimSequence seq =
      simulate("gentle", static_cast<double>(kBenchScans + 1) * 0.1, 10);
  const PipelineConfig cfg;
  const bench::Workload w = bench::record_workload("gentle", seq, cfg.preprocess, kBenchScans);
  const bench::BenchRow rc = bench::bench_rcvox(w, cfg.map, cfg.iekf.knn_k);
  const bench::BenchRow kd = bench::bench_kdtree(w, cfg.map, cfg.iekf.knn_k);
  const bench::BenchRow bf = bench::bench_bruteforce(w, cfg.map, cfg.iekf.knn_k, 50);
  const fs::path csv = csv_dir / "bench.csv";
  bench::write_csv(csv, {rc, kd, bf});
  const double speedup = kd.total_ms / rc.total_ms;
  return {w.scans.size() == kBenchScans && speedup >= kBenchSpeedup && fs::exists(csv),
          std::to_string(w.scans.size()) + " scans, RC-Vox " + fmt("%.1f", rc.total_ms) +
              " ms vs rebuilt k-d tree " + fmt("%.1f", kd.total_ms) + " ms, speedup " +
              fmt("%.1f", speedup) + "x (need >= " + fmt("%.0f", kBenchSpeedup) + "x), CSV " +
              csv.string()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 11. Byte-identical trajectories from identical config and seed.
Verdict determinism(const fs::path& csv_dir) {
  std::vector<fs::path> files;
  for (int run = 0; run < 2; ++run) {
    const sim::SimSequence seq = simulate("gentle", 15.0, 11);
    const PipelineResult r = run_pipeline(PipelineConfig{}, {seq.imu, seq.scans});
    files.push_back(csv_dir / ("determinism_run" + std::to_string(run) + ".txt"));
    io::write_tum(files.back(), r.trajectory);
  }
  const std::string a = slurp(files[0]);
  const std::string b = slurp(files[1]);
  return {!a.empty() && a == b, std::to_string(a.size()) + " bytes, identical: " +
                                    (a == b ? std::string("yes") : std::string("no"))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::string csv_dir = "acceptance_out";
  app.add_option("--csv-dir", csv_dir, "directory for the benchmark CSV and run outputs");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(csv_dir);
  spdlog::set_level(spdlog::level::err);

  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "k-NN exactness", knn_exactness},
      {2, "index math", index_math},
      {3, "stale-point absence", stale_points},
      {4, "smoother correctness", smoother_correctness},
      {5, "Jacobian fidelity", jacobian_fidelity},
      {6, "gain equivalence", gain_equivalence},
      {7, "gentle end-to-end accuracy", gentle_accuracy},
      {8, "aggressive-motion robustness", aggressive_robustness},
      {9, "degeneracy handling", degeneracy_handling},
      {10, "map-structure performance", [&] { return map_performance(csv_dir); }},
      {11, "determinism", [&] { return determinism(csv_dir); }},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::printf("%s %2d %s: %s\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
