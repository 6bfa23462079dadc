#include "rclio/bench.hpp"

#include "rclio/knn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace rclio::bench {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct CellHash {
  std::size_t operator()(const Index3& c) const {
    const auto x = static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.x()));
    const auto y = static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.y()));
    const auto z = static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.z()));
    return static_cast<std::size_t>((x * 73856093ULL) ^ (y * 19349669ULL) ^ (z * 83492791ULL));
  }
};

Index3 floor_cell(const Vec3& p, const Vec3& origin, double size) {
  const Vec3 c = ((p - origin) / size).array().floor();
  return c.cast<int>();
}

// The admission rules of RcVoxMap (window, range cube, voxel cap) applied to a flat list.
class FlatLocalMap {
 public:
  FlatLocalMap(const RcVoxConfig& cfg, const Vec3& r_init)
      : cfg_(cfg), n_(cfg.grids_per_axis()), t_init_(r_init - Vec3::Constant(cfg.lambda * cfg.lidar_range)) {
    move_to(r_init);
  }

  void move_to(const Vec3& r) {
    robot_ = r;
    lo_ = floor_cell(r, t_init_, cfg_.grid_size) - Index3::Constant(n_ / 2);
  }

  bool in_window(const Vec3& p) const {
    const Index3 c = floor_cell(p, t_init_, cfg_.grid_size);
    return (c.array() >= lo_.array()).all() && (c.array() < (lo_.array() + n_)).all();
  }

  void evict() {
    std::size_t keep = 0;
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (in_window(points_[i])) {
        points_[keep++] = points_[i];
      } else {
        auto it = counts_.find(floor_cell(points_[i], t_init_, cfg_.voxel_size));
        if (--it->second == 0) counts_.erase(it);
      }
    }
    points_.resize(keep);
  }

  std::size_t insert(const std::vector<Vec3>& pts) {
    std::size_t inserted = 0;
    for (const Vec3& p : pts) {
      if (!in_window(p) || (p - robot_).cwiseAbs().maxCoeff() > cfg_.lidar_range) continue;
      int& count = counts_[floor_cell(p, t_init_, cfg_.voxel_size)];
      if (count >= cfg_.max_points_per_voxel) continue;
      ++count;
      points_.push_back(p);
      ++inserted;
    }
    return inserted;
  }

  const std::vector<Vec3>& points() const { return points_; }
  std::size_t memory_bytes() const {
    return points_.capacity() * sizeof(Vec3) +
           counts_.size() * (sizeof(Index3) + sizeof(int) + 2 * sizeof(void*));
  }

 private:
  RcVoxConfig cfg_;
  int n_;
  Vec3 t_init_;
  Vec3 robot_ = Vec3::Zero();
  Index3 lo_ = Index3::Zero();
  std::vector<Vec3> points_;
  std::unordered_map<Index3, int, CellHash> counts_;
};

template <typename Fn>
double timed(Fn&& fn) {
  const auto t0 = Clock::now();
  fn();
  return ms_since(t0);
}

void finish(BenchRow& row) {
  row.total_ms = row.insert_ms + row.delete_ms + row.knn_ms;
  row.ms_per_scan = row.scans > 0 ? row.total_ms / static_cast<double>(row.scans) : 0.0;
}

// Sink that keeps the optimizer from discarding query results.
volatile double g_sink = 0.0;

}  // namespace

Workload record_workload(const std::string& name, const sim::SimSequence& seq,
                         const PreprocessConfig& pre, std::size_t max_scans) {
  Workload w;
  w.name = name;
  const ExtrinsicCalib& ext = seq.sensors.extrinsic;
  for (const LidarScan& scan : seq.scans) {
    if (w.scans.size() >= max_scans) break;
    if (scan.t_end > seq.ground_truth.end_time()) break;
    const LidarScan reduced = preprocess(scan, pre);
    Vec3 p;
    Quat q;
    seq.ground_truth.pose_at(scan.t_end, p, q);
    WorkloadScan ws;
    ws.robot = p;
    ws.points.reserve(reduced.points.size());
    for (const TimedPoint& tp : reduced.points) ws.points.push_back(q * ext.lidar_to_body(tp.position) + p);
    w.scans.push_back(std::move(ws));
  }
  return w;
}

BenchRow bench_rcvox(const Workload& w, const RcVoxConfig& cfg, int k) {
  BenchRow row{w.name, "rcvox"};
  if (w.scans.empty()) return row;
  RcVoxMap map(cfg, w.scans.front().robot);
  for (const WorkloadScan& s : w.scans) {
    row.knn_ms += timed([&] {
      double acc = 0.0;
      for (const Vec3& q : s.points) {
        if (!map.contains(q)) continue;
        const auto nn = map.knn(q, k);
        if (!nn.empty()) acc += nn.front().squared_distance;
        ++row.queries;
      }
      g_sink = g_sink + acc;
    });
    row.insert_ms += timed([&] { row.inserted_points += map.insert(s.points).inserted; });
    row.delete_ms += timed([&] { map.update_origin(s.robot); });
    ++row.scans;
  }
  row.memory_bytes = map.memory_bytes();
  finish(row);
  return row;
}

BenchRow bench_kdtree(const Workload& w, const RcVoxConfig& cfg, int k) {
  BenchRow row{w.name, "kdtree"};
  if (w.scans.empty()) return row;
  FlatLocalMap local(cfg, w.scans.front().robot);
  KdTree tree;
  for (const WorkloadScan& s : w.scans) {
    row.knn_ms += timed([&] {
      double acc = 0.0;
      for (const Vec3& q : s.points) {
        if (!local.in_window(q)) continue;
        const auto nn = tree.knn(q, k);
        if (!nn.empty()) acc += nn.front().squared_distance;
        ++row.queries;
      }
      g_sink = g_sink + acc;
    });
    row.insert_ms += timed([&] { row.inserted_points += local.insert(s.points); });
    row.delete_ms += timed([&] {
      local.move_to(s.robot);
      local.evict();
    });
    row.insert_ms += timed([&] { tree.build(local.points()); });
    ++row.scans;
  }
  row.memory_bytes = tree.memory_bytes() + local.memory_bytes();
  finish(row);
  return row;
}

BenchRow bench_bruteforce(const Workload& w, const RcVoxConfig& cfg, int k, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("bench_bruteforce: stride must be >= 1");
  BenchRow row{w.name, "bruteforce"};
  if (w.scans.empty()) return row;
  FlatLocalMap local(cfg, w.scans.front().robot);
  for (const WorkloadScan& s : w.scans) {
    row.knn_ms += timed([&] {
      double acc = 0.0;
      for (std::size_t i = 0; i < s.points.size(); i += stride) {
        if (!local.in_window(s.points[i])) continue;
        const auto nn = brute_force_knn(local.points(), s.points[i], k);
        if (!nn.empty()) acc += nn.front().squared_distance;
        ++row.queries;
      }
      g_sink = g_sink + acc;
    });
    row.insert_ms += timed([&] { row.inserted_points += local.insert(s.points); });
    row.delete_ms += timed([&] {
      local.move_to(s.robot);
      local.evict();
    });
    ++row.scans;
  }
  row.memory_bytes = local.memory_bytes();
  finish(row);
  return row;
}

void write_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "workload,structure,scans,inserted_points,queries,insert_ms,delete_ms,knn_ms,total_ms,"
         "ms_per_scan,memory_bytes\n";
  char buf[256];
  for (const BenchRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%zu,%zu,%zu,%.3f,%.3f,%.3f,%.3f,%.4f,%zu\n",
                  r.workload.c_str(), r.structure.c_str(), r.scans, r.inserted_points, r.queries,
                  r.insert_ms, r.delete_ms, r.knn_ms, r.total_ms, r.ms_per_scan, r.memory_bytes);
    out << buf;
  }
}

}  // namespace rclio::bench
