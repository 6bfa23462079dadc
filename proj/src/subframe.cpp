#include "rclio/subframe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_set>

namespace rclio {

void DividerConfig::validate() const {
  if (!(sigma_acc_max > 0.0) || !(sigma_gyr_max > 0.0)) {
    throw std::invalid_argument("divider sigma maxima must be positive");
  }
  if (n_max < 1) {
    throw std::invalid_argument("divider n_max must be >= 1");
  }
}

MotionStats compute_motion_stats(std::span<const ImuSample> imu_window) {
  if (imu_window.size() < 2) {
    throw std::invalid_argument("motion statistics need at least 2 IMU samples");
  }
  const double n = static_cast<double>(imu_window.size());
  Vec3 mean_acc = Vec3::Zero();
  Vec3 mean_gyr = Vec3::Zero();
  for (const ImuSample& s : imu_window) {
    mean_acc += s.accel;
    mean_gyr += s.gyro;
  }
  mean_acc /= n;
  mean_gyr /= n;
  Vec3 var_acc = Vec3::Zero();
  Vec3 var_gyr = Vec3::Zero();
  for (const ImuSample& s : imu_window) {
    var_acc += (s.accel - mean_acc).cwiseAbs2();
    var_gyr += (s.gyro - mean_gyr).cwiseAbs2();
  }
  MotionStats stats;
  stats.sigma_acc = (var_acc / n).cwiseSqrt();
  stats.sigma_gyr = (var_gyr / n).cwiseSqrt();
  return stats;
}

int subframe_count(const MotionStats& stats, const DividerConfig& cfg) {
  cfg.validate();
  const double ratio = std::max(stats.sigma_acc.maxCoeff() / cfg.sigma_acc_max,
                                stats.sigma_gyr.maxCoeff() / cfg.sigma_gyr_max);
  const double raw = std::ceil(static_cast<double>(cfg.n_max) * ratio);
  if (!(raw >= 1.0)) {
    return 1;
  }
  return raw >= cfg.n_max ? cfg.n_max : static_cast<int>(raw);
}

std::vector<ImuSample> imu_window(std::span<const ImuSample> imu, double t_start, double t_end) {
  auto first = std::lower_bound(imu.begin(), imu.end(), t_start,
                                [](const ImuSample& s, double v) { return s.timestamp < v; });
  auto last = std::upper_bound(imu.begin(), imu.end(), t_end,
                               [](double v, const ImuSample& s) { return v < s.timestamp; });
  if (first != imu.begin()) --first;
  if (last != imu.end()) ++last;
  return {first, last};
}

std::vector<SubFrame> split_scan(const LidarScan& scan, int n, std::span<const ImuSample> imu) {
  if (n < 1) {
    throw std::invalid_argument("split_scan: n must be >= 1");
  }
  for (std::size_t i = 1; i < scan.points.size(); ++i) {
    if (scan.points[i].timestamp < scan.points[i - 1].timestamp) {
      throw std::invalid_argument("split_scan: scan points are not sorted by time");
    }
  }
  if (!(scan.t_end >= scan.t_start)) {
    throw std::invalid_argument("split_scan: scan end precedes start");
  }
  const double width = (scan.t_end - scan.t_start) / n;
  std::vector<SubFrame> frames(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SubFrame& f = frames[static_cast<std::size_t>(i)];
    f.t_start = scan.t_start + width * i;
    f.t_end = i + 1 == n ? scan.t_end : scan.t_start + width * (i + 1);
  }
  for (const TimedPoint& p : scan.points) {
    // Index by boundary comparison so a point sits in exactly the window whose
    // [t_start, t_end) contains it; the final window also takes t_end.
    std::size_t idx = 0;
    if (width > 0.0) {
      idx = static_cast<std::size_t>(std::clamp((p.timestamp - scan.t_start) / width, 0.0,
                                                static_cast<double>(n - 1)));
      while (idx > 0 && p.timestamp < frames[idx].t_start) --idx;
      while (idx + 1 < frames.size() && p.timestamp >= frames[idx + 1].t_start) ++idx;
    }
    frames[idx].points.push_back(p);
  }
  for (SubFrame& f : frames) {
    if (!imu.empty()) {
      f.imu_window = imu_window(imu, f.t_start, f.t_end);
    }
  }
  return frames;
}

LidarScan preprocess(const LidarScan& scan, const PreprocessConfig& cfg) {
  if (cfg.point_skip < 1 || !(cfg.voxel_size > 0.0)) {
    throw std::invalid_argument("preprocess: invalid configuration");
  }
  struct CellHash {
    std::size_t operator()(const Eigen::Vector3i& c) const {
      const auto x = static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.x()));
      const auto y = static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.y()));
      const auto z = static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.z()));
      return static_cast<std::size_t>((x * 73856093ULL) ^ (y * 19349669ULL) ^ (z * 83492791ULL));
    }
  };
  struct CellEq {
    bool operator()(const Eigen::Vector3i& a, const Eigen::Vector3i& b) const { return a == b; }
  };

  LidarScan out;
  out.t_start = scan.t_start;
  out.t_end = scan.t_end;
  std::unordered_set<Eigen::Vector3i, CellHash, CellEq> seen;
  seen.reserve(scan.points.size() / static_cast<std::size_t>(cfg.point_skip) + 1);
  for (std::size_t i = 0; i < scan.points.size(); i += static_cast<std::size_t>(cfg.point_skip)) {
    const TimedPoint& p = scan.points[i];
    const Eigen::Vector3i cell = (p.position / cfg.voxel_size).array().floor().cast<int>();
    if (seen.insert(cell).second) {
      out.points.push_back(p);
    }
  }
  return out;
}

}  // namespace rclio
