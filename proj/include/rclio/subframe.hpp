#pragma once

#include "rclio/imu_propagation.hpp"
#include "rclio/state.hpp"

#include <span>
#include <vector>

namespace rclio {

/// One full lidar sweep; points are sorted by timestamp and lie in [t_start, t_end].
struct LidarScan {
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<TimedPoint> points;
};

struct MotionStats {
  Vec3 sigma_acc = Vec3::Zero();
  Vec3 sigma_gyr = Vec3::Zero();
};

struct DividerConfig {
  double sigma_acc_max = 3.0;  // m/s^2
  double sigma_gyr_max = 6.0;  // rad/s
  int n_max = 4;

  void validate() const;
};

struct SubFrame {
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<TimedPoint> points;
  std::vector<ImuSample> imu_window;
};

struct PreprocessConfig {
  int point_skip = 4;
  double voxel_size = 0.5;
};

/// Per-axis population standard deviation of the raw measurements.
MotionStats compute_motion_stats(std::span<const ImuSample> imu_window);

/// ceil(n_max * max(acc ratio, gyr ratio)) clamped to [1, n_max].
int subframe_count(const MotionStats& stats, const DividerConfig& cfg);

/// IMU samples inside [t_start, t_end] plus one bracketing sample on each side.
std::vector<ImuSample> imu_window(std::span<const ImuSample> imu, double t_start, double t_end);

/// Splits the scan into n equal-duration windows; the last window is closed.
std::vector<SubFrame> split_scan(const LidarScan& scan, int n, std::span<const ImuSample> imu);

/// Keeps every `point_skip`-th point, then the first point seen in each voxel cell.
LidarScan preprocess(const LidarScan& scan, const PreprocessConfig& cfg = {});

}  // namespace rclio
