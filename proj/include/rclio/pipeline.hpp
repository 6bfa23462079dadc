#pragma once

#include "rclio/evaluation.hpp"
#include "rclio/iekf.hpp"
#include "rclio/rcvox_map.hpp"
#include "rclio/smoother.hpp"
#include "rclio/state.hpp"
#include "rclio/subframe.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace rclio {

struct PipelineConfig {
  DividerConfig divider;
  bool divider_enabled = true;
  int forced_subframes = 0;  // > 0 overrides the divider with a fixed count
  ImuNoiseParams imu_noise;
  ExtrinsicCalib extrinsic;
  RcVoxConfig map;
  IekfConfig iekf;
  std::size_t smoother_window_scans = 3;
  bool smoothing_enabled = true;
  double integrity_threshold = 1e3;
  IntegrityDirection integrity_direction = IntegrityDirection::kInformationAbove;
  PreprocessConfig preprocess;
  double init_duration = 0.5;        // s of static data for gravity / gyro bias
  double gravity_magnitude = 9.81;
  double sensor_max_range = 30.0;    // must not exceed map.lidar_range
  int max_failed_subframes = 10;     // consecutive zero-match sub-frames before abort
  double min_point_spacing = 0.1;    // m, points this close to an existing map point are not inserted

  // Initial standard deviations of the error state.
  double init_pos_std = 0.01;
  double init_vel_std = 0.01;
  double init_rot_std = 0.01;
  double init_accel_bias_std = 0.02;
  double init_gyro_bias_std = 0.003;
  double init_gravity_std = 0.01;

  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the first inconsistent field.
  void validate() const;
};

struct SensorData {
  std::vector<ImuSample> imu;
  std::vector<LidarScan> scans;
};

enum class RunStatus { kOk, kTrackingFailure };

struct StageTimings {
  double subframe_ms = 0.0;
  double propagation_update_ms = 0.0;
  double smooth_integrity_ms = 0.0;
  double mapping_ms = 0.0;
  double total_ms = 0.0;
};

struct MetricsReport {
  double ate_rmse = -1.0;      // negative when not evaluated
  double rte_per_10m = -1.0;
  StageTimings mean_per_scan;  // ms per full scan
  std::size_t scans = 0;
  std::size_t subframes = 0;
  std::size_t flagged_insufficient = 0;   // sub-frames with at least one insufficient verdict
  std::size_t dropped_insufficient = 0;   // sub-frames never admitted to the map
  std::size_t inserted_points = 0;
  std::size_t map_points = 0;
  std::size_t map_grids = 0;
  std::size_t map_memory_bytes = 0;
};

/// Per sub-frame bookkeeping kept for diagnostics and tests.
struct SubframeRecord {
  double timestamp = 0.0;
  int subframes_in_scan = 1;
  std::size_t matches = 0;
  bool mapped = false;
  bool flagged_insufficient = false;
  double last_information = 0.0;
  Vec3 filtered_position = Vec3::Zero();
  CovMat final_covariance = CovMat::Zero();
};

struct PipelineResult {
  RunStatus status = RunStatus::kOk;
  std::string message;
  Trajectory trajectory;
  std::vector<SubframeRecord> records;
  MetricsReport metrics;
};

/// Estimates one pose per sub-frame. Never throws on tracking loss; a lost track
/// returns kTrackingFailure with the poses produced so far.
PipelineResult run_pipeline(const PipelineConfig& cfg, const SensorData& data);

}  // namespace rclio
