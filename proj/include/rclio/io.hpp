#pragma once

#include "rclio/evaluation.hpp"
#include "rclio/pipeline.hpp"
#include "rclio/sim.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace rclio::io {

/// Missing or malformed data file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Header `t,ax,ay,az,gx,gy,gz`, one sample per line.
void write_imu_csv(const std::filesystem::path& path, const std::vector<ImuSample>& imu);
std::vector<ImuSample> read_imu_csv(const std::filesystem::path& path);

/// Record stream of 24-byte little-endian records: f64 t, f32 x, y, z, f32 intensity.
void write_lidar_binary(const std::filesystem::path& path, const std::vector<LidarScan>& scans);
/// Header `t,x,y,z,intensity`, same fields as the binary records.
void write_lidar_csv(const std::filesystem::path& path, const std::vector<LidarScan>& scans);

/// Reads either format (chosen by the `.bin` / `.csv` extension) and groups the
/// points into scans [t0 + k T, t0 + (k + 1) T).
std::vector<LidarScan> read_lidar(const std::filesystem::path& path, double scan_period,
                                  double t0);

/// `timestamp tx ty tz qx qy qz qw` per line.
void write_tum(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_tum(const std::filesystem::path& path);

Trajectory ground_truth_trajectory(const sim::GroundTruth& gt);

/// `sequence.meta` contents of a sequence directory.
struct SequenceMeta {
  double scan_period = 0.1;
  double t0 = 0.0;
  std::string lidar_file = "lidar.bin";
  std::string imu_file = "imu.csv";
  std::string ground_truth_file = "ground_truth.txt";
  std::string scenario;
  std::uint64_t seed = 0;
};

/// Writes imu.csv, lidar.bin|lidar.csv, ground_truth.txt and sequence.meta.
void write_sequence(const std::filesystem::path& dir, const sim::SimSequence& seq,
                    const std::string& scenario, bool lidar_csv);
SequenceMeta read_meta(const std::filesystem::path& dir);
SensorData read_sequence(const std::filesystem::path& dir, SequenceMeta* meta = nullptr);

}  // namespace rclio::io
