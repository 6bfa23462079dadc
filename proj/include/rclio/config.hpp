#pragma once

#include "rclio/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rclio {

/// Malformed or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimSettings {
  std::string scenario = "gentle";
  double duration = 60.0;
  double imu_rate = 200.0;
  bool imu_noise = true;
  double range_noise = 0.01;
  int beams = 16;
  int azimuth_steps = 900;
  double scan_period = 0.1;
  double max_range = 30.0;
  std::string lidar_format = "binary";  // binary | csv
};

struct BenchSettings {
  std::vector<std::string> workloads{"gentle"};
  std::size_t scans = 600;
  int knn_k = 5;
  std::size_t bruteforce_stride = 50;
};

struct AppConfig {
  PipelineConfig pipeline;
  SimSettings sim;
  BenchSettings bench;
  std::uint64_t seed = 0;
};

/// Flat `key = value` entries; `#` starts a comment. Later keys override earlier ones.
std::map<std::string, std::string> parse_key_values(std::string_view text);

/// Applies entries onto defaults and cross-validates. Throws ConfigError on
/// unknown keys, unparsable values or inconsistent settings.
AppConfig config_from_entries(const std::map<std::string, std::string>& entries);
AppConfig parse_config(std::string_view text);
AppConfig load_config(const std::filesystem::path& path);

/// Every recognized key with its current value, in parse_config syntax.
std::string dump_config(const AppConfig& cfg);

}  // namespace rclio
