#include "rclio/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace rclio {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  const long long n = to_int(key, v);
  if (n < 0) throw ConfigError("config: " + key + " must be non-negative");
  return static_cast<std::size_t>(n);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: " + key + " expects true/false, got '" + v + "'");
}

std::vector<double> to_doubles(const std::string& key, const std::string& v, std::size_t n) {
  std::istringstream in(v);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) out.push_back(to_double(key, tok));
  if (out.size() != n) {
    throw ConfigError("config: " + key + " expects " + std::to_string(n) + " numbers");
  }
  return out;
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

const char* direction_name(IntegrityDirection d) {
  switch (d) {
    case IntegrityDirection::kInformationAbove:
      return "information_above";
    case IntegrityDirection::kCovarianceBelow:
      return "covariance_below";
    case IntegrityDirection::kCovarianceAbove:
      return "covariance_above";
  }
  return "information_above";
}

IntegrityDirection to_direction(const std::string& key, const std::string& v) {
  for (auto d : {IntegrityDirection::kInformationAbove, IntegrityDirection::kCovarianceBelow,
                 IntegrityDirection::kCovarianceAbove}) {
    if (v == direction_name(d)) return d;
  }
  throw ConfigError("config: " + key + " must be information_above, covariance_below or covariance_above");
}

using Setter = std::function<void(AppConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto num = [&t](const std::string& key, auto field) {
      t[key] = [field](AppConfig& c, const std::string& k, const std::string& v) {
        field(c) = to_double(k, v);
      };
    };
    auto integer = [&t](const std::string& key, auto field) {
      t[key] = [field](AppConfig& c, const std::string& k, const std::string& v) {
        field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(to_int(k, v));
      };
    };
    auto flag = [&t](const std::string& key, auto field) {
      t[key] = [field](AppConfig& c, const std::string& k, const std::string& v) {
        field(c) = to_bool(k, v);
      };
    };

    t["seed"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      c.seed = static_cast<std::uint64_t>(to_size(k, v));
    };
    flag("divider.enabled", [](AppConfig& c) -> bool& { return c.pipeline.divider_enabled; });
    num("divider.sigma_acc_max", [](AppConfig& c) -> double& { return c.pipeline.divider.sigma_acc_max; });
    num("divider.sigma_gyr_max", [](AppConfig& c) -> double& { return c.pipeline.divider.sigma_gyr_max; });
    integer("divider.n_max", [](AppConfig& c) -> int& { return c.pipeline.divider.n_max; });
    integer("divider.forced_n", [](AppConfig& c) -> int& { return c.pipeline.forced_subframes; });

    num("imu.accel_noise", [](AppConfig& c) -> double& { return c.pipeline.imu_noise.accel_noise_density; });
    num("imu.gyro_noise", [](AppConfig& c) -> double& { return c.pipeline.imu_noise.gyro_noise_density; });
    num("imu.accel_bias_walk", [](AppConfig& c) -> double& { return c.pipeline.imu_noise.accel_bias_walk; });
    num("imu.gyro_bias_walk", [](AppConfig& c) -> double& { return c.pipeline.imu_noise.gyro_bias_walk; });

    t["extrinsic.translation"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      const auto d = to_doubles(k, v, 3);
      c.pipeline.extrinsic.translation_lidar_to_imu = Vec3(d[0], d[1], d[2]);
    };
    t["extrinsic.rotation"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      const auto d = to_doubles(k, v, 4);
      const Quat q(d[3], d[0], d[1], d[2]);
      if (!(q.norm() > 0.0)) throw ConfigError("config: " + k + " must be a non-zero quaternion");
      c.pipeline.extrinsic.rotation_lidar_to_imu = q.normalized();
    };

    num("map.lidar_range", [](AppConfig& c) -> double& { return c.pipeline.map.lidar_range; });
    num("map.lambda", [](AppConfig& c) -> double& { return c.pipeline.map.lambda; });
    num("map.grid_size", [](AppConfig& c) -> double& { return c.pipeline.map.grid_size; });
    num("map.voxel_size", [](AppConfig& c) -> double& { return c.pipeline.map.voxel_size; });
    integer("map.neighbor_mode", [](AppConfig& c) -> int& { return c.pipeline.map.neighbor_mode; });
    integer("map.max_points_per_voxel", [](AppConfig& c) -> int& { return c.pipeline.map.max_points_per_voxel; });

    integer("iekf.knn_k", [](AppConfig& c) -> int& { return c.pipeline.iekf.knn_k; });
    num("iekf.plane_tolerance", [](AppConfig& c) -> double& { return c.pipeline.iekf.plane_tolerance; });
    num("iekf.max_residual", [](AppConfig& c) -> double& { return c.pipeline.iekf.max_residual; });
    t["iekf.measurement_std"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      const double s = to_double(k, v);
      c.pipeline.iekf.measurement_variance = s * s;
    };
    num("iekf.convergence_eps", [](AppConfig& c) -> double& { return c.pipeline.iekf.convergence_eps; });
    integer("iekf.max_iterations", [](AppConfig& c) -> int& { return c.pipeline.iekf.max_iterations; });

    flag("smoother.enabled", [](AppConfig& c) -> bool& { return c.pipeline.smoothing_enabled; });
    t["smoother.window_scans"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      c.pipeline.smoother_window_scans = to_size(k, v);
    };
    num("integrity.threshold", [](AppConfig& c) -> double& { return c.pipeline.integrity_threshold; });
    t["integrity.direction"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      c.pipeline.integrity_direction = to_direction(k, v);
    };

    integer("preprocess.point_skip", [](AppConfig& c) -> int& { return c.pipeline.preprocess.point_skip; });
    num("preprocess.voxel_size", [](AppConfig& c) -> double& { return c.pipeline.preprocess.voxel_size; });
    num("init.duration", [](AppConfig& c) -> double& { return c.pipeline.init_duration; });
    num("init.gravity", [](AppConfig& c) -> double& { return c.pipeline.gravity_magnitude; });
    num("init.pos_std", [](AppConfig& c) -> double& { return c.pipeline.init_pos_std; });
    num("init.vel_std", [](AppConfig& c) -> double& { return c.pipeline.init_vel_std; });
    num("init.rot_std", [](AppConfig& c) -> double& { return c.pipeline.init_rot_std; });
    num("init.accel_bias_std", [](AppConfig& c) -> double& { return c.pipeline.init_accel_bias_std; });
    num("init.gyro_bias_std", [](AppConfig& c) -> double& { return c.pipeline.init_gyro_bias_std; });
    num("init.gravity_std", [](AppConfig& c) -> double& { return c.pipeline.init_gravity_std; });
    num("pipeline.sensor_max_range", [](AppConfig& c) -> double& { return c.pipeline.sensor_max_range; });
    integer("pipeline.max_failed_subframes", [](AppConfig& c) -> int& { return c.pipeline.max_failed_subframes; });
    num("pipeline.min_point_spacing", [](AppConfig& c) -> double& { return c.pipeline.min_point_spacing; });

    t["sim.scenario"] = [](AppConfig& c, const std::string&, const std::string& v) { c.sim.scenario = v; };
    num("sim.duration", [](AppConfig& c) -> double& { return c.sim.duration; });
    num("sim.imu_rate", [](AppConfig& c) -> double& { return c.sim.imu_rate; });
    flag("sim.imu_noise", [](AppConfig& c) -> bool& { return c.sim.imu_noise; });
    num("sim.range_noise", [](AppConfig& c) -> double& { return c.sim.range_noise; });
    integer("sim.beams", [](AppConfig& c) -> int& { return c.sim.beams; });
    integer("sim.azimuth_steps", [](AppConfig& c) -> int& { return c.sim.azimuth_steps; });
    num("sim.scan_period", [](AppConfig& c) -> double& { return c.sim.scan_period; });
    num("sim.max_range", [](AppConfig& c) -> double& { return c.sim.max_range; });
    t["sim.lidar_format"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      if (v != "binary" && v != "csv") throw ConfigError("config: " + k + " must be binary or csv");
      c.sim.lidar_format = v;
    };

    t["bench.workloads"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      c.bench.workloads = to_list(v);
      if (c.bench.workloads.empty()) throw ConfigError("config: " + k + " must list a workload");
    };
    t["bench.scans"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      c.bench.scans = to_size(k, v);
    };
    integer("bench.knn_k", [](AppConfig& c) -> int& { return c.bench.knn_k; });
    t["bench.bruteforce_stride"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      c.bench.bruteforce_stride = to_size(k, v);
    };
    return t;
  }();
  return table;
}

void cross_validate(const AppConfig& c) {
  try {
    c.pipeline.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const SimSettings& s = c.sim;
  if (!(s.duration > 0.0) || !(s.imu_rate > 0.0) || !(s.scan_period > 0.0) ||
      !(s.max_range > 0.0) || s.beams < 1 || s.azimuth_steps < 1 || s.range_noise < 0.0) {
    throw ConfigError("config: sim settings must be positive");
  }
  if (s.max_range > c.pipeline.map.lidar_range) {
    throw ConfigError("config: sim.max_range exceeds map.lidar_range");
  }
  if (c.bench.scans < 1 || c.bench.knn_k < 1 || c.bench.bruteforce_stride < 1) {
    throw ConfigError("config: bench settings must be positive");
  }
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string cleaned = trim(line);
    if (cleaned.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = cleaned.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(cleaned).substr(0, eq));
    const std::string value = trim(std::string_view(cleaned).substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    out[key] = value;
    if (end == text.size()) break;
  }
  return out;
}

AppConfig config_from_entries(const std::map<std::string, std::string>& entries) {
  AppConfig cfg;
  const auto& table = setters();
  for (const auto& [key, value] : entries) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second(cfg, key, value);
  }
  cfg.pipeline.seed = cfg.seed;
  cross_validate(cfg);
  return cfg;
}

AppConfig parse_config(std::string_view text) {
  return config_from_entries(parse_key_values(text));
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const AppConfig& c) {
  const PipelineConfig& p = c.pipeline;
  std::ostringstream o;
  auto kv = [&o](const std::string& k, const std::string& v) { o << k << " = " << v << '\n'; };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  kv("seed", std::to_string(c.seed));
  kv("divider.enabled", b(p.divider_enabled));
  kv("divider.sigma_acc_max", fmt_double(p.divider.sigma_acc_max));
  kv("divider.sigma_gyr_max", fmt_double(p.divider.sigma_gyr_max));
  kv("divider.n_max", std::to_string(p.divider.n_max));
  kv("divider.forced_n", std::to_string(p.forced_subframes));
  kv("imu.accel_noise", fmt_double(p.imu_noise.accel_noise_density));
  kv("imu.gyro_noise", fmt_double(p.imu_noise.gyro_noise_density));
  kv("imu.accel_bias_walk", fmt_double(p.imu_noise.accel_bias_walk));
  kv("imu.gyro_bias_walk", fmt_double(p.imu_noise.gyro_bias_walk));
  const Vec3& t = p.extrinsic.translation_lidar_to_imu;
  kv("extrinsic.translation", fmt_double(t.x()) + " " + fmt_double(t.y()) + " " + fmt_double(t.z()));
  const Quat& q = p.extrinsic.rotation_lidar_to_imu;
  kv("extrinsic.rotation", fmt_double(q.x()) + " " + fmt_double(q.y()) + " " + fmt_double(q.z()) +
                               " " + fmt_double(q.w()));
  kv("map.lidar_range", fmt_double(p.map.lidar_range));
  kv("map.lambda", fmt_double(p.map.lambda));
  kv("map.grid_size", fmt_double(p.map.grid_size));
  kv("map.voxel_size", fmt_double(p.map.voxel_size));
  kv("map.neighbor_mode", std::to_string(p.map.neighbor_mode));
  kv("map.max_points_per_voxel", std::to_string(p.map.max_points_per_voxel));
  kv("iekf.knn_k", std::to_string(p.iekf.knn_k));
  kv("iekf.plane_tolerance", fmt_double(p.iekf.plane_tolerance));
  kv("iekf.max_residual", fmt_double(p.iekf.max_residual));
  kv("iekf.measurement_std", fmt_double(std::sqrt(p.iekf.measurement_variance)));
  kv("iekf.convergence_eps", fmt_double(p.iekf.convergence_eps));
  kv("iekf.max_iterations", std::to_string(p.iekf.max_iterations));
  kv("smoother.enabled", b(p.smoothing_enabled));
  kv("smoother.window_scans", std::to_string(p.smoother_window_scans));
  kv("integrity.threshold", fmt_double(p.integrity_threshold));
  kv("integrity.direction", direction_name(p.integrity_direction));
  kv("preprocess.point_skip", std::to_string(p.preprocess.point_skip));
  kv("preprocess.voxel_size", fmt_double(p.preprocess.voxel_size));
  kv("init.duration", fmt_double(p.init_duration));
  kv("init.gravity", fmt_double(p.gravity_magnitude));
  kv("init.pos_std", fmt_double(p.init_pos_std));
  kv("init.vel_std", fmt_double(p.init_vel_std));
  kv("init.rot_std", fmt_double(p.init_rot_std));
  kv("init.accel_bias_std", fmt_double(p.init_accel_bias_std));
  kv("init.gyro_bias_std", fmt_double(p.init_gyro_bias_std));
  kv("init.gravity_std", fmt_double(p.init_gravity_std));
  kv("pipeline.sensor_max_range", fmt_double(p.sensor_max_range));
  kv("pipeline.max_failed_subframes", std::to_string(p.max_failed_subframes));
  kv("pipeline.min_point_spacing", fmt_double(p.min_point_spacing));
  kv("sim.scenario", c.sim.scenario);
  kv("sim.duration", fmt_double(c.sim.duration));
  kv("sim.imu_rate", fmt_double(c.sim.imu_rate));
  kv("sim.imu_noise", b(c.sim.imu_noise));
  kv("sim.range_noise", fmt_double(c.sim.range_noise));
  kv("sim.beams", std::to_string(c.sim.beams));
  kv("sim.azimuth_steps", std::to_string(c.sim.azimuth_steps));
  kv("sim.scan_period", fmt_double(c.sim.scan_period));
  kv("sim.max_range", fmt_double(c.sim.max_range));
  kv("sim.lidar_format", c.sim.lidar_format);
  std::string workloads;
  for (const std::string& w : c.bench.workloads) workloads += (workloads.empty() ? "" : ",") + w;
  kv("bench.workloads", workloads);
  kv("bench.scans", std::to_string(c.bench.scans));
  kv("bench.knn_k", std::to_string(c.bench.knn_k));
  kv("bench.bruteforce_stride", std::to_string(c.bench.bruteforce_stride));
  return o.str();
}

}  // namespace rclio
