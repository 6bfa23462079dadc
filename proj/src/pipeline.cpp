#include "rclio/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <optional>
#include <stdexcept>

namespace rclio {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

CovMat initial_covariance(const PipelineConfig& cfg) {
  using I = ErrorIndex;
  CovMat p = CovMat::Zero();
  auto set = [&p](int offset, double sigma) {
    p.block<3, 3>(offset, offset) = sigma * sigma * Mat3::Identity();
  };
  set(I::kPos, cfg.init_pos_std);
  set(I::kVel, cfg.init_vel_std);
  set(I::kRot, cfg.init_rot_std);
  set(I::kAccBias, cfg.init_accel_bias_std);
  set(I::kGyroBias, cfg.init_gyro_bias_std);
  set(I::kGravity, cfg.init_gravity_std);
  return p;
}

StampedPose to_pose(double t, const NominalState& x) {
  return {t, x.position, x.attitude};
}

// Window-node bookkeeping kept in lockstep with SmootherWindow::nodes().
struct NodeInfo {
  std::size_t record = 0;
  std::vector<Vec3> body_points;
};

// Inserts the points that have no map point within `spacing`. Repeated scans of
// a static scene would otherwise fill voxels with near-duplicates whose
// neighborhoods are degenerate for plane fitting.
std::size_t insert_sparse(RcVoxMap& map, const std::vector<Vec3>& world, double spacing) {
  std::vector<Vec3> fresh;
  fresh.reserve(world.size());
  const double limit = spacing * spacing;
  for (const Vec3& w : world) {
    if (spacing > 0.0 && map.contains(w)) {
      const std::vector<Neighbor> nearest = map.knn(w, 1);
      if (!nearest.empty() && nearest.front().squared_distance < limit) continue;
    }
    fresh.push_back(w);
  }
  return map.insert(fresh).inserted;
}

}  // namespace

void PipelineConfig::validate() const {
  divider.validate();
  imu_noise.validate();
  map.validate();
  if (forced_subframes < 0) throw std::invalid_argument("forced_subframes must be >= 0");
  if (smoother_window_scans < 1) throw std::invalid_argument("smoother window must hold >= 1 scan");
  if (!(integrity_threshold >= 0.0)) throw std::invalid_argument("integrity_threshold must be >= 0");
  if (preprocess.point_skip < 1) throw std::invalid_argument("preprocess point_skip must be >= 1");
  if (!(preprocess.voxel_size > 0.0)) throw std::invalid_argument("preprocess voxel_size must be > 0");
  if (!(init_duration > 0.0)) throw std::invalid_argument("init_duration must be > 0");
  if (!(gravity_magnitude > 0.0)) throw std::invalid_argument("gravity_magnitude must be > 0");
  if (!(sensor_max_range > 0.0) || sensor_max_range > map.lidar_range) {
    throw std::invalid_argument("sensor_max_range must be positive and not exceed map lidar_range");
  }
  if (max_failed_subframes < 1) throw std::invalid_argument("max_failed_subframes must be >= 1");
  if (!(min_point_spacing >= 0.0)) throw std::invalid_argument("min_point_spacing must be >= 0");
  if (iekf.knn_k < 3) throw std::invalid_argument("iekf knn_k must be >= 3");
  if (!(iekf.plane_tolerance > 0.0) || !(iekf.max_residual > 0.0) ||
      !(iekf.measurement_variance > 0.0) || !(iekf.convergence_eps > 0.0) ||
      iekf.max_iterations < 1) {
    throw std::invalid_argument("iekf tunables must be positive");
  }
  for (double s : {init_pos_std, init_vel_std, init_rot_std, init_accel_bias_std,
                   init_gyro_bias_std, init_gravity_std}) {
    if (!(s > 0.0)) throw std::invalid_argument("initial standard deviations must be > 0");
  }
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const SensorData& data) {
  cfg.validate();
  if (data.imu.size() < 2) {
    throw std::invalid_argument("run_pipeline: need at least two IMU samples");
  }
  const std::span<const ImuSample> imu(data.imu);

  // Static initialization: gyro bias and gravity direction from the mean.
  const double t_init = imu.front().timestamp + cfg.init_duration;
  Vec3 acc_sum = Vec3::Zero();
  Vec3 gyr_sum = Vec3::Zero();
  std::size_t init_count = 0;
  for (const ImuSample& s : imu) {
    if (s.timestamp > t_init + 1e-9) break;
    acc_sum += s.accel;
    gyr_sum += s.gyro;
    ++init_count;
  }
  if (init_count < 2 || !(acc_sum.norm() > 0.0)) {
    throw std::invalid_argument("run_pipeline: initialization window has too few IMU samples");
  }
  NominalState x;
  x.gyro_bias = gyr_sum / static_cast<double>(init_count);
  x.gravity = -acc_sum.normalized() * cfg.gravity_magnitude;
  CovMat p = initial_covariance(cfg);
  double t_last = t_init;

  PipelineResult out;
  std::optional<RcVoxMap> map;
  SmootherWindow window(cfg.smoother_window_scans);
  std::deque<NodeInfo> infos;
  StageTimings sum;
  int failed_in_row = 0;
  bool aborted = false;

  for (const LidarScan& scan : data.scans) {
    if (scan.t_start < t_init - 1e-9 || scan.points.empty()) continue;
    if (scan.t_end > imu.back().timestamp) break;
    const auto scan_begin = Clock::now();

    auto stage = Clock::now();
    const LidarScan pre = preprocess(scan, cfg.preprocess);
    int n = 1;
    if (cfg.forced_subframes > 0) {
      n = cfg.forced_subframes;
    } else if (cfg.divider_enabled) {
      const std::vector<ImuSample> window_imu = imu_window(imu, scan.t_start, scan.t_end);
      n = subframe_count(compute_motion_stats(window_imu), cfg.divider);
    }
    const std::vector<SubFrame> subs = split_scan(pre, n, {});
    sum.subframe_ms += ms_since(stage);

    stage = Clock::now();
    const bool seeding = !map.has_value();
    std::vector<SmootherNode> current;
    std::vector<NodeInfo> current_info;
    for (const SubFrame& sub : subs) {
      SubframeRecord rec;
      rec.timestamp = sub.t_end;
      rec.subframes_in_scan = n;
      std::vector<TimedPoint> points;
      try {
        PropagationResult prop = propagate_interval(x, p, imu, t_last, sub.t_end, cfg.imu_noise);
        if (!current.empty()) {
          current.back().transitions = std::move(prop.transitions);
        } else if (window.node_count() > 0) {
          window.set_outgoing(std::move(prop.transitions));
        }
        x = prop.state;
        p = prop.covariance;
        // Scan boundaries from t0 + k T can sit an ulp before the previous
        // sub-frame end; clamp into the propagated span.
        std::vector<TimedPoint> raw = sub.points;
        for (TimedPoint& tp : raw) tp.timestamp = std::clamp(tp.timestamp, t_last, sub.t_end);
        points = undistort(raw, prop.spline, sub.t_end, cfg.extrinsic);

        if (seeding) {
          if (!map) map.emplace(cfg.map, x.position);
          std::vector<Vec3> world;
          world.reserve(points.size());
          const Mat3 rot = x.rotation();
          for (const TimedPoint& tp : points) {
            world.push_back(rot * cfg.extrinsic.lidar_to_body(tp.position) + x.position);
          }
          out.metrics.inserted_points += insert_sparse(*map, world, cfg.min_point_spacing);
          rec.mapped = true;
        } else if (!points.empty()) {
          const UpdateResult up = iterated_update(x, p, points, *map, cfg.extrinsic, cfg.iekf);
          rec.matches = up.match_count;
          x = up.state;
          p = up.covariance;
        }
      } catch (const std::invalid_argument& e) {
        out.status = RunStatus::kTrackingFailure;
        out.message = std::string("numerical failure: ") + e.what();
        aborted = true;
        break;
      }
      if (!x.is_finite() || !p.allFinite()) {
        out.status = RunStatus::kTrackingFailure;
        out.message = "non-finite filter state";
        aborted = true;
        break;
      }
      if (!seeding) {
        failed_in_row = rec.matches == 0 ? failed_in_row + 1 : 0;
      }

      rec.filtered_position = x.position;
      rec.final_covariance = p;
      NodeInfo info;
      info.record = out.records.size();
      if (!rec.mapped) {
        info.body_points.reserve(points.size());
        for (const TimedPoint& tp : points) {
          info.body_points.push_back(cfg.extrinsic.lidar_to_body(tp.position));
        }
      }
      out.records.push_back(rec);
      out.trajectory.push_back(to_pose(sub.t_end, x));
      current.push_back({sub.t_end, x, p, {}});
      current_info.push_back(std::move(info));
      t_last = sub.t_end;

      if (failed_in_row >= cfg.max_failed_subframes) {
        out.status = RunStatus::kTrackingFailure;
        out.message = "no map matches for " + std::to_string(failed_in_row) +
                      " consecutive sub-frames";
        aborted = true;
        break;
      }
    }
    sum.propagation_update_ms += ms_since(stage);
    if (aborted) break;

    stage = Clock::now();
    window.add_scan(std::move(current));
    for (NodeInfo& info : current_info) infos.push_back(std::move(info));
    std::vector<SmoothedEstimate> smoothed;
    if (cfg.smoothing_enabled) {
      smoothed = window.smooth();
    } else {
      smoothed.reserve(window.node_count());
      for (const SmootherNode& node : window.nodes()) {
        smoothed.push_back({node.filtered_state, node.filtered_cov, GainMat::Zero()});
      }
    }
    std::vector<std::size_t> admit;
    for (std::size_t i = 0; i < smoothed.size(); ++i) {
      SubframeRecord& rec = out.records[infos[i].record];
      out.trajectory[infos[i].record] = to_pose(rec.timestamp, smoothed[i].state);
      rec.final_covariance = smoothed[i].covariance;
      if (rec.mapped) continue;
      const IntegrityVerdict v =
          check_integrity(smoothed[i].covariance, cfg.integrity_threshold, cfg.integrity_direction);
      rec.last_information = v.min_eigenvalue;
      if (v.sufficient) {
        admit.push_back(i);
      } else {
        rec.flagged_insufficient = true;
      }
    }
    sum.smooth_integrity_ms += ms_since(stage);

    stage = Clock::now();
    map->update_origin(x.position);
    std::vector<Vec3> world;
    for (std::size_t i : admit) {
      const NominalState& s = smoothed[i].state;
      const Mat3 rot = s.rotation();
      world.clear();
      world.reserve(infos[i].body_points.size());
      for (const Vec3& b : infos[i].body_points) world.push_back(rot * b + s.position);
      out.metrics.inserted_points += insert_sparse(*map, world, cfg.min_point_spacing);
      out.records[infos[i].record].mapped = true;
      infos[i].body_points = {};
    }
    const std::size_t expired = window.expired_count();
    for (std::size_t i = 0; i < expired; ++i) {
      if (!out.records[infos.front().record].mapped) ++out.metrics.dropped_insufficient;
      infos.pop_front();
    }
    window.drop_front(expired);
    sum.mapping_ms += ms_since(stage);

    sum.total_ms += ms_since(scan_begin);
    ++out.metrics.scans;
  }

  if (aborted) {
    spdlog::warn("pipeline aborted: {}", out.message);
  }
  for (const NodeInfo& info : infos) {
    if (!out.records[info.record].mapped) ++out.metrics.dropped_insufficient;
  }

  MetricsReport& m = out.metrics;
  m.subframes = out.records.size();
  for (const SubframeRecord& r : out.records) {
    if (r.flagged_insufficient) ++m.flagged_insufficient;
  }
  if (m.scans > 0) {
    const double n = static_cast<double>(m.scans);
    m.mean_per_scan = {sum.subframe_ms / n, sum.propagation_update_ms / n,
                       sum.smooth_integrity_ms / n, sum.mapping_ms / n, sum.total_ms / n};
  }
  if (map) {
    m.map_points = map->point_count();
    m.map_grids = map->occupied_grids();
    m.map_memory_bytes = map->memory_bytes();
  }
  return out;
}

}  // namespace rclio
