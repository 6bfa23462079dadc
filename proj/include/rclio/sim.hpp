#pragma once

#include "rclio/state.hpp"
#include "rclio/subframe.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace rclio::sim {

/// Bounded planar patch: points x with normal . x = offset inside the
/// rectangle center +- half_u * axis_u +- half_v * axis_v.
struct Plane {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
  Vec3 center = Vec3::Zero();
  Vec3 axis_u = Vec3::UnitX();
  Vec3 axis_v = Vec3::UnitY();
  double half_u = 1.0;
  double half_v = 1.0;

  static Plane rectangle(const Vec3& center, const Vec3& axis_u, double half_u,
                         const Vec3& axis_v, double half_v);
};

struct WorldModel {
  std::vector<Plane> planes;
  std::uint64_t seed = 0;
};

/// Closed 20 x 14 x 4 m room with a central pillar and two cabinets.
WorldModel room_world();

enum class DegenerateKind { kCorridor, kOpenPlane };
/// corridor: two parallel walls at y = +-2 (unconstrained along x);
/// open_plane: a single ground plane (unconstrained x, y, yaw).
WorldModel degenerate_scene(DegenerateKind kind);

struct Kinematics {
  Vec3 velocity = Vec3::Zero();      // world frame
  Vec3 acceleration = Vec3::Zero();  // world frame
  Vec3 angular_velocity = Vec3::Zero();  // body frame
};

struct TrajectorySegment {
  double duration = 0.0;
  std::function<Kinematics(double)> motion;  // argument: time since segment start
};

enum class MotionLabel { kGentle, kAggressive };

struct TrajectoryProfile {
  std::vector<TrajectorySegment> segments;
  MotionLabel label = MotionLabel::kGentle;
  Vec3 start_position = Vec3::Zero();
  Quat start_attitude = Quat::Identity();

  double duration() const;
  Kinematics at(double t) const;
};

TrajectoryProfile stationary_profile(double duration, const Vec3& position = Vec3(3, -2, 1.5));
/// Elliptical loop around the room's pillar with a smooth start from rest.
TrajectoryProfile gentle_room_loop(double duration = 60.0);
/// Loop with fast yaw oscillation peaking at `peak_rate` plus roll/pitch shake.
TrajectoryProfile aggressive_profile(double duration = 20.0, double peak_rate = 20.0);
/// Constant yaw rate from t = 0 at a fixed position.
TrajectoryProfile spin_in_place(double rate, double duration, const Vec3& position = Vec3::Zero());
/// 1 s static, 2 s ramp to `rate`, then constant yaw rate for the remaining time.
TrajectoryProfile spin_with_lead_in(double rate, double duration, const Vec3& position);
/// Walk along +x through the corridor scene with a slight weave.
TrajectoryProfile corridor_walk(double duration = 20.0);

struct LidarModel {
  int beams = 16;
  double min_elevation_deg = -15.0;
  double max_elevation_deg = 15.0;
  int azimuth_steps = 900;
  double scan_period = 0.1;
  double min_range = 0.5;
  double max_range = 30.0;
  double range_noise = 0.01;
};

struct ImuModel {
  double rate = 200.0;
  ImuNoiseParams noise;
  bool noise_enabled = true;
  Vec3 accel_bias = Vec3(0.01, -0.01, 0.005);
  Vec3 gyro_bias = Vec3(0.002, -0.001, 0.0015);
};

struct SensorConfig {
  LidarModel lidar;
  ImuModel imu;
  ExtrinsicCalib extrinsic;
  double gravity = 9.81;
  double ground_truth_rate = 1000.0;
};

struct GroundTruthSample {
  double timestamp = 0.0;
  Vec3 position = Vec3::Zero();
  Quat attitude = Quat::Identity();
  Vec3 velocity = Vec3::Zero();
};

/// Dense true trajectory with Hermite (position) / slerp (attitude) interpolation.
class GroundTruth {
 public:
  GroundTruth() = default;
  explicit GroundTruth(std::vector<GroundTruthSample> samples) : samples_(std::move(samples)) {}

  const std::vector<GroundTruthSample>& samples() const { return samples_; }
  double start_time() const { return samples_.front().timestamp; }
  double end_time() const { return samples_.back().timestamp; }
  /// Throws std::out_of_range outside [start_time, end_time].
  void pose_at(double t, Vec3& position, Quat& attitude) const;

 private:
  std::vector<GroundTruthSample> samples_;
};

struct SimSequence {
  std::vector<ImuSample> imu;
  std::vector<LidarScan> scans;
  GroundTruth ground_truth;
  SensorConfig sensors;
  std::uint64_t seed = 0;
};

/// Integrates the profile at the ground-truth rate (RK4).
GroundTruth integrate_profile(const TrajectoryProfile& profile, double rate);

/// Distance along the ray from `origin` to the nearest plane hit, or a negative value.
double cast_ray(const WorldModel& world, const Vec3& origin, const Vec3& direction,
                double min_range, double max_range);

SimSequence generate(const WorldModel& world, const TrajectoryProfile& profile,
                     const SensorConfig& sensors, std::uint64_t seed);

/// Named scenario used by the CLI: "stationary", "gentle", "aggressive", "corridor", "spin".
struct Scenario {
  WorldModel world;
  TrajectoryProfile profile;
};
Scenario make_scenario(const std::string& name, double duration);

}  // namespace rclio::sim
