#include "rclio/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace rclio::sim {

namespace {

constexpr double kPi = std::numbers::pi;

// Smoothstep speed ramp over [0, t_ramp] and its integral.
double ramp(double tau, double t_ramp) {
  if (tau >= t_ramp) return 1.0;
  if (tau <= 0.0) return 0.0;
  const double u = tau / t_ramp;
  return u * u * (3.0 - 2.0 * u);
}

double ramp_integral(double tau, double t_ramp) {
  if (tau <= 0.0) return 0.0;
  if (tau >= t_ramp) return 0.5 * t_ramp + (tau - t_ramp);
  const double u = tau / t_ramp;
  return t_ramp * (u * u * u - 0.5 * u * u * u * u);
}

// Velocity and acceleration of an analytic path by 5-point central differences.
Kinematics from_path(const std::function<Vec3(double)>& path, double tau, const Vec3& omega) {
  constexpr double h = 1e-3;
  const Vec3 pm2 = path(tau - 2.0 * h);
  const Vec3 pm1 = path(tau - h);
  const Vec3 p0 = path(tau);
  const Vec3 pp1 = path(tau + h);
  const Vec3 pp2 = path(tau + 2.0 * h);
  Kinematics k;
  k.velocity = (pm2 - 8.0 * pm1 + 8.0 * pp1 - pp2) / (12.0 * h);
  k.acceleration = (-pm2 + 16.0 * pm1 - 30.0 * p0 + 16.0 * pp1 - pp2) / (12.0 * h * h);
  k.angular_velocity = omega;
  return k;
}

TrajectorySegment static_segment(double duration) {
  return {duration, [](double) { return Kinematics{}; }};
}

void add_box(WorldModel& world, const Vec3& lo, const Vec3& hi) {
  const Vec3 c = 0.5 * (lo + hi);
  const Vec3 h = 0.5 * (hi - lo);
  const Vec3 ex = Vec3::UnitX();
  const Vec3 ey = Vec3::UnitY();
  const Vec3 ez = Vec3::UnitZ();
  world.planes.push_back(Plane::rectangle(c + Vec3(h.x(), 0, 0), ey, h.y(), ez, h.z()));
  world.planes.push_back(Plane::rectangle(c - Vec3(h.x(), 0, 0), ey, h.y(), ez, h.z()));
  world.planes.push_back(Plane::rectangle(c + Vec3(0, h.y(), 0), ex, h.x(), ez, h.z()));
  world.planes.push_back(Plane::rectangle(c - Vec3(0, h.y(), 0), ex, h.x(), ez, h.z()));
  world.planes.push_back(Plane::rectangle(c + Vec3(0, 0, h.z()), ex, h.x(), ey, h.y()));
  world.planes.push_back(Plane::rectangle(c - Vec3(0, 0, h.z()), ex, h.x(), ey, h.y()));
}

Eigen::Vector4d quat_rate(const Eigen::Vector4d& q, const Vec3& omega) {
  const Quat qq(q(3), q(0), q(1), q(2));
  const Quat dq = qq * Quat(0.0, omega.x(), omega.y(), omega.z());
  return 0.5 * dq.coeffs();
}

}  // namespace

Plane Plane::rectangle(const Vec3& center, const Vec3& axis_u, double half_u, const Vec3& axis_v,
                       double half_v) {
  Plane p;
  p.center = center;
  p.axis_u = axis_u.normalized();
  p.axis_v = axis_v.normalized();
  p.normal = p.axis_u.cross(p.axis_v).normalized();
  p.offset = p.normal.dot(center);
  p.half_u = half_u;
  p.half_v = half_v;
  return p;
}

WorldModel room_world() {
  WorldModel world;
  const Vec3 ex = Vec3::UnitX();
  const Vec3 ey = Vec3::UnitY();
  const Vec3 ez = Vec3::UnitZ();
  // Floor, ceiling and four walls of a 20 x 14 x 4 m room.
  world.planes.push_back(Plane::rectangle(Vec3(0, 0, 0), ex, 10.0, ey, 7.0));
  world.planes.push_back(Plane::rectangle(Vec3(0, 0, 4), ex, 10.0, ey, 7.0));
  world.planes.push_back(Plane::rectangle(Vec3(10, 0, 2), ey, 7.0, ez, 2.0));
  world.planes.push_back(Plane::rectangle(Vec3(-10, 0, 2), ey, 7.0, ez, 2.0));
  world.planes.push_back(Plane::rectangle(Vec3(0, 7, 2), ex, 10.0, ez, 2.0));
  world.planes.push_back(Plane::rectangle(Vec3(0, -7, 2), ex, 10.0, ez, 2.0));
  add_box(world, Vec3(-0.6, -0.6, 0.0), Vec3(0.6, 0.6, 4.0));
  add_box(world, Vec3(7.5, 4.0, 0.0), Vec3(9.5, 6.5, 1.6));
  add_box(world, Vec3(-9.0, -6.5, 0.0), Vec3(-6.0, -5.0, 2.2));
  // A slanted panel so not every surface is axis-aligned.
  world.planes.push_back(Plane::rectangle(Vec3(-8.5, 4.0, 2.0), Vec3(1, 1, 0), 1.5,
                                          Vec3(0.3, 0, 1), 1.0));
  return world;
}

WorldModel degenerate_scene(DegenerateKind kind) {
  WorldModel world;
  const Vec3 ex = Vec3::UnitX();
  const Vec3 ey = Vec3::UnitY();
  const Vec3 ez = Vec3::UnitZ();
  switch (kind) {
    case DegenerateKind::kCorridor:
      world.planes.push_back(Plane::rectangle(Vec3(0, 2, 1.5), ex, 200.0, ez, 2.5));
      world.planes.push_back(Plane::rectangle(Vec3(0, -2, 1.5), ex, 200.0, ez, 2.5));
      break;
    case DegenerateKind::kOpenPlane:
      world.planes.push_back(Plane::rectangle(Vec3(0, 0, 0), ex, 200.0, ey, 200.0));
      break;
  }
  return world;
}

double TrajectoryProfile::duration() const {
  double d = 0.0;
  for (const TrajectorySegment& s : segments) d += s.duration;
  return d;
}

Kinematics TrajectoryProfile::at(double t) const {
  if (segments.empty()) return {};
  double start = 0.0;
  for (const TrajectorySegment& s : segments) {
    if (t < start + s.duration) return s.motion(std::max(0.0, t - start));
    start += s.duration;
  }
  const TrajectorySegment& last = segments.back();
  return last.motion(last.duration);
}

TrajectoryProfile stationary_profile(double duration, const Vec3& position) {
  TrajectoryProfile profile;
  profile.segments.push_back(static_segment(duration));
  profile.start_position = position;
  return profile;
}

TrajectoryProfile gentle_room_loop(double duration) {
  constexpr double kStatic = 1.0;
  constexpr double kRamp = 3.0;
  constexpr double a = 5.0;
  constexpr double b = 3.5;
  constexpr double h = 0.2;
  const double w = 2.0 * kPi / 20.0;

  TrajectoryProfile profile;
  profile.label = MotionLabel::kGentle;
  profile.start_position = Vec3(a, 0.0, 1.5);
  profile.segments.push_back(static_segment(kStatic));
  auto path = [=](double tau) {
    const double th = w * ramp_integral(tau, kRamp);
    return Vec3(a * std::cos(th), b * std::sin(th), 1.5 + h * std::sin(2.0 * th));
  };
  profile.segments.push_back({std::max(0.0, duration - kStatic), [=](double tau) {
                                const double r = ramp(tau, kRamp);
                                const Vec3 omega(0.15 * r * std::sin(1.3 * tau),
                                                 0.12 * r * std::sin(0.9 * tau), w * r);
                                return from_path(path, tau, omega);
                              }});
  return profile;
}

TrajectoryProfile aggressive_profile(double duration, double peak_rate) {
  constexpr double kStatic = 1.0;
  constexpr double kRamp = 2.0;
  constexpr double a = 3.0;
  constexpr double b = 2.0;
  const double w = 2.0 * kPi / 15.0;

  TrajectoryProfile profile;
  profile.label = MotionLabel::kAggressive;
  profile.start_position = Vec3(a, 0.0, 1.5);
  profile.segments.push_back(static_segment(kStatic));
  auto path = [=](double tau) {
    const double th = w * ramp_integral(tau, kRamp);
    return Vec3(a * std::cos(th), b * std::sin(th), 1.5 + 0.3 * std::sin(3.0 * th));
  };
  profile.segments.push_back({std::max(0.0, duration - kStatic), [=](double tau) {
                                const double r = ramp(tau, kRamp);
                                const Vec3 omega(
                                    0.3 * peak_rate * r * std::sin(2.0 * kPi * 2.1 * tau),
                                    0.25 * peak_rate * r * std::sin(2.0 * kPi * 1.7 * tau + 0.5),
                                    r * (w + peak_rate * std::sin(2.0 * kPi * 1.5 * tau)));
                                return from_path(path, tau, omega);
                              }});
  return profile;
}

TrajectoryProfile spin_in_place(double rate, double duration, const Vec3& position) {
  TrajectoryProfile profile;
  profile.label = MotionLabel::kAggressive;
  profile.start_position = position;
  profile.segments.push_back({duration, [rate](double) {
                                Kinematics k;
                                k.angular_velocity = Vec3(0.0, 0.0, rate);
                                return k;
                              }});
  return profile;
}

TrajectoryProfile spin_with_lead_in(double rate, double duration, const Vec3& position) {
  constexpr double kStatic = 1.0;
  constexpr double kRamp = 2.0;
  TrajectoryProfile profile;
  profile.label = MotionLabel::kAggressive;
  profile.start_position = position;
  profile.segments.push_back(static_segment(std::min(kStatic, duration)));
  profile.segments.push_back({std::max(0.0, duration - kStatic), [=](double tau) {
                                Kinematics k;
                                k.angular_velocity = Vec3(0.0, 0.0, rate * ramp(tau, kRamp));
                                return k;
                              }});
  return profile;
}

TrajectoryProfile corridor_walk(double duration) {
  constexpr double kStatic = 1.0;
  constexpr double kRamp = 2.0;
  constexpr double kSpeed = 1.0;

  TrajectoryProfile profile;
  profile.label = MotionLabel::kGentle;
  profile.start_position = Vec3(-10.0, 0.0, 1.5);
  profile.segments.push_back(static_segment(kStatic));
  auto path = [=](double tau) {
    const double s = kSpeed * ramp_integral(tau, kRamp);
    return Vec3(s, 0.3 * std::sin(0.6 * s), 0.05 * std::sin(1.8 * s));
  };
  profile.segments.push_back({std::max(0.0, duration - kStatic), [=](double tau) {
                                const double r = ramp(tau, kRamp);
                                const double s = kSpeed * ramp_integral(tau, kRamp);
                                const Vec3 omega(0.03 * r * std::sin(2.0 * tau),
                                                 0.02 * r * std::sin(1.5 * tau),
                                                 0.15 * r * std::cos(0.6 * s));
                                return from_path(path, tau, omega);
                              }});
  return profile;
}

void GroundTruth::pose_at(double t, Vec3& position, Quat& attitude) const {
  if (samples_.empty() || t < samples_.front().timestamp - 1e-12 ||
      t > samples_.back().timestamp + 1e-12) {
    throw std::out_of_range("GroundTruth::pose_at: time outside trajectory");
  }
  auto it = std::upper_bound(samples_.begin(), samples_.end(), t,
                             [](double v, const GroundTruthSample& s) { return v < s.timestamp; });
  if (it == samples_.begin()) ++it;
  if (it == samples_.end()) {
    position = samples_.back().position;
    attitude = samples_.back().attitude;
    return;
  }
  const GroundTruthSample& s0 = *(it - 1);
  const GroundTruthSample& s1 = *it;
  const double h = s1.timestamp - s0.timestamp;
  const double u = std::clamp((t - s0.timestamp) / h, 0.0, 1.0);
  const double u2 = u * u;
  const double u3 = u2 * u;
  const double h10 = u3 - 2.0 * u2 + u;
  const double h01 = -2.0 * u3 + 3.0 * u2;
  const double h11 = u3 - u2;
  // Offset form of the Hermite blend, exact when the samples coincide.
  position = s0.position + h01 * (s1.position - s0.position) +
             h * (h10 * s0.velocity + h11 * s1.velocity);
  attitude = s0.attitude.coeffs() == s1.attitude.coeffs()
                 ? s0.attitude
                 : s0.attitude.slerp(u, s1.attitude).normalized();
}

GroundTruth integrate_profile(const TrajectoryProfile& profile, double rate) {
  if (!(rate > 0.0)) throw std::invalid_argument("integrate_profile: rate must be positive");
  const double duration = profile.duration();
  const auto steps = static_cast<std::size_t>(std::floor(duration * rate + 1e-9));
  const double h = 1.0 / rate;

  std::vector<GroundTruthSample> samples;
  samples.reserve(steps + 1);
  Vec3 p = profile.start_position;
  Eigen::Vector4d q = profile.start_attitude.normalized().coeffs();
  for (std::size_t i = 0;; ++i) {
    const double t = static_cast<double>(i) * h;
    const Kinematics k0 = profile.at(t);
    samples.push_back({t, p, Quat(q(3), q(0), q(1), q(2)), k0.velocity});
    if (i == steps) break;

    const Kinematics km = profile.at(t + 0.5 * h);
    const Kinematics k1 = profile.at(t + h);
    p += h / 6.0 * (k0.velocity + 4.0 * km.velocity + k1.velocity);

    const Eigen::Vector4d r1 = quat_rate(q, k0.angular_velocity);
    const Eigen::Vector4d r2 = quat_rate(q + 0.5 * h * r1, km.angular_velocity);
    const Eigen::Vector4d r3 = quat_rate(q + 0.5 * h * r2, km.angular_velocity);
    const Eigen::Vector4d r4 = quat_rate(q + h * r3, k1.angular_velocity);
    q += h / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
    q.normalize();
  }
  return GroundTruth(std::move(samples));
}

double cast_ray(const WorldModel& world, const Vec3& origin, const Vec3& direction,
                double min_range, double max_range) {
  double best = -1.0;
  for (const Plane& pl : world.planes) {
    const double denom = pl.normal.dot(direction);
    if (std::abs(denom) < 1e-12) continue;
    const double s = (pl.offset - pl.normal.dot(origin)) / denom;
    if (s < min_range || s > max_range) continue;
    if (best >= 0.0 && s >= best) continue;
    const Vec3 d = origin + s * direction - pl.center;
    if (std::abs(d.dot(pl.axis_u)) > pl.half_u || std::abs(d.dot(pl.axis_v)) > pl.half_v) continue;
    best = s;
  }
  return best;
}

SimSequence generate(const WorldModel& world, const TrajectoryProfile& profile,
                     const SensorConfig& sensors, std::uint64_t seed) {
  if (!(sensors.imu.rate > 0.0) || !(sensors.lidar.scan_period > 0.0) ||
      sensors.lidar.beams < 1 || sensors.lidar.azimuth_steps < 1) {
    throw std::invalid_argument("generate: invalid sensor configuration");
  }
  sensors.imu.noise.validate();

  SimSequence seq;
  seq.seed = seed;
  seq.sensors = sensors;
  seq.ground_truth = integrate_profile(profile, sensors.ground_truth_rate);
  const double duration = seq.ground_truth.end_time();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian3 = [&]() {
    const double x = normal(rng);
    const double y = normal(rng);
    const double z = normal(rng);
    return Vec3(x, y, z);
  };

  // IMU stream.
  const ImuModel& im = sensors.imu;
  const double dt = 1.0 / im.rate;
  const auto imu_count = static_cast<std::size_t>(std::floor(duration * im.rate + 1e-9)) + 1;
  const Vec3 gravity(0.0, 0.0, -sensors.gravity);
  Vec3 ba = im.noise_enabled ? im.accel_bias : Vec3::Zero();
  Vec3 bg = im.noise_enabled ? im.gyro_bias : Vec3::Zero();
  const double sa = im.noise.accel_noise_density / std::sqrt(dt);
  const double sg = im.noise.gyro_noise_density / std::sqrt(dt);
  const double sba = im.noise.accel_bias_walk * std::sqrt(dt);
  const double sbg = im.noise.gyro_bias_walk * std::sqrt(dt);
  seq.imu.reserve(imu_count);
  for (std::size_t k = 0; k < imu_count; ++k) {
    const double t = static_cast<double>(k) * dt;
    Vec3 p;
    Quat q;
    seq.ground_truth.pose_at(t, p, q);
    const Kinematics kin = profile.at(t);
    ImuSample s;
    s.timestamp = t;
    s.accel = q.conjugate() * (kin.acceleration - gravity);
    s.gyro = kin.angular_velocity;
    if (im.noise_enabled) {
      s.accel += ba + sa * gaussian3();
      s.gyro += bg + sg * gaussian3();
      ba += sba * gaussian3();
      bg += sbg * gaussian3();
    }
    seq.imu.push_back(s);
  }

  // Lidar sweeps.
  const LidarModel& lm = sensors.lidar;
  const auto scan_count = static_cast<std::size_t>(std::floor(duration / lm.scan_period + 1e-9));
  std::vector<Vec3> beam_dirs;
  beam_dirs.reserve(static_cast<std::size_t>(lm.beams) * static_cast<std::size_t>(lm.azimuth_steps));
  const double el_step =
      lm.beams > 1 ? (lm.max_elevation_deg - lm.min_elevation_deg) / (lm.beams - 1) : 0.0;
  for (int j = 0; j < lm.azimuth_steps; ++j) {
    const double az = 2.0 * kPi * j / lm.azimuth_steps;
    for (int bi = 0; bi < lm.beams; ++bi) {
      const double el = (lm.min_elevation_deg + bi * el_step) * kPi / 180.0;
      beam_dirs.emplace_back(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                             std::sin(el));
    }
  }
  seq.scans.reserve(scan_count);
  for (std::size_t k = 0; k < scan_count; ++k) {
    LidarScan scan;
    scan.t_start = static_cast<double>(k) * lm.scan_period;
    scan.t_end = static_cast<double>(k + 1) * lm.scan_period;
    for (int j = 0; j < lm.azimuth_steps; ++j) {
      const double t = scan.t_start + lm.scan_period * j / lm.azimuth_steps;
      Vec3 p;
      Quat q;
      seq.ground_truth.pose_at(t, p, q);
      const Quat q_lidar = q * sensors.extrinsic.rotation_lidar_to_imu;
      const Vec3 origin = p + q * sensors.extrinsic.translation_lidar_to_imu;
      // The firing order rotates by one beam per column so that a fixed-stride
      // point skip does not alias onto a fixed subset of beams.
      for (int f = 0; f < lm.beams; ++f) {
        const int bi = (f + j) % lm.beams;
        const Vec3& dir = beam_dirs[static_cast<std::size_t>(j * lm.beams + bi)];
        const double range = cast_ray(world, origin, q_lidar * dir, lm.min_range, lm.max_range);
        if (range < 0.0) continue;
        const double noisy = lm.range_noise > 0.0 ? range + lm.range_noise * normal(rng) : range;
        scan.points.push_back({t, dir * noisy, static_cast<float>(bi)});
      }
    }
    seq.scans.push_back(std::move(scan));
  }
  return seq;
}

Scenario make_scenario(const std::string& name, double duration) {
  if (name == "stationary") return {room_world(), stationary_profile(duration)};
  if (name == "gentle") return {room_world(), gentle_room_loop(duration)};
  if (name == "aggressive") return {room_world(), aggressive_profile(duration)};
  if (name == "corridor") return {degenerate_scene(DegenerateKind::kCorridor), corridor_walk(duration)};
  if (name == "open_plane") {
    return {degenerate_scene(DegenerateKind::kOpenPlane), stationary_profile(duration)};
  }
  if (name == "spin") return {room_world(), spin_with_lead_in(10.0, duration, Vec3(2.0, 1.0, 1.5))};
  throw std::invalid_argument("unknown scenario: " + name);
}

}  // namespace rclio::sim
