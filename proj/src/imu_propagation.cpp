#include "rclio/imu_propagation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rclio {

namespace {

bool sample_finite(const ImuSample& u) {
  return std::isfinite(u.timestamp) && u.accel.allFinite() && u.gyro.allFinite();
}

// Measurement at time t, linearly interpolated; clamped to the stream ends.
ImuSample measurement_at(std::span<const ImuSample> imu, double t) {
  if (imu.empty()) {
    throw std::invalid_argument("empty IMU stream");
  }
  if (t <= imu.front().timestamp) {
    ImuSample s = imu.front();
    s.timestamp = t;
    return s;
  }
  if (t >= imu.back().timestamp) {
    ImuSample s = imu.back();
    s.timestamp = t;
    return s;
  }
  auto it = std::lower_bound(imu.begin(), imu.end(), t,
                             [](const ImuSample& s, double v) { return s.timestamp < v; });
  if (it->timestamp == t) {
    return *it;
  }
  return interpolate_imu(*(it - 1), *it, t);
}

}  // namespace

CovMat TransitionRecord::process_noise() const {
  const NoiseJacobian c_dt = noise_jacobian * dt;
  return c_dt * noise_cov * c_dt.transpose();
}

NominalState propagate_nominal(const NominalState& x, const ImuSample& u, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw std::invalid_argument("propagate_nominal: dt must be positive and finite");
  }
  if (!x.is_finite() || !sample_finite(u)) {
    throw std::invalid_argument("propagate_nominal: non-finite input");
  }
  NominalState out = x;
  const Vec3 accel_world = x.rotation() * (u.accel - x.accel_bias) + x.gravity;
  out.position = x.position + x.velocity * dt + 0.5 * accel_world * dt * dt;
  out.velocity = x.velocity + accel_world * dt;
  out.attitude = (x.attitude * so3_exp((u.gyro - x.gyro_bias) * dt)).normalized();
  return out;
}

TransitionRecord build_transition(const NominalState& x, const ImuSample& u, double dt,
                                  const ImuNoiseParams& noise) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("build_transition: dt must be positive");
  }
  using I = ErrorIndex;
  using N = NoiseIndex;
  const Mat3 rot = x.rotation();
  const Vec3 acc = u.accel - x.accel_bias;
  const Vec3 omega = u.gyro - x.gyro_bias;

  CovMat f = CovMat::Zero();
  f.block<3, 3>(I::kPos, I::kVel) = Mat3::Identity();
  f.block<3, 3>(I::kVel, I::kRot) = -rot * skew(acc);
  f.block<3, 3>(I::kVel, I::kAccBias) = -rot;
  f.block<3, 3>(I::kVel, I::kGravity) = Mat3::Identity();
  f.block<3, 3>(I::kRot, I::kRot) = -skew(omega);
  f.block<3, 3>(I::kRot, I::kGyroBias) = -Mat3::Identity();

  TransitionRecord tr;
  tr.dt = dt;
  tr.input = u;
  tr.transition = CovMat::Identity() + f * dt;

  tr.noise_jacobian.block<3, 3>(I::kVel, N::kAcc) = -rot;
  tr.noise_jacobian.block<3, 3>(I::kRot, N::kGyro) = -Mat3::Identity();
  tr.noise_jacobian.block<3, 3>(I::kAccBias, N::kAccWalk) = Mat3::Identity();
  tr.noise_jacobian.block<3, 3>(I::kGyroBias, N::kGyroWalk) = Mat3::Identity();

  // Sampled white noise of density s has variance s^2/dt, so (C dt) Q (C dt)^T
  // grows linearly in dt.
  const auto diag = [dt](double density) { return density * density / dt; };
  tr.noise_cov.diagonal().segment<3>(N::kAcc).setConstant(diag(noise.accel_noise_density));
  tr.noise_cov.diagonal().segment<3>(N::kGyro).setConstant(diag(noise.gyro_noise_density));
  tr.noise_cov.diagonal().segment<3>(N::kAccWalk).setConstant(diag(noise.accel_bias_walk));
  tr.noise_cov.diagonal().segment<3>(N::kGyroWalk).setConstant(diag(noise.gyro_bias_walk));
  return tr;
}

CovMat propagate_covariance(const CovMat& p, const TransitionRecord& tr) {
  return symmetrize(tr.transition * p * tr.transition.transpose() + tr.process_noise());
}

ImuSample interpolate_imu(const ImuSample& a, const ImuSample& b, double t) {
  const double span = b.timestamp - a.timestamp;
  const double w = span > 0.0 ? (t - a.timestamp) / span : 0.0;
  ImuSample s;
  s.timestamp = t;
  s.accel = (1.0 - w) * a.accel + w * b.accel;
  s.gyro = (1.0 - w) * a.gyro + w * b.gyro;
  return s;
}

PoseSpline::PoseSpline(std::vector<Knot> knots) : knots_(std::move(knots)) {
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (!(knots_[i].timestamp > knots_[i - 1].timestamp)) {
      throw std::invalid_argument("PoseSpline knots must strictly increase in time");
    }
  }
}

void PoseSpline::push_back(double timestamp, const NominalState& state) {
  if (!knots_.empty() && !(timestamp > knots_.back().timestamp)) {
    throw std::invalid_argument("PoseSpline knots must strictly increase in time");
  }
  knots_.push_back({timestamp, state});
}

double PoseSpline::start_time() const {
  if (knots_.empty()) throw std::out_of_range("empty spline");
  return knots_.front().timestamp;
}

double PoseSpline::end_time() const {
  if (knots_.empty()) throw std::out_of_range("empty spline");
  return knots_.back().timestamp;
}

void PoseSpline::pose_at(double t, Vec3& position, Quat& attitude) const {
  if (knots_.empty() || t < knots_.front().timestamp || t > knots_.back().timestamp) {
    throw std::out_of_range("timestamp outside pose spline span");
  }
  auto it = std::lower_bound(knots_.begin(), knots_.end(), t,
                             [](const Knot& k, double v) { return k.timestamp < v; });
  if (it->timestamp == t) {
    position = it->state.position;
    attitude = it->state.attitude;
    return;
  }
  const Knot& hi = *it;
  const Knot& lo = *(it - 1);
  const double w = (t - lo.timestamp) / (hi.timestamp - lo.timestamp);
  position = (1.0 - w) * lo.state.position + w * hi.state.position;
  attitude = lo.state.attitude.slerp(w, hi.state.attitude).normalized();
}

std::vector<TimedPoint> undistort(std::span<const TimedPoint> points, const PoseSpline& spline,
                                  double target_time, const ExtrinsicCalib& calib) {
  Vec3 p_target;
  Quat q_target;
  spline.pose_at(target_time, p_target, q_target);
  const Quat q_target_inv = q_target.conjugate();

  std::vector<TimedPoint> out;
  out.reserve(points.size());
  Vec3 p_i;
  Quat q_i;
  for (const TimedPoint& pt : points) {
    spline.pose_at(pt.timestamp, p_i, q_i);
    const Vec3 world = q_i * calib.lidar_to_body(pt.position) + p_i;
    TimedPoint moved = pt;
    moved.position = calib.body_to_lidar(q_target_inv * (world - p_target));
    out.push_back(moved);
  }
  return out;
}

PropagationResult propagate_interval(const NominalState& x, const CovMat& p,
                                     std::span<const ImuSample> imu, double t_begin,
                                     double t_end, const ImuNoiseParams& noise) {
  if (t_end < t_begin) {
    throw std::invalid_argument("propagate_interval: t_end before t_begin");
  }
  std::vector<ImuSample> marks;
  marks.push_back(measurement_at(imu, t_begin));
  auto it = std::upper_bound(imu.begin(), imu.end(), t_begin,
                             [](double v, const ImuSample& s) { return v < s.timestamp; });
  for (; it != imu.end() && it->timestamp < t_end; ++it) {
    marks.push_back(*it);
  }
  if (t_end > t_begin) {
    marks.push_back(measurement_at(imu, t_end));
  }

  PropagationResult res{x, p, {}, {}};
  res.spline.push_back(t_begin, x);
  for (std::size_t i = 1; i < marks.size(); ++i) {
    const double dt = marks[i].timestamp - marks[i - 1].timestamp;
    if (!(dt > 0.0)) {
      continue;
    }
    ImuSample u;
    u.timestamp = marks[i - 1].timestamp;
    u.accel = 0.5 * (marks[i - 1].accel + marks[i].accel);
    u.gyro = 0.5 * (marks[i - 1].gyro + marks[i].gyro);
    TransitionRecord tr = build_transition(res.state, u, dt, noise);
    res.covariance = propagate_covariance(res.covariance, tr);
    res.state = propagate_nominal(res.state, u, dt);
    res.spline.push_back(marks[i].timestamp, res.state);
    res.transitions.push_back(std::move(tr));
  }
  return res;
}

}  // namespace rclio
