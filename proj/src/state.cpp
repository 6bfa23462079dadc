#include "rclio/state.hpp"

#include <cmath>
#include <stdexcept>

namespace rclio {

namespace {

constexpr double kSmallAngle = 1e-6;

bool finite3(const Vec3& v) { return v.allFinite(); }

}  // namespace

bool NominalState::is_finite() const {
  return finite3(position) && finite3(velocity) && attitude.coeffs().allFinite() &&
         finite3(accel_bias) && finite3(gyro_bias) && finite3(gravity);
}

void ImuNoiseParams::validate() const {
  if (!(accel_noise_density >= 0.0) || !(gyro_noise_density >= 0.0) ||
      !(accel_bias_walk >= 0.0) || !(gyro_bias_walk >= 0.0)) {
    throw std::invalid_argument("IMU noise parameters must be non-negative");
  }
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Quat so3_exp(const Vec3& phi) {
  const double angle = phi.norm();
  Quat q;
  if (angle < kSmallAngle) {
    // Second-order Taylor expansion of (cos(a/2), sin(a/2)/a * phi).
    const double a2 = angle * angle;
    q.w() = 1.0 - a2 / 8.0;
    q.vec() = (0.5 - a2 / 48.0) * phi;
  } else {
    const double half = 0.5 * angle;
    q.w() = std::cos(half);
    q.vec() = (std::sin(half) / angle) * phi;
  }
  q.normalize();
  return q;
}

Vec3 so3_log(const Quat& q_in) {
  Quat q = q_in.normalized();
  // Shortest rotation: q and -q represent the same attitude.
  if (q.w() < 0.0) {
    q.coeffs() = -q.coeffs();
  }
  const double vnorm = q.vec().norm();
  if (vnorm < 0.5 * kSmallAngle) {
    // angle ~= 2*vnorm; phi = 2 * vec / w to second order.
    return (2.0 / q.w()) * q.vec();
  }
  const double angle = 2.0 * std::atan2(vnorm, q.w());
  return (angle / vnorm) * q.vec();
}

Mat3 so3_right_jacobian(const Vec3& phi) {
  const double angle = phi.norm();
  const Mat3 k = skew(phi);
  if (angle < kSmallAngle) {
    return Mat3::Identity() - 0.5 * k;
  }
  const double a2 = angle * angle;
  return Mat3::Identity() - (1.0 - std::cos(angle)) / a2 * k +
         (angle - std::sin(angle)) / (a2 * angle) * k * k;
}

Mat3 so3_right_jacobian_inv(const Vec3& phi) {
  const double angle = phi.norm();
  const Mat3 k = skew(phi);
  if (angle < kSmallAngle) {
    return Mat3::Identity() + 0.5 * k;
  }
  const double a2 = angle * angle;
  const double coeff = 1.0 / a2 - (1.0 + std::cos(angle)) / (2.0 * angle * std::sin(angle));
  return Mat3::Identity() + 0.5 * k + coeff * k * k;
}

NominalState boxplus(const NominalState& x, const ErrorVec& dx) {
  if (!dx.allFinite() || !x.is_finite()) {
    throw std::invalid_argument("boxplus: non-finite input");
  }
  using I = ErrorIndex;
  NominalState out = x;
  out.position += dx.segment<3>(I::kPos);
  out.velocity += dx.segment<3>(I::kVel);
  out.attitude = (x.attitude * so3_exp(dx.segment<3>(I::kRot))).normalized();
  out.accel_bias += dx.segment<3>(I::kAccBias);
  out.gyro_bias += dx.segment<3>(I::kGyroBias);
  out.gravity += dx.segment<3>(I::kGravity);
  return out;
}

ErrorVec boxminus(const NominalState& x1, const NominalState& x0) {
  using I = ErrorIndex;
  ErrorVec d;
  d.segment<3>(I::kPos) = x1.position - x0.position;
  d.segment<3>(I::kVel) = x1.velocity - x0.velocity;
  d.segment<3>(I::kRot) = so3_log(x0.attitude.conjugate() * x1.attitude);
  d.segment<3>(I::kAccBias) = x1.accel_bias - x0.accel_bias;
  d.segment<3>(I::kGyroBias) = x1.gyro_bias - x0.gyro_bias;
  d.segment<3>(I::kGravity) = x1.gravity - x0.gravity;
  return d;
}

CovMat symmetrize(const CovMat& p) { return 0.5 * (p + p.transpose()); }

}  // namespace rclio
