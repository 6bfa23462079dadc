#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>

namespace rclio {

// Conventions used everywhere in this library:
//  - Hamilton quaternions, stored as Eigen::Quaterniond, rotating body -> global.
//  - Attitude perturbations are right (body-local): q_true = q * Exp(dtheta).
//  - Error-state layout is fixed by the ErrorIndex table below.

inline constexpr int kErrorDim = 18;
inline constexpr int kNoiseDim = 12;

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using ErrorVec = Eigen::Matrix<double, kErrorDim, 1>;
using CovMat = Eigen::Matrix<double, kErrorDim, kErrorDim>;

/// Start offsets of each 3-vector block inside the 18-dim error state.
struct ErrorIndex {
  static constexpr int kPos = 0;
  static constexpr int kVel = 3;
  static constexpr int kRot = 6;
  static constexpr int kAccBias = 9;
  static constexpr int kGyroBias = 12;
  static constexpr int kGravity = 15;
};
static_assert(ErrorIndex::kGravity + 3 == kErrorDim, "error-state blocks must tile 18 entries");

/// Start offsets of each 3-vector block in the 12-dim IMU noise vector (n_a, n_w, n_ba, n_bw).
struct NoiseIndex {
  static constexpr int kAcc = 0;
  static constexpr int kGyro = 3;
  static constexpr int kAccWalk = 6;
  static constexpr int kGyroWalk = 9;
};
static_assert(NoiseIndex::kGyroWalk + 3 == kNoiseDim, "noise blocks must tile 12 entries");

/// Full manifold state: R^6 x SO(3) x R^9.
struct NominalState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Quat attitude = Quat::Identity();
  Vec3 accel_bias = Vec3::Zero();
  Vec3 gyro_bias = Vec3::Zero();
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);

  Mat3 rotation() const { return attitude.toRotationMatrix(); }
  bool is_finite() const;
};

struct ImuSample {
  double timestamp = 0.0;
  Vec3 accel = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();
};

/// Continuous-time noise densities (std-dev) per axis.
struct ImuNoiseParams {
  double accel_noise_density = 0.01;  // m/s^2/sqrt(Hz)
  double gyro_noise_density = 0.001;  // rad/s/sqrt(Hz)
  double accel_bias_walk = 1e-4;      // m/s^3/sqrt(Hz)
  double gyro_bias_walk = 1e-4;       // rad/s^2/sqrt(Hz)

  void validate() const;
};

struct ExtrinsicCalib {
  Quat rotation_lidar_to_imu = Quat::Identity();
  Vec3 translation_lidar_to_imu = Vec3::Zero();

  /// Maps a point from the lidar frame into the IMU body frame.
  Vec3 lidar_to_body(const Vec3& p) const {
    return rotation_lidar_to_imu * p + translation_lidar_to_imu;
  }
  Vec3 body_to_lidar(const Vec3& p) const {
    return rotation_lidar_to_imu.conjugate() * (p - translation_lidar_to_imu);
  }
};

Mat3 skew(const Vec3& v);

/// SO(3) exponential map of a rotation vector.
Quat so3_exp(const Vec3& phi);
/// SO(3) logarithm; returns the rotation vector with angle in [0, pi].
Vec3 so3_log(const Quat& q);

/// Right Jacobian of SO(3) and its inverse.
Mat3 so3_right_jacobian(const Vec3& phi);
Mat3 so3_right_jacobian_inv(const Vec3& phi);

/// x [+] dx. Throws std::invalid_argument on non-finite input.
NominalState boxplus(const NominalState& x, const ErrorVec& dx);
/// x1 [-] x0, the error that carries x0 to x1.
ErrorVec boxminus(const NominalState& x1, const NominalState& x0);

/// Makes P exactly symmetric: (P + P^T) / 2.
CovMat symmetrize(const CovMat& p);

}  // namespace rclio
