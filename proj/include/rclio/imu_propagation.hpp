#pragma once

#include "rclio/state.hpp"

#include <span>
#include <vector>

namespace rclio {

using NoiseJacobian = Eigen::Matrix<double, kErrorDim, kNoiseDim>;
using NoiseCov = Eigen::Matrix<double, kNoiseDim, kNoiseDim>;

/// One linearized step of the error-state transfer. `transition` is the
/// assembled discrete matrix I + F*dt; `noise_jacobian` is C (the step applies
/// C*dt); `noise_cov` is the discrete noise covariance Q for this dt.
struct TransitionRecord {
  CovMat transition = CovMat::Identity();
  NoiseJacobian noise_jacobian = NoiseJacobian::Zero();
  NoiseCov noise_cov = NoiseCov::Zero();
  double dt = 0.0;
  ImuSample input;

  /// (C dt) Q (C dt)^T
  CovMat process_noise() const;
};

/// Nominal-state kinematics over one interval with constant input.
NominalState propagate_nominal(const NominalState& x, const ImuSample& u, double dt);

TransitionRecord build_transition(const NominalState& x, const ImuSample& u, double dt,
                                  const ImuNoiseParams& noise);

/// P' = (I + F dt) P (I + F dt)^T + (C dt) Q (C dt)^T, symmetrized.
CovMat propagate_covariance(const CovMat& p, const TransitionRecord& tr);

/// Linear interpolation of an IMU measurement between two samples.
ImuSample interpolate_imu(const ImuSample& a, const ImuSample& b, double t);

/// Time-ordered knots of the propagated state used to interpolate poses.
class PoseSpline {
 public:
  struct Knot {
    double timestamp;
    NominalState state;
  };

  PoseSpline() = default;
  explicit PoseSpline(std::vector<Knot> knots);

  void push_back(double timestamp, const NominalState& state);

  double start_time() const;
  double end_time() const;
  bool empty() const { return knots_.empty(); }
  const std::vector<Knot>& knots() const { return knots_; }

  /// Lerp for translation, slerp for attitude. Throws std::out_of_range outside the span.
  void pose_at(double t, Vec3& position, Quat& attitude) const;

 private:
  std::vector<Knot> knots_;
};

struct TimedPoint {
  double timestamp = 0.0;
  Vec3 position = Vec3::Zero();  // lidar frame
  float intensity = 0.0F;
};

/// Re-expresses every point in the lidar frame at `target_time`.
std::vector<TimedPoint> undistort(std::span<const TimedPoint> points, const PoseSpline& spline,
                                  double target_time, const ExtrinsicCalib& calib);

/// Result of integrating an IMU stream over [t_begin, t_end].
struct PropagationResult {
  NominalState state;
  CovMat covariance;
  PoseSpline spline;
  std::vector<TransitionRecord> transitions;
};

/// Integrates the filter from t_begin to t_end through `imu` (sorted by time).
/// Measurements at interval boundaries are linearly interpolated; each step
/// uses the mean of its two bracketing measurements.
PropagationResult propagate_interval(const NominalState& x, const CovMat& p,
                                     std::span<const ImuSample> imu, double t_begin,
                                     double t_end, const ImuNoiseParams& noise);

}  // namespace rclio
