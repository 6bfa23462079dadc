#pragma once

#include "rclio/imu_propagation.hpp"
#include "rclio/rcvox_map.hpp"
#include "rclio/state.hpp"

#include <span>
#include <vector>

namespace rclio {

struct PlanePatch {
  Vec3 normal = Vec3::UnitZ();
  Vec3 centroid = Vec3::Zero();
  bool valid = false;
};

using JacobianRow = Eigen::Matrix<double, 1, kErrorDim>;

struct ResidualSet {
  Eigen::VectorXd residuals;
  Eigen::Matrix<double, Eigen::Dynamic, kErrorDim> jacobian;
  Eigen::VectorXd noise;  // per-residual variance (diagonal of R)
  std::vector<std::size_t> point_refs;

  std::size_t size() const { return point_refs.size(); }
};

struct IekfConfig {
  int knn_k = 5;
  double plane_tolerance = 0.1;       // m, max neighbor distance to the fitted plane
  double max_residual = 1.0;          // m, matches farther from their plane are rejected
  double measurement_variance = 0.0025;  // (0.05 m)^2
  double convergence_eps = 1e-4;      // max(|dp|, |dtheta|)
  int max_iterations = 5;
};

struct UpdateResult {
  NominalState state;
  CovMat covariance = CovMat::Identity();
  int iterations = 0;
  bool converged = false;
  std::size_t match_count = 0;
};

/// Least-squares plane through the k nearest neighbors (at least 3).
PlanePatch fit_plane(std::span<const Vec3> neighbors, double plane_tolerance = 0.1);

struct ResidualRow {
  double residual = 0.0;
  JacobianRow jacobian = JacobianRow::Zero();
};

/// Point-to-plane residual of a lidar-frame point and its 1x18 Jacobian (right perturbation).
ResidualRow residual_and_jacobian(const NominalState& x, const Vec3& lidar_point,
                                  const PlanePatch& plane, const ExtrinsicCalib& calib);

/// Gain in state dimension: (H^T R^-1 H + P^-1)^-1 H^T R^-1.
Eigen::Matrix<double, kErrorDim, Eigen::Dynamic> state_space_gain(
    const CovMat& p, const Eigen::Matrix<double, Eigen::Dynamic, kErrorDim>& h,
    const Eigen::VectorXd& r_diag);

/// P' = (I - K H) P, symmetrized.
CovMat update_covariance(const CovMat& p, const Eigen::Matrix<double, kErrorDim, Eigen::Dynamic>& k,
                         const Eigen::Matrix<double, Eigen::Dynamic, kErrorDim>& h);
CovMat update_covariance(const CovMat& p, const CovMat& kh);

/// Builds residuals for every point with a valid, gated plane match at state x.
ResidualSet build_residuals(const NominalState& x, std::span<const TimedPoint> points,
                            const RcVoxMap& map, const ExtrinsicCalib& calib,
                            const IekfConfig& cfg);

/// Iterated error-state update against the map; points are in the lidar frame
/// at the update time.
UpdateResult iterated_update(const NominalState& x0, const CovMat& p,
                             std::span<const TimedPoint> points, const RcVoxMap& map,
                             const ExtrinsicCalib& calib, const IekfConfig& cfg);

}  // namespace rclio
