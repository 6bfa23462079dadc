#pragma once

#include "rclio/state.hpp"

#include <cstddef>
#include <utility>
#include <vector>

namespace rclio {

struct StampedPose {
  double timestamp = 0.0;
  Vec3 position = Vec3::Zero();
  Quat attitude = Quat::Identity();
};

using Trajectory = std::vector<StampedPose>;

/// Pairs (estimate index, ground-truth index) by nearest ground-truth timestamp
/// within `max_dt`. The ground truth must be sorted by time.
std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est,
                                                           const Trajectory& gt,
                                                           double max_dt = 0.01);

struct AteResult {
  double rmse = 0.0;
  std::size_t pairs = 0;
  Eigen::Matrix4d alignment = Eigen::Matrix4d::Identity();  // maps estimate into ground truth
};

/// Rigid (no scale) least-squares alignment, then translational RMSE.
/// Throws std::invalid_argument with fewer than 3 associated pairs.
AteResult evaluate_ate(const Trajectory& est, const Trajectory& gt, double max_dt = 0.01);

struct RteResult {
  double rmse = 0.0;
  std::size_t segments = 0;
};

/// Relative translational error over segments whose ground-truth arc length
/// first reaches `interval`. Throws std::invalid_argument when the trajectory is
/// shorter than the interval.
RteResult evaluate_rte(const Trajectory& est, const Trajectory& gt, double interval = 10.0,
                       double max_dt = 0.01);

}  // namespace rclio
