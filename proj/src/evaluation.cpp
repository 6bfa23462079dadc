#include "rclio/evaluation.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rclio {

namespace {

Eigen::Isometry3d to_iso(const StampedPose& s) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() = s.attitude.normalized().toRotationMatrix();
  t.translation() = s.position;
  return t;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est,
                                                           const Trajectory& gt, double max_dt) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (gt.empty()) return pairs;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double t = est[i].timestamp;
    auto it = std::lower_bound(gt.begin(), gt.end(), t,
                               [](const StampedPose& s, double v) { return s.timestamp < v; });
    std::size_t best = gt.size();
    double best_dt = max_dt;
    if (it != gt.end()) {
      const double d = std::abs(it->timestamp - t);
      if (d <= best_dt) {
        best_dt = d;
        best = static_cast<std::size_t>(it - gt.begin());
      }
    }
    if (it != gt.begin()) {
      const auto prev = it - 1;
      const double d = std::abs(prev->timestamp - t);
      if (d <= best_dt) best = static_cast<std::size_t>(prev - gt.begin());
    }
    if (best < gt.size()) pairs.emplace_back(i, best);
  }
  return pairs;
}

AteResult evaluate_ate(const Trajectory& est, const Trajectory& gt, double max_dt) {
  const auto pairs = associate(est, gt, max_dt);
  if (pairs.size() < 3) {
    throw std::invalid_argument("evaluate_ate: fewer than 3 associated poses");
  }
  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::Matrix3Xd src(3, n);
  Eigen::Matrix3Xd dst(3, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    src.col(j) = est[pairs[static_cast<std::size_t>(j)].first].position;
    dst.col(j) = gt[pairs[static_cast<std::size_t>(j)].second].position;
  }
  AteResult result;
  result.pairs = pairs.size();
  result.alignment = Eigen::umeyama(src, dst, false);
  const Eigen::Matrix3d rot = result.alignment.topLeftCorner<3, 3>();
  const Vec3 trans = result.alignment.topRightCorner<3, 1>();
  double sum = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    sum += (rot * src.col(j) + trans - dst.col(j)).squaredNorm();
  }
  result.rmse = std::sqrt(sum / static_cast<double>(n));
  return result;
}

RteResult evaluate_rte(const Trajectory& est, const Trajectory& gt, double interval,
                       double max_dt) {
  if (!(interval > 0.0)) throw std::invalid_argument("evaluate_rte: interval must be positive");
  const auto pairs = associate(est, gt, max_dt);
  std::vector<double> arc(pairs.size(), 0.0);
  for (std::size_t j = 1; j < pairs.size(); ++j) {
    arc[j] = arc[j - 1] +
             (gt[pairs[j].second].position - gt[pairs[j - 1].second].position).norm();
  }
  if (pairs.empty() || arc.back() < interval) {
    throw std::invalid_argument("evaluate_rte: trajectory shorter than the interval");
  }
  RteResult result;
  double sum = 0.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    j = std::max(j, i);
    while (j < pairs.size() && arc[j] - arc[i] < interval) ++j;
    if (j == pairs.size()) break;
    const Eigen::Isometry3d rel_gt =
        to_iso(gt[pairs[i].second]).inverse() * to_iso(gt[pairs[j].second]);
    const Eigen::Isometry3d rel_est =
        to_iso(est[pairs[i].first]).inverse() * to_iso(est[pairs[j].first]);
    const Eigen::Isometry3d err = rel_gt.inverse() * rel_est;
    sum += err.translation().squaredNorm();
    ++result.segments;
  }
  result.rmse = std::sqrt(sum / static_cast<double>(result.segments));
  return result;
}

}  // namespace rclio
