#include "rclio/iekf.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rclio {

namespace {

// Below this ratio of middle to largest scatter eigenvalue the neighbors are
// treated as collinear and the normal is undefined.
constexpr double kCollinearRatio = 1e-1;
// Above this ratio of smallest to middle eigenvalue the patch is too thick
// relative to its extent for the normal to be trusted.
constexpr double kPlanarityRatio = 1e-2;

using I = ErrorIndex;

}  // namespace

PlanePatch fit_plane(std::span<const Vec3> neighbors, double plane_tolerance) {
  if (neighbors.size() < 3) {
    throw std::invalid_argument("fit_plane: need at least 3 neighbors");
  }
  PlanePatch patch;
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& q : neighbors) centroid += q;
  centroid /= static_cast<double>(neighbors.size());
  Mat3 scatter = Mat3::Zero();
  for (const Vec3& q : neighbors) {
    const Vec3 d = q - centroid;
    scatter += d * d.transpose();
  }
  scatter /= static_cast<double>(neighbors.size());
  patch.centroid = centroid;

  const Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  const Vec3 values = eig.eigenvalues();  // ascending
  if (!(values(1) > kCollinearRatio * values(2)) || !(values(0) < kPlanarityRatio * values(1))) {
    return patch;
  }
  patch.normal = eig.eigenvectors().col(0).normalized();
  for (const Vec3& q : neighbors) {
    if (std::abs(patch.normal.dot(q - centroid)) >= plane_tolerance) {
      return patch;
    }
  }
  patch.valid = true;
  return patch;
}

ResidualRow residual_and_jacobian(const NominalState& x, const Vec3& lidar_point,
                                  const PlanePatch& plane, const ExtrinsicCalib& calib) {
  const Vec3 body = calib.lidar_to_body(lidar_point);
  const Mat3 rot = x.rotation();
  const Vec3 world = rot * body + x.position;
  ResidualRow row;
  row.residual = plane.normal.dot(world - plane.centroid);
  row.jacobian.segment<3>(I::kPos) = plane.normal.transpose();
  row.jacobian.segment<3>(I::kRot) = -plane.normal.transpose() * rot * skew(body);
  return row;
}

Eigen::Matrix<double, kErrorDim, Eigen::Dynamic> state_space_gain(
    const CovMat& p, const Eigen::Matrix<double, Eigen::Dynamic, kErrorDim>& h,
    const Eigen::VectorXd& r_diag) {
  const Eigen::MatrixXd ht_rinv = h.transpose() * r_diag.cwiseInverse().asDiagonal();
  const CovMat p_inv = p.ldlt().solve(CovMat::Identity());
  const CovMat info = ht_rinv * h + p_inv;
  return info.ldlt().solve(ht_rinv);
}

CovMat update_covariance(const CovMat& p, const CovMat& kh) {
  return symmetrize((CovMat::Identity() - kh) * p);
}

CovMat update_covariance(const CovMat& p, const Eigen::Matrix<double, kErrorDim, Eigen::Dynamic>& k,
                         const Eigen::Matrix<double, Eigen::Dynamic, kErrorDim>& h) {
  if (k.cols() != h.rows()) {
    throw std::invalid_argument("update_covariance: K and H shapes disagree");
  }
  return update_covariance(p, CovMat(k * h));
}

ResidualSet build_residuals(const NominalState& x, std::span<const TimedPoint> points,
                            const RcVoxMap& map, const ExtrinsicCalib& calib,
                            const IekfConfig& cfg) {
  std::vector<ResidualRow> rows;
  std::vector<std::size_t> refs;
  rows.reserve(points.size());
  refs.reserve(points.size());
  const Mat3 rot = x.rotation();
  std::vector<Vec3> nbr_points;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 world = rot * calib.lidar_to_body(points[i].position) + x.position;
    if (!map.contains(world)) continue;
    const std::vector<Neighbor> nbrs = map.knn(world, cfg.knn_k);
    if (static_cast<int>(nbrs.size()) < cfg.knn_k) continue;
    nbr_points.clear();
    for (const Neighbor& n : nbrs) nbr_points.push_back(n.point);
    const PlanePatch plane = fit_plane(nbr_points, cfg.plane_tolerance);
    if (!plane.valid) continue;
    ResidualRow row = residual_and_jacobian(x, points[i].position, plane, calib);
    if (std::abs(row.residual) > cfg.max_residual) continue;
    rows.push_back(row);
    refs.push_back(i);
  }
  ResidualSet set;
  const auto m = static_cast<Eigen::Index>(rows.size());
  set.residuals.resize(m);
  set.jacobian.resize(m, kErrorDim);
  set.noise = Eigen::VectorXd::Constant(m, cfg.measurement_variance);
  for (Eigen::Index j = 0; j < m; ++j) {
    set.residuals(j) = rows[static_cast<std::size_t>(j)].residual;
    set.jacobian.row(j) = rows[static_cast<std::size_t>(j)].jacobian;
  }
  set.point_refs = std::move(refs);
  return set;
}

UpdateResult iterated_update(const NominalState& x0, const CovMat& p,
                             std::span<const TimedPoint> points, const RcVoxMap& map,
                             const ExtrinsicCalib& calib, const IekfConfig& cfg) {
  UpdateResult result;
  result.state = x0;
  result.covariance = p;

  const CovMat p_inv = p.ldlt().solve(CovMat::Identity());
  NominalState x = x0;
  CovMat kh = CovMat::Zero();
  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    const ResidualSet rs = build_residuals(x, points, map, calib, cfg);
    if (rs.size() == 0) {
      result.state = x0;
      result.covariance = p;
      result.iterations = iter;
      result.converged = false;
      result.match_count = 0;
      return result;
    }
    // H only populates the position and rotation columns, so H^T R^-1 H and
    // H^T R^-1 z are accumulated directly in state dimension.
    const Eigen::VectorXd w = rs.noise.cwiseInverse();
    const CovMat info_meas = rs.jacobian.transpose() * w.asDiagonal() * rs.jacobian;
    const ErrorVec info_vec = rs.jacobian.transpose() * w.cwiseProduct(-rs.residuals);
    const Eigen::LDLT<CovMat> solver(info_meas + p_inv);
    kh = solver.solve(info_meas);
    const ErrorVec k_innov = solver.solve(info_vec);

    const ErrorVec prior_offset = boxminus(x, x0);
    const ErrorVec dx = k_innov - (CovMat::Identity() - kh) * prior_offset;
    x = boxplus(x, dx);

    result.iterations = iter;
    result.match_count = rs.size();
    const double step = std::max(dx.segment<3>(I::kPos).norm(), dx.segment<3>(I::kRot).norm());
    if (step < cfg.convergence_eps) {
      result.converged = true;
      break;
    }
  }
  result.state = x;
  result.covariance = update_covariance(p, kh);
  return result;
}

}  // namespace rclio
