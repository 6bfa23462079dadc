#include "rclio/smoother.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rclio {

namespace {

constexpr double kRegularization = 1e-12;

Eigen::Matrix<double, 6, 6> pose_block(const CovMat& p) {
  using I = ErrorIndex;
  Eigen::Matrix<double, 6, 6> out;
  out.block<3, 3>(0, 0) = p.block<3, 3>(I::kPos, I::kPos);
  out.block<3, 3>(0, 3) = p.block<3, 3>(I::kPos, I::kRot);
  out.block<3, 3>(3, 0) = p.block<3, 3>(I::kRot, I::kPos);
  out.block<3, 3>(3, 3) = p.block<3, 3>(I::kRot, I::kRot);
  return out;
}

}  // namespace

NodePrediction predict_node(const SmootherNode& node) {
  NodePrediction pred{node.filtered_state, node.filtered_cov, CovMat::Identity()};
  for (const TransitionRecord& tr : node.transitions) {
    pred.covariance = propagate_covariance(pred.covariance, tr);
    pred.state = propagate_nominal(pred.state, tr.input, tr.dt);
    pred.transition = tr.transition * pred.transition;
  }
  return pred;
}

GainMat smooth_gain(const CovMat& p, const CovMat& transition, const CovMat& p_pred,
                    bool* regularized) {
  if (regularized != nullptr) *regularized = false;
  Eigen::LLT<CovMat> llt(p_pred);
  if (llt.info() != Eigen::Success) {
    spdlog::warn("smoother: predicted covariance not positive definite, adding {} I",
                 kRegularization);
    llt.compute(p_pred + kRegularization * CovMat::Identity());
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("smooth_gain: predicted covariance is singular");
    }
    if (regularized != nullptr) *regularized = true;
  }
  // G^T = P_pred^-1 (F P) since P and P_pred are symmetric.
  return llt.solve(transition * p).transpose();
}

std::vector<SmoothedEstimate> backward_smooth(std::span<const SmootherNode> nodes) {
  if (nodes.empty()) {
    throw std::invalid_argument("backward_smooth: empty window");
  }
  std::vector<SmoothedEstimate> out(nodes.size());
  const std::size_t last = nodes.size() - 1;
  out[last].state = nodes[last].filtered_state;
  out[last].covariance = nodes[last].filtered_cov;
  out[last].gain.setZero();

  for (std::size_t k = last; k-- > 0;) {
    const SmootherNode& node = nodes[k];
    if (node.transitions.empty() && nodes[k + 1].timestamp != node.timestamp) {
      throw std::invalid_argument("backward_smooth: node is missing its transition chain");
    }
    double span = 0.0;
    for (const TransitionRecord& tr : node.transitions) span += tr.dt;
    if (std::abs(node.timestamp + span - nodes[k + 1].timestamp) > 1e-6) {
      throw std::invalid_argument("backward_smooth: transition chain does not reach next node");
    }
    const NodePrediction pred = predict_node(node);
    const GainMat gain = smooth_gain(node.filtered_cov, pred.transition, pred.covariance);
    const ErrorVec innovation = boxminus(out[k + 1].state, pred.state);
    out[k].state = boxplus(node.filtered_state, gain * innovation);
    out[k].covariance = symmetrize(node.filtered_cov +
                                   gain * (out[k + 1].covariance - pred.covariance) *
                                       gain.transpose());
    out[k].gain = gain;
  }
  return out;
}

IntegrityVerdict check_integrity(const CovMat& p, double threshold, IntegrityDirection direction) {
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(
      pose_block(p), Eigen::EigenvaluesOnly);
  const double cov_min = eig.eigenvalues()(0);
  const double cov_max = eig.eigenvalues()(5);
  IntegrityVerdict v;
  v.threshold = threshold;
  switch (direction) {
    case IntegrityDirection::kInformationAbove:
      v.min_eigenvalue = cov_max > 0.0 ? 1.0 / cov_max : std::numeric_limits<double>::infinity();
      v.sufficient = v.min_eigenvalue > threshold;
      break;
    case IntegrityDirection::kCovarianceBelow:
      v.min_eigenvalue = cov_min;
      v.sufficient = cov_min < threshold;
      break;
    case IntegrityDirection::kCovarianceAbove:
      v.min_eigenvalue = cov_min;
      v.sufficient = cov_min > threshold;
      break;
  }
  return v;
}

void SmootherWindow::add_scan(std::vector<SmootherNode> nodes) {
  if (nodes.empty()) return;
  scan_sizes_.push_back(nodes.size());
  for (SmootherNode& n : nodes) nodes_.push_back(std::move(n));
}

void SmootherWindow::set_outgoing(std::vector<TransitionRecord> transitions) {
  if (nodes_.empty()) {
    throw std::logic_error("SmootherWindow::set_outgoing on empty window");
  }
  nodes_.back().transitions = std::move(transitions);
}

std::vector<SmoothedEstimate> SmootherWindow::smooth() const {
  return backward_smooth(nodes_);
}

std::size_t SmootherWindow::expired_count() const {
  std::size_t count = 0;
  for (std::size_t i = 0; i + max_scans_ < scan_sizes_.size(); ++i) count += scan_sizes_[i];
  return count;
}

void SmootherWindow::drop_front(std::size_t count) {
  while (count > 0 && !scan_sizes_.empty()) {
    const std::size_t take = std::min(count, scan_sizes_.front());
    nodes_.erase(nodes_.begin(), nodes_.begin() + static_cast<std::ptrdiff_t>(take));
    scan_sizes_.front() -= take;
    if (scan_sizes_.front() == 0) scan_sizes_.pop_front();
    count -= take;
  }
}

}  // namespace rclio
