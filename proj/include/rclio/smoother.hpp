#pragma once

#include "rclio/imu_propagation.hpp"
#include "rclio/state.hpp"

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

namespace rclio {

using GainMat = CovMat;

/// Filter output at one sub-frame plus the IMU transitions that carry it to the next node.
struct SmootherNode {
  double timestamp = 0.0;
  NominalState filtered_state;
  CovMat filtered_cov = CovMat::Identity();
  std::vector<TransitionRecord> transitions;  // empty for the newest node
};

struct SmoothedEstimate {
  NominalState state;
  CovMat covariance = CovMat::Identity();
  GainMat gain = GainMat::Zero();
};

struct NodePrediction {
  NominalState state;
  CovMat covariance;
  CovMat transition;  // product of all (I + F dt) in the chain
};

/// Re-propagates the node's corrected state and covariance through its stored transitions.
NodePrediction predict_node(const SmootherNode& node);

/// G = P (I + F dt)^T [P_pred]^-1. Adds 1e-12 I to P_pred when it is not
/// positive definite; throws std::runtime_error if that does not help.
GainMat smooth_gain(const CovMat& p, const CovMat& transition, const CovMat& p_pred,
                    bool* regularized = nullptr);

/// Backward pass over time-ordered nodes. The terminal estimate equals its
/// filtered estimate; earlier nodes fold in the manifold difference
/// x_{k+1}^s [-] x_{k+1}^- through the gain.
std::vector<SmoothedEstimate> backward_smooth(std::span<const SmootherNode> nodes);

enum class IntegrityDirection {
  /// Sufficient when the smallest eigenvalue of the pose information matrix
  /// (inverse pose covariance) exceeds the threshold.
  kInformationAbove,
  /// Sufficient when the smallest pose-covariance eigenvalue is below the threshold.
  kCovarianceBelow,
  /// Sufficient when the smallest pose-covariance eigenvalue exceeds the threshold.
  kCovarianceAbove,
};

struct IntegrityVerdict {
  bool sufficient = false;
  double min_eigenvalue = 0.0;
  double threshold = 0.0;
};

/// Eigenvalue gate on the 6x6 (position, rotation) block of P.
IntegrityVerdict check_integrity(const CovMat& p, double threshold,
                                 IntegrityDirection direction = IntegrityDirection::kInformationAbove);

/// Sub-frame nodes of the most recent full scans. Nodes are appended one scan
/// at a time; once more than `scans` scans are held, the oldest scan's nodes
/// are handed back through `expire()`.
class SmootherWindow {
 public:
  explicit SmootherWindow(std::size_t scans = 3) : max_scans_(scans) {}

  void add_scan(std::vector<SmootherNode> nodes);
  /// Attaches transitions leading out of the newest node.
  void set_outgoing(std::vector<TransitionRecord> transitions);

  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<SmootherNode>& nodes() const { return nodes_; }
  const std::deque<std::size_t>& scan_sizes() const { return scan_sizes_; }

  std::vector<SmoothedEstimate> smooth() const;

  /// Number of leading nodes that belong to scans beyond the window length.
  std::size_t expired_count() const;
  void drop_front(std::size_t count);

 private:
  std::size_t max_scans_;
  std::vector<SmootherNode> nodes_;
  std::deque<std::size_t> scan_sizes_;
};

}  // namespace rclio
