#pragma once

#include "rclio/state.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace rclio {

struct Neighbor {
  Vec3 point = Vec3::Zero();
  double squared_distance = 0.0;
  std::size_t index = 0;  // position in the source set, where one exists
};

/// Exact linear scan. Ties are broken by insertion index.
std::vector<Neighbor> brute_force_knn(std::span<const Vec3> points, const Vec3& query, int k);

/// Static median-split 3-d tree with exact k-NN; rebuilt from scratch on every build().
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points) { build(points); }

  void build(std::span<const Vec3> points);
  std::vector<Neighbor> knn(const Vec3& query, int k) const;

  std::size_t size() const { return points_.size(); }
  std::size_t memory_bytes() const;

 private:
  struct Node {
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    int left = -1;
    int right = -1;
    std::size_t begin = 0;
    std::size_t end = 0;
  };

  int build_node(std::size_t begin, std::size_t end);

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace rclio
