#include "rclio/knn.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <stdexcept>

namespace rclio {

namespace {

constexpr std::size_t kLeafSize = 8;

bool closer(const Neighbor& a, const Neighbor& b) {
  if (a.squared_distance != b.squared_distance) {
    return a.squared_distance < b.squared_distance;
  }
  return a.index < b.index;
}

}  // namespace

std::vector<Neighbor> brute_force_knn(std::span<const Vec3> points, const Vec3& query, int k) {
  if (k <= 0 || points.empty()) {
    return {};
  }
  std::vector<Neighbor> all;
  all.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    all.push_back({points[i], (points[i] - query).squaredNorm(), i});
  }
  const std::size_t keep = std::min(all.size(), static_cast<std::size_t>(k));
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    closer);
  all.resize(keep);
  return all;
}

void KdTree::build(std::span<const Vec3> points) {
  points_.assign(points.begin(), points.end());
  order_.resize(points_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  nodes_.clear();
  nodes_.reserve(2 * points_.size() / kLeafSize + 1);
  root_ = points_.empty() ? -1 : build_node(0, points_.size());
}

int KdTree::build_node(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  if (end - begin <= kLeafSize) {
    nodes_[static_cast<std::size_t>(id)].begin = begin;
    nodes_[static_cast<std::size_t>(id)].end = end;
    return id;
  }
  // Split along the widest axis of the node's bounding box.
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  const double split = points_[order_[mid]][axis];
  const int left = build_node(begin, mid);
  const int right = build_node(mid, end);
  Node& n = nodes_[static_cast<std::size_t>(id)];
  n.axis = axis;
  n.split = split;
  n.left = left;
  n.right = right;
  n.begin = begin;
  n.end = end;
  return id;
}

std::vector<Neighbor> KdTree::knn(const Vec3& query, int k) const {
  if (k <= 0 || root_ < 0) {
    return {};
  }
  // Max-heap on (distance, index) holding the current best k.
  std::priority_queue<Neighbor, std::vector<Neighbor>, decltype(&closer)> best(closer);
  const auto kk = static_cast<std::size_t>(k);

  struct Frame {
    int node;
    double bound;  // squared distance from query to the splitting plane chain
  };
  std::vector<Frame> stack;
  stack.push_back({root_, 0.0});
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    if (best.size() == kk && f.bound > best.top().squared_distance) {
      continue;
    }
    const Node& n = nodes_[static_cast<std::size_t>(f.node)];
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        Neighbor cand{points_[idx], (points_[idx] - query).squaredNorm(), idx};
        if (best.size() < kk) {
          best.push(cand);
        } else if (closer(cand, best.top())) {
          best.pop();
          best.push(cand);
        }
      }
      continue;
    }
    const double diff = query[n.axis] - n.split;
    const int near = diff < 0.0 ? n.left : n.right;
    const int far = diff < 0.0 ? n.right : n.left;
    // Points equal to the split value can land on either side, so the far
    // side is pruned only by a strict bound.
    stack.push_back({far, std::max(f.bound, diff * diff)});
    stack.push_back({near, f.bound});
  }
  std::vector<Neighbor> out;
  out.reserve(best.size());
  while (!best.empty()) {
    out.push_back(best.top());
    best.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::size_t KdTree::memory_bytes() const {
  return points_.capacity() * sizeof(Vec3) + order_.capacity() * sizeof(std::size_t) +
         nodes_.capacity() * sizeof(Node);
}

}  // namespace rclio
