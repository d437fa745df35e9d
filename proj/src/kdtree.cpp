#include "shpc/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace shpc {

namespace {
constexpr std::uint32_t kLeafSize = 12;
}

KdTree::KdTree(const Eigen::Matrix3Xd& points) : points_(points) {
  order_.resize(static_cast<std::size_t>(points_.cols()));
  std::iota(order_.begin(), order_.end(), 0u);
  if (!order_.empty()) {
    nodes_.reserve(2 * order_.size() / kLeafSize + 2);
    build(0, static_cast<std::uint32_t>(order_.size()));
  }
}

int KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) return id;

  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_.col(order_[i]));
    hi = hi.cwiseMax(points_.col(order_[i]));
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident: keep as leaf

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) { return points_(axis, a) < points_(axis, b); });
  const double split = points_(axis, order_[mid]);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  Node& node = nodes_[static_cast<std::size_t>(id)];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

void KdTree::knn_recurse(int node_id, const Eigen::Vector3d& q, std::size_t k,
                         std::vector<Neighbor>& heap) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.axis < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      const Neighbor cand{idx, (points_.col(static_cast<Eigen::Index>(idx)) - q).squaredNorm()};
      if (heap.size() < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end());
      } else if (cand < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const int near = diff < 0.0 ? node.left : node.right;
  const int far = diff < 0.0 ? node.right : node.left;
  knn_recurse(near, q, k, heap);
  // Equal-distance candidates on the far side may still win on index.
  if (heap.size() < k || diff * diff <= heap.front().dist2) knn_recurse(far, q, k, heap);
}

std::vector<Neighbor> KdTree::knn(const Eigen::Vector3d& query, std::size_t k) const {
  std::vector<Neighbor> heap;
  if (k == 0 || empty()) return heap;
  heap.reserve(k + 1);
  knn_recurse(0, query, k, heap);
  std::sort_heap(heap.begin(), heap.end());
  return heap;
}

std::optional<Neighbor> KdTree::nearest(const Eigen::Vector3d& query) const {
  auto nn = knn(query, 1);
  if (nn.empty()) return std::nullopt;
  return nn.front();
}

void KdTree::radius_recurse(int node_id, const Eigen::Vector3d& q, double r2,
                            std::vector<std::size_t>& out) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.axis < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      if ((points_.col(order_[i]) - q).squaredNorm() <= r2) out.push_back(order_[i]);
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const int near = diff < 0.0 ? node.left : node.right;
  const int far = diff < 0.0 ? node.right : node.left;
  radius_recurse(near, q, r2, out);
  if (diff * diff <= r2) radius_recurse(far, q, r2, out);
}

std::vector<std::size_t> KdTree::radius(const Eigen::Vector3d& query, double radius) const {
  std::vector<std::size_t> out;
  if (empty()) return out;
  radius_recurse(0, query, radius * radius, out);
  std::sort(out.begin(), out.end());
  return out;
}

double median_spacing(const Eigen::Matrix3Xd& points, const KdTree& index) {
  const std::size_t n = static_cast<std::size_t>(points.cols());
  if (n < 2) return 0.0;
  std::vector<double> nn(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = index.knn(points.col(static_cast<Eigen::Index>(i)), 2);
    nn[i] = std::sqrt(k[1].dist2);
  }
  std::sort(nn.begin(), nn.end());
  const std::size_t h = n / 2;
  const double median = n % 2 ? nn[h] : 0.5 * (nn[h - 1] + nn[h]);
  if (median > 0.0) return median;
  const auto it = std::upper_bound(nn.begin(), nn.end(), 0.0);
  return it != nn.end() ? *it : 0.0;
}

}  // namespace shpc
