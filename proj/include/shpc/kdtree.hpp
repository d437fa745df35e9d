#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace shpc {

struct Neighbor {
  std::size_t index;
  double dist2;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
  }
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Static kd-tree over 3D points. Queries are exact; equal distances are
/// ordered by lower point index, so results match a sorted linear scan.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(const Eigen::Matrix3Xd& points);

  std::size_t size() const { return static_cast<std::size_t>(points_.cols()); }
  bool empty() const { return size() == 0; }

  /// k nearest neighbours sorted by (distance, index).
  std::vector<Neighbor> knn(const Eigen::Vector3d& query, std::size_t k) const;

  std::optional<Neighbor> nearest(const Eigen::Vector3d& query) const;

  /// Indices within `radius` (inclusive), ascending by index.
  std::vector<std::size_t> radius(const Eigen::Vector3d& query, double radius) const;

 private:
  struct Node {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int axis = -1;
    double split = 0.0;
  };

  int build(std::uint32_t begin, std::uint32_t end);
  void knn_recurse(int node, const Eigen::Vector3d& q, std::size_t k, std::vector<Neighbor>& heap) const;
  void radius_recurse(int node, const Eigen::Vector3d& q, double r2, std::vector<std::size_t>& out) const;

  Eigen::Matrix3Xd points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

/// Median nearest-neighbour distance; duplicated positions fall back to the
/// smallest positive spacing. 0 for fewer than two points.
double median_spacing(const Eigen::Matrix3Xd& points, const KdTree& index);

}  // namespace shpc
