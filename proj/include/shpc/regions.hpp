#pragma once

#include "shpc/semantic_cloud.hpp"
#include "shpc/terrain.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <span>
#include <vector>

namespace shpc {

struct DbscanParams {
  double eps = 0.4;
  int min_pts = 5;

  void validate() const;
};

struct DbscanResult {
  /// Clusters in order of their lowest-index core point; members ascending.
  std::vector<std::vector<std::size_t>> clusters;
  std::vector<std::size_t> noise;
};

/// Density clustering. Core points have >= min_pts neighbours within eps
/// (self included). Points are visited in index order and each cluster is
/// grown breadth-first, so a border point reachable from several clusters
/// joins the one seeded first.
DbscanResult dbscan(const Eigen::Matrix3Xd& positions, const DbscanParams& params);

/// Stand-in class id for points that never received a measurement.
inline constexpr int kNoPrediction = -1;

struct UnclearRegion {
  int id = 0;
  std::vector<std::size_t> point_indices;  // ascending
  int dominant_class = kNoPrediction;
};

struct RegionSet {
  std::vector<UnclearRegion> regions;
  std::vector<int> point_to_region;  // -1 for points outside M_unclear

  int region_of(std::size_t point) const { return point_to_region[point]; }
  std::size_t size() const { return regions.size(); }
  bool empty() const { return regions.empty(); }
};

struct RegionParams {
  DbscanParams coarse;
  DbscanParams fine;

  /// eps = 4 x cloud resolution, min_pts = 5 at both stages.
  static RegionParams defaults_for(const SemanticPointCloud& cloud);
};

/// Coarse DBSCAN over the unclear points, then per coarse cluster a second
/// DBSCAN within each most-likely-class group. Noise from either stage becomes
/// a singleton region, so the result partitions M_unclear.
RegionSet two_stage_cluster(const SemanticPointCloud& cloud, const SafetyPartition& partition,
                            const RegionParams& params);

/// Region ids whose points intersect any node's support set, ascending.
std::vector<int> regions_traversed(std::span<const TrajectoryNode> path, const RegionSet& regions);

/// CSV: point_index,region_id,dominant_class (one row per unclear point).
void write_regions_csv(std::ostream& out, const RegionSet& regions, const ClassCatalog& catalog);

}  // namespace shpc
