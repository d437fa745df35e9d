#include "shpc/regions.hpp"

#include "shpc/kdtree.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <ostream>
#include <stdexcept>

namespace shpc {

void DbscanParams::validate() const {
  if (!(eps > 0.0)) throw std::invalid_argument("dbscan eps must be positive");
  if (min_pts < 1) throw std::invalid_argument("dbscan min_pts must be >= 1");
}

DbscanResult dbscan(const Eigen::Matrix3Xd& positions, const DbscanParams& params) {
  params.validate();
  DbscanResult result;
  const std::size_t n = static_cast<std::size_t>(positions.cols());
  if (n == 0) return result;

  const KdTree tree(positions);
  constexpr int kUnvisited = -2;
  constexpr int kNoise = -1;
  std::vector<int> label(n, kUnvisited);
  const auto min_pts = static_cast<std::size_t>(params.min_pts);

  for (std::size_t p = 0; p < n; ++p) {
    if (label[p] != kUnvisited) continue;
    auto seeds = tree.radius(positions.col(static_cast<Eigen::Index>(p)), params.eps);
    if (seeds.size() < min_pts) {
      label[p] = kNoise;
      continue;
    }
    const int cluster = static_cast<int>(result.clusters.size());
    result.clusters.emplace_back();
    label[p] = cluster;
    std::deque<std::size_t> queue(seeds.begin(), seeds.end());
    while (!queue.empty()) {
      const std::size_t q = queue.front();
      queue.pop_front();
      if (label[q] == kNoise) label[q] = cluster;  // border point
      if (label[q] != kUnvisited) continue;
      label[q] = cluster;
      auto nbrs = tree.radius(positions.col(static_cast<Eigen::Index>(q)), params.eps);
      if (nbrs.size() >= min_pts) queue.insert(queue.end(), nbrs.begin(), nbrs.end());
    }
  }

  for (std::size_t p = 0; p < n; ++p) {
    if (label[p] >= 0) {
      result.clusters[static_cast<std::size_t>(label[p])].push_back(p);
    } else {
      result.noise.push_back(p);
    }
  }
  return result;
}

RegionParams RegionParams::defaults_for(const SemanticPointCloud& cloud) {
  const double eps = cloud.resolution() > 0.0 ? 4.0 * cloud.resolution() : 1.0;
  return {{eps, 5}, {eps, 5}};
}

namespace {

Eigen::Matrix3Xd gather(const SemanticPointCloud& cloud, const std::vector<std::size_t>& idx) {
  Eigen::Matrix3Xd out(3, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = cloud.position(idx[k]);
  return out;
}

}  // namespace

RegionSet two_stage_cluster(const SemanticPointCloud& cloud, const SafetyPartition& partition,
                            const RegionParams& params) {
  RegionSet set;
  set.point_to_region.assign(cloud.size(), -1);

  auto add_region = [&](std::vector<std::size_t> members, int dominant) {
    const int id = static_cast<int>(set.regions.size());
    std::sort(members.begin(), members.end());
    for (std::size_t i : members) set.point_to_region[i] = id;
    set.regions.push_back({id, std::move(members), dominant});
  };
  auto class_key = [&](std::size_t i) {
    return cloud.measurement_count(i) == 0 ? kNoPrediction : cloud.argmax_class(i);
  };

  const std::vector<std::size_t> unclear = partition.indices(SafetyLabel::Unclear);
  if (unclear.empty()) return set;

  const DbscanResult coarse = dbscan(gather(cloud, unclear), params.coarse);
  for (const auto& cluster : coarse.clusters) {
    std::map<int, std::vector<std::size_t>> groups;  // sorted by class key
    for (std::size_t local : cluster) {
      const std::size_t i = unclear[local];
      groups[class_key(i)].push_back(i);
    }
    for (const auto& [key, members] : groups) {
      const DbscanResult fine = dbscan(gather(cloud, members), params.fine);
      for (const auto& sub : fine.clusters) {
        std::vector<std::size_t> pts;
        pts.reserve(sub.size());
        for (std::size_t local : sub) pts.push_back(members[local]);
        add_region(std::move(pts), key);
      }
      for (std::size_t local : fine.noise) add_region({members[local]}, key);
    }
  }
  for (std::size_t local : coarse.noise) {
    const std::size_t i = unclear[local];
    add_region({i}, class_key(i));
  }
  return set;
}

std::vector<int> regions_traversed(std::span<const TrajectoryNode> path, const RegionSet& regions) {
  std::vector<int> ids;
  for (const TrajectoryNode& node : path) {
    for (std::size_t i : node.support) {
      const int r = regions.region_of(i);
      if (r >= 0) ids.push_back(r);
    }
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

void write_regions_csv(std::ostream& out, const RegionSet& regions, const ClassCatalog& catalog) {
  out << "point_index,region_id,dominant_class\n";
  for (std::size_t i = 0; i < regions.point_to_region.size(); ++i) {
    const int r = regions.point_to_region[i];
    if (r < 0) continue;
    const int dom = regions.regions[static_cast<std::size_t>(r)].dominant_class;
    out << i << ',' << r << ',' << (dom == kNoPrediction ? std::string("none") : catalog.names[static_cast<std::size_t>(dom)])
        << '\n';
  }
}

}  // namespace shpc
