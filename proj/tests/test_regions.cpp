#include <doctest.h>

#include "dbscan_oracle.hpp"
#include "fixtures.hpp"
#include "shpc/regions.hpp"

#include <set>
#include <sstream>

using namespace shpc;
using shpc::test::catalog4;

TEST_CASE("dbscan examples") {
  SUBCASE("two blobs") {
    Eigen::Matrix3Xd pts(3, 20);
    for (int i = 0; i < 10; ++i) {
      pts.col(i) = Eigen::Vector3d(0.1 * i, 0, 0);
      pts.col(10 + i) = Eigen::Vector3d(10.0 + 0.1 * i, 0, 0);
    }
    const auto r = dbscan(pts, {0.5, 3});
    CHECK(r.clusters.size() == 2);
    CHECK(r.noise.empty());
    CHECK(test::same_clustering(r, test::naive_dbscan(pts, {0.5, 3})));
  }
  SUBCASE("all isolated") {
    const auto pts = test::grid(5, 5, 1.0);
    const auto r = dbscan(pts, {0.5, 2});
    CHECK(r.clusters.empty());
    CHECK(r.noise.size() == 25);
  }
  SUBCASE("single point, min_pts 1") {
    const auto r = dbscan(Eigen::Matrix3Xd::Zero(3, 1), {0.5, 1});
    REQUIRE(r.clusters.size() == 1);
    CHECK(r.clusters[0].size() == 1);
  }
  SUBCASE("invalid params") {
    CHECK_THROWS_AS(dbscan(Eigen::Matrix3Xd::Zero(3, 1), {0.0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(dbscan(Eigen::Matrix3Xd::Zero(3, 1), {1.0, 0}), std::invalid_argument);
  }
}

TEST_CASE("dbscan agrees with the naive reference") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 50 + static_cast<int>(rng.index(250));
    Eigen::Matrix3Xd pts(3, n);
    for (int i = 0; i < n; ++i) {
      // Lattice coordinates put many pairs exactly at eps.
      pts.col(i) = Eigen::Vector3d(std::round(rng.uniform(0, 20)) * 0.25, std::round(rng.uniform(0, 20)) * 0.25,
                                   trial % 3 == 0 ? 0.0 : rng.uniform(0, 0.5));
    }
    const DbscanParams params{0.25 + 0.25 * static_cast<double>(rng.index(3)), 2 + static_cast<int>(rng.index(6))};
    const auto got = dbscan(pts, params);
    const auto want = test::naive_dbscan(pts, params);
    // Border ownership follows the lowest seeding core, so order matches exactly.
    CHECK(got.clusters == want.clusters);
    CHECK(got.noise == want.noise);
  }
}

namespace {

void check_partition(const SemanticPointCloud& cloud, const SafetyPartition& part, const RegionSet& rs) {
  std::size_t total = 0;
  for (const auto& r : rs.regions) {
    REQUIRE_FALSE(r.point_indices.empty());
    total += r.point_indices.size();
    std::set<int> keys;
    for (std::size_t i : r.point_indices) {
      CHECK(part.is(i, SafetyLabel::Unclear));
      CHECK(rs.region_of(i) == r.id);
      keys.insert(cloud.measurement_count(i) == 0 ? kNoPrediction : cloud.argmax_class(i));
    }
    CHECK(keys.size() == 1);
    CHECK(*keys.begin() == r.dominant_class);
  }
  CHECK(total == part.count(SafetyLabel::Unclear));
  for (std::size_t i = 0; i < cloud.size(); ++i) CHECK((rs.region_of(i) >= 0) == part.is(i, SafetyLabel::Unclear));
}

}  // namespace

TEST_CASE("two_stage_cluster") {
  const SafetyParams sp;
  SUBCASE("no unclear points") {
    auto cloud = SemanticPointCloud::init(test::grid(6, 6, 0.1), catalog4());
    test::label_all(cloud, [](std::size_t) { return 0; });
    const auto part = partition_cloud(cloud, sp);
    CHECK(two_stage_cluster(cloud, part, RegionParams::defaults_for(cloud)).empty());
  }
  SUBCASE("fresh blob is one no-prediction region") {
    auto cloud = SemanticPointCloud::init(test::grid(8, 8, 0.1), catalog4());
    const auto part = partition_cloud(cloud, sp);
    const auto rs = two_stage_cluster(cloud, part, RegionParams::defaults_for(cloud));
    REQUIRE(rs.size() == 1);
    CHECK(rs.regions[0].dominant_class == kNoPrediction);
    check_partition(cloud, part, rs);
  }
  SUBCASE("mixed argmax classes split into two regions") {
    // One contiguous unclear strip: left half leans grass, right half leans dirt.
    auto cloud = SemanticPointCloud::init(test::grid(20, 5, 0.1), catalog4());
    const Eigen::Vector4d grassy(0.55, 0.15, 0.15, 0.15), dirty(0.15, 0.15, 0.55, 0.15);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      cloud.set_state(i, (i % 20) < 10 ? grassy : dirty, Eigen::Vector4d::Constant(0.1), 1);
    }
    const auto part = partition_cloud(cloud, sp);
    REQUIRE(part.count(SafetyLabel::Unclear) == cloud.size());
    const RegionParams params{{0.4, 5}, {0.15, 3}};
    CHECK(dbscan(cloud.positions(), params.coarse).clusters.size() == 1);
    const auto rs = two_stage_cluster(cloud, part, params);
    REQUIRE(rs.size() == 2);
    CHECK(rs.regions[0].dominant_class != rs.regions[1].dominant_class);
    check_partition(cloud, part, rs);
  }
  SUBCASE("noise becomes singletons") {
    Eigen::Matrix3Xd pts = test::grid(6, 6, 0.1);
    pts.conservativeResize(3, 37);
    pts.col(36) = Eigen::Vector3d(30, 30, 0);
    auto cloud = SemanticPointCloud::init(pts, catalog4());
    const auto part = partition_cloud(cloud, sp);
    const auto rs = two_stage_cluster(cloud, part, RegionParams::defaults_for(cloud));
    CHECK(rs.size() == 2);
    CHECK(rs.regions[rs.region_of(36)].point_indices.size() == 1);
    check_partition(cloud, part, rs);
  }
  SUBCASE("random labelings partition the unclear set") {
    Rng rng(4);
    for (int t = 0; t < 10; ++t) {
      auto cloud = SemanticPointCloud::init(test::grid(15, 15, 0.1), catalog4());
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (rng.uniform() < 0.2) continue;  // leave unmeasured
        cloud.set_state(i, test::random_simplex(rng, 4), Eigen::Vector4d::Constant(rng.uniform(0, 0.05)), 1);
      }
      const auto part = partition_cloud(cloud, sp);
      check_partition(cloud, part, two_stage_cluster(cloud, part, RegionParams::defaults_for(cloud)));
    }
  }
}

TEST_CASE("regions_traversed and CSV") {
  auto cloud = SemanticPointCloud::init(test::grid(10, 1, 1.0), catalog4());
  RegionSet rs;
  rs.point_to_region = {-1, -1, 0, 0, 1, 1, 2, 3, 3, -1};
  rs.regions = {{0, {2, 3}, kNoPrediction}, {1, {4, 5}, 2}, {2, {6}, 3}, {3, {7, 8}, 3}};
  TrajectoryNode a, b;
  a.support = {0, 1};
  CHECK(regions_traversed(std::span(&a, 1), rs).empty());
  b.support = {6, 9};
  CHECK(regions_traversed(std::span(&b, 1), rs) == std::vector<int>{2});
  a.support = {3, 4, 5};
  b.support = {2, 5, 8};
  const std::vector<TrajectoryNode> path{a, b};
  CHECK(regions_traversed(path, rs) == std::vector<int>{0, 1, 3});

  std::ostringstream out;
  write_regions_csv(out, rs, catalog4());
  CHECK(out.str().rfind("point_index,region_id,dominant_class\n2,0,none\n3,0,none\n4,1,dirt\n", 0) == 0);
}
