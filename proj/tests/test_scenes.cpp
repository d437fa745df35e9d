#include <doctest.h>

#include "shpc/scenes.hpp"
#include "shpc/terrain.hpp"

#include <sstream>

using namespace shpc;

namespace {

std::size_t nearest(const GroundTruthScene& scene, double x, double y) {
  std::size_t best = 0;
  double d = 1e18;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const double e = (scene.positions().col(static_cast<Eigen::Index>(i)).head<2>() - Eigen::Vector2d(x, y)).norm();
    if (e < d) d = e, best = i;
  }
  return best;
}

}  // namespace

TEST_CASE("every generator yields attachable start and goal") {
  const TraversabilityParams tp;
  for (const auto& name : scene_generators()) {
    CAPTURE(name);
    const SceneSetup s = generate_scene({name, 0.1});
    CHECK(s.scene.size() > 100);
    CHECK(s.scene.resolution() == doctest::Approx(0.1));
    const auto cloud = SemanticPointCloud::init(s.scene.positions(), s.scene.catalog());
    CHECK(attach_node(cloud, s.start, tp));
    CHECK(attach_node(cloud, s.goal, tp));
    CHECK(!s.scene.truly_unsafe(nearest(s.scene, s.start.translation().x(), s.start.translation().y())));
  }
}

TEST_CASE("two bridges layout") {
  const SceneSetup s = generate_scene({"two-bridges", 0.1});
  const auto& cls = s.scene.classes();
  const auto& cat = s.scene.catalog();
  // Straight bridge is all unsafe, side bridge all safe.
  for (double x = 6.15; x < 8.9; x += 0.3) {
    for (double y = -0.55; y <= 0.55; y += 0.2) CHECK(s.scene.truly_unsafe(nearest(s.scene, x, y)));
  }
  for (double x = 5.15; x < 10.9; x += 0.3) {
    for (double y = 2.25; y <= 3.35; y += 0.2) CHECK_FALSE(s.scene.truly_unsafe(nearest(s.scene, x, y)));
  }
  const std::size_t water = nearest(s.scene, 7.5, 1.5);
  CHECK(cat.names[static_cast<std::size_t>(cls[water])] == "water");
  CHECK(s.scene.positions()(2, static_cast<Eigen::Index>(water)) == -1.0);
  CHECK(s.scene.boundary_distance()[nearest(s.scene, 7.5, 0.0)] == doctest::Approx(0.1));
  CHECK(s.scene.boundary_distance()[nearest(s.scene, 5.95, -2.0)] > 0.9);
}

TEST_CASE("SceneSpec validation") {
  CHECK_THROWS_AS(generate_scene({"moon", 0.1}), std::invalid_argument);
  CHECK_THROWS_AS(generate_scene({"two-bridges", 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(generate_scene({"two-bridges", 2.0}), std::invalid_argument);
  const ClassCatalog cat = terrain_catalog();
  CHECK(cat.is_safe(0));
  CHECK(cat.is_safe(1));
  CHECK_FALSE(cat.is_safe(2));
  CHECK_FALSE(cat.is_safe(3));
}

TEST_CASE("generated scene survives the text format") {
  const SceneSetup s = generate_scene({"annulus-trap", 0.25});
  std::stringstream io;
  write_scene(io, s.scene);
  const GroundTruthScene back = read_scene(io);
  CHECK(back.classes() == s.scene.classes());
  CHECK(back.positions() == s.scene.positions());
}
