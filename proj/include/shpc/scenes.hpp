#pragma once

#include "shpc/geometry.hpp"
#include "shpc/sensor.hpp"

#include <string>
#include <vector>

namespace shpc {

/// grass, gravel safe; dirt, water unsafe.
ClassCatalog terrain_catalog();

/// Built-in synthetic scene with its reference start and goal poses.
struct SceneSetup {
  GroundTruthScene scene;
  Pose6D start = Pose6D::Identity();
  Pose6D goal = Pose6D::Identity();
};

struct SceneSpec {
  std::string generator = "two-bridges";
  double resolution = 0.1;  ///< grid spacing, m

  void validate() const;
};

/// "flat-corridor", "two-bridges", "annulus-trap", "inclined-field".
const std::vector<std::string>& scene_generators();

/// Throws std::invalid_argument for unknown generators or a bad resolution.
SceneSetup generate_scene(const SceneSpec& spec);

}  // namespace shpc
