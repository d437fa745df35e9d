#include "shpc/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace shpc {

namespace {

constexpr int kGrass = 0;
constexpr int kGravel = 1;
constexpr int kDirt = 2;
constexpr int kWater = 3;

struct Surface {
  double z;
  int cls;
};

/// Regular grid over [x0, x1] x [y0, y1]; `at` gives height and class per cell.
GroundTruthScene grid_scene(double x0, double x1, double y0, double y1, double res,
                            const std::function<Surface(double, double)>& at) {
  const int nx = static_cast<int>(std::floor((x1 - x0) / res + 1e-9)) + 1;
  const int ny = static_cast<int>(std::floor((y1 - y0) / res + 1e-9)) + 1;
  Eigen::Matrix3Xd pts(3, nx * ny);
  std::vector<int> cls(static_cast<std::size_t>(nx * ny));
  int k = 0;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double x = x0 + i * res, y = y0 + j * res;
      const Surface s = at(x, y);
      pts.col(k) = Eigen::Vector3d(x, y, s.z);
      cls[static_cast<std::size_t>(k)] = s.cls;
      ++k;
    }
  }
  return GroundTruthScene(pts, cls, terrain_catalog());
}

Pose6D facing(double x, double y, double z, double tx, double ty) {
  return planar_pose(x, y, std::atan2(ty - y, tx - x), z);
}

SceneSetup flat_corridor(double res) {
  SceneSetup s;
  s.scene = grid_scene(0.0, 10.0, -1.5, 1.5, res, [](double, double) { return Surface{0.0, kGrass}; });
  s.start = facing(1.0, 0.0, 0.0, 8.5, 0.0);
  s.goal = facing(8.5, 0.0, 0.0, 10.0, 0.0);
  return s;
}

// Sunken water channel between a start and a goal bank, crossed by two
// bridges: 6 < x < 9 on the straight line, 5 < x < 11 off to the side. The bridge on the straight line is a dirt/water patchwork,
// the one off to the side gravel/grass, both in 0.2 m blocks.
SceneSetup two_bridges(double res) {
  SceneSetup s;
  s.scene = grid_scene(0.0, 12.0, -2.5, 4.5, res, [](double x, double y) {
    const bool side = y >= 1.6;
    if (x <= (side ? 5.0 : 6.0) + 1e-9 || x >= (side ? 11.0 : 9.0) - 1e-9) return Surface{0.0, kGrass};
    const bool odd = (static_cast<int>(std::floor(x / 0.2 + 1e-6)) + static_cast<int>(std::floor(y / 0.2 + 1e-6))) % 2 != 0;
    if (std::abs(y) <= 0.6 + 1e-9) return Surface{0.0, odd ? kWater : kDirt};
    if (y >= 2.2 - 1e-9 && y <= 3.4 + 1e-9) return Surface{0.0, odd ? kGrass : kGravel};
    return Surface{-1.0, kWater};
  });
  s.start = facing(2.0, 0.0, 0.0, 10.5, 0.0);
  s.goal = facing(10.5, 0.0, 0.0, 12.0, 0.0);
  return s;
}

// Safe disc around the start fenced in by a dirt ring; the goal lies outside.
SceneSetup annulus_trap(double res) {
  SceneSetup s;
  s.scene = grid_scene(-5.0, 5.0, -5.0, 5.0, res, [](double x, double y) {
    const double r = std::hypot(x, y);
    return Surface{0.0, (r >= 1.5 && r <= 2.5) ? kDirt : kGrass};
  });
  s.start = facing(0.0, 0.0, 0.0, 3.5, 0.0);
  s.goal = facing(3.5, 0.0, 0.0, 5.0, 0.0);
  return s;
}

// Plane rising along x with a gravel patch and a dirt patch.
SceneSetup inclined_field(double res) {
  constexpr double slope = 0.15;
  SceneSetup s;
  s.scene = grid_scene(0.0, 10.0, -2.5, 2.5, res, [](double x, double y) {
    int c = kGrass;
    if (x >= 3.0 && x <= 5.0 && y >= 0.5) c = kGravel;
    if (x >= 5.5 && x <= 6.5 && y <= -0.8) c = kDirt;
    return Surface{slope * x, c};
  });
  s.start = facing(1.0, 0.0, slope * 1.0, 8.5, 0.0);
  s.goal = facing(8.5, 0.0, slope * 8.5, 10.0, 0.0);
  return s;
}

}  // namespace

ClassCatalog terrain_catalog() {
  return ClassCatalog::from_safe_set({"grass", "gravel", "dirt", "water"}, {kGrass, kGravel});
}

void SceneSpec::validate() const {
  if (!(resolution >= 0.02 && resolution <= 1.0)) throw std::invalid_argument("scene resolution must be in [0.02, 1]");
  const auto& names = scene_generators();
  if (std::find(names.begin(), names.end(), generator) == names.end()) {
    throw std::invalid_argument("unknown scene generator: " + generator);
  }
}

const std::vector<std::string>& scene_generators() {
  static const std::vector<std::string> names{"flat-corridor", "two-bridges", "annulus-trap", "inclined-field"};
  return names;
}

SceneSetup generate_scene(const SceneSpec& spec) {
  spec.validate();
  if (spec.generator == "flat-corridor") return flat_corridor(spec.resolution);
  if (spec.generator == "two-bridges") return two_bridges(spec.resolution);
  if (spec.generator == "annulus-trap") return annulus_trap(spec.resolution);
  return inclined_field(spec.resolution);
}

}  // namespace shpc
