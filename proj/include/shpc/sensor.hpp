#pragma once

#include "shpc/geometry.hpp"
#include "shpc/kdtree.hpp"
#include "shpc/random.hpp"
#include "shpc/semantic_cloud.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace shpc {

/// Annotated surface points the simulated camera looks at.
class GroundTruthScene {
 public:
  GroundTruthScene() = default;

  /// Computes boundary distances and spacing. Throws std::invalid_argument on
  /// empty input, size mismatch or class ids outside the catalog.
  GroundTruthScene(Eigen::Matrix3Xd positions, std::vector<int> classes, ClassCatalog catalog);

  std::size_t size() const { return classes_.size(); }
  const ClassCatalog& catalog() const { return catalog_; }
  const Eigen::Matrix3Xd& positions() const { return positions_; }
  const std::vector<int>& classes() const { return classes_; }
  /// Distance to the nearest point of another class; infinite if there is none.
  const std::vector<double>& boundary_distance() const { return boundary_; }
  /// Median nearest-neighbour spacing.
  double resolution() const { return resolution_; }
  const KdTree& index() const { return index_; }
  bool truly_unsafe(std::size_t i) const { return !catalog_.is_safe(classes_[i]); }

 private:
  Eigen::Matrix3Xd positions_;
  std::vector<int> classes_;
  ClassCatalog catalog_;
  std::vector<double> boundary_;
  double resolution_ = 0.0;
  KdTree index_;
};

/// "SHPC-SCENE 1", a line "classes name:s|u ...", then "x y z class_id" per point.
void write_scene(std::ostream& out, const GroundTruthScene& scene);
GroundTruthScene read_scene(std::istream& in);
void save_scene(const std::string& path, const GroundTruthScene& scene);
GroundTruthScene load_scene(const std::string& path);

/// Logit-space Gaussian noise around a scaled one-hot of the true class.
struct NoiseModel {
  double base_logit = 8.0;
  double distance_coeff = 0.15;  ///< std growth per metre of depth
  double boundary_coeff = 25.0;  ///< extra std at a class boundary
  double boundary_scale = 0.1;   ///< m
  int passes = 50;               ///< T

  /// std = distance_coeff depth + boundary_coeff exp(-boundary_distance / boundary_scale).
  double noise_std(double depth, double boundary_distance) const;
  void validate() const;
};

struct GroundTruthImage {
  int width = 0;
  int height = 0;
  Eigen::MatrixXd depth;    ///< height x width, 0 where invalid
  std::vector<int> point;   ///< row-major owner point, -1 where invalid
  std::vector<int> classes; ///< row-major true class, -1 where invalid

  bool valid(int col, int row) const { return point[static_cast<std::size_t>(row) * width + col] >= 0; }
};

/// Splat render of the scene (side resolution / 2).
GroundTruthImage render_ground_truth(const GroundTruthScene& scene, const Pose6D& camera_to_map, const Intrinsics& K,
                                     int width, int height);

/// T softmax samples (C x T) for one pixel: softmax(base_logit e_true + eps),
/// eps ~ N(0, std^2) per class, drawn from Rng(pixel_seed) class-major within
/// each pass.
Eigen::MatrixXd sample_pixel_passes(int true_class, int num_classes, double base_logit, double noise_std,
                                    int passes, std::uint64_t pixel_seed);

/// Per-pixel stream seed.
inline std::uint64_t pixel_seed(std::uint64_t view_seed, std::size_t pixel) {
  return derive_seed(view_seed, "pixel", pixel);
}

struct RenderedView {
  GroundTruthImage truth;
  Eigen::MatrixXd probs;    ///< C x pixels, sample mean; 0 on invalid pixels
  Eigen::MatrixXd uncerts;  ///< C x pixels, sample std with divisor T - 1; 0 on invalid pixels
};

/// Mean and sample standard deviation of the passes for every valid pixel.
RenderedView simulate_passes(const GroundTruthImage& truth, const GroundTruthScene& scene, const NoiseModel& noise,
                             std::uint64_t seed);

ViewMeasurement take_view(const GroundTruthScene& scene, const Pose6D& camera_to_map, const Intrinsics& K, int width,
                          int height, const NoiseModel& noise, std::uint64_t seed);

/// Per-point pass statistics, C x points.
struct PointMeasurements {
  Eigen::MatrixXd probs;
  Eigen::MatrixXd uncerts;
};

/// Long-range survey: every scene point measured once with the noise it would
/// have at its straight-line distance from `viewpoint`. No image and no
/// occlusion; point i uses the stream pixel_seed(seed, i).
PointMeasurements survey_points(const GroundTruthScene& scene, const Eigen::Vector3d& viewpoint,
                                const NoiseModel& noise, std::uint64_t seed);

}  // namespace shpc
