#pragma once

#include "shpc/geometry.hpp"
#include "shpc/kdtree.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace shpc {

/// Class names plus the safe/unsafe split of their indices.
struct ClassCatalog {
  std::vector<std::string> names;
  std::vector<int> safe;
  std::vector<int> unsafe;

  int size() const { return static_cast<int>(names.size()); }
  bool is_safe(int c) const;

  /// Throws std::invalid_argument unless C >= 2 and safe/unsafe partition the
  /// class indices.
  void validate() const;

  /// Catalog whose unsafe set is the complement of `safe`.
  static ClassCatalog from_safe_set(std::vector<std::string> names, std::vector<int> safe);
};

struct SafetyParams {
  double theta_safe = 0.9;
  double theta_unsafe = 0.3;
  double w_sigma = 3.0;

  /// Requires both thresholds in (0, 1], w_sigma >= 0 and 1 - theta_safe < theta_unsafe.
  void validate() const;
};

enum class SafetyLabel : std::uint8_t { Safe, Unsafe, Unclear };

const char* to_string(SafetyLabel label);

struct SafetyAggregate {
  double p_safe;
  double p_unsafe;
  double sigma;
};

enum class FusionMode { MeasurementNormalized, LiteralPaper };

const char* to_string(FusionMode mode);
FusionMode fusion_mode_from_string(const std::string& s);

inline constexpr double kInitialSigma = 0.5;
inline constexpr double kSigmaFloor = 1e-6;

struct SemanticPoint {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::VectorXd probs;
  Eigen::VectorXd uncerts;
  std::uint32_t measurement_count = 0;
};

/// p_S = sum over S, p_U = sum over U, sigma = min(||sigma_S||, ||sigma_U||).
SafetyAggregate aggregate_safety(const Eigen::Ref<const Eigen::VectorXd>& probs,
                                 const Eigen::Ref<const Eigen::VectorXd>& uncerts, const ClassCatalog& catalog);
SafetyAggregate aggregate_safety(const SemanticPoint& point, const ClassCatalog& catalog);

SafetyLabel classify_point(const Eigen::Ref<const Eigen::VectorXd>& probs,
                           const Eigen::Ref<const Eigen::VectorXd>& uncerts, const ClassCatalog& catalog,
                           const SafetyParams& params);
SafetyLabel classify_point(const SemanticPoint& point, const ClassCatalog& catalog, const SafetyParams& params);

struct ClassMeasurement {
  Eigen::VectorXd probs;
  Eigen::VectorXd uncerts;
};

/// Running inverse-variance statistics for one point: per class sum of
/// sigma^-2 and of sigma^-2 * p. Fused sigma is 1/sqrt(sum sigma^-2), which is
/// algebraically sqrt(sum_k w_k^2 sigma_k^2) with per-class normalized weights.
struct FusionAccumulator {
  Eigen::VectorXd inv_var;
  Eigen::VectorXd weighted;

  explicit FusionAccumulator(int num_classes = 0)
      : inv_var(Eigen::VectorXd::Zero(num_classes)), weighted(Eigen::VectorXd::Zero(num_classes)) {}

  void add(const Eigen::Ref<const Eigen::VectorXd>& probs, const Eigen::Ref<const Eigen::VectorXd>& uncerts);
  void result(Eigen::Ref<Eigen::VectorXd> probs, Eigen::Ref<Eigen::VectorXd> uncerts) const;
};

/// Combines a measurement history for one point. Zero sigmas are clamped to
/// kSigmaFloor. A single measurement is returned unchanged in
/// MeasurementNormalized mode. Throws std::invalid_argument on empty history.
ClassMeasurement fuse_class_measurements(std::span<const ClassMeasurement> history, FusionMode mode);

/// One semantic camera frame: depth plus per-pixel mean softmax and std.
/// Pixel (col, row) is stored at column row * width + col of probs/uncerts.
/// Depth <= 0 or non-finite marks an invalid pixel.
struct ViewMeasurement {
  Intrinsics K = Intrinsics::Identity();
  Pose6D pose = Pose6D::Identity();
  int width = 0;
  int height = 0;
  Eigen::MatrixXd depth;    // height x width
  Eigen::MatrixXd probs;    // C x (width * height)
  Eigen::MatrixXd uncerts;  // C x (width * height)

  bool valid_pixel(int col, int row) const {
    const double d = depth(row, col);
    return std::isfinite(d) && d > 0.0;
  }
  void validate(int num_classes) const;
};

struct IntegrationReport {
  std::size_t merged = 0;
  std::size_t discarded = 0;
};

class SemanticPointCloud {
 public:
  SemanticPointCloud() = default;

  /// Uniform probabilities and sigma = 0.5 per class for every point. Throws
  /// std::invalid_argument on empty input or non-finite coordinates.
  static SemanticPointCloud init(const Eigen::Matrix3Xd& positions, ClassCatalog catalog,
                                 FusionMode mode = FusionMode::MeasurementNormalized);

  std::size_t size() const { return static_cast<std::size_t>(positions_.cols()); }
  int num_classes() const { return catalog_.size(); }
  const ClassCatalog& catalog() const { return catalog_; }
  FusionMode fusion_mode() const { return mode_; }

  const Eigen::Matrix3Xd& positions() const { return positions_; }
  Eigen::Vector3d position(std::size_t i) const { return positions_.col(static_cast<Eigen::Index>(i)); }
  const Eigen::MatrixXd& probs() const { return probs_; }
  const Eigen::MatrixXd& uncerts() const { return uncerts_; }
  std::uint32_t measurement_count(std::size_t i) const { return counts_[i]; }
  SemanticPoint point(std::size_t i) const;

  /// Most likely class, ties to the lower index.
  int argmax_class(std::size_t i) const;

  /// Median nearest-neighbour distance (0 for a single point).
  double resolution() const { return resolution_; }
  const KdTree& index() const { return index_; }

  /// Replaces point i's state by a single measurement (used by loaders and
  /// fixtures). The fusion history restarts from this measurement.
  void set_state(std::size_t i, const Eigen::Ref<const Eigen::VectorXd>& probs,
                 const Eigen::Ref<const Eigen::VectorXd>& uncerts, std::uint32_t measurement_count);

  /// Backprojects every valid pixel and merges it into its nearest point
  /// within merge_radius (ties to the lower index); other pixels are dropped.
  IntegrationReport integrate_view(const ViewMeasurement& view, double merge_radius);

 private:
  void refuse(std::size_t i);

  ClassCatalog catalog_;
  FusionMode mode_ = FusionMode::MeasurementNormalized;
  Eigen::Matrix3Xd positions_;
  Eigen::MatrixXd probs_;
  Eigen::MatrixXd uncerts_;
  std::vector<std::uint32_t> counts_;
  double resolution_ = 0.0;
  KdTree index_;

  // MeasurementNormalized: running statistics, C x N each.
  Eigen::MatrixXd inv_var_;
  Eigen::MatrixXd weighted_;
  // LiteralPaper: full history per point, prior first.
  std::vector<std::vector<ClassMeasurement>> history_;
};

/// Free-function form; throws std::logic_error if mode differs from the
/// cloud's fusion mode (one mode per run).
IntegrationReport integrate_view(SemanticPointCloud& cloud, const ViewMeasurement& view, double merge_radius,
                                 FusionMode mode);

struct SafetyPartition {
  std::vector<SafetyLabel> labels;

  std::size_t count(SafetyLabel label) const;
  std::vector<std::size_t> indices(SafetyLabel label) const;
  bool is(std::size_t i, SafetyLabel label) const { return labels[i] == label; }
};

SafetyPartition partition_cloud(const SemanticPointCloud& cloud, const SafetyParams& params);

/// "SHPC1" little-endian binary format; throws std::runtime_error on bad input.
void write_cloud(std::ostream& out, const SemanticPointCloud& cloud);
SemanticPointCloud read_cloud(std::istream& in);
void save_cloud(const std::string& path, const SemanticPointCloud& cloud);
SemanticPointCloud load_cloud(const std::string& path);

}  // namespace shpc
