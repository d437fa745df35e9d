#pragma once

#include "shpc/geometry.hpp"

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace shpc {

class SemanticPointCloud;

struct TraversabilityParams {
  double max_roll = 0.35;      ///< rad
  double max_pitch = 0.35;     ///< rad
  double max_residual = 0.05;  ///< m, RMS plane-fit residual
  int K = 20;                  ///< support points per pose
  double max_support_gap = 0.2;  ///< m; nearest support farther than this means the pose overhangs an edge

  void validate() const;
};

struct KinematicParams {
  double segment_length = 0.5;  ///< m
  double kappa_max = 1.0;       ///< 1/m

  void validate() const;
};

/// Planar segment with curvature kappa(s) = a + b s + c s^2 + d s^3, s in [0, L].
struct MotionPrimitive {
  std::array<double, 4> coeffs{};  // a, b, c, d
  double length = 0.0;
  bool reverse = false;

  double curvature(double s) const {
    return coeffs[0] + s * (coeffs[1] + s * (coeffs[2] + s * coeffs[3]));
  }
  double start_curvature() const { return coeffs[0]; }
  double end_curvature() const { return curvature(length); }
  /// max |kappa(s)| over [0, L], exact (endpoints and stationary points).
  double max_abs_curvature() const;
};

/// Pose in a local plane plus curvature.
struct PlanarState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double curvature = 0.0;
};

struct TrajectoryNode {
  Pose6D pose = Pose6D::Identity();  ///< terrain-attached
  double traversability = 0.0;
  double curvature = 0.0;            ///< at the start of outgoing segments
  std::vector<std::size_t> support;  ///< K nearest surface points
};

struct SurfaceFit {
  Pose6D pose;
  std::vector<std::size_t> support;
  double residual = 0.0;  ///< RMS distance of support points to the plane
};

/// Terrain projection f: K nearest points of the pose position, least-squares
/// plane, position moved vertically onto the plane, z axis along the upward
/// normal, heading projected into the plane (or `fallback_heading` when the
/// heading is parallel to the normal). The support set is re-queried at the
/// projected position until it settles (at most three fits). nullopt for
/// degenerate or overhanging neighbourhoods.
std::optional<SurfaceFit> project_to_surface(const SemanticPointCloud& cloud, const Pose6D& pose,
                                             const TraversabilityParams& params,
                                             const std::optional<Eigen::Vector3d>& fallback_heading = std::nullopt);

/// (1 - |roll|/max_roll)(1 - |pitch|/max_pitch)(1 - residual/max_residual),
/// zero once any bound is reached.
double traversability(const Pose6D& pose, std::span<const std::size_t> support, const SemanticPointCloud& cloud,
                      const TraversabilityParams& params);

/// RK4 over [0, L] with `steps` fixed steps. Throws std::invalid_argument if
/// the primitive's start curvature differs from start.curvature or the
/// curvature bound is exceeded.
PlanarState integrate_primitive(const PlanarState& start, const MotionPrimitive& primitive, double kappa_max,
                                int steps = 100);

/// Terrain-attached node at `pose`, or nullopt if unprojectable or tau == 0.
std::optional<TrajectoryNode> attach_node(const SemanticPointCloud& cloud, const Pose6D& pose,
                                          const TraversabilityParams& params, double curvature = 0.0);

/// Follows the primitive in the node's local xy plane and re-attaches the end
/// pose to the terrain. nullopt on discontinuous curvature, bound violation,
/// failed projection or tau == 0.
std::optional<TrajectoryNode> extend(const TrajectoryNode& node, const MotionPrimitive& primitive,
                                     const SemanticPointCloud& cloud, const TraversabilityParams& params,
                                     const KinematicParams& kinematics);

/// Five forward ramps to {-k, -k/2, 0, k/2, k} over L plus reverse
/// straightening ramps of length L and L/2; all start at kappa0.
std::vector<MotionPrimitive> primitive_library(double kappa0, const KinematicParams& kinematics);

/// Forward cubic spiral from (0, 0, 0, from_curvature) to `target` (position,
/// heading, curvature) solved by Newton iteration; nullopt if it fails to
/// converge or breaks the curvature bound.
std::optional<MotionPrimitive> connect_states(double from_curvature, const PlanarState& target,
                                              const KinematicParams& kinematics);

/// Planar coordinates of `point`/`heading` in the node's local frame.
PlanarState to_local(const TrajectoryNode& node, const Eigen::Vector3d& point, const Eigen::Vector3d& heading,
                     double curvature);

/// CSV: node_index,x,y,z,roll,pitch,yaw,tau,kappa.
void write_path_csv(std::ostream& out, std::span<const TrajectoryNode> path);

}  // namespace shpc
