#pragma once

#include "shpc/hypothesis.hpp"
#include "shpc/random.hpp"
#include "shpc/render.hpp"
#include "shpc/semantic_cloud.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace shpc {

/// Semantic camera mounted on the robot: camera yaw follows the robot heading,
/// optical axis pitched down. Camera frame is z forward, x right, y down.
struct CameraRig {
  double mount_height = 1.5;  ///< m above the terrain-attached robot position
  double pitch_down = 0.35;   ///< rad
  double fov = 1.4;           ///< horizontal field of view, rad
  int width = 160;
  int height = 120;

  Intrinsics intrinsics() const { return pinhole_intrinsics(width, height, fov); }
  Pose6D camera_pose(const Pose6D& robot) const;
  void validate() const;
};

struct NbvWeights {
  double beta_d = 0.4;
  double beta_gamma = 0.05;
  double beta_vis = 0.25;
  double beta_q = 0.3;
  double alpha_i = 0.5;
  double alpha_sigma = 0.5;

  /// Betas and alphas each non-negative and summing to 1 within 1e-9.
  void validate() const;
  /// beta_q = 0, remaining betas rescaled to sum to 1.
  NbvWeights geometry_only() const;
  /// beta_q = 1, other betas 0.
  NbvWeights uncertainty_only() const;
};

enum class NbvSelector { Full, Random, GeometryOnly, UncertaintyOnly };

const char* to_string(NbvSelector s);
/// "full", "random", "geometry", "uncertainty".
NbvSelector nbv_selector_from_string(const std::string& s);

struct CandidateParams {
  double radius = 4.0;  ///< r, m from the start
  int count = 8;        ///< n
  int budget = 300;     ///< RRT iterations
  PlannerParams planner;
};

/// NBV candidate robot poses: an RRT over Safe points within `radius` of the
/// start (Unclear counts as unsafe), subsampled to `count` vertices by
/// farthest-point selection seeded with the root, each turned to face the
/// goal. Empty if the start cannot be attached or has no Safe support.
std::vector<Pose6D> generate_candidates(const SemanticPointCloud& cloud, const SafetyPartition& partition,
                                        const Pose6D& start, const Eigen::Vector3d& goal, const CandidateParams& params,
                                        std::uint64_t seed);

/// Splats of side resolution / 2.
VisibilityImage render_visibility(const SemanticPointCloud& cloud, const Pose6D& camera_to_map, const Intrinsics& K,
                                  int width, int height);

struct VertexVisibility {
  int pixels = 0;
  bool visible = false;
};

/// I = coverage summed over the support set; visible iff I > pixel_threshold.
VertexVisibility vertex_visibility(const TrajectoryNode& v, const VisibilityImage& image, int pixel_threshold);

/// Mean over the support set of the per-point sum of class sigmas.
double vertex_uncertainty(const TrajectoryNode& v, const SemanticPointCloud& cloud);

double info_gain(double i_norm, double sigma_norm, const NbvWeights& w);

/// Vertices with 0 < c < inf on the given paths, ascending.
std::vector<int> nbv_vertex_set(const HypothesisGraph& graph, const std::vector<CandidatePath>& paths);

struct NbvCandidate {
  Pose6D pose = Pose6D::Identity();  ///< robot pose
  std::vector<int> visible;          ///< V_vis, graph vertex ids
  // Raw terms before normalisation.
  double mean_distance = 0.0;
  double mean_neg_cos = 0.0;
  double mean_q = 0.0;
  // Normalised terms and reward.
  double D = 0.0;
  double gamma = 0.0;
  double n_vis = 0.0;
  double q_bar = 0.0;
  double J = 0.0;
};

/// Min-max normalisation over the inputs; every entry 1 when max == min.
std::vector<double> minmax_normalize(const std::vector<double>& x);

/// J = beta_d D + beta_gamma gamma + beta_vis N_vis + beta_q Q_bar with every
/// term min-max normalised over candidates whose V_vis is non-empty; others
/// get J = 0.
void score_candidates(std::vector<NbvCandidate>& candidates, const NbvWeights& w);

struct NbvEvaluation {
  std::vector<NbvCandidate> candidates;
  // Per candidate, per V_NBV entry: pixel count and visibility.
  std::vector<std::vector<VertexVisibility>> visibility;
};

/// Renders every candidate view, fills V_vis, the raw terms and Q, and scores.
NbvEvaluation evaluate_candidates(const SemanticPointCloud& cloud, const HypothesisGraph& graph,
                                  const std::vector<int>& vnbv, const std::vector<Pose6D>& candidates,
                                  const Pose6D& start, const CameraRig& rig, int render_size, int pixel_threshold,
                                  const NbvWeights& weights);

/// Argmax J, ties to the lower index; nullopt for an empty list.
std::optional<std::size_t> select_nbv(const std::vector<NbvCandidate>& candidates);

/// Index chosen by `selector`: Full scores with `weights`, GeometryOnly and
/// UncertaintyOnly rescore a copy with the derived weights, Random draws
/// uniformly with `rng`.
std::optional<std::size_t> select_with(NbvSelector selector, const NbvEvaluation& evaluation,
                                       const NbvWeights& weights, Rng& rng);

/// Straight-line return corridor for fixed candidate lists: every cloud point
/// within width / 2 (in xy) of the segment start-candidate must be Safe.
bool corridor_safe(const SemanticPointCloud& cloud, const SafetyPartition& partition, const Eigen::Vector3d& start,
                   const Eigen::Vector3d& candidate, double width);

/// Keeps the fixed candidates whose return corridor is Safe, in order.
std::vector<Pose6D> filter_fixed_candidates(const SemanticPointCloud& cloud, const SafetyPartition& partition,
                                            const Pose6D& start, const std::vector<Pose6D>& fixed, double width);

/// CSV: iteration,candidate,x,y,z,yaw,D,gamma,N_vis,Q_bar,J,selected.
void write_nbv_diagnostics_header(std::ostream& out);
void write_nbv_diagnostics(std::ostream& out, int iteration, const std::vector<NbvCandidate>& candidates,
                           std::optional<std::size_t> selected);

}  // namespace shpc
