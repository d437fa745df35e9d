#pragma once

#include "shpc/regions.hpp"
#include "shpc/semantic_cloud.hpp"
#include "shpc/terrain.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <vector>

namespace shpc {

inline constexpr double kInfiniteCost = std::numeric_limits<double>::infinity();

struct GoalRegion {
  Pose6D center = Pose6D::Identity();
  double radius = 1.0;

  bool contains(const Eigen::Vector3d& p) const { return (p - center.translation()).norm() <= radius; }
  void validate() const;
};

struct CostParams {
  int phi_v = 4;                    ///< unsafe support points that make a vertex impassable
  double start_relax_radius = 1.0;  ///< m
  double relax_threshold = 0.05;    ///< mean margin accepted as zero cost near the start
  bool semantic = true;             ///< false: every vertex with tau > 0 costs 0

  void validate() const;
};

/// Vertex cost: 0 if every support point is Safe, infinite with phi_v or more
/// Unsafe support points, else the mean clamped margin
/// clamp(theta_s - p_S + w_sigma sigma, 0, 1). Within start_relax_radius of
/// `root` a vertex without Unsafe support and mean margin below
/// relax_threshold also costs 0. Throws std::invalid_argument on empty support.
double node_cost(const TrajectoryNode& v, const SafetyPartition& partition, const SemanticPointCloud& cloud,
                 const SafetyParams& safety, const CostParams& params,
                 const std::optional<Eigen::Vector3d>& root = std::nullopt);

struct GraphArc {
  int from = 0;
  int to = 0;
  MotionPrimitive primitive;
};

struct GrowthStats {
  int iterations = 0;
  int paths_found = 0;
  int regions_removed = 0;
  int restarts = 0;
  int reconnections = 0;
};

/// Union of every tree vertex and arc created while growing; vertex ids are
/// indices into `nodes`.
struct HypothesisGraph {
  std::vector<TrajectoryNode> nodes;
  std::vector<double> costs;
  std::vector<GraphArc> arcs;
  int root = -1;
  std::vector<int> goal_vertices;  // ascending
  GrowthStats stats;

  std::size_t size() const { return nodes.size(); }
  /// Successor lists, ascending and without duplicates.
  std::vector<std::vector<int>> successors() const;
};

struct PlannerParams {
  int budget = 1200;  ///< RRT iterations shared by all restarts
  double goal_bias = 0.15;
  double heading_weight = 0.5;  ///< m per radian in the nearest-vertex metric
  int max_restarts = 3;
  double reconnect_radius_factor = 1.5;  ///< x segment length
  int max_reconnect_attempts = 3;
  double reconnect_tolerance = 0.05;  ///< m between the spiral end and the orphan
  TraversabilityParams traversability;
  KinematicParams kinematics;
  CostParams cost;
  SafetyParams safety;

  void validate() const;
};

/// Multi-hypothesis RRT. Sampling avoids the forbidden set F, which starts as
/// the Unsafe points; each time the tree reaches the goal the largest unclear
/// region on that path (ignoring regions at the start and goal) joins F, the
/// vertices standing on it are cut and their descendants become orphans that
/// later vertices try to reconnect. A path through start/goal regions only
/// triggers a restart with a fresh seed and F. With `params.cost.semantic`
/// false, F and the regions are ignored. Costs are filled in. Throws
/// std::invalid_argument if the start cannot be attached to the terrain.
HypothesisGraph grow_hypothesis_graph(const SemanticPointCloud& cloud, const SafetyPartition& partition,
                                      const RegionSet& regions, const Pose6D& start, const GoalRegion& goal,
                                      const PlannerParams& params, std::uint64_t seed);

/// Recomputes every vertex cost against the current cloud.
void recost(HypothesisGraph& graph, const SemanticPointCloud& cloud, const SafetyPartition& partition,
            const PlannerParams& params);

struct CandidatePath {
  std::vector<int> vertices;
  double cost = 0.0;

  /// Order used for ranking: cost, then vertex count, then ids.
  friend bool operator<(const CandidatePath& a, const CandidatePath& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    if (a.vertices.size() != b.vertices.size()) return a.vertices.size() < b.vertices.size();
    return a.vertices < b.vertices;
  }
  friend bool operator==(const CandidatePath& a, const CandidatePath& b) {
    return a.cost == b.cost && a.vertices == b.vertices;
  }
};

/// Vertex-weighted digraph for path ranking.
struct CostDigraph {
  std::vector<double> cost;
  std::vector<std::vector<int>> successors;
  int root = 0;
  std::vector<int> goals;
};

CostDigraph cost_digraph(const HypothesisGraph& graph);

/// Up to m loopless root-to-goal paths in CandidatePath order (Yen). Path cost
/// sums vertex costs from the root in path order; infinite-cost vertices are
/// never used.
std::vector<CandidatePath> k_shortest_paths(const CostDigraph& graph, int m);
std::vector<CandidatePath> k_shortest_paths(const HypothesisGraph& graph, int m);

enum class PathStatus { ConfirmedSafe, ConfirmedUnsafe, Undecided };

const char* to_string(PathStatus status);

struct StatusReport {
  PathStatus status = PathStatus::Undecided;
  std::optional<CandidatePath> path;  // set for ConfirmedSafe
};

/// ConfirmedSafe with the first path if it costs 0; ConfirmedUnsafe iff no
/// goal vertex is reachable from the root through finite-cost vertices.
StatusReport path_status(const HypothesisGraph& graph, const std::vector<CandidatePath>& paths);

std::vector<TrajectoryNode> path_nodes(const HypothesisGraph& graph, const CandidatePath& path);

/// Plain-text edge list: "vertex id x y z roll pitch yaw cost goal" records,
/// then "arc from to" records.
void write_graph(std::ostream& out, const HypothesisGraph& graph);

}  // namespace shpc
