#include "shpc/hypothesis.hpp"

#include "shpc/random.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <ostream>
#include <queue>
#include <set>
#include <stdexcept>

namespace shpc {

void GoalRegion::validate() const {
  if (!(radius > 0.0)) throw std::invalid_argument("goal radius must be positive");
}

void CostParams::validate() const {
  if (phi_v < 1) throw std::invalid_argument("phi_v must be >= 1");
  if (!(start_relax_radius >= 0.0)) throw std::invalid_argument("start_relax_radius must be non-negative");
}

void PlannerParams::validate() const {
  if (budget < 0) throw std::invalid_argument("planner budget must be non-negative");
  if (!(goal_bias >= 0.0 && goal_bias <= 1.0)) throw std::invalid_argument("goal_bias must lie in [0, 1]");
  if (max_restarts < 0) throw std::invalid_argument("max_restarts must be non-negative");
  traversability.validate();
  kinematics.validate();
  cost.validate();
  safety.validate();
}

double node_cost(const TrajectoryNode& v, const SafetyPartition& partition, const SemanticPointCloud& cloud,
                 const SafetyParams& safety, const CostParams& params, const std::optional<Eigen::Vector3d>& root) {
  if (v.support.empty()) throw std::invalid_argument("node has no support points");
  if (!params.semantic) return 0.0;
  int unsafe = 0;
  bool all_safe = true;
  double margin = 0.0;
  for (std::size_t i : v.support) {
    const SafetyLabel l = partition.labels[i];
    unsafe += l == SafetyLabel::Unsafe;
    all_safe = all_safe && l == SafetyLabel::Safe;
    const auto col = static_cast<Eigen::Index>(i);
    const SafetyAggregate a = aggregate_safety(cloud.probs().col(col), cloud.uncerts().col(col), cloud.catalog());
    margin += std::clamp(safety.theta_safe - a.p_safe + safety.w_sigma * a.sigma, 0.0, 1.0);
  }
  if (unsafe >= params.phi_v) return kInfiniteCost;
  if (all_safe) return 0.0;
  margin /= static_cast<double>(v.support.size());
  if (root && unsafe == 0 && margin < params.relax_threshold &&
      (v.pose.translation() - *root).norm() <= params.start_relax_radius) {
    return 0.0;
  }
  return margin;
}

std::vector<std::vector<int>> HypothesisGraph::successors() const {
  std::vector<std::vector<int>> succ(nodes.size());
  for (const GraphArc& a : arcs) succ[static_cast<std::size_t>(a.from)].push_back(a.to);
  for (auto& s : succ) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
  }
  return succ;
}

void recost(HypothesisGraph& graph, const SemanticPointCloud& cloud, const SafetyPartition& partition,
            const PlannerParams& params) {
  graph.costs.resize(graph.nodes.size());
  const Eigen::Vector3d root = graph.nodes[static_cast<std::size_t>(graph.root)].pose.translation();
  for (std::size_t v = 0; v < graph.nodes.size(); ++v) {
    graph.costs[v] = node_cost(graph.nodes[v], partition, cloud, params.safety, params.cost, root);
  }
}

// --- multi-hypothesis RRT ----------------------------------------------------

namespace {

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a < 0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

enum class VertexState : std::uint8_t { Alive, Orphan, Dead };

class TreeGrower {
 public:
  TreeGrower(const SemanticPointCloud& cloud, const SafetyPartition& partition, const RegionSet& regions,
             const GoalRegion& goal, const PlannerParams& params, HypothesisGraph& graph)
      : cloud_(cloud), partition_(partition), regions_(regions), goal_(goal), params_(params), graph_(graph) {}

  void run(std::uint64_t seed) {
    const bool semantic = params_.cost.semantic;
    std::vector<bool> protected_region(regions_.size(), false);
    if (semantic) {
      // Regions under the start and goal footprints never count as hypotheses.
      auto protect = [&](const Eigen::Vector3d& p) {
        for (const auto& nb : cloud_.index().knn(p, static_cast<std::size_t>(params_.traversability.K))) {
          const int r = regions_.region_of(nb.index);
          if (r >= 0) protected_region[static_cast<std::size_t>(r)] = true;
        }
      };
      protect(graph_.nodes[static_cast<std::size_t>(graph_.root)].pose.translation());
      protect(goal_point_);
    }

    int restart = 0;
    Rng rng(derive_seed(seed, "rrt", 0));
    reset_tree(semantic);
    while (graph_.stats.iterations < params_.budget) {
      ++graph_.stats.iterations;
      const auto added = iterate(rng);
      if (!added) continue;
      const int goal_vertex = reached_goal(*added);
      if (goal_vertex < 0) continue;
      ++graph_.stats.paths_found;

      std::vector<int> traversed;
      if (semantic) {
        std::vector<TrajectoryNode> path;
        for (int v : tree_path(goal_vertex)) path.push_back(graph_.nodes[static_cast<std::size_t>(v)]);
        for (int r : regions_traversed(path, regions_)) {
          if (!protected_region[static_cast<std::size_t>(r)]) traversed.push_back(r);
        }
      }
      if (traversed.empty()) {
        if (restart >= params_.max_restarts) break;
        ++restart;
        ++graph_.stats.restarts;
        rng = Rng(derive_seed(seed, "rrt", restart));
        reset_tree(semantic);
        continue;
      }
      // Largest region by point count, ties to the lower id.
      int largest = traversed.front();
      for (int r : traversed) {
        if (regions_.regions[static_cast<std::size_t>(r)].point_indices.size() >
            regions_.regions[static_cast<std::size_t>(largest)].point_indices.size()) {
          largest = r;
        }
      }
      remove_region(largest);
    }
  }

  void set_goal_point(const Eigen::Vector3d& p, std::size_t target_index) {
    goal_point_ = p;
    goal_target_ = target_index;
  }

 private:
  void reset_tree(bool semantic) {
    forbidden_.assign(cloud_.size(), false);
    if (semantic) {
      for (std::size_t i = 0; i < cloud_.size(); ++i) forbidden_[i] = partition_.labels[i] == SafetyLabel::Unsafe;
    }
    rebuild_samples();
    tree_.clear();
    state_.assign(graph_.nodes.size(), VertexState::Dead);
    parent_.assign(graph_.nodes.size(), -1);
    children_.assign(graph_.nodes.size(), {});
    state_[static_cast<std::size_t>(graph_.root)] = VertexState::Alive;
    tree_.push_back(graph_.root);
  }

  void rebuild_samples() {
    samples_.clear();
    for (std::size_t i = 0; i < cloud_.size(); ++i) {
      if (!forbidden_[i]) samples_.push_back(i);
    }
  }

  bool touches_forbidden(const TrajectoryNode& n) const {
    return std::any_of(n.support.begin(), n.support.end(), [&](std::size_t i) { return forbidden_[i]; });
  }

  int add_vertex(TrajectoryNode node, int parent, const MotionPrimitive& prim) {
    const int id = static_cast<int>(graph_.nodes.size());
    graph_.nodes.push_back(std::move(node));
    graph_.arcs.push_back({parent, id, prim});
    state_.push_back(VertexState::Alive);
    parent_.push_back(parent);
    children_.emplace_back();
    children_[static_cast<std::size_t>(parent)].push_back(id);
    tree_.push_back(id);
    if (goal_.contains(graph_.nodes.back().pose.translation())) graph_.goal_vertices.push_back(id);
    return id;
  }

  double metric(int v, const Eigen::Vector3d& s) const {
    const TrajectoryNode& n = graph_.nodes[static_cast<std::size_t>(v)];
    const Eigen::Vector3d d = n.pose.linear().transpose() * (s - n.pose.translation());
    const double bearing = (d.x() == 0.0 && d.y() == 0.0) ? 0.0 : std::atan2(d.y(), d.x());
    return (s - n.pose.translation()).norm() + params_.heading_weight * std::abs(wrap_angle(bearing));
  }

  /// One RRT step; returns the new vertex id (or a revived goal through reconnection).
  std::optional<int> iterate(Rng& rng) {
    if (samples_.empty()) return std::nullopt;
    std::size_t target;
    if (rng.uniform() < params_.goal_bias && !forbidden_[goal_target_]) {
      target = goal_target_;
    } else {
      target = samples_[rng.index(samples_.size())];
    }
    const Eigen::Vector3d s = cloud_.position(target);

    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int v : tree_) {
      if (state_[static_cast<std::size_t>(v)] != VertexState::Alive) continue;
      const double d = metric(v, s);
      if (d < best_d) {
        best_d = d;
        best = v;
      }
    }
    if (best < 0) return std::nullopt;

    const TrajectoryNode& from = graph_.nodes[static_cast<std::size_t>(best)];
    std::optional<TrajectoryNode> chosen;
    MotionPrimitive chosen_prim;
    double chosen_d = std::numeric_limits<double>::infinity();
    for (const MotionPrimitive& prim : primitive_library(from.curvature, params_.kinematics)) {
      auto next = extend(from, prim, cloud_, params_.traversability, params_.kinematics);
      if (!next || touches_forbidden(*next)) continue;
      const double d = (next->pose.translation() - s).norm();
      if (d < chosen_d) {
        chosen_d = d;
        chosen = std::move(next);
        chosen_prim = prim;
      }
    }
    if (!chosen) return std::nullopt;
    const int id = add_vertex(std::move(*chosen), best, chosen_prim);
    last_revived_.clear();
    reconnect(id);
    return id;
  }

  void reconnect(int v) {
    const TrajectoryNode& from = graph_.nodes[static_cast<std::size_t>(v)];
    const double radius = params_.reconnect_radius_factor * params_.kinematics.segment_length;
    std::vector<std::pair<double, int>> near;
    for (int o : tree_) {
      if (state_[static_cast<std::size_t>(o)] != VertexState::Orphan) continue;
      const double d = (graph_.nodes[static_cast<std::size_t>(o)].pose.translation() - from.pose.translation()).norm();
      if (d <= radius) near.emplace_back(d, o);
    }
    std::sort(near.begin(), near.end());
    int attempts = 0;
    for (const auto& [d, o] : near) {
      if (attempts++ >= params_.max_reconnect_attempts) break;
      if (state_[static_cast<std::size_t>(o)] != VertexState::Orphan) continue;
      const TrajectoryNode& target = graph_.nodes[static_cast<std::size_t>(o)];
      const PlanarState local =
          to_local(from, target.pose.translation(), target.pose.linear().col(0), target.curvature);
      const auto prim = connect_states(from.curvature, local, params_.kinematics);
      if (!prim) continue;
      const auto end = extend(from, *prim, cloud_, params_.traversability, params_.kinematics);
      if (!end || touches_forbidden(*end)) continue;
      if ((end->pose.translation() - target.pose.translation()).norm() > params_.reconnect_tolerance) continue;
      graph_.arcs.push_back({v, o, *prim});
      auto& old = children_[static_cast<std::size_t>(parent_[static_cast<std::size_t>(o)])];
      old.erase(std::remove(old.begin(), old.end(), o), old.end());
      parent_[static_cast<std::size_t>(o)] = v;
      children_[static_cast<std::size_t>(v)].push_back(o);
      revive(o);
      ++graph_.stats.reconnections;
    }
  }

  void revive(int o) {
    std::deque<int> queue{o};
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      if (state_[static_cast<std::size_t>(u)] != VertexState::Orphan) continue;
      state_[static_cast<std::size_t>(u)] = VertexState::Alive;
      last_revived_.push_back(u);
      for (int c : children_[static_cast<std::size_t>(u)]) queue.push_back(c);
    }
  }

  int reached_goal(int added) const {
    if (goal_.contains(graph_.nodes[static_cast<std::size_t>(added)].pose.translation())) return added;
    int best = -1;
    for (int u : last_revived_) {
      if (goal_.contains(graph_.nodes[static_cast<std::size_t>(u)].pose.translation()) && (best < 0 || u < best)) {
        best = u;
      }
    }
    return best;
  }

  std::vector<int> tree_path(int v) const {
    std::vector<int> path;
    for (int u = v; u >= 0; u = parent_[static_cast<std::size_t>(u)]) path.push_back(u);
    std::reverse(path.begin(), path.end());
    return path;
  }

  void remove_region(int r) {
    ++graph_.stats.regions_removed;
    for (std::size_t i : regions_.regions[static_cast<std::size_t>(r)].point_indices) forbidden_[i] = true;
    rebuild_samples();
    for (int v : tree_) {
      if (v == graph_.root || state_[static_cast<std::size_t>(v)] == VertexState::Dead) continue;
      if (touches_forbidden(graph_.nodes[static_cast<std::size_t>(v)])) state_[static_cast<std::size_t>(v)] = VertexState::Dead;
    }
    // Whatever the root no longer reaches through live vertices is orphaned.
    std::vector<bool> reach(graph_.nodes.size(), false);
    std::deque<int> queue{graph_.root};
    reach[static_cast<std::size_t>(graph_.root)] = true;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (int c : children_[static_cast<std::size_t>(u)]) {
        if (state_[static_cast<std::size_t>(c)] == VertexState::Dead || reach[static_cast<std::size_t>(c)]) continue;
        reach[static_cast<std::size_t>(c)] = true;
        queue.push_back(c);
      }
    }
    for (int v : tree_) {
      auto& st = state_[static_cast<std::size_t>(v)];
      if (st == VertexState::Dead) continue;
      st = reach[static_cast<std::size_t>(v)] ? VertexState::Alive : VertexState::Orphan;
    }
  }

  const SemanticPointCloud& cloud_;
  const SafetyPartition& partition_;
  const RegionSet& regions_;
  const GoalRegion& goal_;
  const PlannerParams& params_;
  HypothesisGraph& graph_;

  Eigen::Vector3d goal_point_ = Eigen::Vector3d::Zero();
  std::size_t goal_target_ = 0;
  std::vector<bool> forbidden_;
  std::vector<std::size_t> samples_;
  std::vector<int> tree_;  // graph ids of this tree, in insertion order
  std::vector<VertexState> state_;
  std::vector<int> parent_;
  std::vector<std::vector<int>> children_;
  std::vector<int> last_revived_;
};

}  // namespace

HypothesisGraph grow_hypothesis_graph(const SemanticPointCloud& cloud, const SafetyPartition& partition,
                                      const RegionSet& regions, const Pose6D& start, const GoalRegion& goal,
                                      const PlannerParams& params, std::uint64_t seed) {
  params.validate();
  goal.validate();
  auto root = attach_node(cloud, start, params.traversability);
  if (!root) throw std::invalid_argument("start pose cannot be attached to the terrain");

  HypothesisGraph graph;
  graph.nodes.push_back(std::move(*root));
  graph.root = 0;
  if (goal.contains(graph.nodes[0].pose.translation())) graph.goal_vertices.push_back(0);

  // Goal bias target: the cloud point nearest the goal pose projected onto the terrain.
  Eigen::Vector3d goal_point = goal.center.translation();
  if (const auto fit = project_to_surface(cloud, goal.center, params.traversability)) {
    goal_point = fit->pose.translation();
  }
  const auto nearest = cloud.index().nearest(goal_point);

  TreeGrower grower(cloud, partition, regions, goal, params, graph);
  grower.set_goal_point(goal_point, nearest ? nearest->index : 0);
  grower.run(seed);

  std::sort(graph.goal_vertices.begin(), graph.goal_vertices.end());
  recost(graph, cloud, partition, params);
  return graph;
}

// --- path ranking ------------------------------------------------------------

CostDigraph cost_digraph(const HypothesisGraph& graph) {
  return {graph.costs, graph.successors(), graph.root, graph.goal_vertices};
}

namespace {

struct Label {
  double cost;
  std::vector<int> path;

  // Min-heap order on (cost, hops, ids).
  friend bool operator>(const Label& a, const Label& b) {
    if (a.cost != b.cost) return a.cost > b.cost;
    if (a.path.size() != b.path.size()) return a.path.size() > b.path.size();
    return a.path > b.path;
  }
};

/// Best path (in CandidatePath order) extending `prefix` to any goal. The last
/// prefix vertex is the spur; `blocked` vertices and `removed` arcs from the
/// spur are unusable; `no_stop` forbids ending at the spur itself.
std::optional<CandidatePath> best_extension(const CostDigraph& g, const std::vector<int>& prefix, double prefix_cost,
                                            const std::vector<bool>& blocked, const std::vector<bool>& is_goal,
                                            const std::set<int>& removed, bool no_stop) {
  const std::size_t n = g.cost.size();
  std::vector<bool> settled(n, false);
  std::priority_queue<Label, std::vector<Label>, std::greater<>> heap;
  heap.push({prefix_cost, prefix});
  const int spur = prefix.back();
  while (!heap.empty()) {
    Label top = heap.top();
    heap.pop();
    const int u = top.path.back();
    if (settled[static_cast<std::size_t>(u)]) continue;
    settled[static_cast<std::size_t>(u)] = true;
    if (is_goal[static_cast<std::size_t>(u)] && !(u == spur && no_stop)) {
      return CandidatePath{std::move(top.path), top.cost};
    }
    for (int w : g.successors[static_cast<std::size_t>(u)]) {
      if (u == spur && removed.count(w)) continue;
      if (blocked[static_cast<std::size_t>(w)] || settled[static_cast<std::size_t>(w)]) continue;
      Label next{top.cost + g.cost[static_cast<std::size_t>(w)], top.path};
      next.path.push_back(w);
      heap.push(std::move(next));
    }
  }
  return std::nullopt;
}

}  // namespace

std::vector<CandidatePath> k_shortest_paths(const CostDigraph& g, int m) {
  std::vector<CandidatePath> A;
  const std::size_t n = g.cost.size();
  if (m <= 0 || n == 0 || g.root < 0 || !std::isfinite(g.cost[static_cast<std::size_t>(g.root)])) return A;
  std::vector<bool> is_goal(n, false);
  for (int v : g.goals) {
    if (std::isfinite(g.cost[static_cast<std::size_t>(v)])) is_goal[static_cast<std::size_t>(v)] = true;
  }
  std::vector<bool> infinite(n, false);
  for (std::size_t v = 0; v < n; ++v) infinite[v] = !std::isfinite(g.cost[v]);

  const std::vector<int> root_prefix{g.root};
  auto first = best_extension(g, root_prefix, g.cost[static_cast<std::size_t>(g.root)], infinite, is_goal, {}, false);
  if (!first) return A;
  A.push_back(std::move(*first));
  std::set<CandidatePath> B;

  while (static_cast<int>(A.size()) < m) {
    const std::vector<int>& last = A.back().vertices;
    double prefix_cost = 0.0;
    for (std::size_t i = 0; i < last.size(); ++i) {
      prefix_cost += g.cost[static_cast<std::size_t>(last[i])];
      const std::vector<int> prefix(last.begin(), last.begin() + static_cast<std::ptrdiff_t>(i) + 1);
      std::set<int> removed;
      bool no_stop = false;
      for (const CandidatePath& p : A) {
        if (p.vertices.size() < prefix.size() || !std::equal(prefix.begin(), prefix.end(), p.vertices.begin())) {
          continue;
        }
        if (p.vertices.size() == prefix.size()) {
          no_stop = true;
        } else {
          removed.insert(p.vertices[prefix.size()]);
        }
      }
      std::vector<bool> blocked = infinite;
      for (std::size_t j = 0; j + 1 < prefix.size(); ++j) blocked[static_cast<std::size_t>(prefix[j])] = true;
      auto cand = best_extension(g, prefix, prefix_cost, blocked, is_goal, removed, no_stop);
      if (cand && std::find(A.begin(), A.end(), *cand) == A.end()) B.insert(std::move(*cand));
    }
    if (B.empty()) break;
    A.push_back(*B.begin());
    B.erase(B.begin());
  }
  return A;
}

std::vector<CandidatePath> k_shortest_paths(const HypothesisGraph& graph, int m) {
  return k_shortest_paths(cost_digraph(graph), m);
}

const char* to_string(PathStatus status) {
  switch (status) {
    case PathStatus::ConfirmedSafe:
      return "confirmed_safe";
    case PathStatus::ConfirmedUnsafe:
      return "confirmed_unsafe";
    case PathStatus::Undecided:
      return "undecided";
  }
  return "?";
}

StatusReport path_status(const HypothesisGraph& graph, const std::vector<CandidatePath>& paths) {
  if (!paths.empty() && paths.front().cost == 0.0) return {PathStatus::ConfirmedSafe, paths.front()};
  const auto succ = graph.successors();
  std::vector<bool> seen(graph.size(), false);
  std::deque<int> queue;
  if (graph.root >= 0 && std::isfinite(graph.costs[static_cast<std::size_t>(graph.root)])) {
    queue.push_back(graph.root);
    seen[static_cast<std::size_t>(graph.root)] = true;
  }
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int w : succ[static_cast<std::size_t>(u)]) {
      if (seen[static_cast<std::size_t>(w)] || !std::isfinite(graph.costs[static_cast<std::size_t>(w)])) continue;
      seen[static_cast<std::size_t>(w)] = true;
      queue.push_back(w);
    }
  }
  for (int g : graph.goal_vertices) {
    if (seen[static_cast<std::size_t>(g)]) return {PathStatus::Undecided, std::nullopt};
  }
  return {PathStatus::ConfirmedUnsafe, std::nullopt};
}

std::vector<TrajectoryNode> path_nodes(const HypothesisGraph& graph, const CandidatePath& path) {
  std::vector<TrajectoryNode> out;
  out.reserve(path.vertices.size());
  for (int v : path.vertices) out.push_back(graph.nodes[static_cast<std::size_t>(v)]);
  return out;
}

void write_graph(std::ostream& out, const HypothesisGraph& graph) {
  out << "# vertex id x y z roll pitch yaw cost goal\n# arc from to\n";
  std::vector<bool> goal(graph.size(), false);
  for (int g : graph.goal_vertices) goal[static_cast<std::size_t>(g)] = true;
  for (std::size_t v = 0; v < graph.size(); ++v) {
    const auto& n = graph.nodes[v];
    const auto att = attitude(n.pose);
    const Eigen::Vector3d t = n.pose.translation();
    out << "vertex " << v << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << att.roll << ' ' << att.pitch
        << ' ' << att.yaw << ' ' << graph.costs[v] << ' ' << (goal[v] ? 1 : 0) << '\n';
  }
  const auto succ = graph.successors();
  for (std::size_t v = 0; v < succ.size(); ++v) {
    for (int w : succ[v]) out << "arc " << v << ' ' << w << '\n';
  }
}

}  // namespace shpc
