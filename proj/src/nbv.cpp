#include "shpc/nbv.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <set>
#include <stdexcept>

namespace shpc {

Pose6D CameraRig::camera_pose(const Pose6D& robot) const {
  const double yaw = attitude(robot).yaw;
  const Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
  const Eigen::Vector3d forward(std::cos(yaw), std::sin(yaw), 0.0);
  const Eigen::Vector3d left = up.cross(forward);
  Eigen::Matrix3d R;
  R.col(2) = std::cos(pitch_down) * forward - std::sin(pitch_down) * up;
  R.col(0) = -left;
  R.col(1) = R.col(2).cross(R.col(0));
  return make_pose<double>(R, robot.translation() + mount_height * up);
}

void CameraRig::validate() const {
  if (!(mount_height >= 0.0) || !(fov > 0.0 && fov < std::numbers::pi) || width <= 0 || height <= 0 ||
      !(std::abs(pitch_down) < 0.5 * std::numbers::pi)) {
    throw std::invalid_argument("invalid camera rig");
  }
}

void NbvWeights::validate() const {
  const double b[] = {beta_d, beta_gamma, beta_vis, beta_q};
  for (double x : b) {
    if (!(x >= 0.0)) throw std::invalid_argument("NBV weights must be non-negative");
  }
  if (!(alpha_i >= 0.0) || !(alpha_sigma >= 0.0)) throw std::invalid_argument("NBV weights must be non-negative");
  if (std::abs(beta_d + beta_gamma + beta_vis + beta_q - 1.0) > 1e-9) {
    throw std::invalid_argument("NBV beta weights must sum to 1");
  }
  if (std::abs(alpha_i + alpha_sigma - 1.0) > 1e-9) throw std::invalid_argument("NBV alpha weights must sum to 1");
}

NbvWeights NbvWeights::geometry_only() const {
  NbvWeights w = *this;
  const double rest = beta_d + beta_gamma + beta_vis;
  if (!(rest > 0.0)) throw std::invalid_argument("geometry-only weights need a non-zero geometric term");
  w.beta_d = beta_d / rest;
  w.beta_gamma = beta_gamma / rest;
  w.beta_vis = beta_vis / rest;
  w.beta_q = 0.0;
  return w;
}

NbvWeights NbvWeights::uncertainty_only() const {
  NbvWeights w = *this;
  w.beta_d = w.beta_gamma = w.beta_vis = 0.0;
  w.beta_q = 1.0;
  return w;
}

const char* to_string(NbvSelector s) {
  switch (s) {
    case NbvSelector::Full: return "full";
    case NbvSelector::Random: return "random";
    case NbvSelector::GeometryOnly: return "geometry";
    case NbvSelector::UncertaintyOnly: return "uncertainty";
  }
  return "?";
}

NbvSelector nbv_selector_from_string(const std::string& s) {
  if (s == "full") return NbvSelector::Full;
  if (s == "random") return NbvSelector::Random;
  if (s == "geometry") return NbvSelector::GeometryOnly;
  if (s == "uncertainty") return NbvSelector::UncertaintyOnly;
  throw std::invalid_argument("unknown selector: " + s);
}

namespace {

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a < 0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

double xy_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b) { return (a - b).head<2>().norm(); }

}  // namespace

std::vector<Pose6D> generate_candidates(const SemanticPointCloud& cloud, const SafetyPartition& partition,
                                        const Pose6D& start, const Eigen::Vector3d& goal, const CandidateParams& params,
                                        std::uint64_t seed) {
  if (!(params.radius > 0.0) || params.count < 0 || params.budget < 0) {
    throw std::invalid_argument("invalid candidate parameters");
  }
  const auto& tp = params.planner.traversability;
  const auto root = attach_node(cloud, start, tp);
  if (!root) return {};
  const bool any_safe = std::any_of(root->support.begin(), root->support.end(),
                                    [&](std::size_t i) { return partition.is(i, SafetyLabel::Safe); });
  if (!any_safe) return {};
  const Eigen::Vector3d origin = root->pose.translation();

  std::vector<std::size_t> samples;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (partition.is(i, SafetyLabel::Safe) && xy_distance(cloud.position(i), origin) <= params.radius) {
      samples.push_back(i);
    }
  }
  if (samples.empty()) return {};

  std::vector<TrajectoryNode> tree{*root};
  Rng rng(derive_seed(seed, "nbv-candidates"));
  const double hw = params.planner.heading_weight;
  for (int it = 0; it < params.budget; ++it) {
    const Eigen::Vector3d s = cloud.position(samples[rng.index(samples.size())]);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < tree.size(); ++v) {
      const Eigen::Vector3d d = tree[v].pose.linear().transpose() * (s - tree[v].pose.translation());
      const double bearing = (d.x() == 0.0 && d.y() == 0.0) ? 0.0 : std::atan2(d.y(), d.x());
      const double m = d.norm() + hw * std::abs(wrap_angle(bearing));
      if (m < best_d) {
        best_d = m;
        best = v;
      }
    }
    std::optional<TrajectoryNode> chosen;
    double chosen_d = std::numeric_limits<double>::infinity();
    for (const MotionPrimitive& prim : primitive_library(tree[best].curvature, params.planner.kinematics)) {
      auto next = extend(tree[best], prim, cloud, tp, params.planner.kinematics);
      if (!next || xy_distance(next->pose.translation(), origin) > params.radius) continue;
      const bool safe = std::all_of(next->support.begin(), next->support.end(),
                                    [&](std::size_t i) { return partition.is(i, SafetyLabel::Safe); });
      if (!safe) continue;
      const double d = (next->pose.translation() - s).norm();
      if (d < chosen_d) {
        chosen_d = d;
        chosen = std::move(next);
      }
    }
    if (chosen) tree.push_back(std::move(*chosen));
  }

  // Farthest-point subsampling; the root only seeds the distances.
  std::vector<double> dist(tree.size());
  for (std::size_t v = 0; v < tree.size(); ++v) dist[v] = (tree[v].pose.translation() - origin).norm();
  std::vector<Pose6D> out;
  while (static_cast<int>(out.size()) < params.count) {
    std::size_t pick = 0;
    for (std::size_t v = 1; v < tree.size(); ++v) {
      if (dist[v] > dist[pick]) pick = v;
    }
    if (!(dist[pick] > 0.0)) break;
    const Eigen::Vector3d p = tree[pick].pose.translation();
    Pose6D pose = tree[pick].pose;
    if (const auto R = frame_from_heading<double>(goal - p, pose.linear().col(2))) pose.linear() = *R;
    out.push_back(pose);
    for (std::size_t v = 0; v < tree.size(); ++v) dist[v] = std::min(dist[v], (tree[v].pose.translation() - p).norm());
  }
  return out;
}

VisibilityImage render_visibility(const SemanticPointCloud& cloud, const Pose6D& camera_to_map, const Intrinsics& K,
                                  int width, int height) {
  return render_visibility(cloud.positions(), 0.5 * cloud.resolution(), camera_to_map, K, width, height);
}

VertexVisibility vertex_visibility(const TrajectoryNode& v, const VisibilityImage& image, int pixel_threshold) {
  VertexVisibility out;
  for (std::size_t i : v.support) out.pixels += image.coverage[i];
  out.visible = out.pixels > pixel_threshold;
  return out;
}

double vertex_uncertainty(const TrajectoryNode& v, const SemanticPointCloud& cloud) {
  if (v.support.empty()) throw std::invalid_argument("vertex without support");
  double sum = 0.0;
  for (std::size_t i : v.support) sum += cloud.uncerts().col(static_cast<Eigen::Index>(i)).sum();
  return sum / static_cast<double>(v.support.size());
}

double info_gain(double i_norm, double sigma_norm, const NbvWeights& w) {
  return w.alpha_i * i_norm + w.alpha_sigma * sigma_norm;
}

std::vector<int> nbv_vertex_set(const HypothesisGraph& graph, const std::vector<CandidatePath>& paths) {
  std::set<int> out;
  for (const auto& p : paths) {
    for (int v : p.vertices) {
      const double c = graph.costs[static_cast<std::size_t>(v)];
      if (c > 0.0 && c < kInfiniteCost) out.insert(v);
    }
  }
  return {out.begin(), out.end()};
}

std::vector<double> minmax_normalize(const std::vector<double>& x) {
  if (x.empty()) return {};
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double a = *lo, b = *hi;
  std::vector<double> out(x.size(), 1.0);
  if (b > a) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - a) / (b - a);
  }
  return out;
}

void score_candidates(std::vector<NbvCandidate>& candidates, const NbvWeights& w) {
  std::vector<std::size_t> active;
  std::vector<double> dist, negcos, count, q;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    auto& c = candidates[k];
    c.D = c.gamma = c.n_vis = c.q_bar = c.J = 0.0;
    if (c.visible.empty()) continue;
    active.push_back(k);
    dist.push_back(c.mean_distance);
    negcos.push_back(c.mean_neg_cos);
    count.push_back(static_cast<double>(c.visible.size()));
    q.push_back(c.mean_q);
  }
  const auto nd = minmax_normalize(dist), ng = minmax_normalize(negcos), nn = minmax_normalize(count),
             nq = minmax_normalize(q);
  for (std::size_t j = 0; j < active.size(); ++j) {
    auto& c = candidates[active[j]];
    c.D = 1.0 - nd[j];
    c.gamma = ng[j];
    c.n_vis = nn[j];
    c.q_bar = nq[j];
    c.J = w.beta_d * c.D + w.beta_gamma * c.gamma + w.beta_vis * c.n_vis + w.beta_q * c.q_bar;
  }
}

NbvEvaluation evaluate_candidates(const SemanticPointCloud& cloud, const HypothesisGraph& graph,
                                  const std::vector<int>& vnbv, const std::vector<Pose6D>& candidates,
                                  const Pose6D& start, const CameraRig& rig, int render_size, int pixel_threshold,
                                  const NbvWeights& weights) {
  if (render_size <= 0 || pixel_threshold < 0) throw std::invalid_argument("invalid NBV render settings");
  NbvEvaluation ev;
  const Intrinsics K = pinhole_intrinsics(render_size, render_size, rig.fov);
  std::vector<double> sigma(vnbv.size());
  for (std::size_t j = 0; j < vnbv.size(); ++j) {
    sigma[j] = vertex_uncertainty(graph.nodes[static_cast<std::size_t>(vnbv[j])], cloud);
  }

  ev.candidates.resize(candidates.size());
  ev.visibility.resize(candidates.size());
  // Visible (candidate, vertex) pairs for the joint normalisation of I and sigma.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> pix, sig;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    auto& c = ev.candidates[k];
    c.pose = candidates[k];
    const VisibilityImage img = render_visibility(cloud, rig.camera_pose(c.pose), K, render_size, render_size);
    auto& vis = ev.visibility[k];
    vis.resize(vnbv.size());
    for (std::size_t j = 0; j < vnbv.size(); ++j) {
      vis[j] = vertex_visibility(graph.nodes[static_cast<std::size_t>(vnbv[j])], img, pixel_threshold);
      if (!vis[j].visible) continue;
      c.visible.push_back(vnbv[j]);
      pairs.emplace_back(k, j);
      pix.push_back(vis[j].pixels);
      sig.push_back(sigma[j]);
    }
  }
  const auto npix = minmax_normalize(pix), nsig = minmax_normalize(sig);
  const Eigen::Vector3d s = start.translation();
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    auto& c = ev.candidates[pairs[p].first];
    const Eigen::Vector3d v = graph.nodes[static_cast<std::size_t>(vnbv[pairs[p].second])].pose.translation();
    const Eigen::Vector3d cp = c.pose.translation();
    c.mean_distance += (cp - v).norm();
    const Eigen::Vector3d a = v - s, b = v - cp;
    const double na = a.norm(), nb = b.norm();
    c.mean_neg_cos += (na > 0.0 && nb > 0.0) ? -a.dot(b) / (na * nb) : 0.0;
    c.mean_q += info_gain(npix[p], nsig[p], weights);
  }
  for (auto& c : ev.candidates) {
    if (c.visible.empty()) continue;
    const double n = static_cast<double>(c.visible.size());
    c.mean_distance /= n;
    c.mean_neg_cos /= n;
    c.mean_q /= n;
  }
  score_candidates(ev.candidates, weights);
  return ev;
}

std::optional<std::size_t> select_nbv(const std::vector<NbvCandidate>& candidates) {
  if (candidates.empty()) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    if (candidates[k].J > candidates[best].J) best = k;
  }
  return best;
}

std::optional<std::size_t> select_with(NbvSelector selector, const NbvEvaluation& evaluation,
                                       const NbvWeights& weights, Rng& rng) {
  if (evaluation.candidates.empty()) return std::nullopt;
  switch (selector) {
    case NbvSelector::Full: {
      auto c = evaluation.candidates;
      score_candidates(c, weights);
      return select_nbv(c);
    }
    case NbvSelector::Random: return static_cast<std::size_t>(rng.index(evaluation.candidates.size()));
    case NbvSelector::GeometryOnly: {
      auto c = evaluation.candidates;
      score_candidates(c, weights.geometry_only());
      return select_nbv(c);
    }
    case NbvSelector::UncertaintyOnly: {
      auto c = evaluation.candidates;
      score_candidates(c, weights.uncertainty_only());
      return select_nbv(c);
    }
  }
  return std::nullopt;
}

bool corridor_safe(const SemanticPointCloud& cloud, const SafetyPartition& partition, const Eigen::Vector3d& start,
                   const Eigen::Vector3d& candidate, double width) {
  const Eigen::Vector2d a = start.head<2>(), b = candidate.head<2>();
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  const double half = 0.5 * width;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector2d p = cloud.position(i).head<2>();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    if ((a + t * ab - p).norm() <= half && !partition.is(i, SafetyLabel::Safe)) return false;
  }
  return true;
}

std::vector<Pose6D> filter_fixed_candidates(const SemanticPointCloud& cloud, const SafetyPartition& partition,
                                            const Pose6D& start, const std::vector<Pose6D>& fixed, double width) {
  std::vector<Pose6D> out;
  for (const auto& c : fixed) {
    if (corridor_safe(cloud, partition, start.translation(), c.translation(), width)) out.push_back(c);
  }
  return out;
}

void write_nbv_diagnostics_header(std::ostream& out) {
  out << "iteration,candidate,x,y,z,yaw,D,gamma,N_vis,Q_bar,J,selected\n";
}

void write_nbv_diagnostics(std::ostream& out, int iteration, const std::vector<NbvCandidate>& candidates,
                           std::optional<std::size_t> selected) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(9);
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const auto& c = candidates[k];
    const Eigen::Vector3d p = c.pose.translation();
    out << iteration << ',' << k << ',' << p.x() << ',' << p.y() << ',' << p.z() << ',' << attitude(c.pose).yaw
        << ',' << c.D << ',' << c.gamma << ',' << c.n_vis << ',' << c.q_bar << ',' << c.J << ','
        << (selected && *selected == k ? 1 : 0) << '\n';
  }
  out.flags(flags);
  out.precision(prec);
}

}  // namespace shpc
