#include "shpc/terrain.hpp"

#include "shpc/semantic_cloud.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace shpc {

void TraversabilityParams::validate() const {
  if (!(max_roll > 0 && max_pitch > 0 && max_residual > 0 && max_support_gap > 0) || K < 3) {
    throw std::invalid_argument("traversability parameters must be positive (K >= 3)");
  }
}

void KinematicParams::validate() const {
  if (!(segment_length > 0 && kappa_max > 0)) throw std::invalid_argument("kinematic parameters must be positive");
}

double MotionPrimitive::max_abs_curvature() const {
  double m = std::max(std::abs(curvature(0.0)), std::abs(curvature(length)));
  // kappa'(s) = b + 2c s + 3d s^2
  const double qa = 3.0 * coeffs[3], qb = 2.0 * coeffs[2], qc = coeffs[1];
  auto probe = [&](double s) {
    if (s > 0.0 && s < length) m = std::max(m, std::abs(curvature(s)));
  };
  if (std::abs(qa) < 1e-300) {
    if (std::abs(qb) > 1e-300) probe(-qc / qb);
  } else {
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc >= 0.0) {
      const double r = std::sqrt(disc);
      probe((-qb + r) / (2.0 * qa));
      probe((-qb - r) / (2.0 * qa));
    }
  }
  return m;
}

namespace {

struct PlaneFit {
  Eigen::Vector3d centroid;
  Eigen::Vector3d normal;  // upward
  double residual;
};

std::optional<PlaneFit> fit_plane(const SemanticPointCloud& cloud, std::span<const std::size_t> idx) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (std::size_t i : idx) c += cloud.position(i);
  c /= static_cast<double>(idx.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i : idx) {
    const Eigen::Vector3d d = cloud.position(i) - c;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(idx.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d lambda = eig.eigenvalues();  // ascending
  if (!(lambda[2] > 0.0) || lambda[1] <= 1e-10 * lambda[2]) return std::nullopt;  // rank < 2
  Eigen::Vector3d n = eig.eigenvectors().col(0);
  if (n.z() < 0.0) n = -n;
  if (n.z() < 1e-6) return std::nullopt;  // vertical plane: no height over xy
  return PlaneFit{c, n.normalized(), std::sqrt(std::max(lambda[0], 0.0))};
}

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a < 0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

}  // namespace

std::optional<SurfaceFit> project_to_surface(const SemanticPointCloud& cloud, const Pose6D& pose,
                                             const TraversabilityParams& params,
                                             const std::optional<Eigen::Vector3d>& fallback_heading) {
  const auto K = static_cast<std::size_t>(params.K);
  if (cloud.size() < K) return std::nullopt;
  const Eigen::Vector3d q = pose.translation();
  std::vector<std::size_t> support;
  std::optional<PlaneFit> plane;
  Eigen::Vector3d p = q;
  // The neighbours of a pose far off the surface can sit beside it, so the
  // support set is re-queried at the projected position.
  for (int pass = 0; pass < 3; ++pass) {
    std::vector<std::size_t> next;
    next.reserve(K);
    for (const auto& nb : cloud.index().knn(p, K)) next.push_back(nb.index);
    if (pass > 0 && next == support) break;
    support = std::move(next);
    plane = fit_plane(cloud, support);
    if (!plane) return std::nullopt;
    const Eigen::Vector3d& n = plane->normal;
    p = q;
    p.z() = plane->centroid.z() - (n.x() * (q.x() - plane->centroid.x()) + n.y() * (q.y() - plane->centroid.y())) / n.z();
  }
  const Eigen::Vector3d& n = plane->normal;

  double nearest = std::numeric_limits<double>::infinity();
  for (std::size_t i : support) nearest = std::min(nearest, (cloud.position(i) - p).norm());
  if (nearest > params.max_support_gap) return std::nullopt;

  auto R = frame_from_heading<double>(pose.linear().col(0), n);
  if (!R && fallback_heading) R = frame_from_heading<double>(*fallback_heading, n);
  if (!R) return std::nullopt;
  return SurfaceFit{make_pose<double>(*R, p), std::move(support), plane->residual};
}

double traversability(const Pose6D& pose, std::span<const std::size_t> support, const SemanticPointCloud& cloud,
                      const TraversabilityParams& params) {
  if (support.empty()) return 0.0;
  const Eigen::Vector3d n = pose.linear().col(2);
  double ss = 0.0;
  for (std::size_t i : support) {
    const double d = n.dot(cloud.position(i) - pose.translation());
    ss += d * d;
  }
  const double residual = std::sqrt(ss / static_cast<double>(support.size()));
  const auto att = attitude(pose);
  const double roll = std::abs(att.roll), pitch = std::abs(att.pitch);
  if (roll >= params.max_roll || pitch >= params.max_pitch || residual >= params.max_residual) return 0.0;
  return (1.0 - roll / params.max_roll) * (1.0 - pitch / params.max_pitch) * (1.0 - residual / params.max_residual);
}

PlanarState integrate_primitive(const PlanarState& start, const MotionPrimitive& primitive, double kappa_max,
                                int steps) {
  if (!(primitive.length > 0.0)) throw std::invalid_argument("primitive length must be positive");
  if (std::abs(primitive.start_curvature() - start.curvature) > 1e-12) {
    throw std::invalid_argument("primitive start curvature does not match the start state");
  }
  if (primitive.max_abs_curvature() > kappa_max * (1.0 + 1e-12)) {
    throw std::invalid_argument("primitive exceeds the curvature bound");
  }
  const double dir = primitive.reverse ? -1.0 : 1.0;
  const double h = primitive.length / steps;
  double x = start.x, y = start.y, th = start.heading;
  // Heading is a polynomial in s; only x and y need the RK4 stages.
  auto heading_at = [&](double s0, double th0, double s) {
    const auto& k = primitive.coeffs;
    auto integral = [&](double t) { return t * (k[0] + t * (k[1] / 2 + t * (k[2] / 3 + t * k[3] / 4))); };
    return th0 + dir * (integral(s) - integral(s0));
  };
  for (int i = 0; i < steps; ++i) {
    const double s = i * h;
    const double th_mid = heading_at(s, th, s + 0.5 * h);
    const double th_end = heading_at(s, th, s + h);
    // RK4 stages k2 == k3 because the heading does not depend on x, y.
    x += dir * h / 6.0 * (std::cos(th) + 4.0 * std::cos(th_mid) + std::cos(th_end));
    y += dir * h / 6.0 * (std::sin(th) + 4.0 * std::sin(th_mid) + std::sin(th_end));
    th = th_end;
  }
  return {x, y, th, primitive.end_curvature()};
}

std::optional<TrajectoryNode> attach_node(const SemanticPointCloud& cloud, const Pose6D& pose,
                                          const TraversabilityParams& params, double curvature) {
  auto fit = project_to_surface(cloud, pose, params);
  if (!fit) return std::nullopt;
  const double tau = traversability(fit->pose, fit->support, cloud, params);
  if (!(tau > 0.0)) return std::nullopt;
  return TrajectoryNode{fit->pose, tau, curvature, std::move(fit->support)};
}

std::optional<TrajectoryNode> extend(const TrajectoryNode& node, const MotionPrimitive& primitive,
                                     const SemanticPointCloud& cloud, const TraversabilityParams& params,
                                     const KinematicParams& kinematics) {
  if (std::abs(primitive.start_curvature() - node.curvature) > 1e-12) return std::nullopt;
  if (!(primitive.length > 0.0) || primitive.max_abs_curvature() > kinematics.kappa_max * (1.0 + 1e-12)) {
    return std::nullopt;
  }
  const PlanarState end = integrate_primitive({0, 0, 0, node.curvature}, primitive, kinematics.kappa_max);

  const Eigen::Matrix3d R = node.pose.linear();
  const Eigen::Vector3d origin = node.pose.translation();
  const Eigen::Vector3d p = origin + R * Eigen::Vector3d(end.x, end.y, 0.0);
  const Eigen::Vector3d heading = R * Eigen::Vector3d(std::cos(end.heading), std::sin(end.heading), 0.0);
  const Eigen::Vector3d chord = p - origin;

  auto Rq = frame_from_heading<double>(heading, R.col(2));
  if (!Rq) return std::nullopt;
  auto fit = project_to_surface(cloud, make_pose<double>(*Rq, p), params,
                                chord.norm() > 0 ? std::optional<Eigen::Vector3d>(chord) : std::nullopt);
  if (!fit) return std::nullopt;
  orthonormalize(fit->pose);
  const double tau = traversability(fit->pose, fit->support, cloud, params);
  if (!(tau > 0.0)) return std::nullopt;
  return TrajectoryNode{fit->pose, tau, end.curvature, std::move(fit->support)};
}

std::vector<MotionPrimitive> primitive_library(double kappa0, const KinematicParams& kin) {
  const double L = kin.segment_length, k = kin.kappa_max;
  std::vector<MotionPrimitive> lib;
  lib.reserve(7);
  for (double target : {-k, -0.5 * k, 0.0, 0.5 * k, k}) {
    lib.push_back({{kappa0, (target - kappa0) / L, 0.0, 0.0}, L, false});
  }
  for (double len : {L, 0.5 * L}) lib.push_back({{kappa0, -kappa0 / len, 0.0, 0.0}, len, true});
  return lib;
}

std::optional<MotionPrimitive> connect_states(double from_curvature, const PlanarState& target,
                                              const KinematicParams& kin) {
  const double chord = std::hypot(target.x, target.y);
  if (!(chord > 1e-6)) return std::nullopt;
  const double a = from_curvature;

  auto build = [&](const Eigen::Vector3d& u) {
    const double b = u[0], c = u[1], L = u[2];
    const double d = (target.curvature - a - b * L - c * L * L) / (L * L * L);
    return MotionPrimitive{{a, b, c, d}, L, false};
  };
  auto residual = [&](const Eigen::Vector3d& u) -> std::optional<Eigen::Vector3d> {
    if (!(u[2] > 1e-3)) return std::nullopt;
    const MotionPrimitive prim = build(u);
    if (!std::isfinite(prim.coeffs[3])) return std::nullopt;
    // Skip the bound check while iterating; the final primitive is checked below.
    KinematicParams loose = kin;
    loose.kappa_max = std::numeric_limits<double>::infinity();
    const PlanarState e = integrate_primitive({0, 0, 0, a}, prim, loose.kappa_max);
    return Eigen::Vector3d(e.x - target.x, e.y - target.y, wrap_angle(e.heading - target.heading));
  };

  Eigen::Vector3d u(0.0, 0.0, chord);
  for (int iter = 0; iter < 40; ++iter) {
    const auto r = residual(u);
    if (!r) return std::nullopt;
    if (r->norm() < 1e-10) {
      const MotionPrimitive prim = build(u);
      if (prim.max_abs_curvature() > kin.kappa_max) return std::nullopt;
      return prim;
    }
    Eigen::Matrix3d J;
    for (int j = 0; j < 3; ++j) {
      Eigen::Vector3d du = Eigen::Vector3d::Zero();
      du[j] = 1e-7 * std::max(1.0, std::abs(u[j]));
      const auto rp = residual(u + du);
      if (!rp) return std::nullopt;
      J.col(j) = (*rp - *r) / du[j];
    }
    Eigen::Vector3d step = J.colPivHouseholderQr().solve(-*r);
    if (!step.allFinite()) return std::nullopt;
    // Damp steps that would collapse the length.
    double scale = 1.0;
    while (u[2] + scale * step[2] < 0.25 * u[2] && scale > 1e-3) scale *= 0.5;
    u += scale * step;
  }
  return std::nullopt;
}

PlanarState to_local(const TrajectoryNode& node, const Eigen::Vector3d& point, const Eigen::Vector3d& heading,
                     double curvature) {
  const Eigen::Matrix3d R = node.pose.linear();
  const Eigen::Vector3d d = R.transpose() * (point - node.pose.translation());
  const Eigen::Vector3d h = R.transpose() * heading;
  return {d.x(), d.y(), std::atan2(h.y(), h.x()), curvature};
}

void write_path_csv(std::ostream& out, std::span<const TrajectoryNode> path) {
  out << "node_index,x,y,z,roll,pitch,yaw,tau,kappa\n";
  for (std::size_t k = 0; k < path.size(); ++k) {
    const auto& n = path[k];
    const auto att = attitude(n.pose);
    const Eigen::Vector3d t = n.pose.translation();
    out << k << ',' << t.x() << ',' << t.y() << ',' << t.z() << ',' << att.roll << ',' << att.pitch << ','
        << att.yaw << ',' << n.traversability << ',' << n.curvature << '\n';
  }
}

}  // namespace shpc
