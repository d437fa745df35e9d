#include "shpc/sensor.hpp"

#include "shpc/render.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace shpc {

GroundTruthScene::GroundTruthScene(Eigen::Matrix3Xd positions, std::vector<int> classes, ClassCatalog catalog)
    : positions_(std::move(positions)), classes_(std::move(classes)), catalog_(std::move(catalog)) {
  catalog_.validate();
  if (positions_.cols() == 0) throw std::invalid_argument("empty scene");
  if (static_cast<std::size_t>(positions_.cols()) != classes_.size()) {
    throw std::invalid_argument("scene positions and classes differ in length");
  }
  if (!positions_.allFinite()) throw std::invalid_argument("non-finite scene coordinate");
  for (int c : classes_) {
    if (c < 0 || c >= catalog_.size()) throw std::invalid_argument("scene class id outside the catalog");
  }
  index_ = KdTree(positions_);
  resolution_ = median_spacing(positions_, index_);

  // One tree per class; a point's boundary distance is its nearest foreign point.
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(catalog_.size()));
  for (std::size_t i = 0; i < classes_.size(); ++i) members[static_cast<std::size_t>(classes_[i])].push_back(i);
  std::vector<KdTree> trees;
  for (const auto& m : members) {
    Eigen::Matrix3Xd pts(3, static_cast<Eigen::Index>(m.size()));
    for (std::size_t k = 0; k < m.size(); ++k) pts.col(static_cast<Eigen::Index>(k)) = positions_.col(static_cast<Eigen::Index>(m[k]));
    trees.emplace_back(pts);
  }
  boundary_.assign(classes_.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const Eigen::Vector3d p = positions_.col(static_cast<Eigen::Index>(i));
    for (int c = 0; c < catalog_.size(); ++c) {
      if (c == classes_[i] || trees[static_cast<std::size_t>(c)].empty()) continue;
      const auto nn = trees[static_cast<std::size_t>(c)].nearest(p);
      boundary_[i] = std::min(boundary_[i], std::sqrt(nn->dist2));
    }
  }
}

void write_scene(std::ostream& out, const GroundTruthScene& scene) {
  const auto& cat = scene.catalog();
  out << "SHPC-SCENE 1\nclasses";
  for (int c = 0; c < cat.size(); ++c) out << ' ' << cat.names[static_cast<std::size_t>(c)] << ':' << (cat.is_safe(c) ? 's' : 'u');
  out << '\n';
  const auto flags = out.flags();
  const auto prec = out.precision();
  out.precision(17);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const auto p = scene.positions().col(static_cast<Eigen::Index>(i));
    out << p.x() << ' ' << p.y() << ' ' << p.z() << ' ' << scene.classes()[i] << '\n';
  }
  out.flags(flags);
  out.precision(prec);
}

GroundTruthScene read_scene(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "SHPC-SCENE 1") throw std::runtime_error("not an SHPC-SCENE 1 file");
  if (!std::getline(in, line)) throw std::runtime_error("scene file lacks a class list");
  std::istringstream cls(line);
  std::string word;
  cls >> word;
  if (word != "classes") throw std::runtime_error("scene file lacks a class list");
  std::vector<std::string> names;
  std::vector<int> safe;
  while (cls >> word) {
    const auto colon = word.rfind(':');
    if (colon == std::string::npos || colon + 2 != word.size() || (word.back() != 's' && word.back() != 'u')) {
      throw std::runtime_error("bad class entry: " + word);
    }
    if (word.back() == 's') safe.push_back(static_cast<int>(names.size()));
    names.push_back(word.substr(0, colon));
  }
  std::vector<double> xyz;
  std::vector<int> classes;
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream rec(line);
    double x, y, z;
    int c;
    std::string extra;
    if (!(rec >> x >> y >> z >> c) || (rec >> extra)) {
      throw std::runtime_error("bad scene record on line " + std::to_string(lineno));
    }
    xyz.insert(xyz.end(), {x, y, z});
    classes.push_back(c);
  }
  Eigen::Matrix3Xd pts = Eigen::Map<const Eigen::Matrix3Xd>(xyz.data(), 3, static_cast<Eigen::Index>(classes.size()));
  try {
    return GroundTruthScene(std::move(pts), std::move(classes), ClassCatalog::from_safe_set(std::move(names), std::move(safe)));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("invalid scene: ") + e.what());
  }
}

void save_scene(const std::string& path, const GroundTruthScene& scene) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  write_scene(out, scene);
  if (!out) throw std::runtime_error("failed writing " + path);
}

GroundTruthScene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_scene(in);
}

double NoiseModel::noise_std(double depth, double boundary_distance) const {
  const double b = boundary_coeff == 0.0 ? 0.0 : boundary_coeff * std::exp(-boundary_distance / boundary_scale);
  return distance_coeff * depth + b;
}

void NoiseModel::validate() const {
  if (passes < 2) throw std::invalid_argument("noise model needs at least two passes");
  if (!(base_logit >= 0.0) || !(distance_coeff >= 0.0) || !(boundary_coeff >= 0.0) || !(boundary_scale > 0.0) ||
      !std::isfinite(base_logit) || !std::isfinite(distance_coeff) || !std::isfinite(boundary_coeff) ||
      !std::isfinite(boundary_scale)) {
    throw std::invalid_argument("noise coefficients must be finite and non-negative");
  }
}

GroundTruthImage render_ground_truth(const GroundTruthScene& scene, const Pose6D& camera_to_map, const Intrinsics& K,
                                     int width, int height) {
  const VisibilityImage vis =
      render_visibility(scene.positions(), 0.5 * scene.resolution(), camera_to_map, K, width, height);
  GroundTruthImage img;
  img.width = width;
  img.height = height;
  img.depth = Eigen::MatrixXd::Zero(height, width);
  img.point = vis.owner;
  img.classes.assign(vis.owner.size(), -1);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const std::size_t p = static_cast<std::size_t>(r) * width + c;
      if (vis.owner[p] < 0) continue;
      img.depth(r, c) = vis.depth[p];
      img.classes[p] = scene.classes()[static_cast<std::size_t>(vis.owner[p])];
    }
  }
  return img;
}

Eigen::MatrixXd sample_pixel_passes(int true_class, int num_classes, double base_logit, double noise_std, int passes,
                                    std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd out(num_classes, passes);
  Eigen::VectorXd logits(num_classes);
  for (int t = 0; t < passes; ++t) {
    for (int c = 0; c < num_classes; ++c) {
      logits[c] = (c == true_class ? base_logit : 0.0) + noise_std * rng.normal();
    }
    const double mx = logits.maxCoeff();
    double sum = 0.0;
    for (int c = 0; c < num_classes; ++c) {
      logits[c] = std::exp(logits[c] - mx);
      sum += logits[c];
    }
    for (int c = 0; c < num_classes; ++c) out(c, t) = logits[c] / sum;
  }
  return out;
}

namespace {

/// Mean over the passes, then the T - 1 sample deviation around it.
void pass_statistics(const Eigen::MatrixXd& x, Eigen::Ref<Eigen::VectorXd> mean, Eigen::Ref<Eigen::VectorXd> std) {
  const Eigen::Index T = x.cols();
  for (Eigen::Index c = 0; c < x.rows(); ++c) {
    double sum = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) sum += x(c, t);
    const double m = sum / static_cast<double>(T);
    double ss = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) ss += (x(c, t) - m) * (x(c, t) - m);
    mean[c] = m;
    std[c] = std::sqrt(ss / static_cast<double>(T - 1));
  }
}

}  // namespace

RenderedView simulate_passes(const GroundTruthImage& truth, const GroundTruthScene& scene, const NoiseModel& noise,
                             std::uint64_t seed) {
  noise.validate();
  const int C = scene.catalog().size();
  const Eigen::Index npix = static_cast<Eigen::Index>(truth.point.size());
  RenderedView view{truth, Eigen::MatrixXd::Zero(C, npix), Eigen::MatrixXd::Zero(C, npix)};
  for (Eigen::Index p = 0; p < npix; ++p) {
    const int owner = truth.point[static_cast<std::size_t>(p)];
    if (owner < 0) continue;
    const double depth = truth.depth(p / truth.width, p % truth.width);
    const double s = noise.noise_std(depth, scene.boundary_distance()[static_cast<std::size_t>(owner)]);
    const Eigen::MatrixXd x = sample_pixel_passes(truth.classes[static_cast<std::size_t>(p)], C, noise.base_logit, s,
                                                  noise.passes, pixel_seed(seed, static_cast<std::size_t>(p)));
    pass_statistics(x, view.probs.col(p), view.uncerts.col(p));
  }
  return view;
}

PointMeasurements survey_points(const GroundTruthScene& scene, const Eigen::Vector3d& viewpoint,
                                const NoiseModel& noise, std::uint64_t seed) {
  noise.validate();
  const int C = scene.catalog().size();
  const Eigen::Index n = static_cast<Eigen::Index>(scene.size());
  PointMeasurements out{Eigen::MatrixXd(C, n), Eigen::MatrixXd(C, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double d = (scene.positions().col(i) - viewpoint).norm();
    const double s = noise.noise_std(d, scene.boundary_distance()[k]);
    const Eigen::MatrixXd x =
        sample_pixel_passes(scene.classes()[k], C, noise.base_logit, s, noise.passes, pixel_seed(seed, k));
    pass_statistics(x, out.probs.col(i), out.uncerts.col(i));
  }
  return out;
}

ViewMeasurement take_view(const GroundTruthScene& scene, const Pose6D& camera_to_map, const Intrinsics& K, int width,
                          int height, const NoiseModel& noise, std::uint64_t seed) {
  RenderedView v = simulate_passes(render_ground_truth(scene, camera_to_map, K, width, height), scene, noise, seed);
  ViewMeasurement m;
  m.K = K;
  m.pose = camera_to_map;
  m.width = width;
  m.height = height;
  m.depth = std::move(v.truth.depth);
  m.probs = std::move(v.probs);
  m.uncerts = std::move(v.uncerts);
  return m;
}

}  // namespace shpc
