#pragma once

#include "shpc/random.hpp"
#include "shpc/semantic_cloud.hpp"

#include <Eigen/Core>

#include <functional>

namespace shpc::test {

/// grass, gravel safe; dirt, water unsafe.
inline ClassCatalog catalog4() { return ClassCatalog::from_safe_set({"grass", "gravel", "dirt", "water"}, {0, 1}); }

inline Eigen::Matrix3Xd grid(int nx, int ny, double spacing, double x0 = 0.0, double y0 = 0.0,
                             const std::function<double(double, double)>& height = nullptr) {
  Eigen::Matrix3Xd pts(3, nx * ny);
  int k = 0;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double x = x0 + i * spacing, y = y0 + j * spacing;
      pts.col(k++) = Eigen::Vector3d(x, y, height ? height(x, y) : 0.0);
    }
  }
  return pts;
}

inline Eigen::VectorXd one_hot(int C, int c, double eps = 0.0) {
  Eigen::VectorXd p = Eigen::VectorXd::Constant(C, eps);
  p[c] = 1.0 - eps * (C - 1);
  return p;
}

/// Sets every point to a (near) one-hot measurement of `cls(i)` with sigma `s`.
inline void label_all(SemanticPointCloud& cloud, const std::function<int(std::size_t)>& cls, double s = 0.0) {
  const int C = cloud.num_classes();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    cloud.set_state(i, one_hot(C, cls(i)), Eigen::VectorXd::Constant(C, s), 1);
  }
}

inline Eigen::VectorXd random_simplex(Rng& rng, int C) {
  Eigen::VectorXd p(C);
  for (int c = 0; c < C; ++c) p[c] = -std::log(1.0 - rng.uniform());
  return p / p.sum();
}

}  // namespace shpc::test

namespace shpc::test {

/// Two banks joined by two unclear bridges over a sunken unsafe channel.
/// Banks x in [0, 3] and [5, 8] are Safe grass, the channel floor (z = -1)
/// is Unsafe water, bridges at |y| <= 0.5 and 1.8 <= y <= 2.8 are Unclear.
inline SemanticPointCloud bridge_cloud() {
  auto in_bridge = [](double y) { return std::abs(y) <= 0.5 + 1e-9 || (y >= 1.8 - 1e-9 && y <= 2.8 + 1e-9); };
  Eigen::Matrix3Xd pts = grid(81, 61, 0.1, 0.0, -3.0);
  std::vector<int> kind(static_cast<std::size_t>(pts.cols()));
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    const double x = pts(0, i), y = pts(1, i);
    const bool channel = x > 3.0 + 1e-9 && x < 5.0 - 1e-9;
    if (!channel) {
      kind[static_cast<std::size_t>(i)] = 0;
    } else if (in_bridge(y)) {
      kind[static_cast<std::size_t>(i)] = 1;
    } else {
      kind[static_cast<std::size_t>(i)] = 2;
      pts(2, i) = -1.0;
    }
  }
  auto cloud = SemanticPointCloud::init(pts, catalog4());
  const Eigen::Vector4d unclear(0.3, 0.3, 0.3, 0.1);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    switch (kind[i]) {
      case 0:
        cloud.set_state(i, one_hot(4, 0), Eigen::Vector4d::Zero(), 1);
        break;
      case 1:
        cloud.set_state(i, unclear, Eigen::Vector4d::Constant(0.1), 1);
        break;
      default:
        cloud.set_state(i, one_hot(4, 3), Eigen::Vector4d::Zero(), 1);
    }
  }
  return cloud;
}

}  // namespace shpc::test
