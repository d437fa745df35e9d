#include "shpc/render.hpp"

#include <algorithm>
#include <cmath>

namespace shpc {

int VisibilityImage::covered_pixels() const {
  return static_cast<int>(std::count_if(owner.begin(), owner.end(), [](int o) { return o >= 0; }));
}

namespace {

/// Closed pixel index range [lo, hi] whose cells meet [c - h, c + h], clipped to [0, n).
bool span(double c, double h, int n, int& lo, int& hi) {
  const double a = std::floor(c - h), b = std::floor(c + h);
  if (b < 0.0 || a >= n) return false;
  lo = static_cast<int>(std::max(a, 0.0));
  hi = static_cast<int>(std::min(b, static_cast<double>(n - 1)));
  return lo <= hi;
}

}  // namespace

VisibilityImage render_visibility(const Eigen::Matrix3Xd& positions, double splat_side, const Pose6D& camera_to_map,
                                  const Intrinsics& K, int width, int height) {
  VisibilityImage img;
  img.width = width;
  img.height = height;
  const std::size_t npix = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  img.owner.assign(npix, -1);
  img.depth.assign(npix, 0.0);
  img.coverage.assign(static_cast<std::size_t>(positions.cols()), 0);

  const Eigen::Matrix3d Rt = camera_to_map.linear().transpose();
  const Eigen::Vector3d t = camera_to_map.translation();
  const double half = 0.5 * splat_side;
  for (Eigen::Index i = 0; i < positions.cols(); ++i) {
    const Eigen::Vector3d pc = Rt * (Eigen::Vector3d(positions.col(i)) - t);
    if (!(pc.z() > 0.0)) continue;
    const double z = pc.z();
    const double u = K(0, 0) * pc.x() / z + K(0, 2);
    const double v = K(1, 1) * pc.y() / z + K(1, 2);
    int c0, c1, r0, r1;
    if (!span(u, K(0, 0) * half / z, width, c0, c1) || !span(v, K(1, 1) * half / z, height, r0, r1)) continue;
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const std::size_t p = static_cast<std::size_t>(r) * width + c;
        if (img.owner[p] < 0 || z < img.depth[p]) {
          img.owner[p] = static_cast<int>(i);
          img.depth[p] = z;
        }
      }
    }
  }
  for (int o : img.owner) {
    if (o >= 0) ++img.coverage[static_cast<std::size_t>(o)];
  }
  return img;
}

}  // namespace shpc
