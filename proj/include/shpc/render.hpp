#pragma once

#include "shpc/geometry.hpp"

#include <Eigen/Core>

#include <vector>

namespace shpc {

/// Depth-buffered splat rendering: which point owns each pixel.
struct VisibilityImage {
  int width = 0;
  int height = 0;
  std::vector<int> owner;     ///< row-major, -1 for empty pixels
  std::vector<double> depth;  ///< camera-frame z of the owner, 0 for empty pixels
  std::vector<int> coverage;  ///< pixels won, per point

  int owner_at(int col, int row) const { return owner[static_cast<std::size_t>(row) * width + col]; }
  int covered_pixels() const;
};

/// Splats every point with positive depth as a screen-aligned square whose
/// world side is `splat_side`, i.e. half extents f (side / 2) / z pixels around
/// the projection (u, v). Pixel (c, r) spans [c, c+1) x [r, r+1) and is
/// covered when that cell meets the closed square. The nearest point wins a
/// pixel; equal depths go to the lower index.
VisibilityImage render_visibility(const Eigen::Matrix3Xd& positions, double splat_side, const Pose6D& camera_to_map,
                                  const Intrinsics& K, int width, int height);

}  // namespace shpc
