#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>

#include "hfm/synth.hpp"

namespace hfm::testing {

// Depth of the plane {X : n.X = offset} seen through every pixel.
inline geometry::DepthMap plane_depth(int w, int h, const geometry::CameraIntrinsics& intr, const Eigen::Vector3d& n,
                                      double offset) {
  geometry::DepthMap depth(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d ray((x - intr.cx) / intr.fx, (y - intr.cy) / intr.fy, 1.0);
      depth.set(x, y, static_cast<float>(offset / n.dot(ray)));
    }
  return depth;
}

// Worst angle to `truth` away from the border; a missing normal counts as
// an infinite error.
inline double max_interior_error(const geometry::NormalMap& est, const Eigen::Vector3f& truth, int border) {
  double worst = 0;
  for (int y = border; y < est.height - border; ++y)
    for (int x = border; x < est.width - border; ++x) {
      if (!est.is_valid(x, y)) return std::numeric_limits<double>::infinity();
      worst = std::max(worst, geometry::angle_between_deg(est.at(x, y), truth));
    }
  return worst;
}

// Mean angle between clean-depth plane fits and analytic normals, over
// pixels whose whole 5x5 window lies on a single surface.
inline double interior_fit_error(const synth::RenderedScene& scene, const geometry::CameraIntrinsics& intr,
                                 std::size_t* count) {
  const auto fit = geometry::normal_from_depth(scene.depth, intr, 5);
  const int w = scene.depth.width, h = scene.depth.height;
  double total = 0;
  std::size_t n = 0;
  for (int y = 2; y < h - 2; ++y)
    for (int x = 2; x < w - 2; ++x) {
      const int id = scene.surface[scene.depth.index(x, y)];
      bool interior = id >= 0 && scene.normals.is_valid(x, y);
      for (int dy = -2; dy <= 2 && interior; ++dy)
        for (int dx = -2; dx <= 2 && interior; ++dx)
          interior = scene.surface[scene.depth.index(x + dx, y + dy)] == id;
      if (!interior) continue;
      if (!fit.is_valid(x, y)) return std::numeric_limits<double>::infinity();
      total += geometry::angle_between_deg(fit.at(x, y), scene.normals.at(x, y));
      ++n;
    }
  *count = n;
  return n ? total / static_cast<double>(n) : 0.0;
}

}  // namespace hfm::testing
