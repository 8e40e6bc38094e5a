#include "hfm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

namespace hfm::geometry {

CameraIntrinsics CameraIntrinsics::centered(int width, int height, double focal) {
  return {focal, focal, (width - 1) / 2.0, (height - 1) / 2.0};
}

void CameraIntrinsics::validate() const {
  require(fx > 0 && fy > 0 && std::isfinite(fx) && std::isfinite(fy),
          "camera focal lengths must be positive");
  require(std::isfinite(cx) && std::isfinite(cy), "camera principal point must be finite");
}

DepthMap::DepthMap(int w, int h)
    : width(w), height(h),
      depth(static_cast<std::size_t>(w) * h, 0.0f),
      valid(static_cast<std::size_t>(w) * h, 0) {
  require(w >= 0 && h >= 0, "negative depth map extent");
}

void DepthMap::set(int x, int y, float d) {
  require(d > 0 && std::isfinite(d), "valid depth must be positive and finite");
  depth[index(x, y)] = d;
  valid[index(x, y)] = 1;
}

void DepthMap::set_hole(int x, int y) {
  depth[index(x, y)] = 0.0f;
  valid[index(x, y)] = 0;
}

NormalMap::NormalMap(int w, int h)
    : width(w), height(h),
      normal(static_cast<std::size_t>(w) * h, Eigen::Vector3f::Zero()),
      valid(static_cast<std::size_t>(w) * h, 0) {
  require(w >= 0 && h >= 0, "negative normal map extent");
}

void NormalMap::set(int x, int y, const Eigen::Vector3f& n) {
  normal[index(x, y)] = n;
  valid[index(x, y)] = 1;
}

void NormalMap::set_invalid(int x, int y) {
  normal[index(x, y)] = Eigen::Vector3f::Zero();
  valid[index(x, y)] = 0;
}

std::size_t NormalMap::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

HoleMask::HoleMask(int w, int h)
    : width(w), height(h), hole(static_cast<std::size_t>(w) * h, 0) {}

HoleMask HoleMask::of(const DepthMap& depth) {
  HoleMask mask(depth.width, depth.height);
  for (std::size_t i = 0; i < mask.hole.size(); ++i) mask.hole[i] = depth.valid[i] ? 0 : 1;
  return mask;
}

std::size_t HoleMask::count() const {
  return static_cast<std::size_t>(std::count(hole.begin(), hole.end(), std::uint8_t{1}));
}

Eigen::Vector3d unproject_pixel(double u, double v, double depth, const CameraIntrinsics& intr) {
  return {(u - intr.cx) * depth / intr.fx, (v - intr.cy) * depth / intr.fy, depth};
}

Eigen::Vector2d project(const Eigen::Vector3d& point, const CameraIntrinsics& intr) {
  require(point.z() > 0, "cannot project a point behind the camera");
  return {intr.fx * point.x() / point.z() + intr.cx, intr.fy * point.y() / point.z() + intr.cy};
}

PointImage unproject(const DepthMap& depth, const CameraIntrinsics& intr) {
  intr.validate();
  PointImage out;
  out.width = depth.width;
  out.height = depth.height;
  out.points.assign(depth.depth.size(), Eigen::Vector3d::Zero());
  out.valid = depth.valid;
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (depth.is_valid(x, y)) out.points[depth.index(x, y)] = unproject_pixel(x, y, depth.at(x, y), intr);
    }
  }
  return out;
}

NormalMap normal_from_depth(const DepthMap& depth, const CameraIntrinsics& intr, int window,
                            int min_valid) {
  require(window >= 3 && window % 2 == 1, "normal_from_depth: window must be odd and >= 3");
  require(min_valid >= 3, "normal_from_depth: min_valid must be >= 3");
  const PointImage cloud = unproject(depth, intr);
  const int r = window / 2;

  NormalMap out(depth.width, depth.height);
  std::vector<Eigen::Vector3d> neighborhood;
  neighborhood.reserve(static_cast<std::size_t>(window) * window);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      neighborhood.clear();
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const int u = x + dx, v = y + dy;
          if (u < 0 || v < 0 || u >= depth.width || v >= depth.height) continue;
          const std::size_t i = depth.index(u, v);
          if (cloud.valid[i]) neighborhood.push_back(cloud.points[i]);
        }
      }
      if (static_cast<int>(neighborhood.size()) < min_valid) continue;

      Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
      for (const auto& p : neighborhood) centroid += p;
      centroid /= static_cast<double>(neighborhood.size());
      Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
      for (const auto& p : neighborhood) {
        const Eigen::Vector3d d = p - centroid;
        cov.noalias() += d * d.transpose();
      }

      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
      solver.computeDirect(cov);
      const Eigen::Vector3d& eig = solver.eigenvalues();  // ascending
      if (!(eig(2) > 0) || eig(1) - eig(0) <= 1e-9 * eig(2)) continue;

      Eigen::Vector3d n = solver.eigenvectors().col(0).normalized();
      if (n.z() > 0 || (n.z() == 0 && n.dot(centroid) > 0)) n = -n;
      out.set(x, y, n.cast<float>());
    }
  }
  return out;
}

double angle_between_deg(const Eigen::Vector3f& a, const Eigen::Vector3f& b) {
  // Equals arccos of the normalized dot product, but stays accurate near 0
  // and 180 degrees where acos is ill-conditioned, and is exactly 0 for
  // identical vectors.
  const Eigen::Vector3d u = a.cast<double>(), v = b.cast<double>();
  return std::atan2(u.cross(v).norm(), u.dot(v)) * 180.0 / std::numbers::pi;
}

std::vector<double> angle_error(const NormalMap& pred, const NormalMap& gt) {
  require(pred.width == gt.width && pred.height == gt.height,
          "angle_error: normal maps differ in size");
  std::vector<double> errors;
  for (std::size_t i = 0; i < pred.normal.size(); ++i) {
    if (pred.valid[i] && gt.valid[i]) errors.push_back(angle_between_deg(pred.normal[i], gt.normal[i]));
  }
  return errors;
}

}  // namespace hfm::geometry
