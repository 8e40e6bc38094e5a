#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "hfm/error.hpp"

namespace hfm::geometry {

// Pinhole camera. Pixel (u, v) has its center at integer coordinates; the
// camera frame is x right, y down, z forward.
struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;

  // Principal point at the image center, equal focal lengths.
  static CameraIntrinsics centered(int width, int height, double focal);
  void validate() const;
};

// Per-pixel depth in meters; invalid pixels are holes.
struct DepthMap {
  int width = 0, height = 0;
  std::vector<float> depth;
  std::vector<std::uint8_t> valid;

  DepthMap() = default;
  DepthMap(int w, int h);

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }
  float at(int x, int y) const { return depth[index(x, y)]; }
  void set(int x, int y, float d);
  void set_hole(int x, int y);
};

// Unit surface normals in the camera frame. Valid normals face the camera,
// which here means a negative z component.
struct NormalMap {
  int width = 0, height = 0;
  std::vector<Eigen::Vector3f> normal;
  std::vector<std::uint8_t> valid;

  NormalMap() = default;
  NormalMap(int w, int h);

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }
  const Eigen::Vector3f& at(int x, int y) const { return normal[index(x, y)]; }
  void set(int x, int y, const Eigen::Vector3f& n);
  void set_invalid(int x, int y);
  std::size_t valid_count() const;
};

// True where depth is missing.
struct HoleMask {
  int width = 0, height = 0;
  std::vector<std::uint8_t> hole;

  HoleMask() = default;
  HoleMask(int w, int h);
  static HoleMask of(const DepthMap& depth);

  bool is_hole(int x, int y) const { return hole[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t count() const;
};

struct PointImage {
  int width = 0, height = 0;
  std::vector<Eigen::Vector3d> points;
  std::vector<std::uint8_t> valid;
};

// (u, v, d) -> ((u - cx) d / fx, (v - cy) d / fy, d); holes yield no point.
PointImage unproject(const DepthMap& depth, const CameraIntrinsics& intr);
Eigen::Vector3d unproject_pixel(double u, double v, double depth, const CameraIntrinsics& intr);
// Inverse of unproject_pixel for points with z > 0.
Eigen::Vector2d project(const Eigen::Vector3d& point, const CameraIntrinsics& intr);

// Total-least-squares plane fit over each pixel's window x window
// neighborhood of valid points. Pixels with fewer than min_valid points or a
// degenerate neighborhood (tied smallest covariance eigenvalues) are invalid.
NormalMap normal_from_depth(const DepthMap& depth, const CameraIntrinsics& intr, int window = 5,
                            int min_valid = 3);

// Angle between two directions in degrees, computed in double as
// atan2(|a x b|, a . b); independent of the vectors' lengths.
double angle_between_deg(const Eigen::Vector3f& a, const Eigen::Vector3f& b);

// Per-pixel angular error in degrees over pixels valid in both maps, in
// row-major pixel order.
std::vector<double> angle_error(const NormalMap& pred, const NormalMap& gt);

}  // namespace hfm::geometry
