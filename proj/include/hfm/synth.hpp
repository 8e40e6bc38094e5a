#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "hfm/geometry.hpp"

namespace hfm::synth {

using geometry::CameraIntrinsics;
using geometry::DepthMap;
using geometry::HoleMask;
using geometry::NormalMap;

struct RgbImage {
  int width = 0, height = 0;
  std::vector<Eigen::Vector3f> pixels;  // linear intensities in [0, 1]

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, Eigen::Vector3f::Zero()) {}
};

// Infinite plane through `point` with unit `normal`.
struct Plane {
  Eigen::Vector3d point;
  Eigen::Vector3d normal;
};

// Oriented box; the columns of `axes` are its local axes in the camera frame.
struct Box {
  Eigen::Vector3d center;
  Eigen::Vector3d half_extents;
  Eigen::Matrix3d axes = Eigen::Matrix3d::Identity();
};

struct Sphere {
  Eigen::Vector3d center;
  double radius = 0;
};

struct Primitive {
  std::variant<Plane, Box, Sphere> shape;
  Eigen::Vector3f albedo{0.5f, 0.5f, 0.5f};
  bool checker = false;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int width = 64, height = 64;
  CameraIntrinsics intrinsics = CameraIntrinsics::centered(64, 64, 60.0);
  // primitives[0] is the background plane.
  std::vector<Primitive> primitives;
  Eigen::Vector3d light_direction{0.0, -0.5, -1.0};  // toward the light
  double checker_size = 0.25;                        // meters
  double ambient = 0.3;

  void validate() const;
};

// Knobs for random room-like scenes: floor, back wall, optional side wall,
// boxes and spheres resting on the floor.
struct SceneDistribution {
  int width = 64, height = 64;
  double focal = 60.0;
  int max_boxes = 3;
  int max_spheres = 2;
  double side_wall_probability = 0.5;
  double checker_probability = 0.5;

  void validate() const;
};

SceneSpec random_scene(const SceneDistribution& dist, std::uint64_t seed);

struct RenderedScene {
  RgbImage rgb;
  DepthMap depth;
  NormalMap normals;
  // Per pixel: primitive index * 8 + face, or -1 where nothing was hit.
  std::vector<int> surface;
};

// Ray casts every pixel. Depth is the camera-frame z of the first hit; the
// normal is the analytic surface normal facing the camera. Pixels whose
// normal would have non-negative z are left without ground truth.
RenderedScene render_scene(const SceneSpec& spec);

struct CorruptionSpec {
  int hole_count = 0;  // elliptical holes
  double hole_radius_min = 0, hole_radius_max = 0;  // semi-axes in pixels
  double glossy_probability = 0;  // dropout chance on bright pixels
  double glossy_threshold = 0.85;  // luminance above which a pixel counts as glossy
  double max_depth = 0;  // beyond this depth is dropped; <= 0 disables
  int edge_radius = 0;  // dilation of the discontinuity band, pixels
  double edge_sigma = 0;  // jitter standard deviation in the band, meters
  double edge_gap = 0.05;  // neighbor depth gap that marks a discontinuity
  double quantization = 0;  // meters; <= 0 disables

  void validate() const;
  static CorruptionSpec heavy();
};

struct CorruptedDepth {
  DepthMap depth;
  HoleMask holes;
};

// `rgb` supplies the brightness used for glossy dropout.
CorruptedDepth corrupt_depth(const DepthMap& clean, const RgbImage& rgb, const CorruptionSpec& spec,
                             std::uint64_t seed);

// Multiview-reconstruction style ground-truth noise: piecewise-constant
// cells whose boundaries do not line up with the image content.
struct GtNoiseSpec {
  int cell_size = 1;
  int misalignment = 0;  // pixels

  void validate() const;
};

NormalMap perturb_gt(const NormalMap& gt, const GtNoiseSpec& spec, std::uint64_t seed);

// Coarse-to-fine pyramid: element 0 is the coarsest level, the last element
// is the input itself. Each coarser level is the 2x2 mean of the valid finer
// normals, renormalized; a coarse pixel is valid when any contributor is.
std::vector<NormalMap> build_pyramid(const NormalMap& gt, int levels);

struct SampleConfig {
  SceneDistribution scene;
  CorruptionSpec corruption;
  GtNoiseSpec gt_noise;
};

// One training/evaluation example. `gt` is the clean analytic normal map,
// `target` the (possibly perturbed) normals used as the training label.
struct Sample {
  std::uint64_t seed = 0;
  CameraIntrinsics intrinsics;
  RgbImage rgb;
  DepthMap clean_depth;
  DepthMap depth;
  HoleMask holes;
  NormalMap gt;
  NormalMap target;
};

Sample generate_sample(const SampleConfig& config, std::uint64_t seed);

// Decorrelates derived seeds (splitmix64 finalizer over seed and stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace hfm::synth
