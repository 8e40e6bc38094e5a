#include "hfm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace hfm::synth {
namespace {

constexpr double kPi = std::numbers::pi;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Rotation by `angle` about unit `axis` (Rodrigues).
Eigen::Matrix3d rotation(const Eigen::Vector3d& axis, double angle) {
  Eigen::Matrix3d k;
  k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  return Eigen::Matrix3d::Identity() + std::sin(angle) * k + (1 - std::cos(angle)) * k * k;
}

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  int face = 0;
};

bool intersect(const Plane& plane, const Eigen::Vector3d& dir, Hit& hit) {
  const double denom = plane.normal.dot(dir);
  if (std::abs(denom) < 1e-12) return false;
  const double t = plane.normal.dot(plane.point) / denom;
  if (t <= 0) return false;
  hit.t = t;
  hit.normal = denom > 0 ? Eigen::Vector3d(-plane.normal) : plane.normal;
  hit.face = 0;
  return true;
}

bool intersect(const Box& box, const Eigen::Vector3d& dir, Hit& hit) {
  const Eigen::Vector3d origin = box.axes.transpose() * (-box.center);
  const Eigen::Vector3d d = box.axes.transpose() * dir;
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int near_axis = -1;
  double near_sign = 0;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d(a)) < 1e-15) {
      if (std::abs(origin(a)) > box.half_extents(a)) return false;
      continue;
    }
    double t0 = (-box.half_extents(a) - origin(a)) / d(a);
    double t1 = (box.half_extents(a) - origin(a)) / d(a);
    double sign = -1;  // entering through the -a face
    if (t0 > t1) {
      std::swap(t0, t1);
      sign = 1;
    }
    if (t0 > t_near) {
      t_near = t0;
      near_axis = a;
      near_sign = sign;
    }
    t_far = std::min(t_far, t1);
  }
  if (near_axis < 0 || t_near > t_far || t_near <= 0) return false;
  hit.t = t_near;
  hit.normal = near_sign * box.axes.col(near_axis);
  hit.face = 1 + 2 * near_axis + (near_sign > 0 ? 1 : 0);
  return true;
}

bool intersect(const Sphere& sphere, const Eigen::Vector3d& dir, Hit& hit) {
  // |t d - c|^2 = r^2
  const double a = dir.squaredNorm();
  const double b = -2 * dir.dot(sphere.center);
  const double c = sphere.center.squaredNorm() - sphere.radius * sphere.radius;
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return false;
  const double t = (-b - std::sqrt(disc)) / (2 * a);
  if (t <= 0) return false;
  hit.t = t;
  hit.normal = (t * dir - sphere.center).normalized();
  hit.face = 0;
  return true;
}

float luminance(const Eigen::Vector3f& c) {
  return 0.299f * c.x() + 0.587f * c.y() + 0.114f * c.z();
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void SceneSpec::validate() const {
  require(width > 0 && height > 0, "scene extents must be positive");
  intrinsics.validate();
  require(!primitives.empty() && std::holds_alternative<Plane>(primitives.front().shape),
          "scene needs a background plane as its first primitive");
  require(light_direction.norm() > 0, "light direction must be non-zero");
  require(checker_size > 0, "checker size must be positive");
}

void SceneDistribution::validate() const {
  require(width > 0 && height > 0, "scene extents must be positive");
  require(focal > 0, "focal length must be positive");
  require(max_boxes >= 0 && max_spheres >= 0, "primitive counts must be non-negative");
  require(side_wall_probability >= 0 && side_wall_probability <= 1 && checker_probability >= 0 &&
              checker_probability <= 1,
          "scene probabilities must lie in [0, 1]");
}

SceneSpec random_scene(const SceneDistribution& dist, std::uint64_t seed) {
  dist.validate();
  std::mt19937_64 rng(seed);
  SceneSpec spec;
  spec.seed = seed;
  spec.width = dist.width;
  spec.height = dist.height;
  spec.intrinsics = CameraIntrinsics::centered(dist.width, dist.height, dist.focal);

  // Camera pitched down; (right, up, forward) is the world frame seen from it.
  const double pitch = uniform(rng, 15, 35) * kPi / 180;
  const Eigen::Vector3d right(1, 0, 0);
  const Eigen::Vector3d up(0, -std::cos(pitch), -std::sin(pitch));
  const Eigen::Vector3d forward(0, -std::sin(pitch), std::cos(pitch));
  const double camera_height = uniform(rng, 1.2, 1.8);

  auto albedo = [&] {
    return Eigen::Vector3f(static_cast<float>(uniform(rng, 0.25, 0.95)),
                           static_cast<float>(uniform(rng, 0.25, 0.95)),
                           static_cast<float>(uniform(rng, 0.25, 0.95)));
  };
  auto checker = [&] { return uniform(rng, 0, 1) < dist.checker_probability; };

  const double wall_distance = uniform(rng, 4.0, 6.5);
  const double wall_yaw = uniform(rng, -25, 25) * kPi / 180;
  const Eigen::Vector3d wall_normal = -(rotation(up, wall_yaw) * forward);
  spec.primitives.push_back({Plane{wall_distance * forward, wall_normal}, albedo(), checker()});
  spec.primitives.push_back({Plane{-camera_height * up, up}, albedo(), checker()});

  if (uniform(rng, 0, 1) < dist.side_wall_probability) {
    const double side = uniform(rng, 0, 1) < 0.5 ? -1.0 : 1.0;
    const double slant = uniform(rng, 30, 55) * kPi / 180;
    const Eigen::Vector3d n = -side * std::cos(slant) * right - std::sin(slant) * forward;
    const Eigen::Vector3d p = side * uniform(rng, 1.6, 2.4) * right + uniform(rng, 2.0, 3.0) * forward;
    spec.primitives.push_back({Plane{p, n.normalized()}, albedo(), checker()});
  }

  const int boxes = uniform_int(rng, dist.max_boxes > 0 ? 1 : 0, dist.max_boxes);
  for (int i = 0; i < boxes; ++i) {
    const Eigen::Vector3d half(uniform(rng, 0.2, 0.55), uniform(rng, 0.15, 0.6), uniform(rng, 0.2, 0.55));
    const double depth = uniform(rng, 2.4, std::max(2.5, wall_distance - 1.0));
    const Eigen::Vector3d center =
        uniform(rng, -1.1, 1.1) * right + depth * forward + (half.y() - camera_height) * up;
    const Eigen::Matrix3d yaw = rotation(up, uniform(rng, -40, 40) * kPi / 180);
    Box box{center, half, Eigen::Matrix3d::Identity()};
    box.axes.col(0) = yaw * right;
    box.axes.col(1) = up;
    box.axes.col(2) = yaw * forward;
    spec.primitives.push_back({box, albedo(), checker()});
  }

  const int spheres = uniform_int(rng, 0, dist.max_spheres);
  for (int i = 0; i < spheres; ++i) {
    const double radius = uniform(rng, 0.2, 0.5);
    const double depth = uniform(rng, 2.2, std::max(2.3, wall_distance - 1.0));
    const Eigen::Vector3d center =
        uniform(rng, -1.2, 1.2) * right + depth * forward + (radius - camera_height) * up;
    spec.primitives.push_back({Sphere{center, radius}, albedo(), checker()});
  }

  spec.light_direction =
      Eigen::Vector3d(uniform(rng, -0.6, 0.6), uniform(rng, -1.0, -0.3), -1.0).normalized();
  spec.checker_size = uniform(rng, 0.2, 0.4);
  return spec;
}

RenderedScene render_scene(const SceneSpec& spec) {
  spec.validate();
  RenderedScene out;
  out.rgb = RgbImage(spec.width, spec.height);
  out.depth = DepthMap(spec.width, spec.height);
  out.normals = NormalMap(spec.width, spec.height);
  out.surface.assign(static_cast<std::size_t>(spec.width) * spec.height, -1);
  const Eigen::Vector3d light = spec.light_direction.normalized();

  for (int v = 0; v < spec.height; ++v) {
    for (int u = 0; u < spec.width; ++u) {
      const Eigen::Vector3d dir((u - spec.intrinsics.cx) / spec.intrinsics.fx,
                                (v - spec.intrinsics.cy) / spec.intrinsics.fy, 1.0);
      Hit best;
      int best_index = -1;
      for (std::size_t i = 0; i < spec.primitives.size(); ++i) {
        Hit hit;
        const bool ok = std::visit([&](const auto& shape) { return intersect(shape, dir, hit); },
                                   spec.primitives[i].shape);
        if (ok && hit.t < best.t) {
          best = hit;
          best_index = static_cast<int>(i);
        }
      }
      if (best_index < 0) continue;

      const std::size_t idx = out.depth.index(u, v);
      const Eigen::Vector3d point = best.t * dir;
      out.depth.set(u, v, static_cast<float>(point.z()));
      out.surface[idx] = best_index * 8 + best.face;
      if (best.normal.z() < 0) out.normals.set(u, v, best.normal.cast<float>());

      const Primitive& prim = spec.primitives[static_cast<std::size_t>(best_index)];
      Eigen::Vector3f albedo = prim.albedo;
      if (prim.checker) {
        const auto cell = (point / spec.checker_size).array().floor().cast<long>();
        if ((cell.x() + cell.y() + cell.z()) % 2 != 0) albedo *= 0.5f;
      }
      const double shade = spec.ambient + (1 - spec.ambient) * std::max(0.0, best.normal.dot(light));
      out.rgb.pixels[idx] = (albedo * static_cast<float>(shade)).cwiseMin(1.0f);
    }
  }
  return out;
}

void CorruptionSpec::validate() const {
  require(hole_count >= 0, "hole count must be non-negative");
  require(hole_radius_min >= 0 && hole_radius_max >= hole_radius_min,
          "hole radii must satisfy 0 <= min <= max");
  require(glossy_probability >= 0 && glossy_probability <= 1, "glossy probability must lie in [0, 1]");
  require(edge_radius >= 0 && edge_sigma >= 0 && edge_gap >= 0, "edge noise parameters must be non-negative");
}

CorruptionSpec CorruptionSpec::heavy() {
  CorruptionSpec spec;
  spec.hole_count = 4;
  spec.hole_radius_min = 3;
  spec.hole_radius_max = 9;
  spec.glossy_probability = 0.6;
  spec.glossy_threshold = 0.7;
  spec.max_depth = 5.5;
  spec.edge_radius = 1;
  spec.edge_sigma = 0.05;
  spec.quantization = 0.001;
  return spec;
}

CorruptedDepth corrupt_depth(const DepthMap& clean, const RgbImage& rgb, const CorruptionSpec& spec,
                             std::uint64_t seed) {
  spec.validate();
  require(rgb.width == clean.width && rgb.height == clean.height,
          "corrupt_depth: rgb and depth extents differ");
  std::mt19937_64 rng(seed);
  const int w = clean.width, h = clean.height;
  DepthMap out = clean;

  for (int i = 0; i < spec.hole_count; ++i) {
    const double cx = uniform(rng, 0, w), cy = uniform(rng, 0, h);
    const double a = uniform(rng, spec.hole_radius_min, spec.hole_radius_max);
    const double b = uniform(rng, spec.hole_radius_min, spec.hole_radius_max);
    const double theta = uniform(rng, 0, kPi);
    const double c = std::cos(theta), s = std::sin(theta);
    if (a <= 0 || b <= 0) continue;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double dx = x - cx, dy = y - cy;
        const double p = (dx * c + dy * s) / a, q = (-dx * s + dy * c) / b;
        if (p * p + q * q <= 1) out.set_hole(x, y);
      }
    }
  }

  if (spec.glossy_probability > 0) {
    std::bernoulli_distribution drop(spec.glossy_probability);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (luminance(rgb.pixels[out.index(x, y)]) > spec.glossy_threshold && drop(rng)) out.set_hole(x, y);
      }
    }
  }

  if (spec.max_depth > 0) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (out.is_valid(x, y) && out.at(x, y) > spec.max_depth) out.set_hole(x, y);
      }
    }
  }

  if (spec.edge_sigma > 0) {
    // Discontinuities come from the clean depth; the band dilates them.
    std::vector<std::uint8_t> edge(static_cast<std::size_t>(w) * h, 0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!clean.is_valid(x, y)) continue;
        const int nx[4] = {x + 1, x - 1, x, x};
        const int ny[4] = {y, y, y + 1, y - 1};
        for (int k = 0; k < 4; ++k) {
          if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h || !clean.is_valid(nx[k], ny[k])) continue;
          if (std::abs(clean.at(x, y) - clean.at(nx[k], ny[k])) > spec.edge_gap) edge[clean.index(x, y)] = 1;
        }
      }
    }
    std::normal_distribution<double> jitter(0.0, spec.edge_sigma);
    const int r = spec.edge_radius;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        bool in_band = false;
        for (int dy = -r; dy <= r && !in_band; ++dy) {
          for (int dx = -r; dx <= r && !in_band; ++dx) {
            const int u = x + dx, v = y + dy;
            in_band = u >= 0 && v >= 0 && u < w && v < h && edge[out.index(u, v)];
          }
        }
        if (!in_band || !out.is_valid(x, y)) continue;
        const double d = out.at(x, y) + jitter(rng);
        if (d > 0) {
          out.set(x, y, static_cast<float>(d));
        } else {
          out.set_hole(x, y);
        }
      }
    }
  }

  if (spec.quantization > 0) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!out.is_valid(x, y)) continue;
        const double q = std::round(out.at(x, y) / spec.quantization) * spec.quantization;
        if (q > 0) {
          out.set(x, y, static_cast<float>(q));
        } else {
          out.set_hole(x, y);
        }
      }
    }
  }

  HoleMask holes = HoleMask::of(out);
  return {std::move(out), std::move(holes)};
}

void GtNoiseSpec::validate() const {
  require(cell_size >= 1, "ground-truth noise cell size must be >= 1");
  require(misalignment >= 0, "ground-truth misalignment must be non-negative");
}

NormalMap perturb_gt(const NormalMap& gt, const GtNoiseSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  const int w = gt.width, h = gt.height, s = spec.cell_size, a = spec.misalignment;
  const int ox = uniform_int(rng, 0, s - 1);
  const int oy = uniform_int(rng, 0, s - 1);
  const int cells_x = (w + ox) / s + 1;
  const int cells_y = (h + oy) / s + 1;

  // Boundary misalignment: every row band shifts its vertical cell
  // boundaries, every column band shifts its horizontal ones.
  std::vector<int> shift_x(static_cast<std::size_t>(cells_y)), shift_y(static_cast<std::size_t>(cells_x));
  for (int& v : shift_x) v = uniform_int(rng, -a, a);
  for (int& v : shift_y) v = uniform_int(rng, -a, a);

  std::vector<Eigen::Vector3d> cell_sum(static_cast<std::size_t>(cells_x) * cells_y, Eigen::Vector3d::Zero());
  std::vector<int> cell_count(cell_sum.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!gt.is_valid(x, y)) continue;
      const std::size_t c = static_cast<std::size_t>((y + oy) / s) * cells_x + (x + ox) / s;
      cell_sum[c] += gt.at(x, y).cast<double>();
      ++cell_count[c];
    }
  }

  NormalMap out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!gt.is_valid(x, y)) continue;
      const int band_y = (y + oy) / s, band_x = (x + ox) / s;
      const int cx = std::clamp((x + ox + shift_x[static_cast<std::size_t>(band_y)]) / s, 0, cells_x - 1);
      const int cy = std::clamp((y + oy + shift_y[static_cast<std::size_t>(band_x)]) / s, 0, cells_y - 1);
      const std::size_t c = static_cast<std::size_t>(cy) * cells_x + cx;
      Eigen::Vector3d n = gt.at(x, y).cast<double>();
      if (cell_count[c] > 0 && cell_sum[c].norm() > 1e-12) n = cell_sum[c];
      out.set(x, y, n.normalized().cast<float>());
    }
  }
  return out;
}

std::vector<NormalMap> build_pyramid(const NormalMap& gt, int levels) {
  require(levels >= 1, "pyramid needs at least one level");
  const int factor = 1 << (levels - 1);
  require(gt.width % factor == 0 && gt.height % factor == 0,
          "pyramid: extents " + std::to_string(gt.width) + "x" + std::to_string(gt.height) +
              " not divisible by " + std::to_string(factor));
  std::vector<NormalMap> pyramid{gt};
  for (int l = 1; l < levels; ++l) {
    const NormalMap& fine = pyramid.back();
    NormalMap coarse(fine.width / 2, fine.height / 2);
    for (int y = 0; y < coarse.height; ++y) {
      for (int x = 0; x < coarse.width; ++x) {
        Eigen::Vector3d acc = Eigen::Vector3d::Zero();
        int count = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            if (!fine.is_valid(2 * x + dx, 2 * y + dy)) continue;
            acc += fine.at(2 * x + dx, 2 * y + dy).cast<double>();
            ++count;
          }
        }
        // Opposing normals can cancel; such a pixel carries no direction.
        if (count > 0 && acc.norm() > 1e-12) coarse.set(x, y, (acc / count).normalized().cast<float>());
      }
    }
    pyramid.push_back(std::move(coarse));
  }
  std::reverse(pyramid.begin(), pyramid.end());
  return pyramid;
}

Sample generate_sample(const SampleConfig& config, std::uint64_t seed) {
  Sample sample;
  sample.seed = seed;
  const SceneSpec scene = random_scene(config.scene, derive_seed(seed, 0));
  RenderedScene rendered = render_scene(scene);
  sample.intrinsics = scene.intrinsics;
  CorruptedDepth sensor = corrupt_depth(rendered.depth, rendered.rgb, config.corruption, derive_seed(seed, 1));
  sample.target = perturb_gt(rendered.normals, config.gt_noise, derive_seed(seed, 2));
  sample.rgb = std::move(rendered.rgb);
  sample.clean_depth = std::move(rendered.depth);
  sample.depth = std::move(sensor.depth);
  sample.holes = std::move(sensor.holes);
  sample.gt = std::move(rendered.normals);
  return sample;
}

}  // namespace hfm::synth
