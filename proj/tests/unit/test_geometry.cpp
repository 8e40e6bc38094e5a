#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include <Eigen/Geometry>

#include "geometry_oracles.hpp"
#include "hfm/geometry.hpp"

using namespace hfm;
using namespace hfm::geometry;

using hfm::testing::max_interior_error;
using hfm::testing::plane_depth;

TEST_CASE("unproject and project are inverse") {
  const auto intr = CameraIntrinsics::centered(32, 24, 40.0);
  CHECK(intr.cx == doctest::Approx(15.5));
  CHECK(intr.cy == doctest::Approx(11.5));
  const Eigen::Vector3d p = unproject_pixel(3.0, 20.0, 2.5, intr);
  CHECK(p.z() == 2.5);
  CHECK(p.x() == doctest::Approx((3.0 - 15.5) * 2.5 / 40.0));
  const Eigen::Vector2d uv = project(p, intr);
  CHECK(uv.x() == doctest::Approx(3.0));
  CHECK(uv.y() == doctest::Approx(20.0));
  CHECK_THROWS_AS(project(Eigen::Vector3d(0, 0, -1), intr), ContractViolation);
}

TEST_CASE("unproject skips holes") {
  DepthMap d(3, 1);
  d.set(0, 0, 1.0f);
  d.set(2, 0, 2.0f);
  const auto cloud = unproject(d, CameraIntrinsics::centered(3, 1, 1.0));
  CHECK(cloud.valid == std::vector<std::uint8_t>{1, 0, 1});
  CHECK(cloud.points[2].isApprox(Eigen::Vector3d(2.0, 0.0, 2.0)));
}

TEST_CASE("depth map rejects non-positive depth") {
  DepthMap d(2, 2);
  CHECK_THROWS_AS(d.set(0, 0, 0.0f), ContractViolation);
  CHECK_THROWS_AS(d.set(0, 0, -1.0f), ContractViolation);
  CHECK_THROWS_AS(d.set(0, 0, NAN), ContractViolation);
  CHECK_THROWS_AS((CameraIntrinsics{0, 1, 0, 0}.validate()), ContractViolation);
}

TEST_CASE("fronto-parallel plane gives (0,0,-1) everywhere") {
  const auto intr = CameraIntrinsics::centered(16, 16, 20.0);
  DepthMap d(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) d.set(x, y, 3.0f);
  const NormalMap n = normal_from_depth(d, intr);
  CHECK(n.valid_count() == 256);
  CHECK(max_interior_error(n, {0, 0, -1}, 0) < 1e-3);
}

TEST_CASE("slanted planes are recovered within half a degree") {
  const auto intr = CameraIntrinsics::centered(48, 40, 50.0);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> tilt(-0.8, 0.8);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Vector3d n = Eigen::Vector3d(tilt(rng), tilt(rng), -1.0).normalized();
    // n.X = offset < 0 keeps the plane in front of the camera for n.z < 0.
    const DepthMap d = plane_depth(48, 40, intr, n, -2.0 * std::abs(n.z()) - 0.5);
    const NormalMap est = normal_from_depth(d, intr);
    CHECK(max_interior_error(est, n.cast<float>(), 2) < 0.5);
  }
}

TEST_CASE("all holes yield an all-invalid map") {
  DepthMap d(8, 8);
  CHECK(normal_from_depth(d, CameraIntrinsics::centered(8, 8, 10.0)).valid_count() == 0);
}

TEST_CASE("sparse or collinear neighborhoods are invalid") {
  const auto intr = CameraIntrinsics::centered(9, 9, 10.0);
  DepthMap d(9, 9);
  d.set(4, 4, 1.0f);
  d.set(5, 4, 1.0f);
  NormalMap n = normal_from_depth(d, intr);
  CHECK(n.valid_count() == 0);
  d.set(6, 4, 1.0f);  // three points, but on one line
  n = normal_from_depth(d, intr);
  CHECK(n.valid_count() == 0);
  CHECK_THROWS_AS(normal_from_depth(d, intr, 4), ContractViolation);
  CHECK_THROWS_AS(normal_from_depth(d, intr, 5, 2), ContractViolation);
}

TEST_CASE("estimated normals are unit and camera facing") {
  const auto intr = CameraIntrinsics::centered(20, 20, 25.0);
  const Eigen::Vector3d n = Eigen::Vector3d(0.5, -0.3, -1.0).normalized();
  const NormalMap est = normal_from_depth(plane_depth(20, 20, intr, n, -1.5), intr);
  for (std::size_t i = 0; i < est.normal.size(); ++i) {
    REQUIRE(est.valid[i]);
    CHECK(est.normal[i].norm() == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(est.normal[i].z() < 0);
  }
}

TEST_CASE("plane fit is invariant to depth scale and rotates with the scene") {
  const auto intr = CameraIntrinsics::centered(24, 24, 30.0);
  const Eigen::Vector3d n = Eigen::Vector3d(0.2, 0.4, -1.0).normalized();
  const NormalMap a = normal_from_depth(plane_depth(24, 24, intr, n, -2.0), intr);
  const NormalMap b = normal_from_depth(plane_depth(24, 24, intr, n, -5.0), intr);
  for (std::size_t i = 0; i < a.normal.size(); ++i) CHECK(angle_between_deg(a.normal[i], b.normal[i]) < 0.05);

  // Rotating the plane about the optical axis rotates the normal equally.
  const Eigen::Matrix3d rot = Eigen::AngleAxisd(0.7, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  const NormalMap c = normal_from_depth(plane_depth(24, 24, intr, rot * n, -2.0), intr);
  CHECK(max_interior_error(c, (rot * n).cast<float>(), 2) < 0.5);
}

TEST_CASE("angle helpers") {
  CHECK(angle_between_deg({0, 0, -1}, {0, 0, -1}) == 0.0);
  CHECK(angle_between_deg({1, 0, 0}, {0, 1, 0}) == doctest::Approx(90.0));
  CHECK(angle_between_deg({1, 0, 0}, {-1, 0, 0}) == doctest::Approx(180.0));
  // Slightly over-unit vectors must not produce NaN.
  CHECK(angle_between_deg({1.0000001f, 0, 0}, {1.0000001f, 0, 0}) == 0.0);

  NormalMap p(2, 1), g(2, 1);
  p.set(0, 0, {0, 0, -1});
  g.set(0, 0, {1, 0, 0});
  g.set(1, 0, {0, 0, -1});
  const auto err = angle_error(p, g);
  REQUIRE(err.size() == 1);
  CHECK(err[0] == doctest::Approx(90.0));
  CHECK_THROWS_AS(angle_error(NormalMap(2, 2), g), ContractViolation);
}
