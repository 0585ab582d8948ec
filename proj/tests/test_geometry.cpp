#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "p2cws/errors.hpp"
#include "p2cws/geometry.hpp"
#include "test_support.hpp"

using namespace p2cws;

namespace {

CameraModel simple_camera() {
  CameraModel cam;
  cam.intrinsic << 100, 0, 64, 0, 100, 64, 0, 0, 1;
  return cam;
}

Points3 naive_product(const Eigen::MatrixXd& w, const Points3& v) {
  Points3 out(w.rows(), 3);
  for (Eigen::Index j = 0; j < w.rows(); ++j) {
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < w.cols(); ++k) acc += w(j, k) * v(k, c);
      out(j, c) = acc;
    }
  }
  return out;
}

Pose3D transformed(const Pose3D& pose, const Mat3& rot, const Vec3& shift) {
  Pose3D out = pose;
  for (auto& [joint, p] : out.joints) p = rot * p + shift;
  return out;
}

}  // namespace

TEST_CASE("regress_joints") {
  SUBCASE("identity regressor returns the vertices") {
    Points3 v = Points3::Random(6, 3);
    CHECK(regress_joints(v, JointRegressor{Eigen::MatrixXd::Identity(6, 6)}).isApprox(v, 0.0));
  }
  SUBCASE("uniform row yields the centroid") {
    Points3 v = Points3::Random(10, 3);
    JointRegressor reg{Eigen::MatrixXd::Constant(1, 10, 0.1)};
    const Points3 j = regress_joints(v, reg);
    CHECK((j.row(0) - v.colwise().mean()).norm() < 1e-12);
  }
  SUBCASE("property: matches the naive triple loop on random instances") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> dim(1, 40);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 50; ++trial) {
      const int jn = dim(rng);
      const int vn = dim(rng);
      Eigen::MatrixXd w(jn, vn);
      Points3 v(vn, 3);
      for (int r = 0; r < jn; ++r)
        for (int c = 0; c < vn; ++c) w(r, c) = gauss(rng);
      for (int r = 0; r < vn; ++r)
        for (int c = 0; c < 3; ++c) v(r, c) = gauss(rng);
      const Points3 fast = regress_joints(v, JointRegressor{w});
      const Points3 slow = naive_product(w, v);
      CHECK((fast - slow).norm() <= 1e-12 * std::max(1.0, slow.norm()));
    }
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(regress_joints(Points3::Zero(4, 3), JointRegressor{Eigen::MatrixXd::Zero(5, 10)}),
                    DataError);
  }
}

TEST_CASE("project_point pinhole cases") {
  const CameraModel cam = simple_camera();
  CHECK(project_point(Vec3(0, 0, 2), cam).isApprox(Vec2(64, 64)));
  CHECK(project_point(Vec3(1, 0, 2), cam).isApprox(Vec2(114, 64)));
  CHECK_THROWS_WITH_AS(project_point(Vec3(0, 0, -1), cam), "point behind camera", GeometryError);
  CHECK_THROWS_AS(project_point(Vec3(1, 1, 0), cam), GeometryError);
}

TEST_CASE("property: points along a ray through the camera center share a pixel") {
  CameraModel cam = simple_camera();
  cam.rotation = Eigen::AngleAxisd(0.3, Vec3(0.2, 1.0, -0.4).normalized()).toRotationMatrix();
  cam.translation = Vec3(0.5, -0.2, 4.0);
  const Vec3 center = -cam.rotation.transpose() * cam.translation;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const Vec3 p(uni(rng), uni(rng), uni(rng));
    const Vec3 far = center + 2.0 * (p - center);
    CHECK((project_point(p, cam) - project_point(far, cam)).norm() < 1e-9);
  }
}

TEST_CASE("project_direction is the derivative of the projection") {
  CameraModel cam = simple_camera();
  cam.rotation = Eigen::AngleAxisd(-0.4, Vec3::UnitX()).toRotationMatrix();
  cam.translation = Vec3(0.1, 0.3, 6.0);
  const Vec3 base(0.4, -0.3, 1.0);
  const Vec3 dir(0.3, 0.1, -0.7);
  const Vec2 anchor = project_point(base, cam);
  const double h = 1e-6;
  const Vec2 fd = (project_point(base + h * dir, cam) - project_point(base - h * dir, cam)) / (2 * h);
  const Vec2 analytic = project_direction(dir, anchor, cam);
  // Same direction, positive scale (the depth).
  CHECK(std::abs(fd.normalized().dot(analytic.normalized()) - 1.0) < 1e-9);
  CHECK(fd.dot(analytic) > 0.0);
}

TEST_CASE("head_orientation") {
  Pose3D pose;
  pose.joints[JointName::kEyeL] = Vec3(0.05, 1.6, 0.1);
  pose.joints[JointName::kEyeR] = Vec3(-0.05, 1.6, 0.1);
  pose.joints[JointName::kHeadTop] = Vec3(0, 1.7, 0);
  pose.joints[JointName::kJaw] = Vec3(0, 1.5, 0);
  const auto line = head_orientation(pose);
  CHECK((line.base_point - Vec3(0, 1.6, 0.1)).norm() < 1e-12);
  CHECK((line.direction - Vec3(0, 0, 0.1)).norm() < 1e-12);

  SUBCASE("translation moves the base, keeps the direction") {
    const auto moved = head_orientation(transformed(pose, Mat3::Identity(), Vec3(1, 1, 1)));
    CHECK((moved.base_point - line.base_point - Vec3(1, 1, 1)).norm() < 1e-12);
    CHECK((moved.direction - line.direction).norm() < 1e-12);
  }
  SUBCASE("eyes at the head midpoint are degenerate") {
    pose.joints[JointName::kEyeL] = Vec3(0.0, 1.6, 0.0);
    pose.joints[JointName::kEyeR] = Vec3(0.0, 1.6, 0.0);
    CHECK_THROWS_WITH_AS(head_orientation(pose), doctest::Contains("zero direction"), GeometryError);
  }
  SUBCASE("missing joint") {
    pose.joints.erase(JointName::kJaw);
    CHECK_THROWS_AS(head_orientation(pose), MissingObservation);
  }
}

TEST_CASE("body_orientation") {
  Pose3D pose;
  pose.joints[JointName::kShoulderL] = Vec3(-0.2, 1.4, 0);
  pose.joints[JointName::kShoulderR] = Vec3(0.2, 1.4, 0);
  pose.joints[JointName::kHipMid] = Vec3(0, 0.9, 0);
  const auto line = body_orientation(pose);
  CHECK((line.direction - Vec3(0, 0, -0.2)).norm() < 1e-12);
  CHECK((line.base_point - Vec3(0, 3.7 / 3.0, 0)).norm() < 1e-12);

  SUBCASE("collinear joints") {
    pose.joints[JointName::kHipMid] = Vec3(0.4, 1.4, 0);
    CHECK_THROWS_WITH_AS(body_orientation(pose), doctest::Contains("degenerate torso plane"),
                         GeometryError);
  }
  SUBCASE("rotation equivariance") {
    const Mat3 q = Eigen::AngleAxisd(1.1, Vec3(0.3, -0.5, 0.8).normalized()).toRotationMatrix();
    const auto rotated = body_orientation(transformed(pose, q, Vec3::Zero()));
    CHECK((rotated.direction - q * line.direction).norm() < 1e-12);
    CHECK((rotated.base_point - q * line.base_point).norm() < 1e-12);
  }
}

TEST_CASE("property: body direction is orthogonal to both torso edges") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> gauss;
  for (int i = 0; i < 200; ++i) {
    Pose3D pose;
    pose.joints[JointName::kShoulderL] = Vec3(gauss(rng), gauss(rng), gauss(rng));
    pose.joints[JointName::kShoulderR] = Vec3(gauss(rng), gauss(rng), gauss(rng));
    pose.joints[JointName::kHipMid] = Vec3(gauss(rng), gauss(rng), gauss(rng));
    const auto line = body_orientation(pose);
    const Vec3 n = line.direction.normalized();
    const Vec3& hip = pose.joints[JointName::kHipMid];
    CHECK(std::abs(n.dot((pose.joints[JointName::kShoulderL] - hip).normalized())) < 1e-9);
    CHECK(std::abs(n.dot((pose.joints[JointName::kShoulderR] - hip).normalized())) < 1e-9);
  }
}

TEST_CASE("orientation_to_angle reference cases") {
  auto angle = [](Vec3 d) { return orientation_to_angle(OrientationLine{Vec3::Zero(), d}); };
  CHECK(angle(Vec3(-1, 0, 0)) == doctest::Approx(0.0));
  CHECK(angle(Vec3(1, 0, 0)) == doctest::Approx(180.0));
  CHECK(angle(Vec3(0, 0, 1)) == doctest::Approx(90.0));
  CHECK(angle(Vec3(0, 0, -1)) == doctest::Approx(270.0));
  CHECK(angle(Vec3(-1, 5, 0)) == doctest::Approx(0.0));  // vertical component ignored
  CHECK_THROWS_AS(angle(Vec3(0, 1, 0)), GeometryError);
  CHECK(orientation_to_angle(OrientationLine{Vec3::Zero(), Vec3(-1, 0, 0)}, 22.5) ==
        doctest::Approx(22.5));
  CHECK(orientation_to_angle(OrientationLine{Vec3::Zero(), Vec3(0, 0, -1)}, 100.0) ==
        doctest::Approx(10.0));
}

TEST_CASE("property: clockwise rotation by delta adds delta (mod 360), continuity sweep") {
  // Rotating a horizontal direction clockwise by delta in the (x, z) plane:
  // (x, z) -> (x cos d + z sin d, -x sin d + z cos d).
  auto rotate = [](const Vec3& v, double deg) {
    const double r = deg * std::numbers::pi / 180.0;
    return Vec3(v.x() * std::cos(r) + v.z() * std::sin(r), v.y(),
                -v.x() * std::sin(r) + v.z() * std::cos(r));
  };
  for (double base : {0.0, 17.0, 123.4, 301.0}) {
    const Vec3 d0 = angle_to_direction(base);
    CHECK(direction_to_angle(d0) == doctest::Approx(base).epsilon(1e-12));
    for (int delta = 1; delta < 360; ++delta) {
      const double got = direction_to_angle(rotate(d0, delta));
      const double expected = wrap_degrees(base + delta);
      CHECK(angular_error(got, expected) < 1e-9);
    }
  }
  // Sweep in small steps: consecutive angles never jump by more than the step
  // except across the 360 -> 0 seam.
  double prev = direction_to_angle(Vec3(-1, 0, 0));
  for (int i = 1; i <= 3600; ++i) {
    const double cur = direction_to_angle(rotate(Vec3(-1, 0, 0), i * 0.1));
    CHECK(angular_error(prev, cur) < 0.1 + 1e-9);
    prev = cur;
  }
}

TEST_CASE("angular_error") {
  CHECK(angular_error(45, 45) == 0.0);
  CHECK(angular_error(359, 1) == doctest::Approx(2.0));
  CHECK(angular_error(0, 180) == 180.0);
}

TEST_CASE("property: angular_error is a metric on the circle") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> uni(0.0, 360.0);
  for (int i = 0; i < 2000; ++i) {
    const double a = uni(rng), b = uni(rng), c = uni(rng);
    CHECK(angular_error(a, b) == angular_error(b, a));
    CHECK(angular_error(a, a) == 0.0);
    CHECK(angular_error(a, b) >= 0.0);
    CHECK(angular_error(a, b) <= 180.0);
    CHECK(angular_error(a, c) <= angular_error(a, b) + angular_error(b, c) + 1e-9);
    CHECK(angular_error(a, wrap_degrees(a + 360.0)) < 1e-9);
  }
}
