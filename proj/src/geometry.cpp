#include "p2cws/geometry.hpp"

#include <cmath>
#include <numbers>

#include "p2cws/errors.hpp"

namespace p2cws {
namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

Points3 regress_joints(const Points3& vertices, const JointRegressor& regressor) {
  if (vertices.rows() != regressor.weights.cols()) {
    throw DataError("regress_joints: regressor expects " +
                    std::to_string(regressor.weights.cols()) + " vertices, got " +
                    std::to_string(vertices.rows()));
  }
  return regressor.weights * vertices;
}

Vec2 project_point(const Vec3& p3d, const CameraModel& camera) {
  const Vec3 cam = camera.rotation * p3d + camera.translation;
  const double lambda = cam.z();
  if (!(lambda > 0.0)) throw GeometryError("point behind camera");
  const Vec3 img = camera.intrinsic * cam / lambda;
  return img.head<2>();
}

Vec2 project_direction(const Vec3& direction, const Vec2& anchor_px, const CameraModel& camera) {
  // d/ds of (K (R (X + s d) + t))_{0,1} / lambda(s), times lambda(0).
  const Vec3 kd = camera.intrinsic * (camera.rotation * direction);
  return kd.head<2>() - anchor_px * kd.z();
}

OrientationLine head_orientation(const Pose3D& pose) {
  const Vec3 eyes = 0.5 * (pose.at(JointName::kEyeL) + pose.at(JointName::kEyeR));
  const Vec3 head = 0.5 * (pose.at(JointName::kHeadTop) + pose.at(JointName::kJaw));
  OrientationLine line{eyes, eyes - head};
  if (line.direction.norm() < kDegenerateNorm) throw GeometryError("head orientation: zero direction");
  return line;
}

OrientationLine body_orientation(const Pose3D& pose) {
  const Vec3& sl = pose.at(JointName::kShoulderL);
  const Vec3& sr = pose.at(JointName::kShoulderR);
  const Vec3& hip = pose.at(JointName::kHipMid);
  OrientationLine line{(sl + sr + hip) / 3.0, (sl - hip).cross(sr - hip)};
  if (line.direction.norm() < kDegenerateNorm) {
    throw GeometryError("body orientation: degenerate torso plane");
  }
  return line;
}

double wrap_degrees(double degrees) {
  double w = std::fmod(degrees, 360.0);
  if (w < 0.0) w += 360.0;
  if (w >= 360.0) w = 0.0;
  return w;
}

double direction_to_angle(const Vec3& direction, double axis_offset_deg) {
  const Vec3 horizontal(direction.x(), 0.0, direction.z());
  if (horizontal.norm() < kDegenerateNorm) {
    throw GeometryError("orientation angle: direction has no horizontal component");
  }
  const Vec3 reference(-1.0, 0.0, 0.0);
  const Vec3 cross = reference.cross(horizontal);
  // Magnitude from the inner product (atan2 form for accuracy near 0/180),
  // side from the out-of-plane component.
  const double magnitude = std::atan2(cross.norm(), reference.dot(horizontal)) * kRadToDeg;
  const double angle = cross.y() >= 0.0 ? magnitude : 360.0 - magnitude;
  return wrap_degrees(angle + axis_offset_deg);
}

double orientation_to_angle(const OrientationLine& line, double axis_offset_deg) {
  return direction_to_angle(line.direction, axis_offset_deg);
}

Vec3 angle_to_direction(double degrees) {
  const double rad = degrees * kDegToRad;
  return {-std::cos(rad), 0.0, std::sin(rad)};
}

double angular_error(double theta_a, double theta_b) {
  const double d = std::abs(wrap_degrees(theta_a) - wrap_degrees(theta_b));
  return std::min(d, 360.0 - d);
}

}  // namespace p2cws
