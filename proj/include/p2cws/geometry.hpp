#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "p2cws/scene_model.hpp"

namespace p2cws {

// Direction vectors whose norm falls below this are treated as degenerate.
inline constexpr double kDegenerateNorm = 1e-9;

// A ray `base_point + t * direction`, t > 0. The direction is kept
// unnormalized.
struct OrientationLine {
  Vec3 base_point = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();

  Vec3 point_at(double t) const { return base_point + t * direction; }
};

// Linear map from body-model vertices to joints (J x V weights).
struct JointRegressor {
  Eigen::MatrixXd weights;

  int joint_count() const { return static_cast<int>(weights.rows()); }
  int vertex_count() const { return static_cast<int>(weights.cols()); }
};

using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// joints = W * vertices, applied to each coordinate column.
Points3 regress_joints(const Points3& vertices, const JointRegressor& regressor);

// Pinhole projection (1/lambda) K (R p + t). Throws GeometryError when the
// point is not in front of the camera.
Vec2 project_point(const Vec3& p3d, const CameraModel& camera);

// Image-plane direction of a 3D direction attached to a point whose
// projection is `anchor_px`: the derivative of the projection along the
// direction, up to a positive scale. Zero when the direction points along
// the viewing ray.
Vec2 project_direction(const Vec3& direction, const Vec2& anchor_px, const CameraModel& camera);

OrientationLine head_orientation(const Pose3D& pose);
OrientationLine body_orientation(const Pose3D& pose);

// Heading angle in [0, 360): measured in the horizontal (x, z) plane from
// the reference (-1, 0, 0), increasing clockwise, so (0, 0, 1) maps to 90.
// `axis_offset_deg` rotates the result to calibrate against a dataset's
// angle convention.
double orientation_to_angle(const OrientationLine& line, double axis_offset_deg = 0.0);
double direction_to_angle(const Vec3& direction, double axis_offset_deg = 0.0);

// Inverse of direction_to_angle for horizontal unit directions.
Vec3 angle_to_direction(double degrees);

// Circular distance in [0, 180].
double angular_error(double theta_a, double theta_b);

// Wraps any angle into [0, 360).
double wrap_degrees(double degrees);

}  // namespace p2cws
