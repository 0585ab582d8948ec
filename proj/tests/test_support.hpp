#pragma once

// Small builders for hand-made scenes used across the unit tests.

#include <initializer_list>

#include "p2cws/scene_model.hpp"

namespace p2cws::testing {

// Upright pose facing (-1, 0, 0), hip_mid at the origin.
inline Pose3D upright_pose(double t = 0.0) {
  Pose3D p;
  p.timestamp = t;
  auto set = [&p](JointName j, double x, double y, double z) { p.joints[j] = Vec3(x, y, z); };
  set(JointName::kHeadTop, 0.0, 0.8, 0.0);
  set(JointName::kJaw, -0.02, 0.6, 0.0);
  set(JointName::kEyeL, -0.08, 0.7, 0.03);
  set(JointName::kEyeR, -0.08, 0.7, -0.03);
  set(JointName::kNeck, 0.0, 0.55, 0.0);
  set(JointName::kShoulderL, 0.0, 0.5, 0.2);
  set(JointName::kShoulderR, 0.0, 0.5, -0.2);
  set(JointName::kElbowL, 0.0, 0.22, 0.24);
  set(JointName::kElbowR, 0.0, 0.22, -0.24);
  set(JointName::kWristL, 0.0, -0.05, 0.25);
  set(JointName::kWristR, 0.0, -0.05, -0.25);
  set(JointName::kHipL, 0.0, 0.0, 0.1);
  set(JointName::kHipR, 0.0, 0.0, -0.1);
  set(JointName::kHipMid, 0.0, 0.0, 0.0);
  set(JointName::kKneeL, 0.0, -0.45, 0.1);
  set(JointName::kKneeR, 0.0, -0.45, -0.1);
  set(JointName::kAnkleL, 0.0, -0.88, 0.1);
  set(JointName::kAnkleR, 0.0, -0.88, -0.1);
  return p;
}

// Detection whose bbox is `height_px` tall with the anchor at bottom center.
inline Detection make_detection(double t, Vec2 anchor, double height_px,
                                std::optional<CrossingState> state = std::nullopt) {
  Detection d;
  d.timestamp = t;
  d.anchor = anchor;
  d.bbox = BBox{anchor.x() - 10.0, anchor.y() - height_px, anchor.x() + 10.0, anchor.y()};
  d.state = state;
  return d;
}

inline EntityTrack make_track(int id, EntityClass cls, std::initializer_list<Detection> dets) {
  EntityTrack t;
  t.id = id;
  t.cls = cls;
  t.detections = dets;
  return t;
}

// Linear motion sampled at `rate` Hz over [t0, t1].
inline EntityTrack linear_track(int id, EntityClass cls, double t0, double t1, Vec2 start,
                                Vec2 velocity_px, double height_px, double rate = 30.0,
                                bool with_pose = false) {
  EntityTrack tr;
  tr.id = id;
  tr.cls = cls;
  const int n = static_cast<int>((t1 - t0) * rate + 0.5);
  for (int k = 0; k <= n; ++k) {
    const double t = t0 + k / rate;
    Detection d = make_detection(t, start + velocity_px * (t - t0), height_px,
                                 CrossingState::kNotCrossing);
    if (with_pose) d.pose = upright_pose(t);
    tr.detections.push_back(std::move(d));
  }
  return tr;
}

}  // namespace p2cws::testing
