#include "p2cws/measurement.hpp"

#include <cmath>

#include "p2cws/errors.hpp"

namespace p2cws {
namespace {

const Detection& require_detection(const EntityTrack& track, double t, double tolerance) {
  const Detection* det = sample_track(track, t, tolerance);
  if (det == nullptr) {
    throw MissingObservation("track " + std::to_string(track.id) + ": no detection near t=" +
                             std::to_string(t));
  }
  return *det;
}

}  // namespace

void KnowledgeBase::validate() const {
  for (double h : mean_heights) {
    if (!(h > 0.0) || !std::isfinite(h)) throw DataError("knowledge base: heights must be positive");
  }
}

void NormalizationFactors::validate() const {
  for (double f : {group, pedestrian_speed, vehicle_distance, v2p_angle, vehicle_speed,
                   crosswalk_distance, crosswalk_angle, location, pose}) {
    if (!(f > 0.0) || !std::isfinite(f)) {
      throw DataError("normalization factors must be positive");
    }
  }
}

double estimate_distance(const Detection& a, EntityClass cls_a, const Detection& b,
                         EntityClass cls_b, const KnowledgeBase& kb) {
  const double ha = a.height_px();
  const double hb = b.height_px();
  if (!(ha > 0.0) || !(hb > 0.0)) throw DataError("estimate_distance: zero pixel height");
  const double scale = 0.5 * (kb.mean_height(cls_a) / ha + kb.mean_height(cls_b) / hb);
  return scale * (a.anchor - b.anchor).norm();
}

double normalize_distance(double distance, double factor) {
  if (distance < 0.0) throw DataError("normalize_distance: negative distance");
  if (!(factor > 0.0)) throw DataError("normalize_distance: factor must be positive");
  return std::exp(-distance / factor);
}

double normalize_distance(double distance, double factor, DistanceNorm mode) {
  if (mode == DistanceNorm::kExp) return normalize_distance(distance, factor);
  if (distance < 0.0) throw DataError("normalize_distance: negative distance");
  return distance / factor;
}

double pedestrian_speed(const EntityTrack& track, double t1, double t2, const KnowledgeBase& kb,
                        double tolerance) {
  // Tolerate binary rounding of window endpoints such as 10.1 - 9.6.
  if (t2 - t1 < kMinSpeedWindow - 1e-9) {
    throw DataError("pedestrian_speed: window too short (need >= 0.5 s)");
  }
  const Detection& d1 = require_detection(track, t1, tolerance);
  const Detection& d2 = require_detection(track, t2, tolerance);
  const double dt = d2.timestamp - d1.timestamp;
  if (!(dt > 0.0)) throw DataError("pedestrian_speed: window too short (need >= 0.5 s)");
  const double h = d2.height_px();
  if (!(h > 0.0)) throw DataError("pedestrian_speed: zero pixel height");
  return (d2.anchor - d1.anchor).norm() / dt * (kb.mean_height(EntityClass::kPerson) / h);
}

double vehicle_speed(const EntityTrack& track, double t1, double t2, const KnowledgeBase& kb,
                     double tolerance) {
  if (!(t2 > t1)) throw DataError("vehicle_speed: requires t2 > t1");
  const Detection& d1 = require_detection(track, t1, tolerance);
  const Detection& d2 = require_detection(track, t2, tolerance);
  const double dt = d2.timestamp - d1.timestamp;
  if (!(dt > 0.0)) throw DataError("vehicle_speed: detections coincide");
  const double hsum = d1.height_px() + d2.height_px();
  if (!(d1.height_px() > 0.0) || !(d2.height_px() > 0.0)) {
    throw DataError("vehicle_speed: zero pixel height");
  }
  return (d2.anchor - d1.anchor).norm() / dt * (2.0 * kb.mean_height(track.cls) / hsum);
}

KnowledgeBase knowledge_base_from_json(const nlohmann::json& j) {
  KnowledgeBase kb;
  for (std::size_t i = 0; i < kb.mean_heights.size(); ++i) {
    const auto name = std::string(to_string(static_cast<EntityClass>(i)));
    if (j.contains(name)) kb.mean_heights[i] = j.at(name).get<double>();
  }
  kb.validate();
  return kb;
}

NormalizationFactors normalization_from_json(const nlohmann::json& j) {
  NormalizationFactors n;
  auto read = [&j](const char* key, double& field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  read("group", n.group);
  read("pedestrian_speed", n.pedestrian_speed);
  read("vehicle_distance", n.vehicle_distance);
  read("v2p_angle", n.v2p_angle);
  read("vehicle_speed", n.vehicle_speed);
  read("crosswalk_distance", n.crosswalk_distance);
  read("crosswalk_angle", n.crosswalk_angle);
  read("location", n.location);
  read("pose", n.pose);
  if (j.contains("distance_norm")) {
    const auto mode = j.at("distance_norm").get<std::string>();
    if (mode == "exp") {
      n.distance_norm = DistanceNorm::kExp;
    } else if (mode == "div") {
      n.distance_norm = DistanceNorm::kDiv;
    } else {
      throw DataError("distance_norm must be \"exp\" or \"div\"");
    }
  }
  n.validate();
  return n;
}

nlohmann::json to_json(const KnowledgeBase& kb) {
  nlohmann::json j;
  for (std::size_t i = 0; i < kb.mean_heights.size(); ++i) {
    j[std::string(to_string(static_cast<EntityClass>(i)))] = kb.mean_heights[i];
  }
  return j;
}

nlohmann::json to_json(const NormalizationFactors& n) {
  return {{"group", n.group},
          {"pedestrian_speed", n.pedestrian_speed},
          {"vehicle_distance", n.vehicle_distance},
          {"v2p_angle", n.v2p_angle},
          {"vehicle_speed", n.vehicle_speed},
          {"crosswalk_distance", n.crosswalk_distance},
          {"crosswalk_angle", n.crosswalk_angle},
          {"location", n.location},
          {"pose", n.pose},
          {"distance_norm", n.distance_norm == DistanceNorm::kExp ? "exp" : "div"}};
}

}  // namespace p2cws
