#pragma once

#include <array>

#include <json.hpp>

#include "p2cws/scene_model.hpp"

namespace p2cws {

// Class-average physical heights in meters.
struct KnowledgeBase {
  std::array<double, 5> mean_heights{1.7, 1.5, 1.5, 2.5, 3.0};

  double mean_height(EntityClass cls) const {
    return mean_heights[static_cast<std::size_t>(cls)];
  }
  void validate() const;
};

enum class DistanceNorm { kExp, kDiv };

struct NormalizationFactors {
  double group = 10.0;
  double pedestrian_speed = 5.0;
  double vehicle_distance = 10.0;
  double v2p_angle = 1.0;
  double vehicle_speed = 10.0;
  double crosswalk_distance = 10.0;
  double crosswalk_angle = 1.0;
  double location = 1.0;
  double pose = 1.0;
  DistanceNorm distance_norm = DistanceNorm::kExp;

  void validate() const;
};

// Minimum window for a stable pedestrian speed estimate, seconds.
inline constexpr double kMinSpeedWindow = 0.5;

// Knowledge-base distance between two detections' anchor points, meters.
double estimate_distance(const Detection& a, EntityClass cls_a, const Detection& b,
                         EntityClass cls_b, const KnowledgeBase& kb);

// exp(-d / n). Maps [0, inf) into (0, 1].
double normalize_distance(double distance, double factor);

// Applies the configured distance normalization (exponential or division).
double normalize_distance(double distance, double factor, DistanceNorm mode);

// Hip-anchor displacement between the detections nearest t1 and t2,
// scaled by the person's knowledge-base height over its pixel height at t2.
double pedestrian_speed(const EntityTrack& track, double t1, double t2, const KnowledgeBase& kb,
                        double tolerance);

// Anchor displacement rate scaled by the mean of the two pixel heights.
double vehicle_speed(const EntityTrack& track, double t1, double t2, const KnowledgeBase& kb,
                     double tolerance);

KnowledgeBase knowledge_base_from_json(const nlohmann::json& j);
NormalizationFactors normalization_from_json(const nlohmann::json& j);
nlohmann::json to_json(const KnowledgeBase& kb);
nlohmann::json to_json(const NormalizationFactors& n);

}  // namespace p2cws
