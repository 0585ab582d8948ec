#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "p2cws/measurement.hpp"
#include "p2cws/scene_model.hpp"

namespace p2cws {

// Synthetic world: a straight road along x (|z| <= 3.5 m) with sidewalks up
// to |z| = 9 m and a crosswalk at |x| <= 2 m, seen by a camera 20 m above
// the ground looking straight down (30 px per meter on the ground).
inline constexpr int kSynthWidth = 960;
inline constexpr int kSynthHeight = 540;
inline constexpr double kSynthFocal = 600.0;
inline constexpr double kSynthCameraHeight = 20.0;
inline constexpr double kRoadHalfWidth = 3.5;
inline constexpr double kSidewalkOuter = 9.0;
inline constexpr double kCrosswalkHalfWidth = 2.0;
inline constexpr double kContextMax = 3.0;
inline constexpr double kHorizonMax = 2.0;

enum class Script { kWalkThrough, kApproachWaitCross, kApproachNoCross, kCrossImmediately };

std::string_view to_string(Script s);
Script parse_script(std::string_view name);

struct ScenarioSpec {
  Script script = Script::kApproachWaitCross;
  int n_pedestrians = 1;
  int n_vehicles = 2;
  double duration = 12.0;   // seconds
  double pixel_noise = 0.0;  // std of pixel jitter
  double joint_noise = 0.0;  // std of 3D joint jitter, meters
  double height_jitter = 0.0;  // std of physical heights, meters
  // Replaces approach_wait_cross with a mid-crossing pause and
  // approach_no_cross with a hesitation on the crosswalk edge; both stand
  // at the same spot, separable only by the current crossing state.
  bool ambiguity = false;
  std::optional<double> speed;  // fixes the walking speed, m/s
  std::uint64_t seed = 0;

  // Throws DataError naming the violated constraint.
  void validate() const;
};

ScenarioSpec scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScenarioSpec& spec);

// Generator-side truth for one track.
struct TrackTruth {
  int id = 0;
  EntityClass cls = EntityClass::kPerson;
  double height_m = 0.0;
  double speed = 0.0;  // walking or driving speed, m/s
  std::optional<double> crossing_onset;
  std::optional<double> crossing_offset;
  std::vector<Vec2> ground;     // (x, z) in meters, per detection
  std::vector<double> heading;  // degrees, per detection (pedestrians)
};

struct SyntheticScene {
  SceneBundle scene;
  std::vector<TrackTruth> truth;

  const TrackTruth* find_truth(int id) const;
};

CameraModel synthetic_camera();
Vec2 ground_to_pixel(const Vec2& xz);

// Person facing heading `degrees`, hip_mid at the origin, scaled to
// `height_m`.
Pose3D template_pose(double degrees, double height_m = 1.7);

// Rotates every joint about the vertical axis through hip_mid.
Pose3D rotate_pose(const Pose3D& pose, double degrees);

SyntheticScene generate_scene(const ScenarioSpec& spec, const KnowledgeBase& kb = {});

struct OrientationSample {
  Pose3D pose;
  double angle = 0.0;  // degrees
};

// n poses at angles 360 * i / n (plus a uniform offset within each grid
// cell when angle_jitter), joints perturbed by N(0, joint_noise).
std::vector<OrientationSample> generate_orientation_set(int n, std::uint64_t seed, double joint_noise = 0.0,
                                                        bool angle_jitter = false);

// --- datasets of scenes -----------------------------------------------------

struct DatasetSpec {
  std::vector<Script> scripts{Script::kWalkThrough, Script::kApproachWaitCross, Script::kApproachNoCross,
                              Script::kCrossImmediately};
  ScenarioSpec base;  // script and seed are set per scene
  int train = 40;
  int val = 8;
  int test = 8;
  std::uint64_t seed = 0;

  int count() const { return train + val + test; }
  void validate() const;
};

DatasetSpec dataset_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetSpec& spec);

struct DatasetScene {
  std::string name;
  std::string split;  // train / val / test
  ScenarioSpec spec;
  SyntheticScene scene;
};

std::vector<DatasetScene> generate_dataset(const DatasetSpec& spec, const KnowledgeBase& kb = {});

// Writes <name>.jsonl per scene plus manifest.json.
void write_dataset_dir(const std::vector<DatasetScene>& scenes, const DatasetSpec& spec,
                       const std::filesystem::path& dir);

struct ManifestEntry {
  std::string name;
  std::string file;
  std::string split;
  std::string script;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);

// Deterministic 64-bit mixing for derived seeds.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace p2cws
