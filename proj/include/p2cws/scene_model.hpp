#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace p2cws {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

enum class JointName : std::uint8_t {
  kHeadTop,
  kJaw,
  kEyeL,
  kEyeR,
  kNeck,
  kShoulderL,
  kShoulderR,
  kElbowL,
  kElbowR,
  kWristL,
  kWristR,
  kHipL,
  kHipR,
  kHipMid,
  kKneeL,
  kKneeR,
  kAnkleL,
  kAnkleR,
};

inline constexpr std::size_t kJointCount = 18;

std::string_view to_string(JointName joint);
std::optional<JointName> parse_joint(std::string_view name);
const std::array<JointName, kJointCount>& all_joints();

enum class EntityClass : std::uint8_t { kPerson, kCyclist, kCar, kBus, kTruck };

std::string_view to_string(EntityClass cls);
EntityClass parse_entity_class(std::string_view name);  // throws DataError
bool is_vehicle(EntityClass cls);

enum class CrossingState : std::uint8_t { kNotCrossing, kCrossing };

std::string_view to_string(CrossingState state);

// Semantic labels; the numeric codes are part of the track-file format.
enum class SemanticLabel : std::uint8_t {
  kRoad = 0,
  kSidewalk = 1,
  kCrosswalk = 2,
  kVehicle = 3,
  kOther = 4,
};

inline constexpr int kSemanticLabelCount = 5;

// Joint positions of one pedestrian in normalized pose space
// (x right, y up, z toward the camera).
struct Pose3D {
  std::map<JointName, Vec3> joints;
  double timestamp = 0.0;

  bool has(JointName joint) const { return joints.contains(joint); }
  // Throws MissingObservation when the joint is absent.
  const Vec3& at(JointName joint) const;
  bool contains_all(const std::vector<JointName>& required) const;

  friend bool operator==(const Pose3D&, const Pose3D&) = default;
};

struct CameraModel {
  Mat3 intrinsic = Mat3::Identity();
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  // Throws DataError unless K is upper triangular with positive focal
  // entries and R is orthonormal.
  void validate() const;

  friend bool operator==(const CameraModel&, const CameraModel&) = default;
};

struct BBox {
  double u_min = 0.0;
  double v_min = 0.0;
  double u_max = 0.0;
  double v_max = 0.0;

  double height() const { return v_max - v_min; }
  Vec2 bottom_center() const { return {0.5 * (u_min + u_max), v_max}; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct Detection {
  double timestamp = 0.0;
  BBox bbox;
  // Hip joint for pedestrians, middle-front point for vehicles.
  Vec2 anchor = Vec2::Zero();
  std::optional<Pose3D> pose;
  std::optional<std::array<Vec2, 2>> toes;  // left, right
  std::optional<CrossingState> state;

  double height_px() const { return bbox.height(); }

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct EntityTrack {
  int id = 0;
  EntityClass cls = EntityClass::kPerson;
  std::vector<Detection> detections;  // strictly increasing timestamps

  bool empty() const { return detections.empty(); }
  double first_time() const;
  double last_time() const;

  friend bool operator==(const EntityTrack&, const EntityTrack&) = default;
};

struct CrosswalkEntrance {
  Vec2 a = Vec2::Zero();
  Vec2 b = Vec2::Zero();

  Vec2 midpoint() const { return 0.5 * (a + b); }
  Vec2 entrance_vector() const { return b - a; }

  friend bool operator==(const CrosswalkEntrance&, const CrosswalkEntrance&) = default;
};

class SemanticGrid {
 public:
  SemanticGrid() = default;
  SemanticGrid(int width, int height, SemanticLabel fill = SemanticLabel::kOther);
  SemanticGrid(int width, int height, std::vector<std::uint8_t> labels);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return labels_.empty(); }

  SemanticLabel at(int u, int v) const;
  // Coordinates are clamped into the grid.
  SemanticLabel at_clamped(int u, int v) const;
  void set(int u, int v, SemanticLabel label);

  std::vector<std::pair<int, std::size_t>> run_length_encode() const;
  static SemanticGrid from_runs(int width, int height,
                                const std::vector<std::pair<int, std::size_t>>& runs);

  const std::vector<std::uint8_t>& labels() const { return labels_; }

  friend bool operator==(const SemanticGrid&, const SemanticGrid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> labels_;
};

struct SceneBundle {
  std::vector<EntityTrack> tracks;  // ordered by id
  std::vector<CrosswalkEntrance> crosswalks;
  SemanticGrid semantics;
  std::optional<CameraModel> camera;
  double frame_rate = 30.0;

  const EntityTrack* find_track(int id) const;

  friend bool operator==(const SceneBundle&, const SceneBundle&) = default;
};

// Nearest detection to `t` if it lies within `tolerance`; ties resolve to
// the earlier detection.
const Detection* sample_track(const EntityTrack& track, double t, double tolerance);

// Ground-truth crossing state of the detection nearest to `t` within
// `tolerance`, if that detection carries one.
std::optional<CrossingState> state_at(const EntityTrack& track, double t, double tolerance);

// --- track-file format -----------------------------------------------------

// Streaming pieces of the track-file format, shared by file I/O and the
// stdin stream processor.
struct SceneHeader {
  double frame_rate = 30.0;
  std::vector<CrosswalkEntrance> crosswalks;
  SemanticGrid semantics;
  std::optional<CameraModel> camera;
};

struct DetectionRecord {
  int id = 0;
  EntityClass cls = EntityClass::kPerson;
  Detection detection;
};

nlohmann::json header_to_json(const SceneHeader& header);
SceneHeader header_from_json(const nlohmann::json& record);
nlohmann::json detection_to_json(const DetectionRecord& record);
DetectionRecord detection_from_json(const nlohmann::json& record);

// Parses and validates a whole track file.
SceneBundle parse_scene(std::istream& in);
void write_scene(const SceneBundle& scene, std::ostream& out);

SceneBundle load_scene(const std::filesystem::path& path);
void save_scene(const SceneBundle& scene, const std::filesystem::path& path);

// Checks all scene invariants; throws DataError naming the violation.
void validate_scene(const SceneBundle& scene);

}  // namespace p2cws
