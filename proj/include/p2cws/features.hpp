#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "p2cws/measurement.hpp"
#include "p2cws/scene_model.hpp"

namespace p2cws {

inline constexpr std::size_t kPoseJointCount = 14;
inline constexpr std::size_t kPoseDim = 3 * kPoseJointCount;
inline constexpr std::size_t kBaseFeatureDim = 50;
inline constexpr double kFeatureRate = 15.0;  // samples per second
inline constexpr double kGroupRadius = 2.5;   // meters (5 m diameter boundary)

// Column layout of F_t.
enum FeatureSlot : std::size_t {
  kSlotPose = 0,
  kSlotGroupSize = 42,
  kSlotPedSpeed = 43,
  kSlotVehDistance = 44,
  kSlotV2PAngle = 45,
  kSlotVehSpeed = 46,
  kSlotCwDistance = 47,
  kSlotCwAngle = 48,
  kSlotLocation = 49,
  kSlotState = 50,
};

// Arms, legs and trunk joints fed to the classifier, in feature order.
const std::vector<JointName>& default_pose_joints();

struct FeatureConfig {
  KnowledgeBase kb;
  NormalizationFactors norms;
  std::vector<JointName> pose_joints = default_pose_joints();
  bool with_state = false;
  // Nearest-detection tolerance for every time query (one 15 Hz period).
  double sample_tolerance = 1.0 / kFeatureRate;
  double speed_window = 0.5;
  double approach_lookback = 0.5;

  void validate() const;
};

FeatureConfig feature_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FeatureConfig& cfg);

struct FeatureVector {
  std::array<double, kBaseFeatureDim> base{};
  std::optional<double> state_flag;

  std::size_t dim() const { return kBaseFeatureDim + (state_flag ? 1 : 0); }
  double operator[](std::size_t i) const { return i < kBaseFeatureDim ? base[i] : *state_flag; }
  std::vector<double> flat() const;
};

// Column names in F_t order (50 or 51 entries).
std::vector<std::string> feature_names(bool with_state);

// --- individual features ----------------------------------------------------

// 14 joints x 3 coordinates in `joints` order. Throws MissingObservation.
std::vector<double> pose_feature(const Pose3D& pose,
                                 const std::vector<JointName>& joints = default_pose_joints());

// Person tracks (subject included) within 2.5 m of the subject at t.
int group_size(const EntityTrack& subject, const SceneBundle& scene, double t,
               const KnowledgeBase& kb, double tolerance);

struct ApproachingVehicle {
  const EntityTrack* track = nullptr;
  double distance = 0.0;  // meters at t
  double delta = 0.0;     // distance change over the lookback (< 0)
};

// Closest vehicle whose distance to the subject decreased over `lookback`.
std::optional<ApproachingVehicle> closest_approaching_vehicle(const EntityTrack& subject,
                                                              const SceneBundle& scene, double t,
                                                              double lookback,
                                                              const KnowledgeBase& kb,
                                                              double tolerance);

// 1 - cos of the angle between two vectors, in [0, 2]. Throws GeometryError
// on a zero-length input.
double one_minus_cos(const Vec2& a, const Vec2& b);

// v2p angle between the body direction (image plane) and the vehicle's
// anchor displacement over [t1, t2].
double v2p_angle(const Vec2& body_direction_px, const EntityTrack& vehicle, double t1, double t2,
                 double tolerance);

// Image-plane body direction of the subject at t: the projected 3D body
// orientation when a camera and pose are available, otherwise the hip
// anchor displacement over `lookback`. Absent when neither is observable.
std::optional<Vec2> body_direction_px(const EntityTrack& subject, const Detection& det,
                                      const SceneBundle& scene, double t, double lookback,
                                      double tolerance);

struct CrosswalkContext {
  double distance = 0.0;  // meters
  double angle = 0.0;     // 1 - cos, [0, 2]
  std::size_t entrance = 0;
};

CrosswalkContext crosswalk_context(const Detection& det, const Vec2& body_direction_px,
                                   const SceneBundle& scene, const KnowledgeBase& kb);

// Modal label of the 16 stencil pixels around both toes; ties go to the
// higher label code.
SemanticLabel location_semantics(const Detection& det, const SemanticGrid& semantics);

// Builds F_t. Throws MissingObservation when the subject (or its pose, or
// the speed-window history) is not observable at t.
FeatureVector assemble_feature(const EntityTrack& subject, const SceneBundle& scene, double t,
                               const FeatureConfig& cfg);

// --- temporal windows -------------------------------------------------------

// Slots per window: round-half-up of 15 * context.
int slot_count(double context_seconds);

inline double tick_time(long long tick) { return static_cast<double>(tick) / kFeatureRate; }

struct FeatureWindow {
  std::string scene;
  int ped_id = 0;
  double t_end = 0.0;
  double context = 0.0;
  Eigen::MatrixXd x;               // slots x dim
  std::vector<std::uint8_t> mask;  // 1 = observed slot

  int slots() const { return static_cast<int>(x.rows()); }
  int dim() const { return static_cast<int>(x.cols()); }
};

struct LabeledWindow {
  FeatureWindow window;
  std::vector<double> horizons;
  std::vector<int> labels;  // 1 = crossing, per horizon
  std::string split;
};

struct WindowSpec {
  double context = 0.5;
  std::vector<double> horizons{1.5};
  int stride = 1;  // in 15 Hz ticks
  bool require_labels = true;
};

// Per-tick features of one subject; shared by batch and streaming paths.
class FeatureTimeline {
 public:
  // The subject is looked up by id on every query, so tracks may be
  // appended to `scene` between calls (streaming).
  FeatureTimeline(int subject_id, const SceneBundle& scene, FeatureConfig cfg);

  // Feature at tick k, or nullopt for an unobservable tick. Memoized.
  const std::optional<FeatureVector>& at(long long tick);

  // Window of `slots` ticks ending at `end_tick`.
  FeatureWindow window(long long end_tick, int slots);

  // First tick at which a window of `slots` slots may end.
  long long first_window_end(int slots) const;

 private:
  const EntityTrack& subject() const;

  int subject_id_;
  const SceneBundle& scene_;
  FeatureConfig cfg_;
  std::map<long long, std::optional<FeatureVector>> cache_;
};

// True when a window for `subject` may end at `tick`: the subject is
// observed at the tick and has been tracked for the window's span.
bool window_end_eligible(const EntityTrack& subject, long long tick, int slots,
                         double tolerance);

// Sliding windows over one subject. In labeled mode each window carries
// state(t_end + h) for every horizon h and windows without labels are
// skipped. Throws DataError if the track is shorter than context + horizon.
std::vector<LabeledWindow> build_windows(const EntityTrack& subject, const SceneBundle& scene,
                                         const WindowSpec& spec, const FeatureConfig& cfg,
                                         const std::string& scene_name = {});

// --- dataset file -----------------------------------------------------------

nlohmann::json window_to_json(const LabeledWindow& w);
LabeledWindow window_from_json(const nlohmann::json& j);
void write_dataset(const std::vector<LabeledWindow>& windows, std::ostream& out);
std::vector<LabeledWindow> read_dataset(std::istream& in);
void save_dataset(const std::vector<LabeledWindow>& windows, const std::filesystem::path& path);
std::vector<LabeledWindow> load_dataset(const std::filesystem::path& path);

}  // namespace p2cws
