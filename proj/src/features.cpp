#include "p2cws/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "p2cws/errors.hpp"
#include "p2cws/geometry.hpp"

namespace p2cws {
namespace {

using nlohmann::json;

// Toe stencil: 3x3 neighbourhood at stride 2, center excluded.
constexpr std::array<std::array<int, 2>, 8> kToeStencil = {{
    {{-2, -2}}, {{0, -2}}, {{2, -2}}, {{-2, 0}}, {{2, 0}}, {{-2, 2}}, {{0, 2}}, {{2, 2}},
}};

long long first_tick_of(const EntityTrack& track) {
  return static_cast<long long>(std::ceil(track.first_time() * kFeatureRate - 1e-9));
}

long long last_tick_of(const EntityTrack& track) {
  return static_cast<long long>(std::floor(track.last_time() * kFeatureRate + 1e-9));
}

}  // namespace

const std::vector<JointName>& default_pose_joints() {
  static const std::vector<JointName> joints = {
      JointName::kShoulderL, JointName::kShoulderR, JointName::kElbowL, JointName::kElbowR,
      JointName::kWristL,    JointName::kWristR,    JointName::kNeck,   JointName::kHipMid,
      JointName::kHipL,      JointName::kHipR,      JointName::kKneeL,  JointName::kKneeR,
      JointName::kAnkleL,    JointName::kAnkleR,
  };
  return joints;
}

void FeatureConfig::validate() const {
  kb.validate();
  norms.validate();
  if (pose_joints.size() != kPoseJointCount) {
    throw DataError("feature config: exactly 14 pose joints are required");
  }
  if (!(sample_tolerance >= 0.0)) throw DataError("feature config: sample_tolerance must be >= 0");
  if (speed_window < kMinSpeedWindow - 1e-12) {
    throw DataError("feature config: speed_window must be >= 0.5 s");
  }
  if (!(approach_lookback > 0.0)) throw DataError("feature config: approach_lookback must be > 0");
}

FeatureConfig feature_config_from_json(const json& j) {
  FeatureConfig cfg;
  if (j.contains("knowledge_base")) cfg.kb = knowledge_base_from_json(j.at("knowledge_base"));
  if (j.contains("normalization")) cfg.norms = normalization_from_json(j.at("normalization"));
  if (j.contains("with_state")) cfg.with_state = j.at("with_state").get<bool>();
  if (j.contains("sample_tolerance")) cfg.sample_tolerance = j.at("sample_tolerance").get<double>();
  if (j.contains("speed_window")) cfg.speed_window = j.at("speed_window").get<double>();
  if (j.contains("approach_lookback")) {
    cfg.approach_lookback = j.at("approach_lookback").get<double>();
  }
  if (j.contains("pose_joints")) {
    cfg.pose_joints.clear();
    for (const auto& name : j.at("pose_joints")) {
      auto joint = parse_joint(name.get<std::string>());
      if (!joint) throw DataError("feature config: unknown joint " + name.dump());
      cfg.pose_joints.push_back(*joint);
    }
  }
  cfg.validate();
  return cfg;
}

json to_json(const FeatureConfig& cfg) {
  json joints = json::array();
  for (auto j : cfg.pose_joints) joints.push_back(std::string(to_string(j)));
  return {{"knowledge_base", to_json(cfg.kb)},
          {"normalization", to_json(cfg.norms)},
          {"with_state", cfg.with_state},
          {"sample_tolerance", cfg.sample_tolerance},
          {"speed_window", cfg.speed_window},
          {"approach_lookback", cfg.approach_lookback},
          {"pose_joints", std::move(joints)}};
}

std::vector<double> FeatureVector::flat() const {
  std::vector<double> out(base.begin(), base.end());
  if (state_flag) out.push_back(*state_flag);
  return out;
}

std::vector<std::string> feature_names(bool with_state) {
  std::vector<std::string> names;
  names.reserve(kBaseFeatureDim + 1);
  for (auto joint : default_pose_joints()) {
    for (const char* axis : {"x", "y", "z"}) {
      names.push_back("pose." + std::string(to_string(joint)) + "." + axis);
    }
  }
  for (const char* n : {"group_size", "ped_speed", "veh_distance", "v2p_angle", "veh_speed",
                        "cw_distance", "cw_angle", "location"}) {
    names.emplace_back(n);
  }
  if (with_state) names.emplace_back("state");
  return names;
}

std::vector<double> pose_feature(const Pose3D& pose, const std::vector<JointName>& joints) {
  std::vector<double> out;
  out.reserve(3 * joints.size());
  for (auto joint : joints) {
    const Vec3& p = pose.at(joint);
    out.insert(out.end(), {p.x(), p.y(), p.z()});
  }
  return out;
}

int group_size(const EntityTrack& subject, const SceneBundle& scene, double t,
               const KnowledgeBase& kb, double tolerance) {
  const Detection* self = sample_track(subject, t, tolerance);
  if (self == nullptr) throw MissingObservation("group_size: subject not observed at t");
  int count = 1;
  for (const auto& track : scene.tracks) {
    if (track.id == subject.id || track.cls != EntityClass::kPerson) continue;
    const Detection* other = sample_track(track, t, tolerance);
    if (other == nullptr) continue;
    if (estimate_distance(*self, subject.cls, *other, track.cls, kb) <= kGroupRadius) ++count;
  }
  return count;
}

std::optional<ApproachingVehicle> closest_approaching_vehicle(const EntityTrack& subject,
                                                              const SceneBundle& scene, double t,
                                                              double lookback,
                                                              const KnowledgeBase& kb,
                                                              double tolerance) {
  if (!(lookback > 0.0)) throw DataError("closest_approaching_vehicle: lookback must be > 0");
  const Detection* self_now = sample_track(subject, t, tolerance);
  const Detection* self_prev = sample_track(subject, t - lookback, tolerance);
  if (self_now == nullptr || self_prev == nullptr) return std::nullopt;

  std::optional<ApproachingVehicle> best;
  for (const auto& track : scene.tracks) {
    if (!is_vehicle(track.cls)) continue;
    const Detection* now = sample_track(track, t, tolerance);
    const Detection* prev = sample_track(track, t - lookback, tolerance);
    if (now == nullptr || prev == nullptr) continue;
    const double d_now = estimate_distance(*self_now, subject.cls, *now, track.cls, kb);
    const double d_prev = estimate_distance(*self_prev, subject.cls, *prev, track.cls, kb);
    const double delta = d_now - d_prev;
    if (!(delta < 0.0)) continue;
    if (!best || d_now < best->distance) best = ApproachingVehicle{&track, d_now, delta};
  }
  return best;
}

double one_minus_cos(const Vec2& a, const Vec2& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na < kDegenerateNorm || nb < kDegenerateNorm) {
    throw GeometryError("angle feature: zero-length vector");
  }
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return 1.0 - c;
}

double v2p_angle(const Vec2& body_direction_px, const EntityTrack& vehicle, double t1, double t2,
                 double tolerance) {
  const Detection* d1 = sample_track(vehicle, t1, tolerance);
  const Detection* d2 = sample_track(vehicle, t2, tolerance);
  if (d1 == nullptr || d2 == nullptr) throw MissingObservation("v2p_angle: vehicle not observed");
  return one_minus_cos(body_direction_px, d2->anchor - d1->anchor);
}

std::optional<Vec2> body_direction_px(const EntityTrack& subject, const Detection& det,
                                      const SceneBundle& scene, double t, double lookback,
                                      double tolerance) {
  if (scene.camera && det.pose) {
    const Vec2 dir =
        project_direction(body_orientation(*det.pose).direction, det.anchor, *scene.camera);
    if (dir.norm() >= kDegenerateNorm) return dir;
  }
  const Detection* prev = sample_track(subject, t - lookback, tolerance);
  if (prev != nullptr && prev != &det) {
    const Vec2 dir = det.anchor - prev->anchor;
    if (dir.norm() >= kDegenerateNorm) return dir;
  }
  return std::nullopt;
}

CrosswalkContext crosswalk_context(const Detection& det, const Vec2& body_direction_px,
                                   const SceneBundle& scene, const KnowledgeBase& kb) {
  if (scene.crosswalks.empty()) throw DataError("crosswalk_context: scene has no crosswalks");
  const double h = det.height_px();
  if (!(h > 0.0)) throw DataError("crosswalk_context: zero pixel height");
  const double scale = kb.mean_height(EntityClass::kPerson) / h;
  CrosswalkContext best;
  double best_distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scene.crosswalks.size(); ++i) {
    const double d = (det.anchor - scene.crosswalks[i].midpoint()).norm() * scale;
    if (d < best_distance) {
      best_distance = d;
      best.entrance = i;
    }
  }
  best.distance = best_distance;
  best.angle = one_minus_cos(body_direction_px, scene.crosswalks[best.entrance].entrance_vector());
  return best;
}

SemanticLabel location_semantics(const Detection& det, const SemanticGrid& semantics) {
  if (!det.toes) throw MissingObservation("location_semantics: missing toe points");
  std::array<int, kSemanticLabelCount> votes{};
  for (const Vec2& toe : *det.toes) {
    const int u = static_cast<int>(std::floor(toe.x()));
    const int v = static_cast<int>(std::floor(toe.y()));
    for (const auto& off : kToeStencil) {
      ++votes[static_cast<std::size_t>(semantics.at_clamped(u + off[0], v + off[1]))];
    }
  }
  int best = 0;
  for (int label = 1; label < kSemanticLabelCount; ++label) {
    if (votes[static_cast<std::size_t>(label)] >= votes[static_cast<std::size_t>(best)]) best = label;
  }
  return static_cast<SemanticLabel>(best);
}

FeatureVector assemble_feature(const EntityTrack& subject, const SceneBundle& scene, double t,
                               const FeatureConfig& cfg) {
  const double tol = cfg.sample_tolerance;
  const Detection* det = sample_track(subject, t, tol);
  if (det == nullptr) throw MissingObservation("subject not observed at t");
  if (!det->pose || !det->pose->contains_all(cfg.pose_joints)) {
    throw MissingObservation("subject pose is not feature-complete");
  }
  const auto& norms = cfg.norms;
  FeatureVector f;

  const auto pose = pose_feature(*det->pose, cfg.pose_joints);
  for (std::size_t i = 0; i < kPoseDim; ++i) f.base[kSlotPose + i] = pose[i] / norms.pose;

  f.base[kSlotGroupSize] = group_size(subject, scene, t, cfg.kb, tol) / norms.group;
  f.base[kSlotPedSpeed] =
      pedestrian_speed(subject, t - cfg.speed_window, t, cfg.kb, tol) / norms.pedestrian_speed;

  const auto body_dir = body_direction_px(subject, *det, scene, t, cfg.approach_lookback, tol);

  // Absent vehicle: distance at its exp(-inf) limit, angle and speed zero.
  if (auto veh = closest_approaching_vehicle(subject, scene, t, cfg.approach_lookback, cfg.kb, tol)) {
    f.base[kSlotVehDistance] =
        normalize_distance(veh->distance, norms.vehicle_distance, norms.distance_norm);
    const double angle =
        body_dir ? v2p_angle(*body_dir, *veh->track, t - cfg.approach_lookback, t, tol) : 1.0;
    f.base[kSlotV2PAngle] = angle / norms.v2p_angle;
    f.base[kSlotVehSpeed] =
        vehicle_speed(*veh->track, t - cfg.approach_lookback, t, cfg.kb, tol) / norms.vehicle_speed;
  }

  if (!scene.crosswalks.empty()) {
    const auto cw = crosswalk_context(*det, body_dir.value_or(Vec2::UnitX()), scene, cfg.kb);
    f.base[kSlotCwDistance] =
        normalize_distance(cw.distance, norms.crosswalk_distance, norms.distance_norm);
    f.base[kSlotCwAngle] = (body_dir ? cw.angle : 1.0) / norms.crosswalk_angle;
  }

  if (!scene.semantics.empty()) {
    Detection probe = *det;
    if (!probe.toes) probe.toes = std::array<Vec2, 2>{det->bbox.bottom_center(), det->bbox.bottom_center()};
    const auto label = location_semantics(probe, scene.semantics);
    f.base[kSlotLocation] = static_cast<double>(label) / 4.0 / norms.location;
  } else {
    f.base[kSlotLocation] = static_cast<double>(SemanticLabel::kOther) / 4.0 / norms.location;
  }

  if (cfg.with_state) {
    f.state_flag = det->state == CrossingState::kCrossing ? 1.0 : 0.0;
  }
  return f;
}

// --- windows ----------------------------------------------------------------

int slot_count(double context_seconds) {
  return static_cast<int>(std::floor(kFeatureRate * context_seconds + 0.5 + 1e-9));
}

FeatureTimeline::FeatureTimeline(int subject_id, const SceneBundle& scene, FeatureConfig cfg)
    : subject_id_(subject_id), scene_(scene), cfg_(std::move(cfg)) {}

const EntityTrack& FeatureTimeline::subject() const {
  const EntityTrack* track = scene_.find_track(subject_id_);
  if (track == nullptr) throw DataError("unknown subject id " + std::to_string(subject_id_));
  return *track;
}

const std::optional<FeatureVector>& FeatureTimeline::at(long long tick) {
  auto it = cache_.find(tick);
  if (it != cache_.end()) return it->second;
  std::optional<FeatureVector> value;
  try {
    value = assemble_feature(subject(), scene_, tick_time(tick), cfg_);
  } catch (const MissingObservation&) {
  } catch (const GeometryError&) {
  }
  return cache_.emplace(tick, std::move(value)).first->second;
}

FeatureWindow FeatureTimeline::window(long long end_tick, int slots) {
  const int dim = static_cast<int>(kBaseFeatureDim) + (cfg_.with_state ? 1 : 0);
  FeatureWindow w;
  w.ped_id = subject_id_;
  w.t_end = tick_time(end_tick);
  w.context = static_cast<double>(slots) / kFeatureRate;
  w.x = Eigen::MatrixXd::Zero(slots, dim);
  w.mask.assign(static_cast<std::size_t>(slots), 0);
  for (int s = 0; s < slots; ++s) {
    const auto& f = at(end_tick - (slots - 1 - s));
    if (!f) continue;
    for (int c = 0; c < dim; ++c) w.x(s, c) = (*f)[static_cast<std::size_t>(c)];
    w.mask[static_cast<std::size_t>(s)] = 1;
  }
  return w;
}

long long FeatureTimeline::first_window_end(int slots) const {
  return first_tick_of(subject()) + (slots - 1);
}

bool window_end_eligible(const EntityTrack& subject, long long tick, int slots, double tolerance) {
  if (subject.empty()) return false;
  if (tick - (slots - 1) < first_tick_of(subject)) return false;
  return sample_track(subject, tick_time(tick), tolerance) != nullptr;
}

std::vector<LabeledWindow> build_windows(const EntityTrack& subject, const SceneBundle& scene,
                                         const WindowSpec& spec, const FeatureConfig& cfg,
                                         const std::string& scene_name) {
  if (spec.horizons.empty()) throw DataError("build_windows: at least one horizon is required");
  if (spec.stride < 1) throw DataError("build_windows: stride must be >= 1");
  const int slots = slot_count(spec.context);
  if (slots < 1) throw DataError("build_windows: context too short");
  const double horizon_max = *std::max_element(spec.horizons.begin(), spec.horizons.end());
  if (subject.empty() ||
      subject.last_time() - subject.first_time() < spec.context + horizon_max - 1e-9) {
    throw DataError("build_windows: scene shorter than context + horizon for track " +
                    std::to_string(subject.id));
  }
  const double tol = cfg.sample_tolerance;
  FeatureTimeline timeline(subject.id, scene, cfg);

  std::vector<LabeledWindow> out;
  const long long last = last_tick_of(subject);
  for (long long k = timeline.first_window_end(slots); k <= last; k += spec.stride) {
    if (!window_end_eligible(subject, k, slots, tol)) continue;
    LabeledWindow lw;
    lw.horizons = spec.horizons;
    bool labeled = true;
    for (double h : spec.horizons) {
      const auto state = state_at(subject, tick_time(k) + h, tol);
      if (!state) {
        labeled = false;
        break;
      }
      lw.labels.push_back(*state == CrossingState::kCrossing ? 1 : 0);
    }
    if (!labeled) {
      if (spec.require_labels) continue;
      lw.labels.clear();
    }
    lw.window = timeline.window(k, slots);
    lw.window.scene = scene_name;
    lw.window.context = spec.context;
    out.push_back(std::move(lw));
  }
  return out;
}

// --- dataset file -----------------------------------------------------------

json window_to_json(const LabeledWindow& lw) {
  const auto& w = lw.window;
  json x = json::array();
  for (int r = 0; r < w.x.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < w.x.cols(); ++c) row.push_back(w.x(r, c));
    x.push_back(std::move(row));
  }
  json mask = json::array();
  for (auto m : w.mask) mask.push_back(m != 0);
  json out = {{"ped_id", w.ped_id},       {"t_end", w.t_end}, {"context", w.context},
              {"x", std::move(x)},        {"mask", std::move(mask)},
              {"scene", w.scene},         {"split", lw.split}};
  out["horizon"] = lw.horizons.empty() ? json(nullptr) : json(lw.horizons.front());
  out["y"] = lw.labels.empty() ? json(nullptr) : json(lw.labels.front());
  out["heads"] = lw.horizons;
  out["ys"] = lw.labels;
  return out;
}

LabeledWindow window_from_json(const json& j) {
  LabeledWindow lw;
  auto& w = lw.window;
  try {
    w.ped_id = j.at("ped_id").get<int>();
    w.t_end = j.at("t_end").get<double>();
    w.context = j.at("context").get<double>();
    if (j.contains("scene")) w.scene = j.at("scene").get<std::string>();
    if (j.contains("split")) lw.split = j.at("split").get<std::string>();
    const auto& x = j.at("x");
    const auto& mask = j.at("mask");
    const auto rows = static_cast<Eigen::Index>(x.size());
    const auto cols = rows > 0 ? static_cast<Eigen::Index>(x.at(0).size()) : 0;
    if (static_cast<Eigen::Index>(mask.size()) != rows) {
      throw DataError("dataset record: mask length differs from x");
    }
    w.x.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto& row = x.at(static_cast<std::size_t>(r));
      if (static_cast<Eigen::Index>(row.size()) != cols) {
        throw DataError("dataset record: ragged x rows");
      }
      for (Eigen::Index c = 0; c < cols; ++c) w.x(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
      w.mask.push_back(mask.at(static_cast<std::size_t>(r)).get<bool>() ? 1 : 0);
    }
    if (j.contains("heads")) {
      lw.horizons = j.at("heads").get<std::vector<double>>();
      lw.labels = j.at("ys").get<std::vector<int>>();
    } else if (!j.at("y").is_null()) {
      lw.horizons = {j.at("horizon").get<double>()};
      lw.labels = {j.at("y").get<int>()};
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("dataset record: ") + e.what());
  }
  if (lw.horizons.size() != lw.labels.size() && !lw.labels.empty()) {
    throw DataError("dataset record: heads and ys differ in length");
  }
  for (int y : lw.labels) {
    if (y != 0 && y != 1) throw DataError("dataset record: labels must be 0 or 1");
  }
  return lw;
}

void write_dataset(const std::vector<LabeledWindow>& windows, std::ostream& out) {
  for (const auto& w : windows) out << window_to_json(w).dump() << '\n';
}

std::vector<LabeledWindow> read_dataset(std::istream& in) {
  std::vector<LabeledWindow> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(window_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError("dataset line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_dataset(const std::vector<LabeledWindow>& windows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  write_dataset(windows, out);
}

std::vector<LabeledWindow> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  return read_dataset(in);
}

}  // namespace p2cws
