#include "p2cws/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "p2cws/errors.hpp"
#include "p2cws/geometry.hpp"

namespace p2cws {

namespace {

constexpr double kLaneOffset = 4.0;   // walking lane |z|
constexpr double kPauseDepth = 3.0;   // |z| of the pause / hesitation spot
constexpr double kHesitationSpeed = 0.5;
constexpr double kTurnTime = 0.5;
constexpr double kCueLead = 1.5;  // facing the road this long before onset
constexpr double kPedWidth = 0.5;
constexpr double kVehicleLane = 1.75;
constexpr double kVehicleRange = 25.0;

struct ScriptInfo {
  Script script;
  std::string_view name;
  double min_duration;
};

constexpr ScriptInfo kScripts[] = {
    {Script::kWalkThrough, "walk_through", 5.0},
    {Script::kApproachWaitCross, "approach_wait_cross", 8.0},
    {Script::kApproachNoCross, "approach_no_cross", 6.0},
    {Script::kCrossImmediately, "cross_immediately", 6.0},
};

const ScriptInfo& info(Script s) {
  for (const auto& i : kScripts)
    if (i.script == s) return i;
  throw DataError("unknown script");
}

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

struct Keyframe {
  double t;
  double x;
  double z;
  double heading;
};

struct PathSample {
  Vec2 pos;
  double heading;
  double speed;
  double travelled;
};

class Path {
 public:
  void add(double t, double x, double z, double heading) { keys_.push_back({t, x, z, heading}); }
  const Keyframe& back() const { return keys_.back(); }
  // Holds the last position and heading for `dt` seconds.
  void hold(double dt) { add(back().t + dt, back().x, back().z, back().heading); }
  void turn(double heading, double dt = kTurnTime) { add(back().t + dt, back().x, back().z, heading); }
  void walk_to(double x, double z, double speed) {
    const double d = std::hypot(x - back().x, z - back().z);
    add(back().t + d / speed, x, z, back().heading);
  }

  PathSample sample(double t) const {
    PathSample s{};
    double travelled = 0.0;
    if (t <= keys_.front().t) {
      s.pos = {keys_.front().x, keys_.front().z};
      s.heading = keys_.front().heading;
      return s;
    }
    for (std::size_t i = 1; i < keys_.size(); ++i) {
      const Keyframe& a = keys_[i - 1];
      const Keyframe& b = keys_[i];
      const double len = std::hypot(b.x - a.x, b.z - a.z);
      if (t <= b.t) {
        const double dt = b.t - a.t;
        const double f = dt > 0.0 ? (t - a.t) / dt : 1.0;
        s.pos = {a.x + f * (b.x - a.x), a.z + f * (b.z - a.z)};
        double dh = std::fmod(b.heading - a.heading + 540.0, 360.0) - 180.0;
        s.heading = wrap_degrees(a.heading + f * dh);
        s.speed = dt > 0.0 ? len / dt : 0.0;
        s.travelled = travelled + f * len;
        return s;
      }
      travelled += len;
    }
    s.pos = {keys_.back().x, keys_.back().z};
    s.heading = keys_.back().heading;
    s.travelled = travelled;
    return s;
  }

 private:
  std::vector<Keyframe> keys_;
};

double heading_along(int dir) { return dir > 0 ? 180.0 : 0.0; }
double heading_to_road(int side) { return side < 0 ? 90.0 : 270.0; }

struct PedestrianPlan {
  Path path;
  double speed = 1.3;
  std::optional<double> onset;
  std::optional<double> offset;
};

PedestrianPlan plan_pedestrian(const ScenarioSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };
  const int side = uni(rng) < 0.5 ? -1 : 1;
  const int dir = uni(rng) < 0.5 ? -1 : 1;
  const double drawn_speed = range(1.1, 1.6);
  const double s = spec.speed.value_or(drawn_speed);
  const double x_cw = range(-1.5, 1.5);
  const double a = range(0.8, 1.5);
  const double wait = range(1.0, 2.0);
  const double pause = range(2.0, 3.0);
  const double pre = range(2.0, 2.1);
  const double frac = range(0.3, 0.7);
  const double lane = side * kLaneOffset;
  const double along = heading_along(dir);
  const double to_road = heading_to_road(side);
  const double from_road = heading_to_road(-side);
  const double D = spec.duration;

  PedestrianPlan plan;
  plan.speed = s;
  Path& p = plan.path;
  auto walk_off = [&](double heading) {
    // Walk along the current lane until past the end of the scene.
    p.turn(heading);
    const double remaining = std::max(0.0, D + 1.0 - p.back().t);
    p.walk_to(p.back().x + (heading == 180.0 ? 1.0 : -1.0) * s * remaining, p.back().z, s);
  };

  switch (spec.script) {
    case Script::kWalkThrough: {
      const double x0 = x_cw - dir * s * D * frac;
      p.add(0.0, x0, lane, along);
      p.walk_to(x0 + dir * s * (D + 1.0), lane, s);
      break;
    }
    case Script::kApproachWaitCross: {
      p.add(0.0, x_cw - dir * s * a, lane, along);
      p.walk_to(x_cw, lane, s);
      p.hold(wait);
      p.turn(to_road);
      p.hold(std::max(0.0, kCueLead - (kLaneOffset - kRoadHalfWidth) / s));
      p.walk_to(x_cw, side * kRoadHalfWidth, s);
      plan.onset = p.back().t;
      if (spec.ambiguity) {
        p.walk_to(x_cw, side * kPauseDepth, s);
        p.hold(pause);
      }
      p.walk_to(x_cw, -side * kRoadHalfWidth, s);
      plan.offset = p.back().t;
      p.walk_to(x_cw, -side * kLaneOffset, s);
      walk_off(along);
      break;
    }
    case Script::kApproachNoCross: {
      p.add(0.0, x_cw - dir * s * a, lane, along);
      p.walk_to(x_cw, lane, s);
      if (spec.ambiguity) {
        // Drifts slowly onto the crosswalk edge, stands, and returns.
        p.add(p.back().t + kTurnTime, x_cw, side * (kLaneOffset - kTurnTime * kHesitationSpeed), to_road);
        p.walk_to(x_cw, side * kPauseDepth, kHesitationSpeed);
        p.hold(pause);
        p.turn(from_road);
        p.walk_to(x_cw, lane, s);
      } else {
        p.hold(range(1.0, 3.0));
      }
      walk_off(along);
      break;
    }
    case Script::kCrossImmediately: {
      const double z0 = kRoadHalfWidth + s * pre;
      p.add(0.0, x_cw, side * z0, to_road);
      p.walk_to(x_cw, side * kRoadHalfWidth, s);
      plan.onset = p.back().t;
      p.walk_to(x_cw, -side * kRoadHalfWidth, s);
      plan.offset = p.back().t;
      p.walk_to(x_cw, -side * kLaneOffset, s);
      walk_off(along);
      break;
    }
  }
  return plan;
}

// Body-frame gait offsets along the forward axis (-x).
void apply_gait(Pose3D& pose, double phase, double amplitude) {
  const double sw = amplitude * std::sin(phase);
  auto push = [&](JointName j, double fwd) { pose.joints[j].x() -= fwd; };
  push(JointName::kAnkleL, 0.25 * sw);
  push(JointName::kKneeL, 0.12 * sw);
  push(JointName::kAnkleR, -0.25 * sw);
  push(JointName::kKneeR, -0.12 * sw);
  push(JointName::kWristL, -0.15 * sw);
  push(JointName::kElbowL, -0.07 * sw);
  push(JointName::kWristR, 0.15 * sw);
  push(JointName::kElbowR, 0.07 * sw);
}

SemanticGrid synthetic_semantics() {
  SemanticGrid grid(kSynthWidth, kSynthHeight, SemanticLabel::kSidewalk);
  for (int v = 0; v < kSynthHeight; ++v) {
    const double z = (v + 0.5 - kSynthHeight / 2.0) / (kSynthFocal / kSynthCameraHeight);
    if (std::abs(z) > kRoadHalfWidth) continue;
    for (int u = 0; u < kSynthWidth; ++u) {
      const double x = (u + 0.5 - kSynthWidth / 2.0) / (kSynthFocal / kSynthCameraHeight);
      grid.set(u, v, std::abs(x) <= kCrosswalkHalfWidth ? SemanticLabel::kCrosswalk : SemanticLabel::kRoad);
    }
  }
  return grid;
}

std::vector<CrosswalkEntrance> synthetic_crosswalks() {
  std::vector<CrosswalkEntrance> out;
  for (double z : {-kRoadHalfWidth, kRoadHalfWidth}) {
    out.push_back({ground_to_pixel({-kCrosswalkHalfWidth, z}), ground_to_pixel({kCrosswalkHalfWidth, z})});
  }
  return out;
}

double pixels_per_meter() { return kSynthFocal / kSynthCameraHeight; }

}  // namespace

std::string_view to_string(Script s) { return info(s).name; }

Script parse_script(std::string_view name) {
  for (const auto& i : kScripts)
    if (i.name == name) return i.script;
  throw DataError("unknown script: " + std::string(name));
}

void ScenarioSpec::validate() const {
  if (n_pedestrians < 1) throw DataError("scenario: n_pedestrians must be >= 1");
  if (n_vehicles < 0) throw DataError("scenario: n_vehicles must be >= 0");
  if (!(pixel_noise >= 0.0) || !(joint_noise >= 0.0) || !(height_jitter >= 0.0)) {
    throw DataError("scenario: noise must be >= 0");
  }
  if (speed && !(*speed > 0.0)) throw DataError("scenario: speed must be > 0");
  const double floor = kContextMax + kHorizonMax;
  if (!(duration >= floor)) {
    std::ostringstream os;
    os << "scenario: duration " << duration << " s is shorter than context_max + horizon_max (" << floor << " s)";
    throw DataError(os.str());
  }
  const double need = info(script).min_duration;
  if (duration < need) {
    std::ostringstream os;
    os << "scenario: duration " << duration << " s is shorter than the " << to_string(script) << " script ("
       << need << " s)";
    throw DataError(os.str());
  }
}

namespace {

void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string_view>& keys,
                         const std::string& what) {
  if (!j.is_object()) throw DataError(what + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw DataError(what + ": unknown key '" + k + "'");
  }
}

const std::vector<std::string_view> kScenarioKeys = {
    "script", "n_pedestrians", "n_vehicles", "duration", "noise", "height_jitter", "ambiguity", "speed", "seed"};

}  // namespace

ScenarioSpec scenario_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, kScenarioKeys, "scenario");
  ScenarioSpec s;
  try {
    if (j.contains("script")) s.script = parse_script(j.at("script").get<std::string>());
    s.n_pedestrians = j.value("n_pedestrians", s.n_pedestrians);
    s.n_vehicles = j.value("n_vehicles", s.n_vehicles);
    s.duration = j.value("duration", s.duration);
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      s.pixel_noise = n.value("pixel", s.pixel_noise);
      s.joint_noise = n.value("joint", s.joint_noise);
    }
    s.height_jitter = j.value("height_jitter", s.height_jitter);
    s.ambiguity = j.value("ambiguity", s.ambiguity);
    if (j.contains("speed") && !j.at("speed").is_null()) s.speed = j.at("speed").get<double>();
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("scenario: ") + e.what());
  }
  return s;
}

nlohmann::json to_json(const ScenarioSpec& s) {
  nlohmann::json j{{"script", std::string(to_string(s.script))},
                   {"n_pedestrians", s.n_pedestrians},
                   {"n_vehicles", s.n_vehicles},
                   {"duration", s.duration},
                   {"noise", {{"pixel", s.pixel_noise}, {"joint", s.joint_noise}}},
                   {"height_jitter", s.height_jitter},
                   {"ambiguity", s.ambiguity},
                   {"seed", s.seed}};
  j["speed"] = s.speed ? nlohmann::json(*s.speed) : nlohmann::json(nullptr);
  return j;
}

const TrackTruth* SyntheticScene::find_truth(int id) const {
  for (const auto& t : truth)
    if (t.id == id) return &t;
  return nullptr;
}

CameraModel synthetic_camera() {
  CameraModel c;
  c.intrinsic << kSynthFocal, 0.0, kSynthWidth / 2.0, 0.0, kSynthFocal, kSynthHeight / 2.0, 0.0, 0.0, 1.0;
  c.rotation << 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0;
  c.translation = Vec3(0.0, 0.0, kSynthCameraHeight);
  return c;
}

Vec2 ground_to_pixel(const Vec2& xz) {
  static const CameraModel camera = synthetic_camera();
  return project_point(Vec3(xz.x(), 0.0, xz.y()), camera);
}

Pose3D template_pose(double degrees, double height_m) {
  Pose3D p;
  const double k = height_m / 1.7;
  auto set = [&](JointName j, double x, double y, double z) { p.joints[j] = k * Vec3(x, y, z); };
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
  return rotate_pose(p, degrees);
}

Pose3D rotate_pose(const Pose3D& pose, double degrees) {
  const double c = std::cos(deg2rad(degrees));
  const double s = std::sin(deg2rad(degrees));
  const Vec3 origin = pose.has(JointName::kHipMid) ? pose.at(JointName::kHipMid) : Vec3::Zero();
  Pose3D out = pose;
  for (auto& [joint, v] : out.joints) {
    const Vec3 d = v - origin;
    v = origin + Vec3(c * d.x() + s * d.z(), d.y(), -s * d.x() + c * d.z());
  }
  return out;
}

SyntheticScene generate_scene(const ScenarioSpec& spec, const KnowledgeBase& kb) {
  spec.validate();
  kb.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double ppm = pixels_per_meter();
  const double rate = 30.0;
  const long long frames = static_cast<long long>(std::floor(spec.duration * rate + 1e-9));

  SyntheticScene out;
  SceneBundle& scene = out.scene;
  scene.frame_rate = rate;
  scene.camera = synthetic_camera();
  scene.semantics = synthetic_semantics();
  scene.crosswalks = synthetic_crosswalks();

  // Draw all plans first so noise draws do not shift the scripts.
  std::vector<PedestrianPlan> plans;
  std::vector<double> heights;
  for (int i = 0; i < spec.n_pedestrians; ++i) {
    plans.push_back(plan_pedestrian(spec, rng));
    heights.push_back(std::max(0.5, kb.mean_height(EntityClass::kPerson) + spec.height_jitter * normal(rng)));
  }
  struct VehiclePlan {
    EntityClass cls;
    double height;
    double length;
    double speed;
    double t0;
    int dir;
    double z;
  };
  std::vector<VehiclePlan> vplans;
  constexpr EntityClass kVehicleCycle[] = {EntityClass::kCar, EntityClass::kCar, EntityClass::kBus,
                                           EntityClass::kTruck};
  for (int i = 0; i < spec.n_vehicles; ++i) {
    VehiclePlan v{};
    v.cls = kVehicleCycle[i % 4];
    v.height = std::max(0.5, kb.mean_height(v.cls) + spec.height_jitter * normal(rng));
    v.length = v.cls == EntityClass::kCar ? 4.5 : (v.cls == EntityClass::kBus ? 12.0 : 8.0);
    v.speed = 8.0 + 4.0 * uni(rng);
    v.t0 = -2.0 + (spec.duration - 2.0) * uni(rng);
    v.dir = i % 2 == 0 ? 1 : -1;
    v.z = v.dir > 0 ? -kVehicleLane : kVehicleLane;
    vplans.push_back(v);
  }

  auto jitter = [&](double sigma) { return sigma > 0.0 ? sigma * normal(rng) : 0.0; };

  for (int i = 0; i < spec.n_pedestrians; ++i) {
    const PedestrianPlan& plan = plans[static_cast<std::size_t>(i)];
    const double H = heights[static_cast<std::size_t>(i)];
    EntityTrack track;
    track.id = i + 1;
    track.cls = EntityClass::kPerson;
    TrackTruth truth;
    truth.id = track.id;
    truth.cls = track.cls;
    truth.height_m = H;
    truth.speed = plan.speed;
    truth.crossing_onset = plan.onset;
    truth.crossing_offset = plan.offset;
    const double h_px = kSynthFocal * H / kSynthCameraHeight;
    for (long long k = 0; k <= frames; ++k) {
      const double t = static_cast<double>(k) / rate;
      const PathSample s = plan.path.sample(t);
      Pose3D body = template_pose(0.0, H);
      apply_gait(body, 2.0 * std::numbers::pi * s.travelled / 1.4, std::min(1.0, s.speed));
      const Pose3D rotated = rotate_pose(body, s.heading);
      Pose3D pose = rotated;
      pose.timestamp = t;
      if (spec.joint_noise > 0.0) {
        for (auto& [joint, v] : pose.joints) {
          v += Vec3(jitter(spec.joint_noise), jitter(spec.joint_noise), jitter(spec.joint_noise));
        }
      }
      Detection d;
      d.timestamp = t;
      const Vec2 anchor = ground_to_pixel(s.pos);
      d.anchor = anchor + Vec2(jitter(spec.pixel_noise), jitter(spec.pixel_noise));
      const double half_w = 0.5 * kPedWidth * ppm;
      d.bbox = BBox{anchor.x() - half_w + jitter(spec.pixel_noise), anchor.y() - h_px + jitter(spec.pixel_noise),
                    anchor.x() + half_w + jitter(spec.pixel_noise), anchor.y() + jitter(spec.pixel_noise)};
      std::array<Vec2, 2> toes;
      const Vec3 fwd = angle_to_direction(s.heading);
      const JointName ankles[2] = {JointName::kAnkleL, JointName::kAnkleR};
      for (int f = 0; f < 2; ++f) {
        const Vec3 a = rotated.at(ankles[f]);
        const Vec2 ground(s.pos.x() + a.x() + 0.1 * fwd.x(), s.pos.y() + a.z() + 0.1 * fwd.z());
        toes[static_cast<std::size_t>(f)] =
            ground_to_pixel(ground) + Vec2(jitter(spec.pixel_noise), jitter(spec.pixel_noise));
      }
      d.toes = toes;
      d.pose = std::move(pose);
      const bool crossing = plan.onset && t >= *plan.onset && t < *plan.offset;
      d.state = crossing ? CrossingState::kCrossing : CrossingState::kNotCrossing;
      track.detections.push_back(std::move(d));
      truth.ground.push_back(s.pos);
      truth.heading.push_back(s.heading);
    }
    scene.tracks.push_back(std::move(track));
    out.truth.push_back(std::move(truth));
  }

  for (int i = 0; i < spec.n_vehicles; ++i) {
    const VehiclePlan& v = vplans[static_cast<std::size_t>(i)];
    EntityTrack track;
    track.id = 101 + i;
    track.cls = v.cls;
    TrackTruth truth;
    truth.id = track.id;
    truth.cls = v.cls;
    truth.height_m = v.height;
    truth.speed = v.speed;
    const double h_px = kSynthFocal * v.height / kSynthCameraHeight;
    for (long long k = 0; k <= frames; ++k) {
      const double t = static_cast<double>(k) / rate;
      if (t < v.t0) continue;
      const double x = -v.dir * kVehicleRange + v.dir * v.speed * (t - v.t0);
      if (std::abs(x) > kVehicleRange) break;
      const Vec2 front = ground_to_pixel({x, v.z});
      const double back_u = front.x() - v.dir * v.length * ppm;
      Detection d;
      d.timestamp = t;
      d.anchor = front + Vec2(jitter(spec.pixel_noise), jitter(spec.pixel_noise));
      d.bbox = BBox{std::min(front.x(), back_u) + jitter(spec.pixel_noise), front.y() - h_px + jitter(spec.pixel_noise),
                    std::max(front.x(), back_u) + jitter(spec.pixel_noise), front.y() + jitter(spec.pixel_noise)};
      track.detections.push_back(std::move(d));
      truth.ground.emplace_back(x, v.z);
    }
    if (track.detections.empty()) continue;
    scene.tracks.push_back(std::move(track));
    out.truth.push_back(std::move(truth));
  }
  return out;
}

std::vector<OrientationSample> generate_orientation_set(int n, std::uint64_t seed, double joint_noise,
                                                        bool angle_jitter) {
  if (n < 1) throw DataError("orientation set: n must be >= 1");
  if (!(joint_noise >= 0.0)) throw DataError("orientation set: joint noise must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double step = 360.0 / n;
  std::vector<OrientationSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double angle = step * i;
    if (angle_jitter) angle = wrap_degrees(angle + step * uni(rng));
    OrientationSample s{template_pose(angle), angle};
    if (joint_noise > 0.0) {
      for (auto& [joint, v] : s.pose.joints) {
        v += joint_noise * Vec3(normal(rng), normal(rng), normal(rng));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void DatasetSpec::validate() const {
  if (scripts.empty()) throw DataError("dataset: no scripts");
  if (train < 1 || val < 1 || test < 0) throw DataError("dataset: need train >= 1, val >= 1, test >= 0");
  ScenarioSpec probe = base;
  for (Script s : scripts) {
    probe.script = s;
    probe.validate();
  }
}

DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"n_pedestrians", "n_vehicles", "duration", "noise", "height_jitter", "ambiguity", "speed",
                          "seed", "scripts", "split"},
                      "dataset spec");
  DatasetSpec d;
  try {
    nlohmann::json base = j;
    base.erase("scripts");
    base.erase("split");
    d.base = scenario_from_json(base);
    if (j.contains("scripts")) {
      d.scripts.clear();
      for (const auto& s : j.at("scripts")) d.scripts.push_back(parse_script(s.get<std::string>()));
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      d.train = s.value("train", d.train);
      d.val = s.value("val", d.val);
      d.test = s.value("test", d.test);
    }
    d.seed = j.value("seed", d.seed);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("dataset spec: ") + e.what());
  }
  return d;
}

nlohmann::json to_json(const DatasetSpec& d) {
  nlohmann::json j = to_json(d.base);
  j.erase("script");
  j["seed"] = d.seed;
  nlohmann::json scripts = nlohmann::json::array();
  for (Script s : d.scripts) scripts.push_back(std::string(to_string(s)));
  j["scripts"] = scripts;
  j["split"] = {{"train", d.train}, {"val", d.val}, {"test", d.test}};
  return j;
}

std::vector<DatasetScene> generate_dataset(const DatasetSpec& spec, const KnowledgeBase& kb) {
  spec.validate();
  std::vector<DatasetScene> out;
  for (int i = 0; i < spec.count(); ++i) {
    DatasetScene ds;
    std::ostringstream name;
    name << "scene_" << std::setw(4) << std::setfill('0') << i;
    ds.name = name.str();
    ds.split = i < spec.train ? "train" : (i < spec.train + spec.val ? "val" : "test");
    ds.spec = spec.base;
    ds.spec.script = spec.scripts[static_cast<std::size_t>(i) % spec.scripts.size()];
    ds.spec.seed = splitmix64(spec.seed ^ splitmix64(static_cast<std::uint64_t>(i)));
    ds.scene = generate_scene(ds.spec, kb);
    out.push_back(std::move(ds));
  }
  return out;
}

void write_dataset_dir(const std::vector<DatasetScene>& scenes, const DatasetSpec& spec,
                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& s : scenes) {
    const std::string file = s.name + ".jsonl";
    save_scene(s.scene.scene, dir / file);
    entries.push_back({{"name", s.name},
                       {"file", file},
                       {"split", s.split},
                       {"script", std::string(to_string(s.spec.script))},
                       {"seed", s.spec.seed}});
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("cannot write manifest in " + dir.string());
  out << nlohmann::json{{"spec", to_json(spec)}, {"scenes", entries}}.dump(2) << "\n";
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open manifest " + manifest.string());
  std::vector<ManifestEntry> out;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    for (const auto& e : j.at("scenes")) {
      ManifestEntry m;
      m.name = e.at("name").get<std::string>();
      m.file = e.at("file").get<std::string>();
      m.split = e.at("split").get<std::string>();
      m.script = e.value("script", std::string());
      if (m.split != "train" && m.split != "val" && m.split != "test") {
        throw DataError("manifest: bad split '" + m.split + "' for " + m.name);
      }
      out.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  return out;
}

}  // namespace p2cws
