#include "p2cws/scene_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "p2cws/errors.hpp"

namespace p2cws {
namespace {

using nlohmann::json;

constexpr std::array<JointName, kJointCount> kAllJoints = {
    JointName::kHeadTop,   JointName::kJaw,       JointName::kEyeL,   JointName::kEyeR,
    JointName::kNeck,      JointName::kShoulderL, JointName::kShoulderR,
    JointName::kElbowL,    JointName::kElbowR,    JointName::kWristL, JointName::kWristR,
    JointName::kHipL,      JointName::kHipR,      JointName::kHipMid, JointName::kKneeL,
    JointName::kKneeR,     JointName::kAnkleL,    JointName::kAnkleR,
};

constexpr std::array<std::string_view, kJointCount> kJointNames = {
    "head_top", "jaw",     "eye_l",  "eye_r", "neck",  "shoulder_l",
    "shoulder_r", "elbow_l", "elbow_r", "wrist_l", "wrist_r", "hip_l",
    "hip_r",    "hip_mid", "knee_l", "knee_r", "ankle_l", "ankle_r",
};

constexpr std::array<std::string_view, 5> kClassNames = {"Person", "Cyclist", "Car", "Bus",
                                                         "Truck"};

// Field access with diagnostics that name the record and the field.
class RecordReader {
 public:
  RecordReader(const json& record, std::string context)
      : record_(record), context_(std::move(context)) {
    if (!record_.is_object()) fail("", "record is not an object");
  }

  [[noreturn]] void fail(std::string_view field, std::string_view what) const {
    std::string msg = context_;
    if (!field.empty()) msg += ", field '" + std::string(field) + "'";
    msg += ": ";
    msg += what;
    throw DataError(msg);
  }

  const json& required(std::string_view field) const {
    auto it = record_.find(field);
    if (it == record_.end()) fail(field, "missing");
    return *it;
  }

  const json* optional(std::string_view field) const {
    auto it = record_.find(field);
    if (it == record_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  double number(std::string_view field) const { return to_number(required(field), field); }

  double to_number(const json& value, std::string_view field) const {
    if (!value.is_number()) fail(field, "expected a number");
    const double x = value.get<double>();
    if (!std::isfinite(x)) fail(field, "non-finite value");
    return x;
  }

  std::vector<double> numbers(const json& value, std::string_view field,
                              std::size_t expected) const {
    if (!value.is_array() || value.size() != expected) {
      fail(field, "expected an array of " + std::to_string(expected) + " numbers");
    }
    std::vector<double> out;
    out.reserve(expected);
    for (const auto& v : value) out.push_back(to_number(v, field));
    return out;
  }

  Vec2 point2(const json& value, std::string_view field) const {
    const auto xs = numbers(value, field, 2);
    return {xs[0], xs[1]};
  }

  std::string string(std::string_view field) const {
    const json& v = required(field);
    if (!v.is_string()) fail(field, "expected a string");
    return v.get<std::string>();
  }

  const std::string& context() const { return context_; }

 private:
  const json& record_;
  std::string context_;
};

Mat3 mat3_from(const std::vector<double>& xs) {
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = xs[static_cast<std::size_t>(3 * r + c)];
  return m;
}

json mat3_to_json(const Mat3& m) {
  json out = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out.push_back(m(r, c));
  return out;
}

json point_to_json(const Vec2& p) { return json::array({p.x(), p.y()}); }

}  // namespace

std::string_view to_string(JointName joint) {
  return kJointNames[static_cast<std::size_t>(joint)];
}

std::optional<JointName> parse_joint(std::string_view name) {
  for (std::size_t i = 0; i < kJointCount; ++i) {
    if (kJointNames[i] == name) return kAllJoints[i];
  }
  return std::nullopt;
}

const std::array<JointName, kJointCount>& all_joints() { return kAllJoints; }

std::string_view to_string(EntityClass cls) { return kClassNames[static_cast<std::size_t>(cls)]; }

EntityClass parse_entity_class(std::string_view name) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i) {
    if (kClassNames[i] == name) return static_cast<EntityClass>(i);
  }
  throw DataError("unknown class '" + std::string(name) + "'");
}

bool is_vehicle(EntityClass cls) {
  return cls == EntityClass::kCar || cls == EntityClass::kBus || cls == EntityClass::kTruck;
}

std::string_view to_string(CrossingState state) {
  return state == CrossingState::kCrossing ? "crossing" : "not_crossing";
}

const Vec3& Pose3D::at(JointName joint) const {
  auto it = joints.find(joint);
  if (it == joints.end()) {
    throw MissingObservation("pose is missing joint '" + std::string(to_string(joint)) + "'");
  }
  return it->second;
}

bool Pose3D::contains_all(const std::vector<JointName>& required) const {
  return std::all_of(required.begin(), required.end(),
                     [this](JointName j) { return has(j); });
}

void CameraModel::validate() const {
  if (!intrinsic.allFinite() || !rotation.allFinite() || !translation.allFinite()) {
    throw DataError("camera: non-finite entries");
  }
  if (intrinsic(1, 0) != 0.0 || intrinsic(2, 0) != 0.0 || intrinsic(2, 1) != 0.0) {
    throw DataError("camera: K must be upper triangular");
  }
  if (!(intrinsic(0, 0) > 0.0) || !(intrinsic(1, 1) > 0.0)) {
    throw DataError("camera: K focal entries must be positive");
  }
  const double err = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (err > 1e-9) throw DataError("camera: R is not orthonormal");
}

double EntityTrack::first_time() const {
  return detections.empty() ? 0.0 : detections.front().timestamp;
}

double EntityTrack::last_time() const {
  return detections.empty() ? 0.0 : detections.back().timestamp;
}

SemanticGrid::SemanticGrid(int width, int height, SemanticLabel fill)
    : width_(width),
      height_(height),
      labels_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
              static_cast<std::uint8_t>(fill)) {
  if (width < 0 || height < 0) throw DataError("semantic grid: negative dimensions");
}

SemanticGrid::SemanticGrid(int width, int height, std::vector<std::uint8_t> labels)
    : width_(width), height_(height), labels_(std::move(labels)) {
  if (width < 0 || height < 0) throw DataError("semantic grid: negative dimensions");
  if (labels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw DataError("semantic grid: label count does not match width x height");
  }
  for (auto l : labels_) {
    if (l >= kSemanticLabelCount) throw DataError("semantic grid: unknown label code");
  }
}

SemanticLabel SemanticGrid::at(int u, int v) const {
  if (u < 0 || v < 0 || u >= width_ || v >= height_) {
    throw DataError("semantic grid: pixel out of range");
  }
  return static_cast<SemanticLabel>(
      labels_[static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) +
              static_cast<std::size_t>(u)]);
}

SemanticLabel SemanticGrid::at_clamped(int u, int v) const {
  if (empty()) throw DataError("semantic grid: empty");
  return at(std::clamp(u, 0, width_ - 1), std::clamp(v, 0, height_ - 1));
}

void SemanticGrid::set(int u, int v, SemanticLabel label) {
  if (u < 0 || v < 0 || u >= width_ || v >= height_) {
    throw DataError("semantic grid: pixel out of range");
  }
  labels_[static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) +
          static_cast<std::size_t>(u)] = static_cast<std::uint8_t>(label);
}

std::vector<std::pair<int, std::size_t>> SemanticGrid::run_length_encode() const {
  std::vector<std::pair<int, std::size_t>> runs;
  for (auto l : labels_) {
    if (!runs.empty() && runs.back().first == l) {
      ++runs.back().second;
    } else {
      runs.emplace_back(l, 1);
    }
  }
  return runs;
}

SemanticGrid SemanticGrid::from_runs(int width, int height,
                                     const std::vector<std::pair<int, std::size_t>>& runs) {
  std::vector<std::uint8_t> labels;
  labels.reserve(static_cast<std::size_t>(std::max(width, 0)) *
                 static_cast<std::size_t>(std::max(height, 0)));
  for (const auto& [label, count] : runs) {
    if (label < 0 || label >= kSemanticLabelCount) {
      throw DataError("semantic grid: unknown label code " + std::to_string(label));
    }
    labels.insert(labels.end(), count, static_cast<std::uint8_t>(label));
  }
  return SemanticGrid(width, height, std::move(labels));
}

const EntityTrack* SceneBundle::find_track(int id) const {
  auto it = std::lower_bound(tracks.begin(), tracks.end(), id,
                             [](const EntityTrack& tr, int key) { return tr.id < key; });
  if (it != tracks.end() && it->id == id) return &*it;
  // Fall back to a scan for bundles assembled out of id order.
  for (const auto& tr : tracks) {
    if (tr.id == id) return &tr;
  }
  return nullptr;
}

const Detection* sample_track(const EntityTrack& track, double t, double tolerance) {
  const auto& dets = track.detections;
  if (dets.empty()) return nullptr;
  auto it = std::lower_bound(dets.begin(), dets.end(), t,
                             [](const Detection& d, double key) { return d.timestamp < key; });
  const Detection* best = nullptr;
  double best_gap = 0.0;
  if (it != dets.begin()) {
    const auto& prev = *std::prev(it);
    best = &prev;
    best_gap = t - prev.timestamp;
  }
  if (it != dets.end()) {
    const double gap = it->timestamp - t;
    if (best == nullptr || gap < best_gap) {
      best = &*it;
      best_gap = gap;
    }
  }
  return best_gap <= tolerance ? best : nullptr;
}

std::optional<CrossingState> state_at(const EntityTrack& track, double t, double tolerance) {
  const Detection* det = sample_track(track, t, tolerance);
  if (det == nullptr) return std::nullopt;
  return det->state;
}

// --- serialization ----------------------------------------------------------

json header_to_json(const SceneHeader& header) {
  json out;
  out["type"] = "meta";
  out["frame_rate"] = header.frame_rate;
  json cws = json::array();
  for (const auto& cw : header.crosswalks) {
    cws.push_back({{"a", point_to_json(cw.a)}, {"b", point_to_json(cw.b)}});
  }
  out["crosswalks"] = std::move(cws);
  json rle = json::array();
  for (const auto& [label, count] : header.semantics.run_length_encode()) {
    rle.push_back(json::array({label, count}));
  }
  out["semantic"] = {{"width", header.semantics.width()},
                     {"height", header.semantics.height()},
                     {"rle", std::move(rle)}};
  if (header.camera) {
    json t = json::array({header.camera->translation.x(), header.camera->translation.y(),
                          header.camera->translation.z()});
    out["camera"] = {{"K", mat3_to_json(header.camera->intrinsic)},
                     {"R", mat3_to_json(header.camera->rotation)},
                     {"t", std::move(t)}};
  } else {
    out["camera"] = nullptr;
  }
  return out;
}

SceneHeader header_from_json(const json& record) {
  RecordReader rd(record, "meta record");
  if (rd.string("type") != "meta") rd.fail("type", "expected \"meta\"");
  SceneHeader header;
  header.frame_rate = rd.number("frame_rate");
  if (!(header.frame_rate > 0.0)) rd.fail("frame_rate", "must be positive");

  const json& cws = rd.required("crosswalks");
  if (!cws.is_array()) rd.fail("crosswalks", "expected an array");
  for (const auto& cw : cws) {
    RecordReader crd(cw, "meta record, crosswalk");
    CrosswalkEntrance entrance{crd.point2(crd.required("a"), "a"), crd.point2(crd.required("b"), "b")};
    if (entrance.a == entrance.b) rd.fail("crosswalks", "entrance endpoints coincide");
    header.crosswalks.push_back(entrance);
  }

  const json& sem = rd.required("semantic");
  RecordReader srd(sem, "meta record, semantic");
  const json& w = srd.required("width");
  const json& h = srd.required("height");
  if (!w.is_number_integer() || !h.is_number_integer()) {
    srd.fail("width/height", "expected integers");
  }
  const json& rle = srd.required("rle");
  if (!rle.is_array()) srd.fail("rle", "expected an array");
  std::vector<std::pair<int, std::size_t>> runs;
  runs.reserve(rle.size());
  for (const auto& run : rle) {
    if (!run.is_array() || run.size() != 2 || !run[0].is_number_integer() ||
        !run[1].is_number_unsigned()) {
      srd.fail("rle", "runs must be [label, count] integer pairs");
    }
    runs.emplace_back(run[0].get<int>(), run[1].get<std::size_t>());
  }
  try {
    header.semantics = SemanticGrid::from_runs(w.get<int>(), h.get<int>(), runs);
  } catch (const DataError& e) {
    srd.fail("rle", e.what());
  }

  if (const json* cam = rd.optional("camera")) {
    RecordReader crd(*cam, "meta record, camera");
    CameraModel camera;
    camera.intrinsic = mat3_from(crd.numbers(crd.required("K"), "K", 9));
    camera.rotation = mat3_from(crd.numbers(crd.required("R"), "R", 9));
    const auto t = crd.numbers(crd.required("t"), "t", 3);
    camera.translation = Vec3(t[0], t[1], t[2]);
    try {
      camera.validate();
    } catch (const DataError& e) {
      crd.fail("", e.what());
    }
    header.camera = camera;
  }
  return header;
}

json detection_to_json(const DetectionRecord& record) {
  const Detection& det = record.detection;
  json out;
  out["type"] = "det";
  out["id"] = record.id;
  out["class"] = std::string(to_string(record.cls));
  out["t"] = det.timestamp;
  out["bbox"] = json::array({det.bbox.u_min, det.bbox.v_min, det.bbox.u_max, det.bbox.v_max});
  out["anchor"] = point_to_json(det.anchor);
  if (det.pose) {
    json pose = json::object();
    for (const auto& [joint, p] : det.pose->joints) {
      pose[std::string(to_string(joint))] = json::array({p.x(), p.y(), p.z()});
    }
    out["pose"] = std::move(pose);
  } else {
    out["pose"] = nullptr;
  }
  if (det.toes) {
    out["toes"] = json::array({point_to_json((*det.toes)[0]), point_to_json((*det.toes)[1])});
  } else {
    out["toes"] = nullptr;
  }
  if (det.state) {
    out["state"] = std::string(to_string(*det.state));
  } else {
    out["state"] = nullptr;
  }
  return out;
}

DetectionRecord detection_from_json(const json& record) {
  std::string context = "det record";
  if (record.is_object()) {
    auto id = record.find("id");
    if (id != record.end() && id->is_number_integer()) {
      context += " (id " + std::to_string(id->get<long long>()) + ")";
    }
  }
  RecordReader rd(record, context);
  if (rd.string("type") != "det") rd.fail("type", "expected \"det\"");

  DetectionRecord out;
  const json& id = rd.required("id");
  if (!id.is_number_integer()) rd.fail("id", "expected an integer");
  out.id = id.get<int>();
  try {
    out.cls = parse_entity_class(rd.string("class"));
  } catch (const DataError& e) {
    rd.fail("class", e.what());
  }

  Detection& det = out.detection;
  det.timestamp = rd.number("t");
  const auto box = rd.numbers(rd.required("bbox"), "bbox", 4);
  det.bbox = BBox{box[0], box[1], box[2], box[3]};
  if (!(det.bbox.u_max > det.bbox.u_min) || !(det.bbox.v_max > det.bbox.v_min)) {
    rd.fail("bbox", "requires u_max > u_min and v_max > v_min");
  }
  det.anchor = rd.point2(rd.required("anchor"), "anchor");

  if (const json* pose = rd.optional("pose")) {
    if (!pose->is_object()) rd.fail("pose", "expected an object of joints");
    Pose3D p;
    p.timestamp = det.timestamp;
    for (auto it = pose->begin(); it != pose->end(); ++it) {
      auto joint = parse_joint(it.key());
      if (!joint) rd.fail("pose", "unknown joint '" + it.key() + "'");
      const auto xyz = rd.numbers(it.value(), "pose." + it.key(), 3);
      p.joints.emplace(*joint, Vec3(xyz[0], xyz[1], xyz[2]));
    }
    det.pose = std::move(p);
  }
  if (const json* toes = rd.optional("toes")) {
    if (!toes->is_array() || toes->size() != 2) rd.fail("toes", "expected two points");
    det.toes = std::array<Vec2, 2>{rd.point2((*toes)[0], "toes"), rd.point2((*toes)[1], "toes")};
  }
  if (const json* state = rd.optional("state")) {
    if (!state->is_string()) rd.fail("state", "expected a string");
    const auto s = state->get<std::string>();
    if (s == "crossing") {
      det.state = CrossingState::kCrossing;
    } else if (s == "not_crossing") {
      det.state = CrossingState::kNotCrossing;
    } else {
      rd.fail("state", "unknown state '" + s + "'");
    }
  }
  return out;
}

void validate_scene(const SceneBundle& scene) {
  if (!(scene.frame_rate > 0.0) || !std::isfinite(scene.frame_rate)) {
    throw DataError("scene: frame_rate must be positive");
  }
  for (const auto& cw : scene.crosswalks) {
    if (cw.a == cw.b) throw DataError("scene: crosswalk entrance endpoints coincide");
  }
  if (scene.camera) scene.camera->validate();
  for (std::size_t i = 0; i < scene.tracks.size(); ++i) {
    const auto& track = scene.tracks[i];
    if (i > 0 && scene.tracks[i - 1].id >= track.id) {
      throw DataError("scene: track ids must be unique and ascending");
    }
    const std::string ctx = "track " + std::to_string(track.id) + ": ";
    for (std::size_t k = 0; k < track.detections.size(); ++k) {
      const auto& det = track.detections[k];
      if (!std::isfinite(det.timestamp)) throw DataError(ctx + "non-finite timestamp");
      if (k > 0 && !(det.timestamp > track.detections[k - 1].timestamp)) {
        throw DataError(ctx + "non-monotone timestamps");
      }
      if (!(det.bbox.u_max > det.bbox.u_min) || !(det.bbox.v_max > det.bbox.v_min)) {
        throw DataError(ctx + "degenerate bbox");
      }
      if (!det.anchor.allFinite()) throw DataError(ctx + "non-finite anchor");
      if (det.pose) {
        for (const auto& [joint, p] : det.pose->joints) {
          if (!p.allFinite()) throw DataError(ctx + "non-finite pose joint");
        }
      }
    }
  }
}

SceneBundle parse_scene(std::istream& in) {
  SceneBundle scene;
  std::map<int, EntityTrack> tracks;
  std::string line;
  std::size_t line_no = 0;
  bool have_meta = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("line " + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    try {
      if (!have_meta) {
        SceneHeader header = header_from_json(record);
        scene.frame_rate = header.frame_rate;
        scene.crosswalks = std::move(header.crosswalks);
        scene.semantics = std::move(header.semantics);
        scene.camera = header.camera;
        have_meta = true;
        continue;
      }
      DetectionRecord rec = detection_from_json(record);
      auto [it, inserted] = tracks.try_emplace(rec.id);
      EntityTrack& track = it->second;
      if (inserted) {
        track.id = rec.id;
        track.cls = rec.cls;
      } else if (track.cls != rec.cls) {
        throw DataError("track " + std::to_string(rec.id) + ": class changed within track");
      }
      if (!track.detections.empty() &&
          !(rec.detection.timestamp > track.detections.back().timestamp)) {
        throw DataError("track " + std::to_string(rec.id) + ": non-monotone timestamps");
      }
      track.detections.push_back(std::move(rec.detection));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_meta) throw DataError("track file has no meta record");
  scene.tracks.reserve(tracks.size());
  for (auto& [id, track] : tracks) scene.tracks.push_back(std::move(track));
  validate_scene(scene);
  return scene;
}

void write_scene(const SceneBundle& scene, std::ostream& out) {
  validate_scene(scene);
  SceneHeader header{scene.frame_rate, scene.crosswalks, scene.semantics, scene.camera};
  out << header_to_json(header).dump() << '\n';

  struct Ref {
    double t;
    int id;
    const EntityTrack* track;
    const Detection* det;
  };
  std::vector<Ref> refs;
  for (const auto& track : scene.tracks) {
    for (const auto& det : track.detections) refs.push_back({det.timestamp, track.id, &track, &det});
  }
  std::stable_sort(refs.begin(), refs.end(), [](const Ref& a, const Ref& b) {
    return a.t != b.t ? a.t < b.t : a.id < b.id;
  });
  for (const auto& r : refs) {
    out << detection_to_json({r.track->id, r.track->cls, *r.det}).dump() << '\n';
  }
}

SceneBundle load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open track file " + path.string());
  try {
    return parse_scene(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_scene(const SceneBundle& scene, const std::filesystem::path& path) {
  std::ostringstream buffer;
  write_scene(scene, buffer);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write track file " + path.string());
  out << buffer.str();
  if (!out) throw std::runtime_error("I/O failure writing " + path.string());
}

}  // namespace p2cws
