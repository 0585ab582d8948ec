#include "p2cws/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "p2cws/errors.hpp"

namespace p2cws {

namespace {

using Clock = std::chrono::steady_clock;

std::size_t head_index(const Classifier& model, double horizon) {
  const auto& heads = model.config().heads;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    if (std::abs(heads[i] - horizon) < 1e-9) return i;
  }
  throw DataError("model has no head for horizon " + std::to_string(horizon));
}

FeatureConfig features_for(const Classifier& model, const StreamConfig& cfg) {
  FeatureConfig f = cfg.features;
  f.with_state = model.config().input_dim == static_cast<int>(kBaseFeatureDim) + 1;
  return f;
}

Prediction predict_at(const Classifier& model, FeatureTimeline& timeline, const EntityTrack& track,
                      const SceneBundle& scene, long long tick, int slots, std::size_t head,
                      const FeatureConfig& fcfg) {
  Prediction p;
  p.ped_id = track.id;
  p.tick = tick;
  p.t = tick_time(tick);
  const FeatureWindow w = timeline.window(tick, slots);
  p.p_cross = model.forward(w)[head].p_cross;
  if (state_at(track, p.t, fcfg.sample_tolerance) == CrossingState::kCrossing) {
    p.current_state = CrossingState::kCrossing;
  }
  try {
    const auto v = closest_approaching_vehicle(track, scene, p.t, fcfg.approach_lookback, fcfg.kb,
                                               fcfg.sample_tolerance);
    if (v) p.nearest_vehicle_id = v->track->id;
  } catch (const DataError&) {
  }
  return p;
}

long long ceil_tick(double t) { return static_cast<long long>(std::ceil(t * kFeatureRate - 1e-9)); }
long long floor_tick(double t) { return static_cast<long long>(std::floor(t * kFeatureRate + 1e-9)); }

}  // namespace

nlohmann::json to_json(const WarningMessage& w) {
  nlohmann::json j{{"type", "warning"},
                   {"pedestrian_id", w.pedestrian_id},
                   {"t_emit", w.t_emit},
                   {"horizon", w.horizon},
                   {"p_cross", w.p_cross},
                   {"current_state", std::string(to_string(w.current_state))}};
  j["nearest_vehicle_id"] = w.nearest_vehicle_id ? nlohmann::json(*w.nearest_vehicle_id) : nlohmann::json(nullptr);
  return j;
}

void StreamConfig::validate() const {
  if (!(threshold >= 0.0)) throw DataError("stream: threshold must be >= 0");
  if (!(horizon > 0.0)) throw DataError("stream: horizon must be > 0");
  if (!(reorder_window >= 0.0)) throw DataError("stream: reorder window must be >= 0");
  if (!(suppress_seconds >= 0.0) || !(rewarn_delta >= 0.0)) throw DataError("stream: suppression must be >= 0");
  features.validate();
}

StreamConfig stream_config_from_json(const nlohmann::json& j) {
  StreamConfig c;
  try {
    c.threshold = j.value("threshold", c.threshold);
    c.horizon = j.value("horizon", c.horizon);
    c.reorder_window = j.value("reorder_window", c.reorder_window);
    c.suppress_seconds = j.value("suppress_seconds", c.suppress_seconds);
    c.rewarn_delta = j.value("rewarn_delta", c.rewarn_delta);
    if (j.contains("features")) c.features = feature_config_from_json(j.at("features"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("stream config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const StreamConfig& c) {
  return {{"threshold", c.threshold},
          {"horizon", c.horizon},
          {"reorder_window", c.reorder_window},
          {"suppress_seconds", c.suppress_seconds},
          {"rewarn_delta", c.rewarn_delta},
          {"features", to_json(c.features)}};
}

std::optional<WarningMessage> WarningGate::offer(const Prediction& p) {
  if (p.current_state != CrossingState::kNotCrossing || !(p.p_cross >= cfg_.threshold)) return std::nullopt;
  const auto it = last_.find(p.ped_id);
  if (it != last_.end() && p.t - it->second.t < cfg_.suppress_seconds - 1e-9 &&
      p.p_cross < it->second.p + cfg_.rewarn_delta) {
    return std::nullopt;
  }
  last_[p.ped_id] = {p.t, p.p_cross};
  WarningMessage w;
  w.pedestrian_id = p.ped_id;
  w.t_emit = p.t;
  w.horizon = cfg_.horizon;
  w.p_cross = p.p_cross;
  w.current_state = p.current_state;
  w.nearest_vehicle_id = p.nearest_vehicle_id;
  return w;
}

std::vector<Prediction> batch_predict(const Classifier& model, const SceneBundle& scene, const StreamConfig& cfg) {
  cfg.validate();
  const std::size_t head = head_index(model, cfg.horizon);
  const FeatureConfig fcfg = features_for(model, cfg);
  const int slots = model.config().context_slots;
  double t_min = std::numeric_limits<double>::infinity();
  double t_max = -std::numeric_limits<double>::infinity();
  for (const auto& t : scene.tracks) {
    if (t.empty()) continue;
    t_min = std::min(t_min, t.first_time());
    t_max = std::max(t_max, t.last_time());
  }
  std::vector<Prediction> out;
  if (!std::isfinite(t_min)) return out;
  std::map<int, FeatureTimeline> timelines;
  for (long long k = ceil_tick(t_min); k <= floor_tick(t_max); ++k) {
    for (const auto& track : scene.tracks) {
      if (track.cls != EntityClass::kPerson) continue;
      if (!window_end_eligible(track, k, slots, fcfg.sample_tolerance)) continue;
      auto it = timelines.try_emplace(track.id, track.id, scene, fcfg).first;
      out.push_back(predict_at(model, it->second, track, scene, k, slots, head, fcfg));
    }
  }
  return out;
}

std::vector<WarningMessage> warnings_from(const std::vector<Prediction>& predictions, const StreamConfig& cfg) {
  WarningGate gate(cfg);
  std::vector<WarningMessage> out;
  for (const auto& p : predictions) {
    if (auto w = gate.offer(p)) out.push_back(*w);
  }
  return out;
}

StreamProcessor::StreamProcessor(const Classifier& model, const SceneHeader& header, StreamConfig cfg)
    : model_(model),
      cfg_(std::move(cfg)),
      head_(head_index(model, cfg_.horizon)),
      slots_(model.config().context_slots),
      scene_(std::make_unique<SceneBundle>()),
      gate_(cfg_),
      max_seen_(-std::numeric_limits<double>::infinity()),
      committed_(-std::numeric_limits<double>::infinity()) {
  cfg_.validate();
  cfg_.features = features_for(model, cfg_);
  scene_->frame_rate = header.frame_rate;
  scene_->crosswalks = header.crosswalks;
  scene_->semantics = header.semantics;
  scene_->camera = header.camera;
}

void StreamProcessor::record_latency(long long frame, double ms) {
  if (frame == latency_frame_ && !latencies_.empty()) {
    latencies_.back() += ms;
  } else {
    latencies_.push_back(ms);
    latency_frame_ = frame;
  }
}

std::vector<WarningMessage> StreamProcessor::push(const DetectionRecord& record) {
  const auto t0 = Clock::now();
  std::vector<WarningMessage> out;
  const double t = record.detection.timestamp;
  if (!std::isfinite(t)) throw DataError("stream: non-finite timestamp");
  const auto [known, fresh] = classes_.emplace(record.id, record.cls);
  if (!fresh && known->second != record.cls)
    throw DataError("stream: track " + std::to_string(record.id) + " changed class");
  if (t <= committed_) {
    ++dropped_;
    diagnostics_.push_back("dropped late record: id " + std::to_string(record.id) + " t " + std::to_string(t));
  } else {
    buffer_.emplace(std::make_pair(t, record.id), record);
    max_seen_ = std::max(max_seen_, t);
    commit_until(max_seen_ - cfg_.reorder_window);
    if (std::isfinite(committed_)) {
      // A tick is final once every detection within tolerance of it is in.
      const double ready = committed_ - cfg_.features.sample_tolerance - 1e-6;
      process_ticks(static_cast<long long>(std::floor(ready * kFeatureRate)), out);
    }
  }
  const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  record_latency(std::llround(t * scene_->frame_rate), ms);
  return out;
}

std::vector<WarningMessage> StreamProcessor::finish() {
  std::vector<WarningMessage> out;
  if (buffer_.empty() && !std::isfinite(committed_)) return out;
  commit_until(std::numeric_limits<double>::infinity());
  committed_ = max_seen_;
  process_ticks(floor_tick(max_seen_), out);
  return out;
}

void StreamProcessor::commit_until(double watermark) {
  while (!buffer_.empty() && buffer_.begin()->first.first <= watermark) {
    DetectionRecord rec = std::move(buffer_.begin()->second);
    buffer_.erase(buffer_.begin());
    auto& tracks = scene_->tracks;
    auto it = std::lower_bound(tracks.begin(), tracks.end(), rec.id,
                               [](const EntityTrack& tr, int id) { return tr.id < id; });
    if (it == tracks.end() || it->id != rec.id) {
      EntityTrack tr;
      tr.id = rec.id;
      tr.cls = rec.cls;
      it = tracks.insert(it, std::move(tr));
    } else if (it->cls != rec.cls) {
      throw DataError("stream: track " + std::to_string(rec.id) + " changed class");
    }
    if (!it->detections.empty() && !(rec.detection.timestamp > it->detections.back().timestamp)) {
      ++dropped_;
      diagnostics_.push_back("dropped non-monotone record: id " + std::to_string(rec.id) + " t " +
                             std::to_string(rec.detection.timestamp));
      continue;
    }
    it->detections.push_back(std::move(rec.detection));
    if (!next_tick_) next_tick_ = ceil_tick(it->detections.back().timestamp);
  }
  if (std::isfinite(watermark)) committed_ = std::max(committed_, watermark);
}

void StreamProcessor::process_ticks(long long last_tick, std::vector<WarningMessage>& out) {
  if (!next_tick_) return;
  const FeatureConfig& fcfg = cfg_.features;
  for (; *next_tick_ <= last_tick; ++*next_tick_) {
    const long long k = *next_tick_;
    for (const auto& track : scene_->tracks) {
      if (track.cls != EntityClass::kPerson) continue;
      if (!window_end_eligible(track, k, slots_, fcfg.sample_tolerance)) continue;
      auto& tl = timelines_[track.id];
      if (!tl) tl = std::make_unique<FeatureTimeline>(track.id, *scene_, fcfg);
      predictions_.push_back(predict_at(model_, *tl, track, *scene_, k, slots_, head_, fcfg));
      if (auto w = gate_.offer(predictions_.back())) out.push_back(*w);
    }
  }
}

StreamResult stream_predict(std::istream& in, const Classifier& model, const StreamConfig& cfg, std::ostream* sink) {
  std::string line;
  std::size_t line_no = 0;
  std::unique_ptr<StreamProcessor> proc;
  StreamResult result;
  auto emit = [&](const std::vector<WarningMessage>& ws) {
    for (const auto& w : ws) {
      if (sink) *sink << to_json(w).dump() << '\n' << std::flush;
      result.warnings.push_back(w);
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("line " + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    try {
      if (!proc) {
        proc = std::make_unique<StreamProcessor>(model, header_from_json(record), cfg);
        continue;
      }
      emit(proc->push(detection_from_json(record)));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!proc) throw DataError("stream has no meta record");
  emit(proc->finish());
  result.predictions = proc->predictions();
  result.frame_latencies_ms = proc->frame_latencies_ms();
  result.diagnostics = proc->diagnostics();
  return result;
}

StreamResult stream_scene(const SceneBundle& scene, const Classifier& model, const StreamConfig& cfg) {
  SceneHeader header;
  header.frame_rate = scene.frame_rate;
  header.crosswalks = scene.crosswalks;
  header.semantics = scene.semantics;
  header.camera = scene.camera;
  std::vector<DetectionRecord> records;
  for (const auto& t : scene.tracks) {
    for (const auto& d : t.detections) records.push_back({t.id, t.cls, d});
  }
  std::stable_sort(records.begin(), records.end(), [](const DetectionRecord& a, const DetectionRecord& b) {
    return a.detection.timestamp < b.detection.timestamp ||
           (a.detection.timestamp == b.detection.timestamp && a.id < b.id);
  });
  StreamProcessor proc(model, header, cfg);
  StreamResult result;
  for (const auto& r : records) {
    for (auto& w : proc.push(r)) result.warnings.push_back(w);
  }
  for (auto& w : proc.finish()) result.warnings.push_back(w);
  result.predictions = proc.predictions();
  result.frame_latencies_ms = proc.frame_latencies_ms();
  result.diagnostics = proc.diagnostics();
  return result;
}

}  // namespace p2cws
