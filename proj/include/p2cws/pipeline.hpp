#pragma once

#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "p2cws/classifiers.hpp"
#include "p2cws/features.hpp"
#include "p2cws/scene_model.hpp"

namespace p2cws {

struct WarningMessage {
  int pedestrian_id = 0;
  double t_emit = 0.0;
  double horizon = 1.5;
  double p_cross = 0.0;
  CrossingState current_state = CrossingState::kNotCrossing;
  std::optional<int> nearest_vehicle_id;
};

nlohmann::json to_json(const WarningMessage& w);

// Model output for one pedestrian at one 15 Hz tick.
struct Prediction {
  int ped_id = 0;
  long long tick = 0;
  double t = 0.0;
  double p_cross = 0.0;  // at the warning horizon
  // Unknown states (unlabeled streams) count as not crossing.
  CrossingState current_state = CrossingState::kNotCrossing;
  std::optional<int> nearest_vehicle_id;
};

struct StreamConfig {
  double threshold = 0.5;
  double horizon = 1.5;
  double reorder_window = 0.2;  // seconds of buffering for late records
  double suppress_seconds = 1.0;
  double rewarn_delta = 0.1;
  FeatureConfig features;  // with_state follows the model

  void validate() const;
};

StreamConfig stream_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StreamConfig& cfg);

// Threshold, state gate and re-warn suppression over predictions fed in
// (tick, id) order.
class WarningGate {
 public:
  explicit WarningGate(const StreamConfig& cfg) : cfg_(cfg) {}
  std::optional<WarningMessage> offer(const Prediction& p);

 private:
  struct Last {
    double t;
    double p;
  };
  StreamConfig cfg_;
  std::map<int, Last> last_;
};

// Predictions for every pedestrian at every tick where a window may end,
// in (tick, id) order.
std::vector<Prediction> batch_predict(const Classifier& model, const SceneBundle& scene, const StreamConfig& cfg);
std::vector<WarningMessage> warnings_from(const std::vector<Prediction>& predictions, const StreamConfig& cfg);

class StreamProcessor {
 public:
  StreamProcessor(const Classifier& model, const SceneHeader& header, StreamConfig cfg);
  StreamProcessor(const StreamProcessor&) = delete;
  StreamProcessor& operator=(const StreamProcessor&) = delete;

  // Buffers one record and processes every tick the watermark has passed.
  // Records older than the watermark are dropped with a diagnostic.
  // Throws DataError on a class change for a known id.
  std::vector<WarningMessage> push(const DetectionRecord& record);

  // Flushes the buffer and processes the remaining ticks.
  std::vector<WarningMessage> finish();

  const std::vector<Prediction>& predictions() const { return predictions_; }
  // Processing time per input frame, milliseconds.
  const std::vector<double>& frame_latencies_ms() const { return latencies_; }
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }
  std::size_t dropped() const { return dropped_; }
  const SceneBundle& scene() const { return *scene_; }

 private:
  void commit_until(double watermark);
  void process_ticks(long long last_tick, std::vector<WarningMessage>& out);
  void record_latency(long long frame, double ms);

  const Classifier& model_;
  StreamConfig cfg_;
  std::size_t head_;
  int slots_;
  std::unique_ptr<SceneBundle> scene_;
  std::multimap<std::pair<double, int>, DetectionRecord> buffer_;
  std::map<int, std::unique_ptr<FeatureTimeline>> timelines_;
  std::map<int, EntityClass> classes_;
  WarningGate gate_;
  double max_seen_;
  double committed_;
  std::optional<long long> next_tick_;
  std::vector<Prediction> predictions_;
  std::vector<double> latencies_;
  long long latency_frame_ = -1;
  std::vector<std::string> diagnostics_;
  std::size_t dropped_ = 0;
};

struct StreamResult {
  std::vector<WarningMessage> warnings;
  std::vector<Prediction> predictions;
  std::vector<double> frame_latencies_ms;
  std::vector<std::string> diagnostics;
};

// Runs a whole track-file stream (header record first). When `sink` is set,
// each warning is written to it as one JSON line as soon as it is emitted.
StreamResult stream_predict(std::istream& in, const Classifier& model, const StreamConfig& cfg,
                            std::ostream* sink = nullptr);

// Replays a scene as a time-ordered record stream.
StreamResult stream_scene(const SceneBundle& scene, const Classifier& model, const StreamConfig& cfg);

}  // namespace p2cws
