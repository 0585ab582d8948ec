#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "p2cws/classifiers.hpp"
#include "p2cws/features.hpp"
#include "p2cws/synthetic.hpp"

namespace p2cws {

// --- orientation metrics ----------------------------------------------------

// Percentage of errors at most `threshold` degrees. Throws DataError on an
// empty list or a negative error.
double accuracy_at(const std::vector<double>& errors, double threshold);
double mean_absolute_error(const std::vector<double>& errors);

// Counts per bin of width `bin_width` over [0, max]; the value `max` falls
// into the last bin.
std::vector<std::size_t> error_histogram(const std::vector<double>& errors, double bin_width = 10.0,
                                         double max = 180.0);

// Linear-interpolated percentile, q in [0, 100].
double percentile(std::vector<double> values, double q);

struct OrientationReport {
  double acc_22_5 = 0.0;
  double acc_45 = 0.0;
  double mae = 0.0;
  double fps = 0.0;
  std::vector<double> errors;
  // Ground-truth angle bins of 360 / size() degrees.
  std::vector<double> per_angle_error_sum;
  std::vector<std::size_t> per_angle_count;
};

OrientationReport evaluate_orientation(const std::vector<OrientationSample>& samples, double axis_offset_deg = 0.0,
                                       int angle_bins = 8);
nlohmann::json to_json(const OrientationReport& r);

// --- intention metrics ------------------------------------------------------

struct BinaryMetrics {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  double accuracy = 0.0;
  double f1 = 0.0;  // 1 when there are no positives at all and none predicted
};

struct IntentionReport : BinaryMetrics {
  std::vector<std::pair<double, BinaryMetrics>> per_horizon;
};

// Crossing (1) is the positive class.
IntentionReport classification_metrics(const std::vector<int>& preds, const std::vector<int>& gts);

// Pools every head of `model` over `set`, with a per-horizon breakdown.
IntentionReport evaluate_intention(const Classifier& model, const std::vector<LabeledWindow>& set);
nlohmann::json to_json(const BinaryMetrics& m);
nlohmann::json to_json(const IntentionReport& r);

// --- throughput -------------------------------------------------------------

enum class Stage { kOrientation, kIntention };

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view name);

struct ThroughputReport {
  Stage stage = Stage::kOrientation;
  std::size_t frames = 0;  // per repetition (30 Hz frames or 15 Hz ticks)
  std::size_t items = 0;   // poses or windows per repetition
  int repetitions = 0;
  double median_fps = 0.0;
  double p5_fps = 0.0;
  double p95_fps = 0.0;
  double median_items_per_second = 0.0;
  std::vector<double> fps_samples;
};

// Wall-clock throughput of one pipeline stage over `workload`, excluding
// file I/O; `warmup` untimed repetitions run first. The intention stage
// recomputes features from scratch each repetition and needs a model.
ThroughputReport benchmark_throughput(Stage stage, const SceneBundle& workload, int repetitions,
                                      const Classifier* model = nullptr, const FeatureConfig& cfg = {},
                                      int warmup = 1);
nlohmann::json to_json(const ThroughputReport& r);

// --- ablation ---------------------------------------------------------------

struct AblationCell {
  Architecture architecture = Architecture::kGRU;
  int n_layers = 2;
  int n_hidden = 32;
  double context = 0.5;
  double horizon = 1.5;
  bool multi_task = false;
  bool with_state = true;

  std::string key() const;
};

struct AblationGrid {
  std::vector<Architecture> architectures{Architecture::kFFNN, Architecture::kGRU, Architecture::kTransformer};
  std::vector<int> n_layers{2, 3, 4};
  std::vector<int> n_hidden{32, 64, 128};
  std::vector<double> contexts{0.5};
  std::vector<double> horizons{1.5};
  std::vector<bool> multi_task{false};
  std::vector<bool> with_state{true, false};
  std::vector<double> multi_task_heads{0.5, 1.0, 1.5, 2.0};
  TrainConfig train;
  std::uint64_t base_seed = 0;
  int stride = 1;   // window stride in 15 Hz ticks
  int threads = 1;

  // Cartesian product in a fixed order.
  std::vector<AblationCell> cells() const;
  void validate() const;
};

AblationGrid ablation_grid_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AblationGrid& g);

// Seed of a cell: a hash of the base seed and the cell coordinates.
std::uint64_t cell_seed(std::uint64_t base_seed, const AblationCell& cell);

struct AblationResult {
  AblationCell cell;
  std::uint64_t seed = 0;
  std::size_t param_count = 0;
  double accuracy = 0.0;
  double f1 = 0.0;
  int epochs = 0;
  int best_epoch = 0;
  std::size_t train_windows = 0;
  std::size_t test_windows = 0;
  std::optional<std::string> error;
};

struct SplitScene {
  std::string name;
  std::string split;  // train / val / test
  SceneBundle scene;
};

// Trains and tests every cell (concurrently across grid.threads workers).
// Results come back in cells() order; a failing cell records its error and
// the run continues.
std::vector<AblationResult> run_ablation(const AblationGrid& grid, const std::vector<SplitScene>& scenes,
                                         const FeatureConfig& base = {},
                                         const std::function<void(const AblationResult&)>& progress = {});

// One row per cell.
void write_results_csv(const std::vector<AblationResult>& results, std::ostream& out);
// Rows per model size with with/without-state accuracy and F1 side by side.
void write_table_iv_csv(const std::vector<AblationResult>& results, std::ostream& out);
// Long-format accuracy against context length and horizon.
void write_fig6_csv(const std::vector<AblationResult>& results, std::ostream& out);
nlohmann::json to_json(const AblationResult& r);

// results.csv, table_iv.csv, fig6.csv and results.json under `dir`.
void write_ablation_reports(const std::vector<AblationResult>& results, const AblationGrid& grid,
                            const std::filesystem::path& dir);

}  // namespace p2cws
