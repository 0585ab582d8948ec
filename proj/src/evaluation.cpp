#include "p2cws/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "p2cws/errors.hpp"
#include "p2cws/geometry.hpp"

namespace p2cws {

namespace {

void check_errors(const std::vector<double>& errors, const char* what) {
  if (errors.empty()) throw DataError(std::string(what) + ": empty error list");
  for (double e : errors) {
    if (!(e >= 0.0)) throw DataError(std::string(what) + ": errors must be non-negative");
  }
}

BinaryMetrics finish(BinaryMetrics m) {
  const double n = static_cast<double>(m.tp + m.fp + m.fn + m.tn);
  m.accuracy = n > 0 ? static_cast<double>(m.tp + m.tn) / n : 0.0;
  const std::size_t denom = 2 * m.tp + m.fp + m.fn;
  m.f1 = denom > 0 ? 2.0 * static_cast<double>(m.tp) / static_cast<double>(denom) : 1.0;
  return m;
}

void count(BinaryMetrics& m, int pred, int gt) {
  if (pred == 1 && gt == 1) ++m.tp;
  else if (pred == 1) ++m.fp;
  else if (gt == 1) ++m.fn;
  else ++m.tn;
}

using Clock = std::chrono::steady_clock;

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

double accuracy_at(const std::vector<double>& errors, double threshold) {
  check_errors(errors, "accuracy_at");
  std::size_t hit = 0;
  for (double e : errors) hit += e <= threshold;
  return 100.0 * static_cast<double>(hit) / static_cast<double>(errors.size());
}

double mean_absolute_error(const std::vector<double>& errors) {
  check_errors(errors, "mean_absolute_error");
  double sum = 0.0;
  for (double e : errors) sum += e;
  return sum / static_cast<double>(errors.size());
}

std::vector<std::size_t> error_histogram(const std::vector<double>& errors, double bin_width, double max) {
  if (!(bin_width > 0.0) || !(max > 0.0)) throw DataError("histogram: bin width and range must be positive");
  const auto bins = static_cast<std::size_t>(std::ceil(max / bin_width - 1e-12));
  std::vector<std::size_t> out(bins, 0);
  for (double e : errors) {
    if (!(e >= 0.0) || e > max) throw DataError("histogram: error outside [0, max]");
    out[std::min(bins - 1, static_cast<std::size_t>(e / bin_width))]++;
  }
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("percentile: empty input");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

OrientationReport evaluate_orientation(const std::vector<OrientationSample>& samples, double axis_offset_deg,
                                       int angle_bins) {
  if (samples.empty()) throw DataError("evaluate_orientation: no samples");
  if (angle_bins < 1) throw DataError("evaluate_orientation: angle_bins must be >= 1");
  OrientationReport r;
  r.per_angle_error_sum.assign(static_cast<std::size_t>(angle_bins), 0.0);
  r.per_angle_count.assign(static_cast<std::size_t>(angle_bins), 0);
  std::vector<double> predicted(samples.size());
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    predicted[i] = orientation_to_angle(body_orientation(samples[i].pose), axis_offset_deg);
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  r.fps = secs > 0.0 ? static_cast<double>(samples.size()) / secs : 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double e = angular_error(predicted[i], samples[i].angle);
    r.errors.push_back(e);
    const auto bin = std::min(static_cast<std::size_t>(angle_bins - 1),
                              static_cast<std::size_t>(wrap_degrees(samples[i].angle) / (360.0 / angle_bins)));
    r.per_angle_error_sum[bin] += e;
    r.per_angle_count[bin]++;
  }
  r.acc_22_5 = accuracy_at(r.errors, 22.5);
  r.acc_45 = accuracy_at(r.errors, 45.0);
  r.mae = mean_absolute_error(r.errors);
  return r;
}

nlohmann::json to_json(const OrientationReport& r) {
  nlohmann::json per = nlohmann::json::array();
  const double width = 360.0 / static_cast<double>(r.per_angle_count.size());
  for (std::size_t i = 0; i < r.per_angle_count.size(); ++i) {
    per.push_back({{"angle_from", width * static_cast<double>(i)},
                   {"count", r.per_angle_count[i]},
                   {"mae", r.per_angle_count[i] ? r.per_angle_error_sum[i] / static_cast<double>(r.per_angle_count[i])
                                                : 0.0}});
  }
  return {{"acc_22_5", r.acc_22_5}, {"acc_45", r.acc_45}, {"mae", r.mae},      {"fps", r.fps},
          {"samples", r.errors.size()}, {"per_angle", per}, {"histogram_10deg", error_histogram(r.errors)}};
}

IntentionReport classification_metrics(const std::vector<int>& preds, const std::vector<int>& gts) {
  if (preds.size() != gts.size()) throw DataError("classification_metrics: length mismatch");
  if (preds.empty()) throw DataError("classification_metrics: empty input");
  BinaryMetrics m;
  for (std::size_t i = 0; i < preds.size(); ++i) count(m, preds[i] != 0, gts[i] != 0);
  IntentionReport r;
  static_cast<BinaryMetrics&>(r) = finish(m);
  return r;
}

IntentionReport evaluate_intention(const Classifier& model, const std::vector<LabeledWindow>& set) {
  if (set.empty()) throw DataError("evaluate_intention: empty dataset");
  const auto& heads = model.config().heads;
  BinaryMetrics all;
  std::vector<BinaryMetrics> per(heads.size());
  for (const auto& w : set) {
    const std::vector<int> gt = labels_for(w, heads);
    const auto dec = predict_intention(model, w.window);
    for (std::size_t h = 0; h < heads.size(); ++h) {
      count(all, dec[h].crossing ? 1 : 0, gt[h]);
      count(per[h], dec[h].crossing ? 1 : 0, gt[h]);
    }
  }
  IntentionReport r;
  static_cast<BinaryMetrics&>(r) = finish(all);
  for (std::size_t h = 0; h < heads.size(); ++h) r.per_horizon.emplace_back(heads[h], finish(per[h]));
  return r;
}

nlohmann::json to_json(const BinaryMetrics& m) {
  return {{"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"tn", m.tn}, {"accuracy", m.accuracy}, {"f1", m.f1}};
}

nlohmann::json to_json(const IntentionReport& r) {
  nlohmann::json j = to_json(static_cast<const BinaryMetrics&>(r));
  nlohmann::json per = nlohmann::json::array();
  for (const auto& [h, m] : r.per_horizon) {
    nlohmann::json e = to_json(m);
    e["horizon"] = h;
    per.push_back(e);
  }
  j["per_horizon"] = per;
  return j;
}

std::string_view to_string(Stage s) { return s == Stage::kOrientation ? "orientation" : "intention"; }

Stage parse_stage(std::string_view name) {
  if (name == "orientation") return Stage::kOrientation;
  if (name == "intention") return Stage::kIntention;
  throw DataError("unknown stage: " + std::string(name));
}

ThroughputReport benchmark_throughput(Stage stage, const SceneBundle& workload, int repetitions,
                                      const Classifier* model, const FeatureConfig& cfg, int warmup) {
  if (repetitions < 1) throw DataError("benchmark: repetitions must be >= 1");
  ThroughputReport r;
  r.stage = stage;
  r.repetitions = repetitions;

  std::set<long long> frames;
  for (const auto& t : workload.tracks) {
    for (const auto& d : t.detections) frames.insert(std::llround(d.timestamp * workload.frame_rate));
  }
  if (frames.empty()) throw DataError("benchmark: empty workload");

  std::function<std::size_t()> run;
  if (stage == Stage::kOrientation) {
    r.frames = frames.size();
    run = [&workload]() {
      std::size_t n = 0;
      double sink = 0.0;
      for (const auto& t : workload.tracks) {
        if (t.cls != EntityClass::kPerson) continue;
        for (const auto& d : t.detections) {
          if (!d.pose) continue;
          sink += orientation_to_angle(body_orientation(*d.pose));
          ++n;
        }
      }
      if (sink < 0.0) ++n;  // keeps the loop observable
      return n;
    };
  } else {
    if (model == nullptr) throw DataError("benchmark: intention stage needs a model");
    const int slots = model->config().context_slots;
    FeatureConfig fcfg = cfg;
    fcfg.with_state = model->config().input_dim == static_cast<int>(kBaseFeatureDim) + 1;
    double t_min = 1e300;
    double t_max = -1e300;
    for (const auto& t : workload.tracks) {
      if (t.empty()) continue;
      t_min = std::min(t_min, t.first_time());
      t_max = std::max(t_max, t.last_time());
    }
    const long long k0 = static_cast<long long>(std::ceil(t_min * kFeatureRate - 1e-9));
    const long long k1 = static_cast<long long>(std::floor(t_max * kFeatureRate + 1e-9));
    r.frames = static_cast<std::size_t>(std::max(0LL, k1 - k0 + 1));
    run = [&workload, model, fcfg, slots, k0, k1]() {
      std::size_t n = 0;
      for (const auto& t : workload.tracks) {
        if (t.cls != EntityClass::kPerson) continue;
        FeatureTimeline tl(t.id, workload, fcfg);
        for (long long k = k0; k <= k1; ++k) {
          if (!window_end_eligible(t, k, slots, fcfg.sample_tolerance)) continue;
          const FeatureWindow w = tl.window(k, slots);
          model->forward(w);
          ++n;
        }
      }
      return n;
    };
  }
  if (r.frames < 100) throw DataError("benchmark: workload needs at least 100 frames");

  for (int i = 0; i < warmup; ++i) run();
  std::vector<double> item_rates;
  for (int i = 0; i < repetitions; ++i) {
    const auto t0 = Clock::now();
    r.items = run();
    const double secs = std::max(1e-12, std::chrono::duration<double>(Clock::now() - t0).count());
    r.fps_samples.push_back(static_cast<double>(r.frames) / secs);
    item_rates.push_back(static_cast<double>(r.items) / secs);
  }
  r.median_fps = percentile(r.fps_samples, 50.0);
  r.p5_fps = percentile(r.fps_samples, 5.0);
  r.p95_fps = percentile(r.fps_samples, 95.0);
  r.median_items_per_second = percentile(item_rates, 50.0);
  return r;
}

nlohmann::json to_json(const ThroughputReport& r) {
  return {{"stage", std::string(to_string(r.stage))},
          {"frames", r.frames},
          {"items", r.items},
          {"repetitions", r.repetitions},
          {"median_fps", r.median_fps},
          {"p5_fps", r.p5_fps},
          {"p95_fps", r.p95_fps},
          {"median_items_per_second", r.median_items_per_second}};
}

// --- ablation ---------------------------------------------------------------

std::string AblationCell::key() const {
  std::ostringstream os;
  os << to_string(architecture) << "/L" << n_layers << "/H" << n_hidden << "/c" << context << "/h" << horizon
     << (multi_task ? "/multi" : "/single") << (with_state ? "/state" : "/nostate");
  return os.str();
}

std::vector<AblationCell> AblationGrid::cells() const {
  std::vector<AblationCell> out;
  for (bool state : with_state)
    for (bool multi : multi_task)
      for (double c : contexts)
        for (double h : horizons)
          for (Architecture a : architectures)
            for (int l : n_layers)
              for (int n : n_hidden) out.push_back({a, l, n, c, h, multi, state});
  return out;
}

void AblationGrid::validate() const {
  if (architectures.empty() || n_layers.empty() || n_hidden.empty() || contexts.empty() || horizons.empty() ||
      multi_task.empty() || with_state.empty()) {
    throw DataError("ablation grid: every axis needs at least one value");
  }
  for (int l : n_layers)
    if (l < 1) throw DataError("ablation grid: n_layers must be >= 1");
  for (int h : n_hidden)
    if (h < 1) throw DataError("ablation grid: n_hidden must be >= 1");
  for (double c : contexts)
    if (!(c > 0.0)) throw DataError("ablation grid: context must be > 0");
  for (double h : horizons)
    if (!(h > 0.0)) throw DataError("ablation grid: horizon must be > 0");
  if (std::find(multi_task.begin(), multi_task.end(), true) != multi_task.end()) {
    for (double h : horizons) {
      if (std::find(multi_task_heads.begin(), multi_task_heads.end(), h) == multi_task_heads.end()) {
        throw DataError("ablation grid: multi-task heads must include every horizon");
      }
    }
  }
  if (stride < 1) throw DataError("ablation grid: stride must be >= 1");
  if (threads < 1) throw DataError("ablation grid: threads must be >= 1");
  train.validate();
}

AblationGrid ablation_grid_from_json(const nlohmann::json& j) {
  AblationGrid g;
  try {
    if (j.contains("architectures")) {
      g.architectures.clear();
      for (const auto& a : j.at("architectures")) g.architectures.push_back(parse_architecture(a.get<std::string>()));
    }
    if (j.contains("n_layers")) g.n_layers = j.at("n_layers").get<std::vector<int>>();
    if (j.contains("n_hidden")) g.n_hidden = j.at("n_hidden").get<std::vector<int>>();
    if (j.contains("contexts")) g.contexts = j.at("contexts").get<std::vector<double>>();
    if (j.contains("horizons")) g.horizons = j.at("horizons").get<std::vector<double>>();
    if (j.contains("multi_task")) g.multi_task = j.at("multi_task").get<std::vector<bool>>();
    if (j.contains("with_state")) g.with_state = j.at("with_state").get<std::vector<bool>>();
    if (j.contains("multi_task_heads")) g.multi_task_heads = j.at("multi_task_heads").get<std::vector<double>>();
    if (j.contains("train")) g.train = train_config_from_json(j.at("train"));
    g.base_seed = j.value("base_seed", g.base_seed);
    g.stride = j.value("stride", g.stride);
    g.threads = j.value("threads", g.threads);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("ablation grid: ") + e.what());
  }
  g.validate();
  return g;
}

nlohmann::json to_json(const AblationGrid& g) {
  nlohmann::json archs = nlohmann::json::array();
  for (Architecture a : g.architectures) archs.push_back(std::string(to_string(a)));
  return {{"architectures", archs},      {"n_layers", g.n_layers},
          {"n_hidden", g.n_hidden},      {"contexts", g.contexts},
          {"horizons", g.horizons},      {"multi_task", g.multi_task},
          {"with_state", g.with_state},  {"multi_task_heads", g.multi_task_heads},
          {"train", to_json(g.train)},   {"base_seed", g.base_seed},
          {"stride", g.stride},          {"threads", g.threads}};
}

std::uint64_t cell_seed(std::uint64_t base_seed, const AblationCell& c) {
  std::uint64_t h = splitmix64(base_seed);
  auto mix = [&h](std::uint64_t v) { h = splitmix64(h ^ v); };
  mix(static_cast<std::uint64_t>(c.architecture));
  mix(static_cast<std::uint64_t>(c.n_layers));
  mix(static_cast<std::uint64_t>(c.n_hidden));
  mix(static_cast<std::uint64_t>(std::llround(c.context * 1000.0)));
  mix(static_cast<std::uint64_t>(std::llround(c.horizon * 1000.0)));
  mix(c.multi_task ? 1u : 0u);
  mix(c.with_state ? 1u : 0u);
  return h;
}

std::vector<AblationResult> run_ablation(const AblationGrid& grid, const std::vector<SplitScene>& scenes,
                                         const FeatureConfig& base,
                                         const std::function<void(const AblationResult&)>& progress) {
  grid.validate();
  for (const char* split : {"train", "val", "test"}) {
    if (std::none_of(scenes.begin(), scenes.end(), [&](const SplitScene& s) { return s.split == split; })) {
      throw DataError(std::string("ablation: dataset has no ") + split + " scenes");
    }
  }

  // Every window carries labels for all horizons any cell may ask for.
  std::set<double> label_set(grid.horizons.begin(), grid.horizons.end());
  if (std::find(grid.multi_task.begin(), grid.multi_task.end(), true) != grid.multi_task.end()) {
    label_set.insert(grid.multi_task_heads.begin(), grid.multi_task_heads.end());
  }
  const std::vector<double> label_horizons(label_set.begin(), label_set.end());

  struct Split {
    std::vector<LabeledWindow> train, val, test;
  };
  std::map<std::pair<double, bool>, Split> windows;
  for (double c : grid.contexts) {
    for (bool state : grid.with_state) {
      FeatureConfig cfg = base;
      cfg.with_state = state;
      WindowSpec spec;
      spec.context = c;
      spec.horizons = label_horizons;
      spec.stride = grid.stride;
      Split& sp = windows[{c, state}];
      for (const auto& s : scenes) {
        for (const auto& t : s.scene.tracks) {
          if (t.cls != EntityClass::kPerson) continue;
          std::vector<LabeledWindow> ws;
          try {
            ws = build_windows(t, s.scene, spec, cfg, s.name);
          } catch (const DataError&) {
            continue;  // track too short for this context and horizon
          }
          auto& dst = s.split == "train" ? sp.train : (s.split == "val" ? sp.val : sp.test);
          for (auto& w : ws) {
            w.split = s.split;
            dst.push_back(std::move(w));
          }
        }
      }
    }
  }

  const std::vector<AblationCell> cells = grid.cells();
  std::vector<AblationResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto worker = [&]() {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const AblationCell& cell = cells[i];
      AblationResult& r = results[i];
      r.cell = cell;
      r.seed = cell_seed(grid.base_seed, cell);
      const Split& sp = windows.at({cell.context, cell.with_state});
      r.train_windows = sp.train.size();
      r.test_windows = sp.test.size();
      ClassifierConfig cfg;
      cfg.architecture = cell.architecture;
      cfg.n_layers = cell.n_layers;
      cfg.n_hidden = cell.n_hidden;
      cfg.input_dim = static_cast<int>(kBaseFeatureDim) + (cell.with_state ? 1 : 0);
      cfg.context_slots = slot_count(cell.context);
      cfg.heads = cell.multi_task ? grid.multi_task_heads : std::vector<double>{cell.horizon};
      cfg.seed = r.seed;
      try {
        cfg.validate();
        r.param_count = count_parameters(cfg);
        const Classifier model = train(sp.train, sp.val, cfg, grid.train);
        r.epochs = static_cast<int>(model.training_log.size());
        r.best_epoch = model.best_epoch;
        const IntentionReport rep = evaluate_intention(model, sp.test);
        const auto head = std::find(cfg.heads.begin(), cfg.heads.end(), cell.horizon) - cfg.heads.begin();
        const BinaryMetrics& m = rep.per_horizon[static_cast<std::size_t>(head)].second;
        r.accuracy = m.accuracy;
        r.f1 = m.f1;
      } catch (const std::exception& e) {
        r.error = e.what();
      }
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(r);
      }
    }
  };
  const int n_threads = std::min<int>(grid.threads, static_cast<int>(cells.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return results;
}

void write_results_csv(const std::vector<AblationResult>& results, std::ostream& out) {
  out << "architecture,n_layers,n_hidden,context,horizon,multi_task,with_state,seed,n_param,accuracy,f1,epochs,"
         "best_epoch,train_windows,test_windows,error\n";
  for (const auto& r : results) {
    const auto& c = r.cell;
    out << to_string(c.architecture) << ',' << c.n_layers << ',' << c.n_hidden << ',' << fmt(c.context) << ','
        << fmt(c.horizon) << ',' << (c.multi_task ? 1 : 0) << ',' << (c.with_state ? 1 : 0) << ',' << r.seed << ','
        << r.param_count << ',' << fmt(r.accuracy) << ',' << fmt(r.f1) << ',' << r.epochs << ',' << r.best_epoch
        << ',' << r.train_windows << ',' << r.test_windows << ',';
    if (r.error) {
      std::string e = *r.error;
      std::replace(e.begin(), e.end(), ',', ';');
      std::replace(e.begin(), e.end(), '\n', ' ');
      out << e;
    }
    out << '\n';
  }
}

void write_table_iv_csv(const std::vector<AblationResult>& results, std::ostream& out) {
  struct Row {
    std::size_t params = 0;
    std::optional<std::pair<double, double>> with, without;
  };
  using Key = std::tuple<double, double, bool, int, int, int>;
  std::map<Key, Row> rows;
  std::vector<Key> order;
  for (const auto& r : results) {
    const auto& c = r.cell;
    const Key k{c.context, c.horizon, c.multi_task, static_cast<int>(c.architecture), c.n_layers, c.n_hidden};
    if (!rows.contains(k)) order.push_back(k);
    Row& row = rows[k];
    if (!r.error) {
      (c.with_state ? row.with : row.without) = std::make_pair(r.accuracy, r.f1);
    }
    if (r.param_count) row.params = r.param_count;
  }
  out << "context,horizon,multi_task,architecture,n_layers,n_hidden,n_param,accuracy_with_state,f1_with_state,"
         "accuracy_without_state,f1_without_state\n";
  auto cell = [](const std::optional<std::pair<double, double>>& v) {
    return v ? fmt(v->first) + "," + fmt(v->second) : std::string(",");
  };
  for (const Key& k : order) {
    const Row& row = rows.at(k);
    out << fmt(std::get<0>(k)) << ',' << fmt(std::get<1>(k)) << ',' << (std::get<2>(k) ? 1 : 0) << ','
        << to_string(static_cast<Architecture>(std::get<3>(k))) << ',' << std::get<4>(k) << ',' << std::get<5>(k)
        << ',' << row.params << ',' << cell(row.with) << ',' << cell(row.without) << '\n';
  }
}

void write_fig6_csv(const std::vector<AblationResult>& results, std::ostream& out) {
  out << "architecture,n_layers,n_hidden,multi_task,with_state,context,horizon,accuracy,f1\n";
  for (const auto& r : results) {
    if (r.error) continue;
    const auto& c = r.cell;
    out << to_string(c.architecture) << ',' << c.n_layers << ',' << c.n_hidden << ',' << (c.multi_task ? 1 : 0)
        << ',' << (c.with_state ? 1 : 0) << ',' << fmt(c.context) << ',' << fmt(c.horizon) << ','
        << fmt(r.accuracy) << ',' << fmt(r.f1) << '\n';
  }
}

nlohmann::json to_json(const AblationResult& r) {
  const auto& c = r.cell;
  nlohmann::json j{{"key", c.key()},
                   {"architecture", std::string(to_string(c.architecture))},
                   {"n_layers", c.n_layers},
                   {"n_hidden", c.n_hidden},
                   {"context", c.context},
                   {"horizon", c.horizon},
                   {"multi_task", c.multi_task},
                   {"with_state", c.with_state},
                   {"seed", r.seed},
                   {"n_param", r.param_count},
                   {"accuracy", r.accuracy},
                   {"f1", r.f1},
                   {"epochs", r.epochs},
                   {"best_epoch", r.best_epoch},
                   {"train_windows", r.train_windows},
                   {"test_windows", r.test_windows}};
  j["error"] = r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr);
  return j;
}

void write_ablation_reports(const std::vector<AblationResult>& results, const AblationGrid& grid,
                            const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&dir](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw DataError("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("results.csv");
    write_results_csv(results, f);
  }
  {
    auto f = open("table_iv.csv");
    write_table_iv_csv(results, f);
  }
  {
    auto f = open("fig6.csv");
    write_fig6_csv(results, f);
  }
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : results) rows.push_back(to_json(r));
  auto f = open("results.json");
  f << nlohmann::json{{"grid", to_json(grid)}, {"results", rows}}.dump(2) << '\n';
}

}  // namespace p2cws
