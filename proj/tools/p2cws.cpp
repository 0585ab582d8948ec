// p2cws command-line entry point.
#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "p2cws/classifiers.hpp"
#include "p2cws/errors.hpp"
#include "p2cws/evaluation.hpp"
#include "p2cws/features.hpp"
#include "p2cws/pipeline.hpp"
#include "p2cws/scene_model.hpp"
#include "p2cws/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace p2cws;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out;
  json config = json::object();

  json section(const std::string& name) const {
    return config.contains(name) ? config.at(name) : json::object();
  }
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json_out(const json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  std::ofstream f(out);
  if (!f) throw DataError("cannot write " + out);
  f << j.dump(2) << '\n';
}

WindowSpec window_spec_from(const json& j) {
  WindowSpec w;
  if (j.contains("context")) w.context = j.at("context").get<double>();
  if (j.contains("horizons")) w.horizons = j.at("horizons").get<std::vector<double>>();
  if (j.contains("horizon")) w.horizons = {j.at("horizon").get<double>()};
  if (j.contains("stride")) w.stride = j.at("stride").get<int>();
  if (w.stride < 1) throw DataError("windows: stride must be >= 1");
  return w;
}

FeatureConfig features_from(const Globals& g) {
  const json j = g.section("features");
  return j.empty() ? FeatureConfig{} : feature_config_from_json(j);
}

// Scene inputs: dataset directories (with manifest.json), manifests or
// single track files. Splits come from the manifest, "train" otherwise.
std::vector<SplitScene> load_scenes(const std::vector<std::string>& inputs) {
  std::vector<SplitScene> out;
  for (const auto& in : inputs) {
    fs::path p(in);
    fs::path manifest;
    if (fs::is_directory(p)) {
      manifest = p / "manifest.json";
    } else if (p.filename() == "manifest.json") {
      manifest = p;
    }
    if (!manifest.empty()) {
      if (!fs::exists(manifest)) throw DataError("no manifest.json in " + p.string());
      for (const auto& e : read_manifest(manifest)) {
        out.push_back({e.name, e.split, load_scene(manifest.parent_path() / e.file)});
      }
    } else {
      if (!fs::exists(p)) throw DataError("no such file: " + p.string());
      out.push_back({p.stem().string(), "train", load_scene(p)});
    }
  }
  if (out.empty()) throw DataError("no scenes given");
  return out;
}

// --- synth -------------------------------------------------------------------

int cmd_synth(const Globals& g, const std::string& spec_file) {
  json j = spec_file.empty() ? g.section("dataset") : read_json_file(spec_file);
  DatasetSpec spec = dataset_spec_from_json(j);
  if (g.seed) spec.seed = *g.seed;
  spec.validate();
  if (g.out.empty()) throw UsageError("synth: --out <dir> is required");
  const auto scenes = generate_dataset(spec);
  write_dataset_dir(scenes, spec, g.out);
  std::map<std::string, int> per_split;
  for (const auto& s : scenes) ++per_split[s.split];
  std::cerr << "synth: " << scenes.size() << " scenes (train " << per_split["train"] << ", val "
            << per_split["val"] << ", test " << per_split["test"] << ") -> " << g.out << '\n';
  return 0;
}

// --- extract -----------------------------------------------------------------

struct ExtractOptions {
  std::vector<std::string> inputs;
  std::optional<double> context;
  std::vector<double> horizons;
  std::optional<int> stride;
  bool with_state = false;
};

int cmd_extract(const Globals& g, const ExtractOptions& o) {
  FeatureConfig fcfg = features_from(g);
  if (o.with_state) fcfg.with_state = true;
  WindowSpec ws = window_spec_from(g.section("windows"));
  if (o.context) ws.context = *o.context;
  if (!o.horizons.empty()) ws.horizons = o.horizons;
  if (o.stride) ws.stride = *o.stride;
  if (g.out.empty()) throw UsageError("extract: --out <dataset file> is required");

  std::vector<LabeledWindow> windows;
  for (const auto& s : load_scenes(o.inputs)) {
    validate_scene(s.scene);
    for (const auto& t : s.scene.tracks) {
      if (t.cls != EntityClass::kPerson) continue;
      auto w = build_windows(t, s.scene, ws, fcfg, s.name);
      for (auto& x : w) x.split = s.split;
      windows.insert(windows.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
  }
  save_dataset(windows, g.out);
  std::cout << "windows " << windows.size() << " dim " << (fcfg.with_state ? 51 : 50);
  for (std::size_t h = 0; h < ws.horizons.size(); ++h) {
    std::size_t pos = 0;
    for (const auto& w : windows) pos += w.labels[h] == 1;
    std::cout << " | horizon " << ws.horizons[h] << ": crossing " << pos << " not_crossing "
              << windows.size() - pos;
  }
  std::cout << '\n';
  return 0;
}

// --- train -------------------------------------------------------------------

int cmd_train(const Globals& g, const std::string& dataset) {
  const auto windows = load_dataset(dataset);
  if (windows.empty()) throw DataError("train: dataset is empty");
  std::vector<LabeledWindow> tr, va;
  for (const auto& w : windows) {
    if (w.split == "train") tr.push_back(w);
    if (w.split == "val") va.push_back(w);
  }
  const json mj = g.section("model");
  ClassifierConfig cc = mj.empty() ? ClassifierConfig{} : classifier_config_from_json(mj);
  cc.input_dim = windows.front().window.dim();
  cc.context_slots = windows.front().window.slots();
  if (!mj.contains("heads")) cc.heads = windows.front().horizons;
  if (g.seed) cc.seed = *g.seed;
  const json tj = g.section("train");
  const TrainConfig tc = tj.empty() ? TrainConfig{} : train_config_from_json(tj);

  const Classifier model = train(tr, va, cc, tc);
  const std::string out = g.out.empty() ? "model.json" : g.out;
  save_checkpoint(model, out);
  json log = json::array();
  for (const auto& e : model.training_log) {
    log.push_back({{"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"val_loss", e.val_loss},
                   {"val_accuracy", e.val_accuracy}});
  }
  write_json_out({{"best_epoch", model.best_epoch}, {"epochs", log}}, out + ".log.json");
  const EvalSummary val = evaluate_loss(model, va);
  std::cout << "trained " << to_string(cc.architecture) << " params " << model.param_count() << " epochs "
            << model.training_log.size() << " best " << model.best_epoch << " val_accuracy " << val.accuracy
            << '\n';
  return 0;
}

// --- eval --------------------------------------------------------------------

struct EvalOptions {
  std::string checkpoint;
  std::vector<std::string> inputs;
  std::string split;
  bool orientation = false;
  bool ablation = false;
  int n = 360;
  double joint_noise = 0.0;
  bool angle_jitter = false;
  std::optional<int> threads;
};

int cmd_eval(const Globals& g, const EvalOptions& o) {
  if (o.orientation + o.ablation + !o.checkpoint.empty() != 1) {
    throw UsageError("eval: choose exactly one of --checkpoint, --orientation, --ablation");
  }
  if (o.orientation) {
    const auto samples = generate_orientation_set(o.n, g.seed.value_or(0), o.joint_noise, o.angle_jitter);
    const OrientationReport r = evaluate_orientation(samples);
    write_json_out(to_json(r), g.out);
    std::cerr << "orientation: acc45 " << r.acc_45 << " mae " << r.mae << '\n';
    return 0;
  }
  if (o.inputs.empty()) throw UsageError("eval: input files are required");
  if (o.ablation) {
    const json aj = g.section("ablation");
    AblationGrid grid = aj.empty() ? AblationGrid{} : ablation_grid_from_json(aj);
    if (g.seed) grid.base_seed = *g.seed;
    if (o.threads) grid.threads = *o.threads;
    if (g.out.empty()) throw UsageError("eval --ablation: --out <dir> is required");
    const auto scenes = load_scenes(o.inputs);
    std::size_t done = 0;
    const std::size_t total = grid.cells().size();
    const auto results = run_ablation(grid, scenes, features_from(g), [&](const AblationResult& r) {
      std::cerr << "[" << ++done << "/" << total << "] " << r.cell.key() << " acc "
                << (r.error ? std::string("error: ") + *r.error : std::to_string(r.accuracy)) << '\n';
    });
    write_ablation_reports(results, grid, g.out);
    write_table_iv_csv(results, std::cout);
    return 0;
  }
  const Classifier model = load_checkpoint(o.checkpoint);
  std::vector<LabeledWindow> set;
  for (const auto& path : o.inputs) {
    for (auto& w : load_dataset(path)) {
      if (o.split.empty() || w.split == o.split) set.push_back(std::move(w));
    }
  }
  if (set.empty()) throw DataError("eval: no windows selected");
  const IntentionReport r = evaluate_intention(model, set);
  write_json_out(to_json(r), g.out);
  std::cerr << "intention: accuracy " << r.accuracy << " f1 " << r.f1 << '\n';
  return 0;
}

// --- bench -------------------------------------------------------------------

struct BenchOptions {
  std::string scene;
  std::string stage = "intention";
  std::string checkpoint;
  int repetitions = 5;
};

SceneBundle bench_workload(const Globals& g) {
  ScenarioSpec spec;
  spec.script = Script::kApproachWaitCross;
  spec.n_pedestrians = 5;
  spec.n_vehicles = 3;
  spec.duration = 20.0;
  spec.pixel_noise = 0.5;
  spec.joint_noise = 0.01;
  spec.seed = g.seed.value_or(0);
  return generate_scene(spec).scene;
}

Classifier bench_model(const Globals& g, const std::string& checkpoint) {
  if (!checkpoint.empty()) return load_checkpoint(checkpoint);
  const json mj = g.section("model");
  ClassifierConfig cc = mj.empty() ? ClassifierConfig{} : classifier_config_from_json(mj);
  if (mj.empty()) {
    cc.n_layers = 3;
    cc.n_hidden = 128;
  }
  cc.input_dim = 51;
  cc.context_slots = slot_count(0.5);
  cc.seed = g.seed.value_or(0);
  return Classifier(cc);
}

int cmd_bench(const Globals& g, const BenchOptions& o) {
  const Stage stage = parse_stage(o.stage);
  const SceneBundle scene = o.scene.empty() ? bench_workload(g) : load_scene(o.scene);
  json report;
  if (stage == Stage::kOrientation) {
    report = to_json(benchmark_throughput(stage, scene, o.repetitions));
  } else {
    const Classifier model = bench_model(g, o.checkpoint);
    FeatureConfig fcfg = features_from(g);
    fcfg.with_state = model.config().input_dim == 51;
    report = to_json(benchmark_throughput(stage, scene, o.repetitions, &model, fcfg));
    StreamConfig sc;
    sc.features = fcfg;
    sc.horizon = model.config().heads.front();
    const StreamResult sr = stream_scene(scene, model, sc);
    report["stream"] = {{"frames", sr.frame_latencies_ms.size()},
                        {"predictions", sr.predictions.size()},
                        {"latency_p50_ms", percentile(sr.frame_latencies_ms, 50.0)},
                        {"latency_p95_ms", percentile(sr.frame_latencies_ms, 95.0)},
                        {"latency_max_ms", percentile(sr.frame_latencies_ms, 100.0)}};
  }
  report.erase("fps_samples");
  write_json_out(report, g.out);
  return 0;
}

// --- stream ------------------------------------------------------------------

struct StreamOptions {
  std::string input;
  std::string checkpoint;
  std::optional<double> threshold;
  bool follow = false;
  double idle_timeout = 5.0;
  std::string latency_log;
};

int cmd_stream(const Globals& g, const StreamOptions& o) {
  const Classifier model = load_checkpoint(o.checkpoint);
  const json sj = g.section("stream");
  StreamConfig cfg = sj.empty() ? StreamConfig{} : stream_config_from_json(sj);
  if (o.threshold) cfg.threshold = *o.threshold;
  cfg.validate();

  std::ifstream file;
  std::istream* in = &std::cin;
  if (!o.input.empty() && o.input != "-") {
    file.open(o.input);
    if (!file) throw DataError("cannot open " + o.input);
    in = &file;
  } else if (o.follow) {
    throw UsageError("stream: --follow needs a file");
  }
  std::ofstream out_file;
  std::ostream* out = &std::cout;
  if (!g.out.empty() && g.out != "-") {
    out_file.open(g.out);
    if (!out_file) throw DataError("cannot write " + g.out);
    out = &out_file;
  }

  std::unique_ptr<StreamProcessor> proc;
  std::size_t line_no = 0;
  std::size_t shown_diag = 0;
  std::size_t warnings = 0;
  auto emit = [&](const std::vector<WarningMessage>& ws) {
    for (const auto& w : ws) *out << to_json(w).dump() << '\n' << std::flush;
    warnings += ws.size();
    for (; proc && shown_diag < proc->diagnostics().size(); ++shown_diag) {
      std::cerr << "stream: " << proc->diagnostics()[shown_diag] << '\n';
    }
  };
  std::string line;
  auto idle_since = std::chrono::steady_clock::now();
  for (;;) {
    if (!std::getline(*in, line)) {
      if (!o.follow) break;
      // Follow mode: wait for the file to grow, stop after an idle spell.
      in->clear();
      const double idle =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - idle_since).count();
      if (idle >= o.idle_timeout) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      continue;
    }
    idle_since = std::chrono::steady_clock::now();
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json record = json::parse(line);
      if (!proc) {
        proc = std::make_unique<StreamProcessor>(model, header_from_json(record), cfg);
        continue;
      }
      emit(proc->push(detection_from_json(record)));
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!proc) throw DataError("stream has no meta record");
  emit(proc->finish());
  const auto& lat = proc->frame_latencies_ms();
  if (!o.latency_log.empty()) {
    write_json_out({{"frame_latency_ms", lat}}, o.latency_log);
  }
  std::cerr << "stream: frames " << lat.size() << " predictions " << proc->predictions().size() << " warnings "
            << warnings << " dropped " << proc->dropped();
  if (!lat.empty()) std::cerr << " latency_p95_ms " << percentile(lat, 95.0);
  std::cerr << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"p2cws: pedestrian crossing intention and collision warning toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed override");
  app.add_option("--config", g.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output file or directory");

  std::string spec_file;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene dataset");
  synth->add_option("spec", spec_file, "Dataset spec JSON (defaults to the config's \"dataset\" section)");

  ExtractOptions eo;
  auto* extract = app.add_subcommand("extract", "Build a labeled window dataset from scenes");
  extract->add_option("inputs", eo.inputs, "Scene files, manifests or dataset directories")->required();
  extract->add_option("--context", eo.context, "Context length, seconds");
  extract->add_option("--horizon", eo.horizons, "Prediction horizon(s), seconds");
  extract->add_option("--stride", eo.stride, "Window stride in 15 Hz ticks");
  extract->add_flag("--with-state", eo.with_state, "Append the current crossing state");

  std::string dataset;
  auto* trn = app.add_subcommand("train", "Train an intention classifier");
  trn->add_option("dataset", dataset, "Window dataset file")->required();

  EvalOptions vo;
  auto* eval = app.add_subcommand("eval", "Evaluate a model, the orientation estimator or an ablation grid");
  eval->add_option("inputs", vo.inputs, "Dataset files (model) or scene inputs (ablation)");
  eval->add_option("--checkpoint", vo.checkpoint, "Model checkpoint");
  eval->add_option("--split", vo.split, "Only windows of this split");
  eval->add_flag("--orientation", vo.orientation, "Evaluate body orientation on a synthetic pose set");
  eval->add_flag("--ablation", vo.ablation, "Run the model-size ablation grid");
  eval->add_option("--n", vo.n, "Orientation set size")->check(CLI::PositiveNumber);
  eval->add_option("--joint-noise", vo.joint_noise, "Orientation set joint noise (sigma)");
  eval->add_flag("--angle-jitter", vo.angle_jitter, "Jitter orientation angles within each grid cell");
  eval->add_option("--threads", vo.threads, "Ablation worker threads")->check(CLI::PositiveNumber);

  BenchOptions bo;
  auto* bench = app.add_subcommand("bench", "Measure throughput and streaming latency");
  bench->add_option("scene", bo.scene, "Workload scene (default: generated 5-pedestrian, 3-vehicle scene)");
  bench->add_option("--stage", bo.stage, "orientation or intention");
  bench->add_option("--checkpoint", bo.checkpoint, "Model checkpoint (default: untrained GRU 3x128)");
  bench->add_option("--reps", bo.repetitions, "Timed repetitions")->check(CLI::PositiveNumber);

  StreamOptions so;
  auto* stream = app.add_subcommand("stream", "Emit warnings from a track record stream");
  stream->add_option("input", so.input, "Track file (default: standard input)");
  stream->add_option("--checkpoint", so.checkpoint, "Model checkpoint")->required();
  stream->add_option("--threshold", so.threshold, "Warning threshold on p_cross");
  stream->add_flag("--follow", so.follow, "Keep reading as the file grows");
  stream->add_option("--idle-timeout", so.idle_timeout, "Follow mode: stop after this many idle seconds");
  stream->add_option("--latency-log", so.latency_log, "Write per-frame latencies (JSON) here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*seed_opt) g.seed = seed;
    if (!g.config_path.empty()) g.config = read_json_file(g.config_path);
    if (!g.config.is_object()) throw DataError("config must be a JSON object");
    if (*synth) return cmd_synth(g, spec_file);
    if (*extract) return cmd_extract(g, eo);
    if (*trn) return cmd_train(g, dataset);
    if (*eval) return cmd_eval(g, vo);
    if (*bench) return cmd_bench(g, bo);
    if (*stream) return cmd_stream(g, so);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const json::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
