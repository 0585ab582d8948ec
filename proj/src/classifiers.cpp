#include "p2cws/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "nn/network.hpp"
#include "p2cws/errors.hpp"

namespace p2cws {

using nlohmann::json;

namespace nn {

std::size_t Layout::add(std::string name, Eigen::Index rows, Eigen::Index cols, Init init, double bound) {
  segments_.push_back(Segment{std::move(name), total_, rows, cols, init, bound});
  total_ += rows * cols;
  return segments_.size() - 1;
}

}  // namespace nn

namespace {

std::shared_ptr<const nn::Network> make_network(const ClassifierConfig& cfg) {
  switch (cfg.architecture) {
    case Architecture::kFFNN:
      return nn::make_ffnn(cfg);
    case Architecture::kGRU:
      return nn::make_gru(cfg);
    case Architecture::kTransformer:
      return nn::make_transformer(cfg);
  }
  throw DataError("unknown architecture");
}

// Numerically stable two-way softmax; index 0 is crossing.
std::pair<double, double> softmax2(double z_cross, double z_not) {
  const double m = std::max(z_cross, z_not);
  const double a = std::exp(z_cross - m);
  const double b = std::exp(z_not - m);
  return {a / (a + b), b / (a + b)};
}

Eigen::MatrixXi targets_of(const std::vector<const LabeledWindow*>& windows, const std::vector<double>& heads) {
  Eigen::MatrixXi t(static_cast<Eigen::Index>(heads.size()), static_cast<Eigen::Index>(windows.size()));
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const auto labels = labels_for(*windows[b], heads);
    for (std::size_t k = 0; k < heads.size(); ++k) {
      t(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(b)) = labels[k];
    }
  }
  return t;
}

}  // namespace

std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::kFFNN:
      return "FFNN";
    case Architecture::kGRU:
      return "GRU";
    case Architecture::kTransformer:
      return "TransformerEncoder";
  }
  return "?";
}

Architecture parse_architecture(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "ffnn") return Architecture::kFFNN;
  if (lower == "gru") return Architecture::kGRU;
  if (lower == "transformerencoder" || lower == "transformer") return Architecture::kTransformer;
  throw DataError("unknown architecture '" + std::string(name) + "'");
}

void ClassifierConfig::validate() const {
  if (n_layers < 1) throw DataError("classifier config: n_layers must be >= 1");
  if (n_hidden < 1) throw DataError("classifier config: n_hidden must be >= 1");
  if (input_dim < 1) throw DataError("classifier config: input_dim must be >= 1");
  if (context_slots < 1) throw DataError("classifier config: context_slots must be >= 1");
  if (heads.empty()) throw DataError("classifier config: heads must be non-empty");
  for (double h : heads) {
    if (!(h > 0.0)) throw DataError("classifier config: horizons must be positive");
  }
  if (architecture == Architecture::kTransformer) {
    if (n_heads < 1 || n_hidden % n_heads != 0) {
      throw DataError("classifier config: n_hidden must be divisible by n_heads");
    }
  }
}

json to_json(const ClassifierConfig& cfg) {
  return {{"architecture", std::string(to_string(cfg.architecture))},
          {"n_layers", cfg.n_layers},
          {"n_hidden", cfg.n_hidden},
          {"n_heads", cfg.n_heads},
          {"input_dim", cfg.input_dim},
          {"context_slots", cfg.context_slots},
          {"heads", cfg.heads},
          {"seed", cfg.seed},
          {"mask_skip", cfg.mask_skip}};
}

ClassifierConfig classifier_config_from_json(const json& j) {
  ClassifierConfig cfg;
  try {
    if (j.contains("architecture")) cfg.architecture = parse_architecture(j.at("architecture").get<std::string>());
    if (j.contains("n_layers")) cfg.n_layers = j.at("n_layers").get<int>();
    if (j.contains("n_hidden")) cfg.n_hidden = j.at("n_hidden").get<int>();
    if (j.contains("n_heads")) cfg.n_heads = j.at("n_heads").get<int>();
    if (j.contains("input_dim")) cfg.input_dim = j.at("input_dim").get<int>();
    if (j.contains("context_slots")) cfg.context_slots = j.at("context_slots").get<int>();
    if (j.contains("heads")) cfg.heads = j.at("heads").get<std::vector<double>>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("mask_skip")) cfg.mask_skip = j.at("mask_skip").get<bool>();
  } catch (const json::exception& e) {
    throw DataError(std::string("classifier config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::size_t count_parameters(const ClassifierConfig& cfg) {
  cfg.validate();
  const std::size_t out = static_cast<std::size_t>(cfg.outputs());
  const std::size_t h = static_cast<std::size_t>(cfg.n_hidden);
  const std::size_t x = static_cast<std::size_t>(cfg.input_dim);
  const std::size_t layers = static_cast<std::size_t>(cfg.n_layers);
  switch (cfg.architecture) {
    case Architecture::kFFNN: {
      const std::size_t in = x * static_cast<std::size_t>(cfg.context_slots);
      if (layers == 1) return in * out + out;
      return (in * h + h) + (layers - 2) * (h * h + h) + (h * out + out);
    }
    case Architecture::kGRU: {
      std::size_t n = 3 * (h * (x + h) + 2 * h);
      n += (layers - 1) * 3 * (h * (h + h) + 2 * h);
      return n + h * out + out;
    }
    case Architecture::kTransformer: {
      const std::size_t ff = h;
      const std::size_t per_layer = 4 * (h * h + h) + 2 * h + (ff * h + ff) + (h * ff + h) + 2 * h;
      return (x * h + h) + layers * per_layer + (h * out + out);
    }
  }
  return 0;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw DataError("train config: learning_rate must be > 0");
  if (batch_size < 0) throw DataError("train config: batch_size must be >= 0");
  if (max_epochs < 1) throw DataError("train config: max_epochs must be >= 1");
  if (patience < 1) throw DataError("train config: patience must be >= 1");
}

json to_json(const TrainConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate},
          {"batch_size", cfg.batch_size},
          {"max_epochs", cfg.max_epochs},
          {"patience", cfg.patience},
          {"optimizer", cfg.optimizer == Optimizer::kAdam ? "adam" : "sgd"},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"epsilon", cfg.epsilon},
          {"shuffle", cfg.shuffle}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  try {
    if (j.contains("learning_rate")) cfg.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
    if (j.contains("max_epochs")) cfg.max_epochs = j.at("max_epochs").get<int>();
    if (j.contains("patience")) cfg.patience = j.at("patience").get<int>();
    if (j.contains("beta1")) cfg.beta1 = j.at("beta1").get<double>();
    if (j.contains("beta2")) cfg.beta2 = j.at("beta2").get<double>();
    if (j.contains("epsilon")) cfg.epsilon = j.at("epsilon").get<double>();
    if (j.contains("shuffle")) cfg.shuffle = j.at("shuffle").get<bool>();
    if (j.contains("optimizer")) {
      const auto name = j.at("optimizer").get<std::string>();
      if (name == "adam") {
        cfg.optimizer = Optimizer::kAdam;
      } else if (name == "sgd") {
        cfg.optimizer = Optimizer::kSgd;
      } else {
        throw DataError("train config: optimizer must be \"adam\" or \"sgd\"");
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// --- Classifier -------------------------------------------------------------

Classifier::Classifier(ClassifierConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  net_ = make_network(cfg_);
  const auto& layout = net_->layout();
  params_.resize(layout.total());
  std::mt19937_64 rng(cfg_.seed);
  for (const auto& s : layout.segments()) {
    auto seg = params_.segment(s.offset, s.size());
    switch (s.init) {
      case nn::Init::kOnes:
        seg.setOnes();
        break;
      case nn::Init::kZeros:
        seg.setZero();
        break;
      case nn::Init::kUniform: {
        std::uniform_real_distribution<double> uni(-s.bound, s.bound);
        for (Eigen::Index i = 0; i < seg.size(); ++i) seg(i) = uni(rng);
        break;
      }
    }
  }
}

std::vector<std::string> Classifier::segment_names() const {
  std::vector<std::string> names;
  for (const auto& s : net_->layout().segments()) names.push_back(s.name);
  return names;
}

Eigen::Map<Eigen::MatrixXd> Classifier::segment(const std::string& name) {
  for (const auto& s : net_->layout().segments()) {
    if (s.name == name) return nn::view(params_.data(), s);
  }
  throw DataError("unknown parameter segment '" + name + "'");
}

void Classifier::check_window(const FeatureWindow& w) const {
  if (w.slots() != cfg_.context_slots || w.dim() != cfg_.input_dim) {
    std::ostringstream msg;
    msg << "window shape " << w.slots() << "x" << w.dim() << " does not match model "
        << cfg_.context_slots << "x" << cfg_.input_dim;
    throw DataError(msg.str());
  }
  if (w.mask.size() != static_cast<std::size_t>(w.slots())) throw DataError("window mask length mismatch");
}

Eigen::MatrixXd Classifier::logits(const std::vector<const FeatureWindow*>& batch) const {
  for (const auto* w : batch) check_window(*w);
  Eigen::MatrixXd z = net_->forward(params_.data(), batch, nullptr);
  if (!z.allFinite()) throw TrainingError("forward: non-finite activation");
  return z;
}

std::vector<HeadProbability> Classifier::forward(const FeatureWindow& window) const {
  const Eigen::MatrixXd z = logits({&window});
  std::vector<HeadProbability> out;
  for (std::size_t k = 0; k < cfg_.heads.size(); ++k) {
    const auto [pc, pn] = softmax2(z(static_cast<Eigen::Index>(2 * k), 0), z(static_cast<Eigen::Index>(2 * k + 1), 0));
    out.push_back({cfg_.heads[k], pc, pn});
  }
  return out;
}

double Classifier::loss(const std::vector<const FeatureWindow*>& batch, const Eigen::MatrixXi& targets,
                        Eigen::VectorXd* grad) const {
  if (batch.empty()) throw DataError("loss: empty batch");
  for (const auto* w : batch) check_window(*w);
  std::unique_ptr<nn::Cache> cache;
  const Eigen::MatrixXd z = net_->forward(params_.data(), batch, grad ? &cache : nullptr);
  const auto n = static_cast<Eigen::Index>(batch.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd dz(z.rows(), n);
  double total = 0.0;
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index k = 0; k < targets.rows(); ++k) {
      const double z0 = z(2 * k, b);
      const double z1 = z(2 * k + 1, b);
      const double m = std::max(z0, z1);
      const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
      const bool crossing = targets(k, b) == 1;
      total += lse - (crossing ? z0 : z1);
      const auto [p0, p1] = softmax2(z0, z1);
      dz(2 * k, b) = (p0 - (crossing ? 1.0 : 0.0)) * inv_n;
      dz(2 * k + 1, b) = (p1 - (crossing ? 0.0 : 1.0)) * inv_n;
    }
  }
  if (grad) {
    grad->setZero(params_.size());
    net_->backward(params_.data(), batch, *cache, dz, grad->data());
  }
  return total * inv_n;
}

HeadDecision decide(double horizon, double p_cross, double p_not_cross) {
  const bool crossing = p_cross > p_not_cross;
  return {horizon, crossing, crossing ? p_cross : p_not_cross, p_cross};
}

std::vector<HeadDecision> predict_intention(const Classifier& model, const FeatureWindow& window) {
  std::vector<HeadDecision> out;
  for (const auto& hp : model.forward(window)) out.push_back(decide(hp.horizon, hp.p_cross, hp.p_not_cross));
  return out;
}

std::vector<int> labels_for(const LabeledWindow& w, const std::vector<double>& heads) {
  std::vector<int> out;
  for (double h : heads) {
    bool found = false;
    for (std::size_t i = 0; i < w.horizons.size() && i < w.labels.size(); ++i) {
      if (std::abs(w.horizons[i] - h) < 1e-9) {
        out.push_back(w.labels[i]);
        found = true;
        break;
      }
    }
    if (!found) {
      std::ostringstream msg;
      msg << "window (ped " << w.window.ped_id << ", t=" << w.window.t_end << ") has no label for horizon " << h;
      throw DataError(msg.str());
    }
  }
  return out;
}

EvalSummary evaluate_loss(const Classifier& model, const std::vector<LabeledWindow>& set) {
  if (set.empty()) throw DataError("evaluate: empty set");
  const auto& heads = model.config().heads;
  constexpr std::size_t kChunk = 256;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < set.size(); start += kChunk) {
    const std::size_t end = std::min(set.size(), start + kChunk);
    std::vector<const FeatureWindow*> batch;
    std::vector<const LabeledWindow*> labeled;
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(&set[i].window);
      labeled.push_back(&set[i]);
    }
    const Eigen::MatrixXi t = targets_of(labeled, heads);
    loss += model.loss(batch, t, nullptr) * static_cast<double>(batch.size());
    const Eigen::MatrixXd z = model.logits(batch);
    for (Eigen::Index b = 0; b < z.cols(); ++b) {
      for (Eigen::Index k = 0; k < t.rows(); ++k) {
        const auto [pc, pn] = softmax2(z(2 * k, b), z(2 * k + 1, b));
        correct += decide(0.0, pc, pn).crossing == (t(k, b) == 1);
      }
    }
  }
  const double n = static_cast<double>(set.size());
  return {loss / n, static_cast<double>(correct) / (n * static_cast<double>(heads.size()))};
}

Classifier train(const std::vector<LabeledWindow>& train_set, const std::vector<LabeledWindow>& val_set,
                 const ClassifierConfig& cfg, const TrainConfig& tcfg) {
  tcfg.validate();
  if (train_set.empty()) throw DataError("train: empty training split");
  if (val_set.empty()) throw DataError("train: empty validation split");
  std::set<std::string> train_scenes;
  for (const auto& w : train_set) {
    if (!w.window.scene.empty()) train_scenes.insert(w.window.scene);
  }
  for (const auto& w : val_set) {
    if (train_scenes.count(w.window.scene) != 0) {
      throw DataError("train: scene '" + w.window.scene + "' appears in both train and validation splits");
    }
  }

  Classifier model(cfg);
  std::vector<const LabeledWindow*> all;
  for (const auto& w : train_set) all.push_back(&w);
  const Eigen::MatrixXi all_targets = targets_of(all, cfg.heads);
  evaluate_loss(model, val_set);  // validates shapes and labels up front

  const std::size_t n = train_set.size();
  const std::size_t batch_size = tcfg.batch_size == 0 ? n : static_cast<std::size_t>(tcfg.batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed ^ 0x5DEECE66DULL);

  Eigen::VectorXd& theta = model.parameters();
  Eigen::VectorXd grad(theta.size());
  Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
  long long step = 0;

  Eigen::VectorXd best = theta;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int stale = 0;
  std::vector<EpochLog> log;

  for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    if (tcfg.shuffle && batch_size < n) std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t end = std::min(n, start + batch_size);
      std::vector<const FeatureWindow*> batch;
      Eigen::MatrixXi t(all_targets.rows(), static_cast<Eigen::Index>(end - start));
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&train_set[order[i]].window);
        t.col(static_cast<Eigen::Index>(i - start)) = all_targets.col(static_cast<Eigen::Index>(order[i]));
      }
      const double l = model.loss(batch, t, &grad);
      if (!std::isfinite(l) || !grad.allFinite()) {
        throw TrainingError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
      }
      epoch_loss += l * static_cast<double>(end - start);
      ++step;
      if (tcfg.optimizer == Optimizer::kSgd) {
        theta -= tcfg.learning_rate * grad;
      } else {
        m = tcfg.beta1 * m + (1.0 - tcfg.beta1) * grad;
        v = tcfg.beta2 * v + (1.0 - tcfg.beta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(tcfg.beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(tcfg.beta2, static_cast<double>(step));
        theta.array() -= tcfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + tcfg.epsilon);
      }
    }
    const EvalSummary val = evaluate_loss(model, val_set);
    if (!std::isfinite(val.loss)) {
      throw TrainingError("training diverged: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    log.push_back({epoch, epoch_loss / static_cast<double>(n), val.loss, val.accuracy});
    if (val.loss < best_val) {
      best_val = val.loss;
      best = theta;
      best_epoch = epoch;
      stale = 0;
    } else if (++stale >= tcfg.patience) {
      break;
    }
  }
  theta = best;
  model.training_log = std::move(log);
  model.best_epoch = best_epoch;
  return model;
}

// --- checkpoints ------------------------------------------------------------

json checkpoint_to_json(const Classifier& model) {
  json segments = json::array();
  Classifier copy = model;
  for (const auto& name : model.segment_names()) {
    const auto seg = copy.segment(name);
    json values = json::array();
    for (Eigen::Index c = 0; c < seg.cols(); ++c) {
      for (Eigen::Index r = 0; r < seg.rows(); ++r) values.push_back(seg(r, c));
    }
    segments.push_back({{"name", name}, {"shape", {seg.rows(), seg.cols()}}, {"values", std::move(values)}});
  }
  json log = json::array();
  for (const auto& e : model.training_log) {
    log.push_back({{"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"val_loss", e.val_loss},
                   {"val_accuracy", e.val_accuracy}});
  }
  return {{"format", "p2cws-classifier/1"},
          {"config", to_json(model.config())},
          {"param_count", model.param_count()},
          {"best_epoch", model.best_epoch},
          {"training_log", std::move(log)},
          {"segments", std::move(segments)}};
}

Classifier classifier_from_json(const json& j) {
  try {
    if (j.value("format", "") != "p2cws-classifier/1") throw DataError("checkpoint: unknown format");
    Classifier model(classifier_config_from_json(j.at("config")));
    std::set<std::string> seen;
    for (const auto& s : j.at("segments")) {
      const auto name = s.at("name").get<std::string>();
      auto seg = model.segment(name);
      const auto shape = s.at("shape").get<std::vector<Eigen::Index>>();
      const auto& values = s.at("values");
      if (shape.size() != 2 || shape[0] != seg.rows() || shape[1] != seg.cols() ||
          values.size() != static_cast<std::size_t>(seg.size())) {
        throw DataError("checkpoint: segment '" + name + "' has the wrong shape");
      }
      std::size_t i = 0;
      for (Eigen::Index c = 0; c < seg.cols(); ++c) {
        for (Eigen::Index r = 0; r < seg.rows(); ++r) seg(r, c) = values.at(i++).get<double>();
      }
      seen.insert(name);
    }
    for (const auto& name : model.segment_names()) {
      if (seen.count(name) == 0) throw DataError("checkpoint: missing segment '" + name + "'");
    }
    if (j.at("param_count").get<std::size_t>() != model.param_count()) {
      throw DataError("checkpoint: param_count does not match the architecture");
    }
    model.best_epoch = j.value("best_epoch", 0);
    for (const auto& e : j.value("training_log", json::array())) {
      model.training_log.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                                    e.at("val_loss").get<double>(), e.at("val_accuracy").get<double>()});
    }
    if (!model.parameters().allFinite()) throw DataError("checkpoint: non-finite parameters");
    return model;
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Classifier& model, const std::filesystem::path& path) {
  const std::string text = checkpoint_to_json(model).dump() + "\n";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw std::runtime_error("cannot write checkpoint " + path.string());
}

Classifier load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path.string() + ": " + e.what());
  }
  return classifier_from_json(j);
}

}  // namespace p2cws
