#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "p2cws/features.hpp"

namespace p2cws {

namespace nn {
class Network;
}

enum class Architecture { kFFNN, kGRU, kTransformer };

std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view name);

struct ClassifierConfig {
  Architecture architecture = Architecture::kGRU;
  // FFNN: number of affine layers including the output layer.
  int n_layers = 2;
  int n_hidden = 32;
  int n_heads = 4;  // attention heads (transformer only)
  int input_dim = static_cast<int>(kBaseFeatureDim);
  int context_slots = 8;
  std::vector<double> heads{1.5};  // prediction horizons, seconds
  std::uint64_t seed = 0;
  bool mask_skip = true;  // GRU: masked slots leave the state untouched

  int outputs() const { return 2 * static_cast<int>(heads.size()); }
  void validate() const;
};

nlohmann::json to_json(const ClassifierConfig& cfg);
ClassifierConfig classifier_config_from_json(const nlohmann::json& j);

// Closed-form parameter count.
std::size_t count_parameters(const ClassifierConfig& cfg);

enum class Optimizer { kAdam, kSgd };

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;  // 0 = full batch
  int max_epochs = 200;
  int patience = 10;
  Optimizer optimizer = Optimizer::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool shuffle = true;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct HeadProbability {
  double horizon = 0.0;
  double p_cross = 0.5;
  double p_not_cross = 0.5;
};

struct HeadDecision {
  double horizon = 0.0;
  bool crossing = false;
  double probability = 0.5;  // of the chosen class
  double p_cross = 0.5;
};

class Classifier {
 public:
  // Fresh model with parameters drawn from cfg.seed.
  explicit Classifier(ClassifierConfig cfg);

  const ClassifierConfig& config() const { return cfg_; }
  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }
  std::size_t param_count() const { return static_cast<std::size_t>(params_.size()); }

  std::vector<std::string> segment_names() const;
  Eigen::Map<Eigen::MatrixXd> segment(const std::string& name);

  // Per-head softmax of one window.
  std::vector<HeadProbability> forward(const FeatureWindow& window) const;

  // Logits (2 per head) x windows.
  Eigen::MatrixXd logits(const std::vector<const FeatureWindow*>& batch) const;

  // Mean over the batch of the cross-entropy summed over heads. `targets`
  // is heads x batch with 1 = crossing. Writes the gradient when non-null.
  double loss(const std::vector<const FeatureWindow*>& batch, const Eigen::MatrixXi& targets,
              Eigen::VectorXd* grad) const;

  std::vector<EpochLog> training_log;
  int best_epoch = 0;

 private:
  void check_window(const FeatureWindow& w) const;

  ClassifierConfig cfg_;
  std::shared_ptr<const nn::Network> net_;
  Eigen::VectorXd params_;
};

// Argmax per head; an exact tie resolves to not_crossing.
HeadDecision decide(double horizon, double p_cross, double p_not_cross);
std::vector<HeadDecision> predict_intention(const Classifier& model, const FeatureWindow& window);

// Labels of `w` for the given horizons (1 = crossing). Throws DataError if a
// horizon is missing from the window.
std::vector<int> labels_for(const LabeledWindow& w, const std::vector<double>& heads);

// Early-stopped training; returns the parameters of the best validation
// epoch. Deterministic in cfg.seed.
Classifier train(const std::vector<LabeledWindow>& train_set, const std::vector<LabeledWindow>& val_set,
                 const ClassifierConfig& cfg, const TrainConfig& tcfg);

struct EvalSummary {
  double loss = 0.0;
  double accuracy = 0.0;  // over all heads
};

EvalSummary evaluate_loss(const Classifier& model, const std::vector<LabeledWindow>& set);

nlohmann::json checkpoint_to_json(const Classifier& model);
Classifier classifier_from_json(const nlohmann::json& j);
void save_checkpoint(const Classifier& model, const std::filesystem::path& path);
Classifier load_checkpoint(const std::filesystem::path& path);

}  // namespace p2cws
