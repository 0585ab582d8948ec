#include <cmath>

#include "network.hpp"

namespace p2cws::nn {
namespace {

struct FfnnCache : Cache {
  std::vector<Eigen::MatrixXd> inputs;  // input of each affine layer
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each hidden layer
};

class Ffnn : public Network {
 public:
  explicit Ffnn(const ClassifierConfig& cfg) : slots_(cfg.context_slots), dim_(cfg.input_dim) {
    Eigen::Index in = static_cast<Eigen::Index>(slots_) * dim_;
    for (int l = 0; l < cfg.n_layers; ++l) {
      const bool last = l + 1 == cfg.n_layers;
      const Eigen::Index out = last ? cfg.outputs() : cfg.n_hidden;
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      const std::string tag = "layer" + std::to_string(l);
      weights_.push_back(layout_.add(tag + ".weight", out, in, Init::kUniform, bound));
      biases_.push_back(layout_.add(tag + ".bias", out, 1, Init::kUniform, bound));
      in = out;
    }
  }

  Eigen::MatrixXd forward(const double* params, const Batch& batch,
                          std::unique_ptr<Cache>* cache) const override {
    const auto n = static_cast<Eigen::Index>(batch.size());
    Eigen::MatrixXd h(static_cast<Eigen::Index>(slots_) * dim_, n);
    for (Eigen::Index b = 0; b < n; ++b) {
      const auto& x = batch[static_cast<std::size_t>(b)]->x;
      for (int s = 0; s < slots_; ++s) {
        for (int c = 0; c < dim_; ++c) h(static_cast<Eigen::Index>(s) * dim_ + c, b) = x(s, c);
      }
    }
    auto fc = std::make_unique<FfnnCache>();
    const std::size_t layers = weights_.size();
    for (std::size_t l = 0; l < layers; ++l) {
      Eigen::MatrixXd a = view(params, layout_[weights_[l]]) * h;
      a.colwise() += view(params, layout_[biases_[l]]).col(0);
      if (cache) fc->inputs.push_back(h);
      if (l + 1 == layers) {
        h = std::move(a);
      } else {
        h = a.cwiseMax(0.0);
        if (cache) fc->pre.push_back(std::move(a));
      }
    }
    if (cache) *cache = std::move(fc);
    return h;
  }

  void backward(const double* params, const Batch&, const Cache& cache, const Eigen::MatrixXd& dlogits,
                double* grad) const override {
    const auto& fc = static_cast<const FfnnCache&>(cache);
    Eigen::MatrixXd d = dlogits;
    for (std::size_t l = weights_.size(); l-- > 0;) {
      view(grad, layout_[weights_[l]]).noalias() += d * fc.inputs[l].transpose();
      view(grad, layout_[biases_[l]]).col(0) += d.rowwise().sum();
      if (l == 0) break;
      d = view(params, layout_[weights_[l]]).transpose() * d;
      d = d.cwiseProduct((fc.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }

 private:
  int slots_;
  int dim_;
  std::vector<std::size_t> weights_;
  std::vector<std::size_t> biases_;
};

}  // namespace

std::unique_ptr<Network> make_ffnn(const ClassifierConfig& cfg) { return std::make_unique<Ffnn>(cfg); }

}  // namespace p2cws::nn
