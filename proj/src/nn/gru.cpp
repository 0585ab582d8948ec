#include <cmath>

#include "network.hpp"

namespace p2cws::nn {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;

struct LayerCache {
  MatrixXd x;       // in x (T*B), step t in columns [t*B, (t+1)*B)
  MatrixXd h_prev;  // h x (T*B)
  MatrixXd r, z, n, hn;
};

struct GruCache : Cache {
  std::vector<LayerCache> layers;
  MatrixXd h_last;
  MatrixXd present;  // T x B, 1 = state update applied
};

class Gru : public Network {
 public:
  explicit Gru(const ClassifierConfig& cfg)
      : slots_(cfg.context_slots), dim_(cfg.input_dim), hidden_(cfg.n_hidden), mask_skip_(cfg.mask_skip) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_));
    Index in = dim_;
    for (int l = 0; l < cfg.n_layers; ++l) {
      const std::string tag = "gru" + std::to_string(l);
      Seg s;
      s.w_i = layout_.add(tag + ".weight_ih", 3 * hidden_, in, Init::kUniform, bound);
      s.w_h = layout_.add(tag + ".weight_hh", 3 * hidden_, hidden_, Init::kUniform, bound);
      s.b_i = layout_.add(tag + ".bias_ih", 3 * hidden_, 1, Init::kUniform, bound);
      s.b_h = layout_.add(tag + ".bias_hh", 3 * hidden_, 1, Init::kUniform, bound);
      layers_.push_back(s);
      in = hidden_;
    }
    w_o_ = layout_.add("head.weight", cfg.outputs(), hidden_, Init::kUniform, bound);
    b_o_ = layout_.add("head.bias", cfg.outputs(), 1, Init::kUniform, bound);
  }

  MatrixXd forward(const double* params, const Batch& batch, std::unique_ptr<Cache>* cache) const override {
    const Index B = static_cast<Index>(batch.size());
    const Index T = slots_;
    const Index H = hidden_;
    MatrixXd present = MatrixXd::Ones(T, B);
    MatrixXd x(dim_, T * B);
    for (Index b = 0; b < B; ++b) {
      const FeatureWindow& w = *batch[static_cast<std::size_t>(b)];
      for (Index t = 0; t < T; ++t) {
        x.col(t * B + b) = w.x.row(t).transpose();
        if (mask_skip_ && w.mask[static_cast<std::size_t>(t)] == 0) present(t, b) = 0.0;
      }
    }
    auto gc = std::make_unique<GruCache>();
    MatrixXd h(H, B);
    for (const Seg& s : layers_) {
      const auto w_h = view(params, layout_[s.w_h]);
      const auto b_h = view(params, layout_[s.b_h]).col(0);
      MatrixXd gi = view(params, layout_[s.w_i]) * x;
      gi.colwise() += view(params, layout_[s.b_i]).col(0);
      LayerCache lc;
      if (cache) {
        lc.h_prev.resize(H, T * B);
        lc.r.resize(H, T * B);
        lc.z.resize(H, T * B);
        lc.n.resize(H, T * B);
        lc.hn.resize(H, T * B);
      }
      MatrixXd y(H, T * B);
      h.setZero();
      for (Index t = 0; t < T; ++t) {
        MatrixXd gh = w_h * h;
        gh.colwise() += b_h;
        const auto gi_t = gi.middleCols(t * B, B);
        const MatrixXd r = (gi_t.topRows(H) + gh.topRows(H)).unaryExpr(&sigmoid);
        const MatrixXd z = (gi_t.middleRows(H, H) + gh.middleRows(H, H)).unaryExpr(&sigmoid);
        const MatrixXd hn = gh.bottomRows(H);
        const MatrixXd n =
            (gi_t.bottomRows(H).array() + r.array() * hn.array()).tanh().matrix();
        if (cache) {
          lc.h_prev.middleCols(t * B, B) = h;
          lc.r.middleCols(t * B, B) = r;
          lc.z.middleCols(t * B, B) = z;
          lc.n.middleCols(t * B, B) = n;
          lc.hn.middleCols(t * B, B) = hn;
        }
        const MatrixXd next = ((1.0 - z.array()) * n.array() + z.array() * h.array()).matrix();
        for (Index b = 0; b < B; ++b) {
          if (present(t, b) != 0.0) h.col(b) = next.col(b);
        }
        y.middleCols(t * B, B) = h;
      }
      if (cache) {
        lc.x = std::move(x);
        gc->layers.push_back(std::move(lc));
      }
      x = std::move(y);
    }
    MatrixXd logits = view(params, layout_[w_o_]) * h;
    logits.colwise() += view(params, layout_[b_o_]).col(0);
    if (cache) {
      gc->h_last = h;
      gc->present = std::move(present);
      *cache = std::move(gc);
    }
    return logits;
  }

  void backward(const double* params, const Batch& batch, const Cache& cache, const MatrixXd& dlogits,
                double* grad) const override {
    const auto& gc = static_cast<const GruCache&>(cache);
    const Index B = static_cast<Index>(batch.size());
    const Index T = slots_;
    const Index H = hidden_;
    view(grad, layout_[w_o_]).noalias() += dlogits * gc.h_last.transpose();
    view(grad, layout_[b_o_]).col(0) += dlogits.rowwise().sum();

    // Gradient w.r.t. each step's layer output.
    MatrixXd d_out = MatrixXd::Zero(H, T * B);
    d_out.rightCols(B) = view(params, layout_[w_o_]).transpose() * dlogits;

    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Seg& s = layers_[l];
      const LayerCache& lc = gc.layers[l];
      const auto w_h = view(params, layout_[s.w_h]);
      MatrixXd g_i(3 * H, T * B);
      MatrixXd g_h(3 * H, T * B);
      MatrixXd dh = MatrixXd::Zero(H, B);
      for (Index t = T; t-- > 0;) {
        dh += d_out.middleCols(t * B, B);
        MatrixXd d_new = dh;
        for (Index b = 0; b < B; ++b) {
          if (gc.present(t, b) == 0.0) d_new.col(b).setZero();
        }
        const auto r = lc.r.middleCols(t * B, B).array();
        const auto z = lc.z.middleCols(t * B, B).array();
        const auto n = lc.n.middleCols(t * B, B).array();
        const auto hn = lc.hn.middleCols(t * B, B).array();
        const auto hp = lc.h_prev.middleCols(t * B, B).array();
        const auto dn = d_new.array() * (1.0 - z);
        const auto dz = d_new.array() * (hp - n);
        const Eigen::ArrayXXd dn_pre = dn * (1.0 - n * n);
        const Eigen::ArrayXXd dz_pre = dz * z * (1.0 - z);
        const Eigen::ArrayXXd dr_pre = dn_pre * hn * r * (1.0 - r);
        auto gi = g_i.middleCols(t * B, B);
        auto gh = g_h.middleCols(t * B, B);
        gi.topRows(H) = dr_pre.matrix();
        gi.middleRows(H, H) = dz_pre.matrix();
        gi.bottomRows(H) = dn_pre.matrix();
        gh.topRows(H) = dr_pre.matrix();
        gh.middleRows(H, H) = dz_pre.matrix();
        gh.bottomRows(H) = (dn_pre * r).matrix();
        // Skipped columns pass their gradient straight through.
        dh = (dh - d_new) + (d_new.array() * z).matrix() + w_h.transpose() * gh;
      }
      view(grad, layout_[s.w_i]).noalias() += g_i * lc.x.transpose();
      view(grad, layout_[s.b_i]).col(0) += g_i.rowwise().sum();
      view(grad, layout_[s.w_h]).noalias() += g_h * lc.h_prev.transpose();
      view(grad, layout_[s.b_h]).col(0) += g_h.rowwise().sum();
      if (l > 0) d_out = view(params, layout_[s.w_i]).transpose() * g_i;
    }
  }

 private:
  struct Seg {
    std::size_t w_i, w_h, b_i, b_h;
  };

  int slots_;
  int dim_;
  int hidden_;
  bool mask_skip_;
  std::vector<Seg> layers_;
  std::size_t w_o_ = 0;
  std::size_t b_o_ = 0;
};

}  // namespace

std::unique_ptr<Network> make_gru(const ClassifierConfig& cfg) { return std::make_unique<Gru>(cfg); }

}  // namespace p2cws::nn
