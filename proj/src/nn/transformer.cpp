#include <cmath>
#include <limits>
#include <tuple>

#include "network.hpp"

namespace p2cws::nn {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kLayerNormEps = 1e-5;

struct LayerNormOut {
  MatrixXd xhat;
  Eigen::RowVectorXd inv_sigma;
};

// Column-wise layer norm over the feature axis.
MatrixXd layer_norm(const MatrixXd& x, const ConstMat& gamma, const ConstMat& beta, LayerNormOut* out) {
  const Eigen::RowVectorXd mu = x.colwise().mean();
  MatrixXd xc = x.rowwise() - mu;
  const Eigen::RowVectorXd var = xc.array().square().colwise().mean();
  const Eigen::RowVectorXd inv = (var.array() + kLayerNormEps).rsqrt();
  MatrixXd xhat = xc.array().rowwise() * inv.array();
  MatrixXd y = (xhat.array().colwise() * gamma.col(0).array()).matrix();
  y.colwise() += beta.col(0);
  if (out) {
    out->xhat = std::move(xhat);
    out->inv_sigma = inv;
  }
  return y;
}

MatrixXd layer_norm_back(const MatrixXd& dy, const LayerNormOut& ln, const ConstMat& gamma, MutMat dgamma,
                         MutMat dbeta) {
  dgamma.col(0) += (dy.array() * ln.xhat.array()).rowwise().sum().matrix();
  dbeta.col(0) += dy.rowwise().sum();
  const MatrixXd g = (dy.array().colwise() * gamma.col(0).array()).matrix();
  const Eigen::RowVectorXd mean_g = g.colwise().mean();
  const Eigen::RowVectorXd mean_gx = (g.array() * ln.xhat.array()).colwise().mean();
  MatrixXd dx = g.rowwise() - mean_g;
  dx -= (ln.xhat.array().rowwise() * mean_gx.array()).matrix();
  return (dx.array().rowwise() * ln.inv_sigma.array()).matrix();
}

struct LayerCache {
  MatrixXd in, q, k, v, o, u, h1;
  std::vector<MatrixXd> p;  // per attention head, keys x queries
  LayerNormOut ln1, ln2;
};

struct SampleCache {
  MatrixXd x;
  std::vector<LayerCache> layers;
  VectorXd pool_w;
  VectorXd pooled;
};

struct TransformerCache : Cache {
  std::vector<SampleCache> samples;
};

class Transformer : public Network {
 public:
  explicit Transformer(const ClassifierConfig& cfg)
      : slots_(cfg.context_slots),
        dim_(cfg.input_dim),
        d_(cfg.n_hidden),
        heads_(cfg.n_heads),
        ff_(cfg.n_hidden) {
    const double b_in = 1.0 / std::sqrt(static_cast<double>(dim_));
    const double b_d = 1.0 / std::sqrt(static_cast<double>(d_));
    const double b_ff = 1.0 / std::sqrt(static_cast<double>(ff_));
    w_e_ = layout_.add("embed.weight", d_, dim_, Init::kUniform, b_in);
    b_e_ = layout_.add("embed.bias", d_, 1, Init::kUniform, b_in);
    for (int l = 0; l < cfg.n_layers; ++l) {
      const std::string tag = "enc" + std::to_string(l);
      Seg s;
      s.wq = layout_.add(tag + ".attn.wq", d_, d_, Init::kUniform, b_d);
      s.bq = layout_.add(tag + ".attn.bq", d_, 1, Init::kUniform, b_d);
      s.wk = layout_.add(tag + ".attn.wk", d_, d_, Init::kUniform, b_d);
      s.bk = layout_.add(tag + ".attn.bk", d_, 1, Init::kUniform, b_d);
      s.wv = layout_.add(tag + ".attn.wv", d_, d_, Init::kUniform, b_d);
      s.bv = layout_.add(tag + ".attn.bv", d_, 1, Init::kUniform, b_d);
      s.wo = layout_.add(tag + ".attn.wo", d_, d_, Init::kUniform, b_d);
      s.bo = layout_.add(tag + ".attn.bo", d_, 1, Init::kUniform, b_d);
      s.g1 = layout_.add(tag + ".ln1.gamma", d_, 1, Init::kOnes);
      s.be1 = layout_.add(tag + ".ln1.beta", d_, 1, Init::kZeros);
      s.w1 = layout_.add(tag + ".ff1.weight", ff_, d_, Init::kUniform, b_d);
      s.b1 = layout_.add(tag + ".ff1.bias", ff_, 1, Init::kUniform, b_d);
      s.w2 = layout_.add(tag + ".ff2.weight", d_, ff_, Init::kUniform, b_ff);
      s.b2 = layout_.add(tag + ".ff2.bias", d_, 1, Init::kUniform, b_ff);
      s.g2 = layout_.add(tag + ".ln2.gamma", d_, 1, Init::kOnes);
      s.be2 = layout_.add(tag + ".ln2.beta", d_, 1, Init::kZeros);
      layers_.push_back(s);
    }
    w_o_ = layout_.add("head.weight", cfg.outputs(), d_, Init::kUniform, b_d);
    b_o_ = layout_.add("head.bias", cfg.outputs(), 1, Init::kUniform, b_d);

    pe_.resize(d_, slots_);
    for (Index pos = 0; pos < slots_; ++pos) {
      for (Index i = 0; i < d_; i += 2) {
        const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / d_);
        pe_(i, pos) = std::sin(angle);
        if (i + 1 < d_) pe_(i + 1, pos) = std::cos(angle);
      }
    }
  }

  MatrixXd forward(const double* params, const Batch& batch, std::unique_ptr<Cache>* cache) const override {
    MatrixXd logits(layout_[w_o_].rows, static_cast<Index>(batch.size()));
    auto tc = std::make_unique<TransformerCache>();
    if (cache) tc->samples.resize(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      logits.col(static_cast<Index>(b)) = forward_one(params, *batch[b], cache ? &tc->samples[b] : nullptr);
    }
    if (cache) *cache = std::move(tc);
    return logits;
  }

  void backward(const double* params, const Batch& batch, const Cache& cache, const MatrixXd& dlogits,
                double* grad) const override {
    const auto& tc = static_cast<const TransformerCache&>(cache);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      backward_one(params, tc.samples[b], dlogits.col(static_cast<Index>(b)), grad);
    }
  }

 private:
  struct Seg {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo, g1, be1, w1, b1, w2, b2, g2, be2;
  };

  MatrixXd affine(const double* params, std::size_t w, std::size_t b, const MatrixXd& x) const {
    MatrixXd y = view(params, layout_[w]) * x;
    y.colwise() += view(params, layout_[b]).col(0);
    return y;
  }

  VectorXd forward_one(const double* params, const FeatureWindow& w, SampleCache* sc) const {
    const Index T = slots_;
    const Index dk = d_ / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    std::vector<bool> key_ok(static_cast<std::size_t>(T));
    Index present = 0;
    for (Index t = 0; t < T; ++t) present += w.mask[static_cast<std::size_t>(t)] != 0;
    for (Index t = 0; t < T; ++t) {
      key_ok[static_cast<std::size_t>(t)] = present == 0 || w.mask[static_cast<std::size_t>(t)] != 0;
    }

    MatrixXd x = w.x.transpose();
    MatrixXd h = affine(params, w_e_, b_e_, x) + pe_;
    if (sc) sc->x = std::move(x);
    for (const Seg& s : layers_) {
      LayerCache lc;
      MatrixXd q = affine(params, s.wq, s.bq, h);
      MatrixXd k = affine(params, s.wk, s.bk, h);
      MatrixXd v = affine(params, s.wv, s.bv, h);
      MatrixXd o(d_, T);
      for (Index j = 0; j < heads_; ++j) {
        MatrixXd p = k.middleRows(j * dk, dk).transpose() * q.middleRows(j * dk, dk) * scale;
        for (Index c = 0; c < T; ++c) {
          double mx = -std::numeric_limits<double>::infinity();
          for (Index r = 0; r < T; ++r) {
            if (key_ok[static_cast<std::size_t>(r)]) mx = std::max(mx, p(r, c));
          }
          double sum = 0.0;
          for (Index r = 0; r < T; ++r) {
            p(r, c) = key_ok[static_cast<std::size_t>(r)] ? std::exp(p(r, c) - mx) : 0.0;
            sum += p(r, c);
          }
          p.col(c) /= sum;
        }
        o.middleRows(j * dk, dk) = v.middleRows(j * dk, dk) * p;
        if (sc) lc.p.push_back(std::move(p));
      }
      MatrixXd r1 = h + affine(params, s.wo, s.bo, o);
      MatrixXd h1 = layer_norm(r1, view(params, layout_[s.g1]), view(params, layout_[s.be1]), sc ? &lc.ln1 : nullptr);
      MatrixXd u = affine(params, s.w1, s.b1, h1);
      MatrixXd r2 = h1 + affine(params, s.w2, s.b2, u.cwiseMax(0.0));
      MatrixXd out = layer_norm(r2, view(params, layout_[s.g2]), view(params, layout_[s.be2]), sc ? &lc.ln2 : nullptr);
      if (sc) {
        lc.in = std::move(h);
        lc.q = std::move(q);
        lc.k = std::move(k);
        lc.v = std::move(v);
        lc.o = std::move(o);
        lc.u = std::move(u);
        lc.h1 = std::move(h1);
        sc->layers.push_back(std::move(lc));
      }
      h = std::move(out);
    }
    VectorXd pool_w(T);
    const double count = static_cast<double>(present == 0 ? T : present);
    for (Index t = 0; t < T; ++t) pool_w(t) = key_ok[static_cast<std::size_t>(t)] ? 1.0 / count : 0.0;
    VectorXd pooled = h * pool_w;
    VectorXd logit = view(params, layout_[w_o_]) * pooled + view(params, layout_[b_o_]).col(0);
    if (sc) {
      sc->pool_w = std::move(pool_w);
      sc->pooled = std::move(pooled);
    }
    return logit;
  }

  void backward_one(const double* params, const SampleCache& sc, const VectorXd& dlogit, double* grad) const {
    const Index T = slots_;
    const Index dk = d_ / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    view(grad, layout_[w_o_]).noalias() += dlogit * sc.pooled.transpose();
    view(grad, layout_[b_o_]).col(0) += dlogit;
    MatrixXd dh = (view(params, layout_[w_o_]).transpose() * dlogit) * sc.pool_w.transpose();

    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Seg& s = layers_[l];
      const LayerCache& lc = sc.layers[l];
      const MatrixXd dr2 = layer_norm_back(dh, lc.ln2, view(params, layout_[s.g2]), view(grad, layout_[s.g2]),
                                           view(grad, layout_[s.be2]));
      const MatrixXd relu_u = lc.u.cwiseMax(0.0);
      view(grad, layout_[s.w2]).noalias() += dr2 * relu_u.transpose();
      view(grad, layout_[s.b2]).col(0) += dr2.rowwise().sum();
      const MatrixXd du = (view(params, layout_[s.w2]).transpose() * dr2).cwiseProduct(
          (lc.u.array() > 0.0).cast<double>().matrix());
      view(grad, layout_[s.w1]).noalias() += du * lc.h1.transpose();
      view(grad, layout_[s.b1]).col(0) += du.rowwise().sum();
      const MatrixXd dh1 = dr2 + view(params, layout_[s.w1]).transpose() * du;
      const MatrixXd dr1 = layer_norm_back(dh1, lc.ln1, view(params, layout_[s.g1]), view(grad, layout_[s.g1]),
                                           view(grad, layout_[s.be1]));
      view(grad, layout_[s.wo]).noalias() += dr1 * lc.o.transpose();
      view(grad, layout_[s.bo]).col(0) += dr1.rowwise().sum();
      const MatrixXd d_o = view(params, layout_[s.wo]).transpose() * dr1;
      MatrixXd dq(d_, T), dk_all(d_, T), dv(d_, T);
      for (Index j = 0; j < heads_; ++j) {
        const MatrixXd& p = lc.p[static_cast<std::size_t>(j)];
        const auto doj = d_o.middleRows(j * dk, dk);
        dv.middleRows(j * dk, dk) = doj * p.transpose();
        const MatrixXd dp = lc.v.middleRows(j * dk, dk).transpose() * doj;
        const Eigen::RowVectorXd inner = (p.array() * dp.array()).colwise().sum();
        const MatrixXd ds = (p.array() * (dp.rowwise() - inner).array()).matrix() * scale;
        dq.middleRows(j * dk, dk) = lc.k.middleRows(j * dk, dk) * ds;
        dk_all.middleRows(j * dk, dk) = lc.q.middleRows(j * dk, dk) * ds.transpose();
      }
      dh = dr1;
      for (auto [dm, w, b] : {std::tuple{&dq, s.wq, s.bq}, std::tuple{&dk_all, s.wk, s.bk},
                              std::tuple{&dv, s.wv, s.bv}}) {
        view(grad, layout_[w]).noalias() += *dm * lc.in.transpose();
        view(grad, layout_[b]).col(0) += dm->rowwise().sum();
        dh.noalias() += view(params, layout_[w]).transpose() * *dm;
      }
    }
    view(grad, layout_[w_e_]).noalias() += dh * sc.x.transpose();
    view(grad, layout_[b_e_]).col(0) += dh.rowwise().sum();
  }

  int slots_;
  int dim_;
  int d_;
  int heads_;
  int ff_;
  std::vector<Seg> layers_;
  std::size_t w_e_ = 0, b_e_ = 0, w_o_ = 0, b_o_ = 0;
  MatrixXd pe_;
};

}  // namespace

std::unique_ptr<Network> make_transformer(const ClassifierConfig& cfg) {
  return std::make_unique<Transformer>(cfg);
}

}  // namespace p2cws::nn
