#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "p2cws/classifiers.hpp"
#include "p2cws/features.hpp"

namespace p2cws::nn {

enum class Init { kUniform, kOnes, kZeros };

struct Segment {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Init init = Init::kUniform;
  double bound = 0.0;  // uniform(-bound, bound)

  Eigen::Index size() const { return rows * cols; }
};

class Layout {
 public:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols, Init init,
                  double bound = 0.0);
  const Segment& operator[](std::size_t i) const { return segments_[i]; }
  const std::vector<Segment>& segments() const { return segments_; }
  Eigen::Index total() const { return total_; }

 private:
  std::vector<Segment> segments_;
  Eigen::Index total_ = 0;
};

using ConstMat = Eigen::Map<const Eigen::MatrixXd>;
using MutMat = Eigen::Map<Eigen::MatrixXd>;

inline ConstMat view(const double* params, const Segment& s) {
  return ConstMat(params + s.offset, s.rows, s.cols);
}
inline MutMat view(double* params, const Segment& s) { return MutMat(params + s.offset, s.rows, s.cols); }

// Windows of one minibatch; every window has the configured shape.
using Batch = std::vector<const FeatureWindow*>;

struct Cache {
  virtual ~Cache() = default;
};

class Network {
 public:
  virtual ~Network() = default;
  const Layout& layout() const { return layout_; }

  // Logits (2 per head, crossing first) x batch. Fills `cache` for backward
  // when non-null.
  virtual Eigen::MatrixXd forward(const double* params, const Batch& batch,
                                  std::unique_ptr<Cache>* cache) const = 0;

  // Accumulates dLoss/dparams into `grad` given dLoss/dlogits.
  virtual void backward(const double* params, const Batch& batch, const Cache& cache,
                        const Eigen::MatrixXd& dlogits, double* grad) const = 0;

 protected:
  Layout layout_;
};

std::unique_ptr<Network> make_ffnn(const ClassifierConfig& cfg);
std::unique_ptr<Network> make_gru(const ClassifierConfig& cfg);
std::unique_ptr<Network> make_transformer(const ClassifierConfig& cfg);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace p2cws::nn
