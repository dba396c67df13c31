#pragma once

// Dense ReLU classifiers: forward evaluation, cross-entropy loss and exact
// backpropagated gradients with respect to parameters and inputs.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "advcorr/errors.hpp"

namespace advcorr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

struct DenseLayer {
  Matrix weights;  // out_dim x in_dim
  Vector biases;   // out_dim

  Index in_dim() const { return weights.cols(); }
  Index out_dim() const { return weights.rows(); }
};

/// Location of one layer's parameters inside the flat vector. Weights are
/// stored row-major (row = output unit), followed by the biases.
struct LayerBlock {
  Index rows = 0;
  Index cols = 0;
  Index weight_start = 0;
  Index bias_start = 0;

  friend bool operator==(const LayerBlock&, const LayerBlock&) = default;
};

class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(std::vector<LayerBlock> blocks) : blocks_(std::move(blocks)) {
    size_ = 0;
    for (const auto& b : blocks_) size_ = std::max(size_, b.bias_start + b.rows);
  }

  /// Layout without layer structure: J unstructured coordinates.
  static ParamLayout flat(Index size) {
    ParamLayout l;
    l.size_ = size;
    return l;
  }

  Index size() const { return size_; }
  const std::vector<LayerBlock>& blocks() const { return blocks_; }

  /// True for every coordinate that is a bias.
  std::vector<bool> bias_mask() const {
    std::vector<bool> m(static_cast<std::size_t>(size_), false);
    for (const auto& b : blocks_)
      for (Index r = 0; r < b.rows; ++r) m[static_cast<std::size_t>(b.bias_start + r)] = true;
    return m;
  }

  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;

 private:
  std::vector<LayerBlock> blocks_;
  Index size_ = 0;
};

/// A point in parameter space together with its layer map.
struct ParamVector {
  Vector values;
  ParamLayout layout;

  ParamVector() = default;
  ParamVector(Vector v, ParamLayout l) : values(std::move(v)), layout(std::move(l)) {
    if (values.size() != layout.size())
      throw ShapeError("parameter vector length " + std::to_string(values.size()) +
                       " does not match layout size " + std::to_string(layout.size()));
  }

  Index size() const { return values.size(); }
};

struct Architecture {
  Index input_dim = 0;
  std::vector<Index> hidden;
  Index num_classes = 0;

  std::vector<Index> widths() const {
    std::vector<Index> w{input_dim};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(num_classes);
    return w;
  }
};

/// Feedforward classifier; ReLU after every layer except the last (logits).
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { validate(); }

  /// All-zero parameters with the given shape.
  static Network zeros(const Architecture& arch) {
    const auto w = arch.widths();
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < w.size(); ++l)
      layers.push_back({Matrix::Zero(w[l + 1], w[l]), Vector::Zero(w[l + 1])});
    return Network(std::move(layers));
  }

  Index input_dim() const { return layers_.front().in_dim(); }
  Index num_classes() const { return layers_.back().out_dim(); }
  std::size_t depth() const { return layers_.size(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  const DenseLayer& layer(std::size_t l) const { return layers_[l]; }

  Architecture architecture() const {
    Architecture a{input_dim(), {}, num_classes()};
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) a.hidden.push_back(layers_[l].out_dim());
    return a;
  }

  ParamLayout layout() const {
    std::vector<LayerBlock> blocks;
    Index off = 0;
    for (const auto& L : layers_) {
      LayerBlock b{L.out_dim(), L.in_dim(), off, off + L.out_dim() * L.in_dim()};
      off = b.bias_start + b.rows;
      blocks.push_back(b);
    }
    return ParamLayout(std::move(blocks));
  }

  Index num_params() const { return layout().size(); }

  ParamVector to_params() const {
    ParamLayout lay = layout();
    Vector v(lay.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& b = lay.blocks()[l];
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          v.data() + b.weight_start, b.rows, b.cols) = layers_[l].weights;
      v.segment(b.bias_start, b.rows) = layers_[l].biases;
    }
    return ParamVector(std::move(v), std::move(lay));
  }

  void set_params(const ParamVector& p) {
    if (!(p.layout == layout())) throw ShapeError("parameter layout does not match network");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& b = p.layout.blocks()[l];
      layers_[l].weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                          Eigen::RowMajor>>(
          p.values.data() + b.weight_start, b.rows, b.cols);
      layers_[l].biases = p.values.segment(b.bias_start, b.rows);
    }
  }

  Network with_params(const ParamVector& p) const {
    Network n = *this;
    n.set_params(p);
    return n;
  }

  DenseLayer& mutable_layer(std::size_t l) { return layers_[l]; }

 private:
  void validate() const {
    if (layers_.empty()) throw ShapeError("network needs at least one layer");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      if (L.out_dim() == 0 || L.in_dim() == 0) throw ShapeError("empty layer " + std::to_string(l));
      if (L.biases.size() != L.out_dim())
        throw ShapeError("bias length mismatch in layer " + std::to_string(l));
      if (l > 0 && layers_[l - 1].out_dim() != L.in_dim())
        throw ShapeError("layer " + std::to_string(l) + " input does not chain with layer " +
                         std::to_string(l - 1));
      if (!L.weights.allFinite() || !L.biases.allFinite())
        throw NumericalError("non-finite parameter in layer " + std::to_string(l));
    }
  }

  std::vector<DenseLayer> layers_;
};

/// Inputs are stored column-wise (input_dim x N).
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(Matrix inputs, std::vector<int> labels, int num_classes)
      : inputs_(std::move(inputs)), labels_(std::move(labels)), num_classes_(num_classes) {
    if (static_cast<std::size_t>(inputs_.cols()) != labels_.size())
      throw ShapeError("dataset has " + std::to_string(inputs_.cols()) + " inputs but " +
                       std::to_string(labels_.size()) + " labels");
    if (num_classes_ < 1) throw DomainError("dataset needs at least one class");
    for (int y : labels_)
      if (y < 0 || y >= num_classes_) throw DomainError("label " + std::to_string(y) + " out of range");
    if (inputs_.size() > 0 && (inputs_.minCoeff() < 0.0 || inputs_.maxCoeff() > 1.0))
      throw DomainError("dataset inputs must lie in [0,1]");
  }

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  Index input_dim() const { return inputs_.rows(); }
  int num_classes() const { return num_classes_; }
  const Matrix& inputs() const { return inputs_; }
  const std::vector<int>& labels() const { return labels_; }
  auto input(std::size_t n) const { return inputs_.col(static_cast<Index>(n)); }
  int label(std::size_t n) const { return labels_[n]; }

  /// Rows [begin, begin+count) as a new dataset.
  LabeledDataset slice(std::size_t begin, std::size_t count) const {
    count = std::min(count, size() - std::min(begin, size()));
    return LabeledDataset(inputs_.middleCols(static_cast<Index>(begin), static_cast<Index>(count)),
                          {labels_.begin() + static_cast<std::ptrdiff_t>(begin),
                           labels_.begin() + static_cast<std::ptrdiff_t>(begin + count)},
                          num_classes_);
  }

 private:
  Matrix inputs_;
  std::vector<int> labels_;
  int num_classes_ = 0;
};

// ---------------------------------------------------------------------------
// Single-input evaluation and backpropagation

/// Activations of every layer: entry 0 is the input, the last entry the logits.
struct ForwardTrace {
  std::vector<Vector> activations;
  std::vector<Vector> preactivations;  // one per layer

  const Vector& logits() const { return activations.back(); }
};

inline void check_input(const Network& net, Index len) {
  if (len != net.input_dim())
    throw ShapeError("input has length " + std::to_string(len) + ", network expects " +
                     std::to_string(net.input_dim()));
}

inline void check_label(const Network& net, int label) {
  if (label < 0 || label >= net.num_classes())
    throw DomainError("label " + std::to_string(label) + " outside [0," +
                      std::to_string(net.num_classes()) + ")");
}

template <class Derived>
ForwardTrace trace_forward(const Network& net, const Eigen::MatrixBase<Derived>& x) {
  check_input(net, x.size());
  ForwardTrace t;
  t.activations.reserve(net.depth() + 1);
  t.preactivations.reserve(net.depth());
  t.activations.emplace_back(x);
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const auto& L = net.layer(l);
    Vector z = L.weights * t.activations.back() + L.biases;
    t.preactivations.push_back(z);
    if (l + 1 < net.depth()) z = z.cwiseMax(0.0);
    t.activations.push_back(std::move(z));
  }
  return t;
}

/// Pre-softmax outputs f(x; w).
template <class Derived>
Vector forward(const Network& net, const Eigen::MatrixBase<Derived>& x) {
  return trace_forward(net, x).logits();
}

/// Index of the largest entry; ties go to the lowest index.
template <class Derived>
int argmax(const Eigen::MatrixBase<Derived>& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return static_cast<int>(best);
}

template <class Derived>
int predict(const Network& net, const Eigen::MatrixBase<Derived>& x) {
  return argmax(forward(net, x));
}

/// Cross-entropy of softmax(logits) against label y, computed stably.
template <class Derived>
double cross_entropy(const Eigen::MatrixBase<Derived>& logits, int y) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits(y);
}

template <class Derived>
Vector softmax(const Eigen::MatrixBase<Derived>& logits) {
  Vector e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

/// Per-layer sensitivities of a scalar output s = seed . logits:
/// delta[l] = ds/dz_l and input[l] = activation feeding layer l, so
/// ds/dW_l = delta[l] * input[l]^T and ds/db_l = delta[l].
struct LayerFactor {
  Vector delta;
  Vector input;
};

inline std::vector<LayerFactor> backprop(const Network& net, const ForwardTrace& t, const Vector& seed) {
  const std::size_t L = net.depth();
  std::vector<LayerFactor> out(L);
  Vector delta = seed;
  for (std::size_t l = L; l-- > 0;) {
    out[l].delta = delta;
    out[l].input = t.activations[l];
    if (l == 0) break;
    delta = net.layer(l).weights.transpose() * delta;
    // ReLU subgradient at 0 is taken as 0.
    delta = (t.preactivations[l - 1].array() > 0.0).select(delta, 0.0);
  }
  return out;
}

/// Gradient with respect to the input x of seed . logits.
inline Vector backprop_input(const Network& net, const std::vector<LayerFactor>& factors) {
  return net.layer(0).weights.transpose() * factors.front().delta;
}

inline ParamVector flatten(const ParamLayout& layout, const std::vector<LayerFactor>& factors) {
  Vector g = Vector::Zero(layout.size());
  for (std::size_t l = 0; l < factors.size(); ++l) {
    const auto& b = layout.blocks()[l];
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        g.data() + b.weight_start, b.rows, b.cols) = factors[l].delta * factors[l].input.transpose();
    g.segment(b.bias_start, b.rows) = factors[l].delta;
  }
  return ParamVector(std::move(g), layout);
}

inline Vector unit_seed(const Network& net, int i) {
  check_label(net, i);
  Vector s = Vector::Zero(net.num_classes());
  s(i) = 1.0;
  return s;
}

/// (Sub)gradient of logit i with respect to all parameters.
template <class Derived>
ParamVector grad_output_params(const Network& net, const Eigen::MatrixBase<Derived>& x, int i) {
  Vector seed = unit_seed(net, i);
  const auto t = trace_forward(net, x);
  return flatten(net.layout(), backprop(net, t, seed));
}

/// (Sub)gradient of logit i with respect to the input.
template <class Derived>
Vector grad_output_input(const Network& net, const Eigen::MatrixBase<Derived>& x, int i) {
  Vector seed = unit_seed(net, i);
  const auto t = trace_forward(net, x);
  return backprop_input(net, backprop(net, t, seed));
}

/// Gradient of the single-example cross-entropy with respect to the input.
template <class Derived>
Vector grad_loss_input(const Network& net, const Eigen::MatrixBase<Derived>& x, int y) {
  check_label(net, y);
  const auto t = trace_forward(net, x);
  Vector seed = softmax(t.logits());
  seed(y) -= 1.0;
  return backprop_input(net, backprop(net, t, seed));
}

// ---------------------------------------------------------------------------
// Batched evaluation over datasets. Columns are processed in fixed-size
// chunks in a fixed order so results do not depend on anything but inputs.

inline constexpr Index kBatchChunk = 512;

/// Logits for every column of X.
template <class Derived>
Matrix forward_batch(const Network& net, const Eigen::MatrixBase<Derived>& X) {
  check_input(net, X.rows());
  Matrix a = X;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    Matrix z = net.layer(l).weights * a;
    z.colwise() += net.layer(l).biases;
    if (l + 1 < net.depth()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

inline std::vector<int> predict_batch(const Network& net, const Matrix& X) {
  std::vector<int> out(static_cast<std::size_t>(X.cols()));
  for (Index c0 = 0; c0 < X.cols(); c0 += kBatchChunk) {
    const Index n = std::min(kBatchChunk, X.cols() - c0);
    const Matrix logits = forward_batch(net, X.middleCols(c0, n));
    for (Index c = 0; c < n; ++c) out[static_cast<std::size_t>(c0 + c)] = argmax(logits.col(c));
  }
  return out;
}

/// Sum of cross-entropies over a block and, if requested, the summed parameter
/// gradient (accumulated into grad) and/or the per-column input gradients.
struct BatchLossResult {
  double loss_sum = 0.0;
  Matrix input_grads;  // filled only when requested
  Matrix logits;
};

template <class Derived>
BatchLossResult batch_loss(const Network& net, const Eigen::MatrixBase<Derived>& X,
                           std::span<const int> labels, Vector* param_grad_sum,
                           bool want_input_grads) {
  check_input(net, X.rows());
  const std::size_t L = net.depth();
  std::vector<Matrix> acts;
  acts.reserve(L + 1);
  acts.emplace_back(X);
  std::vector<Matrix> pre;
  pre.reserve(L);
  for (std::size_t l = 0; l < L; ++l) {
    Matrix z = net.layer(l).weights * acts.back();
    z.colwise() += net.layer(l).biases;
    pre.push_back(z);
    if (l + 1 < L) z = z.cwiseMax(0.0);
    acts.push_back(std::move(z));
  }
  BatchLossResult res;
  const Matrix& logits = acts.back();
  Matrix delta(logits.rows(), logits.cols());
  for (Index c = 0; c < logits.cols(); ++c) {
    const int y = labels[static_cast<std::size_t>(c)];
    check_label(net, y);
    res.loss_sum += cross_entropy(logits.col(c), y);
    delta.col(c) = softmax(logits.col(c));
    delta(y, c) -= 1.0;
  }
  res.logits = logits;
  if (!param_grad_sum && !want_input_grads) return res;
  const ParamLayout layout = net.layout();
  for (std::size_t l = L; l-- > 0;) {
    if (param_grad_sum) {
      const auto& b = layout.blocks()[l];
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          param_grad_sum->data() + b.weight_start, b.rows, b.cols) += delta * acts[l].transpose();
      param_grad_sum->segment(b.bias_start, b.rows) += delta.rowwise().sum();
    }
    if (l == 0) {
      if (want_input_grads) res.input_grads = net.layer(0).weights.transpose() * delta;
      break;
    }
    delta = net.layer(l).weights.transpose() * delta;
    delta = (pre[l - 1].array() > 0.0).select(delta, 0.0);
  }
  return res;
}

inline void require_nonempty(const LabeledDataset& data) {
  if (data.empty()) throw DomainError("dataset is empty");
}

/// Mean softmax cross-entropy over the dataset.
inline double loss(const Network& net, const LabeledDataset& data) {
  require_nonempty(data);
  double sum = 0.0;
  const Matrix& X = data.inputs();
  for (Index c0 = 0; c0 < X.cols(); c0 += kBatchChunk) {
    const Index n = std::min(kBatchChunk, X.cols() - c0);
    sum += batch_loss(net, X.middleCols(c0, n),
                      std::span<const int>(data.labels()).subspan(static_cast<std::size_t>(c0),
                                                                  static_cast<std::size_t>(n)),
                      nullptr, false)
               .loss_sum;
  }
  return sum / static_cast<double>(data.size());
}

/// Loss value and its exact parameter gradient in one pass.
inline std::pair<double, ParamVector> loss_and_grad(const Network& net, const LabeledDataset& data) {
  require_nonempty(data);
  ParamLayout layout = net.layout();
  Vector g = Vector::Zero(layout.size());
  double sum = 0.0;
  const Matrix& X = data.inputs();
  for (Index c0 = 0; c0 < X.cols(); c0 += kBatchChunk) {
    const Index n = std::min(kBatchChunk, X.cols() - c0);
    sum += batch_loss(net, X.middleCols(c0, n),
                      std::span<const int>(data.labels()).subspan(static_cast<std::size_t>(c0),
                                                                  static_cast<std::size_t>(n)),
                      &g, false)
               .loss_sum;
  }
  const double inv = 1.0 / static_cast<double>(data.size());
  return {sum * inv, ParamVector(g * inv, std::move(layout))};
}

inline ParamVector grad_loss_params(const Network& net, const LabeledDataset& data) {
  return loss_and_grad(net, data).second;
}

/// alpha * wk + (1 - alpha) * w0.
inline ParamVector blend(const ParamVector& w0, const ParamVector& wk, double alpha) {
  if (w0.size() != wk.size() || !(w0.layout == wk.layout))
    throw ShapeError("blend: parameter vectors have different layouts");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("blend: alpha must lie in [0,1]");
  if (alpha == 1.0) return wk;
  if (alpha == 0.0) return w0;
  return ParamVector(alpha * wk.values + (1.0 - alpha) * w0.values, w0.layout);
}

}  // namespace advcorr
