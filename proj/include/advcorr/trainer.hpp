#pragma once

// Mini-batch training of dense ReLU classifiers from a seeded initialization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "advcorr/errors.hpp"
#include "advcorr/nn.hpp"
#include "advcorr/violation.hpp"

namespace advcorr {

enum class OptimizerKind { sgd, adam };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

struct TrainConfig {
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  double momentum = 0.9;  // sgd only

  void validate() const {
    if (epochs < 1) throw ConfigError("train epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("train learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train momentum must lie in [0,1)");
  }
};

/// He-style uniform fan-in initialization, zero biases.
inline Network init_network(const Architecture& arch, std::mt19937_64& rng) {
  Network net = Network::zeros(arch);
  for (std::size_t l = 0; l < net.depth(); ++l) {
    auto& L = net.mutable_layer(l);
    const double bound = std::sqrt(6.0 / static_cast<double>(L.in_dim()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index c = 0; c < L.weights.cols(); ++c)
      for (Index r = 0; r < L.weights.rows(); ++r) L.weights(r, c) = u(rng);
  }
  return net;
}

inline Network pretrain(const Architecture& arch, const LabeledDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  require_nonempty(data);
  if (arch.input_dim != data.input_dim())
    throw ShapeError("architecture input_dim " + std::to_string(arch.input_dim) +
                     " does not match dataset dimension " + std::to_string(data.input_dim()));
  if (arch.num_classes < data.num_classes())
    throw ShapeError("architecture has fewer outputs than the dataset has classes");

  std::mt19937_64 rng(cfg.seed);
  Network net = init_network(arch, rng);
  ParamVector w = net.to_params();
  const Index J = w.size();
  Vector m1 = Vector::Zero(J), m2 = Vector::Zero(J);
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::int64_t step = 0;

  std::vector<Index> order(data.size());
  std::iota(order.begin(), order.end(), Index{0});
  const auto B = static_cast<std::size_t>(cfg.batch_size);
  Matrix Xb;
  std::vector<int> yb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b0 = 0; b0 < order.size(); b0 += B) {
      const std::size_t n = std::min(B, order.size() - b0);
      Xb.resize(data.input_dim(), static_cast<Index>(n));
      yb.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        Xb.col(static_cast<Index>(k)) = data.inputs().col(order[b0 + k]);
        yb[k] = data.labels()[static_cast<std::size_t>(order[b0 + k])];
      }
      Vector g = Vector::Zero(J);
      batch_loss(net, Xb, yb, &g, false);
      g /= static_cast<double>(n);
      ++step;
      if (cfg.optimizer == OptimizerKind::adam) {
        m1 = beta1 * m1 + (1.0 - beta1) * g;
        m2 = beta2 * m2 + (1.0 - beta2) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        w.values.array() -=
            cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + adam_eps);
      } else {
        m1 = cfg.momentum * m1 + g;
        w.values -= cfg.learning_rate * m1;
      }
      net.set_params(w);
    }
  }
  if (!w.values.allFinite()) throw NumericalError("training diverged (non-finite parameters)");
  return net;
}

/// Training set with the adversarial inputs (and their true labels) appended.
inline LabeledDataset append_adversarial(const LabeledDataset& train,
                                         const std::vector<AdversarialExample>& adv) {
  Matrix X(train.input_dim(), static_cast<Index>(train.size() + adv.size()));
  X.leftCols(static_cast<Index>(train.size())) = train.inputs();
  std::vector<int> labels = train.labels();
  for (std::size_t k = 0; k < adv.size(); ++k) {
    if (adv[k].x_tilde.size() != train.input_dim()) throw ShapeError("adversarial input dimension mismatch");
    X.col(static_cast<Index>(train.size() + k)) = adv[k].x_tilde;
    labels.push_back(adv[k].y);
  }
  return LabeledDataset(std::move(X), std::move(labels), train.num_classes());
}

/// Retrain from scratch with the adversarial points added to the training data.
inline Network retrain_with_adversarial(const Architecture& arch, const LabeledDataset& train,
                                        const std::vector<AdversarialExample>& adv, const TrainConfig& cfg) {
  return pretrain(arch, append_adversarial(train, adv), cfg);
}

inline double evaluate_accuracy(const Network& net, const LabeledDataset& data) {
  require_nonempty(data);
  const auto pred = predict_batch(net, data.inputs());
  std::size_t correct = 0;
  for (std::size_t n = 0; n < data.size(); ++n) correct += pred[n] == data.label(n);
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace advcorr
