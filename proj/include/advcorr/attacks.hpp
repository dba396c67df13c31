#pragma once

// Adversarial data generation (FGSM, PGD), violation-ranked adversarial set
// construction, attacked accuracy and Monte Carlo resilience estimates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "advcorr/errors.hpp"
#include "advcorr/nn.hpp"
#include "advcorr/violation.hpp"

namespace advcorr {

enum class AttackKind { fgsm, pgd };

inline const char* to_string(AttackKind k) { return k == AttackKind::fgsm ? "fgsm" : "pgd"; }

struct AttackConfig {
  AttackKind kind = AttackKind::pgd;
  double epsilon = 0.1;
  double step_size = 0.01;
  int iterations = 50;
  std::uint64_t seed = 0;

  void validate() const {
    // epsilon == 0 is accepted as the degenerate "no perturbation" attack.
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("attack epsilon must be >= 0");
    if (!(step_size > 0.0)) throw ConfigError("attack step_size must be > 0");
    if (iterations < 1) throw ConfigError("attack iterations must be >= 1");
  }

  /// 50 steps of 0.01 inside an l_inf ball of radius 0.1.
  static AttackConfig mnist_pgd() { return {AttackKind::pgd, 0.1, 0.01, 50, 0}; }
  /// 3 steps of 3/255 inside an l_inf ball of radius 8/255.
  static AttackConfig cifar_pgd() { return {AttackKind::pgd, 8.0 / 255.0, 3.0 / 255.0, 3, 0}; }
  /// Single signed step of size epsilon (radius 0.1).
  static AttackConfig fgsm_preset() { return {AttackKind::fgsm, 0.1, 0.1, 1, 0}; }
};

inline double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Project onto the box B_eps(x0) intersected with [0,1]^m.
inline void project_ball(Vector& x, const Vector& x0, double eps) {
  x = x.array().max(x0.array() - eps).min(x0.array() + eps).max(0.0).min(1.0).matrix();
}

/// clip_[0,1](x + eps * sign(grad_x loss)), sign(0) = 0.
template <class Derived>
Vector fgsm(const Network& net, const Eigen::MatrixBase<Derived>& x, int y, double epsilon) {
  Vector x0 = x;
  const Vector g = grad_loss_input(net, x0, y);
  Vector out = x0 + epsilon * g.unaryExpr([](double v) { return sign0(v); });
  project_ball(out, x0, epsilon);
  return out;
}

/// Signed-gradient ascent on the loss from the clean point, projected after
/// every step. No random start.
template <class Derived>
Vector pgd(const Network& net, const Eigen::MatrixBase<Derived>& x, int y, const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.kind != AttackKind::pgd) throw ConfigError("pgd called with a non-pgd attack config");
  const Vector x0 = x;
  Vector cur = x0;
  for (int it = 0; it < cfg.iterations; ++it) {
    const Vector g = grad_loss_input(net, cur, y);
    cur += cfg.step_size * g.unaryExpr([](double v) { return sign0(v); });
    project_ball(cur, x0, cfg.epsilon);
  }
  return cur;
}

/// Attack every column of X at once. Column results equal fgsm/pgd on the
/// corresponding single input.
inline Matrix attack_batch(const Network& net, const Matrix& X, std::span<const int> labels,
                           const AttackConfig& cfg) {
  cfg.validate();
  Matrix out(X.rows(), X.cols());
  const int steps = cfg.kind == AttackKind::fgsm ? 1 : cfg.iterations;
  const double step = cfg.kind == AttackKind::fgsm ? cfg.epsilon : cfg.step_size;
  for (Index c0 = 0; c0 < X.cols(); c0 += kBatchChunk) {
    const Index n = std::min(kBatchChunk, X.cols() - c0);
    const Matrix x0 = X.middleCols(c0, n);
    const auto lab = labels.subspan(static_cast<std::size_t>(c0), static_cast<std::size_t>(n));
    Matrix cur = x0;
    for (int it = 0; it < steps; ++it) {
      const auto r = batch_loss(net, cur, lab, nullptr, true);
      cur += step * r.input_grads.unaryExpr([](double v) { return sign0(v); });
      cur = cur.array().max(x0.array() - cfg.epsilon).min(x0.array() + cfg.epsilon).max(0.0).min(1.0).matrix();
    }
    out.middleCols(c0, n) = cur;
  }
  return out;
}

/// Attack all correctly classified training points, keep the misclassified
/// ones, and pick the size/num_classes most violated per true label. Output
/// is grouped by label (ascending) and sorted by descending violation.
inline std::vector<AdversarialExample> generate_adv_dataset(const Network& net, const LabeledDataset& train,
                                                            std::size_t size, const AttackConfig& cfg) {
  require_nonempty(train);
  const auto C = static_cast<std::size_t>(net.num_classes());
  if (size == 0 || size % C != 0)
    throw ConfigError("adversarial set size " + std::to_string(size) +
                      " must be a positive multiple of the number of classes (" + std::to_string(C) + ")");
  const std::size_t per_label = size / C;

  const auto clean_pred = predict_batch(net, train.inputs());
  std::vector<Index> cols;
  std::vector<int> labels;
  for (std::size_t n = 0; n < train.size(); ++n)
    if (clean_pred[n] == train.label(n)) {
      cols.push_back(static_cast<Index>(n));
      labels.push_back(train.label(n));
    }
  Matrix X(train.input_dim(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) X.col(static_cast<Index>(k)) = train.inputs().col(cols[k]);
  const Matrix Xadv = attack_batch(net, X, labels, cfg);

  std::vector<std::vector<AdversarialExample>> by_label(C);
  for (Index c0 = 0; c0 < Xadv.cols(); c0 += kBatchChunk) {
    const Index n = std::min(kBatchChunk, Xadv.cols() - c0);
    const Matrix logits = forward_batch(net, Xadv.middleCols(c0, n));
    for (Index c = 0; c < n; ++c) {
      const auto k = static_cast<std::size_t>(c0 + c);
      const double v = margin_violation(logits.col(c), labels[k]);
      if (v > 0.0)
        by_label[static_cast<std::size_t>(labels[k])].push_back(
            {Xadv.col(c0 + c), labels[k], static_cast<std::size_t>(cols[k]), v});
    }
  }

  std::vector<AdversarialExample> out;
  std::vector<int> short_labels;
  for (std::size_t y = 0; y < C; ++y) {
    auto& pool = by_label[y];
    std::stable_sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
      return a.violation_at_gen > b.violation_at_gen;
    });
    if (pool.size() < per_label) short_labels.push_back(static_cast<int>(y));
    for (std::size_t k = 0; k < std::min(per_label, pool.size()); ++k) out.push_back(pool[k]);
  }
  if (!short_labels.empty()) {
    std::ostringstream os;
    os << "not enough misclassified adversarial points (need " << per_label << " per label) for labels:";
    for (int y : short_labels) os << ' ' << y << " (have " << by_label[static_cast<std::size_t>(y)].size() << ")";
    throw DataError(os.str());
  }
  return out;
}

/// Accuracy of predict on per-point attacked inputs.
inline double attack_accuracy(const Network& net, const LabeledDataset& data, const AttackConfig& cfg) {
  require_nonempty(data);
  const Matrix Xadv = attack_batch(net, data.inputs(), data.labels(), cfg);
  const auto pred = predict_batch(net, Xadv);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < data.size(); ++n) correct += pred[n] == data.label(n);
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Fraction of uniform samples from B_eps(x) intersected with [0,1]^m that
/// receive the same prediction as x.
template <class Derived>
double estimate_resilience(const Network& net, const Eigen::MatrixBase<Derived>& x, double epsilon,
                           std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw DomainError("estimate_resilience needs at least one sample");
  if (!(epsilon >= 0.0)) throw DomainError("estimate_resilience: epsilon must be >= 0");
  const Vector x0 = x;
  const int ref = predict(net, x0);
  const Vector lo = (x0.array() - epsilon).cwiseMax(0.0);
  const Vector hi = (x0.array() + epsilon).cwiseMin(1.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix samples(x0.size(), static_cast<Index>(n_samples));
  for (Index s = 0; s < samples.cols(); ++s)
    for (Index m = 0; m < x0.size(); ++m) samples(m, s) = lo(m) + (hi(m) - lo(m)) * unit(rng);
  const auto pred = predict_batch(net, samples);
  const auto same = std::count(pred.begin(), pred.end(), ref);
  return static_cast<double>(same) / static_cast<double>(n_samples);
}

}  // namespace advcorr
