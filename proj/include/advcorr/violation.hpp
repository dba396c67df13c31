#pragma once

// Adversarial examples and the classification-margin violation metric.

#include <algorithm>
#include <limits>
#include <vector>

#include "advcorr/errors.hpp"
#include "advcorr/nn.hpp"

namespace advcorr {

/// A perturbed training input together with its true label.
struct AdversarialExample {
  Vector x_tilde;
  int y = 0;
  std::size_t source_index = 0;
  double violation_at_gen = 0.0;
};

/// max(0, max_{i != y} f_i - f_y).
template <class Derived>
double margin_violation(const Eigen::MatrixBase<Derived>& logits, int y) {
  if (logits.size() < 2) throw DomainError("margin_violation needs at least two classes");
  if (y < 0 || y >= logits.size()) throw DomainError("margin_violation: label out of range");
  double worst = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < logits.size(); ++i)
    if (i != y) worst = std::max(worst, logits(i) - logits(y));
  return std::max(0.0, worst);
}

/// Sum of margin violations of the network over an adversarial set. Zero
/// means every adversarial point is classified correctly.
inline double total_violation(const Network& net, const std::vector<AdversarialExample>& adv) {
  if (adv.empty()) throw DomainError("total_violation: adversarial set is empty");
  double v = 0.0;
  for (const auto& a : adv) v += margin_violation(forward(net, a.x_tilde), a.y);
  return v;
}

}  // namespace advcorr
