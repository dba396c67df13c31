#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"

using namespace advcorr;
using testsupport::random_network;
using testsupport::random_unit_box;

namespace {

bool inside_ball(const Vector& out, const Vector& x0, double eps) {
  return (out - x0).lpNorm<Eigen::Infinity>() <= eps + 1e-15 && out.minCoeff() >= 0.0 && out.maxCoeff() <= 1.0;
}

// Logit difference f1 - f0 = x0 - x1 (+ bias): a 2-class affine net.
Network two_class_affine() {
  Matrix W(2, 2);
  W << 0.5, 1.0, 1.5, 0.0;
  Vector b(2);
  b << 0.0, -0.25;
  return Network({DenseLayer{W, b}});
}

}  // namespace

TEST(AttackConfig, PresetsAndValidation) {
  const auto m = AttackConfig::mnist_pgd();
  EXPECT_EQ(m.iterations, 50);
  EXPECT_DOUBLE_EQ(m.step_size, 0.01);
  EXPECT_DOUBLE_EQ(m.epsilon, 0.1);
  const auto c = AttackConfig::cifar_pgd();
  EXPECT_EQ(c.iterations, 3);
  EXPECT_DOUBLE_EQ(c.step_size, 3.0 / 255.0);
  EXPECT_DOUBLE_EQ(c.epsilon, 8.0 / 255.0);
  AttackConfig bad = m;
  bad.step_size = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = m;
  bad.epsilon = -0.1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = m;
  bad.iterations = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = AttackConfig::fgsm_preset();
  EXPECT_THROW(pgd(two_class_affine(), Vector::Constant(2, 0.5), 0, bad), ConfigError);
}

TEST(Fgsm, ZeroGradientLeavesInputUnchanged) {
  const Network net({DenseLayer{Matrix::Zero(3, 4), Vector::Zero(3)}});
  const Vector x = Vector::Constant(4, 0.4);
  EXPECT_EQ(fgsm(net, x, 1, 0.1), x);
}

TEST(Fgsm, HandGradientOnAffineNet) {
  const Network net = two_class_affine();
  Vector x(2);
  x << 0.5, 0.95;
  // Loss gradient wrt x for label 0 is (p1)(W1 - W0) = p1 * (1.0, -1.0):
  // step +eps on x0, -eps on x1.
  Vector expect(2);
  expect << 0.6, 0.85;
  EXPECT_LT((fgsm(net, x, 0, 0.1) - expect).norm(), 1e-15);
  // Label 1 reverses the direction; the upper clip keeps x1 at 1.
  Vector expect1(2);
  expect1 << 0.4, 1.0;
  EXPECT_LT((fgsm(net, x, 1, 0.1) - expect1).norm(), 1e-15);
}

TEST(Attacks, OutputsStayInBall) {
  std::mt19937_64 rng(31);
  AttackConfig cfg = AttackConfig::mnist_pgd();
  cfg.iterations = 10;
  cfg.step_size = 0.03;
  for (int t = 0; t < 40; ++t) {
    const Network net = random_network({5, 6, 3}, rng);
    const Vector x = random_unit_box(5, rng);
    EXPECT_TRUE(inside_ball(fgsm(net, x, t % 3, 0.1), x, 0.1));
    EXPECT_TRUE(inside_ball(pgd(net, x, t % 3, cfg), x, 0.1));
  }
}

TEST(Attacks, OnePgdStepWithLargeStepIsFgsm) {
  std::mt19937_64 rng(32);
  for (int t = 0; t < 30; ++t) {
    const Network net = random_network({4, 5, 3}, rng);
    const Vector x = random_unit_box(4, rng);
    AttackConfig cfg{AttackKind::pgd, 0.07, 0.2, 1, 0};
    EXPECT_EQ(pgd(net, x, 1, cfg), fgsm(net, x, 1, 0.07));
  }
}

TEST(Attacks, BatchMatchesSingle) {
  std::mt19937_64 rng(33);
  const Network net = random_network({4, 6, 3}, rng);
  const auto d = testsupport::random_dataset(4, 3, 20, rng);
  AttackConfig cfg = AttackConfig::mnist_pgd();
  cfg.iterations = 7;
  const Matrix out = attack_batch(net, d.inputs(), d.labels(), cfg);
  for (std::size_t n = 0; n < d.size(); ++n)
    EXPECT_LT((out.col(static_cast<Index>(n)) - pgd(net, d.input(n), d.label(n), cfg)).lpNorm<Eigen::Infinity>(), 1e-14);
  const Matrix fo = attack_batch(net, d.inputs(), d.labels(), AttackConfig::fgsm_preset());
  for (std::size_t n = 0; n < d.size(); ++n)
    EXPECT_LT((fo.col(static_cast<Index>(n)) - fgsm(net, d.input(n), d.label(n), 0.1)).lpNorm<Eigen::Infinity>(), 1e-14);
}

TEST(AttackAccuracy, ZeroEpsilonEqualsClean) {
  std::mt19937_64 rng(34);
  const Network net = random_network({4, 6, 3}, rng);
  const auto d = testsupport::random_dataset(4, 3, 50, rng);
  AttackConfig cfg = AttackConfig::mnist_pgd();
  cfg.epsilon = 0.0;
  EXPECT_DOUBLE_EQ(attack_accuracy(net, d, cfg), evaluate_accuracy(net, d));
}

class GenerateAdv : public ::testing::Test {
 protected:
  void SetUp() override {
    // Overlapping blobs: a trained model whose every label has many flippable points.
    SyntheticConfig sc{SyntheticKind::gaussian_blobs, 150, 0.12, 36, 6, 5};
    train = make_synthetic(sc);
    TrainConfig tc;
    tc.epochs = 5;
    tc.learning_rate = 0.01;
    tc.seed = 36;
    net = pretrain(Architecture{6, {8}, 5}, train, tc);
    cfg = AttackConfig::mnist_pgd();
    cfg.epsilon = 0.15;
    cfg.step_size = 0.02;
    cfg.iterations = 15;
  }
  Network net;
  LabeledDataset train;
  AttackConfig cfg;
};

TEST_F(GenerateAdv, QuotaOrderingAndDefinition) {
  const auto adv = generate_adv_dataset(net, train, 10, cfg);
  ASSERT_EQ(adv.size(), 10u);
  for (int y = 0; y < 5; ++y) {
    // Two per label, contiguous, ascending label order.
    EXPECT_EQ(adv[static_cast<std::size_t>(2 * y)].y, y);
    EXPECT_EQ(adv[static_cast<std::size_t>(2 * y + 1)].y, y);
    EXPECT_GE(adv[static_cast<std::size_t>(2 * y)].violation_at_gen, adv[static_cast<std::size_t>(2 * y + 1)].violation_at_gen);
  }
  for (const auto& a : adv) {
    const Vector x0 = train.input(a.source_index);
    EXPECT_EQ(predict(net, x0), a.y);
    EXPECT_NE(predict(net, a.x_tilde), a.y);
    EXPECT_TRUE(inside_ball(a.x_tilde, x0, cfg.epsilon));
    EXPECT_DOUBLE_EQ(a.violation_at_gen, margin_violation(forward(net, a.x_tilde), a.y));
    EXPECT_GT(a.violation_at_gen, 0.0);
  }
}

TEST_F(GenerateAdv, TopViolatorsPerLabelMatchResortOracle) {
  const auto adv = generate_adv_dataset(net, train, 15, cfg);
  // Oracle: attack every point independently, compute violations, sort.
  std::vector<std::vector<double>> per_label(5);
  for (std::size_t n = 0; n < train.size(); ++n) {
    if (predict(net, train.input(n)) != train.label(n)) continue;  // only clean-correct points are attacked
    const Vector xa = pgd(net, train.input(n), train.label(n), cfg);
    const double v = margin_violation(forward(net, xa), train.label(n));
    if (v > 0) per_label[static_cast<std::size_t>(train.label(n))].push_back(v);
  }
  for (int y = 0; y < 5; ++y) {
    auto& v = per_label[static_cast<std::size_t>(y)];
    std::sort(v.rbegin(), v.rend());
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(adv[static_cast<std::size_t>(3 * y + k)].violation_at_gen, v[static_cast<std::size_t>(k)], 1e-12);
  }
}

TEST_F(GenerateAdv, AttackAccuracyCountsFlips) {
  const Matrix adv = attack_batch(net, train.inputs(), train.labels(), cfg);
  std::size_t attacked = 0, lost = 0;
  for (std::size_t n = 0; n < train.size(); ++n) {
    const bool c = predict(net, train.input(n)) == train.label(n);
    const bool a = predict(net, adv.col(static_cast<Index>(n))) == train.label(n);
    attacked += a;
    lost += c && !a;
  }
  ASSERT_GT(lost, 0u);
  EXPECT_DOUBLE_EQ(attack_accuracy(net, train, cfg), static_cast<double>(attacked) / static_cast<double>(train.size()));
  EXPECT_LT(attack_accuracy(net, train, cfg), evaluate_accuracy(net, train));
}

TEST_F(GenerateAdv, SizeMustBeMultipleOfClasses) {
  EXPECT_THROW(generate_adv_dataset(net, train, 7, cfg), ConfigError);
  EXPECT_THROW(generate_adv_dataset(net, train, 0, cfg), ConfigError);
}

TEST(GenerateAdvShortfall, RobustNetReportsLabels) {
  // Constant classifier: predicts 0 everywhere; nothing can be flipped.
  Vector b(3);
  b << 1.0, 0.0, 0.0;
  const Network net({DenseLayer{Matrix::Zero(3, 2), b}});
  Matrix X = Matrix::Constant(2, 6, 0.5);
  const LabeledDataset d(X, {0, 0, 1, 1, 2, 2}, 3);
  try {
    generate_adv_dataset(net, d, 3, AttackConfig::mnist_pgd());
    FAIL() << "expected a shortfall";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("labels: 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find(" 1 "), std::string::npos) << msg;
    EXPECT_NE(msg.find(" 2 "), std::string::npos) << msg;
  }
}

TEST(Resilience, ConstantClassifierAndDegenerateBall) {
  Vector b(2);
  b << 0.0, 1.0;
  const Network constant({DenseLayer{Matrix::Zero(2, 3), b}});
  EXPECT_DOUBLE_EQ(estimate_resilience(constant, Vector::Constant(3, 0.5), 0.3, 500, 1), 1.0);
  std::mt19937_64 rng(40);
  const Network net = random_network({3, 4, 2}, rng);
  EXPECT_DOUBLE_EQ(estimate_resilience(net, Vector::Constant(3, 0.5), 0.0, 100, 2), 1.0);
  EXPECT_THROW(estimate_resilience(net, Vector::Constant(3, 0.5), 0.1, 0, 2), DomainError);
}

TEST(Resilience, OneDimensionalThresholdMatchesAnalyticFraction) {
  // f1 - f0 = x - 0.55: class 1 for x > 0.55. At x = 0.6 with eps = 0.1 the
  // ball is [0.5, 0.7]; the fraction classified as 1 is (0.7 - 0.55) / 0.2.
  Matrix W(2, 1);
  W << 0.0, 1.0;
  Vector b(2);
  b << 0.0, -0.55;
  const Network net({DenseLayer{W, b}});
  const double p = 0.75;
  const std::size_t n = 20000;
  const double est = estimate_resilience(net, Vector::Constant(1, 0.6), 0.1, n, 9);
  const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
  EXPECT_NEAR(est, p, 3 * sigma);
  // Clipping to [0,1]: at x = 0.98 the ball is [0.88, 1], always class 1.
  EXPECT_DOUBLE_EQ(estimate_resilience(net, Vector::Constant(1, 0.98), 0.1, 1000, 9), 1.0);
}
