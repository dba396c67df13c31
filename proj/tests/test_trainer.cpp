#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace advcorr;

namespace {

LabeledDataset separable_blobs(std::uint64_t seed) {
  SyntheticConfig c;
  c.kind = SyntheticKind::gaussian_blobs;
  c.n_per_class = 100;
  c.noise_std = 0.03;
  c.input_dim = 2;
  c.num_classes = 2;
  c.seed = seed;
  return make_synthetic(c);
}

}  // namespace

TEST(TrainConfig, RejectsInvalid) {
  TrainConfig c;
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  const auto d = separable_blobs(1);
  TrainConfig bad;
  bad.epochs = 0;
  EXPECT_THROW(pretrain({2, {4}, 2}, d, bad), ConfigError);
}

TEST(Pretrain, SeparableBlobsReachHighAccuracy) {
  const auto d = separable_blobs(3);
  // The centers must be far apart for the oracle to apply.
  const Matrix c = blob_centers({SyntheticKind::gaussian_blobs, 100, 0.03, 3, 2, 2});
  ASSERT_GT((c.col(0) - c.col(1)).norm(), 0.1);
  TrainConfig tc;
  tc.epochs = 10;
  tc.batch_size = 16;
  tc.learning_rate = 0.02;
  tc.seed = 7;
  const Network net = pretrain({2, {8}, 2}, d, tc);
  EXPECT_GE(evaluate_accuracy(net, d), 0.99);
}

TEST(Pretrain, DeterministicUnderSeed) {
  const auto d = separable_blobs(4);
  TrainConfig tc;
  tc.epochs = 3;
  tc.seed = 99;
  const Network a = pretrain({2, {5}, 2}, d, tc);
  const Network b = pretrain({2, {5}, 2}, d, tc);
  EXPECT_EQ(a.to_params().values, b.to_params().values);
  tc.seed = 100;
  const Network c = pretrain({2, {5}, 2}, d, tc);
  EXPECT_NE(a.to_params().values, c.to_params().values);
}

TEST(Pretrain, SgdOptimizerRuns) {
  const auto d = separable_blobs(5);
  TrainConfig tc;
  tc.optimizer = OptimizerKind::sgd;
  tc.learning_rate = 0.05;
  tc.epochs = 20;
  tc.batch_size = 10;
  const Network net = pretrain({2, {8}, 2}, d, tc);
  EXPECT_GE(evaluate_accuracy(net, d), 0.95);
}

TEST(Pretrain, DimensionMismatch) {
  const auto d = separable_blobs(6);
  EXPECT_THROW(pretrain({3, {4}, 2}, d, TrainConfig{}), ShapeError);
  EXPECT_THROW(pretrain({2, {4}, 1}, d, TrainConfig{}), ShapeError);
}

TEST(Retrain, EmptyAdversarialSetEqualsPretrain) {
  const auto d = separable_blobs(7);
  TrainConfig tc;
  tc.epochs = 2;
  tc.seed = 12;
  const Network a = pretrain({2, {4}, 2}, d, tc);
  const Network b = retrain_with_adversarial({2, {4}, 2}, d, {}, tc);
  EXPECT_EQ(a.to_params().values, b.to_params().values);
}

TEST(Retrain, ConcatenationLengthAndLabels) {
  const auto d = separable_blobs(8);
  std::vector<AdversarialExample> adv(3);
  for (int k = 0; k < 3; ++k) adv[static_cast<std::size_t>(k)] = {Vector::Constant(2, 0.1 * k), k % 2, 0, 1.0};
  const auto all = append_adversarial(d, adv);
  EXPECT_EQ(all.size(), d.size() + 3);
  EXPECT_EQ(all.label(d.size() + 1), 1);
  EXPECT_EQ(all.input(d.size() + 2), adv[2].x_tilde);
  TrainConfig tc;
  tc.epochs = 1;
  const Network a = retrain_with_adversarial({2, {4}, 2}, d, adv, tc);
  const Network b = pretrain({2, {4}, 2}, all, tc);
  EXPECT_EQ(a.to_params().values, b.to_params().values);
}

TEST(Accuracy, Counting) {
  Matrix W(2, 1);
  W << 1.0, -1.0;
  const Network net({DenseLayer{W, Vector::Zero(2)}});  // predicts 0 for x > 0, ties (x = 0) to 0
  Matrix X(1, 4);
  X << 0.5, 0.9, 0.2, 0.7;
  EXPECT_DOUBLE_EQ(evaluate_accuracy(net, LabeledDataset(X, {0, 0, 0, 0}, 2)), 1.0);
  EXPECT_DOUBLE_EQ(evaluate_accuracy(net, LabeledDataset(X, {1, 1, 1, 1}, 2)), 0.0);
  EXPECT_DOUBLE_EQ(evaluate_accuracy(net, LabeledDataset(X, {0, 1, 0, 1}, 2)), 0.5);
  EXPECT_THROW(evaluate_accuracy(net, LabeledDataset(Matrix(1, 0), {}, 2)), DomainError);
}
