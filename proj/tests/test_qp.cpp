#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "test_support.hpp"

using namespace advcorr;

namespace {

Cut dense_cut(const Vector& g, double r) {
  Cut c;
  c.normal = CutNormal::dense(g);
  c.rhs = r;
  return c;
}

/// Random cuts that all hold at a random point w_feas, with some made tight.
struct RandomQP {
  ParamVector anchor;
  CutPool pool;
  Vector w_feas;
};

RandomQP random_feasible_qp(Index J, std::size_t m, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RandomQP q;
  const ParamLayout layout = ParamLayout::flat(J);
  Vector a(J), wf(J);
  for (Index j = 0; j < J; ++j) a(j) = g(rng), wf(j) = g(rng);
  q.anchor = ParamVector(a, layout);
  q.w_feas = wf;
  q.pool = CutPool(layout, 1e-5, 0.0, 64);
  for (std::size_t i = 0; i < m; ++i) {
    Vector n(J);
    for (Index j = 0; j < J; ++j) n(j) = g(rng);
    const double slack = u(rng) < 0.3 ? 0.0 : u(rng);
    q.pool.append(dense_cut(n, n.dot(wf) + slack));
  }
  return q;
}

void expect_kkt(const QPSolution& s, const CutPool& pool, double tol) {
  ASSERT_EQ(s.duals.size(), static_cast<Index>(pool.size()));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const double lam = s.duals(static_cast<Index>(i));
    const double res = pool[i].residual(s.w.values, pool.layout());
    EXPECT_GE(lam, 0.0);
    EXPECT_LE(res, tol);
    EXPECT_LE(std::abs(lam * res), tol * (1.0 + std::abs(pool[i].rhs)));
  }
}

}  // namespace

TEST(Project, NoCutsReturnsAnchor) {
  CutPool pool(ParamLayout::flat(3));
  const ParamVector a(Vector::Constant(3, 0.7), pool.layout());
  const auto s = project(QPInstance{a, &pool, {}, {}, {}}, QPOptions{});
  EXPECT_EQ(s.status, QPStatus::optimal);
  EXPECT_EQ(s.w.values, a.values);
}

TEST(Project, AnalyticHalfspace) {
  CutPool pool(ParamLayout::flat(2));
  pool.append(dense_cut(Vector::Ones(2), 0.0));
  const ParamVector a(Vector::Ones(2), pool.layout());
  const auto s = project(QPInstance{a, &pool, {}, {}, {}}, QPOptions{});
  EXPECT_EQ(s.status, QPStatus::optimal);
  EXPECT_NEAR(s.w.values(0), 0.0, 1e-12);
  EXPECT_NEAR(s.w.values(1), 0.0, 1e-12);
  EXPECT_NEAR(s.duals(0), 1.0, 1e-12);
  EXPECT_NEAR(s.objective(a), 2.0, 1e-12);
}

TEST(Project, InactiveCutLeavesAnchor) {
  CutPool pool(ParamLayout::flat(2));
  pool.append(dense_cut(Vector::Ones(2), 5.0));
  const ParamVector a(Vector::Ones(2), pool.layout());
  const auto s = project(QPInstance{a, &pool, {}, {}, {}}, QPOptions{});
  EXPECT_EQ(s.w.values, a.values);
  EXPECT_EQ(s.duals(0), 0.0);
  const auto bf = brute_force_project(a, pool);
  ASSERT_TRUE(bf.feasible);
  EXPECT_EQ(bf.w, a.values);
}

TEST(Project, MatchesEnumerationOracleOnRandomInstances) {
  std::mt19937_64 rng(70);
  std::uniform_int_distribution<int> dimJ(1, 6), cnt(1, 4);
  for (int t = 0; t < 200; ++t) {
    auto q = random_feasible_qp(dimJ(rng), static_cast<std::size_t>(cnt(rng)), rng);
    const auto s = project(QPInstance{q.anchor, &q.pool, {}, {}, {}}, QPOptions{});
    const auto bf = brute_force_project(q.anchor, q.pool);
    ASSERT_TRUE(bf.feasible);
    ASSERT_EQ(s.status, QPStatus::optimal) << "instance " << t;
    EXPECT_LT((s.w.values - bf.w).lpNorm<Eigen::Infinity>(), 1e-6) << "instance " << t;
    expect_kkt(s, q.pool, 1e-8);
    // Objective dominance over the known feasible point.
    EXPECT_LE(s.objective(q.anchor), (q.w_feas - q.anchor.values).squaredNorm() + 1e-9);
  }
}

TEST(Project, HildrethOnlyAlsoConvergesOnSmallInstances) {
  std::mt19937_64 rng(71);
  QPOptions opt;
  opt.active_set = false;
  opt.max_sweeps = 200000;
  for (int t = 0; t < 50; ++t) {
    auto q = random_feasible_qp(5, 3, rng);
    const auto s = project(QPInstance{q.anchor, &q.pool, {}, {}, {}}, opt);
    const auto bf = brute_force_project(q.anchor, q.pool);
    EXPECT_EQ(s.active_set_steps, 0);
    if (s.status != QPStatus::optimal) continue;  // degenerate instances may stall
    EXPECT_LT((s.w.values - bf.w).lpNorm<Eigen::Infinity>(), 1e-6);
  }
}

TEST(Project, IdempotentAndWarmStartAgnostic) {
  std::mt19937_64 rng(72);
  for (int t = 0; t < 50; ++t) {
    auto q = random_feasible_qp(6, 4, rng);
    const auto s1 = project(QPInstance{q.anchor, &q.pool, {}, {}, {}}, QPOptions{});
    const auto s2 = project(QPInstance{s1.w, &q.pool, {}, {}, {}}, QPOptions{});
    EXPECT_LT((s2.w.values - s1.w.values).lpNorm<Eigen::Infinity>(), 2e-8);
    Vector warm = Vector::Constant(4, 3.0);
    const auto s3 = project(QPInstance{q.anchor, &q.pool, {}, {}, warm}, QPOptions{});
    EXPECT_LT((s3.w.values - s1.w.values).lpNorm<Eigen::Infinity>(), 1e-6);
  }
}

TEST(Project, ConflictingParallelCutsAreInfeasible) {
  CutPool pool(ParamLayout::flat(2));
  Vector g(2);
  g << 1.0, 2.0;
  pool.append(dense_cut(g, -1.0));
  pool.append(dense_cut(-g, -1.0));
  const ParamVector a(Vector::Zero(2), pool.layout());
  EXPECT_FALSE(brute_force_project(a, pool).feasible);
  const auto s = project(QPInstance{a, &pool, {}, {}, {}}, QPOptions{});
  EXPECT_EQ(s.status, QPStatus::infeasible_detected);
  QPOptions hild;
  hild.active_set = false;
  hild.dual_bound = 100.0;  // duals grow by a constant per sweep here
  EXPECT_EQ(project(QPInstance{a, &pool, {}, {}, {}}, hild).status, QPStatus::infeasible_detected);
}

TEST(Project, ZeroNormalsAreSkipped) {
  CutPool pool(ParamLayout::flat(2));
  pool.append(dense_cut(Vector::Zero(2), 1.0));
  pool.append(dense_cut(Vector::Ones(2), 0.0));
  const ParamVector a(Vector::Ones(2), pool.layout());
  const auto s = project(QPInstance{a, &pool, {}, {}, {}}, QPOptions{});
  EXPECT_EQ(s.status, QPStatus::optimal);
  EXPECT_EQ(s.duals(0), 0.0);
  EXPECT_NEAR(s.w.values.norm(), 0.0, 1e-12);
}

TEST(Project, InputValidation) {
  CutPool pool(ParamLayout::flat(2));
  pool.append(dense_cut(Vector::Ones(2), 0.0));
  const ParamVector a(Vector::Ones(2), pool.layout());
  QPOptions bad;
  bad.tol = 0.0;
  EXPECT_THROW(project(QPInstance{a, &pool, {}, {}, {}}, bad), ConfigError);
  EXPECT_THROW(project(QPInstance{a, nullptr, {}, {}, {}}, QPOptions{}), DomainError);
  EXPECT_THROW(project(QPInstance{a, &pool, std::vector<bool>{false, false}, {}, {}}, QPOptions{}), DomainError);
  EXPECT_THROW(project(QPInstance{a, &pool, {}, {}, Vector::Constant(1, -1.0)}, QPOptions{}), DomainError);
  const ParamVector a3(Vector::Ones(3), ParamLayout::flat(3));
  EXPECT_THROW(project(QPInstance{a3, &pool, {}, {}, {}}, QPOptions{}), ShapeError);
}

TEST(Project, FactoredNetworkCutsAgreeWithDenseCopies) {
  std::mt19937_64 rng(73);
  const Network net = testsupport::random_network({3, 4, 3}, rng);
  std::vector<AdversarialExample> adv;
  for (int k = 0; k < 2; ++k) adv.push_back({testsupport::random_unit_box(3, rng), k, 0, 0.0});
  CutPool fac(net.layout());
  fac.append(make_adversary_cuts(net, adv, 0.5, 0.0));
  CutPool den(ParamLayout::flat(net.num_params()));
  for (const auto& c : fac.cuts()) den.append(dense_cut(c.normal.to_dense(fac.layout()), c.rhs));
  const auto a = net.to_params();
  const auto sf = project(QPInstance{a, &fac, {}, {}, {}}, QPOptions{});
  const auto sd = project(QPInstance{ParamVector(a.values, den.layout()), &den, {}, {}, {}}, QPOptions{});
  EXPECT_LT((sf.w.values - sd.w.values).lpNorm<Eigen::Infinity>(), 1e-9);
}

TEST(RestrictedProject, FixedCoordinatesStayAndMatchReducedOracle) {
  std::mt19937_64 rng(74);
  for (int t = 0; t < 50; ++t) {
    auto q = random_feasible_qp(6, 3, rng);
    std::vector<bool> mask{true, false, true, true, false, true};
    // Make the cuts feasible given the fixed coordinates at their anchor values.
    Vector wf = q.w_feas;
    for (Index j = 0; j < 6; ++j)
      if (!mask[static_cast<std::size_t>(j)]) wf(j) = q.anchor.values(j);
    CutPool pool(q.pool.layout());
    for (const auto& c : q.pool.cuts()) pool.append(dense_cut(c.normal.dense_values(), c.normal.dense_values().dot(wf) + 0.01));
    const auto s = project(QPInstance{q.anchor, &pool, mask, {}, {}}, QPOptions{});
    ASSERT_EQ(s.status, QPStatus::optimal);
    for (Index j : {1, 4}) EXPECT_EQ(s.w.values(j), q.anchor.values(j));
    // Reduced oracle over the four free coordinates.
    std::vector<Index> fr{0, 2, 3, 5};
    std::vector<Vector> normals;
    Vector rr(3), af(4);
    for (std::size_t i = 0; i < 3; ++i) {
      const Vector& g = pool[i].normal.dense_values();
      Vector n(4);
      for (std::size_t k = 0; k < 4; ++k) n(static_cast<Index>(k)) = g(fr[k]);
      normals.push_back(n);
      rr(static_cast<Index>(i)) = pool[i].rhs - g(1) * q.anchor.values(1) - g(4) * q.anchor.values(4);
    }
    for (std::size_t k = 0; k < 4; ++k) af(static_cast<Index>(k)) = q.anchor.values(fr[k]);
    const auto bf = brute_force_project(af, normals, rr);
    ASSERT_TRUE(bf.feasible);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(s.w.values(fr[k]), bf.w(static_cast<Index>(k)), 1e-6);
  }
}

// After a feasible restricted solve over J_v, re-solving from the same anchor
// over a disjoint free set (the rest fixed at the first solution) cannot
// improve: the new free coordinates already sit at their anchor values.
TEST(BlockCoordinate, DisjointReselectionKeepsSolution) {
  std::mt19937_64 rng(75);
  int checked = 0;
  for (int t = 0; t < 100 && checked < 50; ++t) {
    const Index J = 8;
    auto q = random_feasible_qp(J, 3, rng);
    std::vector<Index> perm(J);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<bool> m1(J, false), m2(J, false);
    for (Index k = 0; k < 4; ++k) m1[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])] = true;
    for (Index k = 4; k < J; ++k) m2[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])] = true;
    const auto s1 = project(QPInstance{q.anchor, &q.pool, m1, {}, {}}, QPOptions{});
    if (s1.status != QPStatus::optimal) continue;
    const auto s2 = project(QPInstance{q.anchor, &q.pool, m2, s1.w.values, {}}, QPOptions{});
    ASSERT_EQ(s2.status, QPStatus::optimal);
    EXPECT_LT((s2.w.values - s1.w.values).lpNorm<Eigen::Infinity>(), 1e-8);
    ++checked;
  }
  EXPECT_EQ(checked, 50);
}

TEST(BlockCoordinate, FeasibleAndNoBetterThanFullProjection) {
  std::mt19937_64 rng(76);
  for (int t = 0; t < 30; ++t) {
    const Network net = testsupport::random_network({4, 6, 3}, rng);
    std::vector<AdversarialExample> adv;
    for (int k = 0; k < 3; ++k) adv.push_back({testsupport::random_unit_box(4, rng), k, 0, 0.0});
    CutPool pool(net.layout());
    pool.append(make_adversary_cuts(net, adv, 0.1, 0.0));
    const auto a = net.to_params();
    const auto full = project(QPInstance{a, &pool, {}, {}, {}}, QPOptions{});
    ASSERT_EQ(full.status, QPStatus::optimal);
    const auto blk = run_block_coordinate(a, pool, BlockOptions{0.5, 1, static_cast<std::uint64_t>(t), a.layout.bias_mask()});
    if (blk.status != QPStatus::optimal) continue;
    EXPECT_LE(blk.max_violation, 1e-8);
    EXPECT_GE(blk.objective(a), full.objective(a) - 1e-9);
  }
}

TEST(BlockCoordinate, UnsampledWeightsKeepAnchorValues) {
  std::mt19937_64 rng(77);
  const Network net = testsupport::random_network({3, 5, 2}, rng);
  std::vector<AdversarialExample> adv{{testsupport::random_unit_box(3, rng), 0, 0, 0.0}};
  CutPool pool(net.layout());
  pool.append(make_adversary_cuts(net, adv, 1.0, 0.0));
  const auto a = net.to_params();
  const auto blk = run_block_coordinate(a, pool, BlockOptions{0.8, 1, 5, a.layout.bias_mask()});
  ASSERT_EQ(blk.status, QPStatus::optimal);
  // floor(0.2 * 15) = 3 weights of layer 0 and floor(0.2 * 10) = 2 of layer 1 move at most.
  int moved0 = 0, moved1 = 0;
  const auto& b = a.layout.blocks();
  for (Index j = 0; j < b[0].rows * b[0].cols; ++j) moved0 += blk.w.values(b[0].weight_start + j) != a.values(b[0].weight_start + j);
  for (Index j = 0; j < b[1].rows * b[1].cols; ++j) moved1 += blk.w.values(b[1].weight_start + j) != a.values(b[1].weight_start + j);
  EXPECT_LE(moved0, 3);
  EXPECT_LE(moved1, 2);
  EXPECT_LE(blk.max_violation, 1e-8);
}

TEST(BlockCoordinate, SetSizesUseFloorWithMinimumOne) {
  // One weight per layer group: floor(0.2 * 1) = 0 is lifted to 1, so the lone
  // weight is always free and the result equals the full projection.
  CutPool pool(ParamLayout::flat(1));
  pool.append(dense_cut(Vector::Ones(1), 0.0));
  const ParamVector a(Vector::Ones(1), pool.layout());
  const auto blk = run_block_coordinate(a, pool, BlockOptions{0.8, 1, 1, {}});
  EXPECT_EQ(blk.status, QPStatus::optimal);
  EXPECT_NEAR(blk.w.values(0), 0.0, 1e-12);
  EXPECT_EQ(detail::floor_at_least_one(0.2), 1u);
  EXPECT_EQ(detail::floor_at_least_one(2.9), 2u);
}

TEST(BlockCoordinate, InfeasibleRestrictionEnlargesFreeSet) {
  // Feasible set: x0 = x1 in [-1.25, -1]. Any free set missing x0 or x1 is infeasible.
  CutPool pool(ParamLayout::flat(4));
  Vector g1(4), g2(4);
  g1 << 1, 1, 0, 0;
  g2 << 1, -1, 0, 0;
  pool.append(dense_cut(g1, -2.0));
  pool.append(dense_cut(-g1, 2.5));
  pool.append(dense_cut(g2, 0.0));
  pool.append(dense_cut(-g2, 0.0));
  const ParamVector a(Vector::Zero(4), pool.layout());
  int enlarged_ok = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto blk = run_block_coordinate(a, pool, BlockOptions{0.5, 1, seed, {}});
    if (blk.status == QPStatus::optimal) {
      EXPECT_NEAR(blk.w.values(0), -1.0, 1e-6);
      EXPECT_NEAR(blk.w.values(1), -1.0, 1e-6);
      ++enlarged_ok;
    } else {
      EXPECT_EQ(blk.status, QPStatus::infeasible_detected);
    }
  }
  EXPECT_GT(enlarged_ok, 0);
}

TEST(BlockCoordinate, Validation) {
  CutPool pool(ParamLayout::flat(2));
  const ParamVector a(Vector::Zero(2), pool.layout());
  EXPECT_THROW(run_block_coordinate(a, pool, BlockOptions{1.0, 1, 0, {}}), ConfigError);
  EXPECT_THROW(run_block_coordinate(a, pool, BlockOptions{0.5, 0, 0, {}}), ConfigError);
  EXPECT_THROW(run_block_coordinate(a, pool, BlockOptions{0.5, 1, 0, {true}}), ShapeError);
}
