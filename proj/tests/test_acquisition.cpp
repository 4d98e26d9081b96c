#include "htbo/acquisition.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace htbo;

namespace {

Hyperparams hp1(double amp, double ls, double noise, double mean) {
  Hyperparams hp;
  hp.amplitude = amp;
  hp.length_scales = Vector::Constant(1, ls);
  hp.noise_var = noise;
  hp.mean_const = mean;
  return hp;
}

Dataset small_data() {
  Dataset d(Bounds::unit(1));
  const double xs[] = {0.1, 0.35, 0.5, 0.8, 0.95}, ys[] = {0.2, 1.0, 0.4, -0.3, 0.1};
  for (int i = 0; i < 5; ++i) d.add(Vector::Constant(1, xs[i]), ys[i]);
  return d;
}

EnsembleMember member(const Dataset& data, const Hyperparams& hp) { return {hp, GpPosterior::fit(data, hp)}; }

}  // namespace

TEST(ExpectedImprovement, ZeroVarianceIsExactlyZero) {
  for (double mu : {-3.0, 0.0, 0.5, 10.0}) EXPECT_EQ(expected_improvement(mu, 0.0, 0.2), 0.0);
}

TEST(ExpectedImprovement, MonteCarloReferencePoints) {
  std::mt19937_64 rng(1);
  const double a = oracle::monte_carlo_ei(0.0, 1.0, 0.0, rng), b = oracle::monte_carlo_ei(2.0, 1.0, 0.0, rng);
  EXPECT_NEAR(a, 0.3989, 1e-3);
  EXPECT_NEAR(b, 2.0085, 1e-3);
  EXPECT_NEAR(expected_improvement(0.0, 1.0, 0.0), a, 1e-3);
  EXPECT_NEAR(expected_improvement(2.0, 1.0, 0.0), b, 1e-3);
}

TEST(ExpectedImprovement, MatchesMonteCarloOnRandomTriples) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> mu(-2.0, 2.0), sig(0.05, 2.0), inc(-2.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    const double m = mu(rng), s = sig(rng), f = inc(rng);
    ASSERT_NEAR(expected_improvement(m, s, f), oracle::monte_carlo_ei(m, s, f, rng), 1e-3) << m << " " << s << " " << f;
  }
}

TEST(ExpectedImprovement, NonNegativeAndMonotoneInMean) {
  for (double s : {0.01, 0.3, 2.0}) {
    double prev = 0.0;
    for (double m = -20.0; m <= 20.0; m += 0.05) {
      const double e = expected_improvement(m, s, 0.0);
      ASSERT_GE(e, 0.0);
      if (prev > std::numeric_limits<double>::min()) ASSERT_GE(e, prev);  // subnormal tail is rounding noise
      prev = e;
    }
  }
}

TEST(EnsembleEi, SingleSampleIsComposition) {
  const Dataset data = small_data();
  const Hyperparams hp = hp1(0.5, 0.2, 1e-3, 0.1);
  Tree t = Tree::single_leaf(data.size());
  t.node(0).ensemble.push_back(member(data, hp));
  const Vector x = Vector::Constant(1, 0.62);
  const auto p = GpPosterior::fit(data, hp).predict(x);
  EXPECT_EQ(ei_over_tree(t, x, 0.9), expected_improvement(p.mean, std::sqrt(p.var), 0.9));
}

TEST(EnsembleEi, IdenticalSamplesEqualSingleSample) {
  const Dataset data = small_data();
  const Hyperparams hp = hp1(0.5, 0.2, 1e-3, 0.1);
  std::vector<EnsembleMember> one{member(data, hp)}, four(4, member(data, hp));
  const Vector x = Vector::Constant(1, 0.7);
  EXPECT_NEAR(ensemble_ei(four, x, 0.5), ensemble_ei(one, x, 0.5), 1e-15);
  EXPECT_THROW(ensemble_ei({}, x, 0.5), Error);
}

TEST(EnsembleEi, AveragesOverSamples) {
  const Dataset data = small_data();
  const Hyperparams a = hp1(0.5, 0.2, 1e-3, 0.1), b = hp1(2.0, 0.05, 1e-2, -0.2);
  const std::vector<EnsembleMember> e{member(data, a), member(data, b)};
  const Vector x = Vector::Constant(1, 0.25);
  const double ea = ensemble_ei({member(data, a)}, x, 0.8), eb = ensemble_ei({member(data, b)}, x, 0.8);
  EXPECT_NEAR(ensemble_ei(e, x, 0.8), 0.5 * (ea + eb), 1e-15);
}

TEST(EnsembleEi, BoundaryUsesLeftLeaf) {
  Dataset data(Bounds::unit(1));
  for (int i = 0; i < 10; ++i) data.add(Vector::Constant(1, 0.1 * i), i < 5 ? 0.0 : 9.0);
  Tree t = build_tree(data, 5);
  ASSERT_TRUE(t.root().split);
  const Index L = t.root().split->left, R = t.root().split->right;
  t.node(L).ensemble.push_back(member(data.subset(t.node(L).indices), hp1(1.0, 0.2, 1e-2, 0.0)));
  t.node(R).ensemble.push_back(member(data.subset(t.node(R).indices), hp1(5.0, 0.1, 1e-2, 9.0)));
  const Vector x = Vector::Constant(1, t.root().split->threshold);
  EXPECT_EQ(ei_over_tree(t, x, 1.0), ensemble_ei(t.node(L).ensemble, x, 1.0));
  EXPECT_NE(ei_over_tree(t, x, 1.0), ensemble_ei(t.node(R).ensemble, x, 1.0));
}

TEST(EnsembleEi, UnfittedLeafIsAnError) {
  const Tree t = Tree::single_leaf(3);
  EXPECT_THROW(ei_over_tree(t, Vector::Zero(1), 0.0), Error);
}

TEST(NextQuery, TiesGoToFirstCandidate) {
  Tree t = Tree::single_leaf(1);
  t.node(0).ensemble.push_back({hp1(1.0, 0.1, 0.0, 0.0), std::nullopt});  // prior everywhere
  CandidateSet c{CandidateSet::Kind::sobol_grid, {Vector::Constant(1, 0.9), Vector::Constant(1, 0.2), Vector::Constant(1, 0.5)}, {}};
  const auto q = next_query(t, c, 0.0);
  EXPECT_EQ(q.position, 0u);
  EXPECT_EQ(q.x[0], 0.9);
  EXPECT_FALSE(q.row);
}

TEST(NextQuery, PoolOfThreePicksLargestEi) {
  const Dataset data = small_data();
  Tree t = Tree::single_leaf(data.size());
  t.node(0).ensemble.push_back(member(data, hp1(0.5, 0.15, 1e-3, 0.1)));
  PoolState pool({Vector::Constant(1, 0.1), Vector::Constant(1, 0.4), Vector::Constant(1, 0.99)});
  Index expected = 0;
  double best = -1.0;
  for (Index r = 0; r < 3; ++r) {
    const auto p = t.root().ensemble[0].predict(pool.point(r));
    const double e = expected_improvement(p.mean, std::sqrt(p.var), 1.0);
    if (e > best) best = e, expected = r;
  }
  const auto q = next_query(t, pool, 1.0);
  EXPECT_EQ(*q.row, expected);
  EXPECT_NEAR(q.ei, best, 1e-12);
  EXPECT_TRUE(pool.queried(expected));
  EXPECT_EQ(pool.remaining(), 2u);
}

TEST(NextQuery, PoolNeverRepeatsAndThenExhausts) {
  Tree t = Tree::single_leaf(1);
  t.node(0).ensemble.push_back({hp1(1.0, 0.1, 0.0, 0.0), std::nullopt});
  std::vector<Vector> pts;
  for (int i = 0; i < 6; ++i) pts.push_back(Vector::Constant(1, i / 6.0));
  PoolState pool(pts);
  std::vector<Index> rows;
  for (int i = 0; i < 6; ++i) rows.push_back(*next_query(t, pool, 0.0).row);
  std::sort(rows.begin(), rows.end());
  EXPECT_TRUE(std::adjacent_find(rows.begin(), rows.end()) == rows.end());
  EXPECT_THROW(next_query(t, pool, 0.0), PoolExhausted);
  PoolState p2(pts);
  p2.mark(2);
  EXPECT_THROW(p2.mark(2), Error);
  for (Index r : p2.candidates().rows) EXPECT_NE(r, 2u);
}

TEST(EvaluateEi, BatchedMatchesPointwise) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset data(Bounds::unit(2));
  for (int i = 0; i < 40; ++i) {
    Vector x(2);
    x << u(rng), u(rng);
    data.add(x, x[0] > 0.5 ? 3.0 + std::sin(9.0 * x[1]) : 0.1 * x[1]);
  }
  Tree t = build_tree(data, 5);
  for (Index leaf : t.leaves()) {
    const Dataset rows = data.subset(t.node(leaf).indices);
    Hyperparams a, b;
    a.amplitude = 1.0, a.length_scales = Vector::Constant(2, 0.3), a.noise_var = 1e-2, a.mean_const = 0.5;
    b = a;
    b.warp = std::vector<BetaWarp>{{0.7, 1.4}, {2.0, 0.6}};
    t.node(leaf).ensemble = {member(rows, a), member(rows, b), {a, std::nullopt}};
  }
  const auto cands = CandidateSet::sobol(Bounds::unit(2), 3000, 11);
  const Vector ei = evaluate_ei(t, cands, 2.5);
  for (Index i = 0; i < cands.size(); i += 7)
    ASSERT_NEAR(ei[Eigen::Index(i)], ei_over_tree(t, cands.points[i], 2.5), 1e-10);
}

TEST(Sobol, FirstPointIsCentre) {
  const auto p = sobol_candidates(Bounds::unit(4), 1);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0], Vector::Constant(4, 0.5));
}

TEST(Sobol, MatchesReferenceDirectionNumbers) {
  SobolSequence s(21);
  std::vector<Vector> pts;
  for (int i = 0; i < 1024; ++i) pts.push_back(s.next());
  const std::vector<double> p2{0.75, 0.25, 0.25, 0.25, 0.75, 0.75, 0.25, 0.75, 0.75, 0.75, 0.75,
                               0.75, 0.25, 0.25, 0.75, 0.25, 0.75, 0.25, 0.75, 0.25, 0.25};
  const std::vector<double> p1024{0.00146484375, 0.37646484375, 0.44775390625, 0.48681640625, 0.55712890625,
                                  0.84423828125, 0.24169921875, 0.58740234375, 0.69677734375, 0.67138671875,
                                  0.82177734375, 0.92138671875, 0.70654296875, 0.33837890625, 0.13232421875,
                                  0.85693359375, 0.85498046875, 0.19775390625, 0.53857421875, 0.34619140625,
                                  0.52490234375};
  for (int k = 0; k < 21; ++k) {
    EXPECT_EQ(pts[1][k], p2[k]) << k;
    EXPECT_EQ(pts[2][k], 1.0 - p2[k]) << k;
    EXPECT_EQ(pts[1023][k], p1024[k]) << k;
  }
  EXPECT_THROW(SobolSequence(22), Error);
  EXPECT_THROW(SobolSequence(0), Error);
}

TEST(Sobol, DeterministicAndInBounds) {
  for (Index d = 1; d <= 10; ++d) {
    const Bounds b(Vector::Constant(Eigen::Index(d), -3.0), Vector::Constant(Eigen::Index(d), 5.0));
    const auto a = sobol_candidates(b, 500, 42), c = sobol_candidates(b, 500, 42);
    EXPECT_EQ(a, c);
    EXPECT_NE(a, sobol_candidates(b, 500, 43));
    for (const auto& x : a) ASSERT_TRUE(b.contains(x));
  }
}

TEST(Sobol, LowerDiscrepancyThanUniform) {
  // Star discrepancy estimated over a grid of anchored boxes.
  auto disc = [](const std::vector<Vector>& pts) {
    double worst = 0.0;
    for (int i = 1; i <= 64; ++i)
      for (int j = 1; j <= 64; ++j) {
        const double a = i / 64.0, b = j / 64.0;
        int inside = 0;
        for (const auto& p : pts) inside += p[0] < a && p[1] < b;
        worst = std::max(worst, std::abs(double(inside) / double(pts.size()) - a * b));
      }
    return worst;
  };
  double sobol = 0.0, uniform = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    sobol += disc(sobol_candidates(Bounds::unit(2), 1024, seed));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Vector> r;
    for (int i = 0; i < 1024; ++i) r.push_back(Vector::NullaryExpr(2, [&] { return u(rng); }));
    uniform += disc(r);
  }
  EXPECT_LT(sobol, uniform);
}
