#include "htbo/hyper.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace htbo;

namespace {

std::vector<double> draw_1d(const std::function<double(double)>& logpdf, double init, Index n, std::uint64_t seed) {
  auto rng = make_rng(seed);
  auto target = [&](const Vector& u) { return logpdf(u[0]); };
  const auto s = slice_sample(target, Vector::Constant(1, init), n, 50, rng, Vector::Constant(1, 1.0));
  std::vector<double> out;
  for (const auto& v : s) out.push_back(v[0]);
  return out;
}

Dataset gp_draw(double ls, double amp, double noise, Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z;
  Matrix X(n, 1);
  for (Index i = 0; i < n; ++i) X(Eigen::Index(i), 0) = u(rng);
  Hyperparams hp;
  hp.amplitude = amp;
  hp.length_scales = Vector::Constant(1, ls);
  hp.noise_var = noise;
  const Matrix K = oracle::gram_plus_noise(X, hp, 1e-10);
  const Matrix L = K.llt().matrixL();
  const Vector y = L * Vector::NullaryExpr(Eigen::Index(n), [&] { return z(rng); });
  Dataset data(Bounds::unit(1));
  for (Index i = 0; i < n; ++i) data.add(X.row(Eigen::Index(i)).transpose(), y[Eigen::Index(i)]);
  return data;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST(PathWeights, Examples) {
  const std::vector<Index> leaf_only{0};
  EXPECT_EQ(path_weights(0, leaf_only), std::vector<double>{2.0});
  const std::vector<Index> depths{2, 1, 0};
  const auto w = path_weights(2, depths);
  EXPECT_EQ(w[0], 2.0);
  EXPECT_EQ(w[1], 1.0);
  EXPECT_EQ(w[2], 2.0 / 3.0);
  const std::vector<Index> bad{3};
  EXPECT_THROW(path_weights(2, bad), Error);
}

TEST(PathWeights, FormulaOnAllPathsUpToDepthSix) {
  for (Index leaf = 0; leaf <= 6; ++leaf) {
    std::vector<Index> depths;
    for (Index di = leaf + 1; di-- > 0;) depths.push_back(di);
    const auto w = path_weights(leaf, depths);
    ASSERT_EQ(w.front(), 2.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      ASSERT_EQ(w[i], 2.0 / (1.0 + double(leaf) - double(depths[i])));
      ASSERT_GT(w[i], 0.0);
      if (i) ASSERT_LE(w[i], w[i - 1]);
    }
  }
}

TEST(LeafFactors, WeightsFollowTreeDepths) {
  Dataset data(Bounds(Vector::Zero(1), Vector::Constant(1, 2.0)));
  for (int i = 0; i < 20; ++i) data.add(Vector::Constant(1, 0.1 * i), i < 7 ? 0.0 : (i < 14 ? 4.0 : 30.0));
  const Tree t = build_tree(data, 5);
  for (Index leaf : t.leaves()) {
    const auto f = leaf_factors(t, data, leaf);
    const auto path = leaf_path(t, leaf);
    ASSERT_EQ(f.front().weight, 2.0);
    ASSERT_EQ(f.front().data.size(), t.node(leaf).indices.size());
    const Index depth = t.node(leaf).depth;
    Index k = 1;
    for (std::size_t i = 1; i < path.nodes.size(); ++i) {
      if (path.exclusion_sets[i - 1].empty()) continue;
      ASSERT_EQ(f[k].weight, 2.0 / (1.0 + double(depth - t.node(path.nodes[i]).depth)));
      ASSERT_EQ(f[k].data.size(), path.exclusion_sets[i - 1].size());
      ++k;
    }
    ASSERT_EQ(k, f.size());
  }
}

TEST(Coords, RoundTrip) {
  Hyperparams hp;
  hp.amplitude = 1.7;
  hp.length_scales = Vector::Constant(2, 0.3);
  hp.length_scales[1] = 4.0;
  hp.noise_var = 1e-3;
  hp.mean_const = -0.4;
  hp.warp = std::vector<BetaWarp>{{0.5, 2.0}, {1.2, 0.9}};
  const Hyperparams back = from_coords(to_coords(hp), 2, true);
  EXPECT_NEAR(back.amplitude, 1.7, 1e-14);
  EXPECT_NEAR(back.length_scales[1], 4.0, 1e-14);
  EXPECT_NEAR(back.noise_var, 1e-3, 1e-17);
  EXPECT_EQ(back.mean_const, -0.4);
  EXPECT_NEAR((*back.warp)[0].beta, 2.0, 1e-14);
  EXPECT_EQ(to_coords(hp).size(), 9);
}

TEST(DefaultPrior, ScaledToData) {
  Dataset data(Bounds(Vector::Constant(1, -2.0), Vector::Constant(1, 2.0)));
  for (double y : {1.0, 3.0, 5.0}) data.add(Vector::Constant(1, y / 5.0), y);
  const double var = 8.0 / 3.0;
  const HyperPrior p = default_prior(data, false);
  EXPECT_NEAR(p.amplitude.mu, std::log(var), 1e-12);
  EXPECT_EQ(p.amplitude.sigma, 1.0);
  EXPECT_NEAR(p.length_scales[0].mu, std::log(2.0), 1e-12);
  EXPECT_NEAR(p.noise_var.mu, std::log(1e-2 * var), 1e-12);
  EXPECT_EQ(p.noise_var.sigma, 2.0);
  EXPECT_EQ(p.mean_const.kind, PriorDist::Kind::normal);
  EXPECT_NEAR(p.mean_const.mu, 3.0, 1e-12);
  EXPECT_NEAR(p.mean_const.sigma, std::sqrt(var), 1e-12);
  EXPECT_TRUE(p.warp_alpha.empty());
  const HyperPrior pw = default_prior(data, true);
  EXPECT_NEAR(pw.length_scales[0].mu, std::log(0.5), 1e-12);
  ASSERT_EQ(pw.warp_alpha.size(), 1u);
  EXPECT_EQ(pw.warp_alpha[0].mu, 0.0);
  EXPECT_EQ(pw.warp_beta[0].sigma, 0.75);
}

TEST(WeightedPosterior, SingleFactorIsScaledLikelihood) {
  const Dataset data = gp_draw(0.2, 1.0, 1e-2, 12, 1);
  Hyperparams hp;
  hp.amplitude = 0.8;
  hp.length_scales = Vector::Constant(1, 0.3);
  hp.noise_var = 0.02;
  hp.mean_const = 0.1;
  const auto flat = HyperPrior::flat(1, false);
  for (double w : {2.0, 1.0, 0.4}) {
    const std::vector<WeightedFactor> f{{data, w}};
    EXPECT_DOUBLE_EQ(weighted_log_posterior(hp, f, flat), w * log_marginal_likelihood(data, hp));
  }
}

TEST(WeightedPosterior, UnitWeightsSumFactorLikelihoods) {
  const Dataset a = gp_draw(0.2, 1.0, 1e-2, 8, 2), b = gp_draw(0.2, 1.0, 1e-2, 6, 3);
  Hyperparams hp;
  hp.amplitude = 1.1;
  hp.length_scales = Vector::Constant(1, 0.25);
  hp.noise_var = 0.05;
  const std::vector<WeightedFactor> f{{a, 1.0}, {b, 1.0}};
  EXPECT_NEAR(weighted_log_posterior(hp, f, HyperPrior::flat(1, false)),
              log_marginal_likelihood(a, hp) + log_marginal_likelihood(b, hp), 1e-10);
}

TEST(WeightedPosterior, InvalidStatesAreMinusInfinity) {
  const Dataset data = gp_draw(0.2, 1.0, 1e-2, 5, 4);
  Hyperparams hp;
  hp.amplitude = -1.0;
  hp.length_scales = Vector::Constant(1, 0.25);
  const std::vector<WeightedFactor> f{{data, 2.0}};
  EXPECT_EQ(weighted_log_posterior(hp, f, HyperPrior::flat(1, false)), -INFINITY);
}

TEST(WeightedPosterior, RootOnlyArgmaxMatchesMarginalLikelihood) {
  const Dataset data = gp_draw(0.15, 2.0, 1e-2, 25, 5);
  const std::vector<WeightedFactor> f{{data, 2.0}};
  const auto flat = HyperPrior::flat(1, false);
  double best_w = -INFINITY, best_l = -INFINITY;
  std::pair<int, int> arg_w, arg_l;
  for (int i = 0; i < 15; ++i)
    for (int j = 0; j < 15; ++j) {
      Hyperparams hp;
      hp.amplitude = std::exp(-2.0 + 0.3 * i);
      hp.length_scales = Vector::Constant(1, std::exp(-4.0 + 0.25 * j));
      hp.noise_var = 1e-2;
      const double w = weighted_log_posterior(hp, f, flat), l = log_marginal_likelihood(data, hp);
      if (w > best_w) best_w = w, arg_w = {i, j};
      if (l > best_l) best_l = l, arg_l = {i, j};
    }
  EXPECT_EQ(arg_w, arg_l);
}

TEST(SliceSampler, StandardNormalMoments) {
  const auto xs = draw_1d([](double x) { return -0.5 * x * x; }, 0.0, 5000, 17);
  double m = 0.0, v = 0.0;
  for (double x : xs) m += x;
  m /= double(xs.size());
  for (double x : xs) v += (x - m) * (x - m);
  v /= double(xs.size());
  EXPECT_NEAR(m, 0.0, 0.05);
  EXPECT_NEAR(v, 1.0, 0.1);
  EXPECT_LT(oracle::ks_statistic(xs, oracle::normal_cdf), 0.05);
}

TEST(SliceSampler, LogNormalKolmogorovSmirnov) {
  const double s = 0.5;
  auto logpdf = [s](double x) {
    if (x <= 0.0) return -std::numeric_limits<double>::infinity();
    const double z = std::log(x) / s;
    return -0.5 * z * z - std::log(x);
  };
  const auto xs = draw_1d(logpdf, 1.0, 5000, 23);
  EXPECT_LT(oracle::ks_statistic(xs, [s](double x) { return oracle::normal_cdf(std::log(x) / s); }), 0.05);
}

TEST(SliceSampler, Deterministic) {
  auto f = [](double x) { return -0.5 * x * x - std::abs(x); };
  EXPECT_EQ(draw_1d(f, 0.3, 200, 5), draw_1d(f, 0.3, 200, 5));
  EXPECT_NE(draw_1d(f, 0.3, 200, 5), draw_1d(f, 0.3, 200, 6));
}

TEST(SliceSampler, RejectsNonFiniteStart) {
  auto rng = make_rng(1);
  auto target = [](const Vector&) { return -INFINITY; };
  EXPECT_THROW(slice_sample(target, Vector::Zero(1), 5, 0, rng, Vector::Ones(1)), Error);
}

TEST(InferLeafHypers, RecoversGeneratingLengthScale) {
  const double ls = 0.15, amp = 1.0, noise = 1e-3;
  const Dataset data = gp_draw(ls, amp, noise, 40, 31);
  HyperPrior prior;
  prior.amplitude = PriorDist::log_normal(std::log(amp), 0.5);
  prior.length_scales = {PriorDist::log_normal(std::log(ls), 0.5)};
  prior.noise_var = PriorDist::log_normal(std::log(noise), 0.5);
  prior.mean_const = PriorDist::normal(0.0, 0.5);
  const std::vector<WeightedFactor> f{{data, 2.0}};
  auto rng = make_rng(8);
  const auto samples = infer_leaf_hypers(f, prior, SamplerSettings{40, 30}, rng);
  ASSERT_EQ(samples.size(), 40u);
  std::vector<double> l;
  for (const auto& hp : samples) l.push_back(hp.length_scales[0]);
  const double med = median(l);
  EXPECT_GT(med, ls / 2.0);
  EXPECT_LT(med, ls * 2.0);
}

TEST(InferLeafHypers, SingleSampleAndDeterminism) {
  const Dataset data = gp_draw(0.3, 1.0, 1e-2, 10, 2);
  const std::vector<WeightedFactor> f{{data, 2.0}};
  const HyperPrior prior = default_prior(data, true);
  auto r1 = make_rng(4), r2 = make_rng(4);
  const auto a = infer_leaf_hypers(f, prior, SamplerSettings{1, 5}, r1);
  const auto b = infer_leaf_hypers(f, prior, SamplerSettings{1, 5}, r2);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(to_coords(a[0]), to_coords(b[0]));
  EXPECT_TRUE(a[0].warped());
}

TEST(InferLeafHypers, AncestorsLengthenSmallLeafLengthScales) {
  // A smooth function seen through a 5-point leaf at the left end of the
  // domain. The leaf alone prefers a short length scale; the ancestors'
  // factors pull the samples towards the global one.
  auto f = [](double x) { return std::sin(0.6 * x); };
  const Bounds b(Vector::Constant(1, 0.0), Vector::Constant(1, 10.0));
  Dataset leaf(b), rest(b);
  const double leaf_x[] = {0.0, 0.3, 0.45, 0.8, 1.0};
  const double wiggle[] = {0.02, -0.03, 0.03, -0.02, 0.02};
  for (int i = 0; i < 5; ++i) leaf.add(Vector::Constant(1, leaf_x[i]), f(leaf_x[i]) + wiggle[i]);
  for (int i = 0; i < 30; ++i) {
    const double x = 1.2 + 8.8 * i / 29.0;
    rest.add(Vector::Constant(1, x), f(x));
  }
  Dataset all(b);
  for (Index i = 0; i < leaf.size(); ++i) all.add(leaf.input(i), leaf.output(i));
  for (Index i = 0; i < rest.size(); ++i) all.add(rest.input(i), rest.output(i));
  const HyperPrior prior = default_prior(all, false);

  // Leaf-only maximum likelihood by grid search.
  double best = -INFINITY, ml_ls = 0.0;
  for (int i = 0; i < 60; ++i)
    for (int j = 0; j < 30; ++j)
      for (int k = 0; k < 20; ++k) {
        Hyperparams hp;
        hp.length_scales = Vector::Constant(1, std::exp(-4.0 + 0.12 * i));
        hp.amplitude = std::exp(-6.0 + 0.3 * j);
        hp.noise_var = std::exp(-14.0 + 0.5 * k);
        hp.mean_const = 0.3;
        const double l = log_marginal_likelihood(leaf, hp);
        if (l > best) best = l, ml_ls = hp.length_scales[0];
      }

  const std::vector<WeightedFactor> factors{{leaf, 2.0}, {rest, 1.0}};
  auto rng = make_rng(6);
  const auto samples = infer_leaf_hypers(factors, prior, SamplerSettings{20, 30}, rng);
  std::vector<double> l;
  for (const auto& hp : samples) l.push_back(hp.length_scales[0]);
  EXPECT_GT(median(l), ml_ls) << "leaf-only ML length scale " << ml_ls;
}
