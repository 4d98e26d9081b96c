#ifndef HTBO_HYPER_HPP
#define HTBO_HYPER_HPP

// Per-leaf hyper-parameter inference. Each leaf targets a prior times a
// product of GP marginal likelihoods along its root path, the leaf's own
// factor squared and ancestor factors down-weighted harmonically with depth.
// Samples are drawn with coordinatewise slice sampling.

#include "htbo/core.hpp"
#include "htbo/gp.hpp"
#include "htbo/tree.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace htbo {

/// Prior over one sampling coordinate. Positive hyper-parameters are sampled
/// on the log scale, so a log-normal(mu, sigma) prior on a parameter is a
/// normal(mu, sigma) density on its log coordinate.
struct PriorDist {
  enum class Kind { log_normal, normal, flat };
  Kind kind = Kind::flat;
  double mu = 0.0;
  double sigma = 1.0;

  static PriorDist log_normal(double mu, double sigma) { return {Kind::log_normal, mu, sigma}; }
  static PriorDist normal(double mu, double sigma) { return {Kind::normal, mu, sigma}; }
  static PriorDist flat() { return {}; }

  double log_density(double coord) const {
    if (kind == Kind::flat) return 0.0;
    const double z = (coord - mu) / sigma;
    return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  /// Where chains start.
  double centre() const { return kind == Kind::flat ? 0.0 : mu; }
  /// Initial slice width.
  double scale() const { return kind == Kind::flat ? 1.0 : sigma; }

  bool operator==(const PriorDist&) const = default;
};

struct HyperPrior {
  PriorDist amplitude;
  std::vector<PriorDist> length_scales;
  PriorDist noise_var;
  PriorDist mean_const;
  std::vector<PriorDist> warp_alpha;  // empty without warping
  std::vector<PriorDist> warp_beta;

  Index dim() const { return length_scales.size(); }
  bool warped() const { return !warp_alpha.empty(); }
  Index n_coords() const { return 3 + dim() + (warped() ? 2 * dim() : 0); }

  /// Priors in sampling-coordinate order: amplitude, length scales, noise,
  /// mean, warp alphas, warp betas.
  std::vector<PriorDist> coords() const {
    std::vector<PriorDist> c{amplitude};
    c.insert(c.end(), length_scales.begin(), length_scales.end());
    c.push_back(noise_var);
    c.push_back(mean_const);
    c.insert(c.end(), warp_alpha.begin(), warp_alpha.end());
    c.insert(c.end(), warp_beta.begin(), warp_beta.end());
    return c;
  }

  static HyperPrior flat(Index d, bool warp) {
    HyperPrior p;
    p.length_scales.assign(d, PriorDist::flat());
    if (warp) {
      p.warp_alpha.assign(d, PriorDist::flat());
      p.warp_beta.assign(d, PriorDist::flat());
    }
    return p;
  }

  bool operator==(const HyperPrior&) const = default;
};

/// Knobs for the data-scaled default prior.
struct PriorSettings {
  double length_scale_frac = 0.5;
  double length_scale_sigma = 1.0;
  double amplitude_sigma = 1.0;
  double noise_frac = 1e-2;
  double noise_sigma = 2.0;
  double warp_sigma = 0.75;
  bool operator==(const PriorSettings&) const = default;
};

/// Weakly informative prior scaled to the observed outputs and the input box.
/// Length scales are centred on a fraction of the box width in the space the
/// kernel sees (input units, or the unit box when warping).
inline HyperPrior default_prior(const Dataset& data, bool warp, const PriorSettings& s = {}) {
  const Index d = data.dim();
  double mean = 0.0, var = 0.0;
  if (!data.empty()) {
    for (double y : data.outputs()) mean += y;
    mean /= double(data.size());
    for (double y : data.outputs()) var += (y - mean) * (y - mean);
    var /= double(data.size());
  }
  var = std::max(var, 1e-10);
  HyperPrior p;
  p.amplitude = PriorDist::log_normal(std::log(var), s.amplitude_sigma);
  for (Index k = 0; k < d; ++k) {
    const double w = warp ? 1.0 : data.bounds().upper[Eigen::Index(k)] - data.bounds().lower[Eigen::Index(k)];
    p.length_scales.push_back(PriorDist::log_normal(std::log(s.length_scale_frac * std::max(w, 1e-12)), s.length_scale_sigma));
  }
  p.noise_var = PriorDist::log_normal(std::log(s.noise_frac * var), s.noise_sigma);
  p.mean_const = PriorDist::normal(mean, std::sqrt(var));
  if (warp) {
    p.warp_alpha.assign(d, PriorDist::log_normal(0.0, s.warp_sigma));
    p.warp_beta.assign(d, PriorDist::log_normal(0.0, s.warp_sigma));
  }
  return p;
}

/// Log coordinates beyond this magnitude are outside the prior's support.
inline constexpr double max_log_coord = 30.0;

inline Vector to_coords(const Hyperparams& hp) {
  const Index d = hp.dim();
  Vector u{Eigen::Index(3 + d + (hp.warp ? 2 * d : 0))};
  Eigen::Index k = 0;
  u[k++] = std::log(hp.amplitude);
  for (Index i = 0; i < d; ++i) u[k++] = std::log(hp.length_scales[Eigen::Index(i)]);
  u[k++] = std::log(hp.noise_var);
  u[k++] = hp.mean_const;
  if (hp.warp) {
    for (const auto& w : *hp.warp) u[k++] = std::log(w.alpha);
    for (const auto& w : *hp.warp) u[k++] = std::log(w.beta);
  }
  return u;
}

inline Hyperparams from_coords(const Vector& u, Index d, bool warp) {
  Hyperparams hp;
  Eigen::Index k = 0;
  hp.amplitude = std::exp(u[k++]);
  hp.length_scales.resize(Eigen::Index(d));
  for (Index i = 0; i < d; ++i) hp.length_scales[Eigen::Index(i)] = std::exp(u[k++]);
  hp.noise_var = std::exp(u[k++]);
  hp.mean_const = u[k++];
  if (warp) {
    hp.warp.emplace(d);
    for (Index i = 0; i < d; ++i) (*hp.warp)[i].alpha = std::exp(u[k++]);
    for (Index i = 0; i < d; ++i) (*hp.warp)[i].beta = std::exp(u[k++]);
  }
  return hp;
}

inline double log_prior(const Hyperparams& hp, const HyperPrior& prior) {
  const Vector u = to_coords(hp);
  const auto c = prior.coords();
  if (Index(u.size()) != c.size()) throw InvalidHyperparameter("hyperparameters do not match prior layout");
  double lp = 0.0;
  for (Index i = 0; i < c.size(); ++i) {
    if (!std::isfinite(u[Eigen::Index(i)])) return -std::numeric_limits<double>::infinity();
    if (c[i].kind != PriorDist::Kind::normal && std::abs(u[Eigen::Index(i)]) > max_log_coord)
      return -std::numeric_limits<double>::infinity();
    lp += c[i].log_density(u[Eigen::Index(i)]);
  }
  return lp;
}

struct WeightedFactor {
  Dataset data;
  double weight = 1.0;
};

/// 2 / (1 + leaf_depth - depth) for every node on the path, leaf included.
inline std::vector<double> path_weights(Index leaf_depth, std::span<const Index> depths) {
  std::vector<double> w;
  w.reserve(depths.size());
  for (Index di : depths) {
    if (di > leaf_depth) throw Error("path_weights: ancestor deeper than leaf");
    w.push_back(2.0 / (1.0 + double(leaf_depth - di)));
  }
  return w;
}

/// Weighted factors for one leaf: its own rows (weight 2) followed by each
/// ancestor's rows minus the child on the path. Empty sets are dropped.
inline std::vector<WeightedFactor> leaf_factors(const Tree& tree, const Dataset& data, Index leaf) {
  const PathInfo path = leaf_path(tree, leaf);
  std::vector<Index> depths;
  for (Index id : path.nodes) depths.push_back(tree.node(id).depth);
  const auto w = path_weights(tree.node(leaf).depth, depths);
  std::vector<WeightedFactor> out;
  out.push_back({data.subset(tree.node(leaf).indices), w[0]});
  for (Index i = 1; i < path.nodes.size(); ++i)
    if (!path.exclusion_sets[i - 1].empty()) out.push_back({data.subset(path.exclusion_sets[i - 1]), w[i]});
  return out;
}

/// Log target over sampling coordinates, with the factor design matrices
/// prepared once. Warped columns are cached between calls and only
/// recomputed when their Beta parameters change, so one instance must not be
/// shared between threads.
class LeafPosterior {
public:
  LeafPosterior(std::span<const WeightedFactor> factors, HyperPrior prior)
      : prior_(std::move(prior)), coord_priors_(prior_.coords()) {
    for (const auto& f : factors) {
      if (f.data.empty()) continue;
      if (f.data.dim() != prior_.dim()) throw Error("factor dimension does not match prior");
      Part p{f.data.input_matrix(), {}, {}, f.data.output_vector(), f.weight};
      if (prior_.warped()) {
        p.unit = normalise_rows(p.inputs, f.data.bounds());
        p.features = p.unit;
      }
      parts_.push_back(std::move(p));
    }
    if (parts_.empty()) throw Error("leaf posterior needs at least one nonempty factor");
    cached_warp_.assign(dim(), BetaWarp{std::numeric_limits<double>::quiet_NaN(), 0.0});
  }

  Index dim() const { return prior_.dim(); }
  bool warped() const { return prior_.warped(); }
  Index n_coords() const { return coord_priors_.size(); }
  const HyperPrior& prior() const { return prior_; }

  double operator()(const Vector& u) const { return log_posterior(from_coords(u, dim(), warped())); }

  double log_posterior(const Hyperparams& hp) const {
    constexpr double ninf = -std::numeric_limits<double>::infinity();
    const double lp = log_prior(hp, prior_);
    if (!std::isfinite(lp)) return ninf;
    try {
      validate(hp, dim());
      if (hp.warped() != warped()) throw InvalidHyperparameter("warp presence does not match prior");
      if (hp.warp) refresh_warp(*hp.warp);
      double total = lp;
      for (const auto& p : parts_)
        total += p.weight * log_marginal_likelihood(hp.warp ? p.features : p.inputs, p.outputs, hp);
      return std::isfinite(total) ? total : ninf;
    } catch (const Error&) {
      return ninf;
    } catch (const std::domain_error&) {
      return ninf;
    }
  }

  Vector initial_coords() const {
    Vector u{Eigen::Index(coord_priors_.size())};
    for (Index i = 0; i < coord_priors_.size(); ++i) u[Eigen::Index(i)] = coord_priors_[i].centre();
    return u;
  }

  Vector slice_widths() const {
    Vector w{Eigen::Index(coord_priors_.size())};
    for (Index i = 0; i < coord_priors_.size(); ++i) w[Eigen::Index(i)] = coord_priors_[i].scale();
    return w;
  }

private:
  struct Part {
    Matrix inputs;
    Matrix unit;
    mutable Matrix features;
    Vector outputs;
    double weight;
  };

  void refresh_warp(const std::vector<BetaWarp>& warp) const {
    for (Index k = 0; k < warp.size(); ++k) {
      if (warp[k] == cached_warp_[k]) continue;
      cached_warp_[k] = BetaWarp{std::numeric_limits<double>::quiet_NaN(), 0.0};
      for (const auto& p : parts_) warp_column(p.unit, Eigen::Index(k), warp[k], p.features);
      cached_warp_[k] = warp[k];
    }
  }

  HyperPrior prior_;
  std::vector<PriorDist> coord_priors_;
  std::vector<Part> parts_;
  mutable std::vector<BetaWarp> cached_warp_;
};

/// log p(theta) + sum_i w_i log p(y_i | x_i, theta). Returns -inf for
/// states outside the prior's support or whose kernel cannot be factorised.
inline double weighted_log_posterior(const Hyperparams& theta, std::span<const WeightedFactor> factors,
                                     const HyperPrior& prior) {
  return LeafPosterior(factors, prior).log_posterior(theta);
}

struct SliceSettings {
  Index max_steps_out = 32;
  Index max_shrinks = 200;
};

/// Coordinatewise slice sampling with stepping out and shrinkage. One sweep
/// updates every coordinate in index order; `n_burn` sweeps are discarded.
template <class Target, class Rng>
std::vector<Vector> slice_sample(const Target& target, Vector init, Index n_samples, Index n_burn, Rng& rng,
                                 const Vector& widths, const SliceSettings& settings = {}) {
  if (n_samples < 1) throw Error("slice_sample: n_samples must be at least 1");
  if (widths.size() != init.size()) throw Error("slice_sample: widths/init size mismatch");
  double fx = target(init);
  if (!std::isfinite(fx)) throw Error("slice_sample: target is not finite at the initial point");

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector x = std::move(init);
  std::vector<Vector> out;
  out.reserve(n_samples);

  auto eval_at = [&](Eigen::Index k, double v) {
    const double keep = x[k];
    x[k] = v;
    const double f = target(x);
    x[k] = keep;
    return f;
  };

  for (Index sweep = 0; sweep < n_burn + n_samples; ++sweep) {
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const double w = widths[k];
      const double level = fx + std::log(1.0 - unif(rng));  // log of u * f(x), u in (0, 1]
      double lo = x[k] - w * unif(rng);
      double hi = lo + w;
      auto j = Index(std::floor(double(settings.max_steps_out) * unif(rng)));
      Index m = settings.max_steps_out - 1 - j;
      while (j-- > 0 && eval_at(k, lo) > level) lo -= w;
      while (m-- > 0 && eval_at(k, hi) > level) hi += w;

      const double x0 = x[k];
      for (Index s = 0;; ++s) {
        const double cand = lo + (hi - lo) * unif(rng);
        const double fc = eval_at(k, cand);
        if (fc > level) {
          x[k] = cand;
          fx = fc;
          break;
        }
        if (s + 1 >= settings.max_shrinks) break;  // stay put
        (cand < x0 ? lo : hi) = cand;
      }
    }
    if (sweep >= n_burn) out.push_back(x);
  }
  return out;
}

/// Random stream for a given (seed, stream) pair, stable across schedules.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t sub = 0) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream),
                    std::uint32_t(stream >> 32), std::uint32_t(sub), std::uint32_t(sub >> 32)};
  return std::mt19937_64(seq);
}

struct SamplerSettings {
  Index n_samples = 10;
  Index burn_in = 30;
  bool operator==(const SamplerSettings&) const = default;
};

/// Draws the leaf's GP ensemble from its weighted posterior.
template <class Rng>
std::vector<Hyperparams> infer_leaf_hypers(std::span<const WeightedFactor> factors, const HyperPrior& prior,
                                           const SamplerSettings& settings, Rng& rng) {
  if (factors.empty() || factors.front().data.empty()) throw Error("infer_leaf_hypers: leaf factor is empty");
  const LeafPosterior target(factors, prior);
  const auto draws =
      slice_sample(target, target.initial_coords(), settings.n_samples, settings.burn_in, rng, target.slice_widths());
  std::vector<Hyperparams> out;
  out.reserve(draws.size());
  for (const auto& u : draws) out.push_back(from_coords(u, target.dim(), target.warped()));
  return out;
}

}  // namespace htbo

#endif  // HTBO_HYPER_HPP
