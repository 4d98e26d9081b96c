#ifndef HTBO_OPTIMIZER_HPP
#define HTBO_OPTIMIZER_HPP

// Outer Bayesian-optimisation loop shared by the four variants. The model is
// rebuilt from scratch every iteration: tree, per-leaf hyper-parameter
// samples, leaf GPs, then EI over the candidates.

#include "htbo/acquisition.hpp"
#include "htbo/core.hpp"
#include "htbo/gp.hpp"
#include "htbo/hyper.hpp"
#include "htbo/objective.hpp"
#include "htbo/sobol.hpp"
#include "htbo/tree.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace htbo {

enum class Variant { bo, bo_warp, htbo, htbo_warp };

inline constexpr Variant all_variants[] = {Variant::bo, Variant::bo_warp, Variant::htbo, Variant::htbo_warp};

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::bo: return "bo";
    case Variant::bo_warp: return "bo_warp";
    case Variant::htbo: return "htbo";
    case Variant::htbo_warp: return "htbo_warp";
  }
  return "?";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  for (Variant v : all_variants)
    if (to_string(v) == s) return v;
  return std::nullopt;
}

inline bool uses_tree(Variant v) { return v == Variant::htbo || v == Variant::htbo_warp; }
inline bool uses_warp(Variant v) { return v == Variant::bo_warp || v == Variant::htbo_warp; }

enum class Mode { continuous, pool };

struct OptimizerConfig {
  Variant variant = Variant::htbo;
  Index min_leaf = 5;
  SamplerSettings sampler;
  Index sobol_count = 20000;
  Index n_init = 3;
  Index max_iters = 50;
  std::uint64_t seed = 0;
  PriorSettings prior;
  Mode mode = Mode::continuous;
  /// Stop early once the incumbent (minimisation view) is at or below this.
  std::optional<double> stop_at;
};

struct TraceRecord {
  Index iter = 0;  // 1-based evaluation count
  Vector x;
  double y = 0.0;          // minimisation view
  double incumbent = 0.0;  // best y so far
  double wall_time = 0.0;  // seconds since the run started
  std::optional<Index> row;
  Index n_leaves = 0;  // 0 for the initial design
  Index tree_depth = 0;
};

struct Trace {
  std::vector<TraceRecord> records;
  double best_value = std::numeric_limits<double>::infinity();
  Vector best_x;
  std::optional<Index> best_row;
  Index n_evals() const { return records.size(); }
};

inline void check_config(const ObjectiveSpec& obj, const OptimizerConfig& cfg) {
  if (cfg.min_leaf < 2) throw Error("config: min_leaf must be at least 2");
  if (cfg.sampler.n_samples < 1) throw Error("config: need at least one hyper-parameter sample");
  if (cfg.n_init < 1) throw Error("config: n_init must be at least 1");
  if (cfg.mode == Mode::continuous) {
    if (obj.is_pool()) throw Error("config: continuous mode needs a closed-form objective");
    if (!obj.evaluate) throw Error("config: objective has no evaluator");
    if (cfg.sobol_count < 1) throw Error("config: sobol_count must be positive");
  } else if (!obj.is_pool()) {
    throw Error("config: pool mode needs a pool-backed objective");
  }
}

namespace detail {

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) { return make_rng(seed, a, b)(); }

/// Fits every leaf: hyper-parameter samples from the weighted posterior, then
/// one GP per sample on the leaf's rows.
inline void fit_leaves(Tree& tree, const Dataset& data, const OptimizerConfig& cfg, Index iteration) {
  const bool warp = uses_warp(cfg.variant);
  for (Index leaf : tree.leaves()) {
    const auto factors = leaf_factors(tree, data, leaf);
    auto rng = make_rng(cfg.seed, 1000003 + iteration, leaf);
    std::vector<Hyperparams> samples;
    PriorSettings ps = cfg.prior;
    for (int attempt = 0;; ++attempt) {
      try {
        samples = infer_leaf_hypers(factors, default_prior(data, warp, ps), cfg.sampler, rng);
        break;
      } catch (const Error&) {
        if (attempt >= 3) throw;
        ps.noise_frac *= 100.0;  // a noisier starting point factorises more easily
      }
    }
    auto& node = tree.node(leaf);
    node.ensemble.clear();
    const Dataset rows = data.subset(node.indices);
    for (auto& hp : samples) {
      EnsembleMember m{hp, std::nullopt};
      try {
        m.posterior.emplace(GpPosterior::fit(rows, hp));
      } catch (const IllConditionedKernel&) {
      }
      node.ensemble.push_back(std::move(m));
    }
  }
}

}  // namespace detail

/// Builds the model the optimiser would use for `data` (values to maximise).
inline Tree fit_model(const Dataset& data, const OptimizerConfig& cfg, Index iteration) {
  Tree tree = uses_tree(cfg.variant) ? build_tree(data, cfg.min_leaf) : Tree::single_leaf(data.size());
  detail::fit_leaves(tree, data, cfg, iteration);
  return tree;
}

/// One optimisation run. Deterministic for a given seed and a deterministic
/// objective.
inline Trace run(const ObjectiveSpec& obj, const OptimizerConfig& cfg) {
  check_config(obj, cfg);
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  Dataset data(obj.bounds);  // outputs stored as -y so that larger is better
  Trace trace;
  std::optional<PoolState> pool;
  if (cfg.mode == Mode::pool) pool.emplace(obj.pool->features);

  auto record = [&](Vector x, std::optional<Index> row, const Tree* tree) {
    const double raw = row ? obj.evaluate_row(*row) : obj.evaluate(x);
    if (!std::isfinite(raw)) throw Error("objective " + obj.name + " returned a non-finite value");
    const double y = obj.to_min_view(raw);
    data.add(x, -y);
    TraceRecord r;
    r.iter = trace.records.size() + 1;
    r.y = y;
    if (y < trace.best_value) {
      trace.best_value = y;
      trace.best_x = x;
      trace.best_row = row;
    }
    r.incumbent = trace.best_value;
    r.x = std::move(x);
    r.row = row;
    r.wall_time = elapsed();
    if (tree) {
      r.n_leaves = tree->leaves().size();
      r.tree_depth = tree->depth();
    }
    trace.records.push_back(std::move(r));
  };
  auto done = [&] { return cfg.stop_at && trace.best_value <= *cfg.stop_at; };

  // Initial design.
  if (pool) {
    auto rng = make_rng(cfg.seed, 0, 1);
    std::vector<Index> rows(pool->size());
    for (Index i = 0; i < rows.size(); ++i) rows[i] = i;
    const Index n0 = std::min(cfg.n_init, rows.size());
    for (Index i = 0; i < n0; ++i) {
      std::uniform_int_distribution<Index> pick(i, rows.size() - 1);
      std::swap(rows[i], rows[pick(rng)]);
      pool->mark(rows[i]);
      record(pool->point(rows[i]), rows[i], nullptr);
    }
  } else {
    const auto init = sobol_candidates(obj.bounds, cfg.n_init, detail::derive_seed(cfg.seed, 0, 2));
    for (const auto& x : init) record(x, std::nullopt, nullptr);
  }

  for (Index it = 1; it <= cfg.max_iters && !done(); ++it) {
    if (pool && pool->remaining() == 0) break;
    Tree tree = fit_model(data, cfg, it);
    const double incumbent = -trace.best_value;
    if (pool) {
      const auto choice = next_query(tree, *pool, incumbent);
      record(choice.x, choice.row, &tree);
    } else {
      const auto cands = CandidateSet::sobol(obj.bounds, cfg.sobol_count, detail::derive_seed(cfg.seed, it, 3));
      const auto choice = next_query(tree, cands, incumbent);
      record(choice.x, std::nullopt, &tree);
    }
  }
  return trace;
}

struct RepeatSummary {
  Index n_ok = 0;
  Index n_failed = 0;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  double min = 0.0;
  double max = 0.0;
};

struct RepeatedResult {
  std::vector<std::optional<Trace>> traces;  // empty entries are failed runs
  std::vector<std::string> errors;
  RepeatSummary summary;
};

inline std::uint64_t repeat_seed(std::uint64_t seed, Index repeat) { return detail::derive_seed(seed, 7919, repeat); }

inline RepeatSummary summarise_final(const std::vector<double>& finals, Index n_failed) {
  RepeatSummary s;
  s.n_failed = n_failed;
  s.n_ok = finals.size();
  if (finals.empty()) {
    s.mean = s.std = s.min = s.max = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  for (double v : finals) s.mean += v;
  s.mean /= double(finals.size());
  double ss = 0.0;
  for (double v : finals) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / double(finals.size()));
  s.min = *std::min_element(finals.begin(), finals.end());
  s.max = *std::max_element(finals.begin(), finals.end());
  return s;
}

/// Independent runs with seeds keyed by (seed, repeat). Runs may execute on
/// several threads; results do not depend on the schedule.
inline RepeatedResult run_repeated(const ObjectiveSpec& obj, const OptimizerConfig& cfg, Index n_repeats,
                                   unsigned threads = 0) {
  if (n_repeats < 1) throw Error("run_repeated: n_repeats must be at least 1");
  check_config(obj, cfg);
  RepeatedResult res;
  res.traces.resize(n_repeats);
  res.errors.resize(n_repeats);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = unsigned(std::min<Index>(threads, n_repeats));

  std::atomic<Index> next{0};
  auto worker = [&] {
    for (Index r = next++; r < n_repeats; r = next++) {
      OptimizerConfig c = cfg;
      c.seed = repeat_seed(cfg.seed, r);
      try {
        res.traces[r] = run(obj, c);
      } catch (const std::exception& e) {
        res.errors[r] = e.what();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  std::vector<double> finals;
  Index failed = 0;
  for (const auto& t : res.traces) {
    if (t && !t->records.empty())
      finals.push_back(t->records.back().incumbent);
    else
      ++failed;
  }
  res.summary = summarise_final(finals, failed);
  return res;
}

/// Incumbent (minimisation view) after `evals` evaluations, or after the
/// last one when the run stopped earlier.
inline double incumbent_at(const Trace& t, Index evals) {
  if (t.records.empty()) throw Error("incumbent_at: empty trace");
  return t.records[std::min(evals, t.records.size()) - 1].incumbent;
}

}  // namespace htbo

#endif  // HTBO_OPTIMIZER_HPP
