#ifndef HTBO_ACQUISITION_HPP
#define HTBO_ACQUISITION_HPP

#include "htbo/core.hpp"
#include "htbo/gp.hpp"
#include "htbo/sobol.hpp"
#include "htbo/tree.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

namespace htbo {

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Closed-form EI for maximisation. Zero when sigma is zero.
inline double expected_improvement(double mu, double sigma, double incumbent) {
  if (!(sigma > 0.0)) return 0.0;
  const double z = (mu - incumbent) / sigma;
  return std::max(0.0, sigma * (z * normal_cdf(z) + normal_pdf(z)));
}

inline double ensemble_ei(const std::vector<EnsembleMember>& ensemble, const Vector& x, double incumbent) {
  if (ensemble.empty()) throw Error("acquisition: leaf has no fitted ensemble");
  double sum = 0.0;
  for (const auto& m : ensemble) {
    const auto p = m.predict(x);
    sum += expected_improvement(p.mean, std::sqrt(p.var), incumbent);
  }
  return sum / double(ensemble.size());
}

/// EI at x averaged over the hyper-parameter samples of the leaf x routes to.
inline double ei_over_tree(const Tree& tree, const Vector& x, double incumbent) {
  return ensemble_ei(tree.route(x).ensemble, x, incumbent);
}

struct CandidateSet {
  enum class Kind { sobol_grid, pool };
  Kind kind = Kind::sobol_grid;
  std::vector<Vector> points;
  std::vector<Index> rows;  // pool row of each point; empty for grids

  static CandidateSet sobol(const Bounds& bounds, Index count, std::optional<std::uint64_t> seed) {
    return {Kind::sobol_grid, sobol_candidates(bounds, count, seed), {}};
  }
  bool empty() const { return points.empty(); }
  Index size() const { return points.size(); }
};

/// Rows of a finite pool and which of them have been evaluated.
class PoolState {
public:
  explicit PoolState(std::vector<Vector> points) : points_(std::move(points)), queried_(points_.size(), false) {}

  Index size() const { return points_.size(); }
  Index remaining() const { return remaining_; }
  bool queried(Index row) const { return queried_.at(row); }
  const Vector& point(Index row) const { return points_.at(row); }

  void mark(Index row) {
    if (queried_.at(row)) throw Error("pool row " + std::to_string(row) + " was already queried");
    queried_[row] = true;
    --remaining_;
  }

  CandidateSet candidates() const {
    CandidateSet c{CandidateSet::Kind::pool, {}, {}};
    c.points.reserve(remaining_);
    c.rows.reserve(remaining_);
    for (Index r = 0; r < points_.size(); ++r)
      if (!queried_[r]) {
        c.points.push_back(points_[r]);
        c.rows.push_back(r);
      }
    return c;
  }

private:
  std::vector<Vector> points_;
  std::vector<bool> queried_;
  Index remaining_ = points_.size();
};

struct QueryChoice {
  Index position = 0;  // index into the candidate set
  Vector x;
  std::optional<Index> row;
  double ei = 0.0;
};

/// EI of every candidate. Candidates are grouped by leaf and predicted in
/// batches; the result is identical to calling ei_over_tree per point up to
/// floating-point rounding.
inline Vector evaluate_ei(const Tree& tree, const CandidateSet& candidates, double incumbent) {
  const Index n = candidates.size();
  std::vector<std::vector<Index>> by_leaf(tree.size());
  for (Index i = 0; i < n; ++i) by_leaf[tree.route(candidates.points[i]).id].push_back(i);

  Vector ei = Vector::Zero(Eigen::Index(n));
  Vector mean, var;
  for (Index leaf = 0; leaf < by_leaf.size(); ++leaf) {
    const auto& members = by_leaf[leaf];
    if (members.empty()) continue;
    const auto& ensemble = tree.node(leaf).ensemble;
    if (ensemble.empty()) throw Error("acquisition: leaf " + std::to_string(leaf) + " has no fitted ensemble");
    constexpr Index chunk = 1024;  // keeps the per-sample work matrices cache-sized
    const Eigen::Index d = candidates.points[members[0]].size();
    for (Index start = 0; start < members.size(); start += chunk) {
      const Index len = std::min(chunk, members.size() - start);
      Matrix X{Eigen::Index(len), d};
      for (Index i = 0; i < len; ++i) X.row(Eigen::Index(i)) = candidates.points[members[start + i]].transpose();
      Vector acc = Vector::Zero(X.rows());
      for (const auto& m : ensemble) {
        if (m.posterior) {
          m.posterior->predict_batch(X, mean, var);
        } else {
          mean = Vector::Constant(X.rows(), m.hp.mean_const);
          var = Vector::Constant(X.rows(), m.hp.amplitude);
        }
        for (Eigen::Index i = 0; i < X.rows(); ++i)
          acc[i] += expected_improvement(mean[i], std::sqrt(var[i]), incumbent);
      }
      acc /= double(ensemble.size());
      for (Index i = 0; i < len; ++i) ei[Eigen::Index(members[start + i])] = acc[Eigen::Index(i)];
    }
  }
  return ei;
}

/// Candidate with the largest EI; the first one wins ties.
inline QueryChoice next_query(const Tree& tree, const CandidateSet& candidates, double incumbent) {
  if (candidates.empty()) throw PoolExhausted();
  const Vector ei = evaluate_ei(tree, candidates, incumbent);
  Index best = 0;
  for (Index i = 1; i < candidates.size(); ++i)
    if (ei[Eigen::Index(i)] > ei[Eigen::Index(best)]) best = i;
  QueryChoice c{best, candidates.points[best], std::nullopt, ei[Eigen::Index(best)]};
  if (candidates.kind == CandidateSet::Kind::pool) c.row = candidates.rows.at(best);
  return c;
}

/// Pool variant: chooses among unqueried rows and marks the chosen row.
inline QueryChoice next_query(const Tree& tree, PoolState& pool, double incumbent) {
  auto c = next_query(tree, pool.candidates(), incumbent);
  pool.mark(*c.row);
  return c;
}

}  // namespace htbo

#endif  // HTBO_ACQUISITION_HPP
