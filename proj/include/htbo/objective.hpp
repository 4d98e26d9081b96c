#ifndef HTBO_OBJECTIVE_HPP
#define HTBO_OBJECTIVE_HPP

#include "htbo/core.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace htbo {

enum class Sense { minimise, maximise };

/// Finite set of recorded sites with one target value each.
struct PoolDataset {
  std::vector<Vector> features;
  std::vector<double> targets;
  Bounds bounds;
  std::string source;
  std::vector<std::string> feature_columns;
  std::string target_column;

  Index size() const { return targets.size(); }
  Index dim() const { return bounds.dim(); }
};

struct KnownOptimum {
  Vector location;
  double value = 0.0;
  double tolerance = 0.0;
  std::optional<Index> row;  // pool objectives
  std::string provenance;
};

/// A black box to optimise: either a closed-form function on a box or a
/// pool of recorded rows. `sense` says whether smaller or larger raw values
/// are better; traces always report the minimisation view.
struct ObjectiveSpec {
  std::string name;
  Bounds bounds;
  Sense sense = Sense::minimise;
  std::function<double(const Vector&)> evaluate;
  std::shared_ptr<const PoolDataset> pool;
  std::optional<KnownOptimum> known_optimum;

  Index dim() const { return bounds.dim(); }
  bool is_pool() const { return pool != nullptr; }

  /// Raw value mapped so that smaller is better.
  double to_min_view(double raw) const { return sense == Sense::minimise ? raw : -raw; }

  double evaluate_row(Index row) const {
    if (!pool) throw Error("objective " + name + " is not pool-backed");
    return pool->targets.at(row);
  }
};

}  // namespace htbo

#endif  // HTBO_OBJECTIVE_HPP
