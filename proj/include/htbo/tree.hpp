#ifndef HTBO_TREE_HPP
#define HTBO_TREE_HPP

// CART-style partition of the input space. Thresholds sit exactly on a data
// coordinate and the point(s) on the threshold belong to both children, so
// neither leaf GP has to cover the gap between neighbouring points alone.

#include "htbo/core.hpp"
#include "htbo/gp.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace htbo {

/// Mean squared deviation of the outputs from their mean.
inline double node_uncertainty(std::span<const double> outputs) {
  if (outputs.empty()) throw std::domain_error("node_uncertainty: empty node");
  const double n = double(outputs.size());
  const double mean = std::accumulate(outputs.begin(), outputs.end(), 0.0) / n;
  double ss = 0.0;
  for (double y : outputs) ss += (y - mean) * (y - mean);
  return ss / n;
}

/// Reduction in uncertainty when `parent` is split into `left` and `right`.
/// Points shared by both children are counted in both.
inline double split_gain(std::span<const double> parent, std::span<const double> left,
                         std::span<const double> right) {
  const double n = double(parent.size());
  return node_uncertainty(parent) - double(left.size()) / n * node_uncertainty(left) -
         double(right.size()) / n * node_uncertainty(right);
}

/// One hyper-parameter sample of a leaf GP. `posterior` is empty when the
/// sample could not be factorised; predictions then fall back to the prior.
struct EnsembleMember {
  Hyperparams hp;
  std::optional<GpPosterior> posterior;

  Prediction predict(const Vector& x) const {
    return posterior ? posterior->predict(x) : Prediction{hp.mean_const, hp.amplitude};
  }
};

struct Split {
  Index feature = 0;
  double threshold = 0.0;
  Index left = 0;
  Index right = 0;
  std::vector<Index> shared;  // rows on the threshold, present in both children
};

struct TreeNode {
  Index id = 0;
  Index depth = 0;
  std::optional<Index> parent;
  std::vector<Index> indices;  // sorted dataset rows
  std::optional<Split> split;  // empty for leaves
  std::vector<EnsembleMember> ensemble;

  bool is_leaf() const { return !split.has_value(); }
};

struct PathInfo {
  std::vector<Index> nodes;                        // leaf first, root last
  std::vector<std::vector<Index>> exclusion_sets;  // [i-1] = rows(nodes[i]) \ rows(nodes[i-1])
};

class Tree {
public:
  const TreeNode& root() const { return nodes_.front(); }
  const TreeNode& node(Index id) const { return nodes_.at(id); }
  TreeNode& node(Index id) { return nodes_.at(id); }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  Index size() const { return nodes_.size(); }

  std::vector<Index> leaves() const {
    std::vector<Index> out;
    for (const auto& n : nodes_)
      if (n.is_leaf()) out.push_back(n.id);
    return out;
  }

  Index depth() const {
    Index d = 0;
    for (const auto& n : nodes_) d = std::max(d, n.depth);
    return d;
  }

  /// Leaf reached by x. x[feature] > threshold goes right, ties go left.
  const TreeNode& route(const Vector& x) const {
    const TreeNode* n = &nodes_.front();
    while (n->split) n = &nodes_[x[Eigen::Index(n->split->feature)] > n->split->threshold ? n->split->right : n->split->left];
    return *n;
  }

  /// Tree consisting of a root leaf holding every row.
  static Tree single_leaf(Index n_rows) {
    Tree t;
    TreeNode root;
    root.indices.resize(n_rows);
    std::iota(root.indices.begin(), root.indices.end(), Index{0});
    t.nodes_.push_back(std::move(root));
    return t;
  }

private:
  friend Tree build_tree(const Dataset& data, Index min_leaf);
  std::vector<TreeNode> nodes_;
};

namespace detail {

struct SplitCandidate {
  Index feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

// Best shared-point split of `rows` or nothing when no admissible split has
// positive gain. Children must each hold at least min_leaf rows and be
// strictly smaller than the parent.
inline std::optional<SplitCandidate> best_split(const Dataset& data, const std::vector<Index>& rows, Index min_leaf) {
  const Index n = rows.size();
  if (n < 2 * min_leaf - 1) return std::nullopt;

  std::vector<double> y(n);
  double mean = 0.0;
  for (Index i = 0; i < n; ++i) mean += data.output(rows[i]);
  mean /= double(n);
  for (Index i = 0; i < n; ++i) y[i] = data.output(rows[i]) - mean;
  const double parent_u = node_uncertainty(y);
  if (!(parent_u > 0.0)) return std::nullopt;
  const double tol = 1e-12 * parent_u;

  auto u_of = [](double s, double s2, double m) { return std::max(0.0, s2 / m - (s / m) * (s / m)); };

  std::optional<SplitCandidate> best;
  std::vector<Index> order(n);
  std::vector<double> ps(n + 1), ps2(n + 1);
  for (Index h = 0; h < data.dim(); ++h) {
    const auto coord = [&](Index i) { return data.input(rows[i])[Eigen::Index(h)]; };
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return coord(a) < coord(b); });
    ps[0] = ps2[0] = 0.0;
    for (Index k = 0; k < n; ++k) {
      ps[k + 1] = ps[k] + y[order[k]];
      ps2[k + 1] = ps2[k] + y[order[k]] * y[order[k]];
    }
    // Walk runs of equal coordinate value; [lo, hi) is the run for threshold tau.
    for (Index lo = 0; lo < n;) {
      Index hi = lo + 1;
      while (hi < n && coord(order[hi]) == coord(order[lo])) ++hi;
      const Index n_left = hi, n_right = n - lo;
      if (n_left >= min_leaf && n_right >= min_leaf && n_left < n && n_right < n) {
        const double ul = u_of(ps[hi], ps2[hi], double(n_left));
        const double ur = u_of(ps[n] - ps[lo], ps2[n] - ps2[lo], double(n_right));
        const double gain = parent_u - double(n_left) / double(n) * ul - double(n_right) / double(n) * ur;
        if (gain > tol && (!best || gain > best->gain)) best = SplitCandidate{h, coord(order[lo]), gain};
      }
      lo = hi;
    }
  }
  return best;
}

}  // namespace detail

/// Recursively partitions `data`. Ties in gain keep the lowest feature index,
/// then the lowest threshold.
inline Tree build_tree(const Dataset& data, Index min_leaf) {
  if (data.empty()) throw Error("build_tree: empty dataset");
  if (min_leaf < 2) throw Error("build_tree: min_leaf must be at least 2");
  Tree tree = Tree::single_leaf(data.size());
  std::vector<Index> stack{0};
  while (!stack.empty()) {
    const Index id = stack.back();
    stack.pop_back();
    const auto cand = detail::best_split(data, tree.nodes_[id].indices, min_leaf);
    if (!cand) continue;

    TreeNode left, right;
    Split split{cand->feature, cand->threshold, 0, 0, {}};
    for (Index r : tree.nodes_[id].indices) {
      const double v = data.input(r)[Eigen::Index(cand->feature)];
      if (v <= cand->threshold) left.indices.push_back(r);
      if (v >= cand->threshold) right.indices.push_back(r);
      if (v == cand->threshold) split.shared.push_back(r);
    }
    const Index depth = tree.nodes_[id].depth + 1;
    left.depth = right.depth = depth;
    left.parent = right.parent = id;
    split.left = left.id = tree.nodes_.size();
    split.right = right.id = tree.nodes_.size() + 1;
    tree.nodes_[id].split = std::move(split);
    tree.nodes_.push_back(std::move(left));
    tree.nodes_.push_back(std::move(right));
    // Right first so the left subtree is expanded (and numbered) before it.
    stack.push_back(tree.nodes_[id].split->right);
    stack.push_back(tree.nodes_[id].split->left);
  }
  return tree;
}

inline const TreeNode& route(const Tree& tree, const Vector& x) { return tree.route(x); }

inline PathInfo leaf_path(const Tree& tree, Index leaf) {
  PathInfo p;
  for (std::optional<Index> id = leaf; id; id = tree.node(*id).parent) p.nodes.push_back(*id);
  for (Index i = 1; i < p.nodes.size(); ++i) {
    const auto& outer = tree.node(p.nodes[i]).indices;
    const auto& inner = tree.node(p.nodes[i - 1]).indices;
    std::vector<Index> diff;
    std::set_difference(outer.begin(), outer.end(), inner.begin(), inner.end(), std::back_inserter(diff));
    p.exclusion_sets.push_back(std::move(diff));
  }
  return p;
}

/// One PathInfo per leaf, in the order of Tree::leaves().
inline std::vector<PathInfo> leaf_paths(const Tree& tree) {
  std::vector<PathInfo> out;
  for (Index leaf : tree.leaves()) out.push_back(leaf_path(tree, leaf));
  return out;
}

}  // namespace htbo

#endif  // HTBO_TREE_HPP
