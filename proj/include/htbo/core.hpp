#ifndef HTBO_CORE_HPP
#define HTBO_CORE_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace htbo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = std::size_t;

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidHyperparameter : public Error {
public:
  using Error::Error;
};

/// Cholesky of the Gram matrix failed even at the largest permitted jitter.
class IllConditionedKernel : public Error {
public:
  explicit IllConditionedKernel(double jitter)
      : Error("kernel matrix is not positive definite (last jitter " + std::to_string(jitter) + ")"),
        jitter_(jitter) {}
  double jitter() const noexcept { return jitter_; }

private:
  double jitter_;
};

class PoolExhausted : public Error {
public:
  PoolExhausted() : Error("candidate pool is exhausted") {}
};

/// Axis-aligned box. Lower and upper are inclusive.
struct Bounds {
  Vector lower;
  Vector upper;

  Bounds() = default;
  Bounds(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi)) {
    if (lower.size() != upper.size()) throw Error("bounds: lower/upper dimension mismatch");
    for (Eigen::Index k = 0; k < lower.size(); ++k)
      if (!(lower[k] <= upper[k])) throw Error("bounds: lower exceeds upper in dimension " + std::to_string(k));
  }

  static Bounds unit(Index d) { return {Vector::Zero(Eigen::Index(d)), Vector::Ones(Eigen::Index(d))}; }

  Index dim() const { return Index(lower.size()); }
  Vector width() const { return upper - lower; }

  bool contains(const Vector& x) const {
    if (x.size() != lower.size()) return false;
    for (Eigen::Index k = 0; k < x.size(); ++k)
      if (!(x[k] >= lower[k] && x[k] <= upper[k])) return false;
    return true;
  }

  /// Affine map of x into [0,1]^d. Degenerate (zero-width) dimensions map to 0.
  Vector normalise(const Vector& x) const {
    Vector u(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const double w = upper[k] - lower[k];
      u[k] = w > 0.0 ? (x[k] - lower[k]) / w : 0.0;
    }
    return u;
  }

  Vector from_unit(const Vector& u) const { return lower + (u.array() * width().array()).matrix(); }

  bool operator==(const Bounds& o) const { return lower == o.lower && upper == o.upper; }
};

/// Observation history: inputs with their scalar outputs inside a box.
class Dataset {
public:
  Dataset() = default;
  explicit Dataset(Bounds bounds) : bounds_(std::move(bounds)) {}

  const Bounds& bounds() const { return bounds_; }
  Index dim() const { return bounds_.dim(); }
  Index size() const { return outputs_.size(); }
  bool empty() const { return outputs_.empty(); }

  const Vector& input(Index i) const { return inputs_.at(i); }
  double output(Index i) const { return outputs_.at(i); }
  const std::vector<Vector>& inputs() const { return inputs_; }
  const std::vector<double>& outputs() const { return outputs_; }

  void add(Vector x, double y) {
    if (Index(x.size()) != dim()) throw Error("dataset: input dimension mismatch");
    if (!bounds_.contains(x)) throw Error("dataset: input outside bounds");
    inputs_.push_back(std::move(x));
    outputs_.push_back(y);
  }

  Dataset subset(std::span<const Index> rows) const {
    Dataset out(bounds_);
    out.inputs_.reserve(rows.size());
    out.outputs_.reserve(rows.size());
    for (Index r : rows) {
      out.inputs_.push_back(inputs_.at(r));
      out.outputs_.push_back(outputs_.at(r));
    }
    return out;
  }

  /// Row-major design matrix, one input per row.
  Matrix input_matrix() const {
    Matrix X{Eigen::Index(size()), Eigen::Index(dim())};
    for (Index i = 0; i < size(); ++i) X.row(Eigen::Index(i)) = inputs_[i].transpose();
    return X;
  }

  Vector output_vector() const {
    return Eigen::Map<const Vector>(outputs_.data(), Eigen::Index(outputs_.size()));
  }

private:
  Bounds bounds_;
  std::vector<Vector> inputs_;
  std::vector<double> outputs_;
};

}  // namespace htbo

#endif  // HTBO_CORE_HPP
