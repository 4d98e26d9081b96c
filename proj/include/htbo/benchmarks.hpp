#ifndef HTBO_BENCHMARKS_HPP
#define HTBO_BENCHMARKS_HPP

// Benchmark objectives and pool datasets. Coefficients and optima are also
// listed in benchmarks/MANIFEST.md; the test suite re-derives every optimum.

#include "htbo/core.hpp"
#include "htbo/objective.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace htbo {

/// x1 * exp(-x1^2 - x2^2), minimised on [-2, 2]^2.
inline double exp2d(double x1, double x2) { return x1 * std::exp(-x1 * x1 - x2 * x2); }

namespace rkhs {

// Smooth half: wide squared-exponential bumps anchored on [0, 0.5].
inline constexpr double smooth_length = 0.1;
inline constexpr std::array<double, 5> smooth_anchors{0.05, 0.15, 0.25, 0.35, 0.45};
inline constexpr std::array<double, 5> smooth_weights{1.0, 1.8, 2.0, 1.0, 0.2};

// Jagged half: narrow bumps every 0.02 on (0.5, 1], alternating sign.
inline constexpr double jagged_length = 0.01;
inline constexpr std::array<double, 25> jagged_anchors{0.52, 0.54, 0.56, 0.58, 0.60, 0.62, 0.64, 0.66, 0.68,
                                                       0.70, 0.72, 0.74, 0.76, 0.78, 0.80, 0.82, 0.84, 0.86,
                                                       0.88, 0.90, 0.92, 0.94, 0.96, 0.98, 1.00};
inline constexpr std::array<double, 25> jagged_weights{-0.3, 1.0, -0.3, 1.0, -0.3, 1.1, -0.3, 1.3, -0.5,
                                                       2.1,  -0.9, 3.8, -1.4, 5.6, -1.7, 5.2, -1.4, 3.8,
                                                       -0.9, 2.1, -0.5, 1.3, -0.3, 1.1, -0.3};

// Global maximum from a 10^6-point grid scan (see MANIFEST.md).
inline constexpr double argmax = 0.779883;
inline constexpr double max_value = 5.18490711;
inline constexpr double min_value = -0.23980867;
inline constexpr double tolerance = 1e-4;

}  // namespace rkhs

/// Weighted sum of squared-exponential bumps: smooth on [0, 0.5], jagged on
/// (0.5, 1]. Maximised.
inline double rkhs_hetero(double x) {
  double f = 0.0;
  for (std::size_t i = 0; i < rkhs::smooth_anchors.size(); ++i) {
    const double z = (x - rkhs::smooth_anchors[i]) / rkhs::smooth_length;
    f += rkhs::smooth_weights[i] * std::exp(-0.5 * z * z);
  }
  for (std::size_t i = 0; i < rkhs::jagged_anchors.size(); ++i) {
    const double z = (x - rkhs::jagged_anchors[i]) / rkhs::jagged_length;
    f += rkhs::jagged_weights[i] * std::exp(-0.5 * z * z);
  }
  return f;
}

namespace synth {

inline constexpr Index rows = 2000;
inline constexpr std::uint64_t default_seed = 0;
// Argmax row of synth_hetero_surface(default_seed), from an exhaustive scan.
inline constexpr Index expected_argmax_row = 1085;

}  // namespace synth

/// Value of the synthetic heteroscedastic surface on [0,1]^2: a smooth
/// low-frequency field plus a rugged high-frequency patch around (0.72, 0.68).
inline double synth_surface_value(double x1, double x2) {
  constexpr double pi = std::numbers::pi;
  const double smooth = 1.2 * std::exp(-((x1 - 0.25) * (x1 - 0.25) + (x2 - 0.3) * (x2 - 0.3)) / (2 * 0.22 * 0.22)) +
                        0.3 * std::sin(2 * pi * x1) * std::cos(pi * x2);
  const double patch = std::exp(-((x1 - 0.72) * (x1 - 0.72) + (x2 - 0.68) * (x2 - 0.68)) / (2 * 0.13 * 0.13));
  return smooth + 1.4 * patch + 0.8 * patch * std::sin(22 * pi * x1) * std::sin(22 * pi * x2);
}

/// 2,000 uniformly scattered sites of the synthetic surface. Maximised.
inline PoolDataset synth_hetero_surface(std::uint64_t seed = synth::default_seed) {
  PoolDataset p;
  p.bounds = Bounds::unit(2);
  p.source = "synthetic:seed=" + std::to_string(seed);
  p.feature_columns = {"x1", "x2"};
  p.target_column = "value";
  std::mt19937_64 rng(seed);
  for (Index i = 0; i < synth::rows; ++i) {
    Vector x(2);
    x[0] = double(rng() >> 11) * 0x1.0p-53;
    x[1] = double(rng() >> 11) * 0x1.0p-53;
    p.targets.push_back(synth_surface_value(x[0], x[1]));
    p.features.push_back(std::move(x));
  }
  return p;
}

inline Index argmax_row(const PoolDataset& p) {
  if (p.targets.empty()) throw Error("argmax_row: empty pool");
  Index best = 0;
  for (Index i = 1; i < p.size(); ++i)
    if (p.targets[i] > p.targets[best]) best = i;
  return best;
}

// ---------------------------------------------------------------------------
// CSV pools

struct ColumnSpec {
  std::vector<std::string> features;
  std::string target;
  char delimiter = ',';
};

struct LoadReport {
  Index rows_read = 0;
  Index drop_count = 0;  // rows without a numeric target or with a bad feature
};

class LoadError : public Error {
public:
  enum class Code { unreadable, empty_file, missing_column, all_rows_dropped };
  LoadError(Code code, const std::string& msg) : Error(msg), code_(code) {}
  Code code() const noexcept { return code_; }

private:
  Code code_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_number(const std::string& field) {
  const std::string s = trim(field);
  if (s.empty()) return std::nullopt;
  std::istringstream in(s);
  in.imbue(std::locale::classic());
  double v = 0.0;
  in >> v;
  if (in.fail() || !in.eof() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

inline PoolDataset parse_pool_csv(std::istream& in, const ColumnSpec& spec, LoadReport* report = nullptr,
                                  const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw LoadError(LoadError::Code::empty_file, source + ": empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_csv_line(line, spec.delimiter);
  auto column = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (detail::trim(header[i]) == name) return i;
    throw LoadError(LoadError::Code::missing_column, source + ": missing column '" + name + "'");
  };
  if (spec.features.empty()) throw LoadError(LoadError::Code::missing_column, source + ": no feature columns given");
  std::vector<std::size_t> fcols;
  for (const auto& f : spec.features) fcols.push_back(column(f));
  const std::size_t tcol = column(spec.target);

  PoolDataset p;
  p.source = source;
  p.feature_columns = spec.features;
  p.target_column = spec.target;
  LoadReport rep;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty() || line == "\r") continue;
    ++rep.rows_read;
    const auto fields = detail::split_csv_line(line, spec.delimiter);
    auto field = [&](std::size_t c) -> std::optional<double> {
      return c < fields.size() ? detail::parse_number(fields[c]) : std::nullopt;
    };
    const auto y = field(tcol);
    Vector x{Eigen::Index(fcols.size())};
    bool ok = y.has_value();
    for (std::size_t k = 0; ok && k < fcols.size(); ++k) {
      const auto v = field(fcols[k]);
      ok = v.has_value();
      if (ok) x[Eigen::Index(k)] = *v;
    }
    if (!ok) {
      ++rep.drop_count;
      continue;
    }
    p.features.push_back(std::move(x));
    p.targets.push_back(*y);
  }
  if (report) *report = rep;
  if (p.targets.empty()) {
    if (rep.rows_read == 0) throw LoadError(LoadError::Code::empty_file, source + ": no data rows");
    throw LoadError(LoadError::Code::all_rows_dropped, source + ": every row was dropped");
  }
  Vector lo = p.features.front(), hi = p.features.front();
  for (const auto& x : p.features) {
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  }
  p.bounds = Bounds(lo, hi);
  return p;
}

inline PoolDataset load_pool_csv(const std::string& path, const ColumnSpec& spec, LoadReport* report = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(LoadError::Code::unreadable, path + ": cannot open");
  return parse_pool_csv(in, spec, report, path);
}

inline void write_pool_csv(std::ostream& out, const PoolDataset& p, char delim = ',') {
  for (const auto& f : p.feature_columns) out << f << delim;
  out << p.target_column << '\n';
  out << std::setprecision(17);
  for (Index i = 0; i < p.size(); ++i) {
    for (Eigen::Index k = 0; k < p.features[i].size(); ++k) out << p.features[i][k] << delim;
    out << p.targets[i] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Registry

inline ObjectiveSpec exp2d_objective() {
  ObjectiveSpec o;
  o.name = "exp2d";
  o.bounds = Bounds(Vector::Constant(2, -2.0), Vector::Constant(2, 2.0));
  o.sense = Sense::minimise;
  o.evaluate = [](const Vector& x) { return exp2d(x[0], x[1]); };
  Vector loc(2);
  loc << -1.0 / std::numbers::sqrt2, 0.0;
  o.known_optimum = KnownOptimum{loc, -1.0 / std::numbers::sqrt2 * std::exp(-0.5), 1e-6, std::nullopt,
                                 "DERIVED: 2001x2001 grid scan, refined analytically"};
  return o;
}

inline ObjectiveSpec rkhs_objective() {
  ObjectiveSpec o;
  o.name = "rkhs";
  o.bounds = Bounds::unit(1);
  o.sense = Sense::maximise;
  o.evaluate = [](const Vector& x) { return rkhs_hetero(x[0]); };
  o.known_optimum = KnownOptimum{Vector::Constant(1, rkhs::argmax), rkhs::max_value, rkhs::tolerance, std::nullopt,
                                 "DERIVED: 10^6-point grid scan"};
  return o;
}

inline ObjectiveSpec pool_objective(std::string name, std::shared_ptr<const PoolDataset> pool,
                                    Sense sense = Sense::maximise) {
  ObjectiveSpec o;
  o.name = std::move(name);
  o.bounds = pool->bounds;
  o.sense = sense;
  Index best = 0;
  for (Index i = 1; i < pool->size(); ++i) {
    const bool better = sense == Sense::maximise ? pool->targets[i] > pool->targets[best]
                                                 : pool->targets[i] < pool->targets[best];
    if (better) best = i;
  }
  o.known_optimum = KnownOptimum{pool->features[best], pool->targets[best], 0.0, best, "DERIVED: exhaustive row scan"};
  o.pool = std::move(pool);
  return o;
}

inline ObjectiveSpec synth_pool_objective(std::uint64_t seed = synth::default_seed) {
  return pool_objective("synth_pool", std::make_shared<const PoolDataset>(synth_hetero_surface(seed)));
}

inline const std::vector<std::string>& objective_names() {
  static const std::vector<std::string> names{"exp2d", "rkhs", "synth_pool"};
  return names;
}

inline std::optional<ObjectiveSpec> make_objective(const std::string& name) {
  if (name == "exp2d") return exp2d_objective();
  if (name == "rkhs") return rkhs_objective();
  if (name == "synth_pool") return synth_pool_objective();
  return std::nullopt;
}

}  // namespace htbo

#endif  // HTBO_BENCHMARKS_HPP
