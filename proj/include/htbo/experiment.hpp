#ifndef HTBO_EXPERIMENT_HPP
#define HTBO_EXPERIMENT_HPP

// Batch experiments: configuration, repeated runs, trace/summary/results
// files, plot series and a quick self-check. The command-line tool is a thin
// wrapper over these functions.

#include "htbo/acquisition.hpp"
#include "htbo/benchmarks.hpp"
#include "htbo/gp.hpp"
#include "htbo/optimizer.hpp"
#include "htbo/tree.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/LU>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace htbo {

/// Usage problems (bad flags, unknown objective, unreadable config). Maps to
/// exit status 2; every other failure maps to 1.
class UsageError : public Error {
public:
  using Error::Error;
};

inline constexpr int exit_ok = 0;
inline constexpr int exit_failure = 1;
inline constexpr int exit_usage = 2;

/// Environment variable naming the default output root.
inline constexpr const char* output_root_env = "HTBO_OUTPUT_ROOT";

struct CsvSource {
  std::string path;
  std::string target_col;
  std::vector<std::string> feature_cols;
  char delimiter = ',';
  Sense sense = Sense::maximise;
  bool operator==(const CsvSource&) const = default;
};

struct ExperimentConfig {
  std::string objective;  // registry name; empty when csv is set
  std::optional<CsvSource> csv;
  std::vector<Variant> variants{Variant::htbo_warp};
  Index max_iters = 50;
  Index repeats = 1;
  std::uint64_t seed = 0;
  std::string out_dir;  // empty: <output root>/<objective name>
  Index min_leaf = 5;
  Index sobol_count = 20000;
  Index hyper_samples = 10;
  Index burn_in = 30;
  Index n_init = 3;
  PriorSettings prior;
  unsigned threads = 0;  // 0: one per hardware thread
  bool timing = false;   // record wall-clock time in traces (breaks byte-identity)

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline const char* sense_name(Sense s) { return s == Sense::minimise ? "minimise" : "maximise"; }

inline Sense parse_sense(const std::string& s) {
  if (s == "minimise" || s == "minimize") return Sense::minimise;
  if (s == "maximise" || s == "maximize") return Sense::maximise;
  throw UsageError("unknown sense '" + s + "' (expected minimise or maximise)");
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string names_list(const std::vector<std::string>& names) {
  std::string s;
  for (const auto& n : names) s += (s.empty() ? "" : ", ") + n;
  return s;
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["objective"] = c.objective;
  if (c.csv) {
    j["csv"] = {{"path", c.csv->path},
                {"target_col", c.csv->target_col},
                {"feature_cols", c.csv->feature_cols},
                {"delimiter", std::string(1, c.csv->delimiter)},
                {"sense", detail::sense_name(c.csv->sense)}};
  }
  std::vector<std::string> v;
  for (Variant x : c.variants) v.emplace_back(to_string(x));
  j["variants"] = v;
  j["iters"] = c.max_iters;
  j["repeats"] = c.repeats;
  j["seed"] = c.seed;
  j["out"] = c.out_dir;
  j["min_leaf"] = c.min_leaf;
  j["sobol_count"] = c.sobol_count;
  j["hyper_samples"] = c.hyper_samples;
  j["burn_in"] = c.burn_in;
  j["n_init"] = c.n_init;
  j["prior"] = {{"length_scale_frac", c.prior.length_scale_frac}, {"length_scale_sigma", c.prior.length_scale_sigma},
                {"amplitude_sigma", c.prior.amplitude_sigma},     {"noise_frac", c.prior.noise_frac},
                {"noise_sigma", c.prior.noise_sigma},             {"warp_sigma", c.prior.warp_sigma}};
  j["threads"] = c.threads;
  j["timing"] = c.timing;
  return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known{"objective",   "csv",           "variants", "iters",  "repeats",
                                              "seed",        "out",           "min_leaf", "sobol_count",
                                              "hyper_samples", "burn_in",     "n_init",   "prior",  "threads",
                                              "timing"};
  if (!j.is_object()) throw UsageError("config: expected a JSON object");
  for (const auto& [k, _] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw UsageError("config: unknown key '" + k + "'");
  ExperimentConfig c;
  try {
    c.objective = j.value("objective", c.objective);
    if (j.contains("csv") && !j["csv"].is_null()) {
      const auto& s = j["csv"];
      CsvSource src;
      src.path = s.at("path").get<std::string>();
      src.target_col = s.at("target_col").get<std::string>();
      src.feature_cols = s.at("feature_cols").get<std::vector<std::string>>();
      const auto delim = s.value("delimiter", std::string(","));
      if (delim.size() != 1) throw UsageError("config: csv delimiter must be one character");
      src.delimiter = delim[0];
      src.sense = detail::parse_sense(s.value("sense", std::string("maximise")));
      c.csv = src;
    }
    if (j.contains("variants")) {
      c.variants.clear();
      for (const auto& v : j["variants"].get<std::vector<std::string>>()) {
        const auto p = parse_variant(v);
        if (!p) throw UsageError("config: unknown variant '" + v + "'");
        c.variants.push_back(*p);
      }
    }
    c.max_iters = j.value("iters", c.max_iters);
    c.repeats = j.value("repeats", c.repeats);
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out", c.out_dir);
    c.min_leaf = j.value("min_leaf", c.min_leaf);
    c.sobol_count = j.value("sobol_count", c.sobol_count);
    c.hyper_samples = j.value("hyper_samples", c.hyper_samples);
    c.burn_in = j.value("burn_in", c.burn_in);
    c.n_init = j.value("n_init", c.n_init);
    if (j.contains("prior")) {
      const auto& p = j["prior"];
      c.prior.length_scale_frac = p.value("length_scale_frac", c.prior.length_scale_frac);
      c.prior.length_scale_sigma = p.value("length_scale_sigma", c.prior.length_scale_sigma);
      c.prior.amplitude_sigma = p.value("amplitude_sigma", c.prior.amplitude_sigma);
      c.prior.noise_frac = p.value("noise_frac", c.prior.noise_frac);
      c.prior.noise_sigma = p.value("noise_sigma", c.prior.noise_sigma);
      c.prior.warp_sigma = p.value("warp_sigma", c.prior.warp_sigma);
    }
    c.threads = j.value("threads", c.threads);
    c.timing = j.value("timing", c.timing);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return c;
}

inline void save_config(const ExperimentConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(c).dump(2) << '\n';
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config " + path.string());
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("config " + path.string() + ": " + e.what());
  }
}

/// Checks value ranges and that the objective resolves.
inline void validate_config(const ExperimentConfig& c) {
  if (c.objective.empty() == !c.csv) throw UsageError("give exactly one of an objective name or a CSV source");
  if (!c.csv && !make_objective(c.objective))
    throw UsageError("unknown objective '" + c.objective + "'; valid objectives: " +
                     detail::names_list(objective_names()));
  if (c.csv && (c.csv->target_col.empty() || c.csv->feature_cols.empty()))
    throw UsageError("CSV source needs a target column and at least one feature column");
  if (c.variants.empty()) throw UsageError("no variants selected");
  if (c.repeats < 1) throw UsageError("repeats must be at least 1");
  if (c.min_leaf < 2) throw UsageError("min-leaf must be at least 2");
  if (c.sobol_count < 1) throw UsageError("sobol-count must be positive");
  if (c.hyper_samples < 1) throw UsageError("hyper-samples must be at least 1");
  if (c.n_init < 1) throw UsageError("n_init must be at least 1");
}

inline ObjectiveSpec resolve_objective(const ExperimentConfig& c) {
  validate_config(c);
  if (c.csv) {
    auto pool = load_pool_csv(c.csv->path, {c.csv->feature_cols, c.csv->target_col, c.csv->delimiter});
    const std::string name = std::filesystem::path(c.csv->path).stem().string();
    return pool_objective(name, std::make_shared<const PoolDataset>(std::move(pool)), c.csv->sense);
  }
  return *make_objective(c.objective);
}

inline std::filesystem::path output_dir(const ExperimentConfig& c, const ObjectiveSpec& obj) {
  if (!c.out_dir.empty()) return c.out_dir;
  const char* root = std::getenv(output_root_env);
  return std::filesystem::path(root && *root ? root : "htbo_runs") / obj.name;
}

inline OptimizerConfig optimizer_config(const ExperimentConfig& c, Variant v, bool pool) {
  OptimizerConfig o;
  o.variant = v;
  o.min_leaf = c.min_leaf;
  o.sampler = {c.hyper_samples, c.burn_in};
  o.sobol_count = c.sobol_count;
  o.n_init = c.n_init;
  o.max_iters = c.max_iters;
  o.seed = c.seed;
  o.prior = c.prior;
  o.mode = pool ? Mode::pool : Mode::continuous;
  return o;
}

inline std::string trace_file_name(Variant v, Index repeat) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_rep%03zu.csv", std::string(to_string(v)).c_str(), std::size_t(repeat));
  return buf;
}

inline void write_trace_csv(std::ostream& out, const Trace& t, Index dim, bool timing) {
  out << "iter";
  for (Index k = 0; k < dim; ++k) out << ",x" << k + 1;
  out << ",y,incumbent,wall_time\n";
  for (const auto& r : t.records) {
    out << r.iter;
    for (Eigen::Index k = 0; k < r.x.size(); ++k) out << ',' << detail::fmt(r.x[k]);
    out << ',' << detail::fmt(r.y) << ',' << detail::fmt(r.incumbent) << ','
        << detail::fmt(timing ? r.wall_time : 0.0) << '\n';
  }
}

struct TraceColumns {
  std::vector<Index> iter;
  std::vector<double> incumbent;
};

inline TraceColumns read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read trace " + path.string());
  std::string line;
  std::getline(in, line);
  const auto header = htbo::detail::split_csv_line(line, ',');
  const auto inc = std::find(header.begin(), header.end(), "incumbent");
  if (header.empty() || header[0] != "iter" || inc == header.end())
    throw Error(path.string() + ": not a trace file");
  const std::size_t col = inc - header.begin();
  TraceColumns t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = htbo::detail::split_csv_line(line, ',');
    const auto it = htbo::detail::parse_number(f[0]);
    const auto v = col < f.size() ? htbo::detail::parse_number(f[col]) : std::nullopt;
    if (!it || !v) throw Error(path.string() + ": malformed row '" + line + "'");
    t.iter.push_back(Index(*it));
    t.incumbent.push_back(*v);
  }
  if (t.iter.empty()) throw Error(path.string() + ": empty trace");
  return t;
}

struct VariantOutcome {
  Variant variant = Variant::htbo;
  RepeatSummary summary;
  std::vector<std::string> trace_files;  // successful repeats only
  std::vector<std::string> errors;       // "repeat k: message"
};

struct RunReport {
  std::filesystem::path out_dir;
  std::string objective;
  std::vector<VariantOutcome> outcomes;
  bool all_failed() const {
    for (const auto& o : outcomes)
      if (o.summary.n_ok > 0) return false;
    return true;
  }
};

/// Runs every variant `repeats` times and writes config.json, traces/,
/// summary.csv and results.json under the output directory. Files are
/// written after all runs finish.
inline RunReport cmd_run(const ExperimentConfig& cfg, std::ostream& log = std::cerr) {
  const ObjectiveSpec obj = resolve_objective(cfg);
  RunReport report;
  report.objective = obj.name;
  report.out_dir = output_dir(cfg, obj);

  std::vector<RepeatedResult> results;
  for (Variant v : cfg.variants) {
    log << obj.name << " / " << to_string(v) << ": " << cfg.repeats << " run(s)\n";
    results.push_back(run_repeated(obj, optimizer_config(cfg, v, obj.is_pool()), cfg.repeats, cfg.threads));
  }

  namespace fs = std::filesystem;
  fs::create_directories(report.out_dir / "traces");
  ExperimentConfig resolved = cfg;
  resolved.out_dir = report.out_dir.string();
  save_config(resolved, report.out_dir / "config.json");

  nlohmann::json res;
  res["objective"] = obj.name;
  res["sense"] = detail::sense_name(obj.sense);
  res["evaluations"] = cfg.n_init + cfg.max_iters;
  res["repeats"] = cfg.repeats;
  res["seed"] = cfg.seed;
  if (obj.known_optimum) res["known_optimum"] = obj.to_min_view(obj.known_optimum->value);

  std::ofstream summary(report.out_dir / "summary.csv");
  if (!summary) throw Error("cannot write summary in " + report.out_dir.string());
  summary << "objective,variant,n_ok,n_failed,mean,std,min,max\n";
  for (std::size_t i = 0; i < cfg.variants.size(); ++i) {
    const Variant v = cfg.variants[i];
    VariantOutcome out{v, results[i].summary, {}, {}};
    for (Index r = 0; r < cfg.repeats; ++r) {
      if (const auto& t = results[i].traces[r]) {
        const auto name = trace_file_name(v, r);
        std::ofstream f(report.out_dir / "traces" / name);
        write_trace_csv(f, *t, obj.dim(), cfg.timing);
        if (!f) throw Error("cannot write trace " + name);
        out.trace_files.push_back(name);
      } else {
        out.errors.push_back("repeat " + std::to_string(r) + ": " + results[i].errors[r]);
        log << "  " << out.errors.back() << '\n';
      }
    }
    const auto& s = out.summary;
    summary << obj.name << ',' << to_string(v) << ',' << s.n_ok << ',' << s.n_failed << ',' << detail::fmt(s.mean)
            << ',' << detail::fmt(s.std) << ',' << detail::fmt(s.min) << ',' << detail::fmt(s.max) << '\n';
    auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
    res["variants"][std::string(to_string(v))] = {{"mean", num(s.mean)},   {"std", num(s.std)},
                                                  {"min", num(s.min)},     {"max", num(s.max)},
                                                  {"n_ok", s.n_ok},        {"n_failed", s.n_failed},
                                                  {"traces", out.trace_files}, {"errors", out.errors}};
    report.outcomes.push_back(std::move(out));
  }
  std::ofstream(report.out_dir / "results.json") << res.dump(2) << '\n';
  return report;
}

/// Structured error for plotdata: lists every trace file that is missing.
class MissingTraces : public Error {
public:
  explicit MissingTraces(std::vector<std::string> files)
      : Error("missing trace files: " + detail::names_list(files)), files_(std::move(files)) {}
  const std::vector<std::string>& files() const noexcept { return files_; }

private:
  std::vector<std::string> files_;
};

/// Writes plot_<objective>.csv (variant, iter, mean, std of the incumbent
/// over repeats) into the run directory and returns its path. Runs that
/// stopped early carry their last incumbent forward.
inline std::filesystem::path cmd_plotdata(const std::filesystem::path& run_dir) {
  namespace fs = std::filesystem;
  std::ifstream in(run_dir / "results.json");
  if (!in) throw MissingTraces({(run_dir / "results.json").string()});
  nlohmann::json res;
  try {
    res = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error((run_dir / "results.json").string() + ": " + e.what());
  }

  std::vector<std::string> missing;
  for (const auto& [variant, info] : res.at("variants").items())
    for (const auto& f : info.at("traces"))
      if (!fs::exists(run_dir / "traces" / f.get<std::string>())) missing.push_back(f.get<std::string>());
  if (!missing.empty()) throw MissingTraces(missing);

  const std::string objective = res.at("objective").get<std::string>();
  const fs::path out_path = run_dir / ("plot_" + objective + ".csv");
  std::ofstream out(out_path);
  if (!out) throw Error("cannot write " + out_path.string());
  out << "variant,iter,mean,std\n";
  for (const auto& [variant, info] : res.at("variants").items()) {
    std::vector<TraceColumns> traces;
    for (const auto& f : info.at("traces")) traces.push_back(read_trace_csv(run_dir / "traces" / f.get<std::string>()));
    if (traces.empty()) continue;
    std::size_t len = 0;
    for (const auto& t : traces) len = std::max(len, t.incumbent.size());
    for (std::size_t i = 0; i < len; ++i) {
      double mean = 0.0, ss = 0.0;
      for (const auto& t : traces) mean += t.incumbent[std::min(i, t.incumbent.size() - 1)];
      mean /= double(traces.size());
      for (const auto& t : traces) {
        const double d = t.incumbent[std::min(i, t.incumbent.size() - 1)] - mean;
        ss += d * d;
      }
      out << variant << ',' << i + 1 << ',' << detail::fmt(mean) << ',' << detail::fmt(std::sqrt(ss / double(traces.size())))
          << '\n';
    }
  }
  return out_path;
}

/// Fast self-check of the numerical building blocks. Prints one PASS/FAIL
/// line per check and returns true when all pass.
inline bool cmd_validate(std::ostream& out) {
  bool all = true;
  auto report = [&](const std::string& name, bool ok, const std::string& detail = {}) {
    out << (ok ? "PASS " : "FAIL ") << name << (detail.empty() ? "" : "  (" + detail + ")") << '\n';
    all &= ok;
  };
  std::mt19937_64 rng(2024);

  {  // Matern 5/2 at unit distance.
    Hyperparams hp;
    hp.amplitude = 1.0;
    hp.length_scales = Vector::Ones(1);
    const double s5 = std::sqrt(5.0), want = std::exp(-s5) * (1.0 + s5 + 5.0 / 3.0);
    const double got = kernel(Vector::Zero(1), Vector::Ones(1), hp);
    report("kernel value at unit distance", std::abs(got - want) < 1e-14, detail::fmt(got));
  }
  {  // Posterior against a dense inverse.
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::Index d = 1 + trial % 3, t = 3 + trial % 12;
      Dataset data(Bounds(Vector::Constant(d, -1.0), Vector::Constant(d, 1.0)));
      for (Eigen::Index i = 0; i < t; ++i) data.add(Vector::NullaryExpr(d, [&] { return u(rng); }), u(rng));
      Hyperparams hp;
      hp.amplitude = 1.3;
      hp.length_scales = Vector::Constant(d, 0.6);
      hp.noise_var = 0.05;
      hp.mean_const = 0.2;
      const auto gp = GpPosterior::fit(data, hp);
      Matrix K(t, t);
      for (Eigen::Index i = 0; i < t; ++i)
        for (Eigen::Index j = 0; j < t; ++j) K(i, j) = kernel(data.input(Index(i)), data.input(Index(j)), hp);
      K.diagonal().array() += hp.noise_var + gp.jitter();
      const Matrix Kinv = K.fullPivLu().inverse();
      const Vector q = Vector::NullaryExpr(d, [&] { return u(rng); });
      Vector k(t);
      for (Eigen::Index i = 0; i < t; ++i) k[i] = kernel(data.input(Index(i)), q, hp);
      const Vector r = data.output_vector().array() - hp.mean_const;
      const auto p = gp.predict(q);
      worst = std::max({worst, std::abs(p.mean - (hp.mean_const + k.dot(Kinv * r))),
                        std::abs(p.var - (hp.amplitude - k.dot(Kinv * k)))});
    }
    report("GP posterior matches dense inverse", worst < 1e-8, "max error " + detail::fmt(worst));
  }
  {  // EI against Monte Carlo.
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      const double mu = u(rng), sigma = 0.2 + std::abs(u(rng)), inc = u(rng);
      double acc = 0.0;
      const int n = 200000;
      for (int i = 0; i < n; ++i) acc += std::max(0.0, mu + sigma * z(rng) - inc);
      worst = std::max(worst, std::abs(acc / n - expected_improvement(mu, sigma, inc)));
    }
    report("expected improvement matches Monte Carlo", worst < 1e-2, "max error " + detail::fmt(worst));
    report("expected improvement is zero without variance", expected_improvement(1.0, 0.0, 0.0) == 0.0);
  }
  {  // Split invariants on a step fixture and random data.
    Dataset step(Bounds::unit(1));
    const double xs[] = {0, 0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9, 1.0};
    for (int i = 0; i < 10; ++i) step.add(Vector::Constant(1, xs[i]), i < 5 ? 0.0 : 9.0);
    const Tree t = build_tree(step, 5);
    const bool shape = t.root().split && t.root().split->threshold == 0.4 && t.root().split->shared.size() == 1;
    report("step fixture splits on the shared point", shape);

    bool ok = true;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20 && ok; ++trial) {
      Dataset data(Bounds::unit(2));
      for (int i = 0; i < 40; ++i) {
        Vector x(2);
        x << u(rng), u(rng);
        data.add(x, (x[0] > 0.5 ? 2.0 : 0.0) + 0.2 * u(rng));
      }
      const Tree tr = build_tree(data, 5);
      for (const auto& n : tr.nodes()) {
        if (n.is_leaf()) {
          ok &= n.indices.size() >= 5;
          continue;
        }
        const auto& s = *n.split;
        const auto& L = tr.node(s.left).indices;
        const auto& R = tr.node(s.right).indices;
        for (Index i : s.shared) {
          ok &= data.input(i)[Eigen::Index(s.feature)] == s.threshold;
          ok &= std::binary_search(L.begin(), L.end(), i) && std::binary_search(R.begin(), R.end(), i);
        }
        ok &= !s.shared.empty();
      }
    }
    report("random trees keep split invariants", ok);
  }
  return all;
}

}  // namespace htbo

#endif  // HTBO_EXPERIMENT_HPP
