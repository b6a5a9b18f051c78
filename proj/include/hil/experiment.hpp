#pragma once

// Multi-path EM experiments on the four-state target-seeking problem:
// err(n, T) curves, percentile buckets, prior sweeps and random starts.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "hil/core.hpp"
#include "hil/detail/csv.hpp"
#include "hil/em.hpp"
#include "hil/rng.hpp"
#include "hil/simulator.hpp"

namespace hil {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Sectioned key=value text (INI). Comments start with ';' or '#'.
class ConfigFile {
 public:
  ConfigFile() = default;

  static ConfigFile parse(std::istream& in) {
    ConfigFile cfg;
    try {
      boost::property_tree::ini_parser::read_ini(in, cfg.tree_);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw std::runtime_error(std::string("config: ") + e.what());
    }
    return cfg;
  }

  static ConfigFile parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  bool has(const std::string& section, const std::string& key) const {
    return static_cast<bool>(tree_.get_optional<std::string>(path(section, key)));
  }

  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const {
    const auto v = tree_.get_optional<std::string>(path(section, key));
    return v ? detail::trim(*v) : fallback;
  }

  double get_real(const std::string& section, const std::string& key, double fallback) const {
    if (!has(section, key)) return fallback;
    return parse_real(get(section, key, ""), section + "." + key);
  }

  std::uint64_t get_uint(const std::string& section, const std::string& key,
                         std::uint64_t fallback) const {
    if (!has(section, key)) return fallback;
    return parse_uint(get(section, key, ""), section + "." + key);
  }

  std::vector<double> get_reals(const std::string& section, const std::string& key,
                                std::vector<double> fallback) const {
    if (!has(section, key)) return fallback;
    std::vector<double> out;
    for (const auto& f : detail::split(get(section, key, ""), ',')) {
      out.push_back(parse_real(f, section + "." + key));
    }
    return out;
  }

  std::vector<Index> get_uints(const std::string& section, const std::string& key,
                               std::vector<Index> fallback) const {
    if (!has(section, key)) return fallback;
    std::vector<Index> out;
    for (const auto& f : detail::split(get(section, key, ""), ',')) {
      out.push_back(static_cast<Index>(parse_uint(f, section + "." + key)));
    }
    return out;
  }

  /// Every (section.key, value) pair, sorted, for echoing into manifests.
  std::map<std::string, std::string> entries() const {
    std::map<std::string, std::string> out;
    for (const auto& [section, node] : tree_) {
      for (const auto& [key, leaf] : node) out[section + "." + key] = leaf.data();
    }
    return out;
  }

 private:
  static boost::property_tree::ptree::path_type path(const std::string& section,
                                                     const std::string& key) {
    return boost::property_tree::ptree::path_type(section + "|" + key, '|');
  }

  static double parse_real(const std::string& text, const std::string& where) {
    const auto t = detail::trim(text);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (t.empty() || used != t.size()) {
      throw std::runtime_error("config: " + where + " expects a number, got '" + text + "'");
    }
    return v;
  }

  static std::uint64_t parse_uint(const std::string& text, const std::string& where) {
    const auto t = detail::trim(text);
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      if (!t.empty() && t.front() != '-') v = std::stoull(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (t.empty() || used != t.size()) {
      throw std::runtime_error("config: " + where + " expects a nonnegative integer, got '" +
                               text + "'");
    }
    return v;
  }

  boost::property_tree::ptree tree_;
};

enum class InitMode { Fixed, Random };

struct ExperimentConfig {
  double zeta = 0.1;
  Theta theta_star = TargetSeekingFamily::make_theta(0.6, 0.7, 0.8);
  std::vector<Index> T_list{5000, 8000, 10000};
  Index n_paths = 50;
  Index N = 1000;
  InitMode init = InitMode::Fixed;
  Theta theta0 = TargetSeekingFamily::make_theta(0.5, 0.6, 0.7);
  double init_scale = 0.2;  // w in theta0 = theta_star - w * U[0,1]^3
  double mu_right = 1.0;    // mu(RIGHTEND | s_1)
  Index burn_in = kDefaultBurnIn;
  std::uint64_t master_seed = 1;
  double early_stop_tol = 0.0;
  unsigned threads = 0;  // 0 = hardware concurrency

  TargetSeekingFamily family() const { return TargetSeekingFamily(zeta); }
  PriorMu mu() const { return mu_for(mu_right); }

  static PriorMu mu_for(double right) { return {{1.0 - right, right}}; }

  Index max_T() const { return *std::max_element(T_list.begin(), T_list.end()); }

  /// Desk-scale preset: 10 paths, N = 300, T in {2000, 5000}.
  static ExperimentConfig desk() {
    ExperimentConfig c;
    c.n_paths = 10;
    c.N = 300;
    c.T_list = {2000, 5000};
    return c;
  }

  void validate() const {
    const auto fam = family();
    fam.validate(theta_star);
    if (init == InitMode::Fixed) fam.validate(theta0);
    if (T_list.empty()) throw std::invalid_argument("experiment: T list is empty");
    for (Index T : T_list) {
      if (T < 2) throw std::invalid_argument("experiment: every T must be at least 2");
    }
    if (n_paths == 0) throw std::invalid_argument("experiment: n_paths must be positive");
    if (N == 0) throw std::invalid_argument("experiment: N must be positive");
    if (!(mu_right >= 0.0 && mu_right <= 1.0)) {
      throw std::invalid_argument("experiment: mu_right must lie in [0, 1]");
    }
    if (!(init_scale >= 0.0)) throw std::invalid_argument("experiment: init_scale must be >= 0");
  }

  /// Reads [model], [data] and [em] sections; missing keys keep defaults
  /// from `base`.
  static ExperimentConfig from_file(const ConfigFile& f) { return from_file(f, ExperimentConfig()); }

  static ExperimentConfig from_file(const ConfigFile& f, ExperimentConfig base) {
    ExperimentConfig c = std::move(base);
    c.zeta = f.get_real("model", "zeta", c.zeta);
    c.theta_star = theta_from(f.get_reals("model", "theta_star", c.theta_star.flat()), "theta_star");
    c.T_list = f.get_uints("data", "T", c.T_list);
    c.n_paths = static_cast<Index>(f.get_uint("data", "n_paths", c.n_paths));
    c.burn_in = static_cast<Index>(f.get_uint("data", "burn_in", c.burn_in));
    c.master_seed = f.get_uint("data", "seed", c.master_seed);
    c.N = static_cast<Index>(f.get_uint("em", "N", c.N));
    c.theta0 = theta_from(f.get_reals("em", "theta0", c.theta0.flat()), "theta0");
    const auto mode = f.get("em", "init", c.init == InitMode::Fixed ? "fixed" : "random");
    if (mode == "fixed") {
      c.init = InitMode::Fixed;
    } else if (mode == "random") {
      c.init = InitMode::Random;
    } else {
      throw std::runtime_error("config: em.init must be 'fixed' or 'random'");
    }
    c.init_scale = f.get_real("em", "init_scale", c.init_scale);
    c.mu_right = f.get_real("em", "mu_right", c.mu_right);
    c.early_stop_tol = f.get_real("em", "early_stop_tol", c.early_stop_tol);
    c.threads = static_cast<unsigned>(f.get_uint("em", "threads", c.threads));
    c.validate();
    return c;
  }

 private:
  static Theta theta_from(const std::vector<double>& v, const char* what) {
    if (v.size() != 3) {
      throw std::runtime_error(std::string("config: ") + what + " needs three values");
    }
    return TargetSeekingFamily::make_theta(v[0], v[1], v[2]);
  }
};

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// ||theta^(n) - theta*|| for every path and n = 0..N at one length T.
struct PerPathErrors {
  Index T = 0;
  std::vector<std::vector<double>> err;  // [path][n]

  std::vector<double> final_errors() const {
    std::vector<double> out;
    out.reserve(err.size());
    for (const auto& row : err) out.push_back(row.back());
    return out;
  }
};

struct ErrCurve {
  std::string label;
  Index T = 0;
  double i_lo = 0.0;  // percentile interval the curve averages over
  double i_hi = 100.0;
  Index n_paths = 0;
  std::vector<double> err;  // indexed by n
};

/// One or more err(n, .) curves sharing the iteration axis.
struct ErrTable {
  std::vector<ErrCurve> curves;

  const ErrCurve& curve(const std::string& label) const {
    for (const auto& c : curves) {
      if (c.label == label) return c;
    }
    throw std::out_of_range("ErrTable: no curve labelled " + label);
  }

  /// max over curves of err(N) divided by the min over curves.
  double final_spread() const {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& c : curves) {
      lo = std::min(lo, c.err.back());
      hi = std::max(hi, c.err.back());
    }
    return hi / lo;
  }
};

inline ErrCurve mean_curve(const PerPathErrors& pp, std::string label,
                           const std::vector<Index>& members) {
  if (members.empty()) throw std::invalid_argument("mean_curve: empty set of paths");
  ErrCurve c;
  c.label = std::move(label);
  c.T = pp.T;
  c.n_paths = members.size();
  const Index len = pp.err.front().size();
  c.err.assign(len, 0.0);
  // Summation in path-index order keeps the result independent of scheduling.
  for (Index p : members) {
    for (Index n = 0; n < len; ++n) c.err[n] += pp.err[p][n];
  }
  for (double& v : c.err) v /= static_cast<double>(members.size());
  return c;
}

inline ErrCurve mean_curve(const PerPathErrors& pp, std::string label) {
  std::vector<Index> all(pp.err.size());
  for (Index i = 0; i < all.size(); ++i) all[i] = i;
  return mean_curve(pp, std::move(label), all);
}

struct ExperimentResult {
  ErrTable table;                  // one curve per T, labelled "T<length>"
  std::vector<PerPathErrors> per_path;  // same order as config.T_list
};

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

namespace detail {

/// Runs job(i) for i in [0, n) on a pool of worker threads.
inline void parallel_for(Index n, unsigned threads, const std::function<void(Index)>& job) {
  unsigned workers = threads != 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<Index>(workers, n));
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (Index i = next++; i < n && !failed; i = next++) {
        try {
          job(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

inline constexpr std::uint64_t kInitStreamTag = 0x696E6974ULL;  // "init"

}  // namespace detail

/// Stationary expert paths, each max(T_list) long after burn-in. Path p uses
/// the stream derive_seed(master_seed, p).
inline std::vector<Trajectory> sample_paths(const ExperimentConfig& config) {
  config.validate();
  const auto family = config.family();
  const auto env = make_grid_env();
  std::vector<Trajectory> paths(config.n_paths);
  detail::parallel_for(config.n_paths, config.threads, [&](Index p) {
    paths[p] = sample_stationary(family, config.theta_star, env, config.max_T(), config.burn_in,
                                 derive_seed(config.master_seed, p));
  });
  return paths;
}

/// theta0 = theta* - w * (x_hi, x_lo, x_b), x ~ U[0,1]^3, projected onto the
/// box. Path p draws from its own stream so legs stay comparable.
inline Theta random_init(const ExperimentConfig& config, double w, Index path) {
  Rng rng(derive_seed(config.master_seed ^ detail::kInitStreamTag, path));
  const auto fam = config.family();
  const double x_hi = rng.uniform();
  const double x_lo = rng.uniform();
  const double x_b = rng.uniform();
  return TargetSeekingFamily::make_theta(fam.clamp(config.theta_star.hi[0] - w * x_hi),
                                         fam.clamp(config.theta_star.lo[0] - w * x_lo),
                                         fam.clamp(config.theta_star.b[0] - w * x_b));
}

/// EM on the first T steps of every path. `theta0_for(p)` gives the start.
inline PerPathErrors run_em_on_paths(const ExperimentConfig& config,
                                     const std::vector<Trajectory>& paths, Index T,
                                     const PriorMu& mu,
                                     const std::function<Theta(Index)>& theta0_for) {
  const auto family = config.family();
  PerPathErrors out;
  out.T = T;
  out.err.resize(paths.size());
  detail::parallel_for(paths.size(), config.threads, [&](Index p) {
    if (paths[p].size() < T) throw std::invalid_argument("experiment: path shorter than T");
    const auto obs = paths[p].observations().prefix(T);
    EMConfig em{config.N, mu, theta0_for(p), config.early_stop_tol};
    const auto trace = em_run(family, obs, em);
    auto& row = out.err[p];
    row.resize(config.N + 1);
    for (Index n = 0; n <= config.N; ++n) row[n] = distance(trace.at(n), config.theta_star);
  });
  return out;
}

inline std::function<Theta(Index)> theta0_source(const ExperimentConfig& config) {
  if (config.init == InitMode::Fixed) return [theta = config.theta0](Index) { return theta; };
  return [config](Index p) { return random_init(config, config.init_scale, p); };
}

/// err(n, T) for every T in config.T_list on the supplied paths.
inline ExperimentResult run_experiment(const ExperimentConfig& config,
                                       const std::vector<Trajectory>& paths) {
  config.validate();
  if (paths.size() != config.n_paths) {
    throw std::invalid_argument("run_experiment: path count does not match config");
  }
  ExperimentResult result;
  const auto init = theta0_source(config);
  for (Index T : config.T_list) {
    auto pp = run_em_on_paths(config, paths, T, config.mu(), init);
    result.table.curves.push_back(mean_curve(pp, "T" + std::to_string(T)));
    result.per_path.push_back(std::move(pp));
  }
  return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, sample_paths(config));
}

struct PercentileInterval {
  double lo = 0.0;
  double hi = 100.0;
};

inline std::string interval_label(const PercentileInterval& iv) {
  return "I" + detail::fmt_real(iv.lo) + "-" + detail::fmt_real(iv.hi);
}

/// Indices of the paths whose final error falls in the percentile interval.
///
/// Paths are ranked by final error (ties by path index); a path's percentile
/// is 100 * r / n with r the 0-based rank of the first member of its tie
/// group, so tied paths land together in the lower bucket. A path belongs to
/// [lo, hi) or, when hi is 100, to [lo, 100].
inline std::vector<Index> bucket_members(const PerPathErrors& pp, const PercentileInterval& iv) {
  if (!(iv.lo >= 0.0 && iv.lo < iv.hi && iv.hi <= 100.0)) {
    throw std::invalid_argument("percentile interval must satisfy 0 <= lo < hi <= 100");
  }
  const auto finals = pp.final_errors();
  const Index n = finals.size();
  std::vector<Index> order(n);
  for (Index i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return finals[a] < finals[b]; });
  std::vector<Index> members;
  Index group_rank = 0;
  for (Index r = 0; r < n; ++r) {
    if (r == 0 || finals[order[r]] != finals[order[r - 1]]) group_rank = r;
    const double pct = 100.0 * static_cast<double>(group_rank) / static_cast<double>(n);
    if (pct >= iv.lo && (pct < iv.hi || iv.hi == 100.0)) members.push_back(order[r]);
  }
  std::sort(members.begin(), members.end());
  return members;
}

/// err(n, T, I) for each interval I. Throws when a bucket is empty.
inline ErrTable percentile_buckets(const PerPathErrors& pp,
                                   const std::vector<PercentileInterval>& intervals) {
  ErrTable table;
  for (const auto& iv : intervals) {
    const auto members = bucket_members(pp, iv);
    if (members.empty()) {
      throw std::runtime_error("percentile_buckets: bucket " + interval_label(iv) + " is empty");
    }
    auto c = mean_curve(pp, interval_label(iv), members);
    c.i_lo = iv.lo;
    c.i_hi = iv.hi;
    table.curves.push_back(std::move(c));
  }
  return table;
}

/// err(n, T) for each mu(RIGHTEND | s_1) value, on the same paths.
inline ErrTable mu_sweep(const ExperimentConfig& config, const std::vector<Trajectory>& paths,
                         Index T, const std::vector<double>& mu_values) {
  config.validate();
  ErrTable table;
  const auto init = theta0_source(config);
  for (double m : mu_values) {
    if (!(m >= 0.0 && m <= 1.0)) throw std::invalid_argument("mu_sweep: mu outside [0, 1]");
    const auto pp = run_em_on_paths(config, paths, T, ExperimentConfig::mu_for(m), init);
    table.curves.push_back(mean_curve(pp, "mu" + detail::fmt_real(m)));
  }
  return table;
}

/// err(n, T) for each random-start scale w.
inline ErrTable random_init_sweep(const ExperimentConfig& config,
                                  const std::vector<Trajectory>& paths, Index T,
                                  const std::vector<double>& w_list) {
  config.validate();
  ErrTable table;
  for (double w : w_list) {
    if (!(w >= 0.0)) throw std::invalid_argument("random_init_sweep: w must be >= 0");
    const auto pp = run_em_on_paths(config, paths, T, config.mu(),
                                    [&](Index p) { return random_init(config, w, p); });
    table.curves.push_back(mean_curve(pp, "w" + detail::fmt_real(w)));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

/// Wide, gnuplot-ready: column n, then one column per curve label.
inline void write_csv(std::ostream& out, const ErrTable& table) {
  out << 'n';
  for (const auto& c : table.curves) out << ',' << c.label;
  out << '\n';
  const Index len = table.curves.empty() ? 0 : table.curves.front().err.size();
  for (Index n = 0; n < len; ++n) {
    out << n;
    for (const auto& c : table.curves) out << ',' << detail::fmt_real(c.err[n]);
    out << '\n';
  }
}

/// Long form: path_id, n, err.
inline void write_csv(std::ostream& out, const PerPathErrors& pp) {
  out << "path_id,n,err\n";
  for (Index p = 0; p < pp.err.size(); ++p) {
    for (Index n = 0; n < pp.err[p].size(); ++n) {
      out << p << ',' << n << ',' << detail::fmt_real(pp.err[p][n]) << '\n';
    }
  }
}

}  // namespace hil
