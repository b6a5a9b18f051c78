// hil: command-line front end (simulate, em, experiment, oracle-check, stability).

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <string>

#include "hil/hil.hpp"

namespace fs = std::filesystem;
using namespace hil;

namespace {

struct Run {
  std::string command;
  fs::path config_path;
  fs::path out_dir;
  ConfigFile config;
  std::map<std::string, std::string> written;  // file name -> sha256
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
};

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

template <class Writer>
void emit(Run& run, const std::string& name, Writer&& write) {
  std::ostringstream buf;
  write(buf);
  const std::string bytes = buf.str();
  auto out = detail::open_for_write((run.out_dir / name).string());
  out << bytes;
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + (run.out_dir / name).string());
  run.written[name] = sha256_hex(bytes);
}

void write_manifest(Run& run) {
  nlohmann::ordered_json m;
  m["command"] = run.command;
  m["config_file"] = run.config_path.filename().string();
  m["config"] = run.config.entries();
  m["files"] = run.written;
  m["summary"] = run.summary;
  std::ofstream out(run.out_dir / "manifest.json");
  out << m.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing manifest.json");
}

std::string zero_pad(Index i, int width) {
  std::string s = std::to_string(i);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

// ---------------------------------------------------------------------------

int cmd_simulate(Run& run) {
  const auto cfg = ExperimentConfig::from_file(run.config);
  const bool hidden = run.config.get_uint("data", "hidden", 1) != 0;
  const auto paths = sample_paths(cfg);
  for (Index p = 0; p < paths.size(); ++p) {
    emit(run, "path_" + zero_pad(p, 4) + ".csv",
         [&](std::ostream& o) { write_csv(o, paths[p], hidden); });
  }
  run.summary["n_paths"] = paths.size();
  run.summary["T"] = cfg.max_T();
  std::cout << "simulate: wrote " << paths.size() << " paths of length " << cfg.max_T() << '\n';
  return 0;
}

int cmd_em(Run& run) {
  const auto cfg = ExperimentConfig::from_file(run.config);
  const auto family = cfg.family();
  ObservationSequence obs;
  const std::string source = run.config.get("data", "trajectory", "");
  if (!source.empty()) {
    fs::path file(source);
    if (file.is_relative()) file = run.config_path.parent_path() / file;
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open trajectory file " + file.string());
    obs = read_trajectory_csv(in).observations();
  } else {
    // Same stream as path 0 of an experiment with this master seed.
    obs = sample_stationary(family, cfg.theta_star, make_grid_env(), cfg.max_T(), cfg.burn_in,
                            derive_seed(cfg.master_seed, 0))
              .observations();
  }
  const Theta theta0 =
      cfg.init == InitMode::Fixed ? cfg.theta0 : random_init(cfg, cfg.init_scale, 0);
  const auto trace = em_run(family, obs, {cfg.N, cfg.mu(), theta0, cfg.early_stop_tol});
  emit(run, "em_trace.csv", [&](std::ostream& o) { write_csv(o, trace); });
  const Theta& last = trace.thetas.back();
  emit(run, "smoothing.csv",
       [&](std::ostream& o) { write_csv(o, smooth(family, last, obs, cfg.mu())); });
  run.summary["T"] = obs.size();
  run.summary["iterations"] = trace.stopped_at;
  run.summary["theta_final"] = last.flat();
  run.summary["err_final"] = distance(last, cfg.theta_star);
  std::cout << "em: " << trace.stopped_at << " iterations, final theta = ("
            << detail::fmt_real(last.hi[0]) << ", " << detail::fmt_real(last.lo[0]) << ", "
            << detail::fmt_real(last.b[0]) << ")\n";
  return 0;
}

std::vector<PercentileInterval> parse_intervals(const std::string& text) {
  std::vector<PercentileInterval> out;
  for (const auto& item : detail::split(text, ',')) {
    const auto parts = detail::split(detail::trim(item), '-');
    if (parts.size() != 2) {
      throw std::runtime_error("config: buckets.intervals entries look like 0-50, got '" + item + "'");
    }
    out.push_back({std::stod(parts[0]), std::stod(parts[1])});
  }
  return out;
}

Index sweep_length(const ConfigFile& c, const std::string& section, const ExperimentConfig& cfg) {
  const Index T = static_cast<Index>(c.get_uint(section, "T", cfg.max_T()));
  if (T < 2 || T > cfg.max_T()) {
    throw std::runtime_error("config: " + section + ".T must lie in [2, max of data.T]");
  }
  return T;
}

int cmd_experiment(Run& run) {
  const auto cfg = ExperimentConfig::from_file(run.config);
  const auto paths = sample_paths(cfg);
  const auto result = run_experiment(cfg, paths);
  emit(run, "err.csv", [&](std::ostream& o) { write_csv(o, result.table); });
  for (const auto& pp : result.per_path) {
    emit(run, "per_path_T" + std::to_string(pp.T) + ".csv",
         [&](std::ostream& o) { write_csv(o, pp); });
  }
  for (const auto& c : result.table.curves) {
    run.summary["err_final"][c.label] = c.err.back();
    std::cout << "experiment: " << c.label << " err(0) = " << detail::fmt_real(c.err.front())
              << " err(N) = " << detail::fmt_real(c.err.back()) << '\n';
  }

  if (run.config.has("buckets", "intervals")) {
    const auto intervals = parse_intervals(run.config.get("buckets", "intervals", ""));
    for (const auto& pp : result.per_path) {
      const auto table = percentile_buckets(pp, intervals);
      emit(run, "buckets_T" + std::to_string(pp.T) + ".csv",
           [&](std::ostream& o) { write_csv(o, table); });
    }
  }
  if (run.config.has("mu_sweep", "values")) {
    const Index T = sweep_length(run.config, "mu_sweep", cfg);
    const auto table = mu_sweep(cfg, paths, T, run.config.get_reals("mu_sweep", "values", {}));
    emit(run, "mu_sweep.csv", [&](std::ostream& o) { write_csv(o, table); });
    run.summary["mu_sweep_spread"] = table.final_spread();
    std::cout << "experiment: mu sweep final spread " << detail::fmt_real(table.final_spread())
              << '\n';
  }
  if (run.config.has("init_sweep", "w")) {
    const Index T = sweep_length(run.config, "init_sweep", cfg);
    const auto table = random_init_sweep(cfg, paths, T, run.config.get_reals("init_sweep", "w", {}));
    emit(run, "init_sweep.csv", [&](std::ostream& o) { write_csv(o, table); });
  }
  return 0;
}

int cmd_oracle_check(Run& run) {
  const auto& c = run.config;
  const Index n = static_cast<Index>(c.get_uint("oracle", "n_instances", 100));
  const Index max_T = static_cast<Index>(c.get_uint("oracle", "max_T", 8));
  const std::uint64_t seed = c.get_uint("oracle", "seed", 0);
  const double tol = c.get_real("oracle", "tol", 1e-9);
  if (max_T < 2) throw std::runtime_error("config: oracle.max_T must be at least 2");

  auto dev = [](const OptionBitTable& a, const OptionBitTable& b) {
    double m = 0.0;
    for (Index i = 0; i < a.values().size(); ++i) {
      m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
    }
    return m;
  };
  std::ostringstream csv;
  csv << "instance,n_states,n_actions,n_options,T,alpha,beta,gamma,gamma2,log_marginal,q\n";
  double worst = 0.0;
  for (Index i = 0; i < n; ++i) {
    const auto inst = random_instance(derive_seed(seed, i), max_T);
    Rng rng(derive_seed(seed ^ 0x71ULL, i));
    const auto prime = random_tabular_theta(inst.family, rng);
    const auto ref = oracle_enumerate(inst.family, inst.theta, inst.obs, inst.mu, inst.env);
    const auto q_ref =
        oracle_q_values(inst.family, inst.theta, {inst.theta, prime}, inst.obs, inst.mu, inst.env);
    const auto fwd = forward_messages(inst.family, inst.theta, inst.obs, inst.mu);
    const auto bwd = backward_messages(inst.family, inst.theta, inst.obs);
    const auto tab = smooth(inst.family, inst.theta, inst.obs, inst.mu);
    const double d[6] = {
        dev(fwd.probs, ref.alpha),
        dev(bwd.probs, ref.beta),
        dev(tab.gamma, ref.smoothing.gamma),
        dev(tab.gamma2, ref.smoothing.gamma2),
        std::abs(tab.log_marginal - ref.smoothing.log_marginal),
        std::max(std::abs(q_value(inst.family, inst.theta, tab, inst.obs) - q_ref[0]),
                 std::abs(q_value(inst.family, prime, tab, inst.obs) - q_ref[1]))};
    const Spaces sp = inst.family.spaces();
    csv << i << ',' << sp.n_states << ',' << sp.n_actions << ',' << sp.n_options << ','
        << inst.obs.size();
    for (double x : d) {
      csv << ',' << detail::fmt_real(x);
      worst = std::max(worst, x);
    }
    csv << '\n';
  }
  emit(run, "oracle_check.csv", [&](std::ostream& o) { o << csv.str(); });
  run.summary["max_deviation"] = worst;
  run.summary["tolerance"] = tol;
  std::cout << "oracle-check: " << n << " instances, max deviation " << detail::fmt_real(worst)
            << '\n';
  if (!(worst <= tol)) {
    std::cerr << "oracle-check: deviation " << detail::fmt_real(worst) << " exceeds tolerance "
              << detail::fmt_real(tol) << '\n';
    return 2;
  }
  return 0;
}

int cmd_stability(Run& run) {
  const auto& c = run.config;
  const auto cfg = ExperimentConfig::from_file(c);
  const auto family = cfg.family();
  const auto env = make_grid_env();
  const Index n_seq = static_cast<Index>(c.get_uint("stability", "n_sequences", 20));
  const auto k_list = c.get_uints("stability", "k", {1, 10, 100, 1000});
  if (k_list.empty()) throw std::runtime_error("config: stability.k is empty");
  const Index k_max = *std::max_element(k_list.begin(), k_list.end());
  const Index center = std::max<Index>(k_max, 1);
  const Index length = 2 * center + 2;

  std::ostringstream csv;
  csv << "sequence,center,k,measured,bound\n";
  bool holds = true;
  double tv_at_max = 0.0;
  for (Index q = 0; q < n_seq; ++q) {
    const auto obs = sample_stationary(family, cfg.theta_star, env, length, cfg.burn_in,
                                       derive_seed(cfg.master_seed, q))
                         .observations();
    const auto rep = tv_forgetting_experiment(family, cfg.theta_star, obs, {center}, k_list,
                                              PriorMu::point_mass(2, TargetSeekingFamily::kLeftEnd),
                                              PriorMu::point_mass(2, TargetSeekingFamily::kRightEnd));
    holds = holds && rep.bound_holds();
    tv_at_max = std::max(tv_at_max, rep.max_measured_at(k_max));
    for (const auto& r : rep.rows) {
      csv << q << ',' << r.center + 1 << ',' << r.k << ',' << detail::fmt_real(r.measured) << ','
          << detail::fmt_real(r.bound) << '\n';
    }
  }
  emit(run, "forgetting.csv", [&](std::ostream& o) { o << csv.str(); });

  const auto hat = c.get_reals("stability", "theta_hat",
                               {cfg.theta_star.hi[0] + 0.04, cfg.theta_star.lo[0] + 0.04,
                                cfg.theta_star.b[0] + 0.04});
  if (hat.size() != 3) throw std::runtime_error("config: stability.theta_hat needs three values");
  const Index perturb_T = static_cast<Index>(c.get_uint("stability", "perturb_T", 2000));
  const Index halvings = static_cast<Index>(c.get_uint("stability", "halvings", 4));
  const auto obs = sample_stationary(family, cfg.theta_star, env, perturb_T, cfg.burn_in,
                                     derive_seed(cfg.master_seed, n_seq))
                       .observations();
  const auto pert = parameter_perturbation_experiment(
      family, cfg.theta_star, TargetSeekingFamily::make_theta(hat[0], hat[1], hat[2]), obs,
      cfg.mu(), halvings);
  emit(run, "perturbation.csv", [&](std::ostream& o) { write_csv(o, pert); });

  const auto m = mixing_constants(family);
  run.summary["forgetting_rate"] = m.forgetting_rate;
  run.summary["bound_holds"] = holds;
  run.summary["max_tv_at_largest_k"] = tv_at_max;
  run.summary["perturbation_ratio_spread"] = pert.ratio_spread();
  std::cout << "stability: bound " << (holds ? "holds" : "violated") << ", max TV at k=" << k_max
            << " is " << detail::fmt_real(tv_at_max) << '\n';
  return holds ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical imitation learning with options: EM toolkit"};
  app.require_subcommand(1);
  Run run;
  std::string config;
  std::string out;
  const std::map<std::string, int (*)(Run&)> commands{{"simulate", cmd_simulate},
                                                      {"em", cmd_em},
                                                      {"experiment", cmd_experiment},
                                                      {"oracle-check", cmd_oracle_check},
                                                      {"stability", cmd_stability}};
  const std::map<std::string, std::string> help{
      {"simulate", "sample stationary expert trajectories"},
      {"em", "run EM on one trajectory"},
      {"experiment", "multi-path EM with error curves, buckets and sweeps"},
      {"oracle-check", "compare smoothing and Q against brute-force enumeration"},
      {"stability", "forgetting and parameter-perturbation measurements"}};
  for (const auto& [name, fn] : commands) {
    auto* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", config, "INI configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory")->required();
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    run.command = app.get_subcommands().front()->get_name();
    run.config_path = config;
    run.out_dir = out;
    std::ifstream in(config);
    if (!in) throw std::runtime_error("cannot open config " + config);
    run.config = ConfigFile::parse(in);
    fs::create_directories(run.out_dir);
    const int code = commands.at(run.command)(run);
    write_manifest(run);
    return code;
  } catch (const std::exception& e) {
    std::cerr << "hil " << run.command << ": error: " << e.what() << '\n';
    return 1;
  }
}
