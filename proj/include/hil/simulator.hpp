#pragma once

// Expert trajectory generation for the hierarchical decision process.

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "hil/core.hpp"
#include "hil/detail/csv.hpp"
#include "hil/rng.hpp"

namespace hil {

struct Trajectory {
  std::vector<Index> states;
  std::vector<Index> actions;
  std::vector<Index> options;       // hidden
  std::vector<Index> terminations;  // hidden
  Index o0 = 0;
  std::uint64_t seed = 0;

  Index size() const { return states.size(); }
  ObservationSequence observations() const { return {states, actions}; }
};

/// Four-cell grid: RIGHT moves uniformly to a cell in {s, ..., 3}, LEFT
/// uniformly to a cell in {0, ..., s}.
inline Environment make_grid_env() {
  constexpr Index n = TargetSeekingFamily::kStates;
  Environment env{n, 2, std::vector<double>(n * 2 * n, 0.0)};
  for (Index s = 0; s < n; ++s) {
    for (Index to = 0; to <= s; ++to) {
      env.transition[(s * 2 + TargetSeekingFamily::kLeft) * n + to] = 1.0 / static_cast<double>(s + 1);
    }
    for (Index to = s; to < n; ++to) {
      env.transition[(s * 2 + TargetSeekingFamily::kRight) * n + to] =
          1.0 / static_cast<double>(n - s);
    }
  }
  return env;
}

namespace detail {

/// Runs the decision process for `steps` steps from (o_prev, s), appending
/// to `out`. Returns the state that follows the last recorded step.
template <OptionPolicyFamily F>
Index simulate_into(const F& family, const Theta& theta, const Environment& env, Index o_prev,
                    Index s, Index steps, Rng& rng, Trajectory& out) {
  const Spaces sp = family.spaces();
  std::vector<double> w_option(sp.n_options);
  std::vector<double> w_action(sp.n_actions);
  for (Index t = 0; t < steps; ++t) {
    const Index b = rng.bernoulli(family.pi_b(theta, 1, s, o_prev)) ? 1 : 0;
    for (Index o = 0; o < sp.n_options; ++o) w_option[o] = bar_pi_hi(family, theta, o, s, o_prev, b);
    const Index o = rng.categorical(w_option);
    for (Index a = 0; a < sp.n_actions; ++a) w_action[a] = family.pi_lo(theta, a, s, o);
    const Index a = rng.categorical(w_action);
    out.states.push_back(s);
    out.actions.push_back(a);
    out.options.push_back(o);
    out.terminations.push_back(b);
    s = rng.categorical(env.row(s, a));
    o_prev = o;
  }
  return s;
}

inline void check_env(const Spaces& sp, const Environment& env) {
  env.validate();
  if (env.n_states != sp.n_states || env.n_actions != sp.n_actions) {
    throw std::invalid_argument("environment does not match the policy spaces");
  }
}

}  // namespace detail

/// Samples (s_{2:T}, a_{1:T}, o_{1:T}, b_{1:T}) given (o0, s1). Per step:
/// b_t ~ pi_b(. | s_t, o_{t-1}), o_t ~ bar_pi_hi(. | s_t, o_{t-1}, b_t),
/// a_t ~ pi_lo(. | s_t, o_t), s_{t+1} ~ P(. | s_t, a_t).
template <OptionPolicyFamily F>
Trajectory sample_trajectory(const F& family, const Theta& theta, const Environment& env, Index o0,
                             Index s1, Index T, std::uint64_t seed) {
  if (T < 2) throw std::invalid_argument("sample_trajectory: T must be at least 2");
  family.validate(theta);
  const Spaces sp = family.spaces();
  detail::check_env(sp, env);
  detail::check_index(o0, sp.n_options, "option");
  detail::check_index(s1, sp.n_states, "state");
  Trajectory traj;
  traj.o0 = o0;
  traj.seed = seed;
  Rng rng(seed);
  detail::simulate_into(family, theta, env, o0, s1, T, rng, traj);
  return traj;
}

inline constexpr Index kDefaultBurnIn = 10000;

/// Simulates burn_in + T steps from (o0, s1) = (0, 0) and keeps the last T.
/// The kept trajectory's o0 is the option in force just before the window.
template <OptionPolicyFamily F>
Trajectory sample_stationary(const F& family, const Theta& theta, const Environment& env, Index T,
                             Index burn_in, std::uint64_t seed) {
  if (T < 2) throw std::invalid_argument("sample_stationary: T must be at least 2");
  family.validate(theta);
  detail::check_env(family.spaces(), env);
  Rng rng(seed);
  Trajectory full;
  full.states.reserve(burn_in + T);
  detail::simulate_into(family, theta, env, Index{0}, Index{0}, burn_in + T, rng, full);

  Trajectory out;
  out.seed = seed;
  out.o0 = burn_in == 0 ? Index{0} : full.options[burn_in - 1];
  const auto from = static_cast<std::ptrdiff_t>(burn_in);
  out.states.assign(full.states.begin() + from, full.states.end());
  out.actions.assign(full.actions.begin() + from, full.actions.end());
  out.options.assign(full.options.begin() + from, full.options.end());
  out.terminations.assign(full.terminations.begin() + from, full.terminations.end());
  return out;
}

/// Columns t, s, a and, when requested, the hidden o, b. t starts at 1.
inline void write_csv(std::ostream& out, const Trajectory& traj, bool include_hidden = true) {
  out << (include_hidden ? "t,s,a,o,b\n" : "t,s,a\n");
  for (Index t = 0; t < traj.size(); ++t) {
    out << t + 1 << ',' << traj.states[t] << ',' << traj.actions[t];
    if (include_hidden) out << ',' << traj.options[t] << ',' << traj.terminations[t];
    out << '\n';
  }
}

/// Reads the format written by write_csv. Hidden columns are optional; when
/// absent the returned options/terminations are empty.
inline Trajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("trajectory CSV: missing header");
  const auto header = detail::split(detail::trim(line), ',');
  auto col = [&](const std::string& name) -> std::ptrdiff_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (detail::trim(header[i]) == name) return static_cast<std::ptrdiff_t>(i);
    }
    return -1;
  };
  const auto cs = col("s"), ca = col("a"), co = col("o"), cb = col("b");
  if (cs < 0 || ca < 0) throw std::runtime_error("trajectory CSV: need columns s and a");
  const bool hidden = co >= 0 && cb >= 0;

  Trajectory traj;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto fields = detail::split(line, ',');
    auto get = [&](std::ptrdiff_t c) -> Index {
      if (static_cast<std::size_t>(c) >= fields.size()) {
        throw std::runtime_error("trajectory CSV: short row at line " + std::to_string(line_no));
      }
      try {
        return static_cast<Index>(std::stoull(fields[static_cast<std::size_t>(c)]));
      } catch (const std::exception&) {
        throw std::runtime_error("trajectory CSV: bad integer at line " + std::to_string(line_no));
      }
    };
    traj.states.push_back(get(cs));
    traj.actions.push_back(get(ca));
    if (hidden) {
      traj.options.push_back(get(co));
      traj.terminations.push_back(get(cb));
    }
  }
  return traj;
}

}  // namespace hil
