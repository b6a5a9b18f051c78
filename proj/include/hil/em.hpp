#pragma once

// Baum-Welch type EM for options-with-failure policies: Q-function, exact
// M-steps for both families, and the iteration loop.

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "hil/core.hpp"
#include "hil/detail/csv.hpp"
#include "hil/smoothing.hpp"

namespace hil {

namespace detail {

inline void check_tables(const SmoothingTable& tables, const ObservationSequence& obs) {
  const Index T = obs.size();
  if (tables.gamma.t0() != 0 || tables.gamma.n_times() != T || tables.gamma2.t0() != 1 ||
      tables.gamma2.n_times() + 1 != T) {
    throw std::invalid_argument("smoothing tables do not match the observation length");
  }
}

}  // namespace detail

/// Q(theta' | theta) given the smoothing tables computed at theta:
///   (1/T) [ sum_{t>=2} sum gamma2 log pi_b + sum_t sum gamma log pi_lo
///           + sum_t sum_o gamma(o, 1) log pi_hi ].
/// The pi_b sum has T - 1 terms but is still divided by T.
template <OptionPolicyFamily F>
double q_value(const F& family, const Theta& theta_prime, const SmoothingTable& tables,
               const ObservationSequence& obs) {
  detail::check_tables(tables, obs);
  family.validate(theta_prime);
  const Index O = family.spaces().n_options;
  const Index T = obs.size();
  double acc = 0.0;
  for (Index t = 0; t < T; ++t) {
    const Index s = obs.states[t];
    const Index a = obs.actions[t];
    for (Index o = 0; o < O; ++o) {
      acc += tables.gamma.option_marginal(t, o) * std::log(family.pi_lo(theta_prime, a, s, o));
      acc += tables.gamma(t, o, 1) * std::log(family.pi_hi(theta_prime, o, s));
      if (t >= 1) {
        for (Index b = 0; b < 2; ++b) {
          acc += tables.gamma2(t, o, b) * std::log(family.pi_b(theta_prime, b, s, o));
        }
      }
    }
  }
  return acc / static_cast<double>(T);
}

/// Closed-form maximizer of Q over the box. Each scalar is a weighted
/// Bernoulli MLE, projected onto [lower, upper]; concavity makes the
/// projection exact. A ratio with no posterior mass keeps `previous`.
inline Theta m_step(const TargetSeekingFamily& family, const SmoothingTable& tables,
                    const ObservationSequence& obs, const Theta& previous) {
  using TS = TargetSeekingFamily;
  detail::check_tables(tables, obs);
  obs.validate(family.spaces());
  family.validate(previous);
  const Index T = obs.size();

  double hi_num = 0.0, hi_den = 0.0;
  double lo_num = 0.0, lo_den = 0.0;
  double b_num = 0.0, b_den = 0.0;
  for (Index t = 0; t < T; ++t) {
    const Index s = obs.states[t];
    const Index a = obs.actions[t];
    const Index favored = TS::in_left_half(s) ? TS::kLeftEnd : TS::kRightEnd;
    hi_num += tables.gamma(t, favored, 1);
    hi_den += tables.gamma(t, TS::kLeftEnd, 1) + tables.gamma(t, TS::kRightEnd, 1);
    // The action agrees with the option (LEFT under LEFTEND, RIGHT under RIGHTEND).
    lo_num += tables.gamma.option_marginal(t, a);
    lo_den += tables.gamma.option_marginal(t, 0) + tables.gamma.option_marginal(t, 1);
    if (t >= 1) {
      for (Index op = 0; op < 2; ++op) {
        const bool at_target = s == TS::target_of(op);
        b_num += at_target ? tables.gamma2(t, op, 1) : tables.gamma2(t, op, 0);
        b_den += tables.gamma2(t, op, 0) + tables.gamma2(t, op, 1);
      }
    }
  }
  auto update = [&](double num, double den, double prev) {
    return den > 0.0 ? family.clamp(num / den) : prev;
  };
  return TS::make_theta(update(hi_num, hi_den, previous.hi[0]),
                        update(lo_num, lo_den, previous.lo[0]),
                        update(b_num, b_den, previous.b[0]));
}

/// Expected counts per conditional slice, then the exact maximizer over the
/// floored simplex. Slices with no posterior mass keep `previous`.
inline Theta m_step(const TabularFamily& family, const SmoothingTable& tables,
                    const ObservationSequence& obs, const Theta& previous) {
  detail::check_tables(tables, obs);
  const Spaces sp = family.spaces();
  obs.validate(sp);
  family.validate(previous);
  const Index O = sp.n_options;
  const Index A = sp.n_actions;
  const Index T = obs.size();

  Theta counts{std::vector<double>(family.hi_size(), 0.0),
               std::vector<double>(family.lo_size(), 0.0),
               std::vector<double>(family.b_size(), 0.0)};
  for (Index t = 0; t < T; ++t) {
    const Index s = obs.states[t];
    const Index a = obs.actions[t];
    for (Index o = 0; o < O; ++o) {
      counts.hi[s * O + o] += tables.gamma(t, o, 1);
      counts.lo[(s * O + o) * A + a] += tables.gamma.option_marginal(t, o);
      if (t >= 1) {
        for (Index b = 0; b < 2; ++b) counts.b[(s * O + o) * 2 + b] += tables.gamma2(t, o, b);
      }
    }
  }

  Theta next = previous;
  auto solve = [&](const std::vector<double>& c, std::vector<double>& dst, Index width) {
    for (Index base = 0; base < c.size(); base += width) {
      const auto p = project_weights_to_floored_simplex(
          std::span<const double>(c.data() + base, width), family.floor());
      if (!p.empty()) std::copy(p.begin(), p.end(), dst.begin() + static_cast<std::ptrdiff_t>(base));
    }
  };
  solve(counts.hi, next.hi, O);
  solve(counts.lo, next.lo, A);
  solve(counts.b, next.b, 2);
  return next;
}

struct EMConfig {
  Index n_iters = 1;
  PriorMu mu;
  Theta theta0;
  double early_stop_tol = 0.0;  // 0 disables
};

struct EMTrace {
  std::vector<Theta> thetas;         // theta^(0) .. theta^(stopped_at)
  std::vector<double> q_values;      // Q(theta^(n) | theta^(n-1)), n = 1..stopped_at
  std::vector<double> log_marginals; // log L^m(theta^(n-1)), n = 1..stopped_at
  Index stopped_at = 0;

  /// theta^(n), repeating the last estimate after an early stop.
  const Theta& at(Index n) const { return thetas[std::min(n, thetas.size() - 1)]; }
};

template <class F>
concept EMFamily = OptionPolicyFamily<F> &&
    requires(const F& f, const SmoothingTable& tab, const ObservationSequence& obs,
             const Theta& th) {
      { m_step(f, tab, obs, th) } -> std::same_as<Theta>;
    };

/// Repeats smooth -> m_step for config.n_iters iterations.
template <EMFamily F>
EMTrace em_run(const F& family, const ObservationSequence& obs, const EMConfig& config) {
  if (config.n_iters < 1) throw std::invalid_argument("em_run: need at least one iteration");
  if (!(config.early_stop_tol >= 0.0)) {
    throw std::invalid_argument("em_run: early_stop_tol must be nonnegative");
  }
  family.validate(config.theta0);
  EMTrace trace;
  trace.thetas.reserve(config.n_iters + 1);
  trace.thetas.push_back(config.theta0);
  for (Index n = 1; n <= config.n_iters; ++n) {
    const Theta& current = trace.thetas.back();
    const auto tables = smooth(family, current, obs, config.mu);
    Theta next = m_step(family, tables, obs, current);
    trace.q_values.push_back(q_value(family, next, tables, obs));
    trace.log_marginals.push_back(tables.log_marginal);
    const double step = distance(next, current);
    trace.thetas.push_back(std::move(next));
    trace.stopped_at = n;
    if (config.early_stop_tol > 0.0 && step < config.early_stop_tol) break;
  }
  return trace;
}

/// Columns n, theta components (hi_*, lo_*, b_*), q_value, log_marginal.
/// Row n = 0 has empty q_value/log_marginal; row n holds Q(theta^(n) |
/// theta^(n-1)) and log L^m(theta^(n-1)).
inline void write_csv(std::ostream& out, const EMTrace& trace) {
  const Theta& first = trace.thetas.front();
  out << 'n';
  for (Index i = 0; i < first.hi.size(); ++i) out << ",hi_" << i;
  for (Index i = 0; i < first.lo.size(); ++i) out << ",lo_" << i;
  for (Index i = 0; i < first.b.size(); ++i) out << ",b_" << i;
  out << ",q_value,log_marginal\n";
  for (Index n = 0; n < trace.thetas.size(); ++n) {
    out << n;
    for (double v : trace.thetas[n].flat()) out << ',' << detail::fmt_real(v);
    if (n == 0) {
      out << ",,\n";
    } else {
      out << ',' << detail::fmt_real(trace.q_values[n - 1]) << ','
          << detail::fmt_real(trace.log_marginals[n - 1]) << '\n';
    }
  }
}

}  // namespace hil
