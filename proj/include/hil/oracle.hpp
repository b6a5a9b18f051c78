#pragma once

// Ground truth by exhaustive enumeration of latent paths (o_0..o_T, b_1..b_T).
//
// Every path's weight is mu(o_0) * prod_t [pi_b * bar_pi_hi * pi_lo] *
// prod_{t<T} P(s_{t+1} | s_t, a_t), evaluated straight from the family's
// policy functions. No recursion from smoothing.hpp is used here.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "hil/core.hpp"
#include "hil/smoothing.hpp"

namespace hil {

inline constexpr double kOracleMaxPaths = 1e7;

struct OracleResult {
  OptionBitTable alpha;  // normalized P(obs_{1:t}, O_t, B_t)
  OptionBitTable beta;   // normalized P(obs_{t+1:T} | s_t, a_t, O_t, B_t)
  SmoothingTable smoothing;
  double log_marginal_with_env = 0.0;
  double log_env = 0.0;  // log prod_{t<T} P(s_{t+1} | s_t, a_t)
};

namespace detail {

/// Visits every latent path with its per-step factors. The visitor receives
/// (options[0..T], bits[1..T] as bits[0..T-1], factors[0..T-1]) where
/// factors[t] already includes the environment term into step t + 1.
template <OptionPolicyFamily F, class Visitor>
void enumerate_paths(const F& family, const Theta& theta, const ObservationSequence& obs,
                     const PriorMu& mu, const Environment& env, Visitor&& visit) {
  const Spaces sp = family.spaces();
  const Index O = sp.n_options;
  const Index T = obs.size();
  family.validate(theta);
  obs.validate(sp);
  mu.validate(O);
  if (T < 2) throw std::invalid_argument("oracle: need at least two observations");
  if (env.n_states != sp.n_states || env.n_actions != sp.n_actions) {
    throw std::invalid_argument("oracle: environment does not match spaces");
  }
  const double n_paths = std::pow(static_cast<double>(O), static_cast<double>(T + 1)) *
                         std::pow(2.0, static_cast<double>(T));
  if (n_paths > kOracleMaxPaths) throw std::length_error("oracle: instance too large to enumerate");

  // w[t][(o_prev * O + o) * 2 + b], taken directly from the policy functions.
  std::vector<std::vector<double>> w(T, std::vector<double>(O * O * 2));
  for (Index t = 0; t < T; ++t) {
    const Index s = obs.states[t];
    const Index a = obs.actions[t];
    const double p_env = t + 1 < T ? env(s, a, obs.states[t + 1]) : 1.0;
    for (Index op = 0; op < O; ++op) {
      for (Index o = 0; o < O; ++o) {
        for (Index b = 0; b < 2; ++b) {
          const double hi = b == 1 ? family.pi_hi(theta, o, s)
                                   : (o == op ? 1.0 - family.zeta() + family.zeta() / O
                                              : family.zeta() / O);
          w[t][(op * O + o) * 2 + b] =
              family.pi_b(theta, b, s, op) * hi * family.pi_lo(theta, a, s, o) * p_env;
        }
      }
    }
  }

  // Odometer over digits: options[0..T] in base O, then bits[0..T-1] in base 2.
  std::vector<Index> options(T + 1, 0);
  std::vector<Index> bits(T, 0);
  std::vector<double> factors(T);
  for (;;) {
    for (Index t = 0; t < T; ++t) {
      factors[t] = w[t][(options[t] * O + options[t + 1]) * 2 + bits[t]];
    }
    visit(options, bits, factors, mu.weights[options[0]]);

    Index d = 0;
    for (; d < T; ++d) {
      if (++bits[d] < 2) break;
      bits[d] = 0;
    }
    if (d < T) continue;
    Index e = 0;
    for (; e <= T; ++e) {
      if (++options[e] < O) break;
      options[e] = 0;
    }
    if (e > T) break;
  }
}

inline void normalize_rows(OptionBitTable& tab) {
  for (Index t = tab.t0(); t < tab.t_end(); ++t) {
    auto s = tab.slice(t);
    double sum = 0.0;
    for (double x : s) sum += x;
    for (double& x : s) x /= sum;
  }
}

}  // namespace detail

/// All four smoothing quantities plus the marginal likelihood by enumeration.
template <OptionPolicyFamily F>
OracleResult oracle_enumerate(const F& family, const Theta& theta, const ObservationSequence& obs,
                              const PriorMu& mu, const Environment& env) {
  const Index O = family.spaces().n_options;
  const Index T = obs.size();
  OracleResult r;
  r.alpha = OptionBitTable(0, T, O);
  r.beta = OptionBitTable(0, T, O);
  r.smoothing.gamma = OptionBitTable(0, T, O);
  r.smoothing.gamma2 = OptionBitTable(1, T - 1, O);
  double total = 0.0;
  std::vector<double> prefix(T);
  std::vector<double> suffix(T);

  detail::enumerate_paths(family, theta, obs, mu, env,
                          [&](const std::vector<Index>& opt, const std::vector<Index>& bits,
                              const std::vector<double>& f, double prior) {
                            double p = prior;
                            for (Index t = 0; t < T; ++t) {
                              p *= f[t];
                              prefix[t] = p;
                            }
                            double q = 1.0;
                            for (Index t = T; t-- > 0;) {
                              suffix[t] = q;  // factors of steps t+1 .. T-1
                              q *= f[t];
                            }
                            const double joint = p;
                            total += joint;
                            for (Index t = 0; t < T; ++t) {
                              const Index o = opt[t + 1];
                              const Index b = bits[t];
                              r.alpha(t, o, b) += prefix[t];
                              r.beta(t, o, b) += suffix[t];
                              r.smoothing.gamma(t, o, b) += joint;
                              if (t >= 1) r.smoothing.gamma2(t, opt[t], b) += joint;
                            }
                          });

  // Suffix sums over all prefixes with (O_t, B_t) fixed carry the same prefix
  // count for every (o, b), so normalizing recovers the backward message.
  detail::normalize_rows(r.alpha);
  detail::normalize_rows(r.beta);
  detail::normalize_rows(r.smoothing.gamma);
  detail::normalize_rows(r.smoothing.gamma2);

  double log_env = 0.0;
  for (Index t = 0; t + 1 < T; ++t) {
    log_env += std::log(env(obs.states[t], obs.actions[t], obs.states[t + 1]));
  }
  r.log_env = log_env;
  r.log_marginal_with_env = std::log(total);
  r.smoothing.log_marginal = r.log_marginal_with_env - log_env;
  return r;
}

template <OptionPolicyFamily F>
SmoothingTable oracle_smoothing(const F& family, const Theta& theta, const ObservationSequence& obs,
                                const PriorMu& mu, const Environment& env) {
  return oracle_enumerate(family, theta, obs, mu, env).smoothing;
}

/// Log marginal likelihood with environment factors excluded, matching
/// marginal_log_likelihood.
template <OptionPolicyFamily F>
double oracle_marginal(const F& family, const Theta& theta, const ObservationSequence& obs,
                       const PriorMu& mu, const Environment& env) {
  return oracle_enumerate(family, theta, obs, mu, env).smoothing.log_marginal;
}

/// Posterior (under theta) expectation of the complete log-likelihood at
/// each theta_prime, restricted to the terms that depend on theta_prime, with
/// the t = 1 termination term dropped and divided by T. One enumeration
/// serves all of `primes`.
template <OptionPolicyFamily F>
std::vector<double> oracle_q_values(const F& family, const Theta& theta,
                                    const std::vector<Theta>& primes,
                                    const ObservationSequence& obs, const PriorMu& mu,
                                    const Environment& env) {
  const Index O = family.spaces().n_options;
  const Index T = obs.size();
  // logs[k][t][(o_prev * O + o) * 2 + b]: log-likelihood of step t at primes[k].
  std::vector<std::vector<std::vector<double>>> logs;
  for (const Theta& prime : primes) {
    family.validate(prime);
    obs.validate(family.spaces());
    auto& per_t = logs.emplace_back(T, std::vector<double>(O * O * 2));
    for (Index t = 0; t < T; ++t) {
      const Index s = obs.states[t];
      for (Index op = 0; op < O; ++op) {
        for (Index o = 0; o < O; ++o) {
          for (Index b = 0; b < 2; ++b) {
            double ll = std::log(family.pi_lo(prime, obs.actions[t], s, o));
            if (t >= 1) ll += std::log(family.pi_b(prime, b, s, op));
            if (b == 1) ll += std::log(family.pi_hi(prime, o, s));
            per_t[t][(op * O + o) * 2 + b] = ll;
          }
        }
      }
    }
  }
  double total = 0.0;
  std::vector<double> weighted(primes.size(), 0.0);
  detail::enumerate_paths(
      family, theta, obs, mu, env,
      [&](const std::vector<Index>& opt, const std::vector<Index>& bits,
          const std::vector<double>& f, double prior) {
        double joint = prior;
        for (double x : f) joint *= x;
        if (joint == 0.0) return;
        total += joint;
        for (Index k = 0; k < primes.size(); ++k) {
          double ll = 0.0;
          for (Index t = 0; t < T; ++t) ll += logs[k][t][(opt[t] * O + opt[t + 1]) * 2 + bits[t]];
          weighted[k] += joint * ll;
        }
      });
  for (double& w : weighted) w = w / total / static_cast<double>(T);
  return weighted;
}

template <OptionPolicyFamily F>
double oracle_q_value(const F& family, const Theta& theta, const Theta& theta_prime,
                      const ObservationSequence& obs, const PriorMu& mu, const Environment& env) {
  return oracle_q_values(family, theta, std::vector<Theta>{theta_prime}, obs, mu, env).front();
}

}  // namespace hil
