#pragma once

// Seeded random small instances: tabular family, feasible theta, prior over
// the first option, all-positive environment and an observation sequence
// short enough for exhaustive enumeration.

#include <cmath>
#include <cstdint>
#include <vector>

#include "hil/core.hpp"
#include "hil/oracle.hpp"
#include "hil/rng.hpp"

namespace hil {

struct Instance {
  TabularFamily family;
  Theta theta;
  PriorMu mu;
  Environment env;
  ObservationSequence obs;
};

inline std::vector<double> random_weights(Rng& rng, Index n) {
  std::vector<double> w(n);
  for (double& x : w) x = 0.05 + rng.uniform();
  return w;
}

inline Theta random_tabular_theta(const TabularFamily& family, Rng& rng) {
  Theta th{random_weights(rng, family.hi_size()), random_weights(rng, family.lo_size()),
           random_weights(rng, family.b_size())};
  return family.normalize(std::move(th));
}

/// |S| <= 4, |A| <= 2, |O| <= 3, T <= max_T, all environment entries
/// positive so every observation sequence is possible.
inline Instance random_instance(std::uint64_t seed, Index max_T = 8) {
  Rng rng(seed);
  const Spaces sp{1 + static_cast<Index>(rng.uniform() * 4), 1 + static_cast<Index>(rng.uniform() * 2),
                  1 + static_cast<Index>(rng.uniform() * 3)};
  const double zeta = 0.05 + 0.9 * rng.uniform();
  TabularFamily family(sp, zeta);
  Theta theta = random_tabular_theta(family, rng);

  PriorMu mu;
  if (rng.uniform() < 0.25) {
    mu = PriorMu::point_mass(sp.n_options, static_cast<Index>(rng.uniform() * sp.n_options));
  } else {
    mu.weights = random_weights(rng, sp.n_options);
    double s = 0.0;
    for (double w : mu.weights) s += w;
    for (double& w : mu.weights) w /= s;
    // Renormalize the last entry so the sum is exact to rounding.
    double head = 0.0;
    for (Index i = 0; i + 1 < mu.weights.size(); ++i) head += mu.weights[i];
    mu.weights.back() = 1.0 - head;
  }

  Environment env{sp.n_states, sp.n_actions, {}};
  for (Index row = 0; row < sp.n_states * sp.n_actions; ++row) {
    auto w = random_weights(rng, sp.n_states);
    double s = 0.0;
    for (double x : w) s += x;
    double head = 0.0;
    for (Index i = 0; i + 1 < w.size(); ++i) {
      w[i] /= s;
      head += w[i];
    }
    w.back() = 1.0 - head;
    env.transition.insert(env.transition.end(), w.begin(), w.end());
  }

  // Keep |O|^(T+1) 2^T within the oracle's budget.
  Index T = 2 + static_cast<Index>(rng.uniform() * static_cast<double>(max_T - 1));
  while (std::pow(static_cast<double>(sp.n_options), static_cast<double>(T + 1)) * std::pow(2.0, T) >
         kOracleMaxPaths) {
    --T;
  }
  ObservationSequence obs;
  for (Index t = 0; t < T; ++t) {
    obs.states.push_back(static_cast<Index>(rng.uniform() * sp.n_states));
    obs.actions.push_back(static_cast<Index>(rng.uniform() * sp.n_actions));
  }
  return {family, theta, mu, env, obs};
}

}  // namespace hil
