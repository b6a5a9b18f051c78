#pragma once

// Random small instances and an unscaled reference recursion for tests.

#include <cmath>
#include <cstdint>
#include <vector>

#include "hil/core.hpp"
#include "hil/instances.hpp"
#include "hil/rng.hpp"

namespace hil::testing {

using hil::Instance;
using hil::random_instance;
using hil::random_tabular_theta;
using hil::random_weights;

/// Forward recursion without any scaling; returns log of the total mass.
/// Only usable for short sequences.
template <class F>
double unscaled_log_marginal(const F& family, const Theta& theta, const ObservationSequence& obs,
                             const PriorMu& mu) {
  const Index O = family.spaces().n_options;
  std::vector<double> prev = mu.weights;
  std::vector<double> cur(O * 2);
  for (Index t = 0; t < obs.size(); ++t) {
    std::fill(cur.begin(), cur.end(), 0.0);
    for (Index op = 0; op < O; ++op) {
      for (Index o = 0; o < O; ++o) {
        for (Index b = 0; b < 2; ++b) {
          cur[o * 2 + b] += prev[op] * family.pi_b(theta, b, obs.states[t], op) *
                            bar_pi_hi(family, theta, o, obs.states[t], op, b) *
                            family.pi_lo(theta, obs.actions[t], obs.states[t], o);
        }
      }
    }
    for (Index o = 0; o < O; ++o) prev[o] = cur[o * 2] + cur[o * 2 + 1];
  }
  double total = 0.0;
  for (double x : prev) total += x;
  return std::log(total);
}

/// The two-step grid instance whose expected values are frozen from
/// tests/oracle/freeze_values.py.
struct GridInstance {
  TargetSeekingFamily family{0.1};
  Theta theta = TargetSeekingFamily::make_theta(0.6, 0.7, 0.8);
  PriorMu mu = PriorMu::point_mass(2, TargetSeekingFamily::kRightEnd);
  ObservationSequence obs{{0, 2}, {TargetSeekingFamily::kRight, TargetSeekingFamily::kLeft}};
};

}  // namespace hil::testing
