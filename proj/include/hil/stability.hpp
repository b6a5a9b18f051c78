#pragma once

// Mixing constants of the options-with-failure kernel, and measurements of
// how fast smoothing distributions forget their boundary and how they move
// under parameter perturbations.

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "hil/core.hpp"
#include "hil/detail/csv.hpp"
#include "hil/smoothing.hpp"

namespace hil {

struct MixingConstants {
  double c_b = 0.0;  // inf over the parameter set of min pi_b
  double eps_b = 0.0;
  double forgetting_rate = 0.0;  // 1 - eps_b^2 zeta / |O|
};

namespace detail {

inline MixingConstants mixing_from_cb(double c_b, double zeta, Index n_options) {
  MixingConstants m;
  m.c_b = c_b;
  m.eps_b = c_b / 2.0;
  m.forgetting_rate = 1.0 - m.eps_b * m.eps_b * zeta / static_cast<double>(n_options);
  return m;
}

}  // namespace detail

/// Over the box, pi_b takes the values theta_b and 1 - theta_b, so its
/// infimum is min(lower, 1 - upper).
inline MixingConstants mixing_constants(const TargetSeekingFamily& family) {
  const double c_b = std::min(family.lower(), 1.0 - family.upper());
  return detail::mixing_from_cb(c_b, family.zeta(), family.spaces().n_options);
}

/// Tabular termination entries can sit exactly at the floor.
inline MixingConstants mixing_constants(const TabularFamily& family) {
  return detail::mixing_from_cb(family.floor(), family.zeta(), family.spaces().n_options);
}

/// (rate)^k + (rate)^(T + k - t) for position t (1-based) in a core window
/// of length T.
inline double forgetting_bound(const MixingConstants& m, Index k, Index T, Index t) {
  const double r = m.forgetting_rate;
  return std::pow(r, static_cast<double>(k)) + std::pow(r, static_cast<double>(T + k - t));
}

struct ForgettingRow {
  Index center = 0;  // absolute time index (0-based) in the long sequence
  Index k = 0;
  double measured = 0.0;
  double bound = 0.0;
};

struct ForgettingReport {
  MixingConstants constants;
  std::vector<ForgettingRow> rows;

  bool bound_holds() const {
    return std::all_of(rows.begin(), rows.end(),
                       [](const ForgettingRow& r) { return r.measured <= r.bound; });
  }

  double max_measured_at(Index k) const {
    double m = 0.0;
    for (const auto& r : rows) {
      if (r.k == k) m = std::max(m, r.measured);
    }
    return m;
  }
};

/// For every center time and radius k, smooths the window [t - k, t + k]
/// under two head priors and records the TV distance of gamma at t.
///
/// Each center is its own single-step core window, so the bound uses T = 1,
/// t = 1.
template <OptionPolicyFamily F>
ForgettingReport tv_forgetting_experiment(const F& family, const Theta& theta,
                                          const ObservationSequence& long_obs,
                                          const std::vector<Index>& centers,
                                          const std::vector<Index>& k_list,
                                          const PriorMu& prior_a, const PriorMu& prior_b) {
  ForgettingReport report;
  report.constants = mixing_constants(family);
  for (Index center : centers) {
    for (Index k : k_list) {
      if (center < k || center + std::max<Index>(k, 1) + 1 > long_obs.size()) {
        throw std::out_of_range("tv_forgetting_experiment: insufficient data for k");
      }
      if (k == 0) {
        // A one-step window cannot be smoothed; the priors enter directly.
        const auto ga = windowed_smooth(family, theta, long_obs, center, center + 2, 0, prior_a);
        const auto gb = windowed_smooth(family, theta, long_obs, center, center + 2, 0, prior_b);
        report.rows.push_back({center, k, total_variation(ga.gamma.slice(center), gb.gamma.slice(center)),
                               forgetting_bound(report.constants, k, 1, 1)});
        continue;
      }
      const auto ga = windowed_smooth(family, theta, long_obs, center, center + 1, k, prior_a);
      const auto gb = windowed_smooth(family, theta, long_obs, center, center + 1, k, prior_b);
      report.rows.push_back({center, k,
                             total_variation(ga.gamma.slice(center), gb.gamma.slice(center)),
                             forgetting_bound(report.constants, k, 1, 1)});
    }
  }
  return report;
}

/// Columns center, k, measured, bound.
inline void write_csv(std::ostream& out, const ForgettingReport& report) {
  out << "center,k,measured,bound\n";
  for (const auto& r : report.rows) {
    out << r.center + 1 << ',' << r.k << ',' << detail::fmt_real(r.measured) << ','
        << detail::fmt_real(r.bound) << '\n';
  }
}

struct PerturbationLevel {
  double delta_norm = 0.0;
  double max_tv = 0.0;
  std::vector<double> tv;  // per time

  double ratio() const { return delta_norm > 0.0 ? max_tv / delta_norm : 0.0; }
};

struct PerturbationReport {
  std::vector<PerturbationLevel> levels;

  /// Largest over smallest TV / ||delta|| across the nonzero levels.
  double ratio_spread() const {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& l : levels) {
      if (l.delta_norm <= 0.0) continue;
      lo = std::min(lo, l.ratio());
      hi = std::max(hi, l.ratio());
    }
    return hi > 0.0 ? hi / lo : 1.0;
  }
};

/// Measures max_t TV(gamma^theta_t, gamma^theta_hat_t) for theta_hat moved
/// toward theta by successive halvings: level j uses
/// theta + (theta_hat - theta) / 2^j, j = 0 .. n_halvings.
template <OptionPolicyFamily F>
PerturbationReport parameter_perturbation_experiment(const F& family, const Theta& theta,
                                                     const Theta& theta_hat,
                                                     const ObservationSequence& obs,
                                                     const PriorMu& mu, Index n_halvings = 4) {
  family.validate(theta);
  family.validate(theta_hat);
  const auto base = smooth(family, theta, obs, mu);
  PerturbationReport report;
  for (Index j = 0; j <= n_halvings; ++j) {
    const double scale = std::ldexp(1.0, -static_cast<int>(j));
    Theta moved = theta;
    auto blend = [&](std::vector<double>& dst, const std::vector<double>& from,
                     const std::vector<double>& to) {
      for (Index i = 0; i < dst.size(); ++i) dst[i] = from[i] + scale * (to[i] - from[i]);
    };
    blend(moved.hi, theta.hi, theta_hat.hi);
    blend(moved.lo, theta.lo, theta_hat.lo);
    blend(moved.b, theta.b, theta_hat.b);
    const auto perturbed = smooth(family, moved, obs, mu);
    PerturbationLevel level;
    level.delta_norm = distance(moved, theta);
    for (Index t = 0; t < obs.size(); ++t) {
      const double tv = total_variation(base.gamma.slice(t), perturbed.gamma.slice(t));
      level.tv.push_back(tv);
      level.max_tv = std::max(level.max_tv, tv);
    }
    report.levels.push_back(std::move(level));
  }
  return report;
}

/// Columns t, tv, delta_norm; one block of rows per perturbation level.
inline void write_csv(std::ostream& out, const PerturbationReport& report) {
  out << "t,tv,delta_norm\n";
  for (const auto& level : report.levels) {
    for (Index t = 0; t < level.tv.size(); ++t) {
      out << t + 1 << ',' << detail::fmt_real(level.tv[t]) << ','
          << detail::fmt_real(level.delta_norm) << '\n';
    }
  }
}

}  // namespace hil
