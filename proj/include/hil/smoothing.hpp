#pragma once

// Forward-backward smoothing over the latent (option, termination) chain.
//
// Messages are kept as normalized pmfs over O x {0,1} with the log of each
// step's normalizing sum retained (scaled Baum-Welch). Writing c_t for the
// forward sums, sum_t log c_t is the log marginal likelihood of the actions
// given the states, environment terms excluded. The backward sums d_t are
// defined so that the unscaled backward message is beta_t * prod_{u>=t} d_u,
// with d_T = 2|O| undoing the (2|O|)^-1 boundary.

#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "hil/core.hpp"
#include "hil/detail/csv.hpp"

namespace hil {

/// Per-time pmfs over (option, termination bit). Times are absolute indices
/// t0 .. t0 + n_times - 1 (0-based, so time index 0 is the first step).
class OptionBitTable {
 public:
  OptionBitTable() = default;
  OptionBitTable(Index t0, Index n_times, Index n_options)
      : t0_(t0), n_times_(n_times), n_options_(n_options), values_(n_times * n_options * 2, 0.0) {}

  Index t0() const { return t0_; }
  Index n_times() const { return n_times_; }
  Index t_end() const { return t0_ + n_times_; }
  Index n_options() const { return n_options_; }
  bool contains(Index t) const { return t >= t0_ && t < t_end(); }

  double& operator()(Index t, Index o, Index b) { return values_[offset(t) + o * 2 + b]; }
  double operator()(Index t, Index o, Index b) const { return values_[offset(t) + o * 2 + b]; }

  std::span<double> slice(Index t) { return {values_.data() + offset(t), n_options_ * 2}; }
  std::span<const double> slice(Index t) const {
    return {values_.data() + offset(t), n_options_ * 2};
  }

  /// Sum over b of the slice at t.
  double option_marginal(Index t, Index o) const { return (*this)(t, o, 0) + (*this)(t, o, 1); }

  const std::vector<double>& values() const { return values_; }

  /// Copy restricted to times [begin, end).
  OptionBitTable restrict(Index begin, Index end) const {
    if (begin < t0_ || end > t_end() || begin > end) {
      throw std::out_of_range("OptionBitTable::restrict: range outside table");
    }
    OptionBitTable out(begin, end - begin, n_options_);
    for (Index t = begin; t < end; ++t) {
      auto src = slice(t);
      auto dst = out.slice(t);
      std::copy(src.begin(), src.end(), dst.begin());
    }
    return out;
  }

 private:
  Index offset(Index t) const {
    if (!contains(t)) throw std::out_of_range("OptionBitTable: time index outside table");
    return (t - t0_) * n_options_ * 2;
  }

  Index t0_ = 0;
  Index n_times_ = 0;
  Index n_options_ = 0;
  std::vector<double> values_;
};

/// Normalized forward or backward messages with per-step log normalizers.
struct MessageTable {
  OptionBitTable probs;
  std::vector<double> log_normalizers;  // one per time in probs
};

struct SmoothingTable {
  OptionBitTable gamma;   // posterior of (O_t, B_t)
  OptionBitTable gamma2;  // posterior of (O_{t-1}, B_t), starts one step later
  double log_marginal = 0.0;
};

inline double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("total_variation: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
  return 0.5 * acc;
}

namespace detail {

inline double normalize_in_place(std::span<double> v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    throw std::runtime_error("smoothing: unnormalized message has no mass");
  }
  for (double& x : v) x /= sum;
  return sum;
}

/// Forward pass over obs[begin, end). `head` is the law of the option in
/// force before step `begin`.
inline MessageTable forward_pass(const StepFactors& h, const ObservationSequence& obs, Index begin,
                                 Index end, std::span<const double> head) {
  const Index O = h.spaces().n_options;
  MessageTable msg{OptionBitTable(begin, end - begin, O), std::vector<double>(end - begin)};
  std::vector<double> prev(head.begin(), head.end());
  for (Index t = begin; t < end; ++t) {
    const auto blk = h.block(obs.states[t], obs.actions[t]);
    auto cur = msg.probs.slice(t);
    for (Index op = 0; op < O; ++op) {
      const double w = prev[op];
      if (w == 0.0) continue;
      const double* row = blk.data() + op * O * 2;
      for (Index i = 0; i < O * 2; ++i) cur[i] += row[i] * w;
    }
    msg.log_normalizers[t - begin] = std::log(normalize_in_place(cur));
    for (Index o = 0; o < O; ++o) prev[o] = cur[o * 2] + cur[o * 2 + 1];
  }
  return msg;
}

inline MessageTable backward_pass(const StepFactors& h, const ObservationSequence& obs,
                                  Index begin, Index end) {
  const Index O = h.spaces().n_options;
  MessageTable msg{OptionBitTable(begin, end - begin, O), std::vector<double>(end - begin)};
  const double boundary = 1.0 / static_cast<double>(2 * O);
  for (double& x : msg.probs.slice(end - 1)) x = boundary;
  msg.log_normalizers[end - 1 - begin] = std::log(static_cast<double>(2 * O));
  for (Index t = end - 1; t-- > begin;) {
    const auto blk = h.block(obs.states[t + 1], obs.actions[t + 1]);
    const auto next = msg.probs.slice(t + 1);
    auto cur = msg.probs.slice(t);
    for (Index o = 0; o < O; ++o) {
      const double* row = blk.data() + o * O * 2;
      double acc = 0.0;
      for (Index i = 0; i < O * 2; ++i) acc += row[i] * next[i];
      // Depends on o_t only; b_t does not enter the future.
      cur[o * 2] = acc;
      cur[o * 2 + 1] = acc;
    }
    msg.log_normalizers[t - begin] = std::log(normalize_in_place(cur));
  }
  return msg;
}

inline SmoothingTable combine(const StepFactors& h, const ObservationSequence& obs,
                              const MessageTable& fwd, const MessageTable& bwd) {
  const Index O = h.spaces().n_options;
  const Index begin = fwd.probs.t0();
  const Index end = fwd.probs.t_end();
  SmoothingTable out;
  out.gamma = OptionBitTable(begin, end - begin, O);
  out.gamma2 = OptionBitTable(begin + 1, end - begin - 1, O);
  for (Index t = begin; t < end; ++t) {
    auto g = out.gamma.slice(t);
    const auto a = fwd.probs.slice(t);
    const auto b = bwd.probs.slice(t);
    for (Index i = 0; i < O * 2; ++i) g[i] = a[i] * b[i];
    normalize_in_place(g);
  }
  for (Index t = begin + 1; t < end; ++t) {
    const auto blk = h.block(obs.states[t], obs.actions[t]);
    const auto beta = bwd.probs.slice(t);
    auto g2 = out.gamma2.slice(t);
    for (Index op = 0; op < O; ++op) {
      const double prev = fwd.probs.option_marginal(t - 1, op);
      const double* row = blk.data() + op * O * 2;
      for (Index b = 0; b < 2; ++b) {
        double acc = 0.0;
        for (Index o = 0; o < O; ++o) acc += row[o * 2 + b] * beta[o * 2 + b];
        g2[op * 2 + b] = prev * acc;
      }
    }
    normalize_in_place(g2);
  }
  double lm = 0.0;
  for (double c : fwd.log_normalizers) lm += c;
  out.log_marginal = lm;
  return out;
}

template <OptionPolicyFamily F>
void check_inputs(const F& family, const ObservationSequence& obs, const PriorMu* mu) {
  const Spaces sp = family.spaces();
  obs.validate(sp);
  if (obs.size() < 2) throw std::invalid_argument("smoothing: need at least two observations");
  if (mu != nullptr) mu->validate(sp.n_options);
}

}  // namespace detail

template <OptionPolicyFamily F>
MessageTable forward_messages(const F& family, const Theta& theta, const ObservationSequence& obs,
                              const PriorMu& mu) {
  detail::check_inputs(family, obs, &mu);
  const StepFactors h(family, theta);
  return detail::forward_pass(h, obs, 0, obs.size(), mu.weights);
}

template <OptionPolicyFamily F>
MessageTable backward_messages(const F& family, const Theta& theta,
                               const ObservationSequence& obs) {
  detail::check_inputs(family, obs, nullptr);
  const StepFactors h(family, theta);
  return detail::backward_pass(h, obs, 0, obs.size());
}

template <OptionPolicyFamily F>
SmoothingTable smooth(const F& family, const Theta& theta, const ObservationSequence& obs,
                      const PriorMu& mu) {
  detail::check_inputs(family, obs, &mu);
  const StepFactors h(family, theta);
  const auto fwd = detail::forward_pass(h, obs, 0, obs.size(), mu.weights);
  const auto bwd = detail::backward_pass(h, obs, 0, obs.size());
  return detail::combine(h, obs, fwd, bwd);
}

/// log of the sum over all latent paths of mu(o_0) * prod_t h_t.
template <OptionPolicyFamily F>
double marginal_log_likelihood(const F& family, const Theta& theta, const ObservationSequence& obs,
                               const PriorMu& mu) {
  const auto fwd = forward_messages(family, theta, obs, mu);
  double lm = 0.0;
  for (double c : fwd.log_normalizers) lm += c;
  return lm;
}

/// Smoothing of the core window [core_begin, core_end) computed on the
/// extended window [core_begin - k, core_end + k) of `long_obs`.
///
/// The option before the extended window's first step is drawn from
/// `head_prior`, uniform over options when not given. The result covers
/// only the core window; gamma2 starts at core_begin whenever k >= 1.
template <OptionPolicyFamily F>
SmoothingTable windowed_smooth(const F& family, const Theta& theta,
                               const ObservationSequence& long_obs, Index core_begin,
                               Index core_end, Index k,
                               const std::optional<PriorMu>& head_prior = std::nullopt) {
  const Spaces sp = family.spaces();
  long_obs.validate(sp);
  if (core_begin >= core_end) throw std::invalid_argument("windowed_smooth: empty core window");
  if (core_begin < k || core_end + k > long_obs.size()) {
    throw std::out_of_range("windowed_smooth: window exceeds available observations");
  }
  const Index begin = core_begin - k;
  const Index end = core_end + k;
  if (end - begin < 2) throw std::invalid_argument("windowed_smooth: window shorter than two steps");
  const PriorMu head = head_prior ? *head_prior : PriorMu::uniform(sp.n_options);
  head.validate(sp.n_options);

  const StepFactors h(family, theta);
  const auto fwd = detail::forward_pass(h, long_obs, begin, end, head.weights);
  const auto bwd = detail::backward_pass(h, long_obs, begin, end);
  auto full = detail::combine(h, long_obs, fwd, bwd);

  SmoothingTable out;
  out.gamma = full.gamma.restrict(core_begin, core_end);
  const Index g2_begin = std::max(core_begin, begin + 1);
  out.gamma2 = g2_begin < core_end ? full.gamma2.restrict(g2_begin, core_end)
                                   : OptionBitTable(core_end, 0, sp.n_options);
  out.log_marginal = full.log_marginal;
  return out;
}

/// Columns t, o, b, gamma, gamma2 (t is 1-based; gamma2 empty where undefined).
inline void write_csv(std::ostream& out, const SmoothingTable& tab) {
  out << "t,o,b,gamma,gamma2\n";
  for (Index t = tab.gamma.t0(); t < tab.gamma.t_end(); ++t) {
    for (Index o = 0; o < tab.gamma.n_options(); ++o) {
      for (Index b = 0; b < 2; ++b) {
        out << t + 1 << ',' << o << ',' << b << ',' << detail::fmt_real(tab.gamma(t, o, b)) << ',';
        if (tab.gamma2.contains(t)) out << detail::fmt_real(tab.gamma2(t, o, b));
        out << '\n';
      }
    }
  }
}

}  // namespace hil
