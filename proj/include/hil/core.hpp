#pragma once

// Options-with-failure policy model: spaces, parameters, the two policy
// families (full tables and the four-state target-seeking family), and the
// per-step joint factor used by every smoothing routine.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hil {

using Index = std::size_t;

struct Spaces {
  Index n_states = 1;
  Index n_actions = 1;
  Index n_options = 1;

  bool operator==(const Spaces&) const = default;
};

/// Parameter triple. Each block is a flat vector whose layout is owned by the
/// policy family that interprets it.
struct Theta {
  std::vector<double> hi;
  std::vector<double> lo;
  std::vector<double> b;

  bool operator==(const Theta&) const = default;

  std::vector<double> flat() const {
    std::vector<double> out;
    out.reserve(hi.size() + lo.size() + b.size());
    out.insert(out.end(), hi.begin(), hi.end());
    out.insert(out.end(), lo.begin(), lo.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
  }
};

/// Euclidean distance between two parameters of the same family.
inline double distance(const Theta& x, const Theta& y) {
  const auto fx = x.flat();
  const auto fy = y.flat();
  if (fx.size() != fy.size()) {
    throw std::invalid_argument("distance: parameter blocks differ in size");
  }
  double acc = 0.0;
  for (Index i = 0; i < fx.size(); ++i) {
    const double d = fx[i] - fy[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

/// Environment kernel P(s' | s, a), stored row-major as [s][a][s'].
struct Environment {
  Index n_states = 0;
  Index n_actions = 0;
  std::vector<double> transition;

  double operator()(Index s, Index a, Index s_next) const {
    return transition[(s * n_actions + a) * n_states + s_next];
  }

  std::span<const double> row(Index s, Index a) const {
    return {transition.data() + (s * n_actions + a) * n_states, n_states};
  }

  void validate() const {
    if (transition.size() != n_states * n_actions * n_states || n_states == 0 ||
        n_actions == 0) {
      throw std::invalid_argument("Environment: transition table has wrong shape");
    }
    for (Index s = 0; s < n_states; ++s) {
      for (Index a = 0; a < n_actions; ++a) {
        double sum = 0.0;
        for (double p : row(s, a)) {
          if (!(p >= 0.0)) throw std::invalid_argument("Environment: negative entry");
          sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12) {
          throw std::invalid_argument("Environment: row does not sum to one");
        }
      }
    }
  }
};

/// µ(· | s_1): the assumed law of the option in force before the first step.
struct PriorMu {
  std::vector<double> weights;

  static PriorMu uniform(Index n_options) {
    return {std::vector<double>(n_options, 1.0 / static_cast<double>(n_options))};
  }

  static PriorMu point_mass(Index n_options, Index o) {
    std::vector<double> w(n_options, 0.0);
    w.at(o) = 1.0;
    return {std::move(w)};
  }

  void validate(Index n_options) const {
    if (weights.size() != n_options) {
      throw std::invalid_argument("PriorMu: size does not match option count");
    }
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw std::invalid_argument("PriorMu: negative weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      throw std::invalid_argument("PriorMu: weights do not sum to one");
    }
  }
};

/// Demonstrated states and actions, one pair per step.
struct ObservationSequence {
  std::vector<Index> states;
  std::vector<Index> actions;

  Index size() const { return states.size(); }

  ObservationSequence prefix(Index n) const {
    if (n > size()) throw std::out_of_range("ObservationSequence::prefix: too long");
    return {{states.begin(), states.begin() + static_cast<std::ptrdiff_t>(n)},
            {actions.begin(), actions.begin() + static_cast<std::ptrdiff_t>(n)}};
  }

  ObservationSequence slice(Index begin, Index end) const {
    if (begin > end || end > size()) {
      throw std::out_of_range("ObservationSequence::slice: bad range");
    }
    return {{states.begin() + static_cast<std::ptrdiff_t>(begin),
             states.begin() + static_cast<std::ptrdiff_t>(end)},
            {actions.begin() + static_cast<std::ptrdiff_t>(begin),
             actions.begin() + static_cast<std::ptrdiff_t>(end)}};
  }

  void validate(const Spaces& spaces) const {
    if (states.size() != actions.size()) {
      throw std::invalid_argument("ObservationSequence: state/action lengths differ");
    }
    for (Index s : states) {
      if (s >= spaces.n_states) throw std::out_of_range("ObservationSequence: state out of range");
    }
    for (Index a : actions) {
      if (a >= spaces.n_actions) {
        throw std::out_of_range("ObservationSequence: action out of range");
      }
    }
  }
};

namespace detail {

inline void check_index(Index i, Index n, const char* what) {
  if (i >= n) {
    throw std::out_of_range(std::string(what) + " index " + std::to_string(i) +
                            " out of range [0, " + std::to_string(n) + ")");
  }
}

inline void check_zeta(double zeta) {
  if (!(zeta > 0.0 && zeta < 1.0)) {
    throw std::invalid_argument("failure probability zeta must lie in (0, 1)");
  }
}

}  // namespace detail

/// Exact maximizer of sum_i c_i log p_i over {p : p_i >= floor, sum p = 1}.
///
/// KKT gives p_i = max(floor, c_i / lambda); lambda is found by clamping the
/// smallest entries one at a time. Returns an empty vector when all weights
/// are zero (no information about this slice).
inline std::vector<double> project_weights_to_floored_simplex(std::span<const double> c,
                                                              double floor) {
  const Index n = c.size();
  if (n == 0) return {};
  if (floor * static_cast<double>(n) >= 1.0) {
    throw std::invalid_argument("floor too large for simplex dimension");
  }
  double total = 0.0;
  for (double v : c) {
    if (!(v >= 0.0)) throw std::invalid_argument("negative weight in simplex projection");
    total += v;
  }
  if (total <= 0.0) return {};

  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return c[i] < c[j]; });

  std::vector<double> p(n, floor);
  // Entries clamped so far are order[0..k). Free mass is shared in proportion
  // to the weights of the rest.
  double free_weight = total;
  for (Index k = 0; k < n; ++k) {
    const double free_mass = 1.0 - floor * static_cast<double>(k);
    const Index i = order[k];
    if (c[i] / free_weight * free_mass >= floor) {
      for (Index m = k; m < n; ++m) {
        const Index j = order[m];
        p[j] = c[j] / free_weight * free_mass;
      }
      return p;
    }
    free_weight -= c[i];
  }
  // Unreachable when floor * n < 1: the largest entry always clears the floor.
  return p;
}

// ---------------------------------------------------------------------------
// Policy families
// ---------------------------------------------------------------------------

/// Full conditional tables.
///
/// Layout of the blocks:
///   hi[s * O + o]                = pi_hi(o | s)
///   lo[(s * O + o) * A + a]      = pi_lo(a | s, o)
///   b [(s * O + o_prev) * 2 + b] = pi_b(b | s, o_prev)
/// Every conditional slice lies in the simplex with entries >= floor().
class TabularFamily {
 public:
  static constexpr double kDefaultFloor = 1e-6;

  TabularFamily(Spaces spaces, double zeta, double floor = kDefaultFloor)
      : spaces_(spaces), zeta_(zeta), floor_(floor) {
    if (spaces.n_states == 0 || spaces.n_actions == 0 || spaces.n_options == 0) {
      throw std::invalid_argument("TabularFamily: all space sizes must be positive");
    }
    detail::check_zeta(zeta);
    const Index widest = std::max<Index>({spaces.n_actions, spaces.n_options, 2});
    if (!(floor > 0.0) || floor * static_cast<double>(widest) >= 1.0) {
      throw std::invalid_argument("TabularFamily: floor must be positive and small");
    }
  }

  const Spaces& spaces() const { return spaces_; }
  double zeta() const { return zeta_; }
  double floor() const { return floor_; }

  Index hi_size() const { return spaces_.n_states * spaces_.n_options; }
  Index lo_size() const { return spaces_.n_states * spaces_.n_options * spaces_.n_actions; }
  Index b_size() const { return spaces_.n_states * spaces_.n_options * 2; }

  double pi_hi(const Theta& th, Index o, Index s) const {
    detail::check_index(o, spaces_.n_options, "option");
    detail::check_index(s, spaces_.n_states, "state");
    return th.hi[s * spaces_.n_options + o];
  }

  double pi_lo(const Theta& th, Index a, Index s, Index o) const {
    detail::check_index(a, spaces_.n_actions, "action");
    detail::check_index(s, spaces_.n_states, "state");
    detail::check_index(o, spaces_.n_options, "option");
    return th.lo[(s * spaces_.n_options + o) * spaces_.n_actions + a];
  }

  double pi_b(const Theta& th, Index b, Index s, Index o_prev) const {
    detail::check_index(b, 2, "termination");
    detail::check_index(s, spaces_.n_states, "state");
    detail::check_index(o_prev, spaces_.n_options, "option");
    return th.b[(s * spaces_.n_options + o_prev) * 2 + b];
  }

  /// Throws std::invalid_argument unless every slice is a floored pmf.
  void validate(const Theta& th) const {
    if (th.hi.size() != hi_size() || th.lo.size() != lo_size() || th.b.size() != b_size()) {
      throw std::invalid_argument("TabularFamily: parameter blocks have wrong sizes");
    }
    check_slices(th.hi, spaces_.n_options, "pi_hi");
    check_slices(th.lo, spaces_.n_actions, "pi_lo");
    check_slices(th.b, 2, "pi_b");
  }

  /// Floors every slice and renormalizes, so arbitrary nonnegative tables
  /// become feasible parameters.
  Theta normalize(Theta th) const {
    if (th.hi.size() != hi_size() || th.lo.size() != lo_size() || th.b.size() != b_size()) {
      throw std::invalid_argument("TabularFamily: parameter blocks have wrong sizes");
    }
    normalize_slices(th.hi, spaces_.n_options);
    normalize_slices(th.lo, spaces_.n_actions);
    normalize_slices(th.b, 2);
    return th;
  }

  Theta uniform() const {
    return {std::vector<double>(hi_size(), 1.0 / static_cast<double>(spaces_.n_options)),
            std::vector<double>(lo_size(), 1.0 / static_cast<double>(spaces_.n_actions)),
            std::vector<double>(b_size(), 0.5)};
  }

 private:
  void check_slices(const std::vector<double>& v, Index width, const char* what) const {
    for (Index base = 0; base < v.size(); base += width) {
      double sum = 0.0;
      for (Index i = base; i < base + width; ++i) {
        if (!(v[i] >= floor_ * (1.0 - 1e-9))) {
          throw std::invalid_argument(std::string("TabularFamily: ") + what +
                                      " entry below the positivity floor");
        }
        sum += v[i];
      }
      if (std::abs(sum - 1.0) > 1e-10) {
        throw std::invalid_argument(std::string("TabularFamily: ") + what +
                                    " slice does not sum to one");
      }
    }
  }

  void normalize_slices(std::vector<double>& v, Index width) const {
    for (Index base = 0; base < v.size(); base += width) {
      std::span<double> slice(v.data() + base, width);
      auto p = project_weights_to_floored_simplex(slice, floor_);
      if (p.empty()) {
        std::fill(slice.begin(), slice.end(), 1.0 / static_cast<double>(width));
      } else {
        std::copy(p.begin(), p.end(), slice.begin());
      }
    }
  }

  Spaces spaces_;
  double zeta_;
  double floor_;
};

/// Four states, two actions, two options; three scalars each in a box.
///
/// States 0..3 are the grid cells from left to right. Option 0 is LEFTEND and
/// option 1 is RIGHTEND; action 0 is LEFT and action 1 is RIGHT.
///   pi_hi(LEFTEND | s) = hi      for s in {0, 1}, 1 - hi otherwise
///   pi_lo(LEFT | s, LEFTEND) = pi_lo(RIGHT | s, RIGHTEND) = lo
///   pi_b(1 | s, LEFTEND) = b if s == 0, 1 - b otherwise (mirrored for RIGHTEND)
class TargetSeekingFamily {
 public:
  static constexpr Index kLeftEnd = 0;
  static constexpr Index kRightEnd = 1;
  static constexpr Index kLeft = 0;
  static constexpr Index kRight = 1;
  static constexpr Index kStates = 4;

  explicit TargetSeekingFamily(double zeta, double lower = 0.1, double upper = 0.9)
      : zeta_(zeta), lower_(lower), upper_(upper) {
    detail::check_zeta(zeta);
    if (!(lower > 0.0 && lower <= upper && upper < 1.0)) {
      throw std::invalid_argument("TargetSeekingFamily: box must satisfy 0 < lower <= upper < 1");
    }
  }

  static Theta make_theta(double hi, double lo, double b) { return {{hi}, {lo}, {b}}; }

  Spaces spaces() const { return {kStates, 2, 2}; }
  double zeta() const { return zeta_; }
  double lower() const { return lower_; }
  double upper() const { return upper_; }

  double clamp(double x) const { return std::clamp(x, lower_, upper_); }

  /// States whose high-level policy favors LEFTEND.
  static bool in_left_half(Index s) { return s < 2; }

  /// End state at which option o terminates with probability b.
  static Index target_of(Index o) { return o == kLeftEnd ? 0 : kStates - 1; }

  double pi_hi(const Theta& th, Index o, Index s) const {
    detail::check_index(o, 2, "option");
    detail::check_index(s, kStates, "state");
    const double p_left = in_left_half(s) ? th.hi[0] : 1.0 - th.hi[0];
    return o == kLeftEnd ? p_left : 1.0 - p_left;
  }

  double pi_lo(const Theta& th, Index a, Index s, Index o) const {
    detail::check_index(a, 2, "action");
    detail::check_index(s, kStates, "state");
    detail::check_index(o, 2, "option");
    return a == o ? th.lo[0] : 1.0 - th.lo[0];
  }

  double pi_b(const Theta& th, Index b, Index s, Index o_prev) const {
    detail::check_index(b, 2, "termination");
    detail::check_index(s, kStates, "state");
    detail::check_index(o_prev, 2, "option");
    const double p_term = s == target_of(o_prev) ? th.b[0] : 1.0 - th.b[0];
    return b == 1 ? p_term : 1.0 - p_term;
  }

  void validate(const Theta& th) const {
    if (th.hi.size() != 1 || th.lo.size() != 1 || th.b.size() != 1) {
      throw std::invalid_argument("TargetSeekingFamily: each block must hold one scalar");
    }
    for (double v : {th.hi[0], th.lo[0], th.b[0]}) {
      if (!(v >= lower_ && v <= upper_)) {
        throw std::invalid_argument("TargetSeekingFamily: parameter outside its box");
      }
    }
  }

 private:
  double zeta_;
  double lower_;
  double upper_;
};

/// What the smoothing, sampling and EM templates need from a family.
template <class F>
concept OptionPolicyFamily = requires(const F& f, const Theta& th, Index i) {
  { f.spaces() } -> std::convertible_to<Spaces>;
  { f.zeta() } -> std::convertible_to<double>;
  { f.pi_hi(th, i, i) } -> std::convertible_to<double>;
  { f.pi_lo(th, i, i, i) } -> std::convertible_to<double>;
  { f.pi_b(th, i, i, i) } -> std::convertible_to<double>;
  f.validate(th);
};

// ---------------------------------------------------------------------------
// Checked evaluation
// ---------------------------------------------------------------------------

template <OptionPolicyFamily F>
double eval_pi_hi(const F& family, const Theta& theta, Index o, Index s) {
  family.validate(theta);
  return family.pi_hi(theta, o, s);
}

template <OptionPolicyFamily F>
double eval_pi_lo(const F& family, const Theta& theta, Index a, Index s, Index o) {
  family.validate(theta);
  return family.pi_lo(theta, a, s, o);
}

template <OptionPolicyFamily F>
double eval_pi_b(const F& family, const Theta& theta, Index b, Index s, Index o_prev) {
  family.validate(theta);
  return family.pi_b(theta, b, s, o_prev);
}

/// Failure-augmented kernel: pi_hi when the previous option terminated,
/// otherwise keep o_prev with prob. 1 - zeta and resample uniformly with
/// prob. zeta.
template <OptionPolicyFamily F>
double bar_pi_hi(const F& family, const Theta& theta, Index o, Index s, Index o_prev,
                 Index b) {
  const Index n_options = family.spaces().n_options;
  detail::check_index(o, n_options, "option");
  detail::check_index(o_prev, n_options, "option");
  detail::check_index(b, 2, "termination");
  if (b == 1) return family.pi_hi(theta, o, s);
  const double z = family.zeta();
  const double resample = z / static_cast<double>(n_options);
  return o == o_prev ? 1.0 - z + resample : resample;
}

template <OptionPolicyFamily F>
double eval_bar_pi_hi(const F& family, const Theta& theta, Index o, Index s, Index o_prev,
                      Index b) {
  family.validate(theta);
  detail::check_index(s, family.spaces().n_states, "state");
  return bar_pi_hi(family, theta, o, s, o_prev, b);
}

/// h(o_prev, s, a, o, b) = pi_b(b | s, o_prev) * bar_pi_hi(o | s, o_prev, b) * pi_lo(a | s, o).
template <OptionPolicyFamily F>
double joint_factor_h(const F& family, const Theta& theta, Index o_prev, Index s, Index a,
                      Index o, Index b) {
  family.validate(theta);
  return family.pi_b(theta, b, s, o_prev) * bar_pi_hi(family, theta, o, s, o_prev, b) *
         family.pi_lo(theta, a, s, o);
}

/// h tabulated for every (s, a), laid out as [s][a][o_prev][o][b]. Built once
/// per parameter so the recursions never touch the family in inner loops.
class StepFactors {
 public:
  template <OptionPolicyFamily F>
  StepFactors(const F& family, const Theta& theta) : spaces_(family.spaces()) {
    family.validate(theta);
    const Index O = spaces_.n_options;
    values_.resize(spaces_.n_states * spaces_.n_actions * O * O * 2);
    for (Index s = 0; s < spaces_.n_states; ++s) {
      for (Index a = 0; a < spaces_.n_actions; ++a) {
        double* blk = values_.data() + (s * spaces_.n_actions + a) * O * O * 2;
        for (Index op = 0; op < O; ++op) {
          for (Index b = 0; b < 2; ++b) {
            const double pb = family.pi_b(theta, b, s, op);
            for (Index o = 0; o < O; ++o) {
              blk[(op * O + o) * 2 + b] =
                  pb * bar_pi_hi(family, theta, o, s, op, b) * family.pi_lo(theta, a, s, o);
            }
          }
        }
      }
    }
  }

  const Spaces& spaces() const { return spaces_; }

  /// Block for one observed (s, a), indexed [(o_prev * O + o) * 2 + b].
  std::span<const double> block(Index s, Index a) const {
    const Index O = spaces_.n_options;
    detail::check_index(s, spaces_.n_states, "state");
    detail::check_index(a, spaces_.n_actions, "action");
    return {values_.data() + (s * spaces_.n_actions + a) * O * O * 2, O * O * 2};
  }

 private:
  Spaces spaces_;
  std::vector<double> values_;
};

}  // namespace hil
