#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "hil/oracle.hpp"
#include "hil/simulator.hpp"
#include "hil/smoothing.hpp"
#include "test_support.hpp"

namespace hil {
namespace {

using TS = TargetSeekingFamily;

// Frozen by tests/oracle/freeze_values.py (exact rational enumeration).
// Slice layout is (o, b) = (L,0), (L,1), (R,0), (R,1).
constexpr double kAlpha[2][4] = {
    {0.018867924528301886, 0.056603773584905662, 0.83647798742138368, 0.088050314465408799},
    {0.17860787915901205, 0.15145948152684222, 0.57256582976117576, 0.097366809552969988}};
constexpr double kBeta[2][4] = {
    {0.32317073170731708, 0.32317073170731708, 0.17682926829268292, 0.17682926829268292},
    {0.25, 0.25, 0.25, 0.25}};
constexpr double kGamma[2][4] = {
    {0.032455603184323334, 0.097366809552969988, 0.78730353133292508, 0.082874055929781587},
    {0.17860787915901205, 0.15145948152684222, 0.57256582976117576, 0.097366809552969988}};
constexpr double kGamma2[4] = {0.11104307001428863, 0.018779342723004695, 0.64013063890589916,
                               0.2300469483568075};
constexpr double kLogMarginal = -1.4475231654178085;

void expect_slice(std::span<const double> got, const double (&want)[4], double tol) {
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(got[i], want[i], tol) << "entry " << i;
}

TEST(GridInstance, ForwardMessagesMatchEnumeration) {
  const testing::GridInstance g;
  const auto fwd = forward_messages(g.family, g.theta, g.obs, g.mu);
  expect_slice(fwd.probs.slice(0), kAlpha[0], 1e-12);
  expect_slice(fwd.probs.slice(1), kAlpha[1], 1e-12);
}

TEST(GridInstance, BackwardMessagesMatchEnumeration) {
  const testing::GridInstance g;
  const auto bwd = backward_messages(g.family, g.theta, g.obs);
  expect_slice(bwd.probs.slice(0), kBeta[0], 1e-12);
  expect_slice(bwd.probs.slice(1), kBeta[1], 1e-15);
}

TEST(GridInstance, SmoothingMatchesEnumeration) {
  const testing::GridInstance g;
  const auto tab = smooth(g.family, g.theta, g.obs, g.mu);
  expect_slice(tab.gamma.slice(0), kGamma[0], 1e-9);
  expect_slice(tab.gamma.slice(1), kGamma[1], 1e-9);
  expect_slice(tab.gamma2.slice(1), kGamma2, 1e-9);
  EXPECT_NEAR(tab.log_marginal, kLogMarginal, 1e-9);
  EXPECT_NEAR(marginal_log_likelihood(g.family, g.theta, g.obs, g.mu), kLogMarginal, 1e-9);
  EXPECT_LE(tab.log_marginal, 0.0);
}

TEST(GridInstance, MarginalConsistency) {
  const testing::GridInstance g;
  const auto tab = smooth(g.family, g.theta, g.obs, g.mu);
  for (Index o = 0; o < 2; ++o) {
    EXPECT_NEAR(tab.gamma2.option_marginal(1, o), tab.gamma.option_marginal(0, o), 1e-12);
  }
}

TEST(BackwardBoundary, IsUniformOverOptionBitPairs) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = testing::random_instance(seed);
    const auto bwd = backward_messages(inst.family, inst.theta, inst.obs);
    const double expect = 1.0 / static_cast<double>(2 * inst.family.spaces().n_options);
    for (double v : bwd.probs.slice(inst.obs.size() - 1)) EXPECT_DOUBLE_EQ(v, expect);
  }
}

/// pi_b = 1/2, pi_hi uniform, pi_lo independent of the option.
TabularFamily symmetric_family(Theta& th) {
  TabularFamily fam({3, 2, 3}, 0.3);
  th = fam.uniform();
  for (Index s = 0; s < 3; ++s) {
    const double p = 0.2 + 0.25 * static_cast<double>(s);
    for (Index o = 0; o < 3; ++o) {
      th.lo[(s * 3 + o) * 2 + 0] = p;
      th.lo[(s * 3 + o) * 2 + 1] = 1.0 - p;
    }
  }
  return fam;
}

TEST(SymmetricPolicy, EverythingIsUniform) {
  Theta th;
  const auto fam = symmetric_family(th);
  const ObservationSequence obs{{0, 2, 1, 1, 0, 2, 2}, {1, 0, 0, 1, 1, 0, 1}};
  const auto mu = PriorMu::uniform(3);
  const auto fwd = forward_messages(fam, th, obs, mu);
  const auto bwd = backward_messages(fam, th, obs);
  const auto tab = smooth(fam, th, obs, mu);
  for (Index t = 0; t < obs.size(); ++t) {
    for (Index i = 0; i < 6; ++i) {
      EXPECT_NEAR(fwd.probs.slice(t)[i], 1.0 / 6.0, 1e-14);
      EXPECT_NEAR(bwd.probs.slice(t)[i], 1.0 / 6.0, 1e-14);
      EXPECT_NEAR(tab.gamma.slice(t)[i], 1.0 / 6.0, 1e-14);
    }
  }
  // Only the action terms survive the latent sum.
  double closed_form = 0.0;
  for (Index t = 0; t < obs.size(); ++t) closed_form += std::log(fam.pi_lo(th, obs.actions[t], obs.states[t], 0));
  EXPECT_NEAR(tab.log_marginal, closed_form, 1e-12);
}

TEST(Forward, DependsOnlyOnThePrefix) {
  const auto inst = testing::random_instance(11, 8);
  auto edited = inst.obs;
  const Index T = edited.size();
  const Index cut = T / 2;
  for (Index t = cut + 1; t < T; ++t) {
    edited.states[t] = (edited.states[t] + 1) % inst.family.spaces().n_states;
  }
  const auto a = forward_messages(inst.family, inst.theta, inst.obs, inst.mu);
  const auto b = forward_messages(inst.family, inst.theta, edited, inst.mu);
  for (Index t = 0; t <= cut; ++t) {
    for (Index i = 0; i < a.probs.slice(t).size(); ++i) {
      EXPECT_EQ(a.probs.slice(t)[i], b.probs.slice(t)[i]);
    }
  }
}

// All four quantities and the log marginal agree with enumeration.
TEST(OracleEquivalence, RandomInstances) {
  for (std::uint64_t seed = 100; seed < 130; ++seed) {
    const auto inst = testing::random_instance(seed, 6);
    const auto oracle = oracle_enumerate(inst.family, inst.theta, inst.obs, inst.mu, inst.env);
    const auto fwd = forward_messages(inst.family, inst.theta, inst.obs, inst.mu);
    const auto bwd = backward_messages(inst.family, inst.theta, inst.obs);
    const auto tab = smooth(inst.family, inst.theta, inst.obs, inst.mu);
    const Index T = inst.obs.size();
    for (Index t = 0; t < T; ++t) {
      for (Index i = 0; i < fwd.probs.slice(t).size(); ++i) {
        EXPECT_NEAR(fwd.probs.slice(t)[i], oracle.alpha.slice(t)[i], 1e-9);
        EXPECT_NEAR(bwd.probs.slice(t)[i], oracle.beta.slice(t)[i], 1e-9);
        EXPECT_NEAR(tab.gamma.slice(t)[i], oracle.smoothing.gamma.slice(t)[i], 1e-9);
        if (t >= 1) {
          EXPECT_NEAR(tab.gamma2.slice(t)[i], oracle.smoothing.gamma2.slice(t)[i], 1e-9);
        }
      }
    }
    EXPECT_NEAR(tab.log_marginal, oracle.smoothing.log_marginal, 1e-9) << "seed " << seed;
  }
}

TEST(Invariants, NormalizationAndTwoStepConsistency) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto inst = testing::random_instance(seed, 20);
    const auto tab = smooth(inst.family, inst.theta, inst.obs, inst.mu);
    const Index O = inst.family.spaces().n_options;
    for (Index t = 0; t < inst.obs.size(); ++t) {
      double s = 0.0;
      for (double v : tab.gamma.slice(t)) s += v;
      EXPECT_NEAR(s, 1.0, 1e-10);
      if (t == 0) continue;
      double s2 = 0.0;
      for (double v : tab.gamma2.slice(t)) s2 += v;
      EXPECT_NEAR(s2, 1.0, 1e-10);
      for (Index o = 0; o < O; ++o) {
        EXPECT_NEAR(tab.gamma2.option_marginal(t, o), tab.gamma.option_marginal(t - 1, o), 1e-10);
      }
    }
  }
}

// sum_{o,b} alpha_t beta_t with both messages unscaled is the same for all t.
TEST(Invariants, TimeUniformNormalizer) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = testing::random_instance(seed, 15);
    const auto fwd = forward_messages(inst.family, inst.theta, inst.obs, inst.mu);
    const auto bwd = backward_messages(inst.family, inst.theta, inst.obs);
    const Index T = inst.obs.size();
    std::vector<double> log_mass(T);
    for (Index t = 0; t < T; ++t) {
      double log_a = 0.0, log_b = 0.0;
      for (Index u = 0; u <= t; ++u) log_a += fwd.log_normalizers[u];
      for (Index u = t; u < T; ++u) log_b += bwd.log_normalizers[u];
      double inner = 0.0;
      for (Index i = 0; i < fwd.probs.slice(t).size(); ++i) {
        inner += fwd.probs.slice(t)[i] * bwd.probs.slice(t)[i];
      }
      log_mass[t] = std::log(inner) + log_a + log_b;
    }
    for (Index t = 1; t < T; ++t) EXPECT_NEAR(std::exp(log_mass[t] - log_mass[0]), 1.0, 1e-9);
    // The common value is the marginal likelihood itself.
    double lm = 0.0;
    for (double c : fwd.log_normalizers) lm += c;
    EXPECT_NEAR(log_mass[0], lm, 1e-9);
  }
}

TEST(Invariants, ScaledAgreesWithUnscaled) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = testing::random_instance(seed + 500, 20);
    const double scaled = marginal_log_likelihood(inst.family, inst.theta, inst.obs, inst.mu);
    const double direct = testing::unscaled_log_marginal(inst.family, inst.theta, inst.obs, inst.mu);
    EXPECT_NEAR(scaled, direct, 1e-10 * (1.0 + std::abs(direct)));
  }
}

TEST(LongSequences, NoUnderflowAtTenThousandSteps) {
  const TS fam(0.1);
  const auto th = TS::make_theta(0.6, 0.7, 0.8);
  const auto traj = sample_stationary(fam, th, make_grid_env(), 10000, 1000, 4);
  const auto tab = smooth(fam, th, traj.observations(), PriorMu::point_mass(2, TS::kRightEnd));
  EXPECT_TRUE(std::isfinite(tab.log_marginal));
  EXPECT_LT(tab.log_marginal, -1000.0);
}

TEST(Smooth, RejectsBadInputs) {
  const testing::GridInstance g;
  EXPECT_THROW(smooth(g.family, g.theta, g.obs.prefix(1), g.mu), std::invalid_argument);
  EXPECT_THROW(smooth(g.family, g.theta, g.obs, PriorMu{{0.5, 0.6}}), std::invalid_argument);
  ObservationSequence bad{{0, 7}, {0, 1}};
  EXPECT_THROW(smooth(g.family, g.theta, bad, g.mu), std::out_of_range);
}

TEST(Windowed, ZeroRadiusReducesToSmooth) {
  const TS fam(0.1);
  const auto th = TS::make_theta(0.6, 0.7, 0.8);
  const auto traj = sample_stationary(fam, th, make_grid_env(), 400, 500, 12);
  const auto obs = traj.observations();
  const auto mu = PriorMu{{0.3, 0.7}};
  const auto win = windowed_smooth(fam, th, obs, 100, 160, 0, mu);
  const auto ref = smooth(fam, th, obs.slice(100, 160), mu);
  for (Index t = 0; t < 60; ++t) {
    for (Index i = 0; i < 4; ++i) {
      EXPECT_EQ(win.gamma.slice(100 + t)[i], ref.gamma.slice(t)[i]);
      if (t >= 1) {
        EXPECT_EQ(win.gamma2.slice(100 + t)[i], ref.gamma2.slice(t)[i]);
      }
    }
  }
  EXPECT_EQ(win.gamma2.t0(), 101u);
  EXPECT_DOUBLE_EQ(win.log_marginal, ref.log_marginal);
}

TEST(Windowed, HeadPriorIsForgotten) {
  const TS fam(0.1);
  const auto th = TS::make_theta(0.6, 0.7, 0.8);
  const auto traj = sample_stationary(fam, th, make_grid_env(), 3000, kDefaultBurnIn, 31);
  const auto obs = traj.observations();
  const Index center = 1500;
  for (Index k : {Index{1000}, Index{1400}}) {
    const auto a = windowed_smooth(fam, th, obs, center, center + 1, k, PriorMu::point_mass(2, 0));
    const auto b = windowed_smooth(fam, th, obs, center, center + 1, k, PriorMu::point_mass(2, 1));
    for (Index i = 0; i < 4; ++i) EXPECT_NEAR(a.gamma.slice(center)[i], b.gamma.slice(center)[i], 1e-8);
    EXPECT_EQ(a.gamma2.t0(), center);
  }
}

TEST(Windowed, RejectsWindowsPastTheData) {
  const testing::GridInstance g;
  const ObservationSequence obs{{0, 1, 2, 3, 3}, {1, 1, 1, 0, 0}};
  EXPECT_THROW(windowed_smooth(g.family, g.theta, obs, 1, 3, 2), std::out_of_range);
  EXPECT_THROW(windowed_smooth(g.family, g.theta, obs, 2, 4, 2), std::out_of_range);
  EXPECT_NO_THROW(windowed_smooth(g.family, g.theta, obs, 2, 3, 2));
}

TEST(SmoothingCsv, Schema) {
  const testing::GridInstance g;
  std::ostringstream out;
  write_csv(out, smooth(g.family, g.theta, g.obs, g.mu));
  const auto text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "t,o,b,gamma,gamma2");
  // Two steps x two options x two bits, plus the header.
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 9);
  // gamma2 is undefined at the first step.
  EXPECT_NE(text.find("1,0,0,0.0324556031843,\n"), std::string::npos);
}

}  // namespace
}  // namespace hil
