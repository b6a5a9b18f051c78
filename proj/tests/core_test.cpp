#include <gtest/gtest.h>

#include <cmath>

#include "hil/core.hpp"
#include "test_support.hpp"

namespace hil {
namespace {

using TS = TargetSeekingFamily;

TEST(TargetSeeking, HighLevelPolicy) {
  const TS fam(0.1);
  const auto th = TS::make_theta(0.6, 0.7, 0.8);
  EXPECT_DOUBLE_EQ(eval_pi_hi(fam, th, TS::kLeftEnd, 0), 0.6);
  EXPECT_DOUBLE_EQ(eval_pi_hi(fam, th, TS::kLeftEnd, 1), 0.6);
  EXPECT_DOUBLE_EQ(eval_pi_hi(fam, th, TS::kLeftEnd, 2), 0.4);
  EXPECT_DOUBLE_EQ(eval_pi_hi(fam, th, TS::kRightEnd, 3), 0.6);
}

TEST(TargetSeeking, LowLevelPolicy) {
  const TS fam(0.1);
  const auto th = TS::make_theta(0.6, 0.7, 0.8);
  for (Index s = 0; s < 4; ++s) {
    EXPECT_DOUBLE_EQ(eval_pi_lo(fam, th, TS::kLeft, s, TS::kLeftEnd), 0.7);
    EXPECT_NEAR(eval_pi_lo(fam, th, TS::kRight, s, TS::kLeftEnd), 0.3, 1e-15);
    EXPECT_DOUBLE_EQ(eval_pi_lo(fam, th, TS::kRight, s, TS::kRightEnd), 0.7);
  }
}

TEST(TargetSeeking, TerminationPolicy) {
  const TS fam(0.1);
  const auto th = TS::make_theta(0.6, 0.7, 0.8);
  EXPECT_DOUBLE_EQ(eval_pi_b(fam, th, 1, 0, TS::kLeftEnd), 0.8);
  EXPECT_NEAR(eval_pi_b(fam, th, 1, 1, TS::kLeftEnd), 0.2, 1e-15);
  EXPECT_DOUBLE_EQ(eval_pi_b(fam, th, 1, 3, TS::kRightEnd), 0.8);
  EXPECT_NEAR(eval_pi_b(fam, th, 1, 0, TS::kRightEnd), 0.2, 1e-15);
}

TEST(TargetSeeking, RejectsInfeasibleAndOutOfRange) {
  const TS fam(0.1);
  EXPECT_THROW(eval_pi_hi(fam, TS::make_theta(0.95, 0.7, 0.8), 0, 0), std::invalid_argument);
  EXPECT_THROW(eval_pi_hi(fam, TS::make_theta(0.6, 0.7, 0.8), 2, 0), std::out_of_range);
  EXPECT_THROW(eval_pi_lo(fam, TS::make_theta(0.6, 0.7, 0.8), 0, 4, 0), std::out_of_range);
  EXPECT_THROW(TS(0.0), std::invalid_argument);
  EXPECT_THROW(TS(1.0), std::invalid_argument);
}

TEST(BarPiHi, FailureMechanism) {
  const TS fam(0.1);
  const auto th = TS::make_theta(0.6, 0.7, 0.8);
  EXPECT_NEAR(eval_bar_pi_hi(fam, th, 1, 2, 1, 0), 0.95, 1e-15);
  EXPECT_NEAR(eval_bar_pi_hi(fam, th, 0, 2, 1, 0), 0.05, 1e-15);
  for (Index s = 0; s < 4; ++s) {
    for (Index op = 0; op < 2; ++op) {
      for (Index o = 0; o < 2; ++o) {
        EXPECT_EQ(eval_bar_pi_hi(fam, th, o, s, op, 1), eval_pi_hi(fam, th, o, s));
      }
    }
  }
}

TEST(JointFactor, GridExample) {
  const TS fam(0.1);
  const auto th = TS::make_theta(0.6, 0.7, 0.8);
  // o_prev = RIGHTEND, s = 1 (first cell), a = LEFT, o = LEFTEND, b = 1.
  // The first cell is not RIGHTEND's target, so pi_b(1) = 1 - 0.8.
  const double h = joint_factor_h(fam, th, TS::kRightEnd, 0, TS::kLeft, TS::kLeftEnd, 1);
  EXPECT_NEAR(h, 0.2 * 0.6 * 0.7, 1e-15);
  // From the LEFTEND option at its own target the termination probability is 0.8.
  EXPECT_NEAR(joint_factor_h(fam, th, TS::kLeftEnd, 0, TS::kLeft, TS::kLeftEnd, 1),
              0.8 * 0.6 * 0.7, 1e-15);
}

TEST(Tabular, UniformTableValues) {
  const TabularFamily fam({3, 2, 4}, 0.2);
  const auto th = fam.uniform();
  EXPECT_DOUBLE_EQ(eval_pi_hi(fam, th, 3, 2), 0.25);
  EXPECT_DOUBLE_EQ(eval_pi_lo(fam, th, 1, 0, 2), 0.5);
  EXPECT_DOUBLE_EQ(eval_pi_b(fam, th, 1, 1, 3), 0.5);
}

TEST(Tabular, ZeroEntryIsRejected) {
  const TabularFamily fam({2, 2, 2}, 0.2);
  auto th = fam.uniform();
  th.lo[0] = 0.0;
  th.lo[1] = 1.0;
  EXPECT_THROW(joint_factor_h(fam, th, 0, 0, 0, 0, 1), std::invalid_argument);
}

TEST(Tabular, NormalizeFloorsAndRenormalizes) {
  const TabularFamily fam({1, 2, 2}, 0.2);
  Theta th{{3.0, 0.0}, {1.0, 1.0, 0.0, 2.0}, {0.5, 0.5, 1.0, 3.0}};
  const auto n = fam.normalize(th);
  EXPECT_NO_THROW(fam.validate(n));
  EXPECT_DOUBLE_EQ(n.hi[1], fam.floor());
  EXPECT_NEAR(n.hi[0], 1.0 - fam.floor(), 1e-15);
  EXPECT_DOUBLE_EQ(n.b[2], 0.25);
}

TEST(FlooredSimplex, MatchesKktSolution) {
  // Weights (0, 1e-9, 1, 3): the two smallest get clamped.
  const std::vector<double> c{0.0, 1e-9, 1.0, 3.0};
  const auto p = project_weights_to_floored_simplex(c, 1e-3);
  ASSERT_EQ(p.size(), 4u);
  EXPECT_DOUBLE_EQ(p[0], 1e-3);
  EXPECT_DOUBLE_EQ(p[1], 1e-3);
  EXPECT_NEAR(p[2], (1 - 2e-3) * 0.25, 1e-15);
  EXPECT_NEAR(p[3], (1 - 2e-3) * 0.75, 1e-15);
  EXPECT_TRUE(project_weights_to_floored_simplex(std::vector<double>{0.0, 0.0}, 1e-3).empty());
}

// Every conditional pmf sums to one with positive entries; the sum of h over
// (o, b) factorizes as the direct triple evaluation says.
TEST(CoreProperties, PmfsAndFactorSums) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = testing::random_instance(seed);
    const auto& fam = inst.family;
    const auto& th = inst.theta;
    const Spaces sp = fam.spaces();
    for (Index s = 0; s < sp.n_states; ++s) {
      double hi = 0.0;
      for (Index o = 0; o < sp.n_options; ++o) hi += fam.pi_hi(th, o, s);
      EXPECT_NEAR(hi, 1.0, 1e-12);
      for (Index op = 0; op < sp.n_options; ++op) {
        EXPECT_NEAR(fam.pi_b(th, 0, s, op) + fam.pi_b(th, 1, s, op), 1.0, 1e-12);
        double lo = 0.0;
        for (Index a = 0; a < sp.n_actions; ++a) lo += fam.pi_lo(th, a, s, op);
        EXPECT_NEAR(lo, 1.0, 1e-12);
        for (Index b = 0; b < 2; ++b) {
          double bar = 0.0;
          for (Index o = 0; o < sp.n_options; ++o) {
            const double v = bar_pi_hi(fam, th, o, s, op, b);
            EXPECT_GT(v, 0.0);
            bar += v;
          }
          EXPECT_NEAR(bar, 1.0, 1e-12);
        }
        for (Index a = 0; a < sp.n_actions; ++a) {
          double summed = 0.0, direct = 0.0;
          for (Index b = 0; b < 2; ++b) {
            double inner = 0.0;
            for (Index o = 0; o < sp.n_options; ++o) {
              summed += joint_factor_h(fam, th, op, s, a, o, b);
              inner += bar_pi_hi(fam, th, o, s, op, b) * fam.pi_lo(th, a, s, o);
            }
            direct += fam.pi_b(th, b, s, op) * inner;
          }
          EXPECT_NEAR(summed, direct, 1e-14);
        }
      }
    }
  }
}

TEST(Environment, Validation) {
  Environment env{2, 1, {0.5, 0.5, 0.3, 0.6}};
  EXPECT_THROW(env.validate(), std::invalid_argument);
  env.transition = {0.5, 0.5, 0.3, 0.7};
  EXPECT_NO_THROW(env.validate());
}

}  // namespace
}  // namespace hil
