#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dpbn/tca.hpp"

using namespace dpbn;

namespace {

Tca zeros(MaxEntKind base, std::size_t K) {
  return {base, std::vector<double>(K, 0.0), std::vector<double>(K, 0.0), std::vector<double>(K, 0.0)};
}

Tca random_tca(std::mt19937_64& rng, MaxEntKind base, std::size_t K) {
  std::uniform_real_distribution<double> ua(-2, 2), uw(-1, 1), ub(-3, 3);
  Tca t = zeros(base, K);
  for (std::size_t k = 0; k < K; ++k) {
    t.a[k] = ua(rng);
    t.w[k] = uw(rng);
    t.b[k] = ub(rng);
  }
  return t;
}

MaxEntKind random_kind(std::mt19937_64& rng) {
  return static_cast<MaxEntKind>(std::uniform_int_distribution<int>(0, 2)(rng));
}

// Central difference of f with respect to one parameter slot.
double fd_param(Tca t, std::vector<double> Tca::*field, std::size_t k, double x, double h) {
  const double saved = (t.*field)[k];
  (t.*field)[k] = saved + h;
  const double up = tca_eval(t, x);
  (t.*field)[k] = saved - h;
  const double down = tca_eval(t, x);
  return (up - down) / (2 * h);
}

}  // namespace

TEST(TcaEval, Examples) {
  EXPECT_EQ(tca_eval(zeros(MaxEntKind::Linear, 1), 1.7), 1.7);
  EXPECT_DOUBLE_EQ(tca_eval(zeros(MaxEntKind::Linear, 2), 0.0), 0.25);
  const Tca neutral = tca_neutral_init(MaxEntKind::TruncGauss, 3);
  EXPECT_NEAR(tca_eval(neutral, 0.0), maxent_lambda(MaxEntKind::TruncGauss, 0.0), 5e-3);
}

TEST(TcaDeriv, Examples) {
  EXPECT_EQ(tca_deriv(zeros(MaxEntKind::Linear, 1), -3.0), 1.0);
  EXPECT_NEAR(tca_deriv(zeros(MaxEntKind::Linear, 2), 0.0), (1.0 + 1.0 / 12.0) / 2.0, 1e-15);
}

TEST(TcaDeriv, MatchesCentralDifference) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const Tca t = random_tca(rng, random_kind(rng), 1 + trial % 4);
    for (double x = -10; x <= 10; x += 0.75) {
      const double h = 1e-6;
      const double fd = (tca_eval(t, x + h) - tca_eval(t, x - h)) / (2 * h);
      const double d = tca_deriv(t, x);
      EXPECT_LE(std::abs(d - fd), 1e-6 * std::max(std::abs(d), 1e-3)) << trial << ' ' << x;
    }
  }
}

TEST(TcaInvert, Examples) {
  EXPECT_EQ(tca_invert(zeros(MaxEntKind::Linear, 1), -4.4), -4.4);
  const Tca two = zeros(MaxEntKind::Linear, 2);
  const double x = tca_invert(two, 0.25);
  EXPECT_NEAR(x, 0.0, 1e-12);
  EXPECT_NEAR(tca_eval(two, x), 0.25, 1e-15);
}

TEST(TcaInvert, Errors) {
  EXPECT_THROW(tca_invert(zeros(MaxEntKind::TruncGauss, 3), -0.1), OutOfRange);
  EXPECT_THROW(tca_invert(zeros(MaxEntKind::TruncExpon, 2), 1.5), OutOfRange);
  // lambda_TG(x) ~ -1/x, so a target of 1e-12 needs |x| ~ 1e12.
  EXPECT_THROW(tca_invert(zeros(MaxEntKind::TruncGauss, 1), 1e-12), NoConvergence);
}

TEST(TcaInvert, RoundTripBothDirections) {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> ux(-20, 20);
  for (int trial = 0; trial < 2000; ++trial) {
    const Tca t = random_tca(rng, random_kind(rng), 1 + trial % 4);
    const double x = ux(rng);
    const double y = tca_eval(t, x);
    EXPECT_NEAR(tca_invert(t, y), x, 1e-9) << trial;
    const double back = tca_eval(t, tca_invert(t, y));
    EXPECT_LE(std::abs(back - y), 1e-12 * std::max(1.0, std::abs(y)));
  }
}

TEST(TcaParamGrads, SingleComponentWeightCancels) {
  const auto g = tca_param_grads(zeros(MaxEntKind::TruncGauss, 1), 0.3);
  EXPECT_EQ(g.da[0], 0.0);
}

TEST(TcaParamGrads, SigmoidBiasAtCenter) {
  std::mt19937_64 rng(4);
  Tca t = random_tca(rng, MaxEntKind::Linear, 3);
  const double x = 0.8;
  t.b[2] = -std::exp(t.w[2]) * x;  // component 2 argument is exactly 0
  const auto g = tca_param_grads(t, x);
  double total = 0;
  for (double a : t.a) total += std::exp(a);
  EXPECT_NEAR(g.db[2], std::exp(t.a[2]) / (12.0 * total), 1e-15);
}

TEST(TcaParamGrads, MatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ux(-6, 6);
  for (int trial = 0; trial < 300; ++trial) {
    const Tca t = random_tca(rng, random_kind(rng), 1 + trial % 4);
    const double x = ux(rng);
    const auto g = tca_param_grads(t, x);
    EXPECT_NEAR(g.dx, tca_deriv(t, x), 1e-15 * std::max(1.0, std::abs(g.dx)));
    for (std::size_t k = 0; k < t.components(); ++k) {
      const std::pair<std::vector<double> Tca::*, double> slots[] = {
          {&Tca::a, g.da[k]}, {&Tca::w, g.dw[k]}, {&Tca::b, g.db[k]}};
      for (const auto& [field, analytic] : slots) {
        const double fd = fd_param(t, field, k, x, 1e-6);
        EXPECT_LE(std::abs(analytic - fd), 1e-5 * std::max(std::abs(analytic), 1e-4)) << trial << ' ' << k;
      }
    }
  }
}

TEST(TcaParamGrads, NegligibleComponentHasNegligibleWeightGradient) {
  Tca t = tca_neutral_init(MaxEntKind::TruncGauss, 3);
  t.a[2] = -60.0;
  const auto g = tca_param_grads(t, 0.4);
  EXPECT_LT(std::abs(g.da[2]), 1e-25);
  EXPECT_LT(std::abs(fd_param(t, &Tca::a, 2, 0.4, 1e-6)), 1e-12);
}

TEST(TcaNeutralInit, Examples) {
  const Tca id = tca_neutral_init(MaxEntKind::Linear, 1);
  for (double x : {-5.0, 0.0, 3.3}) EXPECT_EQ(tca_eval(id, x), x);
  const Tca tg = tca_neutral_init(MaxEntKind::TruncGauss, 3);
  EXPECT_NEAR(tca_eval(tg, 0.0), 0.7978845608, 5e-3);
  const Tca lin2 = tca_neutral_init(MaxEntKind::Linear, 2);
  for (double x = -30; x <= 30; x += 0.25) EXPECT_GT(tca_deriv(lin2, x), 0.0);
}

TEST(TcaNeutralInit, CloseToBase) {
  for (auto base : {MaxEntKind::Linear, MaxEntKind::TruncGauss, MaxEntKind::TruncExpon}) {
    for (std::size_t K = 1; K <= 3; ++K) {
      const Tca t = tca_neutral_init(base, K);
      EXPECT_EQ(t.a[0], 0.0);
      for (std::size_t k = 1; k < K; ++k) {
        EXPECT_EQ(t.a[k], -6.0);
        EXPECT_GE(t.b[k], -2.0);
        EXPECT_LE(t.b[k], 2.0);
      }
      for (double x = -30; x <= 30; x += 0.5) {
        const double f1 = maxent_lambda(base, x);
        EXPECT_LE(std::abs(tca_eval(t, x) - f1), 2 * std::exp(-6.0) * (1 + std::abs(f1)));
      }
    }
  }
}

TEST(TcaProperties, MonotoneAndRangeConfined) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const MaxEntKind base = random_kind(rng);
    const Tca t = random_tca(rng, base, 1 + trial % 4);
    double prev = -std::numeric_limits<double>::infinity();
    for (double x = -30; x <= 30; x += 0.5) {
      EXPECT_GT(tca_deriv(t, x), 0.0);
      const double f = tca_eval(t, x);
      EXPECT_GT(f, prev);
      prev = f;
      if (base == MaxEntKind::TruncGauss) {
        EXPECT_GT(f, 0.0);
      }
      if (base == MaxEntKind::TruncExpon) {
        EXPECT_GT(f, 0.0);
        EXPECT_LT(f, 1.0);
      }
    }
  }
}

TEST(TcaBank, NeutralRowsAndSharing) {
  std::mt19937_64 rng(1);
  const auto bank = TcaBank::neutral(MaxEntKind::TruncGauss, 5, 3, false, rng);
  EXPECT_EQ(bank.rows(), 5);
  EXPECT_EQ(bank.parameter_count(), 45);
  EXPECT_NE(bank.b()(0, 1), bank.b()(1, 1));

  const auto shared = TcaBank::neutral(MaxEntKind::TruncGauss, 5, 3, true, rng);
  EXPECT_EQ(shared.rows(), 1);
  EXPECT_EQ(shared.at(4).b[2], shared.at(0).b[2]);

  Eigen::VectorXd x(5);
  x << -1, 0, 1, 2, 3;
  const auto y = bank.eval(x);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(y[i], tca_eval(bank.tca(i), x[i]));
  EXPECT_THROW(bank.eval(Eigen::VectorXd::Zero(4)), ShapeMismatch);
}
