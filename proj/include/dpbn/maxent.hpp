#pragma once

// Maximum-entropy activation functions for the three canonical data ranges.
//
//   kind         range     prior                 lambda(a)
//   Linear       R         standard Gaussian     a
//   TruncGauss   [0,inf)   half Gaussian         a + N(a)/Phi(a)
//   TruncExpon   [0,1]     uniform               e^a/(e^a-1) - 1/a
//
// lambda(a) is the mean of the prior after exponential tilting by e^{a x};
// it is the conditional-mean nonlinearity used when backing up a layer.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include "dpbn/detail/monotone_inverse.hpp"
#include "dpbn/error.hpp"

namespace dpbn {

enum class MaxEntKind : unsigned char { Linear = 0, TruncGauss = 1, TruncExpon = 2 };

inline std::string_view to_string(MaxEntKind kind) {
  switch (kind) {
    case MaxEntKind::Linear: return "linear";
    case MaxEntKind::TruncGauss: return "truncgauss";
    case MaxEntKind::TruncExpon: return "truncexpon";
  }
  return "unknown";
}

inline std::optional<MaxEntKind> parse_maxent_kind(std::string_view name) {
  if (name == "linear") return MaxEntKind::Linear;
  if (name == "truncgauss") return MaxEntKind::TruncGauss;
  if (name == "truncexpon") return MaxEntKind::TruncExpon;
  return std::nullopt;
}

/// True when y lies in the open output range of lambda for `kind`.
inline bool in_open_range(MaxEntKind kind, double y) {
  switch (kind) {
    case MaxEntKind::Linear: return std::isfinite(y);
    case MaxEntKind::TruncGauss: return y > 0.0 && std::isfinite(y);
    case MaxEntKind::TruncExpon: return y > 0.0 && y < 1.0;
  }
  return false;
}

inline double gauss_pdf(double x) {
  return std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
}

/// Standard normal CDF via erfc, which keeps relative accuracy deep in the
/// lower tail.
inline double gauss_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

namespace detail {

// c_n = B_{2n} / (2n)!, so that e^a/(e^a-1) - 1/a = 1/2 + sum_n c_n a^{2n-1}.
inline constexpr std::array<double, 11> kTedSeries = {
    8.3333333333333333333e-2,  -1.3888888888888888889e-3, 3.3068783068783068783e-5,
    -8.2671957671957671958e-7, 2.0876756987868098979e-8,  -5.2841901386874931848e-10,
    1.3382536530684678833e-11, -3.3896802963225828668e-13, 8.5860620562778445641e-15,
    -2.174868698558061873e-16, 5.5090028283602295152e-18};

// Below this |a| the 3-term Taylor expansion is exact to double precision.
inline constexpr double kTedTaylorCut = 1e-4;
// Below this |a| the closed form loses digits to cancellation.
inline constexpr double kTedSeriesCut = 1.0;
// Below this a the TG activation is evaluated by continued fraction; the
// direct a + N/Phi already loses ~5 digits to cancellation at a = -8.
inline constexpr double kTgTailCut = -2.0;

struct ValueSlope {
  double value;
  double slope;
};

inline ValueSlope ted(double a) {
  const double aa = std::abs(a);
  if (aa < kTedTaylorCut) {
    const double a2 = a * a;
    return {0.5 + a / 12.0 - a * a2 / 720.0, 1.0 / 12.0 - a2 / 240.0};
  }
  if (aa < kTedSeriesCut) {
    const double a2 = a * a;
    double v = 0.0, d = 0.0;
    for (std::size_t n = kTedSeries.size(); n-- > 0;) {
      const double k = 2.0 * static_cast<double>(n) + 1.0;  // exponent of a
      v = v * a2 + kTedSeries[n];
      d = d * a2 + kTedSeries[n] * k;
    }
    return {0.5 + a * v, d};
  }
  const double value = -1.0 / std::expm1(-a) - 1.0 / a;
  const double s = std::sinh(0.5 * a);
  const double slope = 1.0 / (a * a) - 1.0 / (4.0 * s * s);
  return {value, slope};
}

// Lower tail of the TG activation, t = -a > 2. With C(t) the continued fraction
// t + 2/(t + 3/(t + 4/(...))), lambda = 1/C and d lambda/da = C'(t)/C^2.
// Free of the a + N/Phi cancellation that ruins the direct formula here.
inline ValueSlope tg_tail(double t) {
  const int depth = t >= 5.0 ? 40 : (t >= 3.0 ? 80 : 160);
  double v = t, dv = 1.0;
  for (int k = depth; k >= 1; --k) {
    const double c = static_cast<double>(k + 1);
    const double nv = t + c / v;
    dv = 1.0 - c / (v * v) * dv;
    v = nv;
  }
  return {1.0 / v, dv / (v * v)};
}

inline ValueSlope truncgauss(double a) {
  if (a < kTgTailCut) return tg_tail(-a);
  const double r = gauss_pdf(a) / gauss_cdf(a);
  const double value = a + r;
  return {value, 1.0 - r * value};
}

inline ValueSlope maxent_value_slope(MaxEntKind kind, double a) {
  switch (kind) {
    case MaxEntKind::Linear: return {a, 1.0};
    case MaxEntKind::TruncGauss: return truncgauss(a);
    case MaxEntKind::TruncExpon: return ted(a);
  }
  return {a, 1.0};
}

}  // namespace detail

inline double maxent_lambda(MaxEntKind kind, double a) {
  return detail::maxent_value_slope(kind, a).value;
}

inline double maxent_lambda_deriv(MaxEntKind kind, double a) {
  return detail::maxent_value_slope(kind, a).slope;
}

/// Inverse of lambda. Throws OutOfRange for y outside the open output range.
inline double maxent_lambda_inverse(MaxEntKind kind, double y) {
  if (!in_open_range(kind, y)) {
    throw OutOfRange("maxent_lambda_inverse: " + std::to_string(y) + " outside range of " +
                     std::string(to_string(kind)));
  }
  if (kind == MaxEntKind::Linear) return y;
  auto eval = [kind](double a) {
    const auto vs = detail::maxent_value_slope(kind, a);
    return std::pair{vs.value, vs.slope};
  };
  // lambda_TG(a) ~ -1/a and lambda_TED(a) ~ -1/a in the lower tail, so tiny
  // targets need a wide bracket.
  const auto res = detail::invert_increasing(eval, y, 1e300);
  if (!res.bracketed || res.residual > 1e-12 * std::max(1.0, std::abs(y))) {
    throw NoConvergence("maxent_lambda_inverse: no root for " + std::to_string(y));
  }
  return res.x;
}

}  // namespace dpbn
