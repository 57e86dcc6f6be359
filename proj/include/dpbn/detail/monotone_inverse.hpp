#pragma once

#include <cmath>
#include <limits>
#include <utility>

namespace dpbn::detail {

struct InverseResult {
  double x = 0.0;
  double residual = std::numeric_limits<double>::infinity();  // |f(x) - y|
  bool bracketed = false;
};

/// Solves f(x) = y for a strictly increasing f.
///
/// `eval(x)` returns {f(x), f'(x)}. A bracket is grown geometrically from 0
/// (step doubling, in the direction of y), narrowed by bisection and then
/// finished with bracket-safeguarded Newton-Raphson until the step reaches
/// machine precision. The best iterate seen is returned, so callers decide
/// whether its residual is acceptable.
template <class Eval>
InverseResult invert_increasing(Eval&& eval, double y, double limit = 1e9) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  InverseResult best;

  auto consider = [&](double x, double fx) {
    const double r = std::abs(fx - y);
    if (r < best.residual) {
      best.residual = r;
      best.x = x;
    }
  };

  auto [f0, d0] = eval(0.0);
  consider(0.0, f0);
  if (f0 == y) {
    best.bracketed = true;
    return best;
  }

  double lo = 0.0, hi = 0.0;
  if (f0 < y) {
    double step = 1.0;
    for (;;) {
      hi = step;
      auto [fh, dh] = eval(hi);
      consider(hi, fh);
      if (fh >= y) break;
      lo = hi;
      step *= 2.0;
      if (step > limit) return best;
    }
  } else {
    double step = 1.0;
    for (;;) {
      lo = -step;
      auto [fl, dl] = eval(lo);
      consider(lo, fl);
      if (fl <= y) break;
      hi = lo;
      step *= 2.0;
      if (step > limit) return best;
    }
  }
  best.bracketed = true;

  // Coarse bisection; Newton takes over once the bracket is narrow.
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (hi - lo <= 1e-3 * (1.0 + std::abs(mid))) break;
    auto [fm, dm] = eval(mid);
    consider(mid, fm);
    if (fm == y) return best;
    (fm < y ? lo : hi) = mid;
  }

  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 100; ++it) {
    auto [fx, dfx] = eval(x);
    consider(x, fx);
    const double r = fx - y;
    if (r == 0.0) break;
    (r < 0.0 ? lo : hi) = x;
    double next = x - r / dfx;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 2.0 * eps * std::max(1.0, std::abs(x))) {
      auto [fn, dn] = eval(next);
      consider(next, fn);
      break;
    }
    if (hi - lo <= 2.0 * eps * std::max(1.0, std::abs(x))) break;
    x = next;
  }
  return best;
}

}  // namespace dpbn::detail
