#pragma once

// Trainable compound activations:
//
//   f(x) = sum_k e^{a_k} f_k(e^{w_k} x + b_k) / sum_k e^{a_k}
//
// Component 0 is the base MaxEnt activation and fixes the output range;
// components 1..K-1 are truncated-exponential sigmoids with range (0,1).
// Positive weights and scales make f strictly increasing for any parameters.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dpbn/detail/monotone_inverse.hpp"
#include "dpbn/error.hpp"
#include "dpbn/maxent.hpp"

namespace dpbn {

/// Component weight given to the sigmoid components by the neutral init.
inline constexpr double kNeutralLogWeight = -6.0;
/// Half-width of the bias spread given to sigmoid components at init.
inline constexpr double kNeutralBiasSpread = 2.0;
/// Inversion gives up once the bracket passes this magnitude.
inline constexpr double kTcaBracketLimit = 1e9;

/// Non-owning view of one activation's parameters.
struct TcaRef {
  MaxEntKind base = MaxEntKind::Linear;
  std::span<const double> a;  // log-weights
  std::span<const double> w;  // log-scales
  std::span<const double> b;  // biases

  std::size_t components() const { return a.size(); }
  MaxEntKind component_kind(std::size_t k) const { return k == 0 ? base : MaxEntKind::TruncExpon; }
};

/// A single compound activation owning its parameters.
struct Tca {
  MaxEntKind base = MaxEntKind::Linear;
  std::vector<double> a, w, b;

  std::size_t components() const { return a.size(); }
  TcaRef ref() const { return {base, a, w, b}; }
};

struct TcaParamGrads {
  std::vector<double> da, dw, db;
  double dx = 0.0;
};

namespace detail {

/// Normalized mixture weights pi_k = e^{a_k} / sum e^{a}, overflow safe.
inline void mixture_weights(std::span<const double> a, std::span<double> pi) {
  const double amax = *std::max_element(a.begin(), a.end());
  double total = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    pi[k] = std::exp(a[k] - amax);
    total += pi[k];
  }
  for (auto& p : pi) p /= total;
}

inline constexpr std::size_t kMaxComponents = 16;

inline ValueSlope tca_value_slope(const TcaRef& t, double x) {
  std::array<double, kMaxComponents> pi{};
  const std::size_t K = t.components();
  mixture_weights(t.a, std::span(pi.data(), K));
  double f = 0.0, df = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double scale = std::exp(t.w[k]);
    const auto vs = maxent_value_slope(t.component_kind(k), scale * x + t.b[k]);
    f += pi[k] * vs.value;
    df += pi[k] * scale * vs.slope;
  }
  return {f, df};
}

inline InverseResult tca_invert_raw(const TcaRef& t, double y) {
  auto eval = [&t](double x) {
    const auto vs = tca_value_slope(t, x);
    return std::pair{vs.value, vs.slope};
  };
  return invert_increasing(eval, y, kTcaBracketLimit);
}

inline void check_tca(const TcaRef& t) {
  const std::size_t K = t.components();
  if (K < 1 || K > kMaxComponents || t.w.size() != K || t.b.size() != K) {
    throw ShapeMismatch("tca: parameter vectors must share a length in [1, 16]");
  }
}

}  // namespace detail

inline double tca_eval(const TcaRef& t, double x) { return detail::tca_value_slope(t, x).value; }
inline double tca_eval(const Tca& t, double x) { return tca_eval(t.ref(), x); }

inline double tca_deriv(const TcaRef& t, double x) { return detail::tca_value_slope(t, x).slope; }
inline double tca_deriv(const Tca& t, double x) { return tca_deriv(t.ref(), x); }

/// Inverse of the activation. Throws OutOfRange when y is outside the base
/// range and NoConvergence when no bracket exists within |x| <= 1e9.
inline double tca_invert(const TcaRef& t, double y) {
  if (!in_open_range(t.base, y)) {
    throw OutOfRange("tca_invert: " + std::to_string(y) + " outside range of " +
                     std::string(to_string(t.base)));
  }
  const auto res = detail::tca_invert_raw(t, y);
  if (!res.bracketed || res.residual > 1e-12 * std::max(1.0, std::abs(y))) {
    throw NoConvergence("tca_invert: no preimage of " + std::to_string(y) + " within |x| <= 1e9");
  }
  return res.x;
}
inline double tca_invert(const Tca& t, double y) { return tca_invert(t.ref(), y); }

/// Partials of f(x) with respect to each a_k, w_k, b_k, written into the
/// output spans; returns df/dx.
inline double tca_param_grads(const TcaRef& t, double x, std::span<double> da,
                              std::span<double> dw, std::span<double> db) {
  std::array<double, detail::kMaxComponents> pi{}, value{};
  const std::size_t K = t.components();
  detail::mixture_weights(t.a, std::span(pi.data(), K));
  double f = 0.0, dx = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double scale = std::exp(t.w[k]);
    const auto vs = detail::maxent_value_slope(t.component_kind(k), scale * x + t.b[k]);
    value[k] = vs.value;
    f += pi[k] * vs.value;
    const double slope = pi[k] * vs.slope;
    db[k] = slope;
    dw[k] = slope * scale * x;
    dx += slope * scale;
  }
  for (std::size_t k = 0; k < K; ++k) da[k] = pi[k] * (value[k] - f);
  return dx;
}

inline TcaParamGrads tca_param_grads(const Tca& t, double x) {
  TcaParamGrads g;
  const std::size_t K = t.components();
  g.da.resize(K);
  g.dw.resize(K);
  g.db.resize(K);
  g.dx = tca_param_grads(t.ref(), x, g.da, g.dw, g.db);
  return g;
}

/// Activation that behaves like its base: sigmoid components carry weight
/// e^-6 relative to the base and biases spread evenly over [-2, 2].
inline Tca tca_neutral_init(MaxEntKind base, std::size_t K) {
  if (K < 1 || K > detail::kMaxComponents) throw ShapeMismatch("tca_neutral_init: K must be in [1, 16]");
  Tca t{base, std::vector<double>(K, kNeutralLogWeight), std::vector<double>(K, 0.0),
        std::vector<double>(K, 0.0)};
  t.a[0] = 0.0;
  for (std::size_t k = 1; k < K; ++k) {
    t.b[k] = K == 2 ? 0.0
                    : -kNeutralBiasSpread +
                          2.0 * kNeutralBiasSpread * static_cast<double>(k - 1) / static_cast<double>(K - 2);
  }
  return t;
}

/// One activation per coordinate of a layer boundary (or a single shared one).
/// Parameters are stored as rows of K values.
class TcaBank {
 public:
  using Params = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  TcaBank() = default;

  TcaBank(MaxEntKind base, Eigen::Index size, Eigen::Index components, bool shared = false)
      : base_(base), size_(size), shared_(shared) {
    if (components < 1 || components > static_cast<Eigen::Index>(detail::kMaxComponents)) {
      throw ShapeMismatch("TcaBank: components must be in [1, 16]");
    }
    const Eigen::Index rows = shared ? 1 : size;
    a_ = Params::Zero(rows, components);
    w_ = Params::Zero(rows, components);
    b_ = Params::Zero(rows, components);
  }

  /// Neutral bank; sigmoid biases are drawn from U[-2, 2] per row.
  template <class Rng>
  static TcaBank neutral(MaxEntKind base, Eigen::Index size, Eigen::Index components, bool shared,
                         Rng& rng) {
    TcaBank bank(base, size, components, shared);
    std::uniform_real_distribution<double> spread(-kNeutralBiasSpread, kNeutralBiasSpread);
    for (Eigen::Index r = 0; r < bank.rows(); ++r) {
      for (Eigen::Index k = 1; k < components; ++k) {
        bank.a_(r, k) = kNeutralLogWeight;
        bank.b_(r, k) = spread(rng);
      }
    }
    return bank;
  }

  MaxEntKind base() const { return base_; }
  Eigen::Index size() const { return size_; }
  Eigen::Index components() const { return a_.cols(); }
  bool shared() const { return shared_; }
  /// Number of parameter rows (1 when shared).
  Eigen::Index rows() const { return a_.rows(); }
  Eigen::Index row_of(Eigen::Index i) const { return shared_ ? 0 : i; }

  TcaRef at(Eigen::Index i) const {
    const Eigen::Index r = row_of(i);
    const auto K = static_cast<std::size_t>(components());
    return {base_, std::span<const double>(a_.row(r).data(), K), std::span<const double>(w_.row(r).data(), K),
            std::span<const double>(b_.row(r).data(), K)};
  }

  Tca tca(Eigen::Index i) const {
    const TcaRef r = at(i);
    return {base_, {r.a.begin(), r.a.end()}, {r.w.begin(), r.w.end()}, {r.b.begin(), r.b.end()}};
  }

  void set(Eigen::Index row, const Tca& t) {
    for (Eigen::Index k = 0; k < components(); ++k) {
      a_(row, k) = t.a[k];
      w_(row, k) = t.w[k];
      b_(row, k) = t.b[k];
    }
  }

  Params& a() { return a_; }
  Params& w() { return w_; }
  Params& b() { return b_; }
  const Params& a() const { return a_; }
  const Params& w() const { return w_; }
  const Params& b() const { return b_; }

  Eigen::Index parameter_count() const { return 3 * a_.size(); }

  Eigen::VectorXd eval(const Eigen::VectorXd& x) const {
    check_size(x.size());
    Eigen::VectorXd y(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) y[i] = tca_eval(at(i), x[i]);
    return y;
  }

  Eigen::VectorXd deriv(const Eigen::VectorXd& x) const {
    check_size(x.size());
    Eigen::VectorXd d(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) d[i] = tca_deriv(at(i), x[i]);
    return d;
  }

  void check_size(Eigen::Index n) const {
    if (n != size_) {
      throw ShapeMismatch("TcaBank: expected " + std::to_string(size_) + " inputs, got " + std::to_string(n));
    }
  }

 private:
  MaxEntKind base_ = MaxEntKind::Linear;
  Eigen::Index size_ = 0;
  bool shared_ = false;
  Params a_, w_, b_;
};

}  // namespace dpbn
