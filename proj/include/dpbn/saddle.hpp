#pragma once

// Saddle-point back-projection of one dimension-reducing layer.
//
// Given z = W' x for some x in the range of `kind`, the conditional mean of x
// under the MaxEnt prior restricted to {x : W' x = z} is lambda(W h), where h
// solves W' lambda(W h) = z. The left-hand side is the gradient of the convex
// function sum_i log Z(w_i' h), so a damped Newton iteration with Jacobian
// W' diag(lambda'(W h)) W converges whenever a solution exists.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dpbn/error.hpp"
#include "dpbn/maxent.hpp"
#include "dpbn/types.hpp"

namespace dpbn {

struct SolverOptions {
  double tol = 1e-10;    // relative to 1 + |z|_inf
  int max_iter = 100;
  int damping = 20;      // step halvings allowed per iteration
  double ridge = 1e-12;  // added to the Jacobian diagonal
};

enum class SaddleStatus { Converged, NotConverged, RankDeficient };

struct SaddleResult {
  Vector h;
  Vector x_hat;           // lambda(W h) at the returned h
  double residual = std::numeric_limits<double>::infinity();  // |W' x_hat - z|_inf
  int iterations = 0;
  bool converged = false;
  SaddleStatus status = SaddleStatus::NotConverged;
  /// Factorization of W' D W + ridge I at the returned h; reused by implicit
  /// differentiation. Empty when the Jacobian could not be factored.
  std::optional<Eigen::LLT<Matrix>> factor;
  /// lambda'(W h) at the returned h.
  Vector slope;
  /// Euclidean residual norm of every accepted iterate, starting point first.
  std::vector<double> residual_history;
};

inline void check_options(const SolverOptions& opts) {
  if (!(opts.tol > 0.0) || opts.max_iter < 1 || opts.damping < 0 || opts.ridge < 0.0) {
    throw DomainError("SolverOptions: need tol > 0, max_iter >= 1, damping >= 0, ridge >= 0");
  }
}

inline Vector conditional_mean(const Matrix& W, const Vector& h, MaxEntKind kind) {
  if (W.cols() != h.size()) throw ShapeMismatch("conditional_mean: W and h disagree");
  Vector a = W * h;
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = maxent_lambda(kind, a[i]);
  return a;
}

inline Matrix saddle_jacobian(const Matrix& W, const Vector& h, MaxEntKind kind) {
  if (W.cols() != h.size()) throw ShapeMismatch("saddle_jacobian: W and h disagree");
  const Vector a = W * h;
  Vector d(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) d[i] = maxent_lambda_deriv(kind, a[i]);
  Matrix J = Matrix::Zero(W.cols(), W.cols());
  J.selfadjointView<Eigen::Lower>().rankUpdate((d.cwiseSqrt().asDiagonal() * W).transpose());
  return J.selfadjointView<Eigen::Lower>();
}

/// Saddle-point solver bound to one weight matrix and MaxEnt kind. For the
/// Linear kind the Jacobian is constant and is factored once.
class SaddleSolver {
 public:
  SaddleSolver(const Matrix& W, MaxEntKind kind, SolverOptions opts = {})
      : W_(W), kind_(kind), opts_(opts) {
    check_options(opts_);
    if (W_.rows() < W_.cols()) throw ShapeMismatch("solve_saddle: W must have N >= M");
    const Eigen::Index M = W_.cols();
    gram_ = Matrix::Zero(M, M);
    gram_.selfadjointView<Eigen::Lower>().rankUpdate(W_.transpose());
    gram_ = gram_.selfadjointView<Eigen::Lower>();
    column_sums_ = W_.colwise().sum().transpose();

    const double slope0 = maxent_lambda_deriv(kind_, 0.0);
    init_factor_.compute(slope0 * gram_ + opts_.ridge * Matrix::Identity(M, M));
  }

  const Matrix& weights() const { return W_; }
  MaxEntKind kind() const { return kind_; }
  const SolverOptions& options() const { return opts_; }

  SaddleResult solve(const Vector& z) const {
    const Eigen::Index N = W_.rows(), M = W_.cols();
    if (z.size() != M) {
      throw ShapeMismatch("solve_saddle: z has " + std::to_string(z.size()) + " entries, W has " +
                          std::to_string(M) + " columns");
    }
    SaddleResult res;
    if (init_factor_.info() != Eigen::Success) {
      res.status = SaddleStatus::RankDeficient;
      res.h = Vector::Zero(M);
      finish(res, z);
      return res;
    }

    // Linearization of lambda at 0.
    const double value0 = maxent_lambda(kind_, 0.0);
    Vector h = init_factor_.solve(z - value0 * column_sums_);
    const double tol = opts_.tol * (1.0 + z.lpNorm<Eigen::Infinity>());

    Vector a(N), x_hat(N), slope(N), r(M);
    auto evaluate = [&](const Vector& hh, Vector& aa, Vector& xx, Vector& rr) {
      aa.noalias() = W_ * hh;
      for (Eigen::Index i = 0; i < N; ++i) xx[i] = maxent_lambda(kind_, aa[i]);
      rr = W_.transpose() * xx;
      rr -= z;
    };
    evaluate(h, a, x_hat, r);
    double norm = r.norm();
    res.residual_history.push_back(norm);

    Vector a_try(N), x_try(N), r_try(M), h_try(M), step(M);
    Eigen::LLT<Matrix> llt(M);
    res.status = SaddleStatus::NotConverged;
    int it = 0;
    for (;; ++it) {
      if (r.lpNorm<Eigen::Infinity>() <= tol) {
        res.status = SaddleStatus::Converged;
        break;
      }
      if (it >= opts_.max_iter) break;
      if (!factor_jacobian(a, slope, llt)) {
        res.status = SaddleStatus::RankDeficient;
        break;
      }
      step = -llt.solve(r);
      double s = 1.0;
      bool accepted = false;
      for (int k = 0; k <= opts_.damping; ++k, s *= 0.5) {
        h_try = h + s * step;
        evaluate(h_try, a_try, x_try, r_try);
        const double n_try = r_try.norm();
        if (n_try < norm) {
          h.swap(h_try);
          a.swap(a_try);
          x_hat.swap(x_try);
          r.swap(r_try);
          norm = n_try;
          res.residual_history.push_back(norm);
          accepted = true;
          break;
        }
      }
      if (!accepted) break;  // stagnated
    }
    res.iterations = it;
    res.h = std::move(h);
    finish(res, z);
    return res;
  }

 private:
  bool factor_jacobian(const Vector& a, Vector& slope, Eigen::LLT<Matrix>& llt) const {
    const Eigen::Index M = W_.cols();
    for (Eigen::Index i = 0; i < a.size(); ++i) slope[i] = maxent_lambda_deriv(kind_, a[i]);
    if (kind_ == MaxEntKind::Linear) {
      llt = init_factor_;
      return llt.info() == Eigen::Success;
    }
    Matrix J = Matrix::Zero(M, M);
    J.selfadjointView<Eigen::Lower>().rankUpdate((slope.cwiseSqrt().asDiagonal() * W_).transpose());
    J.diagonal().array() += opts_.ridge;
    llt.compute(J);
    return llt.info() == Eigen::Success && std::isfinite(llt.matrixLLT().diagonal().sum());
  }

  // Recomputes x_hat, residual and the Jacobian factor at res.h.
  void finish(SaddleResult& res, const Vector& z) const {
    const Eigen::Index N = W_.rows();
    Vector a = W_ * res.h;
    res.x_hat.resize(N);
    res.slope.resize(N);
    for (Eigen::Index i = 0; i < N; ++i) {
      const auto vs = detail::maxent_value_slope(kind_, a[i]);
      res.x_hat[i] = vs.value;
      res.slope[i] = vs.slope;
    }
    Vector r = W_.transpose() * res.x_hat;
    r -= z;
    res.residual = r.lpNorm<Eigen::Infinity>();
    if (!std::isfinite(res.residual)) res.status = SaddleStatus::NotConverged;
    res.converged = res.status == SaddleStatus::Converged;

    Eigen::LLT<Matrix> llt(W_.cols());
    Vector slope(N);
    if (factor_jacobian(a, slope, llt)) {
      res.factor = std::move(llt);
    } else {
      res.factor.reset();
      if (res.converged) {
        res.converged = false;
        res.status = SaddleStatus::RankDeficient;
      }
    }
  }

  Matrix W_;
  MaxEntKind kind_;
  SolverOptions opts_;
  Matrix gram_;
  Vector column_sums_;
  Eigen::LLT<Matrix> init_factor_;
};

/// Solves W' lambda(W h) = z. Failure to converge is reported through
/// `status` / `converged`, never thrown.
inline SaddleResult solve_saddle(const Matrix& W, const Vector& z, MaxEntKind kind,
                                 const SolverOptions& opts = {}) {
  return SaddleSolver(W, kind, opts).solve(z);
}

}  // namespace dpbn
