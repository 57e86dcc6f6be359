#pragma once

// Reconstruction-MSE gradients for the D-PBN auto-encoder.
//
// The backward pass differentiates through each saddle solve implicitly. With
// u_hat = lambda(W h), W' u_hat = t, D = diag(lambda'(W h)) and J = W' D W, a
// cotangent v on u_hat pulls back to
//   q    = J^{-1} W' D v          (cotangent on the target t)
//   dL/dW += D (v - W q) h' - u_hat q'
// and each TCA inversion x = f^{-1}(u) contributes dx/du = 1/f'(x) and
// dx/dtheta = -(df/dtheta)(x) / f'(x).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dpbn/error.hpp"
#include "dpbn/network.hpp"
#include "dpbn/parallel.hpp"
#include "dpbn/trainer.hpp"
#include "dpbn/types.hpp"

namespace dpbn {

/// Gradients shaped like the network's parameters.
struct GradientSet {
  std::vector<Matrix> dW;
  std::vector<TcaBank::Params> da, dw, db;

  static GradientSet zeros_like(const DpbnNetwork& net) {
    GradientSet g;
    for (const auto& layer : net.layers) {
      g.dW.push_back(Matrix::Zero(layer.W.rows(), layer.W.cols()));
      const auto& t = layer.input_tca;
      g.da.push_back(TcaBank::Params::Zero(t.rows(), t.components()));
      g.dw.push_back(TcaBank::Params::Zero(t.rows(), t.components()));
      g.db.push_back(TcaBank::Params::Zero(t.rows(), t.components()));
    }
    return g;
  }

  GradientSet& operator+=(const GradientSet& o) {
    for (std::size_t l = 0; l < dW.size(); ++l) {
      dW[l] += o.dW[l];
      da[l] += o.da[l];
      dw[l] += o.dw[l];
      db[l] += o.db[l];
    }
    return *this;
  }

  GradientSet& operator*=(double s) {
    for (std::size_t l = 0; l < dW.size(); ++l) {
      dW[l] *= s;
      da[l] *= s;
      dw[l] *= s;
      db[l] *= s;
    }
    return *this;
  }
};

// Flat parameter order, shared with the model file: per layer, W row-major,
// then the TCA a, w and b matrices row-major.

inline std::vector<double> flatten_parameters(const DpbnNetwork& net) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(net.parameter_count()));
  for (const auto& layer : net.layers) {
    for (Eigen::Index i = 0; i < layer.W.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.W.cols(); ++j) out.push_back(layer.W(i, j));
    for (const auto* p : {&layer.input_tca.a(), &layer.input_tca.w(), &layer.input_tca.b()})
      out.insert(out.end(), p->data(), p->data() + p->size());
  }
  return out;
}

inline void unflatten_parameters(DpbnNetwork& net, std::span<const double> flat) {
  if (static_cast<Eigen::Index>(flat.size()) != net.parameter_count()) {
    throw ShapeMismatch("unflatten_parameters: expected " + std::to_string(net.parameter_count()) + " values");
  }
  std::size_t k = 0;
  for (auto& layer : net.layers) {
    for (Eigen::Index i = 0; i < layer.W.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.W.cols(); ++j) layer.W(i, j) = flat[k++];
    for (auto* p : {&layer.input_tca.a(), &layer.input_tca.w(), &layer.input_tca.b()}) {
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(k), p->size(), p->data());
      k += static_cast<std::size_t>(p->size());
    }
  }
}

inline std::vector<double> flatten_gradients(const GradientSet& g) {
  std::vector<double> out;
  for (std::size_t l = 0; l < g.dW.size(); ++l) {
    for (Eigen::Index i = 0; i < g.dW[l].rows(); ++i)
      for (Eigen::Index j = 0; j < g.dW[l].cols(); ++j) out.push_back(g.dW[l](i, j));
    for (const auto* p : {&g.da[l], &g.dw[l], &g.db[l]}) out.insert(out.end(), p->data(), p->data() + p->size());
  }
  return out;
}

/// 1 for entries of weight matrices, 0 for TCA parameters.
inline std::vector<double> weight_mask(const DpbnNetwork& net) {
  std::vector<double> mask;
  for (const auto& layer : net.layers) {
    mask.insert(mask.end(), static_cast<std::size_t>(layer.W.size()), 1.0);
    mask.insert(mask.end(), static_cast<std::size_t>(layer.input_tca.parameter_count()), 0.0);
  }
  return mask;
}

/// Mean over all samples and coordinates of (x_hat - x)^2.
inline double mse_loss(const Batch& x_hat, const Batch& x) {
  if (x_hat.rows() != x.rows() || x_hat.cols() != x.cols()) throw ShapeMismatch("mse_loss: shapes differ");
  if (x.size() == 0) return 0.0;
  return (x_hat - x).squaredNorm() / static_cast<double>(x.size());
}

namespace detail {

// Accumulates -cot * df/dtheta(at) (sign = -1) or +cot * df/dtheta(at) into the
// TCA gradient rows and returns df/dx for each coordinate.
inline void tca_param_pullback(const TcaBank& bank, const Vector& at, const Vector& cot, double sign,
                               TcaBank::Params& da, TcaBank::Params& dw, TcaBank::Params& db) {
  const auto K = static_cast<std::size_t>(bank.components());
  std::array<double, kMaxComponents> ga{}, gw{}, gb{};
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    if (cot[i] == 0.0) continue;
    tca_param_grads(bank.at(i), at[i], std::span(ga.data(), K), std::span(gw.data(), K), std::span(gb.data(), K));
    const Eigen::Index r = bank.row_of(i);
    const double c = sign * cot[i];
    for (std::size_t k = 0; k < K; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      da(r, kk) += c * ga[k];
      dw(r, kk) += c * gw[k];
      db(r, kk) += c * gb[k];
    }
  }
}

}  // namespace detail

/// Adds the gradient of sum_i (x_hat_i - x_i)^2 * scale for one sample.
/// Returns false (adding nothing) when a layer has no Jacobian factor.
inline bool accumulate_sample_gradient(const DpbnNetwork& net, const EncodeResult& enc, const DecodeResult& dec,
                                       const Vector& x, double scale, GradientSet& G) {
  const std::size_t L = net.layers.size();
  for (std::size_t l = 0; l < L; ++l)
    if (!dec.trace.saddle[l].factor) return false;

  // Cotangent on the output of layer l's TCA inversion.
  Vector g_v = 2.0 * scale * (dec.x_hat - x);
  Vector g_y;
  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = net.layers[l];
    const auto& sr = dec.trace.saddle[l];
    const Vector& v = dec.trace.inverted[l];

    // Inversion v = f^{-1}(u_hat).
    const Vector fprime = layer.input_tca.deriv(v);
    const Vector g_u = g_v.cwiseQuotient(fprime);
    detail::tca_param_pullback(layer.input_tca, v, g_u, -1.0, G.da[l], G.dw[l], G.db[l]);

    // Saddle node u_hat = lambda(W h) with W' u_hat = t.
    const Vector Dv = sr.slope.cwiseProduct(g_u);
    const Vector q = sr.factor->solve(layer.W.transpose() * Dv);
    const Vector p = g_u - layer.W * q;
    G.dW[l].noalias() += sr.slope.cwiseProduct(p) * sr.h.transpose();
    G.dW[l].noalias() -= sr.x_hat * q.transpose();

    if (l + 1 < L) {
      g_v = q;
    } else {
      g_y = q;
    }
  }

  // Encoder path: in_{l+1} = W_l' u_l, u_l = TCA_l(in_l).
  Vector g_z = std::move(g_y);
  for (std::size_t l = L; l-- > 0;) {
    const auto& layer = net.layers[l];
    const Vector& u = enc.trace.tca_out[l];
    const Vector& in = enc.trace.tca_in[l];
    G.dW[l].noalias() += u * g_z.transpose();
    const Vector g_u = layer.W * g_z;
    detail::tca_param_pullback(layer.input_tca, in, g_u, 1.0, G.da[l], G.dw[l], G.db[l]);
    if (l > 0) g_z = g_u.cwiseProduct(layer.input_tca.deriv(in));
  }
  return true;
}

struct GradientResult {
  GradientSet grads;
  double loss = 0.0;        // MSE over the samples used
  double efficiency = 0.0;  // fraction of samples whose decode succeeded
  std::size_t used = 0;
  std::size_t failed = 0;
};

/// Batch gradient of the reconstruction MSE (plus weight decay on W).
/// Samples are processed in fixed chunks and reduced in chunk order, so the
/// result does not depend on the number of worker threads.
inline GradientResult backward_gradients(const DpbnNetwork& net, const Batch& X, const TrainConfig& cfg,
                                         const SolverOptions& opts = {}) {
  if (X.cols() != net.input_dim()) throw ShapeMismatch("backward_gradients: batch width differs from input dim");
  const Decoder decoder(net, opts);
  const auto S = static_cast<std::size_t>(X.rows());
  constexpr std::size_t kChunk = 8;
  const std::size_t chunks = (S + kChunk - 1) / kChunk;
  struct Partial {
    GradientSet g;
    double sse = 0.0;
    std::size_t used = 0, succeeded = 0;
  };
  std::vector<Partial> partial(chunks);
  parallel_chunks(S, kChunk, [&](std::size_t c, std::size_t begin, std::size_t end) {
    Partial& P = partial[c];
    P.g = GradientSet::zeros_like(net);
    for (std::size_t s = begin; s < end; ++s) {
      const Vector x = X.row(static_cast<Eigen::Index>(s)).transpose();
      const EncodeResult enc = encode(net, x);
      const DecodeResult dec = decoder.decode(enc.y);
      if (dec.success) ++P.succeeded;
      if (!dec.success && cfg.failure_policy == FailurePolicy::Skip) continue;
      if (!dec.x_hat.allFinite()) continue;
      if (!accumulate_sample_gradient(net, enc, dec, x, 1.0, P.g)) continue;
      P.sse += (dec.x_hat - x).squaredNorm();
      ++P.used;
    }
  });

  GradientResult out;
  out.grads = GradientSet::zeros_like(net);
  double sse = 0.0;
  std::size_t succeeded = 0;
  for (const auto& P : partial) {
    out.grads += P.g;
    sse += P.sse;
    out.used += P.used;
    succeeded += P.succeeded;
  }
  out.failed = S - out.used;
  out.efficiency = S == 0 ? 0.0 : static_cast<double>(succeeded) / static_cast<double>(S);
  if (out.used > 0) {
    const double n = static_cast<double>(out.used) * static_cast<double>(X.cols());
    out.grads *= 1.0 / n;
    out.loss = sse / n;
  }
  if (cfg.weight_decay > 0.0) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) out.grads.dW[l] += cfg.weight_decay * net.layers[l].W;
  }
  return out;
}

/// MSE of the reconstructions of all rows, whether or not their decode
/// succeeded.
inline double reconstruction_loss(const DpbnNetwork& net, const Batch& X, const SolverOptions& opts = {}) {
  const auto rec = autoencode_batch(net, X, opts);
  return mse_loss(rec.x_hat, X);
}

struct FiniteDiffReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t parameters = 0;
  std::size_t samples = 0;  // rows whose decode succeeded and were checked
};

/// Compares backward_gradients against central differences of the MSE for
/// every parameter, over the rows of X whose decode succeeds. `corrupt`
/// perturbs one analytic entry (negative control for the checker).
inline FiniteDiffReport finite_diff_check(const DpbnNetwork& net, const Batch& X, double eps,
                                          const SolverOptions& opts = {}, bool corrupt = false) {
  const auto rec = autoencode_batch(net, X, opts);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    if (rec.success[static_cast<std::size_t>(i)]) keep.push_back(i);
  Batch Xs(static_cast<Eigen::Index>(keep.size()), X.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) Xs.row(static_cast<Eigen::Index>(i)) = X.row(keep[i]);

  FiniteDiffReport rep;
  rep.samples = keep.size();
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  cfg.failure_policy = FailurePolicy::BestIterate;
  std::vector<double> analytic = flatten_gradients(backward_gradients(net, Xs, cfg, opts).grads);
  double scale = 0.0;
  for (double g : analytic) scale = std::max(scale, std::abs(g));
  const double floor = std::max(kGradCheckFloor * scale, std::numeric_limits<double>::min());
  if (corrupt && !analytic.empty()) {
    const std::size_t mid = analytic.size() / 2;
    analytic[mid] = 2.0 * analytic[mid] + 1e-2 * std::max(scale, 1.0);
  }

  DpbnNetwork probe = net;
  std::vector<double> theta = flatten_parameters(net);
  rep.parameters = theta.size();
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double saved = theta[k];
    theta[k] = saved + eps;
    unflatten_parameters(probe, theta);
    const double up = reconstruction_loss(probe, Xs, opts);
    theta[k] = saved - eps;
    unflatten_parameters(probe, theta);
    const double down = reconstruction_loss(probe, Xs, opts);
    theta[k] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), floor});
    const double rel = std::abs(analytic[k] - numeric) / denom;
    if (rel > rep.max_rel_err || !std::isfinite(rel)) {
      rep.max_rel_err = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
      rep.worst_index = k;
      rep.worst_analytic = analytic[k];
      rep.worst_numeric = numeric;
    }
  }
  return rep;
}

/// MSE over the rows whose decode succeeds, with the fraction that did.
inline Evaluation evaluate_reconstruction(const DpbnNetwork& net, const Batch& X, const SolverOptions& opts = {}) {
  Evaluation e;
  e.samples = static_cast<std::size_t>(X.rows());
  if (X.rows() == 0) return e;
  const auto rec = autoencode_batch(net, X, opts);
  double sse = 0.0;
  std::size_t good = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (!rec.success[static_cast<std::size_t>(i)]) continue;
    sse += (rec.x_hat.row(i) - X.row(i)).squaredNorm();
    ++good;
  }
  e.efficiency = rec.efficiency;
  if (good > 0) e.mse = sse / (static_cast<double>(good) * static_cast<double>(X.cols()));
  return e;
}

/// Adapter plugging a DpbnNetwork into train_loop.
class DpbnTrainable {
 public:
  DpbnTrainable(DpbnNetwork& net, SolverOptions opts) : net_(net), opts_(opts) {}

  std::vector<double> parameters() const { return flatten_parameters(net_); }
  void set_parameters(std::span<const double> p) { unflatten_parameters(net_, p); }

  std::vector<double> learning_rate_scale(const TrainConfig& cfg) const {
    auto mask = weight_mask(net_);
    for (auto& m : mask) m = m > 0.0 ? 1.0 : cfg.tca_lr_multiplier;
    return mask;
  }
  std::vector<double> decay_mask() const { return weight_mask(net_); }

  BatchGradient gradient(const Batch& X, const TrainConfig& cfg) const {
    TrainConfig no_decay = cfg;
    no_decay.weight_decay = 0.0;  // applied by the optimizer
    const auto r = backward_gradients(net_, X, no_decay, opts_);
    return {flatten_gradients(r.grads), r.loss, r.used, r.failed};
  }

  Evaluation evaluate(const Batch& X) const { return evaluate_reconstruction(net_, X, opts_); }

 private:
  DpbnNetwork& net_;
  SolverOptions opts_;
};

/// Trains all weights and TCA parameters of `net` against reconstruction MSE.
inline TrainingLog fit(DpbnNetwork& net, const Batch& train, const Batch& test, const TrainConfig& cfg,
                       const SolverOptions& opts = {}, const Augmenter& augment = {},
                       const EpochCallback& on_epoch = {}) {
  DpbnTrainable model(net, opts);
  return train_loop(model, train, test, cfg, augment, on_epoch);
}

}  // namespace dpbn
