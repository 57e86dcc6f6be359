#pragma once

// Conventional feed-forward auto-encoder (AEC) with TG activations.
//
//   encoder  h_{l+1} = lambda_TG(W_l' h_l + b_l),      h_0 = x
//   decoder  g_l     = act_l(V_l g_{l+1} + c_l),       g_L = h_L, x_hat = g_0
//
// act_l is lambda_TG except for the output layer (l = 0), which is linear.
// Untied decoders own V_l; tied decoders use V_l = s_l W_l with one
// trainable scale per layer.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dpbn/error.hpp"
#include "dpbn/maxent.hpp"
#include "dpbn/parallel.hpp"
#include "dpbn/trainer.hpp"
#include "dpbn/types.hpp"

namespace dpbn {

struct AecNetwork {
  std::vector<Matrix> W;  // encoder, W[l] is d_l x d_{l+1}
  std::vector<Vector> b;  // encoder biases, size d_{l+1}
  std::vector<Matrix> V;  // untied decoder weights, V[l] is d_l x d_{l+1}; empty when tied
  std::vector<double> s;  // tied decoder scales; empty when untied
  std::vector<Vector> c;  // decoder biases, size d_l
  bool tied = false;

  std::size_t depth() const { return W.size(); }
  Eigen::Index input_dim() const { return W.front().rows(); }
  Eigen::Index code_dim() const { return W.back().cols(); }

  Matrix decoder_weight(std::size_t l) const { return tied ? Matrix(s[l] * W[l]) : V[l]; }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < depth(); ++l) {
      n += W[l].size() + b[l].size() + c[l].size();
      n += tied ? 1 : V[l].size();
    }
    return n;
  }

  void validate() const {
    const std::size_t L = depth();
    if (L == 0) throw ShapeMismatch("AecNetwork: no layers");
    if (b.size() != L || c.size() != L || (tied ? s.size() != L : V.size() != L)) {
      throw ShapeMismatch("AecNetwork: parameter lists disagree in length");
    }
    for (std::size_t l = 0; l < L; ++l) {
      const std::string where = "AecNetwork layer " + std::to_string(l) + ": ";
      if (l + 1 < L && W[l].cols() != W[l + 1].rows()) throw ShapeMismatch(where + "dims do not chain");
      if (b[l].size() != W[l].cols() || c[l].size() != W[l].rows()) throw ShapeMismatch(where + "bias size");
      if (!tied && (V[l].rows() != W[l].rows() || V[l].cols() != W[l].cols())) {
        throw ShapeMismatch(where + "decoder weight shape");
      }
    }
  }
};

/// Encoder weights as in make_network (orthonormalized Gaussian columns),
/// zero biases; untied decoders start from a copy of the encoder weights and
/// tied scales start at 1.
inline AecNetwork make_aec(const std::vector<Eigen::Index>& dims, bool tied, std::uint64_t seed) {
  if (dims.size() < 2) throw ShapeMismatch("make_aec: need at least two dims");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  AecNetwork net;
  net.tied = tied;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Eigen::Index N = dims[l], M = dims[l + 1];
    if (M < 1 || M > N) throw ShapeMismatch("make_aec: dims must not increase");
    Matrix G(N, M);
    for (Eigen::Index j = 0; j < M; ++j)
      for (Eigen::Index i = 0; i < N; ++i) G(i, j) = normal(rng) / std::sqrt(static_cast<double>(N));
    Eigen::HouseholderQR<Matrix> qr(G);
    Matrix Q = qr.householderQ() * Matrix::Identity(N, M);
    for (Eigen::Index j = 0; j < M; ++j)
      if (qr.matrixQR()(j, j) < 0) Q.col(j) *= -1.0;
    net.W.push_back(Q);
    net.b.push_back(Vector::Zero(M));
    net.c.push_back(Vector::Zero(N));
    if (tied) {
      net.s.push_back(1.0);
    } else {
      net.V.push_back(std::move(Q));
    }
  }
  return net;
}

struct AecCache {
  std::vector<Vector> enc;      // h_0 .. h_L
  std::vector<Vector> enc_pre;  // pre-activations of h_1 .. h_L
  std::vector<Vector> dec;      // g_0 .. g_L (g_L = h_L)
  std::vector<Vector> dec_pre;  // pre-activations of g_0 .. g_{L-1}
};

struct AecForward {
  Vector x_hat;
  AecCache cache;
};

inline Vector apply_tg(const Vector& a) {
  Vector out(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out[i] = maxent_lambda(MaxEntKind::TruncGauss, a[i]);
  return out;
}

inline Vector apply_tg_deriv(const Vector& a) {
  Vector out(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out[i] = maxent_lambda_deriv(MaxEntKind::TruncGauss, a[i]);
  return out;
}

inline AecForward aec_forward(const AecNetwork& net, const Vector& x) {
  if (x.size() != net.input_dim()) throw ShapeMismatch("aec_forward: input has " + std::to_string(x.size()) + " entries");
  const std::size_t L = net.depth();
  AecForward out;
  auto& C = out.cache;
  C.enc.push_back(x);
  for (std::size_t l = 0; l < L; ++l) {
    Vector pre = net.W[l].transpose() * C.enc.back() + net.b[l];
    C.enc.push_back(apply_tg(pre));
    C.enc_pre.push_back(std::move(pre));
  }
  C.dec.resize(L + 1);
  C.dec_pre.resize(L);
  C.dec[L] = C.enc[L];
  for (std::size_t l = L; l-- > 0;) {
    Vector pre = net.decoder_weight(l) * C.dec[l + 1] + net.c[l];
    C.dec[l] = l == 0 ? pre : apply_tg(pre);
    C.dec_pre[l] = std::move(pre);
  }
  out.x_hat = C.dec[0];
  return out;
}

/// Gradients laid out like aec flat parameters.
struct AecGradients {
  std::vector<Matrix> dW, dV;
  std::vector<Vector> db, dc;
  std::vector<double> ds;

  static AecGradients zeros_like(const AecNetwork& net) {
    AecGradients g;
    for (std::size_t l = 0; l < net.depth(); ++l) {
      g.dW.push_back(Matrix::Zero(net.W[l].rows(), net.W[l].cols()));
      g.db.push_back(Vector::Zero(net.b[l].size()));
      g.dc.push_back(Vector::Zero(net.c[l].size()));
      if (net.tied) {
        g.ds.push_back(0.0);
      } else {
        g.dV.push_back(Matrix::Zero(net.V[l].rows(), net.V[l].cols()));
      }
    }
    return g;
  }

  AecGradients& operator+=(const AecGradients& o) {
    for (std::size_t l = 0; l < dW.size(); ++l) {
      dW[l] += o.dW[l];
      db[l] += o.db[l];
      dc[l] += o.dc[l];
      if (!dV.empty()) dV[l] += o.dV[l];
      if (!ds.empty()) ds[l] += o.ds[l];
    }
    return *this;
  }
};

/// Adds the gradient of scale * |x_hat - x|^2 for one sample.
inline void aec_accumulate(const AecNetwork& net, const AecForward& fw, const Vector& x, double scale,
                           AecGradients& G) {
  const std::size_t L = net.depth();
  const auto& C = fw.cache;
  // Decoder, output side first.
  Vector g_pre = 2.0 * scale * (fw.x_hat - x);
  Vector g_out;
  for (std::size_t l = 0; l < L; ++l) {
    if (l > 0) g_pre = g_out.cwiseProduct(apply_tg_deriv(C.dec_pre[l]));
    G.dc[l] += g_pre;
    const Vector& in = C.dec[l + 1];
    if (net.tied) {
      // V = s W: dL/dW += s g in', dL/ds += g' W in.
      G.dW[l].noalias() += net.s[l] * g_pre * in.transpose();
      G.ds[l] += g_pre.dot(net.W[l] * in);
      g_out = net.s[l] * (net.W[l].transpose() * g_pre);
    } else {
      G.dV[l].noalias() += g_pre * in.transpose();
      g_out = net.V[l].transpose() * g_pre;
    }
  }
  // g_out is now the cotangent on h_L; walk the encoder backwards.
  for (std::size_t l = L; l-- > 0;) {
    const Vector g = g_out.cwiseProduct(apply_tg_deriv(C.enc_pre[l]));
    G.db[l] += g;
    G.dW[l].noalias() += C.enc[l] * g.transpose();
    if (l > 0) g_out = net.W[l] * g;
  }
}

// Flat order per layer: W row-major, b, then V row-major (untied) or s
// (tied), then c.

inline std::vector<double> aec_flatten(const AecNetwork& net) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(net.parameter_count()));
  auto put_matrix = [&](const Matrix& M) {
    for (Eigen::Index i = 0; i < M.rows(); ++i)
      for (Eigen::Index j = 0; j < M.cols(); ++j) out.push_back(M(i, j));
  };
  for (std::size_t l = 0; l < net.depth(); ++l) {
    put_matrix(net.W[l]);
    out.insert(out.end(), net.b[l].data(), net.b[l].data() + net.b[l].size());
    if (net.tied) {
      out.push_back(net.s[l]);
    } else {
      put_matrix(net.V[l]);
    }
    out.insert(out.end(), net.c[l].data(), net.c[l].data() + net.c[l].size());
  }
  return out;
}

inline void aec_unflatten(AecNetwork& net, std::span<const double> flat) {
  if (static_cast<Eigen::Index>(flat.size()) != net.parameter_count()) {
    throw ShapeMismatch("aec_unflatten: expected " + std::to_string(net.parameter_count()) + " values");
  }
  std::size_t k = 0;
  auto get_matrix = [&](Matrix& M) {
    for (Eigen::Index i = 0; i < M.rows(); ++i)
      for (Eigen::Index j = 0; j < M.cols(); ++j) M(i, j) = flat[k++];
  };
  auto get_vector = [&](Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = flat[k++];
  };
  for (std::size_t l = 0; l < net.depth(); ++l) {
    get_matrix(net.W[l]);
    get_vector(net.b[l]);
    if (net.tied) {
      net.s[l] = flat[k++];
    } else {
      get_matrix(net.V[l]);
    }
    get_vector(net.c[l]);
  }
}

inline std::vector<double> aec_flatten(const AecGradients& g) {
  std::vector<double> out;
  auto put_matrix = [&](const Matrix& M) {
    for (Eigen::Index i = 0; i < M.rows(); ++i)
      for (Eigen::Index j = 0; j < M.cols(); ++j) out.push_back(M(i, j));
  };
  for (std::size_t l = 0; l < g.dW.size(); ++l) {
    put_matrix(g.dW[l]);
    out.insert(out.end(), g.db[l].data(), g.db[l].data() + g.db[l].size());
    if (!g.ds.empty()) {
      out.push_back(g.ds[l]);
    } else {
      put_matrix(g.dV[l]);
    }
    out.insert(out.end(), g.dc[l].data(), g.dc[l].data() + g.dc[l].size());
  }
  return out;
}

/// 1 for weight-matrix entries, 0 for biases and tied scales.
inline std::vector<double> aec_weight_mask(const AecNetwork& net) {
  std::vector<double> mask;
  auto add = [&](Eigen::Index n, double v) { mask.insert(mask.end(), static_cast<std::size_t>(n), v); };
  for (std::size_t l = 0; l < net.depth(); ++l) {
    add(net.W[l].size(), 1.0);
    add(net.b[l].size(), 0.0);
    if (net.tied) {
      add(1, 0.0);
    } else {
      add(net.V[l].size(), 1.0);
    }
    add(net.c[l].size(), 0.0);
  }
  return mask;
}

inline Batch aec_reconstruct(const AecNetwork& net, const Batch& X) {
  if (X.cols() != net.input_dim()) throw ShapeMismatch("aec_reconstruct: batch width differs from input dim");
  Batch out(X.rows(), X.cols());
  parallel_chunks(static_cast<std::size_t>(X.rows()), 8, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      const auto i = static_cast<Eigen::Index>(s);
      out.row(i) = aec_forward(net, X.row(i).transpose()).x_hat.transpose();
    }
  });
  return out;
}

/// Batch gradient of the reconstruction MSE, reduced in fixed chunk order.
inline AecGradients aec_gradients(const AecNetwork& net, const Batch& X, double* loss = nullptr) {
  if (X.cols() != net.input_dim()) throw ShapeMismatch("aec_gradients: batch width differs from input dim");
  const auto S = static_cast<std::size_t>(X.rows());
  constexpr std::size_t kChunk = 8;
  std::vector<AecGradients> partial((S + kChunk - 1) / kChunk);
  std::vector<double> sse(partial.size(), 0.0);
  const double n = static_cast<double>(S) * static_cast<double>(X.cols());
  const double scale = S == 0 ? 0.0 : 1.0 / n;
  parallel_chunks(S, kChunk, [&](std::size_t c, std::size_t begin, std::size_t end) {
    partial[c] = AecGradients::zeros_like(net);
    for (std::size_t s = begin; s < end; ++s) {
      const Vector x = X.row(static_cast<Eigen::Index>(s)).transpose();
      const AecForward fw = aec_forward(net, x);
      aec_accumulate(net, fw, x, scale, partial[c]);
      sse[c] += (fw.x_hat - x).squaredNorm();
    }
  });
  AecGradients g = AecGradients::zeros_like(net);
  double total = 0.0;
  for (std::size_t c = 0; c < partial.size(); ++c) {
    g += partial[c];
    total += sse[c];
  }
  if (loss) *loss = S == 0 ? 0.0 : total / n;
  return g;
}

/// Largest relative error between aec_gradients and central differences of
/// the MSE, using the same metric as finite_diff_check.
inline double aec_finite_diff_check(const AecNetwork& net, const Batch& X, double eps) {
  const std::vector<double> analytic = aec_flatten(aec_gradients(net, X));
  double scale = 0.0;
  for (double g : analytic) scale = std::max(scale, std::abs(g));
  const double floor = std::max(kGradCheckFloor * scale, std::numeric_limits<double>::min());
  AecNetwork probe = net;
  std::vector<double> theta = aec_flatten(net);
  double worst = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double saved = theta[k];
    theta[k] = saved + eps;
    aec_unflatten(probe, theta);
    const double up = (aec_reconstruct(probe, X) - X).squaredNorm();
    theta[k] = saved - eps;
    aec_unflatten(probe, theta);
    const double down = (aec_reconstruct(probe, X) - X).squaredNorm();
    theta[k] = saved;
    const double numeric = (up - down) / (2.0 * eps * static_cast<double>(X.size()));
    const double rel = std::abs(analytic[k] - numeric) / std::max({std::abs(analytic[k]), std::abs(numeric), floor});
    worst = std::isfinite(rel) ? std::max(worst, rel) : std::numeric_limits<double>::infinity();
  }
  return worst;
}

inline Evaluation aec_evaluate(const AecNetwork& net, const Batch& X) {
  Evaluation e;
  e.samples = static_cast<std::size_t>(X.rows());
  if (X.rows() == 0) return e;
  const Batch R = aec_reconstruct(net, X);
  e.mse = (R - X).squaredNorm() / static_cast<double>(X.size());
  e.efficiency = 1.0;
  return e;
}

/// Adapter plugging an AecNetwork into train_loop.
class AecTrainable {
 public:
  explicit AecTrainable(AecNetwork& net) : net_(net) {}

  std::vector<double> parameters() const { return aec_flatten(net_); }
  void set_parameters(std::span<const double> p) { aec_unflatten(net_, p); }
  std::vector<double> learning_rate_scale(const TrainConfig&) const {
    return std::vector<double>(static_cast<std::size_t>(net_.parameter_count()), 1.0);
  }
  std::vector<double> decay_mask() const { return aec_weight_mask(net_); }

  BatchGradient gradient(const Batch& X, const TrainConfig&) const {
    BatchGradient out;
    out.grad = aec_flatten(aec_gradients(net_, X, &out.loss));
    out.used = static_cast<std::size_t>(X.rows());
    return out;
  }

  Evaluation evaluate(const Batch& X) const { return aec_evaluate(net_, X); }

 private:
  AecNetwork& net_;
};

inline TrainingLog aec_train(AecNetwork& net, const Batch& train, const Batch& test, const TrainConfig& cfg,
                             const Augmenter& augment = {}, const EpochCallback& on_epoch = {}) {
  net.validate();
  AecTrainable model(net);
  return train_loop(model, train, test, cfg, augment, on_epoch);
}

}  // namespace dpbn
