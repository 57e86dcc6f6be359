#pragma once

// Deterministic projected belief network.
//
// Forward (encode), for layers l = 0..L-1:
//   u_l = TCA_l(in_l),  in_0 = x,  in_{l+1} = W_l' u_l,  y = in_L.
// Backward (decode), for l = L-1..0: solve the saddle equation of W_l for the
// current target with the MaxEnt kind of TCA_l's base, giving the conditional
// mean u_hat_l, then invert TCA_l to get the target of layer l-1 (or x_hat).

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "dpbn/error.hpp"
#include "dpbn/parallel.hpp"
#include "dpbn/saddle.hpp"
#include "dpbn/tca.hpp"
#include "dpbn/types.hpp"

namespace dpbn {

struct LayerSpec {
  Matrix W;           // in_dim x out_dim; forward map is W'
  TcaBank input_tca;  // applied to the layer input; its base selects the MaxEnt kind

  Eigen::Index in_dim() const { return W.rows(); }
  Eigen::Index out_dim() const { return W.cols(); }
  MaxEntKind kind() const { return input_tca.base(); }
};

struct DpbnNetwork {
  std::vector<LayerSpec> layers;
  /// Permits in_dim == out_dim layers (bijective toy networks in tests).
  bool allow_square = false;

  Eigen::Index input_dim() const { return layers.front().in_dim(); }
  Eigen::Index bottleneck_dim() const { return layers.back().out_dim(); }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers) n += l.W.size() + l.input_tca.parameter_count();
    return n;
  }

  void validate() const {
    if (layers.empty()) throw ShapeMismatch("DpbnNetwork: no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      const std::string where = "DpbnNetwork layer " + std::to_string(l) + ": ";
      if (layer.out_dim() < 1) throw ShapeMismatch(where + "empty output");
      if (layer.out_dim() > layer.in_dim() || (!allow_square && layer.out_dim() == layer.in_dim())) {
        throw ShapeMismatch(where + "must reduce dimension (" + std::to_string(layer.in_dim()) + " -> " +
                            std::to_string(layer.out_dim()) + ")");
      }
      if (layer.input_tca.size() != layer.in_dim()) throw ShapeMismatch(where + "TCA size differs from in_dim");
      if (l + 1 < layers.size() && layer.out_dim() != layers[l + 1].in_dim()) {
        throw ShapeMismatch(where + "out_dim does not match the next layer's in_dim");
      }
    }
  }
};

struct NetworkShape {
  std::vector<Eigen::Index> dims;        // input, hidden..., bottleneck
  std::vector<Eigen::Index> components;  // TCA K per layer input
  MaxEntKind input_base = MaxEntKind::Linear;
  MaxEntKind hidden_base = MaxEntKind::TruncGauss;
  bool shared_tca = false;
};

/// Random network: Gaussian weights scaled by 1/sqrt(N), then the columns of
/// each W are orthonormalized; TCAs start neutral.
inline DpbnNetwork make_network(const NetworkShape& shape, std::uint64_t seed) {
  if (shape.dims.size() < 2) throw ShapeMismatch("make_network: need at least two dims");
  const std::size_t L = shape.dims.size() - 1;
  if (shape.components.size() != L) throw ShapeMismatch("make_network: need one TCA size per layer");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  DpbnNetwork net;
  for (std::size_t l = 0; l < L; ++l) {
    const Eigen::Index N = shape.dims[l], M = shape.dims[l + 1];
    Matrix G(N, M);
    const double scale = 1.0 / std::sqrt(static_cast<double>(N));
    for (Eigen::Index j = 0; j < M; ++j)
      for (Eigen::Index i = 0; i < N; ++i) G(i, j) = scale * normal(rng);
    Eigen::HouseholderQR<Matrix> qr(G);
    Matrix Q = qr.householderQ() * Matrix::Identity(N, M);
    // Fix column signs so Q does not depend on the QR sign convention.
    for (Eigen::Index j = 0; j < M; ++j)
      if (qr.matrixQR()(j, j) < 0) Q.col(j) *= -1.0;
    const MaxEntKind base = l == 0 ? shape.input_base : shape.hidden_base;
    net.layers.push_back({std::move(Q), TcaBank::neutral(base, N, shape.components[l], shape.shared_tca, rng)});
  }
  net.allow_square = false;
  net.validate();
  return net;
}

struct EncodeTrace {
  std::vector<Vector> tca_in;   // in_l
  std::vector<Vector> tca_out;  // u_l
};

struct EncodeResult {
  Vector y;
  EncodeTrace trace;
};

inline EncodeResult encode(const DpbnNetwork& net, const Vector& x) {
  if (net.layers.empty() || x.size() != net.input_dim()) {
    throw ShapeMismatch("encode: input has " + std::to_string(x.size()) + " entries");
  }
  EncodeResult res;
  Vector in = x;
  for (const auto& layer : net.layers) {
    Vector u = layer.input_tca.eval(in);
    Vector next = layer.W.transpose() * u;
    res.trace.tca_in.push_back(std::move(in));
    res.trace.tca_out.push_back(std::move(u));
    in = std::move(next);
  }
  res.y = std::move(in);
  return res;
}

/// Per-layer record of a backward pass, indexed by layer.
struct DecodeTrace {
  std::vector<Vector> target;        // right-hand side of each saddle solve
  std::vector<SaddleResult> saddle;  // solution; saddle[l].x_hat is u_hat_l
  std::vector<Vector> inverted;      // TCA_l^{-1}(u_hat_l)
  std::vector<bool> inversion_ok;
};

struct DecodeResult {
  Vector x_hat;
  bool success = false;
  std::vector<bool> layer_converged;  // indexed by layer
  DecodeTrace trace;
};

/// Backward pass with one saddle solver per layer, reusable across samples.
class Decoder {
 public:
  explicit Decoder(const DpbnNetwork& net, SolverOptions opts = {}) : net_(&net) {
    net.validate();
    solvers_.reserve(net.layers.size());
    for (const auto& layer : net.layers) solvers_.emplace_back(layer.W, layer.kind(), opts);
  }

  const DpbnNetwork& network() const { return *net_; }

  DecodeResult decode(const Vector& y) const {
    const auto& layers = net_->layers;
    const std::size_t L = layers.size();
    if (y.size() != net_->bottleneck_dim()) {
      throw ShapeMismatch("decode: bottleneck has " + std::to_string(net_->bottleneck_dim()) + " entries, got " +
                          std::to_string(y.size()));
    }
    DecodeResult res;
    auto& tr = res.trace;
    tr.target.resize(L);
    tr.saddle.resize(L);
    tr.inverted.resize(L);
    tr.inversion_ok.assign(L, true);
    res.layer_converged.assign(L, false);
    res.success = true;

    Vector target = y;
    for (std::size_t l = L; l-- > 0;) {
      const auto& layer = layers[l];
      SaddleResult sr = solvers_[l].solve(target);
      res.layer_converged[l] = sr.converged;
      res.success = res.success && sr.converged;

      Vector v(layer.in_dim());
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        const TcaRef t = layer.input_tca.at(i);
        const auto inv = detail::tca_invert_raw(t, sr.x_hat[i]);
        v[i] = inv.x;
        const bool ok = in_open_range(t.base, sr.x_hat[i]) && inv.bracketed &&
                        inv.residual <= 1e-12 * std::max(1.0, std::abs(sr.x_hat[i]));
        if (!ok) {
          tr.inversion_ok[l] = false;
          res.success = false;
        }
      }
      tr.target[l] = std::move(target);
      tr.saddle[l] = std::move(sr);
      target = v;
      tr.inverted[l] = std::move(v);
    }
    res.x_hat = std::move(target);
    return res;
  }

 private:
  const DpbnNetwork* net_;
  std::vector<SaddleSolver> solvers_;
};

inline DecodeResult decode(const DpbnNetwork& net, const Vector& y, const SolverOptions& opts = {}) {
  return Decoder(net, opts).decode(y);
}

struct AutoencodeResult {
  Vector x_hat;
  bool success = false;
};

inline AutoencodeResult autoencode(const DpbnNetwork& net, const Vector& x, const SolverOptions& opts = {}) {
  auto dec = decode(net, encode(net, x).y, opts);
  return {std::move(dec.x_hat), dec.success};
}

struct BatchReconstruction {
  Batch x_hat;
  std::vector<bool> success;
  double efficiency = 0.0;
};

/// Auto-encodes every row of `batch`.
inline BatchReconstruction autoencode_batch(const DpbnNetwork& net, const Batch& batch,
                                            const SolverOptions& opts = {}) {
  const Decoder decoder(net, opts);
  BatchReconstruction out;
  const auto S = static_cast<std::size_t>(batch.rows());
  out.x_hat.resize(batch.rows(), batch.cols());
  std::vector<char> ok(S, 0);
  parallel_chunks(S, 8, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      const auto i = static_cast<Eigen::Index>(s);
      auto dec = decoder.decode(encode(net, batch.row(i).transpose()).y);
      out.x_hat.row(i) = dec.x_hat.transpose();
      ok[s] = dec.success ? 1 : 0;
    }
  });
  std::size_t good = 0;
  out.success.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    out.success[s] = ok[s] != 0;
    good += ok[s];
  }
  out.efficiency = S == 0 ? 0.0 : static_cast<double>(good) / static_cast<double>(S);
  return out;
}

/// Fraction of rows whose every backward solve converges.
inline double sampling_efficiency(const DpbnNetwork& net, const Batch& batch, const SolverOptions& opts = {}) {
  return autoencode_batch(net, batch, opts).efficiency;
}

}  // namespace dpbn
