#pragma once

// Finite-difference check of the training gradient on a small random network.

#include <random>

#include "dpbn/config.hpp"
#include "dpbn/network.hpp"
#include "dpbn/training.hpp"

namespace dpbn {

/// The checked network: orthonormal weights from make_network with every TCA
/// parameter moved off its neutral value by up to `tca_spread`, so that all
/// mixture components carry gradient.
inline DpbnNetwork gradcheck_network(const GradcheckConfig& g, std::uint64_t seed) {
  NetworkShape shape;
  shape.dims = g.dims;
  shape.components = g.components;
  shape.input_base = g.input_base;
  shape.hidden_base = g.hidden_base;
  DpbnNetwork net = make_network(shape, seed);
  std::mt19937_64 rng(mix_seed(seed, 0x6772));
  const double s = g.tca_spread;
  std::uniform_real_distribution<double> ua(-s, s), uw(-0.3 * s, 0.3 * s), ub(-s, s);
  for (auto& layer : net.layers) {
    auto& t = layer.input_tca;
    for (Eigen::Index i = 0; i < t.a().size(); ++i) {
      t.a().data()[i] += ua(rng);
      t.w().data()[i] += uw(rng);
      t.b().data()[i] += ub(rng);
    }
  }
  return net;
}

/// Inputs drawn N(0, input_scale^2).
inline Batch gradcheck_inputs(const GradcheckConfig& g, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0x6778));
  std::normal_distribution<double> normal(0.0, g.input_scale);
  Batch X(g.samples, g.dims.front());
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = normal(rng);
  return X;
}

inline FiniteDiffReport run_gradcheck(const GradcheckConfig& g, std::uint64_t seed, bool corrupt = false) {
  SolverOptions opts;
  opts.tol = g.solver_tol;
  const DpbnNetwork net = gradcheck_network(g, seed);
  return finite_diff_check(net, gradcheck_inputs(g, seed), g.eps, opts, corrupt);
}

}  // namespace dpbn
