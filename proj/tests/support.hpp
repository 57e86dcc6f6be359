#pragma once

#include <random>

#include "dpbn/network.hpp"

namespace dpbn::testing {

inline Batch gaussian_batch(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Batch X(rows, cols);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = g(rng);
  return X;
}

/// Moves every TCA parameter away from its neutral value.
inline void jitter_tcas(DpbnNetwork& net, std::mt19937_64& rng, double spread = 1.0) {
  std::uniform_real_distribution<double> ua(-spread, spread), uw(-0.3 * spread, 0.3 * spread),
      ub(-spread, spread);
  for (auto& layer : net.layers) {
    auto& t = layer.input_tca;
    for (Eigen::Index i = 0; i < t.a().size(); ++i) {
      t.a().data()[i] += ua(rng);
      t.w().data()[i] += uw(rng);
      t.b().data()[i] += ub(rng);
    }
  }
}

/// The canonical small gradient-check network: 12 -> 8 -> 5 -> 3, K = 2/3/3.
inline DpbnNetwork canonical_net(std::uint64_t seed) {
  NetworkShape shape;
  shape.dims = {12, 8, 5, 3};
  shape.components = {2, 3, 3};
  return make_network(shape, seed);
}

}  // namespace dpbn::testing
