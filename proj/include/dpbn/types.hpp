#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace dpbn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
/// Samples stored one per row.
using Batch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// SplitMix64 finalizer; derives independent seeds for each pipeline stage.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace dpbn
