#pragma once

// End-to-end runs driven by a RunConfig: data preparation, model
// construction, training and evaluation.

#include <string>
#include <variant>

#include "dpbn/baseline.hpp"
#include "dpbn/config.hpp"
#include "dpbn/data.hpp"
#include "dpbn/model_io.hpp"
#include "dpbn/network.hpp"
#include "dpbn/training.hpp"

namespace dpbn {

struct PreparedData {
  ImageBatch train;
  ImageBatch test;
};

enum class Split { Train, Test };

/// Class subset and dither of one split, before the logit. Each random stage
/// draws from its own seed stream.
inline ImageBatch dithered_split(const RunConfig& c, Split split) {
  const bool train = split == Split::Train;
  const std::uint64_t stream = train ? 0x10 : 0x20;
  const ImageBatch raw = train ? load_idx(c.data.train_images, c.data.train_labels)
                               : load_idx(c.data.test_images, c.data.test_labels);
  const ImageBatch subset =
      select_subset(raw, c.data.classes, train ? c.data.per_class : c.data.test_per_class, mix_seed(c.seed, stream));
  return dither(subset, c.data.dither_scale, mix_seed(c.seed, stream + 1));
}

inline PreparedData prepare_data(const RunConfig& c) {
  PreparedData d;
  d.train = gaussianify(dithered_split(c, Split::Train));
  d.test = gaussianify(dithered_split(c, Split::Test));
  if (d.train.samples.cols() != c.network.dims.front()) {
    throw DimMismatch("images have " + std::to_string(d.train.samples.cols()) + " pixels but network.dims starts at " +
                      std::to_string(c.network.dims.front()));
  }
  return d;
}

inline AnyModel build_model(const RunConfig& c) {
  const std::uint64_t seed = mix_seed(c.seed, 0x30);
  if (c.model == ModelKind::Aec) return make_aec(c.network.dims, c.network.tied, seed);
  NetworkShape shape;
  shape.dims = c.network.dims;
  shape.components = c.network.components;
  shape.input_base = c.network.input_base;
  shape.hidden_base = c.network.hidden_base;
  shape.shared_tca = c.network.shared_tca;
  return make_network(shape, seed);
}

inline Eigen::Index parameter_count(const AnyModel& m) {
  return std::visit([](const auto& net) { return net.parameter_count(); }, m);
}

inline void save_any_model(const std::string& path, const AnyModel& m) {
  std::visit([&](const auto& net) { save_model(path, net); }, m);
}

inline Evaluation evaluate_model(const AnyModel& m, const Batch& X, const SolverOptions& opts) {
  if (const auto* net = std::get_if<DpbnNetwork>(&m)) return evaluate_reconstruction(*net, X, opts);
  return aec_evaluate(std::get<AecNetwork>(m), X);
}

struct SampleReconstruction {
  Batch x_hat;
  std::vector<bool> success;
};

inline SampleReconstruction reconstruct_model(const AnyModel& m, const Batch& X, const SolverOptions& opts) {
  if (const auto* net = std::get_if<DpbnNetwork>(&m)) {
    auto rec = autoencode_batch(*net, X, opts);
    return {std::move(rec.x_hat), std::move(rec.success)};
  }
  return {aec_reconstruct(std::get<AecNetwork>(m), X), std::vector<bool>(static_cast<std::size_t>(X.rows()), true)};
}

struct RunResult {
  AnyModel model;
  TrainingLog log;
};

/// Builds the model from the config and trains it on prepared data. The log
/// header records the config hash, seed and model size.
inline RunResult run_training(const RunConfig& c, const PreparedData& d, const EpochCallback& on_epoch = {}) {
  RunResult r{build_model(c), {}};
  Augmenter augment;
  if (c.data.max_shift > 0.0) {
    const int h = d.train.height, w = d.train.width;
    const double s = c.data.max_shift;
    augment = [h, w, s](const Batch& X, std::uint64_t seed) { return fft_shift_augment(X, h, w, s, seed); };
  }
  if (auto* net = std::get_if<DpbnNetwork>(&r.model)) {
    r.log = fit(*net, d.train.samples, d.test.samples, c.train, c.solver, augment, on_epoch);
  } else {
    r.log = aec_train(std::get<AecNetwork>(r.model), d.train.samples, d.test.samples, c.train, augment, on_epoch);
  }
  r.log.header = {"config_hash=" + config_hash(c), "seed=" + std::to_string(c.seed),
                  std::string("model=") + (c.model == ModelKind::Dpbn ? "dpbn" : "aec"),
                  "parameters=" + std::to_string(parameter_count(r.model)),
                  "train_samples=" + std::to_string(d.train.size()),
                  "test_samples=" + std::to_string(d.test.size())};
  return r;
}

}  // namespace dpbn
