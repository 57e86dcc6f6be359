#pragma once

// Mini-batch training loop shared by the D-PBN and the baseline auto-encoder.
//
// A model plugs in through the Trainable concept: flat parameter access, a
// per-parameter learning-rate scale and weight-decay mask, a batch gradient
// and an evaluation pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dpbn/error.hpp"
#include "dpbn/types.hpp"

namespace dpbn {

enum class FailurePolicy { Skip, BestIterate };
enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 10;
  int batch_size = 288;
  double weight_decay = 0.0;  // L2 on weights only
  std::uint64_t seed = 1;
  FailurePolicy failure_policy = FailurePolicy::Skip;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double tca_lr_multiplier = 0.1;
  int eval_every = 1;  // epochs between log records; the last epoch is always recorded

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (!(tca_lr_multiplier >= 0.0)) throw ConfigError("tca_lr_multiplier must be >= 0");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  }
};

/// Relative error of entry k is |g_k - fd_k| / max(|g_k|, |fd_k|, floor) with
/// floor = kGradCheckFloor * max_j |g_j|. Entries far below the gradient scale
/// are then compared in absolute terms, where rounding in the loss otherwise
/// dominates the central difference.
inline constexpr double kGradCheckFloor = 1e-4;

struct BatchGradient {
  std::vector<double> grad;  // d(loss)/d(parameters), weight decay not included
  double loss = 0.0;         // mean squared error over the samples used
  std::size_t used = 0;
  std::size_t failed = 0;
};

struct Evaluation {
  double mse = std::numeric_limits<double>::quiet_NaN();  // over successful samples
  double efficiency = 0.0;
  std::size_t samples = 0;
};

template <class M>
concept Trainable = requires(M& m, const M& cm, std::span<const double> p, const Batch& X, const TrainConfig& cfg) {
  { cm.parameters() } -> std::convertible_to<std::vector<double>>;
  m.set_parameters(p);
  { cm.learning_rate_scale(cfg) } -> std::convertible_to<std::vector<double>>;
  { cm.decay_mask() } -> std::convertible_to<std::vector<double>>;
  { cm.gradient(X, cfg) } -> std::convertible_to<BatchGradient>;
  { cm.evaluate(X) } -> std::convertible_to<Evaluation>;
};

/// SGD or Adam over a flat parameter vector.
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, std::vector<double> lr_scale, std::vector<double> decay_mask)
      : cfg_(cfg), scale_(std::move(lr_scale)), decay_(std::move(decay_mask)) {
    if (scale_.size() != decay_.size()) throw ShapeMismatch("Optimizer: mask sizes differ");
    m_.assign(scale_.size(), 0.0);
    v_.assign(scale_.size(), 0.0);
  }

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    if (params.size() != scale_.size() || grad.size() != scale_.size()) {
      throw ShapeMismatch("Optimizer: parameter count changed");
    }
    ++t_;
    const double lr = cfg_.learning_rate;
    if (cfg_.optimizer == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i] + cfg_.weight_decay * decay_[i] * params[i];
        params[i] -= lr * scale_[i] * g;
      }
      return;
    }
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grad[i] + cfg_.weight_decay * decay_[i] * params[i];
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
      params[i] -= lr * scale_[i] * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.adam_eps);
    }
  }

 private:
  TrainConfig cfg_;
  std::vector<double> scale_, decay_, m_, v_;
  std::uint64_t t_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_mse = 0.0;
  double test_mse = 0.0;
  double efficiency = 0.0;  // on the test set
  double wall_seconds = 0.0;
  double train_efficiency = 0.0;
  std::size_t skipped = 0;  // training samples left out of gradients since the previous record
};

struct TrainingLog {
  std::vector<std::string> header;  // emitted as '# ' comment lines
  std::vector<EpochRecord> epochs;
  bool diverged = false;
};

inline std::string format_real(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// CSV with columns epoch,train_mse,test_mse,efficiency,wall_seconds.
/// Values are printed with 17 significant digits so they parse back exactly.
inline void write_csv(std::ostream& out, const TrainingLog& log) {
  for (const auto& h : log.header) out << "# " << h << '\n';
  out << "epoch,train_mse,test_mse,efficiency,wall_seconds\n";
  for (const auto& r : log.epochs) {
    out << r.epoch << ',' << format_real(r.train_mse) << ',' << format_real(r.test_mse) << ','
        << format_real(r.efficiency) << ',' << format_real(r.wall_seconds) << '\n';
  }
  std::ostringstream skipped;
  for (std::size_t i = 0; i < log.epochs.size(); ++i) skipped << (i ? "," : "") << log.epochs[i].skipped;
  out << "# skipped_per_epoch=" << skipped.str() << '\n';
  if (log.diverged) out << "# diverged=1\n";
}

/// Produces an augmented copy of the training batch; the seed changes per epoch.
using Augmenter = std::function<Batch(const Batch&, std::uint64_t)>;

/// Called after each epoch's record is appended.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Runs `cfg.epochs` epochs of shuffled mini-batch training. Epoch 0 records
/// the untrained model. Stops early, with log.diverged set, if the loss or a
/// parameter becomes non-finite.
template <Trainable Model>
TrainingLog train_loop(Model& model, const Batch& train, const Batch& test, const TrainConfig& cfg,
                       const Augmenter& augment = {}, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  TrainingLog log;
  const auto start = std::chrono::steady_clock::now();
  auto seconds = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  auto record = [&](int epoch, std::size_t skipped) {
    EpochRecord r;
    r.epoch = epoch;
    const Evaluation tr = model.evaluate(train);
    const Evaluation te = model.evaluate(test);
    r.train_mse = tr.mse;
    r.train_efficiency = tr.efficiency;
    r.test_mse = te.mse;
    r.efficiency = te.efficiency;
    r.skipped = skipped;
    r.wall_seconds = seconds();
    log.epochs.push_back(r);
    if (on_epoch) on_epoch(r);
  };

  record(0, 0);
  if (cfg.epochs == 0 || train.rows() == 0) return log;

  Optimizer opt(cfg, model.learning_rate_scale(cfg), model.decay_mask());
  std::vector<double> params = model.parameters();
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x7261696e));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(train.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  std::size_t skipped_since = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const Batch data = augment ? augment(train, mix_seed(cfg.seed, 0x61756700ULL + static_cast<std::uint64_t>(epoch)))
                               : train;
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t skipped = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      Batch X(static_cast<Eigen::Index>(end - begin), data.cols());
      for (std::size_t i = begin; i < end; ++i) X.row(static_cast<Eigen::Index>(i - begin)) = data.row(order[i]);
      const BatchGradient g = model.gradient(X, cfg);
      skipped += g.failed;
      if (g.used == 0) continue;
      if (!std::isfinite(g.loss)) {
        log.diverged = true;
        return log;
      }
      opt.step(params, g.grad);
      if (!std::all_of(params.begin(), params.end(), [](double p) { return std::isfinite(p); })) {
        log.diverged = true;
        return log;
      }
      model.set_parameters(params);
    }
    skipped_since += skipped;
    if (epoch % cfg.eval_every != 0 && epoch != cfg.epochs) continue;
    record(epoch, skipped_since);
    skipped_since = 0;
    const auto& last = log.epochs.back();
    if (!std::isfinite(last.train_mse) && last.train_efficiency > 0.0) {
      log.diverged = true;
      return log;
    }
  }
  return log;
}

}  // namespace dpbn
