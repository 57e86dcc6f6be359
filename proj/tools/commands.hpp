#pragma once

// Subcommand bodies for the dpbn executable. Each returns the process exit
// code and reports problems on `err`.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "dpbn/config.hpp"
#include "dpbn/gradcheck.hpp"
#include "dpbn/pipeline.hpp"

namespace dpbn::cli {

enum Exit : int { kOk = 0, kConfigError = 1, kBadModel = 1, kCheckFailed = 1, kDataError = 2, kDiverged = 3 };

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::string model;  // output or input model path
  std::string out;    // output directory
};

inline RunConfig load_with_overrides(const std::string& path, const Overrides& o) {
  RunConfig c = path.empty() ? parse_config("{}") : load_config(path);
  if (o.seed) {
    c.seed = *o.seed;
    c.train.seed = *o.seed;
  }
  return c;
}

inline std::string join_out(const std::string& dir, const std::string& file) {
  if (dir.empty()) return file;
  return (std::filesystem::path(dir) / std::filesystem::path(file).filename()).string();
}

inline int cmd_train(const std::string& config_path, const Overrides& o, std::ostream& out, std::ostream& err) {
  RunConfig c;
  try {
    c = load_with_overrides(config_path, o);
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  PreparedData data;
  try {
    data = prepare_data(c);
  } catch (const Error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  }
  const std::string model_path = o.model.empty() ? join_out(o.out, c.output.model) : o.model;
  const std::string log_path = join_out(o.out, c.output.log);
  if (!o.out.empty()) std::filesystem::create_directories(o.out);

  const auto result = run_training(c, data, [&](const EpochRecord& r) {
    err << "epoch " << r.epoch << " train_mse=" << format_real(r.train_mse) << " test_mse=" << format_real(r.test_mse)
        << " efficiency=" << format_real(r.efficiency) << '\n';
  });
  try {
    std::ofstream log(log_path);
    if (!log) throw IoError("cannot write " + log_path);
    write_csv(log, result.log);
    if (result.log.diverged) {
      err << "training diverged; log written to " << log_path << '\n';
      return kDiverged;
    }
    save_any_model(model_path, result.model);
  } catch (const Error& e) {
    err << "output error: " << e.what() << '\n';
    return kDataError;
  }
  out << "model=" << model_path << " log=" << log_path << '\n';
  return kOk;
}

struct Loaded {
  AnyModel model;
  RunConfig config;
};

/// Loads the model and the config; on failure writes a diagnostic and returns
/// the exit code instead.
inline std::variant<Loaded, int> load_for_inference(const std::string& model_path, const std::string& config_path,
                                                    const Overrides& o, std::ostream& err) {
  RunConfig c;
  try {
    c = load_with_overrides(config_path, o);
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return int{kConfigError};
  }
  try {
    return Loaded{load_any_model(model_path), c};
  } catch (const Error& e) {
    err << "bad model: " << e.what() << '\n';
    return int{kBadModel};
  }
}

inline int cmd_eval(const std::string& model_path, const std::string& config_path, const Overrides& o,
                    std::ostream& out, std::ostream& err) {
  auto loaded = load_for_inference(model_path, config_path, o, err);
  if (auto* code = std::get_if<int>(&loaded)) return *code;
  const auto& [model, c] = std::get<Loaded>(loaded);
  PreparedData data;
  try {
    data = prepare_data(c);
  } catch (const Error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  }
  const Evaluation tr = evaluate_model(model, data.train.samples, c.solver);
  const Evaluation te = evaluate_model(model, data.test.samples, c.solver);
  out << "mse_train=" << format_real(tr.mse) << " mse_test=" << format_real(te.mse)
      << " efficiency=" << format_real(te.efficiency) << '\n';
  return kOk;
}

inline unsigned char to_gray(double logit_value) {
  const double v = std::round(sigmoid(logit_value) * 255.0);
  return static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
}

inline void write_pgm(const std::string& path, const Batch& X, Eigen::Index row, int h, int w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << "P5\n" << w << ' ' << h << "\n255\n";
  for (Eigen::Index j = 0; j < X.cols(); ++j) f.put(static_cast<char>(to_gray(X(row, j))));
  if (!f) throw IoError("write failed for " + path);
}

/// Reconstructs `count` rows of the input (a DPBD cache in the logit domain,
/// or the config's test split) and writes PGM pairs plus errors.csv.
inline int cmd_reconstruct(const std::string& model_path, const std::string& config_path, const std::string& input,
                           int count, const Overrides& o, std::ostream& out, std::ostream& err) {
  auto loaded = load_for_inference(model_path, config_path, o, err);
  if (auto* code = std::get_if<int>(&loaded)) return *code;
  const auto& [model, c] = std::get<Loaded>(loaded);
  const std::string dir = o.out.empty() ? "." : o.out;
  try {
    ImageBatch batch;
    if (!input.empty()) {
      batch = read_cache(input);
      if (batch.stage != Stage::Gaussianified) throw DomainError(input + ": expected a gaussianified batch");
    } else {
      batch = prepare_data(c).test;
    }
    const Eigen::Index in_dim = std::visit([](const auto& m) { return m.input_dim(); }, model);
    if (batch.samples.cols() != in_dim) throw DimMismatch("input width does not match the model");
    const Eigen::Index n = count < 0 ? batch.size() : std::min<Eigen::Index>(count, batch.size());
    const Batch X = batch.samples.topRows(n);
    const auto rec = reconstruct_model(model, X, c.solver);
    std::filesystem::create_directories(dir);
    std::ofstream csv(join_out(dir, "errors.csv"));
    if (!csv) throw IoError("cannot write " + join_out(dir, "errors.csv"));
    csv << "index,label,success,sse,mse\n";
    for (Eigen::Index i = 0; i < n; ++i) {
      std::ostringstream stem;
      stem << std::setw(5) << std::setfill('0') << i;
      write_pgm(join_out(dir, stem.str() + "_orig.pgm"), X, i, batch.height, batch.width);
      write_pgm(join_out(dir, stem.str() + "_recon.pgm"), rec.x_hat, i, batch.height, batch.width);
      const double sse = (rec.x_hat.row(i) - X.row(i)).squaredNorm();
      csv << i << ',' << batch.labels[static_cast<std::size_t>(i)] << ',' << (rec.success[static_cast<std::size_t>(i)] ? 1 : 0)
          << ',' << format_real(sse) << ',' << format_real(sse / static_cast<double>(X.cols())) << '\n';
    }
    out << "samples=" << n << " out=" << dir << '\n';
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}

inline int cmd_gradcheck(const std::string& config_path, const Overrides& o, bool corrupt, std::ostream& out,
                         std::ostream& err) {
  RunConfig c;
  try {
    c = load_with_overrides(config_path, o);
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  const auto rep = run_gradcheck(c.gradcheck, c.seed, corrupt);
  const bool pass = rep.samples > 0 && rep.max_rel_err <= c.gradcheck.tolerance;
  out << "max_rel_err=" << format_real(rep.max_rel_err) << " parameters=" << rep.parameters
      << " samples=" << rep.samples << " worst_index=" << rep.worst_index << " tolerance=" << c.gradcheck.tolerance
      << ' ' << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kOk : kCheckFailed;
}

}  // namespace dpbn::cli
