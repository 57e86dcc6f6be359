#pragma once

// Run configuration: one JSON document. Every section and key is optional and
// falls back to the defaults below; unknown keys and wrong types are errors.

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dpbn/error.hpp"
#include "dpbn/maxent.hpp"
#include "dpbn/saddle.hpp"
#include "dpbn/trainer.hpp"

namespace dpbn {

enum class ModelKind { Dpbn, Aec };

struct DataConfig {
  std::string train_images = "data/mnist/train-images-idx3-ubyte.gz";
  std::string train_labels = "data/mnist/train-labels-idx1-ubyte.gz";
  std::string test_images = "data/mnist/t10k-images-idx3-ubyte.gz";
  std::string test_labels = "data/mnist/t10k-labels-idx1-ubyte.gz";
  std::vector<int> classes = {3, 8, 9};
  int per_class = 500;
  int test_per_class = 500;
  double dither_scale = 0.01;
  double max_shift = 0.0;  // pixels; 0 disables shift augmentation
};

struct NetworkConfig {
  std::vector<Eigen::Index> dims = {784, 64, 32, 16};
  std::vector<Eigen::Index> components = {2, 3, 3};
  MaxEntKind input_base = MaxEntKind::Linear;
  MaxEntKind hidden_base = MaxEntKind::TruncGauss;
  bool shared_tca = false;
  bool tied = false;  // baseline only
};

struct OutputConfig {
  std::string model = "model.bin";
  std::string log = "train.csv";
};

struct GradcheckConfig {
  std::vector<Eigen::Index> dims = {12, 8, 5, 3};
  std::vector<Eigen::Index> components = {2, 3, 3};
  MaxEntKind input_base = MaxEntKind::Linear;
  MaxEntKind hidden_base = MaxEntKind::TruncGauss;
  int samples = 8;
  double input_scale = 0.5;
  double tca_spread = 0.3;
  double eps = 1e-5;
  double tolerance = 1e-4;
  double solver_tol = 1e-14;
};

struct RunConfig {
  ModelKind model = ModelKind::Dpbn;
  std::uint64_t seed = 1;
  DataConfig data;
  NetworkConfig network;
  TrainConfig train;
  SolverOptions solver;
  OutputConfig output;
  GradcheckConfig gradcheck;

  void validate() const;
};

namespace detail {

using nlohmann::json;

class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  /// Rejects keys that were never looked up.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }

  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(path(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }

  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(path(key) + ": expected a number");
      out = v->get<double>();
    }
  }

  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(path(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }

  void get(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(path(key) + ": expected an integer");
      const auto x = v->get<std::int64_t>();
      if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(path(key) + ": out of range");
      out = static_cast<int>(x);
    }
  }

  void get(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(path(key) + ": expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  template <class T>
  void get(const std::string& key, std::vector<T>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(path(key) + ": expected an array of integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer()) throw ConfigError(path(key) + ": expected an array of integers");
        out.push_back(static_cast<T>(e.get<std::int64_t>()));
      }
    }
  }

  void get(const std::string& key, MaxEntKind& out) {
    std::string name;
    if (find(key) == nullptr) return;
    get(key, name);
    const auto k = parse_maxent_kind(name);
    if (!k) throw ConfigError(path(key) + ": expected linear, truncgauss or truncexpon");
    out = *k;
  }

  template <class Fn>
  void section(const std::string& key, Fn&& fn) {
    if (const json* v = find(key)) {
      Section s(*v, path(key));
      fn(s);
      s.finish();
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline void read_network(Section& s, NetworkConfig& n) {
  s.get("dims", n.dims);
  s.get("components", n.components);
  s.get("input_base", n.input_base);
  s.get("hidden_base", n.hidden_base);
  s.get("shared_tca", n.shared_tca);
  s.get("tied", n.tied);
}

inline void read_train(Section& s, TrainConfig& t) {
  s.get("learning_rate", t.learning_rate);
  s.get("epochs", t.epochs);
  s.get("batch_size", t.batch_size);
  s.get("weight_decay", t.weight_decay);
  s.get("beta1", t.beta1);
  s.get("beta2", t.beta2);
  s.get("adam_eps", t.adam_eps);
  s.get("tca_lr_multiplier", t.tca_lr_multiplier);
  s.get("eval_every", t.eval_every);
  std::string name;
  if (s.find("optimizer")) {
    s.get("optimizer", name);
    if (name == "adam") {
      t.optimizer = OptimizerKind::Adam;
    } else if (name == "sgd") {
      t.optimizer = OptimizerKind::Sgd;
    } else {
      throw ConfigError(s.path("optimizer") + ": expected adam or sgd");
    }
  }
  if (s.find("failure_policy")) {
    s.get("failure_policy", name);
    if (name == "skip") {
      t.failure_policy = FailurePolicy::Skip;
    } else if (name == "best_iterate") {
      t.failure_policy = FailurePolicy::BestIterate;
    } else {
      throw ConfigError(s.path("failure_policy") + ": expected skip or best_iterate");
    }
  }
}

inline json kind_json(MaxEntKind k) { return std::string(to_string(k)); }

}  // namespace detail

inline void RunConfig::validate() const {
  auto check_net = [](const std::vector<Eigen::Index>& dims, const std::vector<Eigen::Index>& comps,
                      const std::string& where) {
    if (dims.size() < 2) throw ConfigError(where + ".dims: need at least two entries");
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (dims[i] < 1) throw ConfigError(where + ".dims: entries must be positive");
      if (i > 0 && dims[i] >= dims[i - 1]) throw ConfigError(where + ".dims: must strictly decrease");
    }
    if (comps.size() != dims.size() - 1) throw ConfigError(where + ".components: need one entry per layer");
    for (auto k : comps) {
      if (k < 1 || k > 16) throw ConfigError(where + ".components: entries must be in [1, 16]");
    }
  };
  check_net(network.dims, network.components, "network");
  check_net(gradcheck.dims, gradcheck.components, "gradcheck");
  if (data.classes.empty()) throw ConfigError("data.classes: must not be empty");
  for (int c : data.classes) {
    if (c < 0 || c > 9) throw ConfigError("data.classes: labels are 0..9");
  }
  if (std::set<int>(data.classes.begin(), data.classes.end()).size() != data.classes.size()) {
    throw ConfigError("data.classes: duplicate label");
  }
  if (data.per_class < 0) throw ConfigError("data.per_class: must be >= 0");
  if (data.test_per_class < -1) throw ConfigError("data.test_per_class: must be >= 0, or -1 for all");
  if (!(data.dither_scale > 0.0)) throw ConfigError("data.dither_scale: must be > 0");
  if (!(data.max_shift >= 0.0)) throw ConfigError("data.max_shift: must be >= 0");
  if (!(solver.tol > 0.0) || solver.max_iter < 1 || solver.damping < 0 || !(solver.ridge >= 0.0)) {
    throw ConfigError("solver: tol > 0, max_iter >= 1, damping >= 0 and ridge >= 0 required");
  }
  if (gradcheck.samples < 1 || !(gradcheck.eps > 0.0) || !(gradcheck.tolerance > 0.0) ||
      !(gradcheck.input_scale > 0.0) || !(gradcheck.solver_tol > 0.0) || !(gradcheck.tca_spread >= 0.0)) {
    throw ConfigError("gradcheck: samples >= 1 and positive eps, tolerance, input_scale, solver_tol required");
  }
  try {
    train.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("train.") + e.what());
  }
}

/// Relative paths in the document are taken relative to the working directory.
inline RunConfig parse_config(const std::string& text) {
  using detail::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  {
    detail::Section root(j, "config");
    if (root.find("model")) {
      std::string m;
      root.get("model", m);
      if (m == "dpbn") {
        c.model = ModelKind::Dpbn;
      } else if (m == "aec") {
        c.model = ModelKind::Aec;
      } else {
        throw ConfigError("config.model: expected dpbn or aec");
      }
    }
    root.get("seed", c.seed);
    root.section("data", [&](detail::Section& s) {
      s.get("train_images", c.data.train_images);
      s.get("train_labels", c.data.train_labels);
      s.get("test_images", c.data.test_images);
      s.get("test_labels", c.data.test_labels);
      s.get("classes", c.data.classes);
      s.get("per_class", c.data.per_class);
      s.get("test_per_class", c.data.test_per_class);
      s.get("dither_scale", c.data.dither_scale);
      s.get("max_shift", c.data.max_shift);
    });
    root.section("network", [&](detail::Section& s) { detail::read_network(s, c.network); });
    root.section("train", [&](detail::Section& s) { detail::read_train(s, c.train); });
    root.section("solver", [&](detail::Section& s) {
      s.get("tol", c.solver.tol);
      s.get("max_iter", c.solver.max_iter);
      s.get("damping", c.solver.damping);
      s.get("ridge", c.solver.ridge);
    });
    root.section("output", [&](detail::Section& s) {
      s.get("model", c.output.model);
      s.get("log", c.output.log);
    });
    root.section("gradcheck", [&](detail::Section& s) {
      s.get("dims", c.gradcheck.dims);
      s.get("components", c.gradcheck.components);
      s.get("input_base", c.gradcheck.input_base);
      s.get("hidden_base", c.gradcheck.hidden_base);
      s.get("samples", c.gradcheck.samples);
      s.get("input_scale", c.gradcheck.input_scale);
      s.get("tca_spread", c.gradcheck.tca_spread);
      s.get("eps", c.gradcheck.eps);
      s.get("tolerance", c.gradcheck.tolerance);
      s.get("solver_tol", c.gradcheck.solver_tol);
    });
    root.finish();
  }
  c.train.seed = c.seed;
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Fully expanded configuration, defaults included.
inline nlohmann::json to_json(const RunConfig& c) {
  using detail::json;
  using detail::kind_json;
  json j;
  j["model"] = c.model == ModelKind::Dpbn ? "dpbn" : "aec";
  j["seed"] = c.seed;
  j["data"] = {{"train_images", c.data.train_images}, {"train_labels", c.data.train_labels},
               {"test_images", c.data.test_images},   {"test_labels", c.data.test_labels},
               {"classes", c.data.classes},           {"per_class", c.data.per_class},
               {"test_per_class", c.data.test_per_class},
               {"dither_scale", c.data.dither_scale}, {"max_shift", c.data.max_shift}};
  j["network"] = {{"dims", c.network.dims},
                  {"components", c.network.components},
                  {"input_base", kind_json(c.network.input_base)},
                  {"hidden_base", kind_json(c.network.hidden_base)},
                  {"shared_tca", c.network.shared_tca},
                  {"tied", c.network.tied}};
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"weight_decay", c.train.weight_decay},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"adam_eps", c.train.adam_eps},
                {"tca_lr_multiplier", c.train.tca_lr_multiplier},
                {"eval_every", c.train.eval_every},
                {"optimizer", c.train.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
                {"failure_policy", c.train.failure_policy == FailurePolicy::Skip ? "skip" : "best_iterate"}};
  j["solver"] = {{"tol", c.solver.tol},
                 {"max_iter", c.solver.max_iter},
                 {"damping", c.solver.damping},
                 {"ridge", c.solver.ridge}};
  j["output"] = {{"model", c.output.model}, {"log", c.output.log}};
  j["gradcheck"] = {{"dims", c.gradcheck.dims},
                    {"components", c.gradcheck.components},
                    {"input_base", kind_json(c.gradcheck.input_base)},
                    {"hidden_base", kind_json(c.gradcheck.hidden_base)},
                    {"samples", c.gradcheck.samples},
                    {"input_scale", c.gradcheck.input_scale},
                    {"tca_spread", c.gradcheck.tca_spread},
                    {"eps", c.gradcheck.eps},
                    {"tolerance", c.gradcheck.tolerance},
                    {"solver_tol", c.gradcheck.solver_tol}};
  return j;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the expanded configuration; two configs that differ only in
/// defaults written out explicitly hash the same.
inline std::string config_hash(const RunConfig& c) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(to_json(c).dump());
  return os.str();
}

}  // namespace dpbn
