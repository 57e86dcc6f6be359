#include <gtest/gtest.h>

#include "dpbn/config.hpp"
#include "dpbn/gradcheck.hpp"

using namespace dpbn;

TEST(Config, EmptyDocumentGivesDefaults) {
  const auto c = parse_config("{}");
  EXPECT_EQ(c.model, ModelKind::Dpbn);
  EXPECT_EQ(c.network.dims, (std::vector<Eigen::Index>{784, 64, 32, 16}));
  EXPECT_EQ(c.data.classes, (std::vector<int>{3, 8, 9}));
  EXPECT_EQ(c.data.per_class, 500);
  EXPECT_EQ(c.gradcheck.dims, (std::vector<Eigen::Index>{12, 8, 5, 3}));
  EXPECT_EQ(c.gradcheck.components, (std::vector<Eigen::Index>{2, 3, 3}));
  EXPECT_EQ(c.gradcheck.eps, 1e-5);
  EXPECT_EQ(c.train.seed, c.seed);
}

TEST(Config, ReadsEverySection) {
  const auto c = parse_config(R"({
    "model": "aec", "seed": 17,
    "data": {"classes": [1, 7], "per_class": 20, "test_per_class": -1, "dither_scale": 0.02, "max_shift": 1.5},
    "network": {"dims": [20, 10, 4], "components": [1, 2], "hidden_base": "truncexpon", "tied": true},
    "train": {"learning_rate": 0.005, "epochs": 3, "batch_size": 16, "optimizer": "sgd",
              "failure_policy": "best_iterate", "tca_lr_multiplier": 0.5},
    "solver": {"tol": 1e-11, "max_iter": 50, "ridge": 0},
    "output": {"model": "m.bin", "log": "l.csv"},
    "gradcheck": {"hidden_base": "linear", "components": [1, 1, 1]}
  })");
  EXPECT_EQ(c.model, ModelKind::Aec);
  EXPECT_EQ(c.seed, 17u);
  EXPECT_EQ(c.train.seed, 17u);
  EXPECT_EQ(c.data.classes, (std::vector<int>{1, 7}));
  EXPECT_EQ(c.data.test_per_class, -1);
  EXPECT_EQ(c.data.max_shift, 1.5);
  EXPECT_EQ(c.network.hidden_base, MaxEntKind::TruncExpon);
  EXPECT_TRUE(c.network.tied);
  EXPECT_EQ(c.train.optimizer, OptimizerKind::Sgd);
  EXPECT_EQ(c.train.failure_policy, FailurePolicy::BestIterate);
  EXPECT_EQ(c.train.batch_size, 16);
  EXPECT_EQ(c.solver.ridge, 0.0);
  EXPECT_EQ(c.solver.max_iter, 50);
  EXPECT_EQ(c.output.log, "l.csv");
  EXPECT_EQ(c.gradcheck.hidden_base, MaxEntKind::Linear);
}

TEST(Config, RejectsUnknownKeys) {
  EXPECT_THROW(parse_config(R"({"sed": 1})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"train": {"lr": 0.1}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"data": {"classes": [3], "extra": null}})"), ConfigError);
  try {
    parse_config(R"({"network": {"dimz": [3, 2]}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("network"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("dimz"), std::string::npos);
  }
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(parse_config("not json"), ConfigError);
  EXPECT_THROW(parse_config("[]"), ConfigError);
  EXPECT_THROW(parse_config(R"({"seed": -1})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"seed": "1"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"model": "vae"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"train": {"epochs": 2.5}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"train": {"learning_rate": 0}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"train": {"optimizer": "rmsprop"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"network": {"dims": [10, 10]}, "network2": 1})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"network": {"dims": [10, 12], "components": [1]}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"network": {"dims": [10, 5, 2], "components": [1]}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"network": {"components": [1, 17, 1]}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"network": {"input_base": "relu"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"data": {"classes": [3, 3]}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"data": {"classes": [10]}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"data": {"per_class": -1}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"data": "x"})"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(ConfigHash, Fnv1aReferenceValues) {
  // Published FNV-1a 64 test vectors.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(ConfigHash, DependsOnContentNotSpelling) {
  const auto a = parse_config("{}");
  const auto b = parse_config(R"({"seed": 1, "train": {"epochs": 10}})");
  const auto c = parse_config(R"({"seed": 2})");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(c));
  EXPECT_EQ(config_hash(a).size(), 16u);
  // The expanded document parses back to the same configuration.
  EXPECT_EQ(config_hash(parse_config(to_json(c).dump())), config_hash(c));
}

TEST(Gradcheck, DefaultCanonicalNetworkPasses) {
  const GradcheckConfig g;
  const auto net = gradcheck_network(g, 1);
  EXPECT_EQ(net.layers.size(), 3u);
  EXPECT_EQ(net.layers[2].input_tca.components(), 3);
  const auto rep = run_gradcheck(g, 1);
  EXPECT_GE(rep.samples, 6u);
  EXPECT_LE(rep.max_rel_err, g.tolerance);
  EXPECT_GT(run_gradcheck(g, 1, true).max_rel_err, g.tolerance);
}

TEST(Gradcheck, SingleLinearLayerIsNearExact) {
  GradcheckConfig g;
  g.dims = {12, 3};
  g.components = {1};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto rep = run_gradcheck(g, seed);
    EXPECT_EQ(rep.samples, 8u);
    EXPECT_LE(rep.max_rel_err, 1e-8) << "seed " << seed;
  }
}

TEST(Gradcheck, DeepLinearErrorIsTruncation) {
  // With three linear layers the loss has sizeable third derivatives, so the
  // central difference itself is off by O(eps^2): the error falls 100x per
  // decade of eps until rounding takes over.
  GradcheckConfig g;
  g.hidden_base = MaxEntKind::Linear;
  g.components = {1, 1, 1};
  g.eps = 1e-3;
  const double coarse = run_gradcheck(g, 1).max_rel_err;
  g.eps = 1e-4;
  const double fine = run_gradcheck(g, 1).max_rel_err;
  EXPECT_NEAR(fine / coarse, 1e-2, 2e-3);
  g.eps = 1e-5;
  EXPECT_LE(run_gradcheck(g, 1).max_rel_err, 1e-7);
}
