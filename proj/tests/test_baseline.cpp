#include <gtest/gtest.h>

#include <random>

#include "dpbn/baseline.hpp"
#include "dpbn/network.hpp"
#include "support.hpp"

using namespace dpbn;
using dpbn::testing::gaussian_batch;

namespace {

void randomize(AecNetwork& net, std::mt19937_64& rng, double spread) {
  auto theta = aec_flatten(net);
  std::normal_distribution<double> g(0.0, spread);
  for (auto& t : theta) t += g(rng);
  aec_unflatten(net, theta);
}

}  // namespace

TEST(AecForward, ZeroWeightsGiveConstantCode) {
  AecNetwork net = make_aec({5, 3}, false, 1);
  net.W[0].setZero();
  net.V[0].setZero();
  std::mt19937_64 rng(1);
  const Vector x = gaussian_batch(rng, 5, 1);
  const auto fw = aec_forward(net, x);
  for (double h : fw.cache.enc[1]) EXPECT_NEAR(h, 0.79788456080286535588, 1e-15);
  EXPECT_EQ(fw.x_hat, Vector::Zero(5));
  net.c[0].setConstant(0.25);
  EXPECT_EQ(aec_forward(net, x).x_hat, Vector::Constant(5, 0.25));
}

TEST(AecForward, EncoderMatchesDpbnOnSharedWeights) {
  // A D-PBN whose layer inputs pass through plain TG activations computes the
  // same encoder as the AEC with zero biases.
  NetworkShape shape;
  shape.dims = {9, 6, 3};
  shape.components = {1, 1};
  shape.input_base = MaxEntKind::TruncGauss;
  const auto dpbn_net = make_network(shape, 4);
  AecNetwork aec = make_aec({9, 6, 3}, true, 4);
  aec.W[0] = dpbn_net.layers[0].W;
  aec.W[1] = dpbn_net.layers[1].W;
  std::mt19937_64 rng(4);
  const Vector x = gaussian_batch(rng, 9, 1);
  const auto fw = aec_forward(aec, x);
  const auto enc = encode(dpbn_net, x);
  // D-PBN: u_1 = lambda(W_0' lambda(x)); AEC: h_1 = lambda(W_0' x). Feed the
  // AEC lambda(x) to line the two up.
  const auto fw2 = aec_forward(aec, enc.trace.tca_out[0]);
  EXPECT_LE((fw2.cache.enc[1] - enc.trace.tca_out[1]).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(fw.cache.enc.size(), 3u);
}

TEST(AecForward, RejectsWrongInput) {
  const AecNetwork net = make_aec({4, 2}, false, 1);
  EXPECT_THROW(aec_forward(net, Vector::Zero(3)), ShapeMismatch);
  EXPECT_THROW(make_aec({2, 4}, false, 1), ShapeMismatch);
}

TEST(AecNetwork, TiedSharesEncoderWeights) {
  AecNetwork net = make_aec({6, 4, 2}, true, 3);
  net.validate();
  std::mt19937_64 rng(3);
  const Vector x = gaussian_batch(rng, 6, 1);
  const Vector before = aec_forward(net, x).x_hat;
  EXPECT_EQ(net.decoder_weight(0), net.W[0]);
  net.W[0](1, 1) += 0.1;
  EXPECT_EQ(net.decoder_weight(0), net.W[0]);
  EXPECT_NE(aec_forward(net, x).x_hat, before);
  net.s[1] = 2.0;
  EXPECT_EQ(net.decoder_weight(1), 2.0 * net.W[1]);
}

TEST(AecNetwork, UntiedHasMoreParameters) {
  const std::vector<Eigen::Index> dims = {784, 64, 32, 16};
  const auto tied = make_aec(dims, true, 1);
  const auto untied = make_aec(dims, false, 1);
  EXPECT_GT(untied.parameter_count(), tied.parameter_count());
  EXPECT_EQ(untied.parameter_count() - tied.parameter_count(), 784 * 64 + 64 * 32 + 32 * 16 - 3);
  EXPECT_EQ(static_cast<Eigen::Index>(aec_flatten(untied).size()), untied.parameter_count());
  EXPECT_EQ(aec_weight_mask(tied).size(), aec_flatten(tied).size());
}

TEST(AecGradients, FiniteDifferenceUntied) {
  AecNetwork net = make_aec({6, 4, 2}, false, 5);
  std::mt19937_64 rng(5);
  randomize(net, rng, 0.3);
  EXPECT_LE(aec_finite_diff_check(net, gaussian_batch(rng, 7, 6), 1e-5), 1e-6);
}

TEST(AecGradients, FiniteDifferenceTied) {
  AecNetwork net = make_aec({6, 4, 2}, true, 6);
  std::mt19937_64 rng(6);
  randomize(net, rng, 0.3);
  EXPECT_LE(aec_finite_diff_check(net, gaussian_batch(rng, 7, 6), 1e-5), 1e-6);
}

TEST(AecGradients, IndependentOfThreadCount) {
  AecNetwork net = make_aec({10, 6, 3}, false, 7);
  std::mt19937_64 rng(7);
  randomize(net, rng, 0.2);
  const Batch X = gaussian_batch(rng, 29, 10);
  setenv("DPBN_THREADS", "1", 1);
  const auto a = aec_flatten(aec_gradients(net, X));
  setenv("DPBN_THREADS", "3", 1);
  const auto b = aec_flatten(aec_gradients(net, X));
  unsetenv("DPBN_THREADS");
  EXPECT_EQ(a, b);
}

TEST(AecTrain, ZeroEpochsUnchanged) {
  AecNetwork net = make_aec({6, 3}, false, 8);
  const auto before = aec_flatten(net);
  std::mt19937_64 rng(8);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto log = aec_train(net, gaussian_batch(rng, 10, 6), gaussian_batch(rng, 5, 6), cfg);
  EXPECT_EQ(log.epochs.size(), 1u);
  EXPECT_EQ(aec_flatten(net), before);
}

TEST(AecTrain, SquareTiedNetLearnsIdentityOnNoise) {
  AecNetwork net = make_aec({4, 4}, true, 9);
  std::mt19937_64 rng(9);
  const Batch train = gaussian_batch(rng, 256, 4);
  const Batch test = gaussian_batch(rng, 64, 4);
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.batch_size = 32;
  cfg.learning_rate = 1e-2;
  const auto log = aec_train(net, train, test, cfg);
  ASSERT_FALSE(log.diverged);
  EXPECT_LT(log.epochs.back().test_mse, 0.1 * log.epochs.front().test_mse);
  EXPECT_LT(log.epochs.back().test_mse, 0.1);
  EXPECT_EQ(log.epochs.back().efficiency, 1.0);
}
