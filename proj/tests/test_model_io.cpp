#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "dpbn/model_io.hpp"
#include "support.hpp"

using namespace dpbn;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dpbn_model_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return (dir / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream(path, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Crc32, CheckValue) {
  // Standard CRC-32 check value for the ASCII digits 1..9.
  EXPECT_EQ(detail::crc32_of("123456789"), 0xCBF43926u);
  EXPECT_EQ(detail::crc32_of(""), 0u);
}

TEST(ModelFile, DpbnRoundTripIsBitExact) {
  auto net = dpbn::testing::canonical_net(3);
  std::mt19937_64 rng(3);
  dpbn::testing::jitter_tcas(net, rng);
  const auto path = temp_path("canonical.dpbn");
  save_model(path, net);
  const auto back = load_model(path);
  EXPECT_EQ(flatten_parameters(back), flatten_parameters(net));
  ASSERT_EQ(back.layers.size(), net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    EXPECT_EQ(back.layers[l].kind(), net.layers[l].kind());
    EXPECT_EQ(back.layers[l].input_tca.components(), net.layers[l].input_tca.components());
    EXPECT_EQ(back.layers[l].W, net.layers[l].W);
  }
  save_model(temp_path("again.dpbn"), back);
  EXPECT_EQ(slurp(temp_path("again.dpbn")), slurp(path));
}

TEST(ModelFile, DpbnLayout) {
  NetworkShape shape;
  shape.dims = {4, 2};
  shape.components = {2};
  shape.input_base = MaxEntKind::TruncExpon;
  shape.shared_tca = true;
  const auto net = make_network(shape, 1);
  const auto path = temp_path("small.dpbn");
  save_model(path, net);
  const std::string bytes = slurp(path);
  // magic, version, L, 2 dims, (kind, K, shared), allow_square, P, 8+6 doubles, crc
  ASSERT_EQ(bytes.size(), 5u + 2 + 4 + 16 + 6 + 1 + 8 + 14 * 8 + 4);
  EXPECT_EQ(bytes.substr(0, 5), "DPBN1");
  EXPECT_EQ(bytes[5], 1);
  EXPECT_EQ(bytes[6], 0);
  EXPECT_EQ(bytes[7], 1);    // L
  EXPECT_EQ(bytes[11], 4);   // input dim
  EXPECT_EQ(bytes[19], 2);   // bottleneck
  EXPECT_EQ(bytes[27], 2);   // kind
  EXPECT_EQ(bytes[28], 2);   // K
  EXPECT_EQ(bytes[32], 1);   // shared
  EXPECT_EQ(bytes[34], 14);  // P
  double w00 = 0;
  std::memcpy(&w00, bytes.data() + 42, 8);
  EXPECT_EQ(w00, net.layers[0].W(0, 0));
  const auto back = load_model(path);
  EXPECT_TRUE(back.layers[0].input_tca.shared());
  EXPECT_EQ(back.layers[0].kind(), MaxEntKind::TruncExpon);
}

TEST(ModelFile, DetectsCorruption) {
  const auto net = dpbn::testing::canonical_net(4);
  const auto path = temp_path("corrupt.dpbn");
  save_model(path, net);
  const std::string good = slurp(path);

  std::string flipped = good;
  flipped[good.size() / 2] ^= 0x01;
  spit(path, flipped);
  EXPECT_THROW(load_model(path), ChecksumMismatch);

  std::string crc = good;
  crc.back() ^= 0x10;
  spit(path, crc);
  EXPECT_THROW(load_model(path), ChecksumMismatch);

  std::string magic = good;
  magic[0] = 'X';
  spit(path, magic);
  EXPECT_THROW(load_model(path), BadMagic);
  EXPECT_THROW(load_any_model(path), BadMagic);

  spit(path, good.substr(0, 3));
  EXPECT_THROW(load_model(path), TruncatedFile);
  spit(path, good.substr(0, good.size() - 9));
  EXPECT_THROW(load_model(path), ChecksumMismatch);

  EXPECT_THROW(load_model(temp_path("absent.dpbn")), IoError);
}

TEST(ModelFile, AecRoundTrip) {
  for (bool tied : {false, true}) {
    auto net = make_aec({10, 6, 3}, tied, 5);
    auto theta = aec_flatten(net);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    for (auto& t : theta) t += g(rng);
    aec_unflatten(net, theta);
    const auto path = temp_path(tied ? "tied.dpae" : "untied.dpae");
    save_model(path, net);
    EXPECT_EQ(slurp(path).substr(0, 5), "DPAE1");
    const auto back = load_aec_model(path);
    EXPECT_EQ(back.tied, tied);
    EXPECT_EQ(aec_flatten(back), theta);
    EXPECT_THROW(load_model(path), BadMagic);
    EXPECT_TRUE(std::holds_alternative<AecNetwork>(load_any_model(path)));
  }
}

TEST(ModelFile, AnyModelDispatch) {
  const auto path = temp_path("any.dpbn");
  save_model(path, dpbn::testing::canonical_net(6));
  const auto m = load_any_model(path);
  ASSERT_TRUE(std::holds_alternative<DpbnNetwork>(m));
  EXPECT_EQ(std::get<DpbnNetwork>(m).input_dim(), 12);
  EXPECT_THROW(load_aec_model(path), BadMagic);
}
