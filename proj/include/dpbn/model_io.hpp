#pragma once

// Model files.
//
// D-PBN ("DPBN1"):
//   magic[5] u16 version
//   u32 L, u64 dims[L+1]
//   per layer: u8 kind, u32 K, u8 shared
//   u8 allow_square
//   u64 P, f64 params[P] in flatten_parameters order
//   u32 CRC-32
//
// Baseline auto-encoder ("DPAE1"):
//   magic[5] u16 version
//   u32 L, u64 dims[L+1], u8 tied
//   u64 P, f64 params[P] in aec_flatten order
//   u32 CRC-32
//
// All integers and floats little-endian. The CRC covers every byte before it,
// magic included.

#include <zlib.h>

#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "dpbn/baseline.hpp"
#include "dpbn/detail/endian.hpp"
#include "dpbn/error.hpp"
#include "dpbn/network.hpp"
#include "dpbn/training.hpp"

namespace dpbn {

inline constexpr std::uint16_t kModelVersion = 1;
inline constexpr char kDpbnMagic[5] = {'D', 'P', 'B', 'N', '1'};
inline constexpr char kAecMagic[5] = {'D', 'P', 'A', 'E', '1'};

namespace detail {

inline std::uint32_t crc32_of(const std::string& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + done), n);
    done += n;
  }
  return static_cast<std::uint32_t>(crc);
}

inline void write_sealed(const std::string& path, std::string body) {
  std::ostringstream tail;
  put_le<std::uint32_t>(tail, crc32_of(body));
  body += tail.str();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw IoError("write failed for " + path);
}

/// Reads a file, checks magic, version and CRC; returns a stream positioned
/// after the version field.
inline std::istringstream open_sealed(const std::string& path, const char (&magic)[5]) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 5) throw TruncatedFile(path + ": unexpected end of file");
  if (bytes.compare(0, 5, magic, 5) != 0) throw BadMagic(path + ": wrong magic");
  if (bytes.size() < 5 + 2 + 4) throw TruncatedFile(path + ": unexpected end of file");
  std::istringstream trailer(bytes.substr(bytes.size() - 4));
  const auto stored = get_le<std::uint32_t>(trailer, path);
  bytes.resize(bytes.size() - 4);
  if (crc32_of(bytes) != stored) throw ChecksumMismatch(path + ": checksum mismatch");
  std::istringstream body(bytes.substr(5));
  const auto version = get_le<std::uint16_t>(body, path);
  if (version != kModelVersion) throw BadMagic(path + ": unsupported version " + std::to_string(version));
  return body;
}

inline std::vector<Eigen::Index> read_dims(std::istream& in, const std::string& path) {
  const auto L = get_le<std::uint32_t>(in, path);
  if (L == 0 || L > 1024) throw DimMismatch(path + ": bad layer count");
  std::vector<Eigen::Index> dims(L + 1);
  for (auto& d : dims) {
    const auto v = get_le<std::uint64_t>(in, path);
    if (v == 0 || v > (1u << 24)) throw DimMismatch(path + ": bad layer width");
    d = static_cast<Eigen::Index>(v);
  }
  return dims;
}

inline std::vector<double> read_params(std::istream& in, const std::string& path, Eigen::Index expected) {
  const auto P = get_le<std::uint64_t>(in, path);
  if (P != static_cast<std::uint64_t>(expected)) {
    throw DimMismatch(path + ": parameter count " + std::to_string(P) + " does not match the architecture (" +
                      std::to_string(expected) + ")");
  }
  std::vector<double> theta(P);
  for (auto& t : theta) t = get_le<double>(in, path);
  if (in.peek() != std::char_traits<char>::eof()) throw DimMismatch(path + ": trailing bytes");
  return theta;
}

inline void write_params(std::ostream& out, const std::vector<double>& theta) {
  put_le<std::uint64_t>(out, theta.size());
  for (double t : theta) put_le<double>(out, t);
}

}  // namespace detail

inline void save_model(const std::string& path, const DpbnNetwork& net) {
  net.validate();
  std::ostringstream out;
  out.write(kDpbnMagic, 5);
  detail::put_le<std::uint16_t>(out, kModelVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers.size()));
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(net.input_dim()));
  for (const auto& l : net.layers) detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(l.out_dim()));
  for (const auto& l : net.layers) {
    detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(l.kind()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.input_tca.components()));
    detail::put_le<std::uint8_t>(out, l.input_tca.shared() ? 1 : 0);
  }
  detail::put_le<std::uint8_t>(out, net.allow_square ? 1 : 0);
  detail::write_params(out, flatten_parameters(net));
  detail::write_sealed(path, out.str());
}

inline DpbnNetwork load_model(const std::string& path) {
  auto in = detail::open_sealed(path, kDpbnMagic);
  const auto dims = detail::read_dims(in, path);
  DpbnNetwork net;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto kind = detail::get_le<std::uint8_t>(in, path);
    if (kind > 2) throw BadMagic(path + ": bad activation kind");
    const auto K = detail::get_le<std::uint32_t>(in, path);
    if (K < 1 || K > detail::kMaxComponents) throw DimMismatch(path + ": bad TCA component count");
    const bool shared = detail::get_le<std::uint8_t>(in, path) != 0;
    net.layers.push_back({Matrix::Zero(dims[l], dims[l + 1]),
                          TcaBank(static_cast<MaxEntKind>(kind), dims[l], static_cast<Eigen::Index>(K), shared)});
  }
  net.allow_square = detail::get_le<std::uint8_t>(in, path) != 0;
  try {
    net.validate();
  } catch (const ShapeMismatch& e) {
    throw DimMismatch(path + ": " + e.what());
  }
  unflatten_parameters(net, detail::read_params(in, path, net.parameter_count()));
  return net;
}

inline void save_model(const std::string& path, const AecNetwork& net) {
  net.validate();
  std::ostringstream out;
  out.write(kAecMagic, 5);
  detail::put_le<std::uint16_t>(out, kModelVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.depth()));
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(net.input_dim()));
  for (const auto& W : net.W) detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(W.cols()));
  detail::put_le<std::uint8_t>(out, net.tied ? 1 : 0);
  detail::write_params(out, aec_flatten(net));
  detail::write_sealed(path, out.str());
}

inline AecNetwork load_aec_model(const std::string& path) {
  auto in = detail::open_sealed(path, kAecMagic);
  const auto dims = detail::read_dims(in, path);
  const bool tied = detail::get_le<std::uint8_t>(in, path) != 0;
  AecNetwork net;
  try {
    net = make_aec(dims, tied, 0);
  } catch (const ShapeMismatch& e) {
    throw DimMismatch(path + ": " + e.what());
  }
  aec_unflatten(net, detail::read_params(in, path, net.parameter_count()));
  return net;
}

using AnyModel = std::variant<DpbnNetwork, AecNetwork>;

/// Loads either model kind, dispatching on the magic.
inline AnyModel load_any_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[5] = {};
  if (!in.read(magic, 5)) throw TruncatedFile(path + ": unexpected end of file");
  if (std::equal(magic, magic + 5, kDpbnMagic)) return load_model(path);
  if (std::equal(magic, magic + 5, kAecMagic)) return load_aec_model(path);
  throw BadMagic(path + ": not a model file");
}

}  // namespace dpbn
