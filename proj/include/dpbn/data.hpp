#pragma once

// MNIST ingestion and preprocessing: IDX parsing, class subsets, dither,
// logit gaussianification, sub-pixel circular shifts and a binary cache.

#include <zlib.h>

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "dpbn/detail/endian.hpp"
#include "dpbn/error.hpp"
#include "dpbn/parallel.hpp"
#include "dpbn/types.hpp"

namespace dpbn {

enum class Stage : std::uint8_t { Raw = 0, Dithered = 1, Gaussianified = 2 };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::Raw: return "raw";
    case Stage::Dithered: return "dithered";
    case Stage::Gaussianified: return "gaussianified";
  }
  return "unknown";
}

struct ImageBatch {
  Batch samples;            // one image per row, row-major pixels
  std::vector<int> labels;  // one per row
  Stage stage = Stage::Raw;
  int height = 28;
  int width = 28;

  Eigen::Index size() const { return samples.rows(); }
};

namespace detail {

class GzFile {
 public:
  explicit GzFile(const std::string& path) : path_(path), f_(gzopen(path.c_str(), "rb")) {
    if (!f_) throw IoError("cannot open " + path);
  }
  ~GzFile() {
    if (f_) gzclose(f_);
  }
  GzFile(const GzFile&) = delete;
  GzFile& operator=(const GzFile&) = delete;

  void read(void* dst, std::size_t n) {
    auto* p = static_cast<unsigned char*>(dst);
    while (n > 0) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
      const int got = gzread(f_, p, chunk);
      if (got < 0) throw IoError("read error in " + path_);
      if (got == 0) throw TruncatedFile(path_ + ": unexpected end of file");
      p += got;
      n -= static_cast<std::size_t>(got);
    }
  }

  std::uint32_t read_be32() {
    unsigned char b[4];
    read(b, 4);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
  }

 private:
  std::string path_;
  gzFile f_;
};

inline constexpr std::uint32_t kIdxImages = 0x00000803;
inline constexpr std::uint32_t kIdxLabels = 0x00000801;

}  // namespace detail

/// Reads an IDX image file (plain or gzip) scaled to [0,1].
inline Batch load_idx_images(const std::string& path, int* height = nullptr, int* width = nullptr) {
  detail::GzFile f(path);
  const std::uint32_t magic = f.read_be32();
  if (magic != detail::kIdxImages) throw BadMagic(path + ": not an IDX image file");
  const std::uint32_t n = f.read_be32(), rows = f.read_be32(), cols = f.read_be32();
  const std::size_t pixels = std::size_t{rows} * cols;
  if (std::size_t{n} * pixels > (std::size_t{1} << 34)) throw DimMismatch(path + ": implausible IDX dimensions");
  std::vector<unsigned char> buf(std::size_t{n} * pixels);
  f.read(buf.data(), buf.size());
  Batch out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(pixels));
  for (std::size_t i = 0; i < buf.size(); ++i) out.data()[i] = buf[i] / 255.0;
  if (height) *height = static_cast<int>(rows);
  if (width) *width = static_cast<int>(cols);
  return out;
}

inline std::vector<int> load_idx_labels(const std::string& path) {
  detail::GzFile f(path);
  if (f.read_be32() != detail::kIdxLabels) throw BadMagic(path + ": not an IDX label file");
  const std::uint32_t n = f.read_be32();
  std::vector<unsigned char> buf(n);
  f.read(buf.data(), buf.size());
  return {buf.begin(), buf.end()};
}

inline ImageBatch load_idx(const std::string& images_path, const std::string& labels_path) {
  ImageBatch b;
  b.samples = load_idx_images(images_path, &b.height, &b.width);
  b.labels = load_idx_labels(labels_path);
  if (static_cast<Eigen::Index>(b.labels.size()) != b.samples.rows()) {
    throw DimMismatch("load_idx: " + std::to_string(b.labels.size()) + " labels for " +
                      std::to_string(b.samples.rows()) + " images");
  }
  b.stage = Stage::Raw;
  return b;
}

inline ImageBatch take_rows(const ImageBatch& b, const std::vector<Eigen::Index>& rows) {
  ImageBatch out;
  out.stage = b.stage;
  out.height = b.height;
  out.width = b.width;
  out.samples.resize(static_cast<Eigen::Index>(rows.size()), b.samples.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.samples.row(static_cast<Eigen::Index>(i)) = b.samples.row(rows[i]);
    out.labels.push_back(b.labels[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

/// Picks `per_class` random rows of each class, keeping corpus order.
/// per_class < 0 keeps every row of the requested classes.
inline ImageBatch select_subset(const ImageBatch& b, const std::vector<int>& classes, int per_class,
                                std::uint64_t seed) {
  std::map<int, std::vector<Eigen::Index>> by_class;
  for (int c : classes) by_class[c];
  for (std::size_t i = 0; i < b.labels.size(); ++i) {
    auto it = by_class.find(b.labels[i]);
    if (it != by_class.end()) it->second.push_back(static_cast<Eigen::Index>(i));
  }
  std::vector<Eigen::Index> chosen;
  for (auto& [label, idx] : by_class) {
    if (per_class < 0) {
      chosen.insert(chosen.end(), idx.begin(), idx.end());
      continue;
    }
    if (static_cast<int>(idx.size()) < per_class) {
      throw InsufficientSamples("select_subset: class " + std::to_string(label) + " has " +
                                std::to_string(idx.size()) + " samples, need " + std::to_string(per_class));
    }
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(label)));
    std::shuffle(idx.begin(), idx.end(), rng);
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + per_class);
  }
  std::sort(chosen.begin(), chosen.end());
  return take_rows(b, chosen);
}

inline constexpr double kDitherClip = 1e-6;

/// Moves every pixel into (0,1) by an Exponential(mean `scale`) amount:
/// down for pixels above 0.5, up otherwise.
inline ImageBatch dither(const ImageBatch& b, double scale, std::uint64_t seed) {
  if (b.stage != Stage::Raw) throw DomainError("dither: expects raw pixels");
  if (!(scale > 0.0)) throw DomainError("dither: scale must be > 0");
  ImageBatch out = b;
  const auto S = static_cast<std::size_t>(b.samples.rows());
  parallel_chunks(S, 64, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      std::mt19937_64 rng(mix_seed(seed, s));
      std::exponential_distribution<double> e(1.0 / scale);
      auto row = out.samples.row(static_cast<Eigen::Index>(s));
      for (Eigen::Index j = 0; j < row.size(); ++j) {
        const double v = row[j];
        const double d = v > 0.5 ? v - e(rng) : v + e(rng);
        row[j] = std::clamp(d, kDitherClip, 1.0 - kDitherClip);
      }
    }
  });
  out.stage = Stage::Dithered;
  return out;
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Element-wise logit of dithered pixels.
inline ImageBatch gaussianify(const ImageBatch& b) {
  if (b.stage != Stage::Dithered) throw DomainError("gaussianify: expects dithered pixels");
  ImageBatch out = b;
  for (Eigen::Index i = 0; i < out.samples.size(); ++i) {
    double& v = out.samples.data()[i];
    if (!(v > 0.0 && v < 1.0)) throw DomainError("gaussianify: value " + std::to_string(v) + " outside (0,1)");
    v = logit(v);
  }
  out.stage = Stage::Gaussianified;
  return out;
}

/// Element-wise sigmoid; maps gaussianified data back to pixel values.
inline Batch degaussianify(const Batch& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

namespace detail {

// Phase factor e^{-2 pi i k d / n} for frequency bin k. The Nyquist bin of an
// even-length axis uses the nearest integer shift, which keeps the spectrum
// Hermitian (real output) and every factor unit-modulus (energy preserved).
inline std::vector<std::complex<double>> shift_phases(int n, double d) {
  std::vector<std::complex<double>> ph(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    if (2 * k == n) {
      ph[static_cast<std::size_t>(k)] = std::lround(d) % 2 == 0 ? 1.0 : -1.0;
      continue;
    }
    const int f = 2 * k < n ? k : k - n;
    const double angle = -2.0 * std::numbers::pi * f * d / n;
    ph[static_cast<std::size_t>(k)] = {std::cos(angle), std::sin(angle)};
  }
  return ph;
}

}  // namespace detail

/// Circularly shifts a row-major height x width image by (dv, dh) pixels
/// (down, right) through the 2-D DFT.
inline std::vector<double> fft_shift_image(std::span<const double> img, int height, int width, double dv, double dh) {
  if (static_cast<int>(img.size()) != height * width) throw ShapeMismatch("fft_shift_image: size mismatch");
  using C = std::complex<double>;
  Eigen::FFT<double> fft;
  const auto H = static_cast<std::size_t>(height), Wd = static_cast<std::size_t>(width);
  std::vector<C> grid(img.begin(), img.end()), in, out;

  // Forward along rows, then columns.
  auto transform_rows = [&](bool forward) {
    in.resize(Wd);
    for (std::size_t r = 0; r < H; ++r) {
      std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(r * Wd), Wd, in.begin());
      forward ? fft.fwd(out, in) : fft.inv(out, in);
      std::copy(out.begin(), out.end(), grid.begin() + static_cast<std::ptrdiff_t>(r * Wd));
    }
  };
  auto transform_cols = [&](bool forward) {
    in.resize(H);
    for (std::size_t c = 0; c < Wd; ++c) {
      for (std::size_t r = 0; r < H; ++r) in[r] = grid[r * Wd + c];
      forward ? fft.fwd(out, in) : fft.inv(out, in);
      for (std::size_t r = 0; r < H; ++r) grid[r * Wd + c] = out[r];
    }
  };
  transform_rows(true);
  transform_cols(true);
  const auto pv = detail::shift_phases(height, dv), ph = detail::shift_phases(width, dh);
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < Wd; ++c) grid[r * Wd + c] *= pv[r] * ph[c];
  transform_cols(false);
  transform_rows(false);

  std::vector<double> result(H * Wd);
  for (std::size_t i = 0; i < result.size(); ++i) result[i] = grid[i].real();
  return result;
}

/// Shifts each image by its own (dv, dh) drawn uniformly from
/// [-max_shift, max_shift]^2.
inline Batch fft_shift_augment(const Batch& X, int height, int width, double max_shift, std::uint64_t seed) {
  if (X.cols() != Eigen::Index{height} * width) throw ShapeMismatch("fft_shift_augment: image size mismatch");
  Batch out(X.rows(), X.cols());
  parallel_chunks(static_cast<std::size_t>(X.rows()), 16, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      std::mt19937_64 rng(mix_seed(seed, s));
      std::uniform_real_distribution<double> u(-max_shift, max_shift);
      const double dv = u(rng), dh = u(rng);
      const auto i = static_cast<Eigen::Index>(s);
      const Vector row = X.row(i).transpose();
      const auto shifted = fft_shift_image(std::span(row.data(), static_cast<std::size_t>(row.size())), height,
                                           width, dv, dh);
      out.row(i) = Eigen::Map<const Eigen::RowVectorXd>(shifted.data(), X.cols());
    }
  });
  return out;
}

inline ImageBatch fft_shift_augment(const ImageBatch& b, double max_shift, std::uint64_t seed) {
  ImageBatch out = b;
  out.samples = fft_shift_augment(b.samples, b.height, b.width, max_shift, seed);
  return out;
}

// Binary cache: "DPBD", u16 version, u8 stage, u64 rows, u64 cols, u32 height,
// u32 width, rows*cols f64 payload, rows i32 labels; all little-endian.

inline constexpr std::uint16_t kCacheVersion = 1;

inline void write_cache(const std::string& path, const ImageBatch& b) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write("DPBD", 4);
  detail::put_le<std::uint16_t>(out, kCacheVersion);
  detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(b.stage));
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(b.samples.rows()));
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(b.samples.cols()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(b.height));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(b.width));
  for (Eigen::Index i = 0; i < b.samples.size(); ++i) detail::put_le<double>(out, b.samples.data()[i]);
  for (int l : b.labels) detail::put_le<std::int32_t>(out, l);
  if (!out) throw IoError("write failed for " + path);
}

inline ImageBatch read_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4] = {};
  if (!in.read(magic, 4)) throw TruncatedFile(path + ": unexpected end of file");
  if (std::memcmp(magic, "DPBD", 4) != 0) throw BadMagic(path + ": not a DPBD cache");
  const auto version = detail::get_le<std::uint16_t>(in, path);
  if (version != kCacheVersion) throw BadMagic(path + ": unsupported cache version " + std::to_string(version));
  ImageBatch b;
  const auto stage = detail::get_le<std::uint8_t>(in, path);
  if (stage > 2) throw BadMagic(path + ": bad stage tag");
  b.stage = static_cast<Stage>(stage);
  const auto rows = detail::get_le<std::uint64_t>(in, path);
  const auto cols = detail::get_le<std::uint64_t>(in, path);
  b.height = static_cast<int>(detail::get_le<std::uint32_t>(in, path));
  b.width = static_cast<int>(detail::get_le<std::uint32_t>(in, path));
  if (cols != std::uint64_t(b.height) * std::uint64_t(b.width)) throw DimMismatch(path + ": image dims disagree");
  b.samples.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < b.samples.size(); ++i) b.samples.data()[i] = detail::get_le<double>(in, path);
  b.labels.resize(rows);
  for (auto& l : b.labels) l = detail::get_le<std::int32_t>(in, path);
  return b;
}

}  // namespace dpbn
