#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "kpac/error.hpp"

namespace kpac {

/// H x W x C raster, samples nominally in [0,1], stored row-major as
/// (row, column, channel).
class Image {
 public:
  Image() = default;

  Image(int height, int width, int channels, double fill = 0.0)
      : height_(height), width_(width), channels_(channels) {
    if (height < 1 || width < 1 || (channels != 1 && channels != 3)) {
      throw Error(ErrorCode::shape_mismatch, "image dimensions must be >= 1 with 1 or 3 channels");
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  Image(int height, int width, int channels, std::vector<double> data)
      : Image(height, width, channels) {
    if (data.size() != data_.size()) {
      throw Error(ErrorCode::shape_mismatch, "sample count does not match dimensions");
    }
    data_ = std::move(data);
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& at(int row, int col, int ch) { return data_[index(row, col, ch)]; }
  double at(int row, int col, int ch) const { return data_[index(row, col, ch)]; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool same_shape(const Image& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int row, int col, int ch) const noexcept {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Real 2-D array. Kernels placed on an image-sized grid use the wrapped
/// convention: the center tap sits at (0,0) and negative offsets wrap to the
/// far edges.
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, double fill = 0.0) : height_(height), width_(width) {
    if (height < 1 || width < 1) throw Error(ErrorCode::shape_mismatch, "grid must be nonempty");
    data_.assign(static_cast<std::size_t>(height) * width, fill);
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& at(int row, int col) { return data_[static_cast<std::size_t>(row) * width_ + col]; }
  double at(int row, int col) const { return data_[static_cast<std::size_t>(row) * width_ + col]; }

  /// Access by signed offset from the origin, wrapping circularly.
  double& wrapped(int dy, int dx) { return at(wrap(dy, height_), wrap(dx, width_)); }
  double wrapped(int dy, int dx) const { return at(wrap(dy, height_), wrap(dx, width_)); }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  double sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

  static int wrap(int i, int n) noexcept { return ((i % n) + n) % n; }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Signed offset represented by index i of a length-n origin-centered axis,
/// in the range [-floor(n/2), ceil(n/2) - 1].
inline int centered_offset(int i, int n) noexcept { return i < (n + 1) / 2 ? i : i - n; }

/// Odd-sized square filter with its center tap at ((K-1)/2, (K-1)/2).
class Kernel {
 public:
  Kernel() = default;

  explicit Kernel(int size, double fill = 0.0) : size_(size) {
    if (size < 1 || size % 2 == 0) {
      throw Error(ErrorCode::size_too_small, "kernel size must be odd and >= 1");
    }
    taps_.assign(static_cast<std::size_t>(size) * size, fill);
  }

  Kernel(int size, std::vector<double> taps) : Kernel(size) {
    if (taps.size() != taps_.size()) throw Error(ErrorCode::shape_mismatch, "tap count != size^2");
    taps_ = std::move(taps);
  }

  static Kernel delta(int size) {
    Kernel k(size);
    k.at(size / 2, size / 2) = 1.0;
    return k;
  }

  int size() const noexcept { return size_; }
  int radius() const noexcept { return size_ / 2; }

  double& at(int row, int col) { return taps_[static_cast<std::size_t>(row) * size_ + col]; }
  double at(int row, int col) const { return taps_[static_cast<std::size_t>(row) * size_ + col]; }

  std::vector<double>& taps() noexcept { return taps_; }
  const std::vector<double>& taps() const noexcept { return taps_; }

  double sum() const {
    double s = 0.0;
    for (double v : taps_) s += v;
    return s;
  }

  friend bool operator==(const Kernel&, const Kernel&) = default;

 private:
  int size_ = 0;
  std::vector<double> taps_;
};

struct Metric {
  std::string name;
  double value = 0.0;
};

inline void require_same_shape(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw Error(ErrorCode::shape_mismatch, "images differ in shape");
}

/// Peak signal-to-noise ratio with peak 1.0; identical images give +inf.
inline Metric psnr(const Image& a, const Image& b) {
  require_same_shape(a, b);
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    sse += d * d;
  }
  if (sse == 0.0) return {"psnr_db", std::numeric_limits<double>::infinity()};
  const double mse = sse / static_cast<double>(a.size());
  return {"psnr_db", 10.0 * std::log10(1.0 / mse)};
}

inline Metric mae(const Image& a, const Image& b) {
  require_same_shape(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.data()[i] - b.data()[i]);
  return {"mae", s / static_cast<double>(a.size())};
}

inline Kernel normalize_kernel(Kernel k) {
  const double s = k.sum();
  if (s == 0.0 || !std::isfinite(s)) throw Error(ErrorCode::zero_sum_kernel, "cannot normalize");
  for (double& t : k.taps()) t /= s;
  return k;
}

enum class KernelKind { disc, gaussian };

inline int min_kernel_size(KernelKind kind, double param) {
  if (kind == KernelKind::disc) return 2 * static_cast<int>(std::ceil(param)) + 1;
  int n = static_cast<int>(std::ceil(6.0 * param - 1e-9));
  if (n < 1) n = 1;
  return n % 2 == 0 ? n + 1 : n;
}

/// Normalized disc (antialiased by 16x16 subpixel coverage) or sampled
/// Gaussian point spread function.
inline Kernel make_kernel(KernelKind kind, double param, int size) {
  if (!(param > 0.0) || !std::isfinite(param)) {
    throw Error(ErrorCode::nonpositive_param, "kernel parameter must be > 0");
  }
  if (size < 1 || size % 2 == 0 || size < min_kernel_size(kind, param)) {
    throw Error(ErrorCode::size_too_small, "kernel size cannot hold the support");
  }
  Kernel k(size);
  const int c = size / 2;
  if (kind == KernelKind::gaussian) {
    const double inv = 1.0 / (2.0 * param * param);
    for (int r = 0; r < size; ++r) {
      for (int q = 0; q < size; ++q) {
        const double dy = r - c;
        const double dx = q - c;
        k.at(r, q) = std::exp(-(dx * dx + dy * dy) * inv);
      }
    }
  } else {
    constexpr int sub = 16;
    const double r2 = param * param;
    for (int r = 0; r < size; ++r) {
      for (int q = 0; q < size; ++q) {
        int inside = 0;
        for (int i = 0; i < sub; ++i) {
          const double y = (r - c) - 0.5 + (i + 0.5) / sub;
          for (int j = 0; j < sub; ++j) {
            const double x = (q - c) - 0.5 + (j + 0.5) / sub;
            if (x * x + y * y <= r2) ++inside;
          }
        }
        k.at(r, q) = static_cast<double>(inside) / (sub * sub);
      }
    }
  }
  return normalize_kernel(std::move(k));
}

inline KernelKind parse_kernel_kind(const std::string& s) {
  if (s == "disc") return KernelKind::disc;
  if (s == "gaussian") return KernelKind::gaussian;
  throw Error(ErrorCode::invalid_config, "unknown kernel kind '" + s + "'");
}

}  // namespace kpac
