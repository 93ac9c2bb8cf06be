#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <mutex>
#include <numbers>
#include <utility>
#include <vector>

#include "kpac/error.hpp"
#include "kpac/image.hpp"

namespace kpac {

using complex = std::complex<double>;

/// Complex H x W frequency array, row-major, DC at (0,0).
class Spectrum {
 public:
  Spectrum() = default;
  Spectrum(int height, int width) : height_(height), width_(width) {
    if (height < 1 || width < 1) throw Error(ErrorCode::shape_mismatch, "spectrum must be nonempty");
    data_.assign(static_cast<std::size_t>(height) * width, complex{});
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }

  complex& at(int row, int col) { return data_[static_cast<std::size_t>(row) * width_ + col]; }
  complex at(int row, int col) const { return data_[static_cast<std::size_t>(row) * width_ + col]; }

  std::vector<complex>& data() noexcept { return data_; }
  const std::vector<complex>& data() const noexcept { return data_; }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<complex> data_;
};

/// Rational scale factor s = numerator / denominator, s >= 1.
struct ScaleFactor {
  std::int64_t numerator = 1;
  std::int64_t denominator = 1;

  static ScaleFactor integer(std::int64_t s) { return {s, 1}; }

  /// Approximates a decimal value by a fraction with denominator up to 1000.
  static ScaleFactor from_real(double s) {
    if (!(s > 0.0) || !std::isfinite(s)) throw Error(ErrorCode::invalid_scale, "scale must be > 0");
    const std::int64_t den = 1000;
    std::int64_t num = std::llround(s * den);
    std::int64_t a = num;
    std::int64_t b = den;
    while (b != 0) std::swap(a %= b, b);
    return {num / a, den / a};
  }

  double value() const noexcept {
    return static_cast<double>(numerator) / static_cast<double>(denominator);
  }
  bool is_integer() const noexcept { return numerator % denominator == 0; }

  /// round(s * n), rounding half away from zero.
  int target(int n) const {
    // floor(s*n + 1/2) == floor((2*num*n + den) / (2*den)) in exact integers
    return static_cast<int>((2 * numerator * n + denominator) / (2 * denominator));
  }

  double effective(int n) const { return static_cast<double>(target(n)) / n; }
};

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// The FFTW planner is not reentrant; execution with a private plan is.
inline void fft2_inplace(std::vector<complex>& data, int height, int width, int sign) {
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan = fftw_plan_dft_2d(height, width, buf, buf, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::lock_guard<std::mutex> lock(fftw_planner_mutex());
  fftw_destroy_plan(plan);
}

}  // namespace detail

/// Unnormalized forward DFT.
inline Spectrum dft2(const Grid& x) {
  Spectrum out(x.height(), x.width());
  std::transform(x.data().begin(), x.data().end(), out.data().begin(),
                 [](double v) { return complex(v, 0.0); });
  detail::fft2_inplace(out.data(), out.height(), out.width(), FFTW_FORWARD);
  return out;
}

/// Inverse DFT with 1/(H*W) normalization, keeping the complex result.
inline Spectrum idft2_complex(Spectrum X) {
  detail::fft2_inplace(X.data(), X.height(), X.width(), FFTW_BACKWARD);
  const double inv = 1.0 / static_cast<double>(X.size());
  for (complex& c : X.data()) c *= inv;
  return X;
}

/// Inverse DFT of a spectrum that should correspond to a real signal. Throws
/// when the imaginary residue exceeds 1e-8 (relative to the signal's scale).
inline Grid idft2(Spectrum X) {
  const int h = X.height();
  const int w = X.width();
  Spectrum z = idft2_complex(std::move(X));
  Grid out(h, w);
  double max_real = 0.0;
  double max_imag = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out.data()[i] = z.data()[i].real();
    max_real = std::max(max_real, std::abs(z.data()[i].real()));
    max_imag = std::max(max_imag, std::abs(z.data()[i].imag()));
  }
  if (max_imag > 1e-8 * std::max(1.0, max_real)) {
    throw Error(ErrorCode::non_real_spectrum, "imaginary residue " + std::to_string(max_imag));
  }
  return out;
}

/// Re-wraps an origin-centered grid onto an h x w grid. Offsets that do not
/// exist in the target are dropped; missing ones are zero-filled.
inline Grid rewrap(const Grid& src, int h, int w) {
  Grid out(h, w);
  for (int r = 0; r < src.height(); ++r) {
    const int dy = centered_offset(r, src.height());
    if (dy < -(h / 2) || dy > (h + 1) / 2 - 1) continue;
    for (int c = 0; c < src.width(); ++c) {
      const int dx = centered_offset(c, src.width());
      if (dx < -(w / 2) || dx > (w + 1) / 2 - 1) continue;
      out.wrapped(dy, dx) = src.at(r, c);
    }
  }
  return out;
}

/// Places a kernel on an h x w grid with its center tap at (0,0).
inline Grid embed_kernel(const Kernel& k, int h, int w) {
  if (k.size() > std::min(h, w)) {
    throw Error(ErrorCode::kernel_larger_than_grid, "kernel does not fit the grid");
  }
  Grid out(h, w);
  const int c = k.radius();
  for (int r = 0; r < k.size(); ++r) {
    for (int q = 0; q < k.size(); ++q) out.wrapped(r - c, q - c) = k.at(r, q);
  }
  return out;
}

/// Extracts the central size x size window of an origin-centered grid.
inline Kernel crop_kernel(const Grid& g, int size) {
  if (size > std::min(g.height(), g.width())) {
    throw Error(ErrorCode::kernel_larger_than_grid, "crop window exceeds the grid");
  }
  Kernel k(size);
  const int c = size / 2;
  for (int r = 0; r < size; ++r) {
    for (int q = 0; q < size; ++q) k.at(r, q) = g.wrapped(r - c, q - c);
  }
  return k;
}

namespace detail {

// Target placements of each source frequency bin along one axis. An even
// source length has its Nyquist bin split in half between +n/2 and -n/2.
inline std::vector<std::vector<std::pair<int, double>>> band_placement(int n, int target) {
  std::vector<std::vector<std::pair<int, double>>> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int f = centered_offset(i, n);
    if (target == n) {
      out[i].emplace_back(i, 1.0);
    } else if (n % 2 == 0 && f == -n / 2) {
      out[i].emplace_back(Grid::wrap(-n / 2, target), 0.5);
      out[i].emplace_back(n / 2, 0.5);
    } else {
      out[i].emplace_back(Grid::wrap(f, target), 1.0);
    }
  }
  return out;
}

}  // namespace detail

/// Zero-pads a spectrum to (round(s*H), round(s*W)), copying the centered
/// band and leaving the bins themselves unscaled (DC preserved).
inline Spectrum zero_pad_upsample(const Spectrum& X, ScaleFactor s) {
  if (s.numerator < 1 || s.denominator < 1) throw Error(ErrorCode::invalid_scale, "bad scale");
  if (s.value() < 1.0) throw Error(ErrorCode::downscale_requested, "scale factor below 1");
  const int th = s.target(X.height());
  const int tw = s.target(X.width());
  Spectrum out(th, tw);
  const auto rows = detail::band_placement(X.height(), th);
  const auto cols = detail::band_placement(X.width(), tw);
  for (int r = 0; r < X.height(); ++r) {
    for (int c = 0; c < X.width(); ++c) {
      const complex v = X.at(r, c);
      for (const auto& [tr, fr] : rows[r]) {
        for (const auto& [tc, fc] : cols[c]) out.at(tr, tc) += v * (fr * fc);
      }
    }
  }
  return out;
}

/// Wiener pseudo-inverse of an origin-centered kernel grid:
/// F^-1( conj(F(k)) / (|F(k)|^2 + eps) ).
inline Grid wiener_inverse(const Grid& kernel_grid, double eps) {
  if (!(eps >= 0.0)) throw Error(ErrorCode::nonpositive_param, "eps must be >= 0");
  Spectrum K = dft2(kernel_grid);
  if (eps == 0.0) {
    for (const complex& c : K.data()) {
      if (std::abs(c) <= 1e-12) throw Error(ErrorCode::singular_spectrum, "|F(k)| vanishes");
    }
  }
  for (complex& c : K.data()) c = std::conj(c) / (std::norm(c) + eps);
  return idft2(std::move(K));
}

inline Grid wiener_inverse_kernel(const Kernel& k, double eps, int h, int w) {
  return wiener_inverse(embed_kernel(k, h, w), eps);
}

/// Sinc (zero-padding) upsampling of an origin-centered inverse kernel grid,
/// returning 1/s^2 * (kdag upsampled by s). Interpolation grows the total mass
/// by ry*rx and the 1/s^2 factor removes it again, so the net operation is the
/// inverse transform of the zero-padded band with the inverse DFT's own
/// normalization.
inline Grid upsample_inverse_kernel(const Grid& kdag, ScaleFactor s) {
  return idft2(zero_pad_upsample(dft2(kdag), s));
}

/// Same band-limited interpolation applied to a blur kernel grid: returns
/// 1/s^2 * (k upsampled by s), which keeps the kernel's sum.
inline Grid upsample_kernel_grid(const Grid& k, ScaleFactor s) {
  return upsample_inverse_kernel(k, s);
}

/// Spreads taps by `rate` with zeros between; no renormalization.
inline Kernel dilate_kernel(const Kernel& k, int rate) {
  if (rate < 1) throw Error(ErrorCode::invalid_scale, "dilation rate must be >= 1");
  Kernel out(rate * (k.size() - 1) + 1);
  for (int r = 0; r < k.size(); ++r) {
    for (int c = 0; c < k.size(); ++c) out.at(rate * r, rate * c) = k.at(r, c);
  }
  return out;
}

namespace detail {

inline double lanczos(double t, int a) {
  if (t == 0.0) return 1.0;
  if (std::abs(t) >= a) return 0.0;
  const double pt = std::numbers::pi * t;
  return a * std::sin(pt) * std::sin(pt / a) / (pt * pt);
}

}  // namespace detail

/// Separable Lanczos-a interpolation of a kernel to odd size round(s*K)
/// (bumped to the next odd value when even). Center stays aligned with center.
inline Kernel lanczos_resample(const Kernel& k, double s, int window = 3) {
  if (!(s > 0.0)) throw Error(ErrorCode::invalid_scale, "scale must be > 0");
  if (window < 2) throw Error(ErrorCode::invalid_config, "Lanczos window must be >= 2");
  int m = static_cast<int>(std::floor(s * k.size() + 0.5));
  if (m < 1) m = 1;
  if (m % 2 == 0) ++m;
  const int n = k.size();
  const int cin = n / 2;
  const int cout = m / 2;

  // weights[o][i]: contribution of input index i to output index o
  std::vector<double> weights(static_cast<std::size_t>(m) * n);
  for (int o = 0; o < m; ++o) {
    const double x = (o - cout) / s;
    for (int i = 0; i < n; ++i) weights[o * n + i] = detail::lanczos(x - (i - cin), window);
  }

  std::vector<double> tmp(static_cast<std::size_t>(n) * m, 0.0);  // n rows x m cols
  for (int r = 0; r < n; ++r) {
    for (int o = 0; o < m; ++o) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += weights[o * n + i] * k.at(r, i);
      tmp[r * m + o] = acc;
    }
  }
  Kernel out(m);
  for (int o = 0; o < m; ++o) {
    for (int c = 0; c < m; ++c) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += weights[o * n + i] * tmp[i * m + c];
      out.at(o, c) = acc;
    }
  }
  return out;
}

}  // namespace kpac
