#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "kpac/error.hpp"

namespace kpac::nn {

/// Dense 4-D array in (N, H, W, C) row-major order. Convolution taps reuse the
/// same container with shape (kh, kw, in_c, out_c); biases are (1, 1, 1, c).
class Tensor {
 public:
  using Shape = std::array<int, 4>;

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0) : shape_(shape) {
    for (int d : shape) {
      if (d < 1) throw Error(ErrorCode::shape_mismatch, "tensor dims must be >= 1");
    }
    data_.assign(count(shape), fill);
  }
  Tensor(int n, int h, int w, int c, double fill = 0.0) : Tensor(Shape{n, h, w, c}, fill) {}

  static std::size_t count(const Shape& s) {
    return static_cast<std::size_t>(s[0]) * s[1] * s[2] * s[3];
  }

  const Shape& shape() const noexcept { return shape_; }
  int n() const noexcept { return shape_[0]; }
  int h() const noexcept { return shape_[1]; }
  int w() const noexcept { return shape_[2]; }
  int c() const noexcept { return shape_[3]; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& at(int b, int y, int x, int ch) { return data_[offset(b, y, x, ch)]; }
  double at(int b, int y, int x, int ch) const { return data_[offset(b, y, x, ch)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  /// Pointer to sample b, laid out as an (H*W) x C row-major matrix.
  double* sample(int b) noexcept { return data_.data() + static_cast<std::size_t>(b) * h() * w() * c(); }
  const double* sample(int b) const noexcept {
    return data_.data() + static_cast<std::size_t>(b) * h() * w() * c();
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(int b, int y, int x, int ch) const noexcept {
    return ((static_cast<std::size_t>(b) * shape_[1] + y) * shape_[2] + x) * shape_[3] + ch;
  }

  Shape shape_{0, 0, 0, 0};
  std::vector<double> data_;
};

inline std::string shape_string(const Tensor::Shape& s) {
  return "(" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) + "," +
         std::to_string(s[3]) + ")";
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

enum class Padding { same, valid };

/// Hyperparameters of a 2-D convolution; taps/bias live in the parameter store.
struct ConvSpec {
  int stride = 1;
  int dilation = 1;
  Padding padding = Padding::same;
};

/// Resolved spatial geometry of a convolution on a given input size.
struct ConvGeometry {
  int in_h = 0, in_w = 0;
  int kh = 0, kw = 0;
  int stride = 1, dilation = 1;
  int pad_top = 0, pad_left = 0;
  int out_h = 0, out_w = 0;

  static ConvGeometry make(int in_h, int in_w, int kh, int kw, const ConvSpec& spec) {
    if (spec.stride < 1 || spec.dilation < 1 || kh < 1 || kw < 1) {
      throw Error(ErrorCode::invalid_config, "stride, dilation and kernel extent must be >= 1");
    }
    ConvGeometry g{in_h, in_w, kh, kw, spec.stride, spec.dilation, 0, 0, 0, 0};
    const int ext_h = (kh - 1) * spec.dilation + 1;
    const int ext_w = (kw - 1) * spec.dilation + 1;
    if (spec.padding == Padding::same) {
      g.out_h = (in_h + spec.stride - 1) / spec.stride;
      g.out_w = (in_w + spec.stride - 1) / spec.stride;
      // Odd overhang puts the extra zero on the trailing edge.
      g.pad_top = std::max((g.out_h - 1) * spec.stride + ext_h - in_h, 0) / 2;
      g.pad_left = std::max((g.out_w - 1) * spec.stride + ext_w - in_w, 0) / 2;
    } else {
      g.out_h = in_h >= ext_h ? (in_h - ext_h) / spec.stride + 1 : 0;
      g.out_w = in_w >= ext_w ? (in_w - ext_w) / spec.stride + 1 : 0;
    }
    if (g.out_h < 1 || g.out_w < 1) throw Error(ErrorCode::empty_output, "convolution output is empty");
    return g;
  }

  int patch() const noexcept { return kh * kw; }
};

namespace kernels {

// cols: (out_h*out_w) x (kh*kw*C), column index (i*kw + j)*C + c.
inline void im2col(const double* x, int channels, const ConvGeometry& g, double* cols) {
  const int row_len = g.patch() * channels;
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      double* row = cols + static_cast<std::size_t>(oy * g.out_w + ox) * row_len;
      for (int i = 0; i < g.kh; ++i) {
        const int iy = oy * g.stride - g.pad_top + i * g.dilation;
        for (int j = 0; j < g.kw; ++j) {
          const int ix = ox * g.stride - g.pad_left + j * g.dilation;
          double* dst = row + (i * g.kw + j) * channels;
          if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) {
            std::fill(dst, dst + channels, 0.0);
          } else {
            const double* src = x + (static_cast<std::size_t>(iy) * g.in_w + ix) * channels;
            std::copy(src, src + channels, dst);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters (accumulates) columns back into x.
inline void col2im(const double* cols, int channels, const ConvGeometry& g, double* x) {
  const int row_len = g.patch() * channels;
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      const double* row = cols + static_cast<std::size_t>(oy * g.out_w + ox) * row_len;
      for (int i = 0; i < g.kh; ++i) {
        const int iy = oy * g.stride - g.pad_top + i * g.dilation;
        if (iy < 0 || iy >= g.in_h) continue;
        for (int j = 0; j < g.kw; ++j) {
          const int ix = ox * g.stride - g.pad_left + j * g.dilation;
          if (ix < 0 || ix >= g.in_w) continue;
          const double* src = row + (i * g.kw + j) * channels;
          double* dst = x + (static_cast<std::size_t>(iy) * g.in_w + ix) * channels;
          for (int c = 0; c < channels; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

inline bool is_pointwise(const ConvGeometry& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad_top == 0 && g.pad_left == 0;
}

inline void check_taps(const Tensor& x, const Tensor& taps, const Tensor& bias) {
  if (taps.shape()[2] != x.c()) {
    throw Error(ErrorCode::channel_mismatch,
                "input has " + std::to_string(x.c()) + " channels, taps expect " + std::to_string(taps.shape()[2]));
  }
  if (bias.size() != static_cast<std::size_t>(taps.shape()[3])) {
    throw Error(ErrorCode::shape_mismatch, "bias length must equal output channels");
  }
}

}  // namespace kernels

/// y = conv(x, taps) + bias with taps (kh, kw, in_c, out_c).
inline Tensor conv2d(const Tensor& x, const Tensor& taps, const Tensor& bias, const ConvSpec& spec) {
  kernels::check_taps(x, taps, bias);
  const auto g = ConvGeometry::make(x.h(), x.w(), taps.shape()[0], taps.shape()[1], spec);
  const int cin = x.c();
  const int cout = taps.shape()[3];
  Tensor y(x.n(), g.out_h, g.out_w, cout);
  const ConstMatrixMap W(taps.data(), g.patch() * cin, cout);
  const Eigen::Map<const Eigen::RowVectorXd> b(bias.data(), cout);
  const int rows = g.out_h * g.out_w;
  RowMatrix cols;
  for (int s = 0; s < x.n(); ++s) {
    MatrixMap Y(y.sample(s), rows, cout);
    if (kernels::is_pointwise(g)) {
      Y.noalias() = ConstMatrixMap(x.sample(s), rows, cin) * W;
    } else {
      cols.resize(rows, g.patch() * cin);
      kernels::im2col(x.sample(s), cin, g, cols.data());
      Y.noalias() = cols * W;
    }
    Y.rowwise() += b;
  }
  return y;
}

/// Gradients of conv2d. Accumulates into dtaps/dbias; returns dx.
inline Tensor conv2d_backward(const Tensor& x, const Tensor& taps, const ConvSpec& spec, const Tensor& dy,
                              Tensor* dtaps, Tensor* dbias, bool need_dx) {
  const auto g = ConvGeometry::make(x.h(), x.w(), taps.shape()[0], taps.shape()[1], spec);
  const int cin = x.c();
  const int cout = taps.shape()[3];
  const int rows = g.out_h * g.out_w;
  const ConstMatrixMap W(taps.data(), g.patch() * cin, cout);
  Tensor dx;
  if (need_dx) dx = Tensor(x.shape());
  RowMatrix cols;
  RowMatrix dcols;
  for (int s = 0; s < x.n(); ++s) {
    const ConstMatrixMap dY(dy.sample(s), rows, cout);
    const bool pointwise = kernels::is_pointwise(g);
    if (dtaps != nullptr) {
      MatrixMap dW(dtaps->data(), g.patch() * cin, cout);
      if (pointwise) {
        dW.noalias() += ConstMatrixMap(x.sample(s), rows, cin).transpose() * dY;
      } else {
        cols.resize(rows, g.patch() * cin);
        kernels::im2col(x.sample(s), cin, g, cols.data());
        dW.noalias() += cols.transpose() * dY;
      }
    }
    if (dbias != nullptr) {
      Eigen::Map<Eigen::RowVectorXd> db(dbias->data(), cout);
      db += dY.colwise().sum();
    }
    if (need_dx) {
      if (pointwise) {
        MatrixMap(dx.sample(s), rows, cin).noalias() += dY * W.transpose();
      } else {
        dcols.noalias() = dY * W.transpose();
        kernels::col2im(dcols.data(), cin, g, dx.sample(s));
      }
    }
  }
  return dx;
}

/// Geometry of the strided conv whose input-gradient a transposed conv is:
/// 4x4 taps, stride 2, same padding, from (2H, 2W) down to (H, W).
inline ConvGeometry transposed_geometry(const Tensor& x, const Tensor& taps) {
  if (taps.shape()[0] != 4 || taps.shape()[1] != 4) {
    throw Error(ErrorCode::unsupported_config, "transposed convolution supports 4x4 taps with stride 2 only");
  }
  const auto g = ConvGeometry::make(2 * x.h(), 2 * x.w(), 4, 4, ConvSpec{2, 1, Padding::same});
  if (g.out_h != x.h() || g.out_w != x.w()) throw Error(ErrorCode::unsupported_config, "bad geometry");
  return g;
}

namespace kernels {

// (kh*kw, in, out) -> (in, kh*kw*out)
inline RowMatrix permute_transposed_taps(const Tensor& taps) {
  const int patch = taps.shape()[0] * taps.shape()[1];
  const int cin = taps.shape()[2];
  const int cout = taps.shape()[3];
  RowMatrix out(cin, patch * cout);
  for (int t = 0; t < patch; ++t) {
    for (int ci = 0; ci < cin; ++ci) {
      for (int co = 0; co < cout; ++co) out(ci, t * cout + co) = taps[(static_cast<std::size_t>(t) * cin + ci) * cout + co];
    }
  }
  return out;
}

}  // namespace kernels

/// Stride-2 transposed convolution with 4x4 taps (kh, kw, in_c, out_c):
/// output is exactly (2H, 2W). Defined as the input-gradient of the matching
/// strided conv2d.
inline Tensor transposed_conv2d(const Tensor& x, const Tensor& taps, const Tensor& bias) {
  kernels::check_taps(x, taps, bias);
  const auto g = transposed_geometry(x, taps);
  const int cout = taps.shape()[3];
  const RowMatrix T = kernels::permute_transposed_taps(taps);
  Tensor y(x.n(), 2 * x.h(), 2 * x.w(), cout);
  RowMatrix dcols;
  for (int s = 0; s < x.n(); ++s) {
    dcols.noalias() = ConstMatrixMap(x.sample(s), x.h() * x.w(), x.c()) * T;
    kernels::col2im(dcols.data(), cout, g, y.sample(s));
    MatrixMap Y(y.sample(s), y.h() * y.w(), cout);
    Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data(), cout);
  }
  return y;
}

inline Tensor transposed_conv2d_backward(const Tensor& x, const Tensor& taps, const Tensor& dy, Tensor* dtaps,
                                         Tensor* dbias, bool need_dx) {
  const auto g = transposed_geometry(x, taps);
  const int cin = x.c();
  const int cout = taps.shape()[3];
  const int patch = 16;
  const RowMatrix T = kernels::permute_transposed_taps(taps);
  RowMatrix dT = RowMatrix::Zero(cin, patch * cout);
  Tensor dx;
  if (need_dx) dx = Tensor(x.shape());
  RowMatrix cols(x.h() * x.w(), patch * cout);
  for (int s = 0; s < x.n(); ++s) {
    kernels::im2col(dy.sample(s), cout, g, cols.data());
    const ConstMatrixMap X(x.sample(s), x.h() * x.w(), cin);
    if (dtaps != nullptr) dT.noalias() += X.transpose() * cols;
    if (need_dx) MatrixMap(dx.sample(s), x.h() * x.w(), cin).noalias() += cols * T.transpose();
    if (dbias != nullptr) {
      const ConstMatrixMap dY(dy.sample(s), dy.h() * dy.w(), cout);
      Eigen::Map<Eigen::RowVectorXd>(dbias->data(), cout) += dY.colwise().sum();
    }
  }
  if (dtaps != nullptr) {
    for (int t = 0; t < patch; ++t) {
      for (int ci = 0; ci < cin; ++ci) {
        for (int co = 0; co < cout; ++co) (*dtaps)[(static_cast<std::size_t>(t) * cin + ci) * cout + co] += dT(ci, t * cout + co);
      }
    }
  }
  return dx;
}

inline constexpr double kLeakySlope = 0.2;

enum class Activation { identity, leaky_relu, sigmoid };

inline double activate(double v, Activation a) {
  switch (a) {
    case Activation::leaky_relu: return v >= 0.0 ? v : kLeakySlope * v;
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-v));
    case Activation::identity: return v;
  }
  return v;
}

inline Tensor activation(Tensor x, Activation a) {
  for (double& v : x.values()) v = activate(v, a);
  return x;
}

}  // namespace kpac::nn
