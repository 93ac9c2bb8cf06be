#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "kpac/error.hpp"
#include "kpac/image.hpp"
#include "kpac/spectral.hpp"

namespace kpac {

/// Discrete scales {s_i} and one nonnegative scalar weight per scale.
struct BlendWeights {
  std::vector<ScaleFactor> scales;
  std::vector<double> weights;

  void validate() const {
    if (scales.size() != weights.size()) {
      throw Error(ErrorCode::shape_mismatch, "one weight per scale required");
    }
    for (double w : weights) {
      if (!(w >= 0.0)) throw Error(ErrorCode::invalid_problem, "blend weights must be >= 0");
    }
  }
};

namespace detail {

inline Grid channel_plane(const Image& x, int ch) {
  Grid g(x.height(), x.width());
  for (int r = 0; r < x.height(); ++r) {
    for (int c = 0; c < x.width(); ++c) g.at(r, c) = x.at(r, c, ch);
  }
  return g;
}

inline Grid fit_to_image(const Grid& kernel_grid, const Image& x) {
  if (kernel_grid.height() == x.height() && kernel_grid.width() == x.width()) return kernel_grid;
  if (kernel_grid.height() > x.height() || kernel_grid.width() > x.width()) {
    throw Error(ErrorCode::kernel_larger_than_grid, "kernel grid exceeds the image");
  }
  return rewrap(kernel_grid, x.height(), x.width());
}

}  // namespace detail

/// Per-channel circular convolution with an origin-centered kernel grid.
/// No clamping: results may leave [0,1].
inline Image convolve_circular(const Image& x, const Grid& kernel_grid) {
  const Spectrum K = dft2(detail::fit_to_image(kernel_grid, x));
  Image out(x.height(), x.width(), x.channels());
  for (int ch = 0; ch < x.channels(); ++ch) {
    Spectrum X = dft2(detail::channel_plane(x, ch));
    for (std::size_t i = 0; i < X.size(); ++i) X.data()[i] *= K.data()[i];
    const Grid y = idft2(std::move(X));
    for (int r = 0; r < x.height(); ++r) {
      for (int c = 0; c < x.width(); ++c) out.at(r, c, ch) = y.at(r, c);
    }
  }
  return out;
}

inline Image convolve_circular(const Image& x, const Kernel& k) {
  return convolve_circular(x, embed_kernel(k, x.height(), x.width()));
}

/// x_hat = kdag * y, with kdag given on the image grid.
inline Image deconvolve(const Image& y, const Grid& kdag) {
  if (kdag.height() != y.height() || kdag.width() != y.width()) {
    throw Error(ErrorCode::shape_mismatch, "inverse kernel grid must match the image");
  }
  return convolve_circular(y, kdag);
}

enum class ScaleMode { upsample, dilate };

inline ScaleMode parse_scale_mode(const std::string& s) {
  if (s == "upsample") return ScaleMode::upsample;
  if (s == "dilate") return ScaleMode::dilate;
  throw Error(ErrorCode::invalid_config, "mode must be upsample or dilate, got '" + s + "'");
}

/// Realizes the inverse kernel for scale s on the image grid, either by sinc
/// upsampling (1/s^2 k_dag up s) or by dilation with rate s.
inline Grid scaled_inverse_kernel(const Grid& kdag, ScaleFactor s, ScaleMode mode, int h, int w) {
  Grid g;
  if (mode == ScaleMode::upsample) {
    g = upsample_inverse_kernel(kdag, s);
  } else {
    if (!s.is_integer()) throw Error(ErrorCode::invalid_scale, "dilation needs an integer scale");
    const int rate = static_cast<int>(s.numerator / s.denominator);
    int size = std::min(kdag.height(), kdag.width());
    if (size % 2 == 0) --size;
    const Kernel dilated = dilate_kernel(crop_kernel(kdag, size), rate);
    if (dilated.size() > std::min(h, w)) {
      throw Error(ErrorCode::kernel_larger_than_grid, "dilated inverse kernel exceeds the image");
    }
    return embed_kernel(dilated, h, w);
  }
  return rewrap(g, h, w);
}

/// x ~ sum_i alpha_i * (inverse kernel at scale s_i * y), accumulated in scale order.
inline Image multiscale_deconvolve(const Image& y, const Grid& kdag, const BlendWeights& blend,
                                   ScaleMode mode) {
  blend.validate();
  Image out(y.height(), y.width(), y.channels());
  for (std::size_t i = 0; i < blend.scales.size(); ++i) {
    if (blend.weights[i] == 0.0) continue;
    const Grid g = scaled_inverse_kernel(kdag, blend.scales[i], mode, y.height(), y.width());
    const Image part = deconvolve(y, g);
    for (std::size_t j = 0; j < out.size(); ++j) out.data()[j] += blend.weights[i] * part.data()[j];
  }
  return out;
}

struct NnlsProblem {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

struct NnlsResult {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = false;
};

/// Lawson-Hanson active-set non-negative least squares:
/// minimize ||A x - b||^2 subject to x >= 0.
/// The outer loop is capped at 3n iterations; on hitting the cap the best
/// feasible iterate is returned with converged = false.
inline NnlsResult nnls(const NnlsProblem& p, double tol = 1e-10) {
  const Eigen::Index m = p.A.rows();
  const Eigen::Index n = p.A.cols();
  if (n < 1 || m < n || p.b.size() != m || !p.A.allFinite() || !p.b.allFinite()) {
    throw Error(ErrorCode::invalid_problem, "NNLS needs an m x n matrix with m >= n >= 1");
  }

  NnlsResult res;
  res.x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);

  auto solve_passive = [&](Eigen::VectorXd& z) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (passive[j]) idx.push_back(j);
    }
    Eigen::MatrixXd Ap(m, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) Ap.col(static_cast<Eigen::Index>(k)) = p.A.col(idx[k]);
    const Eigen::VectorXd zp = Ap.colPivHouseholderQr().solve(p.b);
    z.setZero(n);
    for (std::size_t k = 0; k < idx.size(); ++k) z[idx[k]] = zp[static_cast<Eigen::Index>(k)];
  };

  const int max_outer = static_cast<int>(3 * n);
  Eigen::VectorXd grad = p.A.transpose() * (p.b - p.A * res.x);  // negative gradient
  while (true) {
    Eigen::Index best = -1;
    double best_val = tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[j] && grad[j] > best_val) {
        best_val = grad[j];
        best = j;
      }
    }
    if (best < 0) {
      res.converged = true;
      break;
    }
    if (res.iterations >= max_outer) break;
    ++res.iterations;
    passive[best] = true;

    Eigen::VectorXd z;
    for (int inner = 0; inner <= 3 * n; ++inner) {
      solve_passive(z);
      bool feasible = true;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && z[j] <= 0.0) feasible = false;
      }
      if (feasible) break;
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && z[j] <= 0.0) alpha = std::min(alpha, res.x[j] / (res.x[j] - z[j]));
      }
      res.x += alpha * (z - res.x);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && res.x[j] <= 1e-14) {
          passive[j] = false;
          res.x[j] = 0.0;
        }
      }
    }
    for (Eigen::Index j = 0; j < n; ++j) res.x[j] = passive[j] ? std::max(z[j], 0.0) : 0.0;
    grad = p.A.transpose() * (p.b - p.A * res.x);
  }
  return res;
}

/// Scalar blend weights minimizing || sum_i w_i r_i - target ||^2 with w >= 0.
inline BlendWeights fit_blend_weights(const std::vector<Image>& per_scale_results, const Image& target,
                                      std::vector<ScaleFactor> scales = {}) {
  if (per_scale_results.empty()) throw Error(ErrorCode::invalid_problem, "need at least one scale");
  NnlsProblem p;
  const auto m = static_cast<Eigen::Index>(target.size());
  const auto n = static_cast<Eigen::Index>(per_scale_results.size());
  p.A.resize(m, n);
  p.b = Eigen::Map<const Eigen::VectorXd>(target.data().data(), m);
  for (Eigen::Index j = 0; j < n; ++j) {
    require_same_shape(per_scale_results[j], target);
    p.A.col(j) = Eigen::Map<const Eigen::VectorXd>(per_scale_results[j].data().data(), m);
  }
  const NnlsResult r = nnls(p);
  if (scales.empty()) scales.assign(per_scale_results.size(), ScaleFactor{});
  BlendWeights out{std::move(scales), std::vector<double>(r.x.data(), r.x.data() + n)};
  out.validate();
  return out;
}

/// 1 - mean |1 - xhat / xs| over pixels where |xs| >= 1e-3. Not clamped; can
/// be negative for poor approximations.
inline Metric approx_accuracy(const Image& xhat, const Image& xs) {
  require_same_shape(xhat, xs);
  double acc = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double d = xs.data()[i];
    if (std::abs(d) < 1e-3) continue;
    acc += std::abs(1.0 - xhat.data()[i] / d);
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::all_pixels_excluded, "reference is ~0 everywhere");
  return {"approx_accuracy", 1.0 - acc / static_cast<double>(used)};
}

}  // namespace kpac
