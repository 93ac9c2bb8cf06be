#pragma once

// Reproducible inverse-kernel experiments on synthetic scenes: scale
// commutativity of inversion, dilation vs upsampling of inverse kernels, and
// blending per-scale deconvolutions to emulate an intermediate scale.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "kpac/deconv.hpp"
#include "kpac/image.hpp"
#include "kpac/spectral.hpp"

namespace kpac {

/// Band-limited random field rescaled to [0.1, 0.9], independent per channel.
/// `bandwidth` is the standard deviation of the Gaussian spectral envelope in
/// cycles per pixel.
inline Image synthetic_scene(int height, int width, int channels, std::uint64_t seed,
                             double bandwidth = 0.12) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Image out(height, width, channels);
  for (int ch = 0; ch < channels; ++ch) {
    Grid g(height, width);
    for (double& v : g.data()) v = noise(rng);
    Spectrum X = dft2(g);
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
    for (int r = 0; r < height; ++r) {
      const double fy = static_cast<double>(centered_offset(r, height)) / height;
      for (int c = 0; c < width; ++c) {
        const double fx = static_cast<double>(centered_offset(c, width)) / width;
        X.at(r, c) *= std::exp(-(fx * fx + fy * fy) * inv);
      }
    }
    const Grid z = idft2(std::move(X));
    const auto [lo_it, hi_it] = std::minmax_element(z.data().begin(), z.data().end());
    const double lo = *lo_it;
    const double span = *hi_it > lo ? *hi_it - lo : 1.0;
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) out.at(r, c, ch) = 0.1 + 0.8 * (z.at(r, c) - lo) / span;
    }
  }
  return out;
}

struct EquivalenceSetup {
  KernelKind kind = KernelKind::gaussian;
  double param = 1.0;
  int scale = 5;
  int grid = 127;
  double eps = 1e-2;
  std::uint64_t seed = 1;
};

struct EquivalenceResult {
  double psnr_between = 0.0;    // PSNR between the two deblurred images
  double psnr_reference = 0.0;  // reference path vs sharp scene
  double psnr_candidate = 0.0;  // alternative path vs sharp scene
  double psnr_blurred = 0.0;    // blurred input vs sharp scene
  int base_grid = 0;
};

/// Largest odd base grid G with s*G <= n, so the upsampled grid never has to
/// be cropped to fit the scene (and the dilated kernel always fits).
inline int base_grid_for(int n, int s) {
  int g = n / s;
  if (g % 2 == 0) --g;
  return std::max(g, 1);
}

namespace detail {

struct EquivalenceScene {
  Image sharp;
  Image blurred;
  Grid base_inverse;  // Wiener inverse of the base kernel on the base grid
  Grid upsampled_blur;
  int base_grid = 0;
};

inline EquivalenceScene make_equivalence_scene(const EquivalenceSetup& s) {
  if (s.scale < 1) throw Error(ErrorCode::invalid_scale, "scale must be >= 1");
  const int n = s.grid;
  const int g = base_grid_for(n, s.scale);
  const Kernel k = make_kernel(s.kind, s.param, min_kernel_size(s.kind, s.param));
  const Grid k_base = embed_kernel(k, g, g);

  EquivalenceScene out;
  out.base_grid = g;
  Grid up = rewrap(upsample_kernel_grid(k_base, ScaleFactor::integer(s.scale)), n, n);
  const double total = up.sum();
  for (double& v : up.data()) v /= total;
  out.upsampled_blur = std::move(up);
  out.sharp = synthetic_scene(n, n, 3, s.seed);
  out.blurred = convolve_circular(out.sharp, out.upsampled_blur);
  out.base_inverse = wiener_inverse(k_base, s.eps);
  return out;
}

}  // namespace detail

/// Inverse of the upsampled blur kernel vs upsampled inverse of the base kernel.
inline EquivalenceResult run_commutativity(const EquivalenceSetup& s) {
  const auto scene = detail::make_equivalence_scene(s);
  const int n = s.grid;
  const Grid direct = wiener_inverse(scene.upsampled_blur, s.eps);
  const Grid shared = rewrap(upsample_inverse_kernel(scene.base_inverse, ScaleFactor::integer(s.scale)), n, n);
  const Image a = deconvolve(scene.blurred, direct);
  const Image b = deconvolve(scene.blurred, shared);
  return {psnr(a, b).value, psnr(a, scene.sharp).value, psnr(b, scene.sharp).value,
          psnr(scene.blurred, scene.sharp).value, scene.base_grid};
}

/// Upsampled inverse kernel vs the same inverse kernel dilated by s.
inline EquivalenceResult run_dilation_equivalence(const EquivalenceSetup& s) {
  const auto scene = detail::make_equivalence_scene(s);
  const int n = s.grid;
  const auto sf = ScaleFactor::integer(s.scale);
  const Grid upsampled = scaled_inverse_kernel(scene.base_inverse, sf, ScaleMode::upsample, n, n);
  const Grid dilated = scaled_inverse_kernel(scene.base_inverse, sf, ScaleMode::dilate, n, n);
  const Image a = deconvolve(scene.blurred, upsampled);
  const Image b = deconvolve(scene.blurred, dilated);
  return {psnr(a, b).value, psnr(a, scene.sharp).value, psnr(b, scene.sharp).value,
          psnr(scene.blurred, scene.sharp).value, scene.base_grid};
}

struct ApproxSetup {
  KernelKind kind = KernelKind::gaussian;
  double param = 1.0;
  std::vector<ScaleFactor> scales{ScaleFactor::integer(3), ScaleFactor::integer(4)};
  ScaleFactor target{7, 2};
  int grid = 255;
  int base_grid = 63;
  double eps = 1e-2;
  std::uint64_t seed = 1;
};

struct ApproxResult {
  double uniform_accuracy = 0.0;
  double fitted_accuracy = 0.0;
  std::vector<double> fitted_weights;
  double uniform_residual = 0.0;  // ||uniform blend - target||^2
  double fitted_residual = 0.0;
};

inline double squared_residual(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return s;
}

/// Blends deconvolutions at the bracketing scales to approximate the
/// deconvolution at the target scale; uniform weights vs NNLS-fitted weights.
inline ApproxResult run_scale_blend(const ApproxSetup& s) {
  const int n = s.grid;
  const Kernel k = make_kernel(s.kind, s.param, min_kernel_size(s.kind, s.param));
  const Grid k_base = embed_kernel(k, s.base_grid, s.base_grid);
  for (const ScaleFactor& sf : s.scales) {
    if (sf.target(s.base_grid) > n) throw Error(ErrorCode::kernel_larger_than_grid, "scale too large");
  }
  Grid blur = rewrap(upsample_kernel_grid(k_base, s.target), n, n);
  const double total = blur.sum();
  for (double& v : blur.data()) v /= total;

  const Image sharp = synthetic_scene(n, n, 3, s.seed);
  const Image y = convolve_circular(sharp, blur);
  const Grid kdag = wiener_inverse(k_base, s.eps);
  const Image at_target = deconvolve(y, scaled_inverse_kernel(kdag, s.target, ScaleMode::upsample, n, n));

  std::vector<Image> parts;
  for (const ScaleFactor& sf : s.scales) {
    parts.push_back(deconvolve(y, scaled_inverse_kernel(kdag, sf, ScaleMode::upsample, n, n)));
  }
  const double u = 1.0 / static_cast<double>(parts.size());
  Image uniform(n, n, 3);
  for (const Image& p : parts) {
    for (std::size_t i = 0; i < uniform.size(); ++i) uniform.data()[i] += u * p.data()[i];
  }
  const BlendWeights fitted = fit_blend_weights(parts, at_target, s.scales);
  Image blended(n, n, 3);
  for (std::size_t j = 0; j < parts.size(); ++j) {
    for (std::size_t i = 0; i < blended.size(); ++i) {
      blended.data()[i] += fitted.weights[j] * parts[j].data()[i];
    }
  }
  ApproxResult r;
  r.uniform_accuracy = approx_accuracy(uniform, at_target).value;
  r.fitted_accuracy = approx_accuracy(blended, at_target).value;
  r.fitted_weights = fitted.weights;
  r.uniform_residual = squared_residual(uniform, at_target);
  r.fitted_residual = squared_residual(blended, at_target);
  return r;
}

}  // namespace kpac
