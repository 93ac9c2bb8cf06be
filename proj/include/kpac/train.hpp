#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "kpac/deconv.hpp"
#include "kpac/experiments.hpp"
#include "kpac/image.hpp"
#include "kpac/network.hpp"
#include "kpac/optim.hpp"

namespace kpac::nn {

/// Image -> (1,H,W,3) tensor; grayscale is replicated across channels.
inline Tensor image_to_tensor(const Image& img) {
  Tensor t(1, img.height(), img.width(), 3);
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      for (int ch = 0; ch < 3; ++ch) t.at(0, r, c, ch) = img.at(r, c, img.channels() == 1 ? 0 : ch);
    }
  }
  return t;
}

/// Sample `b` of a tensor as an image with `channels` channels (1 averages RGB).
inline Image tensor_to_image(const Tensor& t, int channels = 3, int b = 0) {
  Image img(t.h(), t.w(), channels);
  for (int r = 0; r < t.h(); ++r) {
    for (int c = 0; c < t.w(); ++c) {
      if (channels == 1) {
        double s = 0.0;
        for (int ch = 0; ch < t.c(); ++ch) s += t.at(b, r, c, ch);
        img.at(r, c, 0) = s / t.c();
      } else {
        for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = t.at(b, r, c, ch);
      }
    }
  }
  return img;
}

struct TrainingPair {
  Tensor blurred;  // (1,H,W,3)
  Tensor sharp;
};

/// Synthetic defocus pairs: band-limited random-field scenes blurred by a
/// Gaussian whose sigma is drawn from [sigma_min, sigma_max] independently in
/// each of four regions split at a random point. Scenes are rendered with a
/// margin and center-cropped so patch borders see real content.
inline std::vector<TrainingPair> make_blur_dataset(int count, int patch, std::uint64_t seed,
                                                   double sigma_min = 1.0, double sigma_max = 3.0) {
  if (count < 1 || patch < 8) throw Error(ErrorCode::empty_dataset, "need count >= 1 and patch >= 8");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int margin = static_cast<int>(std::ceil(3.0 * sigma_max)) + 4;
  const int canvas = patch + 2 * margin;
  std::vector<TrainingPair> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const Image sharp = synthetic_scene(canvas, canvas, 3, rng(), 0.05);
    const int split_y = margin + patch / 4 + static_cast<int>(unit(rng) * patch / 2);
    const int split_x = margin + patch / 4 + static_cast<int>(unit(rng) * patch / 2);
    double sigma[4];
    Image blurred_by[4];
    for (int q = 0; q < 4; ++q) {
      sigma[q] = sigma_min + (sigma_max - sigma_min) * unit(rng);
      const Kernel k = make_kernel(KernelKind::gaussian, sigma[q], min_kernel_size(KernelKind::gaussian, sigma[q]));
      blurred_by[q] = convolve_circular(sharp, k);
    }
    TrainingPair pair{Tensor(1, patch, patch, 3), Tensor(1, patch, patch, 3)};
    for (int y = 0; y < patch; ++y) {
      for (int x = 0; x < patch; ++x) {
        const int cy = y + margin;
        const int cx = x + margin;
        const int q = (cy < split_y ? 0 : 2) + (cx < split_x ? 0 : 1);
        for (int ch = 0; ch < 3; ++ch) {
          pair.sharp.at(0, y, x, ch) = sharp.at(cy, cx, ch);
          pair.blurred.at(0, y, x, ch) = blurred_by[q].at(cy, cx, ch);
        }
      }
    }
    out.push_back(std::move(pair));
  }
  return out;
}

/// Stacks the selected pairs into (B,H,W,3) input and target batches.
inline std::pair<Tensor, Tensor> make_batch(const std::vector<TrainingPair>& data, const std::vector<std::size_t>& idx) {
  const Tensor& first = data[idx.front()].blurred;
  Tensor x(static_cast<int>(idx.size()), first.h(), first.w(), 3);
  Tensor y(x.shape());
  const std::size_t per = first.size();
  for (std::size_t b = 0; b < idx.size(); ++b) {
    std::copy(data[idx[b]].blurred.data(), data[idx[b]].blurred.data() + per, x.data() + b * per);
    std::copy(data[idx[b]].sharp.data(), data[idx[b]].sharp.data() + per, y.data() + b * per);
  }
  return {std::move(x), std::move(y)};
}

/// Configuration used by the toy training run: the full topology at reduced
/// width, starting from the identity map (zero final taps) with a linear
/// output so the residual can both raise and lower pixel values.
inline NetworkConfig toy_config() {
  NetworkConfig c;
  c.width = 24;
  c.output_activation = Activation::identity;
  c.zero_init_output = true;
  return c;
}
inline constexpr int kToyPatch = 32;
inline constexpr int kToyTrainPairs = 512;
inline constexpr int kToyHeldOutPairs = 32;

struct TrainOptions {
  int batch = 4;
  AdamOptions adam{};
  int log_every = 10;
};

struct TrainResult {
  NetworkWeights weights;
  std::vector<std::pair<int, double>> loss_curve;  // (step, batch MAE) every log_every steps
};

/// MAE-only training from a seeded initialization. Deterministic given seed.
inline TrainResult train_toy(const NetworkConfig& cfg, const std::vector<TrainingPair>& dataset, int steps,
                             std::uint64_t seed, const TrainOptions& opt = {},
                             const std::function<void(int, double)>& on_log = {}) {
  if (dataset.empty()) throw Error(ErrorCode::empty_dataset, "training set is empty");
  TrainResult res{build_network(cfg, seed), {}};
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  std::vector<std::size_t> idx(static_cast<std::size_t>(opt.batch));
  for (int step = 0; step < steps; ++step) {
    for (auto& i : idx) i = pick(rng);
    const auto [x, y] = make_batch(dataset, idx);
    ForwardRecord rec(res.weights, x);
    const LossAndGrad loss = mae_loss(rec.output(), y);
    const Gradients grads = rec.backward(loss.grad);
    if (step % opt.log_every == 0) {
      res.loss_curve.emplace_back(step, loss.loss);
      if (on_log) on_log(step, loss.loss);
    }
    adam_step(res.weights, grads, opt.adam);
  }
  return res;
}

struct HeldOutScore {
  double network_mae = 0.0;
  double blurred_mae = 0.0;
  double improvement() const { return 1.0 - network_mae / blurred_mae; }
};

inline HeldOutScore evaluate(const NetworkWeights& w, const std::vector<TrainingPair>& data) {
  HeldOutScore s;
  for (const auto& p : data) {
    s.network_mae += mae_loss(net_forward(p.blurred, w), p.sharp).loss;
    s.blurred_mae += mae_loss(p.blurred, p.sharp).loss;
  }
  s.network_mae /= static_cast<double>(data.size());
  s.blurred_mae /= static_cast<double>(data.size());
  return s;
}

}  // namespace kpac::nn
