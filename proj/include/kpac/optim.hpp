#pragma once

#include <cmath>
#include <cstdlib>

#include "kpac/error.hpp"
#include "kpac/network.hpp"
#include "kpac/tensor.hpp"

namespace kpac::nn {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

/// One bias-corrected Adam update in place; advances the step counter.
inline void adam_step(NetworkWeights& w, const Gradients& grads, const AdamOptions& opt = {}) {
  if (grads.size() != w.size()) throw Error(ErrorCode::shape_mismatch, "one gradient per parameter");
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (grads[i].shape() != w.param(i).value.shape()) {
      throw Error(ErrorCode::shape_mismatch, "gradient shape differs for " + w.param(i).name);
    }
  }
  const std::int64_t t = w.step() + 1;
  w.set_step(t);
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    Tensor& p = w.param(i).value;
    Tensor& m = w.adam_m(i);
    Tensor& v = w.adam_v(i);
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g[j];
      v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g[j] * g[j];
      p[j] -= opt.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + opt.eps);
    }
  }
}

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad;
};

/// Mean absolute error and its subgradient sign(pred - target) / count,
/// taking 0 at ties.
inline LossAndGrad mae_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) throw Error(ErrorCode::shape_mismatch, "prediction/target shapes differ");
  LossAndGrad out{0.0, Tensor(pred.shape())};
  const double inv = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    out.loss += std::abs(d);
    out.grad[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
  }
  out.loss *= inv;
  return out;
}

}  // namespace kpac::nn
