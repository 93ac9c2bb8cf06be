#pragma once

// Encoder / KPAC / decoder deblurring network. A KPAC block runs n atrous
// convolutions that read one shared tap set at dilation rates 1..n, weights
// each branch per pixel by a scale-attention map and per channel by a
// shape-attention vector shared across branches, and fuses the concatenated
// branches with a 3x3 convolution.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kpac/autodiff.hpp"
#include "kpac/error.hpp"
#include "kpac/tensor.hpp"

namespace kpac::nn {

struct NetworkConfig {
  int levels = 3;           // encoder depth: 2 or 3 stride-2 stages
  int blocks = 2;           // KPAC blocks
  int k = 5;                // atrous kernel size
  int n = 5;                // dilation rates 1..n
  int width = 48;           // channels at full and half resolution; 2*width below
  int attention_width = 32; // scale-attention stack: w, w, w/2, w/2
  int shape_hidden = 16;    // hidden units of the shape-attention FC
  bool share_weights = true;
  Activation output_activation = Activation::leaky_relu;  // applied by conv8
  bool zero_init_output = false;  // start conv8 taps at zero: the net begins as the identity

  int kpac_channels() const noexcept { return 2 * width; }
  int branch_channels() const noexcept { return width; }

  void validate() const {
    if (levels != 2 && levels != 3) throw Error(ErrorCode::invalid_config, "levels must be 2 or 3");
    if (blocks < 1) throw Error(ErrorCode::invalid_config, "need at least one KPAC block");
    if (k < 1 || n < 1 || width < 1 || attention_width < 2 || shape_hidden < 1) {
      throw Error(ErrorCode::invalid_config, "k, n, width and attention sizes must be positive");
    }
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

enum class LayerKind { conv, transposed_conv, dense };

/// One weighted layer of the architecture. `params` names the tap/bias pair it
/// reads; shared atrous branches name the same pair and set owns_params=false.
struct LayerDesc {
  std::string name;
  std::string params;
  LayerKind kind = LayerKind::conv;
  int kh = 1, kw = 1, in_c = 1, out_c = 1;
  int stride = 1;
  int dilation = 1;
  int level = 0;  // output resolution is input / 2^level
  bool owns_params = true;
};

inline std::vector<LayerDesc> layer_table(const NetworkConfig& cfg) {
  cfg.validate();
  const int w = cfg.width;
  const int c = cfg.kpac_channels();
  const int half = cfg.branch_channels();
  const int bottom = cfg.levels;
  std::vector<LayerDesc> t;
  auto conv = [&](std::string name, int k, int cin, int cout, int stride, int level, int dil = 1) {
    t.push_back({name, name, LayerKind::conv, k, k, cin, cout, stride, dil, level, true});
  };
  auto deconv = [&](std::string name, int cin, int cout, int level) {
    t.push_back({name, name, LayerKind::transposed_conv, 4, 4, cin, cout, 2, 1, level, true});
  };

  conv("conv1_1", 5, 3, w, 1, 0);
  conv("conv1_2", 3, w, w, 1, 0);
  conv("conv2_1", 3, w, w, 2, 1);
  conv("conv2_2", 3, w, w, 1, 1);
  conv("conv3_1", 3, w, c, 2, 2);
  conv("conv3_2", 3, c, c, 1, 2);
  if (cfg.levels == 3) {
    conv("conv4_1", 3, c, c, 2, 3);
    conv("conv4_2", 3, c, c, 1, 3);
  }

  const int aw = cfg.attention_width;
  for (int b = 1; b <= cfg.blocks; ++b) {
    const std::string p = "kpac" + std::to_string(b) + ".";
    conv(p + "scale.0", 5, c, aw, 1, bottom, 2);
    conv(p + "scale.1", 5, aw, aw, 1, bottom, 2);
    conv(p + "scale.2", 5, aw, aw / 2, 1, bottom, 2);
    conv(p + "scale.3", 5, aw / 2, aw / 2, 1, bottom, 2);
    conv(p + "scale.out", 5, aw / 2, cfg.n, 1, bottom);
    t.push_back({p + "shape.fc1", p + "shape.fc1", LayerKind::dense, 1, 1, c, cfg.shape_hidden, 1, 1, bottom, true});
    t.push_back({p + "shape.fc2", p + "shape.fc2", LayerKind::dense, 1, 1, cfg.shape_hidden, half, 1, 1, bottom, true});
    for (int i = 1; i <= cfg.n; ++i) {
      const std::string branch = p + "ac" + std::to_string(i);
      const std::string params = cfg.share_weights ? p + "shared" : branch;
      t.push_back({branch, params, LayerKind::conv, cfg.k, cfg.k, c, half, 1, i, bottom,
                   !cfg.share_weights || i == 1});
    }
    conv(p + "fusion", 3, cfg.n * half, c, 1, bottom);
  }

  conv("conv5_1", 3, (cfg.blocks + 1) * c, c, 1, bottom);
  conv("conv5_2", 3, c, c, 1, bottom);
  if (cfg.levels == 3) {
    deconv("deconv1", c, c, 2);
    conv("conv6", 3, 2 * c, c, 1, 2);
  }
  deconv("deconv2", c, w, 1);
  conv("conv7", 3, 2 * w, w, 1, 1);
  deconv("deconv3", w, w, 0);
  conv("conv8", 5, 2 * w, 3, 1, 0);
  return t;
}

struct Parameter {
  std::string name;
  Tensor value;
};

/// Ordered named parameters plus Adam state.
class NetworkWeights {
 public:
  NetworkWeights() = default;
  explicit NetworkWeights(NetworkConfig cfg) : config_(cfg) {}

  const NetworkConfig& config() const noexcept { return config_; }

  void add(std::string name, Tensor value) {
    if (index_.count(name) != 0) throw Error(ErrorCode::invalid_config, "duplicate parameter " + name);
    index_.emplace(name, params_.size());
    adam_m_.emplace_back(value.shape());
    adam_v_.emplace_back(value.shape());
    params_.push_back({std::move(name), std::move(value)});
  }

  std::size_t size() const noexcept { return params_.size(); }
  const std::vector<Parameter>& params() const noexcept { return params_; }
  Parameter& param(std::size_t i) { return params_[i]; }
  const Parameter& param(std::size_t i) const { return params_[i]; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(ErrorCode::invalid_config, "no parameter named " + name);
    return it->second;
  }
  Tensor& get(const std::string& name) { return params_[index(name)].value; }
  const Tensor& get(const std::string& name) const { return params_[index(name)].value; }

  Tensor& adam_m(std::size_t i) { return adam_m_[i]; }
  Tensor& adam_v(std::size_t i) { return adam_v_[i]; }
  std::int64_t step() const noexcept { return step_; }
  void set_step(std::int64_t s) noexcept { step_ = s; }

  std::size_t element_count() const {
    std::size_t total = 0;
    for (const auto& p : params_) total += p.value.size();
    return total;
  }

  /// Parameter values only; Adam state is not compared.
  bool same_values(const NetworkWeights& other) const {
    if (params_.size() != other.params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name != other.params_[i].name || !(params_[i].value == other.params_[i].value)) return false;
    }
    return true;
  }

 private:
  NetworkConfig config_;
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Tensor> adam_m_;
  std::vector<Tensor> adam_v_;
  std::int64_t step_ = 0;
};

/// Builds the network with uniform fan-in initialization, bound sqrt(6/fan_in),
/// and zero biases.
inline NetworkWeights build_network(const NetworkConfig& cfg, std::uint64_t seed) {
  NetworkWeights w(cfg);
  std::mt19937_64 rng(seed);
  for (const LayerDesc& l : layer_table(cfg)) {
    if (!l.owns_params) continue;
    Tensor taps(l.kh, l.kw, l.in_c, l.out_c);
    const double bound = std::sqrt(6.0 / static_cast<double>(l.kh * l.kw * l.in_c));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : taps.values()) v = dist(rng);
    if (cfg.zero_init_output && l.params == "conv8") taps.fill(0.0);
    w.add(l.params + ".w", std::move(taps));
    w.add(l.params + ".b", Tensor(1, 1, 1, l.out_c));
  }
  return w;
}

/// Exact number of tap and bias elements.
inline std::size_t param_count(const NetworkWeights& w) { return w.element_count(); }

/// Parameter count implied by a configuration, without allocating weights.
inline std::size_t param_count(const NetworkConfig& cfg) {
  std::size_t total = 0;
  for (const LayerDesc& l : layer_table(cfg)) {
    if (l.owns_params) total += static_cast<std::size_t>(l.kh) * l.kw * l.in_c * l.out_c + l.out_c;
  }
  return total;
}

/// 2 * multiply-accumulates of every conv, transposed conv and FC layer for one
/// h x w input. Activations, pooling, concatenation and attention products are
/// not counted.
inline std::uint64_t flops_estimate(const NetworkConfig& cfg, int height, int width) {
  std::uint64_t macs = 0;
  auto pixels = [&](int level) {
    std::uint64_t h = static_cast<std::uint64_t>(height);
    std::uint64_t w = static_cast<std::uint64_t>(width);
    for (int i = 0; i < level; ++i) {
      h = (h + 1) / 2;
      w = (w + 1) / 2;
    }
    return h * w;
  };
  for (const LayerDesc& l : layer_table(cfg)) {
    const std::uint64_t per = static_cast<std::uint64_t>(l.kh) * l.kw * l.in_c * l.out_c;
    switch (l.kind) {
      case LayerKind::conv: macs += per * pixels(l.level); break;
      case LayerKind::transposed_conv: macs += per * pixels(l.level + 1); break;
      case LayerKind::dense: macs += static_cast<std::uint64_t>(l.in_c) * l.out_c; break;
    }
  }
  return 2 * macs;
}

/// Per-parameter gradients aligned with NetworkWeights::params().
using Gradients = std::vector<Tensor>;

namespace detail {

/// Builds the forward graph on a tape, reading parameters by name.
class GraphBuilder {
 public:
  GraphBuilder(Tape& tape, const NetworkWeights& w, bool track) : w_(w) {
    vars_.reserve(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      vars_.push_back(track ? tape.leaf(w.param(i).value, static_cast<int>(i)) : tape.constant(w.param(i).value));
    }
  }

  Var param(const std::string& name) const { return vars_[w_.index(name)]; }
  const std::vector<Var>& vars() const noexcept { return vars_; }

  Var conv(Var x, const std::string& params, ConvSpec spec, Activation act = Activation::leaky_relu) {
    return ops::activation(ops::conv2d(x, param(params + ".w"), param(params + ".b"), spec), act);
  }

  Var deconv(Var x, const std::string& params) {
    return ops::leaky_relu(ops::transposed_conv2d(x, param(params + ".w"), param(params + ".b")));
  }

  Var dense(Var x, const std::string& params, Activation act) {
    return ops::activation(ops::dense(x, param(params + ".w"), param(params + ".b")), act);
  }

  std::string branch_params(int block, int i) const {
    const std::string p = "kpac" + std::to_string(block) + ".";
    return w_.config().share_weights ? p + "shared" : p + "ac" + std::to_string(i);
  }

  Var scale_attention(Var h1, int block) {
    const std::string p = "kpac" + std::to_string(block) + ".scale.";
    const ConvSpec atrous{1, 2, Padding::same};
    Var a = conv(h1, p + "0", atrous);
    a = conv(a, p + "1", atrous);
    a = conv(a, p + "2", atrous);
    a = conv(a, p + "3", atrous);
    return conv(a, p + "out", ConvSpec{}, Activation::sigmoid);
  }

  Var shape_attention(Var h1, int block) {
    const std::string p = "kpac" + std::to_string(block) + ".shape.";
    Var g = ops::global_average_pool(h1);
    g = dense(g, p + "fc1", Activation::leaky_relu);
    return dense(g, p + "fc2", Activation::sigmoid);
  }

  Var kpac_block(Var h1, int block) {
    const NetworkConfig& cfg = w_.config();
    const Var alpha = scale_attention(h1, block);
    const Var beta = shape_attention(h1, block);
    std::vector<Var> scaled;
    for (int i = 1; i <= cfg.n; ++i) {
      const Var branch = conv(h1, branch_params(block, i), ConvSpec{1, i, Padding::same});
      scaled.push_back(ops::scale_by_map(ops::scale_by_channel(branch, beta), alpha, i - 1));
    }
    return conv(ops::concat(scaled), "kpac" + std::to_string(block) + ".fusion", ConvSpec{});
  }

  Var network(Var x) {
    const NetworkConfig& cfg = w_.config();
    const ConvSpec s1{};
    const ConvSpec s2{2, 1, Padding::same};
    Var e1 = conv(conv(x, "conv1_1", s1), "conv1_2", s1);
    Var e2 = conv(conv(e1, "conv2_1", s2), "conv2_2", s1);
    Var e3 = conv(conv(e2, "conv3_1", s2), "conv3_2", s1);
    Var bottom = e3;
    if (cfg.levels == 3) bottom = conv(conv(e3, "conv4_1", s2), "conv4_2", s1);

    std::vector<Var> features{bottom};
    Var h = bottom;
    for (int b = 1; b <= cfg.blocks; ++b) {
      h = kpac_block(h, b);
      features.push_back(h);
    }
    Var d = conv(conv(ops::concat(features), "conv5_1", s1), "conv5_2", s1);
    if (cfg.levels == 3) {
      d = conv(ops::concat({deconv(d, "deconv1"), e3}), "conv6", s1);
    }
    d = conv(ops::concat({deconv(d, "deconv2"), e2}), "conv7", s1);
    d = conv(ops::concat({deconv(d, "deconv3"), e1}), "conv8", s1, cfg.output_activation);
    return ops::add(d, x);
  }

 private:
  const NetworkWeights& w_;
  std::vector<Var> vars_;
};

inline void check_input(const Tensor& x, const NetworkConfig& cfg) {
  const int m = 1 << cfg.levels;
  if (x.c() != 3) throw Error(ErrorCode::channel_mismatch, "network input must have 3 channels");
  if (x.h() % m != 0 || x.w() % m != 0) {
    throw Error(ErrorCode::bad_spatial_dims, "height and width must be divisible by " + std::to_string(m));
  }
}

}  // namespace detail

/// Recorded forward pass of the full network, ready for reverse accumulation.
/// Holds a tape whose nodes refer back to it, so it is neither copyable nor
/// movable.
class ForwardRecord {
 public:
  ForwardRecord(const NetworkWeights& w, const Tensor& x, bool track_grad = true) : weights_(&w) {
    detail::check_input(x, w.config());
    detail::GraphBuilder g(tape_, w, track_grad);
    params_ = g.vars();
    output_ = g.network(tape_.constant(x));
  }
  ForwardRecord(const ForwardRecord&) = delete;
  ForwardRecord& operator=(const ForwardRecord&) = delete;

  const Tensor& output() const { return output_.value(); }
  const NetworkWeights& weights() const noexcept { return *weights_; }

  Gradients backward(const Tensor& loss_grad) {
    tape_.backward(output_, loss_grad);
    Gradients grads;
    grads.reserve(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const Tensor& g = tape_.node(params_[i].id).grad;
      grads.push_back(g.empty() ? Tensor(weights_->param(i).value.shape()) : g);
    }
    return grads;
  }

 private:
  Tape tape_;
  const NetworkWeights* weights_;
  std::vector<Var> params_;
  Var output_;
};

inline Gradients backward(const Tensor& loss_grad, ForwardRecord& record) { return record.backward(loss_grad); }

inline Tensor net_forward(const Tensor& x, const NetworkWeights& w) {
  ForwardRecord rec(w, x, false);
  return rec.output();
}

/// Per-pixel scale-attention maps (N,H,W,n) of KPAC block `block` (1-based).
inline Tensor scale_attention(const Tensor& x, const NetworkWeights& w, int block = 1) {
  Tape tape;
  detail::GraphBuilder g(tape, w, false);
  return g.scale_attention(tape.constant(x), block).value();
}

/// Shape-attention vector (N,1,1,c/2) of KPAC block `block`.
inline Tensor shape_attention(const Tensor& x, const NetworkWeights& w, int block = 1) {
  Tape tape;
  detail::GraphBuilder g(tape, w, false);
  return g.shape_attention(tape.constant(x), block).value();
}

inline Tensor kpac_block_forward(const Tensor& h1, const NetworkWeights& w, int block = 1) {
  if (h1.c() != w.config().kpac_channels()) throw Error(ErrorCode::channel_mismatch, "KPAC input channels");
  Tape tape;
  detail::GraphBuilder g(tape, w, false);
  return g.kpac_block(tape.constant(h1), block).value();
}

/// Tap tensor read by atrous branch i (1-based) of a block.
inline const Tensor& branch_taps(const NetworkWeights& w, int block, int i) {
  const std::string p = "kpac" + std::to_string(block) + ".";
  return w.get((w.config().share_weights ? p + "shared" : p + "ac" + std::to_string(i)) + ".w");
}

}  // namespace kpac::nn
