#pragma once

// Tape-based reverse-mode differentiation over Tensor-valued operations. Each
// operation appends a node holding its value and a closure that pushes the
// node's gradient into its inputs. A parameter read several times (the shared
// atrous taps) accumulates every contribution into its single node.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "kpac/error.hpp"
#include "kpac/tensor.hpp"

namespace kpac::nn {

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
};

class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::function<void(Tape&, int self)> backward;
    int param_index = -1;
  };

  Var constant(Tensor value) { return push(std::move(value), false, nullptr); }

  /// Leaf that receives a gradient; `param_index` ties it to a parameter slot.
  Var leaf(Tensor value, int param_index = -1) {
    Var v = push(std::move(value), true, nullptr);
    nodes_[v.id].param_index = param_index;
    return v;
  }

  Var push(Tensor value, bool needs_grad, std::function<void(Tape&, int)> backward) {
    nodes_.push_back(Node{std::move(value), Tensor{}, needs_grad, std::move(backward), -1});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const Tensor& value(Var v) const { return node(v.id).value; }
  bool needs_grad(Var v) const { return node(v.id).needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient slot for an input, allocated on first use.
  Tensor& grad_of(int id) {
    Node& n = node(id);
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
  }

  /// Runs reverse accumulation from `output` seeded with `seed`.
  void backward(Var output, const Tensor& seed) {
    if (output.tape != this || output.id < 0 || output.id >= static_cast<int>(nodes_.size())) {
      throw Error(ErrorCode::tape_mismatch, "output does not belong to this tape");
    }
    if (seed.shape() != value(output).shape()) {
      throw Error(ErrorCode::tape_mismatch, "loss gradient " + shape_string(seed.shape()) +
                                                " does not match output " + shape_string(value(output).shape()));
    }
    for (Node& n : nodes_) n.grad = Tensor{};
    grad_of(output.id) = seed;
    for (int id = output.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.needs_grad || n.grad.empty() || !n.backward) continue;
      n.backward(*this, id);
    }
  }

 private:
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

namespace ops {

inline bool any_grad(Tape& t, std::initializer_list<Var> vs) {
  for (Var v : vs) {
    if (t.needs_grad(v)) return true;
  }
  return false;
}

inline Var conv2d(Var x, Var taps, Var bias, ConvSpec spec) {
  Tape& t = *x.tape;
  Tensor y = nn::conv2d(x.value(), taps.value(), bias.value(), spec);
  const bool g = any_grad(t, {x, taps, bias});
  return t.push(std::move(y), g, [x, taps, bias, spec](Tape& tape, int self) {
    const Tensor& dy = tape.node(self).grad;
    Tensor* dw = tape.needs_grad(taps) ? &tape.grad_of(taps.id) : nullptr;
    Tensor* db = tape.needs_grad(bias) ? &tape.grad_of(bias.id) : nullptr;
    const bool need_dx = tape.needs_grad(x);
    Tensor dx = conv2d_backward(tape.value(x), tape.value(taps), spec, dy, dw, db, need_dx);
    if (need_dx) {
      Tensor& gx = tape.grad_of(x.id);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dx[i];
    }
  });
}

inline Var transposed_conv2d(Var x, Var taps, Var bias) {
  Tape& t = *x.tape;
  Tensor y = nn::transposed_conv2d(x.value(), taps.value(), bias.value());
  const bool g = any_grad(t, {x, taps, bias});
  return t.push(std::move(y), g, [x, taps, bias](Tape& tape, int self) {
    const Tensor& dy = tape.node(self).grad;
    Tensor* dw = tape.needs_grad(taps) ? &tape.grad_of(taps.id) : nullptr;
    Tensor* db = tape.needs_grad(bias) ? &tape.grad_of(bias.id) : nullptr;
    const bool need_dx = tape.needs_grad(x);
    Tensor dx = transposed_conv2d_backward(tape.value(x), tape.value(taps), dy, dw, db, need_dx);
    if (need_dx) {
      Tensor& gx = tape.grad_of(x.id);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dx[i];
    }
  });
}

inline Var activation(Var x, Activation a) {
  Tape& t = *x.tape;
  Tensor y = nn::activation(x.value(), a);
  if (a == Activation::identity) return x;
  return t.push(std::move(y), t.needs_grad(x), [x, a](Tape& tape, int self) {
    const Tensor& dy = tape.node(self).grad;
    const Tensor& out = tape.node(self).value;
    const Tensor& in = tape.value(x);
    Tensor& gx = tape.grad_of(x.id);
    if (a == Activation::leaky_relu) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += in[i] >= 0.0 ? dy[i] : kLeakySlope * dy[i];
    } else {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dy[i] * out[i] * (1.0 - out[i]);
    }
  });
}

inline Var leaky_relu(Var x) { return activation(x, Activation::leaky_relu); }
inline Var sigmoid(Var x) { return activation(x, Activation::sigmoid); }

inline Var add(Var a, Var b) {
  Tape& t = *a.tape;
  if (a.value().shape() != b.value().shape()) throw Error(ErrorCode::shape_mismatch, "add: shapes differ");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return t.push(std::move(y), any_grad(t, {a, b}), [a, b](Tape& tape, int self) {
    const Tensor& dy = tape.node(self).grad;
    for (Var v : {a, b}) {
      if (!tape.needs_grad(v)) continue;
      Tensor& g = tape.grad_of(v.id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
    }
  });
}

/// Channel-axis concatenation of tensors sharing (N, H, W).
inline Var concat(const std::vector<Var>& parts) {
  Tape& t = *parts.front().tape;
  const Tensor& first = parts.front().value();
  int total = 0;
  bool g = false;
  for (Var p : parts) {
    const auto& s = p.value().shape();
    if (s[0] != first.n() || s[1] != first.h() || s[2] != first.w()) {
      throw Error(ErrorCode::shape_mismatch, "concat: spatial shapes differ");
    }
    total += s[3];
    g = g || t.needs_grad(p);
  }
  Tensor y(first.n(), first.h(), first.w(), total);
  const std::size_t pixels = static_cast<std::size_t>(first.n()) * first.h() * first.w();
  int offset = 0;
  for (Var p : parts) {
    const Tensor& v = p.value();
    for (std::size_t px = 0; px < pixels; ++px) {
      std::copy(v.data() + px * v.c(), v.data() + (px + 1) * v.c(), y.data() + px * total + offset);
    }
    offset += v.c();
  }
  return t.push(std::move(y), g, [parts, pixels, total](Tape& tape, int self) {
    const Tensor& dy = tape.node(self).grad;
    int off = 0;
    for (Var p : parts) {
      const int c = tape.value(p).c();
      if (tape.needs_grad(p)) {
        Tensor& gp = tape.grad_of(p.id);
        for (std::size_t px = 0; px < pixels; ++px) {
          for (int ch = 0; ch < c; ++ch) gp[px * c + ch] += dy[px * total + off + ch];
        }
      }
      off += c;
    }
  });
}

/// x (N,H,W,C) scaled per pixel by channel `index` of maps (N,H,W,K).
inline Var scale_by_map(Var x, Var maps, int index) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const Tensor& mv = maps.value();
  if (mv.n() != xv.n() || mv.h() != xv.h() || mv.w() != xv.w() || index < 0 || index >= mv.c()) {
    throw Error(ErrorCode::shape_mismatch, "scale_by_map: incompatible shapes");
  }
  const std::size_t pixels = static_cast<std::size_t>(xv.n()) * xv.h() * xv.w();
  const int c = xv.c();
  const int k = mv.c();
  Tensor y = xv;
  for (std::size_t px = 0; px < pixels; ++px) {
    const double a = mv[px * k + index];
    for (int ch = 0; ch < c; ++ch) y[px * c + ch] *= a;
  }
  return t.push(std::move(y), any_grad(t, {x, maps}), [x, maps, index, pixels, c, k](Tape& tape, int self) {
    const Tensor& dy = tape.node(self).grad;
    const Tensor& xv2 = tape.value(x);
    const Tensor& mv2 = tape.value(maps);
    if (tape.needs_grad(x)) {
      Tensor& gx = tape.grad_of(x.id);
      for (std::size_t px = 0; px < pixels; ++px) {
        const double a = mv2[px * k + index];
        for (int ch = 0; ch < c; ++ch) gx[px * c + ch] += a * dy[px * c + ch];
      }
    }
    if (tape.needs_grad(maps)) {
      Tensor& gm = tape.grad_of(maps.id);
      for (std::size_t px = 0; px < pixels; ++px) {
        double s = 0.0;
        for (int ch = 0; ch < c; ++ch) s += xv2[px * c + ch] * dy[px * c + ch];
        gm[px * k + index] += s;
      }
    }
  });
}

/// x (N,H,W,C) scaled channel-wise by a per-sample vector v (N,1,1,C).
inline Var scale_by_channel(Var x, Var v) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const Tensor& vv = v.value();
  if (vv.n() != xv.n() || vv.h() != 1 || vv.w() != 1 || vv.c() != xv.c()) {
    throw Error(ErrorCode::shape_mismatch, "scale_by_channel: incompatible shapes");
  }
  const std::size_t hw = static_cast<std::size_t>(xv.h()) * xv.w();
  const int c = xv.c();
  Tensor y = xv;
  for (int b = 0; b < xv.n(); ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      for (int ch = 0; ch < c; ++ch) y[(b * hw + p) * c + ch] *= vv[static_cast<std::size_t>(b) * c + ch];
    }
  }
  return t.push(std::move(y), any_grad(t, {x, v}), [x, v, hw, c](Tape& tape, int self) {
    const Tensor& dy = tape.node(self).grad;
    const Tensor& xv2 = tape.value(x);
    const Tensor& vv2 = tape.value(v);
    const int n = xv2.n();
    if (tape.needs_grad(x)) {
      Tensor& gx = tape.grad_of(x.id);
      for (int b = 0; b < n; ++b) {
        for (std::size_t p = 0; p < hw; ++p) {
          for (int ch = 0; ch < c; ++ch) {
            const std::size_t i = (b * hw + p) * c + ch;
            gx[i] += vv2[static_cast<std::size_t>(b) * c + ch] * dy[i];
          }
        }
      }
    }
    if (tape.needs_grad(v)) {
      Tensor& gv = tape.grad_of(v.id);
      for (int b = 0; b < n; ++b) {
        for (std::size_t p = 0; p < hw; ++p) {
          for (int ch = 0; ch < c; ++ch) {
            const std::size_t i = (b * hw + p) * c + ch;
            gv[static_cast<std::size_t>(b) * c + ch] += xv2[i] * dy[i];
          }
        }
      }
    }
  });
}

/// Global average pooling to (N,1,1,C).
inline Var global_average_pool(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const std::size_t hw = static_cast<std::size_t>(xv.h()) * xv.w();
  const int c = xv.c();
  Tensor y(xv.n(), 1, 1, c);
  for (int b = 0; b < xv.n(); ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      for (int ch = 0; ch < c; ++ch) y[static_cast<std::size_t>(b) * c + ch] += xv[(b * hw + p) * c + ch];
    }
  }
  for (double& v : y.values()) v /= static_cast<double>(hw);
  return t.push(std::move(y), t.needs_grad(x), [x, hw, c](Tape& tape, int self) {
    const Tensor& dy = tape.node(self).grad;
    Tensor& gx = tape.grad_of(x.id);
    const double inv = 1.0 / static_cast<double>(hw);
    for (int b = 0; b < gx.n(); ++b) {
      for (std::size_t p = 0; p < hw; ++p) {
        for (int ch = 0; ch < c; ++ch) gx[(b * hw + p) * c + ch] += dy[static_cast<std::size_t>(b) * c + ch] * inv;
      }
    }
  });
}

/// Fully connected layer on (N,1,1,Cin) with weights (1,1,Cin,Cout).
inline Var dense(Var x, Var weights, Var bias) { return conv2d(x, weights, bias, ConvSpec{}); }

}  // namespace ops

}  // namespace kpac::nn
