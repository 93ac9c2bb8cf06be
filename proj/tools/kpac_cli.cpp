// kpac: command-line front end for the deblurring library.
//
// Every successful run ends with one line "RESULT key=value ...". Exit codes:
// 0 success, 1 runtime failure, 2 usage error.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kpac/kpac.hpp"

namespace {

using namespace kpac;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

class ResultLine {
 public:
  ResultLine& add(const std::string& key, const std::string& value) {
    out_ << ' ' << key << '=' << value;
    return *this;
  }
  ResultLine& add(const std::string& key, double value) { return add(key, fmt(value)); }
  ResultLine& add(const std::string& key, long long value) { return add(key, std::to_string(value)); }
  ResultLine& add(const std::string& key, int value) { return add(key, static_cast<long long>(value)); }
  ResultLine& add(const std::string& key, std::size_t value) { return add(key, static_cast<long long>(value)); }
  void print() const { std::cout << "RESULT" << out_.str() << '\n'; }

 private:
  std::ostringstream out_;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  return parts;
}

double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw UsageError("bad " + what + ": " + s);
    return v;
  } catch (const std::logic_error&) {
    throw UsageError("bad " + what + ": " + s);
  }
}

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& p : split(s, ',')) out.push_back(parse_number(p, what));
  if (out.empty()) throw UsageError("empty " + what);
  return out;
}

std::pair<int, int> parse_pair(const std::string& s, char sep, const std::string& what) {
  const auto parts = split(s, sep);
  if (parts.size() != 2) throw UsageError(what + " must look like A" + std::string(1, sep) + "B");
  const double a = parse_number(parts[0], what);
  const double b = parse_number(parts[1], what);
  if (a != std::floor(a) || b != std::floor(b) || a < 1 || b < 1) throw UsageError(what + " must be positive integers");
  return {static_cast<int>(a), static_cast<int>(b)};
}

KernelKind kind_of(const std::string& s) {
  try {
    return parse_kernel_kind(s);
  } catch (const Error&) {
    throw UsageError("--kind must be disc or gaussian");
  }
}

int kernel_size(KernelKind kind, double param, int requested) {
  return requested > 0 ? requested : min_kernel_size(kind, param);
}

// Shifts the DC tap of an origin-centered grid to the middle for display.
Image centered_view(const Grid& g) {
  Image img(g.height(), g.width(), 1);
  for (int r = 0; r < g.height(); ++r) {
    for (int c = 0; c < g.width(); ++c) {
      img.at(r, c, 0) = g.wrapped(r - g.height() / 2, c - g.width() / 2);
    }
  }
  return img;
}

struct Options {
  std::string in, out, a, b, weights_path, out_weights, out_vis;
  std::string kind = "gaussian";
  std::string grid = "127,127";
  std::string res = "1280x720";
  std::string scales, blend, mode = "upsample";
  double param = 1.0;
  double eps = 1e-2;
  double target = 3.5;
  int size = 0;
  int s = 5;
  int levels = 3, blocks = 2, k = 5, n = 5, width = 48;
  bool unshared = false;
  int steps = 2000;
  long long seed = 1;
  int bit_depth = 8;
};

void add_kernel_flags(CLI::App* c, Options& o) {
  c->add_option("--kind", o.kind, "disc or gaussian");
  c->add_option("--param", o.param, "disc radius or gaussian sigma, in pixels");
}

int run_blur(const Options& o) {
  const KernelKind kind = kind_of(o.kind);
  const Kernel k = make_kernel(kind, o.param, kernel_size(kind, o.param, o.size));
  const Image x = load_netpbm(o.in);
  const Image y = convolve_circular(x, k);
  save_netpbm(y, o.out, o.bit_depth);
  ResultLine().add("out", o.out).add("kernel_size", k.size()).add("psnr_vs_input", psnr(y, x).value).print();
  return 0;
}

int run_invert(const Options& o) {
  const KernelKind kind = kind_of(o.kind);
  const auto [h, w] = parse_pair(o.grid, ',', "--grid");
  const Kernel k = make_kernel(kind, o.param, kernel_size(kind, o.param, o.size));
  const Grid inv = wiener_inverse_kernel(k, o.eps, h, w);
  double lo = inv.data().front(), hi = lo;
  for (double v : inv.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  ResultLine line;
  if (!o.out_vis.empty()) {
    Image vis = centered_view(inv);
    const double span = hi > lo ? hi - lo : 1.0;
    for (double& v : vis.data()) v = (v - lo) / span;
    save_netpbm(vis, o.out_vis, o.bit_depth);
    line.add("out_vis", o.out_vis);
  }
  line.add("min_tap", lo).add("max_tap", hi).add("sum", inv.sum()).print();
  return 0;
}

int run_deblur(const Options& o) {
  const KernelKind kind = kind_of(o.kind);
  const Kernel k = make_kernel(kind, o.param, kernel_size(kind, o.param, o.size));
  const Image y = load_netpbm(o.in);
  Image x;
  ResultLine line;
  if (o.scales.empty()) {
    if (!o.blend.empty()) throw UsageError("--weights requires --scales");
    x = deconvolve(y, wiener_inverse_kernel(k, o.eps, y.height(), y.width()));
    line.add("scales", "1");
  } else {
    const auto sv = parse_list(o.scales, "--scales");
    BlendWeights blend;
    for (double s : sv) blend.scales.push_back(ScaleFactor::from_real(s));
    if (o.blend.empty()) {
      blend.weights.assign(sv.size(), 1.0 / static_cast<double>(sv.size()));
    } else {
      blend.weights = parse_list(o.blend, "--weights");
    }
    if (blend.weights.size() != blend.scales.size()) throw UsageError("--weights needs one value per scale");
    double largest = 1.0;
    for (const auto& s : blend.scales) largest = std::max(largest, s.value());
    const int g = base_grid_for(std::min(y.height(), y.width()), static_cast<int>(std::ceil(largest)));
    const Grid kdag = wiener_inverse(embed_kernel(k, g, g), o.eps);
    const ScaleMode mode = [&] {
      try {
        return parse_scale_mode(o.mode);
      } catch (const Error&) {
        throw UsageError("--mode must be upsample or dilate");
      }
    }();
    x = multiscale_deconvolve(y, kdag, blend, mode);
    line.add("scales", o.scales).add("base_grid", g).add("mode", o.mode);
  }
  save_netpbm(x, o.out, o.bit_depth);
  line.add("out", o.out).print();
  return 0;
}

int run_approx(const Options& o) {
  ApproxSetup s;
  s.kind = kind_of(o.kind);
  s.param = o.param;
  s.eps = o.eps;
  s.seed = static_cast<std::uint64_t>(o.seed);
  s.target = ScaleFactor::from_real(o.target);
  s.scales = {ScaleFactor::integer(static_cast<int>(std::floor(o.target))),
              ScaleFactor::integer(static_cast<int>(std::floor(o.target)) + 1)};
  const ApproxResult r = run_scale_blend(s);
  ResultLine()
      .add("uniform_accuracy", r.uniform_accuracy)
      .add("nnls_accuracy", r.fitted_accuracy)
      .add("w_lo", r.fitted_weights.at(0))
      .add("w_hi", r.fitted_weights.at(1))
      .print();
  return 0;
}

EquivalenceSetup equivalence_setup(const Options& o) {
  EquivalenceSetup s;
  s.kind = kind_of(o.kind);
  s.param = o.param;
  s.scale = o.s;
  s.eps = o.eps;
  s.seed = static_cast<std::uint64_t>(o.seed);
  const auto [h, w] = parse_pair(o.grid, ',', "--grid");
  if (h != w) throw Error(ErrorCode::invalid_config, "equivalence experiments use a square grid");
  s.grid = h;
  return s;
}

int run_equivalence(const Options& o, bool dilation) {
  const EquivalenceSetup s = equivalence_setup(o);
  const EquivalenceResult r = dilation ? run_dilation_equivalence(s) : run_commutativity(s);
  ResultLine()
      .add("psnr", r.psnr_between)
      .add("psnr_a_vs_sharp", r.psnr_reference)
      .add("psnr_b_vs_sharp", r.psnr_candidate)
      .add("psnr_blurred", r.psnr_blurred)
      .add("base_grid", r.base_grid)
      .print();
  return 0;
}

nn::NetworkConfig network_config(const Options& o) {
  nn::NetworkConfig c;
  c.levels = o.levels;
  c.blocks = o.blocks;
  c.k = o.k;
  c.n = o.n;
  c.width = o.width;
  c.share_weights = !o.unshared;
  c.validate();
  return c;
}

int run_info(const Options& o) {
  const nn::NetworkConfig c = network_config(o);
  const auto [w, h] = parse_pair(o.res, 'x', "--res");
  ResultLine()
      .add("params", nn::param_count(c))
      .add("flops", static_cast<double>(nn::flops_estimate(c, h, w)))
      .add("res", o.res)
      .print();
  return 0;
}

int run_infer(const Options& o) {
  const nn::NetworkWeights w = nn::load_weights(o.weights_path);
  const Image x = load_netpbm(o.in);
  const nn::Tensor out = nn::net_forward(nn::image_to_tensor(x), w);
  const Image y = nn::tensor_to_image(out, x.channels());
  save_netpbm(y, o.out, o.bit_depth);
  ResultLine().add("out", o.out).add("psnr_vs_input", psnr(y, x).value).print();
  return 0;
}

int run_train(const Options& o) {
  if (o.steps < 0) throw UsageError("--steps must be >= 0");
  const auto seed = static_cast<std::uint64_t>(o.seed);
  const nn::NetworkConfig cfg = nn::toy_config();
  const auto train = nn::make_blur_dataset(nn::kToyTrainPairs, nn::kToyPatch, seed);
  const auto held_out = nn::make_blur_dataset(nn::kToyHeldOutPairs, nn::kToyPatch, seed + 1000003);
  const nn::TrainResult r = nn::train_toy(cfg, train, o.steps, seed, {}, [](int step, double loss) {
    std::cout << "step " << step << " loss " << fmt(loss) << '\n';
  });
  const nn::HeldOutScore score = nn::evaluate(r.weights, held_out);
  if (!o.out_weights.empty()) nn::save_weights(r.weights, o.out_weights);
  ResultLine()
      .add("steps", o.steps)
      .add("heldout_mae", score.network_mae)
      .add("blurred_mae", score.blurred_mae)
      .add("improvement", score.improvement())
      .print();
  return 0;
}

int run_metrics(const Options& o) {
  const Image a = load_netpbm(o.a);
  const Image b = load_netpbm(o.b);
  ResultLine().add("psnr", psnr(a, b).value).add("mae", mae(a, b).value).print();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Defocus deblurring toolkit"};
  app.require_subcommand(1);
  Options o;

  auto* blur = app.add_subcommand("blur", "Blur an image with a disc or gaussian kernel");
  blur->add_option("--in", o.in)->required();
  blur->add_option("--out", o.out)->required();
  add_kernel_flags(blur, o);
  blur->add_option("--size", o.size, "odd kernel size (default: smallest that fits)");

  auto* invert = app.add_subcommand("invert", "Wiener inverse kernel on a grid");
  add_kernel_flags(invert, o);
  invert->add_option("--size", o.size);
  invert->add_option("--eps", o.eps);
  invert->add_option("--grid", o.grid, "H,W");
  invert->add_option("--out-vis", o.out_vis);

  auto* deblur = app.add_subcommand("deblur", "Deconvolve an image, optionally blending several scales");
  deblur->add_option("--in", o.in)->required();
  deblur->add_option("--out", o.out)->required();
  add_kernel_flags(deblur, o);
  deblur->add_option("--size", o.size);
  deblur->add_option("--eps", o.eps);
  deblur->add_option("--scales", o.scales, "s1,s2,...");
  deblur->add_option("--weights", o.blend, "w1,w2,...");
  deblur->add_option("--mode", o.mode, "upsample or dilate");

  auto* approx = app.add_subcommand("approx", "Blend two bracketing scales: uniform vs fitted weights");
  add_kernel_flags(approx, o);
  approx->add_option("--target", o.target);
  approx->add_option("--eps", o.eps);
  approx->add_option("--seed", o.seed);

  auto* eq4 = app.add_subcommand("validate-eq4", "Upsampled-kernel inverse vs upsampled inverse kernel");
  auto* dil = app.add_subcommand("validate-dilate", "Dilated vs upsampled inverse kernel");
  for (auto* c : {eq4, dil}) {
    add_kernel_flags(c, o);
    c->add_option("--s", o.s, "integer scale");
    c->add_option("--grid", o.grid, "H,W");
    c->add_option("--eps", o.eps);
    c->add_option("--seed", o.seed);
  }

  auto* info = app.add_subcommand("kpac-info", "Parameter count and FLOPs of a network configuration");
  info->add_option("--levels", o.levels);
  info->add_option("--blocks", o.blocks);
  info->add_option("--k", o.k);
  info->add_option("--n", o.n);
  info->add_option("--width", o.width);
  info->add_flag("--unshared", o.unshared, "independent taps per atrous branch");
  info->add_option("--res", o.res, "WxH");

  auto* infer = app.add_subcommand("kpac-infer", "Run a trained network on an image");
  infer->add_option("--weights", o.weights_path)->required();
  infer->add_option("--in", o.in)->required();
  infer->add_option("--out", o.out)->required();

  auto* train = app.add_subcommand("kpac-train", "Train the toy network on synthetic blur");
  train->add_option("--steps", o.steps);
  train->add_option("--seed", o.seed);
  train->add_option("--out-weights", o.out_weights);

  auto* metrics = app.add_subcommand("metrics", "PSNR and MAE between two images");
  metrics->add_option("--a", o.a)->required();
  metrics->add_option("--b", o.b)->required();

  for (auto* c : {blur, invert, deblur, infer}) c->add_option("--bits", o.bit_depth, "8 or 16")->check(CLI::IsMember({8, 16}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*blur) return run_blur(o);
    if (*invert) return run_invert(o);
    if (*deblur) return run_deblur(o);
    if (*approx) return run_approx(o);
    if (*eq4) return run_equivalence(o, false);
    if (*dil) return run_equivalence(o, true);
    if (*info) return run_info(o);
    if (*infer) return run_infer(o);
    if (*train) return run_train(o);
    if (*metrics) return run_metrics(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
