#include <gtest/gtest.h>

#include <random>

#include "net_helpers.hpp"
#include "oracles.hpp"

using namespace kpac;
using namespace kpac::nn;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::invalid_config;
}

NetworkWeights zeroed(NetworkWeights w) {
  for (std::size_t i = 0; i < w.size(); ++i) w.param(i).value.fill(0.0);
  return w;
}

}  // namespace

TEST(Attention, ZeroWeightsGiveOneHalf) {
  const NetworkWeights w = zeroed(build_network(NetworkConfig{}, 1));
  std::mt19937_64 rng(1);
  const Tensor h1 = oracle::random_tensor({1, 8, 8, 96}, rng);
  const Tensor alpha = scale_attention(h1, w);
  const Tensor beta = shape_attention(h1, w);
  for (double v : alpha.values()) EXPECT_DOUBLE_EQ(v, 0.5);
  for (double v : beta.values()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Attention, ShapesOfDefaultNetwork) {
  const NetworkWeights w = build_network(NetworkConfig{}, 2);
  std::mt19937_64 rng(2);
  const Tensor h1 = oracle::random_tensor({1, 32, 32, 96}, rng);
  EXPECT_EQ(scale_attention(h1, w).shape(), (Tensor::Shape{1, 32, 32, 5}));
  EXPECT_EQ(shape_attention(h1, w).shape(), (Tensor::Shape{1, 1, 1, 48}));
}

TEST(Attention, ValuesStayInOpenUnitInterval) {
  const NetworkConfig cfg = nethelp::tiny_config();
  for (int draw = 0; draw < 100; ++draw) {
    const NetworkWeights w = build_network(cfg, 100 + draw);
    std::mt19937_64 rng(draw);
    const Tensor h1 = oracle::random_tensor({1, 4, 4, cfg.kpac_channels()}, rng);
    const Tensor alpha = scale_attention(h1, w);
    const Tensor beta = shape_attention(h1, w);
    for (double v : alpha.values()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
    for (double v : beta.values()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(KpacBlock, OutputShapeAndZeroTaps) {
  const NetworkConfig cfg = nethelp::tiny_config();
  NetworkWeights w = build_network(cfg, 3);
  std::mt19937_64 rng(3);
  const Tensor h1 = oracle::random_tensor({2, 6, 5, 8}, rng);
  EXPECT_EQ(kpac_block_forward(h1, w).shape(), h1.shape());
  w.get("kpac1.shared.w").fill(0.0);
  w.get("kpac1.shared.b").fill(0.0);
  // Every branch is zero, so the fusion conv sees only zeros.
  const Tensor y = kpac_block_forward(h1, w);
  const Tensor& fb = w.get("kpac1.fusion.b");
  for (int b = 0; b < 2; ++b)
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 5; ++c)
        for (int ch = 0; ch < 8; ++ch) EXPECT_DOUBLE_EQ(y.at(b, r, c, ch), activate(fb[ch], Activation::leaky_relu));
  EXPECT_EQ(code_of([&] { kpac_block_forward(Tensor(1, 4, 4, 7), w); }), ErrorCode::channel_mismatch);
}

TEST(KpacBlock, OneHotScaleAttentionSelectsOneBranch) {
  const NetworkConfig cfg = nethelp::tiny_config();
  NetworkWeights w = build_network(cfg, 4);
  nethelp::randomize(w, 4);
  std::mt19937_64 rng(4);
  const Tensor h1 = oracle::random_tensor({1, 6, 6, 8}, rng);
  for (int pick = 0; pick < cfg.n; ++pick) {
    w.get("kpac1.scale.out.w").fill(0.0);
    Tensor& bias = w.get("kpac1.scale.out.b");
    for (int i = 0; i < cfg.n; ++i) bias[i] = i == pick ? 60.0 : -60.0;

    const Tensor beta = shape_attention(h1, w);
    Tensor branch = nethelp::lrelu(oracle::nested_conv2d(h1, w.get("kpac1.shared.w"), w.get("kpac1.shared.b"), 1,
                                                         pick + 1, true));
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c)
        for (int ch = 0; ch < branch.c(); ++ch) branch.at(0, r, c, ch) *= beta.at(0, 0, 0, ch);
    std::vector<Tensor> parts;
    for (int i = 0; i < cfg.n; ++i) parts.push_back(i == pick ? branch : Tensor(branch.shape()));
    const Tensor expect = nethelp::lrelu(
        oracle::nested_conv2d(nethelp::cat(parts), w.get("kpac1.fusion.w"), w.get("kpac1.fusion.b"), 1, 1, true));
    EXPECT_LT(oracle::max_abs_diff(kpac_block_forward(h1, w), expect), 1e-12) << pick;
  }
}

TEST(Architecture, ParameterCounts) {
  NetworkConfig three;
  EXPECT_NEAR(static_cast<double>(param_count(three)), 2.06e6, 0.03 * 2.06e6);
  NetworkConfig two;
  two.levels = 2;
  EXPECT_NEAR(static_cast<double>(param_count(two)), 1.58e6, 0.10 * 1.58e6);
  NetworkConfig unshared = two;
  unshared.share_weights = false;
  EXPECT_GT(param_count(unshared), param_count(two));
  EXPECT_EQ(param_count(build_network(three, 0)), param_count(three));
}

TEST(Architecture, FlopsNearReportedScale) {
  const double f = static_cast<double>(flops_estimate(NetworkConfig{}, 720, 1280));
  EXPECT_GT(f, 0.5 * 197e9);
  EXPECT_LT(f, 1.5 * 197e9);
}

TEST(Architecture, InvalidConfigs) {
  NetworkConfig c;
  c.levels = 4;
  EXPECT_EQ(code_of([&] { build_network(c, 0); }), ErrorCode::invalid_config);
  c = NetworkConfig{};
  c.n = 0;
  EXPECT_EQ(code_of([&] { param_count(c); }), ErrorCode::invalid_config);
}

TEST(Forward, DeterministicAndShaped) {
  const NetworkConfig cfg = nethelp::tiny_config();
  const NetworkWeights a = build_network(cfg, 5);
  const NetworkWeights b = build_network(cfg, 5);
  EXPECT_TRUE(a.same_values(b));
  EXPECT_FALSE(a.same_values(build_network(cfg, 6)));
  std::mt19937_64 rng(5);
  for (int batch : {1, 2}) {
    const Tensor x = oracle::random_tensor({batch, 64, 64, 3}, rng, 0.5);
    const Tensor y1 = net_forward(x, a);
    EXPECT_EQ(y1.shape(), x.shape());
    EXPECT_EQ(y1, net_forward(x, b));
    EXPECT_TRUE(y1.all_finite());
  }
}

TEST(Forward, ZeroWeightsAreIdentity) {
  const NetworkWeights w = zeroed(build_network(nethelp::tiny_config(), 6));
  std::mt19937_64 rng(6);
  const Tensor x = oracle::random_tensor({1, 16, 24, 3}, rng);
  EXPECT_EQ(net_forward(x, w), x);
}

TEST(Forward, ZeroInitOutputStartsAsIdentity) {
  NetworkConfig cfg = nethelp::tiny_config();
  cfg.zero_init_output = true;
  cfg.output_activation = Activation::identity;
  std::mt19937_64 rng(7);
  const Tensor x = oracle::random_tensor({1, 16, 16, 3}, rng);
  EXPECT_EQ(net_forward(x, build_network(cfg, 7)), x);
}

TEST(Forward, RejectsBadInputs) {
  const NetworkWeights w = build_network(nethelp::tiny_config(), 8);
  EXPECT_EQ(code_of([&] { net_forward(Tensor(1, 12, 16, 3), w); }), ErrorCode::bad_spatial_dims);
  EXPECT_EQ(code_of([&] { net_forward(Tensor(1, 16, 16, 1), w); }), ErrorCode::channel_mismatch);
}

TEST(Forward, MatchesStraightLineReference) {
  for (int levels : {2, 3}) {
    NetworkConfig cfg = nethelp::tiny_config();
    cfg.levels = levels;
    for (bool shared : {true, false}) {
      cfg.share_weights = shared;
      NetworkWeights w = build_network(cfg, 9);
      nethelp::randomize(w, 9, 0.3);
      std::mt19937_64 rng(9);
      const Tensor x = oracle::random_tensor({2, 16, 16, 3}, rng);
      const nethelp::Reference ref{w};
      EXPECT_LT(oracle::max_abs_diff(net_forward(x, w), ref.forward(x)), 1e-10) << levels << " " << shared;
    }
  }
}

TEST(Backward, FullNetworkFiniteDifferences) {
  NetworkWeights w = build_network(nethelp::tiny_config(), 10);
  nethelp::randomize_biases(w, 10);
  std::mt19937_64 rng(10);
  const Tensor x = oracle::random_tensor({1, 8, 8, 3}, rng);
  const auto rep = nethelp::network_fd_check(w, x, 11);
  EXPECT_LT(rep.max_rel, 1e-4) << rep.worst;
  EXPECT_EQ(rep.checked, w.element_count());
}

TEST(Backward, SharedGradientIsSumOverBranches) {
  NetworkConfig cfg = nethelp::tiny_config();
  NetworkWeights shared = build_network(cfg, 12);
  nethelp::randomize(shared, 12, 0.4);
  cfg.share_weights = false;
  NetworkWeights unshared = build_network(cfg, 12);
  for (std::size_t i = 0; i < unshared.size(); ++i) {
    std::string name = unshared.param(i).name;
    const auto ac = name.find(".ac");
    if (ac != std::string::npos) name = name.substr(0, ac) + ".shared" + name.substr(name.rfind('.'));
    unshared.param(i).value = shared.get(name);
  }
  std::mt19937_64 rng(12);
  const Tensor x = oracle::random_tensor({2, 16, 16, 3}, rng);
  const Tensor probe = oracle::random_tensor(x.shape(), rng);
  ForwardRecord rs(shared, x);
  ForwardRecord ru(unshared, x);
  ASSERT_LT(oracle::max_abs_diff(rs.output(), ru.output()), 1e-12);
  const Gradients gs = rs.backward(probe);
  const Gradients gu = ru.backward(probe);
  for (int b = 1; b <= cfg.blocks; ++b) {
    for (const char* part : {".w", ".b"}) {
      const std::string p = "kpac" + std::to_string(b) + ".";
      const Tensor& g = gs[shared.index(p + "shared" + part)];
      Tensor sum(g.shape());
      for (int i = 1; i <= cfg.n; ++i) {
        const Tensor& gi = gu[unshared.index(p + "ac" + std::to_string(i) + part)];
        for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += gi[j];
      }
      EXPECT_LT(oracle::max_abs_diff(g, sum), 1e-10);
    }
  }
}

TEST(WeightSharing, BranchesReadIdenticalTapsAfterTraining) {
  const NetworkConfig cfg = nethelp::tiny_config();
  const auto data = make_blur_dataset(8, 16, 13);
  const TrainResult r = train_toy(cfg, data, 20, 13);
  EXPECT_FALSE(r.weights.same_values(build_network(cfg, 13)));
  for (int b = 1; b <= cfg.blocks; ++b)
    for (int i = 2; i <= cfg.n; ++i) EXPECT_EQ(&branch_taps(r.weights, b, i), &branch_taps(r.weights, b, 1));

  NetworkConfig un = cfg;
  un.share_weights = false;
  const TrainResult ru = train_toy(un, data, 20, 13);
  EXPECT_NE(branch_taps(ru.weights, 1, 1), branch_taps(ru.weights, 1, 2));
}
