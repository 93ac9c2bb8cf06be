#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "kpac/image.hpp"
#include "kpac/netpbm.hpp"
#include "oracles.hpp"

using namespace kpac;

namespace {

std::vector<unsigned char> bytes_of(const std::string& header, std::vector<unsigned char> payload) {
  std::vector<unsigned char> out(header.begin(), header.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::invalid_config;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("kpac_test_" + name)).string();
}

}  // namespace

TEST(Netpbm, DecodesEightBitGray) {
  const Image img = decode_netpbm(bytes_of("P5\n2 2\n255\n", {0, 128, 255, 64}));
  ASSERT_EQ(img.channels(), 1);
  EXPECT_DOUBLE_EQ(img.at(0, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(img.at(0, 1, 0), 128.0 / 255.0);
  EXPECT_DOUBLE_EQ(img.at(1, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(img.at(1, 1, 0), 64.0 / 255.0);
}

TEST(Netpbm, DecodesColorPixel) {
  const Image img = decode_netpbm(bytes_of("P6\n1 1\n255\n", {255, 0, 0}));
  ASSERT_EQ(img.channels(), 3);
  EXPECT_EQ(img.data(), (std::vector<double>{1.0, 0.0, 0.0}));
}

TEST(Netpbm, SixteenBitIsBigEndian) {
  const Image img = decode_netpbm(bytes_of("P5\n2 1\n65535\n", {0x80, 0x00, 0x00, 0x01}));
  EXPECT_DOUBLE_EQ(img.at(0, 0, 0), 32768.0 / 65535.0);
  EXPECT_NEAR(img.at(0, 0, 0), 0.50000763, 1e-8);
  EXPECT_DOUBLE_EQ(img.at(0, 1, 0), 1.0 / 65535.0);
}

TEST(Netpbm, SkipsHeaderComments) {
  const Image img = decode_netpbm(bytes_of("P5\n# a comment\n1 1\n# another\n255\n", {51}));
  EXPECT_DOUBLE_EQ(img.at(0, 0, 0), 0.2);
}

TEST(Netpbm, RejectsOtherMagics) {
  for (const char* m : {"P1", "P2", "P3", "P4", "P7"}) {
    EXPECT_EQ(code_of([&] { decode_netpbm(bytes_of(std::string(m) + "\n1 1\n255\n", {0, 0, 0})); }),
              ErrorCode::unsupported_magic)
        << m;
  }
}

TEST(Netpbm, MalformedAndTruncated) {
  EXPECT_EQ(code_of([] { decode_netpbm(bytes_of("P5\n2 x\n255\n", {0, 0})); }), ErrorCode::malformed_header);
  EXPECT_EQ(code_of([] { decode_netpbm(bytes_of("P5\n2 2\n0\n", {0, 0, 0, 0})); }), ErrorCode::malformed_header);
  EXPECT_EQ(code_of([] { decode_netpbm(bytes_of("P5\n2 2\n255\n", {0, 0, 0})); }), ErrorCode::truncated_payload);
  EXPECT_EQ(code_of([] { decode_netpbm(bytes_of("P6\n1 1\n65535\n", {0, 0, 0, 0, 0})); }),
            ErrorCode::truncated_payload);
}

TEST(Netpbm, EncodeEndpointsAndRounding) {
  const auto two = encode_netpbm(Image(1, 2, 1, std::vector<double>{0.0, 1.0}), 8);
  EXPECT_EQ(std::vector<unsigned char>(two.end() - 2, two.end()), (std::vector<unsigned char>{0, 255}));
  const auto half = encode_netpbm(Image(1, 1, 1, std::vector<double>{0.5}), 8);
  EXPECT_EQ(half.back(), 128);
}

TEST(Netpbm, SaveLoadIsByteStableAfterFirstQuantization) {
  std::mt19937_64 rng(3);
  for (int bits : {8, 16}) {
    for (int ch : {1, 3}) {
      for (int trial = 0; trial < 10; ++trial) {
        const Image img = oracle::random_image(5 + trial, 7, ch, rng);
        const auto first = encode_netpbm(img, bits);
        const auto second = encode_netpbm(decode_netpbm(first), bits);
        const auto third = encode_netpbm(decode_netpbm(second), bits);
        EXPECT_EQ(first, second);
        EXPECT_EQ(second, third);
      }
    }
  }
}

TEST(Netpbm, FileRoundTripAndMissingFile) {
  std::mt19937_64 rng(4);
  const Image img = oracle::random_image(6, 4, 3, rng);
  const std::string path = temp_path("rt.ppm");
  save_netpbm(img, path, 16);
  const Image back = load_netpbm(path);
  EXPECT_LT(oracle::max_abs_diff(img, back), 1.0 / 65535.0);
  std::filesystem::remove(path);
  EXPECT_EQ(code_of([&] { load_netpbm(path); }), ErrorCode::io_failure);
  EXPECT_EQ(code_of([&] { save_netpbm(img, "/nonexistent_dir/x.ppm"); }), ErrorCode::io_failure);
}

TEST(Metrics, PsnrBasics) {
  std::mt19937_64 rng(5);
  const Image a = oracle::random_image(8, 8, 3, rng);
  EXPECT_EQ(psnr(a, a).value, std::numeric_limits<double>::infinity());
  EXPECT_NEAR(psnr(Image(4, 4, 1, 0.0), Image(4, 4, 1, 0.1)).value, 20.0, 1e-9);
  EXPECT_EQ(code_of([] { psnr(Image(2, 2, 1), Image(2, 3, 1)); }), ErrorCode::shape_mismatch);
}

TEST(Metrics, PsnrMatchesSecondImplementation) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const Image a = oracle::random_image(9, 11, 3, rng);
    const Image b = oracle::random_image(9, 11, 3, rng);
    long double mse = 0.0L;
    for (int r = 0; r < 9; ++r)
      for (int c = 0; c < 11; ++c)
        for (int ch = 0; ch < 3; ++ch) {
          const long double d = a.at(r, c, ch) - b.at(r, c, ch);
          mse += d * d;
        }
    mse /= 9 * 11 * 3;
    const double expected = static_cast<double>(-10.0L * std::log10(mse));
    EXPECT_NEAR(psnr(a, b).value, expected, 1e-9);
    EXPECT_DOUBLE_EQ(psnr(a, b).value, psnr(b, a).value);
  }
}

TEST(Metrics, MaeBasicsAndOracle) {
  EXPECT_EQ(mae(Image(3, 3, 1, 0.4), Image(3, 3, 1, 0.4)).value, 0.0);
  EXPECT_DOUBLE_EQ(mae(Image(3, 3, 3, 0.0), Image(3, 3, 3, 1.0)).value, 1.0);
  std::mt19937_64 rng(7);
  for (int t = 0; t < 20; ++t) {
    const Image a = oracle::random_image(5, 6, 3, rng);
    const Image b = oracle::random_image(5, 6, 3, rng);
    double s = 0.0;
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 6; ++c)
        for (int ch = 0; ch < 3; ++ch) s += std::abs(a.at(r, c, ch) - b.at(r, c, ch));
    EXPECT_NEAR(mae(a, b).value, s / 90.0, 1e-12);
    EXPECT_DOUBLE_EQ(mae(a, b).value, mae(b, a).value);
    EXPECT_GT(mae(a, b).value, 0.0);
  }
}

TEST(Kernels, TinyGaussianIsDelta) {
  const Kernel k = make_kernel(KernelKind::gaussian, 0.01, 3);
  EXPECT_NEAR(k.at(1, 1), 1.0, 1e-12);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (r != 1 || c != 1) EXPECT_NEAR(k.at(r, c), 0.0, 1e-12);
}

TEST(Kernels, SmallDiscIsCenterDominated) {
  const Kernel k = make_kernel(KernelKind::disc, 0.5, 3);
  EXPECT_NEAR(k.sum(), 1.0, 1e-12);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (r != 1 || c != 1) EXPECT_GT(k.at(1, 1), k.at(r, c));
}

TEST(Kernels, GaussianTapRatio) {
  const Kernel k = make_kernel(KernelKind::gaussian, 1.0, 7);
  EXPECT_NEAR(k.at(3, 3) / k.at(3, 4), std::exp(0.5), 1e-12);
  EXPECT_NEAR(k.at(3, 3) / k.at(4, 4), std::exp(1.0), 1e-12);
}

TEST(Kernels, SumsToOneAcrossParameters) {
  for (double p : {0.3, 0.5, 1.0, 1.7, 2.0, 3.5}) {
    for (KernelKind kind : {KernelKind::disc, KernelKind::gaussian}) {
      const int s = min_kernel_size(kind, p);
      EXPECT_NEAR(make_kernel(kind, p, s).sum(), 1.0, 1e-12);
      EXPECT_NEAR(make_kernel(kind, p, s + 4).sum(), 1.0, 1e-12);
    }
  }
}

TEST(Kernels, Errors) {
  EXPECT_EQ(code_of([] { make_kernel(KernelKind::disc, 2.0, 3); }), ErrorCode::size_too_small);
  EXPECT_EQ(code_of([] { make_kernel(KernelKind::gaussian, 1.0, 5); }), ErrorCode::size_too_small);
  EXPECT_EQ(code_of([] { make_kernel(KernelKind::gaussian, 1.0, 8); }), ErrorCode::size_too_small);
  EXPECT_EQ(code_of([] { make_kernel(KernelKind::disc, 0.0, 3); }), ErrorCode::nonpositive_param);
  EXPECT_EQ(code_of([] { make_kernel(KernelKind::gaussian, -1.0, 7); }), ErrorCode::nonpositive_param);
  EXPECT_EQ(code_of([] { Kernel(4); }), ErrorCode::size_too_small);
}

TEST(Normalize, OnesBecomeNinths) {
  const Kernel k = normalize_kernel(Kernel(3, 1.0));
  for (double t : k.taps()) EXPECT_DOUBLE_EQ(t, 1.0 / 9.0);
}

TEST(Normalize, IdempotentAndExact) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d(0.01, 5.0);
  for (int t = 0; t < 50; ++t) {
    Kernel k(5);
    for (double& v : k.taps()) v = d(rng);
    const Kernel n1 = normalize_kernel(k);
    EXPECT_NEAR(n1.sum(), 1.0, 1e-12);
    const Kernel n2 = normalize_kernel(n1);
    for (std::size_t i = 0; i < n1.taps().size(); ++i) EXPECT_NEAR(n1.taps()[i], n2.taps()[i], 1e-15);
  }
  Kernel z(3);
  z.at(0, 0) = 1.0;
  z.at(2, 2) = -1.0;
  EXPECT_EQ(code_of([&] { normalize_kernel(z); }), ErrorCode::zero_sum_kernel);
}
