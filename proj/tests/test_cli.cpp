#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "kpac/kpac.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::map<std::string, std::string> result;
};

CliRun run(const std::string& args) {
  const std::string cmd = std::string(KPAC_CLI_PATH) + " " + args + " 2>&1";
  CliRun r;
  FILE* p = popen(cmd.c_str(), "r");
  if (p == nullptr) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p) != nullptr) r.out += buf;
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::istringstream lines(r.out);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.rfind("RESULT", 0) != 0) continue;
    std::istringstream kv(line.substr(6));
    std::string tok;
    while (kv >> tok) {
      const auto eq = tok.find('=');
      if (eq != std::string::npos) r.result[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
  }
  return r;
}

class Cli : public ::testing::Test {
 protected:
  fs::path dir;
  void SetUp() override {
    dir = fs::temp_directory_path() / ("kpac_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  std::string scene(const std::string& name, int h = 48, int w = 40, int ch = 3) const {
    kpac::save_netpbm(kpac::synthetic_scene(h, w, ch, 5), path(name));
    return path(name);
  }
};

}  // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("blur --in x.ppm").code, 2);
  EXPECT_EQ(run("kpac-info --levels notanumber").code, 2);
  EXPECT_EQ(run("invert --kind gaussian --param 1 --grid 5").code, 2);
  EXPECT_EQ(run("invert --kind triangle --param 1").code, 2);
  EXPECT_EQ(run("kpac-info --res 1280by720").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, RuntimeErrorsExitOne) {
  const CliRun missing = run("metrics --a " + path("nope.pgm") + " --b " + path("nope.pgm"));
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.out.find("error:"), std::string::npos);
  EXPECT_EQ(run("invert --kind disc --param -1").code, 1);
  EXPECT_EQ(run("validate-eq4 --grid 63,65").code, 1);
  const std::string img = scene("a.ppm");
  EXPECT_EQ(run("deblur --in " + img + " --out " + path("o.ppm") + " --scales 1,2 --weights 0.5,-0.5").code, 1);
}

TEST_F(Cli, MetricsOfIdenticalImages) {
  const std::string img = scene("a.ppm");
  const CliRun r = run("metrics --a " + img + " --b " + img);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.result.at("psnr"), "inf");
  EXPECT_EQ(r.result.at("mae"), "0");
}

TEST_F(Cli, BlurThenDeblurImprovesPsnr) {
  const std::string img = scene("a.ppm", 64, 64, 1);
  const CliRun b = run("blur --in " + img + " --out " + path("b.pgm") + " --kind gaussian --param 1.5 --bits 16");
  ASSERT_EQ(b.code, 0) << b.out;
  const CliRun d = run("deblur --in " + path("b.pgm") + " --out " + path("d.pgm") +
                    " --kind gaussian --param 1.5 --eps 0.001 --bits 16");
  ASSERT_EQ(d.code, 0) << d.out;
  const double blurred = std::stod(run("metrics --a " + img + " --b " + path("b.pgm")).result.at("psnr"));
  const double restored = std::stod(run("metrics --a " + img + " --b " + path("d.pgm")).result.at("psnr"));
  EXPECT_GT(restored, blurred);
}

TEST_F(Cli, InvertReportsUnitSum) {
  const CliRun r = run("invert --kind gaussian --param 1.0 --grid 31,31 --out-vis " + path("k.pgm"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NEAR(std::stod(r.result.at("sum")), 1.0, 1e-2);
  EXPECT_TRUE(fs::exists(path("k.pgm")));
}

TEST_F(Cli, ValidationCommands) {
  const CliRun eq4 = run("validate-eq4 --kind gaussian --param 1.0 --s 3");
  ASSERT_EQ(eq4.code, 0) << eq4.out;
  EXPECT_GE(std::stod(eq4.result.at("psnr")), 45.0);
  const CliRun dil = run("validate-dilate --kind disc --param 2 --s 2");
  ASSERT_EQ(dil.code, 0) << dil.out;
  EXPECT_GE(std::stod(dil.result.at("psnr")), 40.0);
}

TEST_F(Cli, ApproxReportsBothAccuracies) {
  const CliRun r = run("approx --kind gaussian --param 1.0");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_GE(std::stod(r.result.at("uniform_accuracy")), 0.85);
  EXPECT_GE(std::stod(r.result.at("nnls_accuracy")), std::stod(r.result.at("uniform_accuracy")));
}

TEST_F(Cli, InfoMatchesLibrary) {
  const CliRun r = run("kpac-info");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(std::stoull(r.result.at("params")), kpac::nn::param_count(kpac::nn::NetworkConfig{}));
  const CliRun un = run("kpac-info --levels 2 --unshared");
  EXPECT_GT(std::stoull(un.result.at("params")), std::stoull(run("kpac-info --levels 2").result.at("params")));
}

TEST_F(Cli, TrainAndInfer) {
  const CliRun t = run("kpac-train --steps 3 --seed 1 --out-weights " + path("w.bin"));
  ASSERT_EQ(t.code, 0) << t.out;
  EXPECT_NE(t.out.find("step 0 loss"), std::string::npos);
  EXPECT_TRUE(t.result.count("improvement"));
  const std::string img = scene("a.ppm", 32, 32, 3);
  const CliRun i = run("kpac-infer --weights " + path("w.bin") + " --in " + img + " --out " + path("o.ppm"));
  ASSERT_EQ(i.code, 0) << i.out;
  EXPECT_TRUE(fs::exists(path("o.ppm")));
  const CliRun bad = run("kpac-infer --weights " + img + " --in " + img + " --out " + path("o2.ppm"));
  EXPECT_EQ(bad.code, 1);
}
