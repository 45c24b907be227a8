#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "reachlab/policy_value_net.hpp"
#include "reachlab/random.hpp"
#include "reachlab/robustness_bench.hpp"
#include "reachlab/run_config.hpp"

namespace fs = std::filesystem;
using namespace reachlab;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult cli(const std::string& args) {
  const std::string cmd = std::string(REACHLAB_CLI_PATH) + " " + args + " 2>&1";
  CliResult r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("reachlab_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string checkpoint(int K, std::uint64_t seed = 5) const {
    Rng rng(seed);
    const auto p = path("ckpt_k" + std::to_string(K) + ".bin");
    save_params(init_params(rng, K), p);
    return p;
  }

  fs::path dir_;
};

constexpr const char* kSmallGrid = "--grid 170:190:10,-40:-20:10";

}  // namespace

TEST_F(Cli, MissingConfigExitsWithUsageCodeAndNamesPath) {
  const std::string missing = path("nope/absent.ini");
  for (const char* cmd : {"train", "evaluate --checkpoint x.bin", "sweep --dry-run", "render-preview"}) {
    const CliResult r = cli(std::string(cmd) + " --config " + missing);
    EXPECT_EQ(r.code, 2) << cmd;
    EXPECT_NE(r.out.find(missing), std::string::npos) << r.out;
  }
}

TEST_F(Cli, BadConfigLineIsReported) {
  spit(path("bad.ini"), "[reach_env]\nvariant = M1\nazimuth = 200:100\n");
  const CliResult r = cli("sweep --dry-run --config " + path("bad.ini"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("bad.ini:3"), std::string::npos) << r.out;
}

TEST_F(Cli, UnknownFlagOrSubcommandIsUsageError) {
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("sweep --dry-run --bogus").code, 2);
  EXPECT_EQ(cli("sweep --dry-run --variant M9").code, 2);
  EXPECT_EQ(cli("sweep --dry-run --grid 1:2").code, 2);
}

TEST_F(Cli, ConfigPrintsParsableDefaults) {
  const CliResult bm = cli("config");
  const CliResult dr = cli("config --dr");
  ASSERT_EQ(bm.code, 0);
  ASSERT_EQ(dr.code, 0);
  EXPECT_EQ(bm.out, to_ini(RunConfig::baseline()));
  EXPECT_EQ(parse_run_config(dr.out).env.dr, DrSpec::randomized());
}

TEST_F(Cli, DryRunAccounting) {
  const CliResult full = cli("sweep --dry-run --episodes 1000");
  EXPECT_EQ(full.code, 0);
  EXPECT_NE(full.out.find("cells=153 episodes_per_cell=1000 total_episodes=153000"), std::string::npos)
      << full.out;
  const CliResult small = cli(std::string("sweep --dry-run --episodes 3 ") + kSmallGrid);
  EXPECT_NE(small.out.find("cells=9 episodes_per_cell=3 total_episodes=27"), std::string::npos) << small.out;
}

TEST_F(Cli, TrainWritesSelfDescribingRunAndRefusesOverwrite) {
  spit(path("t.ini"),
       "[run]\noutput_dir = " + path("run") +
           "\nseed = 3\n[a3c_trainer]\ntotal_steps = 300\nworkers = 1\neval_interval = 100\neval_episodes = 2\n");
  const CliResult first = cli("train --quiet --variant M1 --config " + path("t.ini"));
  ASSERT_EQ(first.code, 0) << first.out;
  for (const char* f : {"run_config.ini", "curve.csv", "final.bin", "latest.bin"})
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  const RunConfig snap = load_run_config(dir_ / "run" / "run_config.ini");
  EXPECT_EQ(snap.train.total_steps, 300);
  EXPECT_EQ(snap.seed, 3u);

  const std::string curve = slurp(dir_ / "run" / "curve.csv");
  EXPECT_EQ(curve.substr(0, curve.find('\n')), "global_step,mean_dist,max_dist,min_dist,mean_reward");
  EXPECT_NE(curve.find("\n100,"), std::string::npos);
  EXPECT_NE(curve.find("\n200,"), std::string::npos);
  EXPECT_NE(curve.find("\n300,"), std::string::npos);

  // M1 exposes seven increments per joint.
  EXPECT_NO_THROW(load_params(dir_ / "run" / "final.bin", 7));

  const CliResult again = cli("train --quiet --config " + path("t.ini"));
  EXPECT_EQ(again.code, 2);
  EXPECT_NE(again.out.find("--force"), std::string::npos) << again.out;
  EXPECT_EQ(slurp(dir_ / "run" / "curve.csv"), curve);

  const CliResult forced = cli("train --quiet --force --config " + path("t.ini"));
  EXPECT_EQ(forced.code, 0) << forced.out;
  EXPECT_EQ(slurp(dir_ / "run" / "curve.csv"), curve);
}

TEST_F(Cli, EvaluatePrintsCurveRow) {
  const CliResult r = cli("evaluate --episodes 2 --seed 4 --checkpoint " + checkpoint(7));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "global_step,mean_dist,max_dist,min_dist,mean_reward");
  EXPECT_EQ(cli("evaluate --episodes 2 --seed 4 --checkpoint " + checkpoint(7)).out, r.out);
}

TEST_F(Cli, CheckpointVariantMismatchRejected) {
  const std::string k5 = checkpoint(5);
  const CliResult r = cli(std::string("sweep --variant M1 --episodes 1 ") + kSmallGrid + " --out " + path("s") +
                    " --checkpoint " + k5);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("mismatch"), std::string::npos) << r.out;
  EXPECT_EQ(cli("evaluate --variant M0 --episodes 1 --checkpoint " + k5).code, 0);
  EXPECT_EQ(cli("evaluate --episodes 1 --checkpoint " + path("missing.bin")).code, 2);
}

TEST_F(Cli, SweepIsReproducibleAndSelfDescribing) {
  const std::string ck = checkpoint(7);
  const std::string base = std::string("sweep --seed 11 --episodes 3 ") + kSmallGrid + " --checkpoint " + ck;
  const CliResult a = cli(base + " --image --out " + path("a"));
  const CliResult b = cli(base + " --threads 3 --out " + path("b"));
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(b.code, 0) << b.out;
  const std::string csv = slurp(dir_ / "a" / "heatmap.csv");
  EXPECT_EQ(csv, slurp(dir_ / "b" / "heatmap.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "a" / "heatmap.json"));
  EXPECT_TRUE(fs::exists(dir_ / "a" / "heatmap.pgm"));
  EXPECT_FALSE(fs::exists(dir_ / "b" / "heatmap.pgm"));
  const RunConfig snap = load_run_config(dir_ / "a" / "run_config.ini");
  EXPECT_EQ(snap.grid.episodes_per_cell, 3);
  EXPECT_EQ(snap.grid.cell_count(), 9);

  const HeatMapGrid g = read_heatmap_csv(dir_ / "a" / "heatmap.csv");
  ASSERT_EQ(g.cells.size(), 9u);
  for (const auto& c : g.cells) EXPECT_EQ(c.episodes(), 3);
}

TEST_F(Cli, DefaultSweepHas153Rows) {
  const CliResult r = cli("sweep --episodes 1 --threads 1 --out " + path("full") + " --checkpoint " + checkpoint(7));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("cells=153"), std::string::npos);
  const std::string csv = slurp(dir_ / "full" / "heatmap.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 154);
}

TEST_F(Cli, CompareSelfIsZeroAndHandBuiltDifferences) {
  const std::string header = std::string(kHeatMapHeader) + "\n";
  spit(path("a.csv"), header +
                          "170.00,-40.00,80.0000,10,0.2,0.15,1\n"
                          "180.00,-40.00,50.0000,10,0.3,0.2,1\n"
                          "170.00,-30.00,100.0000,10,,,1\n"
                          "180.00,-30.00,20.0000,10,0.9,0.5,1\n");
  spit(path("b.csv"), header +
                          "170.00,-40.00,60.0000,10,0.2,0.15,1\n"
                          "180.00,-40.00,50.0000,10,0.3,0.2,1\n"
                          "170.00,-30.00,70.0000,10,0.1,0.1,1\n"
                          "180.00,-30.00,40.0000,10,0.9,0.5,1\n");
  const CliResult self = cli("compare " + path("a.csv") + " " + path("a.csv") + " --out " + path("self.csv"));
  ASSERT_EQ(self.code, 0) << self.out;
  EXPECT_NE(self.out.find("grand_mean_increment_pct=0.0000"), std::string::npos) << self.out;

  const CliResult ab = cli("compare " + path("a.csv") + " " + path("b.csv") + " --out " + path("inc.csv"));
  ASSERT_EQ(ab.code, 0) << ab.out;
  // (20 + 0 + 30 - 20) / 4
  EXPECT_NE(ab.out.find("grand_mean_increment_pct=7.5000"), std::string::npos) << ab.out;
  const std::string inc = slurp(dir_ / "inc.csv");
  EXPECT_NE(inc.find("170.00,-40.00,20.0000,1"), std::string::npos) << inc;
  EXPECT_NE(inc.find("180.00,-40.00,0.0000,1"), std::string::npos) << inc;
  EXPECT_NE(inc.find("170.00,-30.00,30.0000,1"), std::string::npos) << inc;
  EXPECT_NE(inc.find("180.00,-30.00,-20.0000,1"), std::string::npos) << inc;

  spit(path("c.csv"), header + "170.00,-40.00,60.0000,10,0.2,0.15,1\n");
  EXPECT_EQ(cli("compare " + path("a.csv") + " " + path("c.csv") + " --out " + path("x.csv")).code, 2);
}

TEST_F(Cli, RenderPreview) {
  const std::string p1 = path("p1.ppm"), p2 = path("p2.ppm"), p3 = path("p3.ppm");
  ASSERT_EQ(cli("render-preview --pose 180,-30 --seed 2 --out " + p1).code, 0);
  ASSERT_EQ(cli("render-preview --pose 180,-30 --seed 2 --out " + p2).code, 0);
  ASSERT_EQ(cli("render-preview --pose 180,-30 --seed 2 --shadow off --out " + p3).code, 0);
  const std::string a = slurp(p1);
  EXPECT_EQ(a.substr(0, 13), "P6\n64 64\n255\n");
  EXPECT_EQ(a.size(), 13u + 64 * 64 * 3);
  EXPECT_EQ(a, slurp(p2));
  EXPECT_NE(a, slurp(p3));

  int red = 0;
  for (std::size_t i = 13; i + 2 < a.size(); i += 3) {
    const auto r = static_cast<unsigned char>(a[i]), g = static_cast<unsigned char>(a[i + 1]),
               b = static_cast<unsigned char>(a[i + 2]);
    if (r > 100 && g < 60 && b < 60) ++red;
  }
  EXPECT_GT(red, 0);
  EXPECT_EQ(cli("render-preview --pose 180 --out " + p1).code, 2);
}
