#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "reachlab/run_config.hpp"

using namespace reachlab;

TEST(RunConfig, DefaultsReproduceTrainingTable) {
  const RunConfig bm = RunConfig::baseline();
  EXPECT_EQ(bm.env.dr, DrSpec::fixed(180.0, -30.0));
  EXPECT_EQ(bm.env.mdp.variant, MdpVariant::M1);
  EXPECT_DOUBLE_EQ(bm.env.mdp.success_distance, 0.05);
  EXPECT_EQ(bm.env.mdp.max_steps, 50);
  EXPECT_DOUBLE_EQ(bm.env.targets.x_lo, 0.2);
  EXPECT_DOUBLE_EQ(bm.env.targets.x_hi, 0.4);
  EXPECT_DOUBLE_EQ(bm.env.targets.y_lo, -0.3);
  EXPECT_DOUBLE_EQ(bm.env.targets.y_hi, 0.3);
  EXPECT_DOUBLE_EQ(bm.env.camera_radius, 2.0);
  EXPECT_DOUBLE_EQ(bm.train.gamma, 0.99);
  EXPECT_EQ(bm.train.eval_interval, 50000);
  EXPECT_EQ(bm.train.eval_episodes, 40);
  EXPECT_DOUBLE_EQ(bm.grid.success_tolerance, 0.10);
  const RunConfig dr = RunConfig::randomized();
  EXPECT_EQ(dr.env.dr, (DrSpec{160.0, 200.0, -40.0, -20.0}));
}

TEST(RunConfig, IniRoundTrip) {
  RunConfig c = RunConfig::randomized();
  c.env.mdp.variant = MdpVariant::M5;
  c.env.mdp.mpi = JointVector{{9, 8, 7, 6, 5, 4.5}};
  c.train.total_steps = 1234567;
  c.train.learning_rate = 7e-5;
  c.train.eval_dr = DrSpec::fixed(180, -30);
  c.grid.episodes_per_cell = 17;
  c.env.shadow_enabled = false;
  c.seed = 42;
  const RunConfig r = parse_run_config(to_ini(c));
  EXPECT_EQ(to_ini(r), to_ini(c));
  EXPECT_EQ(r.env.mdp.variant, MdpVariant::M5);
  EXPECT_EQ(r.env.mdp.mpi, c.env.mdp.mpi);
  EXPECT_EQ(r.train.learning_rate, 7e-5);
  EXPECT_EQ(r.train.seed, 42u);
  ASSERT_TRUE(r.train.eval_dr.has_value());
  EXPECT_EQ(*r.train.eval_dr, DrSpec::fixed(180, -30));
  EXPECT_FALSE(r.env.shadow_enabled);
}

TEST(RunConfig, PartialFileKeepsDefaults) {
  const RunConfig c = parse_run_config(
      "# comment\n[reach_env]\nvariant = M4   ; trailing comment\nazimuth = 160:200\n\n[run]\nseed = 9\n");
  EXPECT_EQ(c.env.mdp.variant, MdpVariant::M4);
  EXPECT_EQ(c.env.dr.azimuth_lo, 160.0);
  EXPECT_EQ(c.env.dr.azimuth_hi, 200.0);
  EXPECT_EQ(c.env.dr.elevation_lo, -30.0);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.train.n_step, 20);
}

TEST(RunConfig, ErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) {
    try {
      parse_run_config(text, "cfg.ini");
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("cfg.ini"), std::string::npos) << e.what();
      return e.line();
    }
    return -1;
  };
  EXPECT_EQ(line_of("[run]\nseed = 1\nbogus = 2\n"), 3);
  EXPECT_EQ(line_of("[reach_env]\n\nvariant = M9\n"), 3);
  EXPECT_EQ(line_of("seed = 1\n"), 1);
  EXPECT_EQ(line_of("[run\n"), 1);
  EXPECT_EQ(line_of("[run]\nseed\n"), 2);
  EXPECT_EQ(line_of("[nowhere]\nx = 1\n"), 2);
  EXPECT_EQ(line_of("[a3c_trainer]\ngamma = abc\n"), 2);
  EXPECT_EQ(line_of("[reach_env]\nazimuth = 200:160\n"), 2);
  EXPECT_EQ(line_of("[robustness_bench]\ngrid = 140:220:7,-50:-10:5\n"), 2);
  EXPECT_EQ(line_of("[a3c_trainer]\ngamma = 1.5\n"), 0);
}

TEST(RunConfig, MissingFile) {
  try {
    load_run_config("/nonexistent/dir/run.ini");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/run.ini"), std::string::npos);
  }
}

TEST(RunConfig, Overrides) {
  RunConfig c = RunConfig::baseline();
  apply_override(c, "reach_env", "variant", "M0");
  EXPECT_EQ(c.env.mdp.variant, MdpVariant::M0);
  EXPECT_THROW(apply_override(c, "reach_env", "nope", "1"), ConfigError);
  ::setenv("RLTEST_A3C_TRAINER__WORKERS", "3", 1);
  ::setenv("RLTEST_RUN__SEED", "77", 1);
  ::setenv("RLTEST_IGNORED", "x", 1);
  EXPECT_EQ(apply_env_overrides(c, "RLTEST_"), 2);
  EXPECT_EQ(c.train.workers, 3);
  EXPECT_EQ(c.seed, 77u);
  EXPECT_EQ(c.train.seed, 77u);
  ::setenv("RLTEST_RUN__SEED", "-x", 1);
  EXPECT_THROW(apply_env_overrides(c, "RLTEST_"), ConfigError);
  ::unsetenv("RLTEST_A3C_TRAINER__WORKERS");
  ::unsetenv("RLTEST_RUN__SEED");
  ::unsetenv("RLTEST_IGNORED");
}

TEST(RunConfig, GridFlag) {
  GridSpec g;
  parse_grid_flag("170:190:10,-40:-20:10", g);
  EXPECT_EQ(g.cell_count(), 9);
  EXPECT_THROW(parse_grid_flag("170:190,-40:-20:10", g), std::invalid_argument);
  EXPECT_THROW(parse_grid_flag("170:190:7,-40:-20:10", g), std::invalid_argument);
  EXPECT_EQ(g.cell_count(), 9);  // unchanged after a rejected flag
}

TEST(RunConfig, SampleConfigsParse) {
  const std::filesystem::path dir = REACHLAB_SOURCE_DIR "/configs";
  const RunConfig bm = load_run_config(dir / "baseline.ini");
  const RunConfig dr = load_run_config(dir / "dr.ini");
  EXPECT_EQ(bm.env.dr, DrSpec::baseline());
  EXPECT_EQ(dr.env.dr, DrSpec::randomized());
  EXPECT_EQ(bm.env.mdp.variant, MdpVariant::M1);
  EXPECT_EQ(dr.env.mdp.variant, MdpVariant::M1);
}
