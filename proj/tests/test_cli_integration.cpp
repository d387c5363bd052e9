// End-to-end runs of the installed CLI binary: synth -> build-graphs ->
// pretrain -> probe -> report, plus verify and the documented exit codes.
// The binary path arrives through the CONNLEARN_BIN environment variable.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

namespace fs = std::filesystem;

std::string binary() {
  const char* env = std::getenv("CONNLEARN_BIN");
  if (env == nullptr) {
    ADD_FAILURE() << "CONNLEARN_BIN not set";
    return "";
  }
  return env;
}

int run(const std::string& args) {
  const std::string cmd = binary() + " " + args + " >>/tmp/connlearn-cli-test.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "connlearn-cli-it";
    fs::remove_all(root_);
    fs::create_directories(root_);
    fs::remove("/tmp/connlearn-cli-test.log");
  }
  static fs::path root_;
};

fs::path CliTest::root_;

TEST_F(CliTest, FullPipelineSynthToReport) {
  const std::string synth_args =
      "--set synth.n_subjects=24 --set synth.n_regions=12 --set synth.community_sizes=[3,3,3,3]"
      " --set synth.class_effect=0.4 --set graphs.edge_budget=10 --seed 404";
  ASSERT_EQ(run("synth --output " + (root_ / "data").string() + " --emit-timeseries " +
                (root_ / "series").string() + " " + synth_args),
            0);
  ASSERT_TRUE(fs::exists(root_ / "data" / "manifest.json"));
  ASSERT_TRUE(fs::exists(root_ / "data" / "resolved-config.json"));

  // graphs can be rebuilt from the emitted time series
  ASSERT_EQ(run("build-graphs --input " + (root_ / "series").string() + " --output " +
                (root_ / "rebuilt").string() + " --edge-budget 10 --selection raw"),
            0);
  ASSERT_TRUE(fs::exists(root_ / "rebuilt" / "manifest.json"));

  // write a training config and pretrain on the synthetic pool
  const fs::path cfg_path = root_ / "run.json";
  {
    std::ofstream cfg(cfg_path);
    cfg << R"({
      "train": {
        "epochs": 2, "batch_size": 24, "objective": "hfmca", "projection_dim": 4,
        "encoder": {"input_dim": 12, "hidden_dim": 8, "n_layers": 1, "n_attention_heads": 2,
                     "rwpe_steps": 3, "embedding_dim": 8, "dropout": 0.0},
        "augmentation": {"n_views": 2}, "seed": 7
      },
      "probe": {"n_runs": 2, "outer_folds": 2, "inner_folds": 2, "probe_epochs": 30, "seed": 2}
    })";
  }
  ASSERT_EQ(run("pretrain --config " + cfg_path.string() + " --data " + (root_ / "data").string() +
                " --output " + (root_ / "run").string()),
            0);
  ASSERT_TRUE(fs::exists(root_ / "run" / "ckpt-final.json"));
  ASSERT_TRUE(fs::exists(root_ / "run" / "metrics.log"));

  ASSERT_EQ(run("probe --config " + cfg_path.string() + " --checkpoint " +
                (root_ / "run" / "ckpt-final.json").string() + " --data " + (root_ / "data").string() +
                " --output " + (root_ / "eval").string()),
            0);
  ASSERT_TRUE(fs::exists(root_ / "eval" / "report.json"));
  ASSERT_TRUE(fs::exists(root_ / "eval" / "report.md"));

  ASSERT_EQ(run("report --inputs " + (root_ / "eval" / "report.json").string() + " --output " +
                (root_ / "rerender").string()),
            0);
  ASSERT_TRUE(fs::exists(root_ / "rerender" / "report.md"));
}

TEST_F(CliTest, VerifyExitsZeroOnPass) { EXPECT_EQ(run("verify"), 0); }

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run("frobnicate"), 2);                        // unknown command
  EXPECT_EQ(run("probe"), 2);                             // missing required options
  EXPECT_EQ(run("synth --output /tmp/x --set bad"), 2);   // malformed override
}

TEST_F(CliTest, MissingInputsExitNonZero) {
  EXPECT_EQ(run("pretrain --data " + (root_ / "nowhere").string() + " --output " +
                (root_ / "r2").string()),
            2);
}

}  // namespace
