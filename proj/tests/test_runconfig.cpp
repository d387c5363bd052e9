// Config document handling: round-trips, defaults, dotted-path overrides,
// and unknown-key rejection.

#include "connlearn/runconfig.hpp"

#include <gtest/gtest.h>

namespace {

using namespace connlearn;

TEST(RunConfig, TrainRoundTripPreservesEverything) {
  trainer::TrainConfig cfg;
  cfg.epochs = 7;
  cfg.learning_rate = 3e-4;
  cfg.objective = "barlow_twins";
  cfg.encoder.hidden_dim = 48;
  cfg.augmentation.n_views = 3;
  cfg.augmentation.pipeline = {augment::Transform::random_walk_sample, augment::Transform::feature_mask};
  cfg.baseline.method = baselines::Method::barlow_twins;
  cfg.baseline.projector_dims = {32, 16};
  cfg.seed = 99;

  const auto j = config::train_to_json(cfg);
  const trainer::TrainConfig back = config::train_from_json(j);
  EXPECT_EQ(config::train_to_json(back).dump(), j.dump());
}

TEST(RunConfig, MissingKeysFallBackToDefaults) {
  const trainer::TrainConfig cfg = config::train_from_json(nlohmann::json::object());
  EXPECT_EQ(cfg.epochs, 200);           // paper protocol defaults
  EXPECT_EQ(cfg.batch_size, 256);
  EXPECT_DOUBLE_EQ(cfg.learning_rate, 1e-3);
  EXPECT_DOUBLE_EQ(cfg.weight_decay, 1e-6);
  EXPECT_EQ(cfg.optimizer, "adam");
  EXPECT_EQ(cfg.objective, "hfmca");

  const evalharness::ProbeConfig pcfg = config::probe_from_json(nlohmann::json::object());
  EXPECT_EQ(pcfg.outer_folds, 5);
  EXPECT_EQ(pcfg.inner_folds, 3);
  EXPECT_EQ(pcfg.n_runs, 10);
  EXPECT_EQ(pcfg.probe_lr_grid, (std::vector<double>{1e-2, 1e-3, 1e-4}));

  const augment::AugmentationConfig acfg = config::augmentation_from_json(nlohmann::json::object());
  EXPECT_EQ(acfg.n_views, 4);
  EXPECT_DOUBLE_EQ(acfg.node_drop_ratio, 0.1);
}

TEST(RunConfig, UnknownKeysAreRejected) {
  EXPECT_THROW(config::train_from_json({{"epoches", 10}}), InvalidInput);
  EXPECT_THROW(config::probe_from_json({{"folds", 5}}), InvalidInput);
  EXPECT_THROW(config::synth_from_json({{"regions", 12}}), InvalidInput);
}

TEST(RunConfig, DottedOverridesEditNestedKeys) {
  nlohmann::json doc = {{"train", {{"epochs", 10}}}};
  config::apply_override(doc, "train.epochs=25");
  config::apply_override(doc, "train.encoder.hidden_dim=48");
  config::apply_override(doc, "train.objective=vicreg");
  config::apply_override(doc, "probe.probe_lr_grid=[0.1,0.01]");
  EXPECT_EQ(doc["train"]["epochs"], 25);
  EXPECT_EQ(doc["train"]["encoder"]["hidden_dim"], 48);
  EXPECT_EQ(doc["train"]["objective"], "vicreg");  // bare words parse as strings
  EXPECT_EQ(doc["probe"]["probe_lr_grid"].size(), 2u);
  EXPECT_THROW(config::apply_override(doc, "no-equals-sign"), InvalidInput);
}

TEST(RunConfig, SynthRoundTrip) {
  synthgen::SynthConfig cfg;
  cfg.n_subjects = 42;
  cfg.community_sizes = {6, 6, 2, 2};
  cfg.n_regions = 16;
  cfg.target_communities = {0, 1};
  cfg.subject_prefix = "abc";
  const auto j = config::synth_to_json(cfg);
  const synthgen::SynthConfig back = config::synth_from_json(j);
  EXPECT_EQ(back.n_subjects, 42);
  EXPECT_EQ(back.community_sizes, cfg.community_sizes);
  EXPECT_EQ(back.subject_prefix, "abc");
}

}  // namespace
