/*
 * Declarative run configuration. One JSON document per run with per-command
 * sections ("synth", "train", "probe", "graphs"); missing keys fall back to
 * the documented defaults, unknown keys are rejected so typos cannot silently
 * change an experiment. Dotted-path --set overrides edit the document before
 * parsing, and every command freezes its fully resolved config next to its
 * outputs.
 */
#pragma once

#include "connlearn/augment.hpp"
#include "connlearn/baselines.hpp"
#include "connlearn/evalharness.hpp"
#include "connlearn/synthgen.hpp"
#include "connlearn/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace connlearn::config {

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                                const std::string& section) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (known.find(key) == known.end())
      throw InvalidInput("config section '" + section + "': unknown key '" + key + "'");
  }
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  return it->get<T>();
}

}  // namespace detail

// ---- augmentation ------------------------------------------------------------

inline nlohmann::json augmentation_to_json(const augment::AugmentationConfig& c) {
  nlohmann::json pipeline = nlohmann::json::array();
  for (auto t : c.pipeline) pipeline.push_back(augment::to_string(t));
  return nlohmann::json{{"n_views", c.n_views},
                        {"walk_length", c.walk_length},
                        {"walks_per_view", c.walks_per_view},
                        {"node_drop_ratio", c.node_drop_ratio},
                        {"feature_mask_ratio", c.feature_mask_ratio},
                        {"edge_remove_ratio", c.edge_remove_ratio},
                        {"pipeline", pipeline},
                        {"rng_seed", c.rng_seed}};
}

inline augment::AugmentationConfig augmentation_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(j,
                              {"n_views", "walk_length", "walks_per_view", "node_drop_ratio",
                               "feature_mask_ratio", "edge_remove_ratio", "pipeline", "rng_seed"},
                              "augmentation");
  augment::AugmentationConfig c;
  c.n_views = detail::get_or(j, "n_views", c.n_views);
  c.walk_length = detail::get_or(j, "walk_length", c.walk_length);
  c.walks_per_view = detail::get_or(j, "walks_per_view", c.walks_per_view);
  c.node_drop_ratio = detail::get_or(j, "node_drop_ratio", c.node_drop_ratio);
  c.feature_mask_ratio = detail::get_or(j, "feature_mask_ratio", c.feature_mask_ratio);
  c.edge_remove_ratio = detail::get_or(j, "edge_remove_ratio", c.edge_remove_ratio);
  if (j.count("pipeline")) {
    c.pipeline.clear();
    for (const auto& name : j.at("pipeline")) c.pipeline.push_back(augment::transform_from_string(name));
  }
  c.rng_seed = detail::get_or(j, "rng_seed", c.rng_seed);
  return c;
}

// ---- baseline -----------------------------------------------------------------

inline nlohmann::json baseline_to_json(const baselines::BaselineConfig& c) {
  return nlohmann::json{{"method", baselines::to_string(c.method)},
                        {"temperature", c.temperature},
                        {"off_diag_weight", c.off_diag_weight},
                        {"inv_weight", c.inv_weight},
                        {"var_weight", c.var_weight},
                        {"cov_weight", c.cov_weight},
                        {"projector_dims", c.projector_dims}};
}

inline baselines::BaselineConfig baseline_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(
      j, {"method", "temperature", "off_diag_weight", "inv_weight", "var_weight", "cov_weight", "projector_dims"},
      "baseline");
  baselines::BaselineConfig c;
  if (j.count("method")) c.method = baselines::method_from_string(j.at("method").get<std::string>());
  c.temperature = detail::get_or(j, "temperature", c.temperature);
  c.off_diag_weight = detail::get_or(j, "off_diag_weight", c.off_diag_weight);
  c.inv_weight = detail::get_or(j, "inv_weight", c.inv_weight);
  c.var_weight = detail::get_or(j, "var_weight", c.var_weight);
  c.cov_weight = detail::get_or(j, "cov_weight", c.cov_weight);
  c.projector_dims = detail::get_or(j, "projector_dims", c.projector_dims);
  return c;
}

// ---- encoder -------------------------------------------------------------------

inline nlohmann::json encoder_to_json(const encoder::EncoderConfig& c) {
  return trainer::detail::encoder_config_to_json(c);
}

inline encoder::EncoderConfig encoder_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(j,
                              {"input_dim", "hidden_dim", "n_layers", "n_attention_heads", "rwpe_steps",
                               "embedding_dim", "use_edge_weights", "dropout"},
                              "encoder");
  encoder::EncoderConfig c;
  c.input_dim = detail::get_or(j, "input_dim", c.input_dim);
  c.hidden_dim = detail::get_or(j, "hidden_dim", c.hidden_dim);
  c.n_layers = detail::get_or(j, "n_layers", c.n_layers);
  c.n_attention_heads = detail::get_or(j, "n_attention_heads", c.n_attention_heads);
  c.rwpe_steps = detail::get_or(j, "rwpe_steps", c.rwpe_steps);
  c.embedding_dim = detail::get_or(j, "embedding_dim", c.embedding_dim);
  c.use_edge_weights = detail::get_or(j, "use_edge_weights", c.use_edge_weights);
  c.dropout = detail::get_or(j, "dropout", c.dropout);
  return c;
}

// ---- train ---------------------------------------------------------------------

inline nlohmann::json train_to_json(const trainer::TrainConfig& c) {
  return nlohmann::json{{"epochs", c.epochs},
                        {"batch_size", c.batch_size},
                        {"learning_rate", c.learning_rate},
                        {"weight_decay", c.weight_decay},
                        {"optimizer", c.optimizer},
                        {"objective", c.objective},
                        {"projection_dim", c.projection_dim},
                        {"ridge_rel", c.ridge_rel},
                        {"encoder", encoder_to_json(c.encoder)},
                        {"augmentation", augmentation_to_json(c.augmentation)},
                        {"baseline", baseline_to_json(c.baseline)},
                        {"seed", c.seed},
                        {"checkpoint_every", c.checkpoint_every},
                        {"deterministic", c.deterministic}};
}

inline trainer::TrainConfig train_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(j,
                              {"epochs", "batch_size", "learning_rate", "weight_decay", "optimizer", "objective",
                               "projection_dim", "ridge_rel", "encoder", "augmentation", "baseline", "seed",
                               "checkpoint_every", "deterministic"},
                              "train");
  trainer::TrainConfig c;
  c.epochs = detail::get_or(j, "epochs", c.epochs);
  c.batch_size = detail::get_or(j, "batch_size", c.batch_size);
  c.learning_rate = detail::get_or(j, "learning_rate", c.learning_rate);
  c.weight_decay = detail::get_or(j, "weight_decay", c.weight_decay);
  c.optimizer = detail::get_or(j, "optimizer", c.optimizer);
  c.objective = detail::get_or(j, "objective", c.objective);
  c.projection_dim = detail::get_or(j, "projection_dim", c.projection_dim);
  c.ridge_rel = detail::get_or(j, "ridge_rel", c.ridge_rel);
  if (j.count("encoder")) c.encoder = encoder_from_json(j.at("encoder"));
  if (j.count("augmentation")) c.augmentation = augmentation_from_json(j.at("augmentation"));
  if (j.count("baseline")) c.baseline = baseline_from_json(j.at("baseline"));
  c.seed = detail::get_or(j, "seed", c.seed);
  c.checkpoint_every = detail::get_or(j, "checkpoint_every", c.checkpoint_every);
  c.deterministic = detail::get_or(j, "deterministic", c.deterministic);
  return c;
}

// ---- probe ----------------------------------------------------------------------

inline nlohmann::json probe_to_json(const evalharness::ProbeConfig& c) {
  return nlohmann::json{{"mode", c.mode},
                        {"outer_folds", c.outer_folds},
                        {"inner_folds", c.inner_folds},
                        {"n_runs", c.n_runs},
                        {"probe_epochs", c.probe_epochs},
                        {"probe_lr_grid", c.probe_lr_grid},
                        {"seed", c.seed}};
}

inline evalharness::ProbeConfig probe_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(
      j, {"mode", "outer_folds", "inner_folds", "n_runs", "probe_epochs", "probe_lr_grid", "seed"}, "probe");
  evalharness::ProbeConfig c;
  c.mode = detail::get_or(j, "mode", c.mode);
  c.outer_folds = detail::get_or(j, "outer_folds", c.outer_folds);
  c.inner_folds = detail::get_or(j, "inner_folds", c.inner_folds);
  c.n_runs = detail::get_or(j, "n_runs", c.n_runs);
  c.probe_epochs = detail::get_or(j, "probe_epochs", c.probe_epochs);
  c.probe_lr_grid = detail::get_or(j, "probe_lr_grid", c.probe_lr_grid);
  c.seed = detail::get_or(j, "seed", c.seed);
  return c;
}

// ---- synth ----------------------------------------------------------------------

inline nlohmann::json synth_to_json(const synthgen::SynthConfig& c) {
  return nlohmann::json{{"n_subjects", c.n_subjects},
                        {"n_regions", c.n_regions},
                        {"n_timepoints", c.n_timepoints},
                        {"n_classes", c.n_classes},
                        {"community_sizes", c.community_sizes},
                        {"class_effect", c.class_effect},
                        {"base_coupling", c.base_coupling},
                        {"noise_std", c.noise_std},
                        {"target_communities", std::vector<int>{c.target_communities.first,
                                                                c.target_communities.second}},
                        {"rng_seed", c.rng_seed},
                        {"subject_prefix", c.subject_prefix}};
}

inline synthgen::SynthConfig synth_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(j,
                              {"n_subjects", "n_regions", "n_timepoints", "n_classes", "community_sizes",
                               "class_effect", "base_coupling", "noise_std", "target_communities", "rng_seed",
                               "subject_prefix"},
                              "synth");
  synthgen::SynthConfig c;
  c.n_subjects = detail::get_or(j, "n_subjects", 64);
  c.n_regions = detail::get_or(j, "n_regions", c.n_regions);
  c.n_timepoints = detail::get_or(j, "n_timepoints", c.n_timepoints);
  c.n_classes = detail::get_or(j, "n_classes", c.n_classes);
  c.community_sizes = detail::get_or(j, "community_sizes", c.community_sizes);
  c.class_effect = detail::get_or(j, "class_effect", c.class_effect);
  c.base_coupling = detail::get_or(j, "base_coupling", c.base_coupling);
  c.noise_std = detail::get_or(j, "noise_std", c.noise_std);
  if (j.count("target_communities")) {
    const auto v = j.at("target_communities").get<std::vector<int>>();
    if (v.size() != 2) throw InvalidInput("config: target_communities must have exactly 2 entries");
    c.target_communities = {v[0], v[1]};
  }
  c.rng_seed = detail::get_or(j, "rng_seed", c.rng_seed);
  c.subject_prefix = detail::get_or(j, "subject_prefix", c.subject_prefix);
  return c;
}

// ---- document handling --------------------------------------------------------------

inline nlohmann::json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("config file '" + path.string() + "': " + e.what());
  }
  if (!j.is_object()) throw InvalidInput("config file must hold a JSON object");
  return j;
}

// Applies "a.b.c=value" onto the document; the value is parsed as JSON when
// possible and falls back to a plain string.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw InvalidInput("override '" + assignment + "' must look like key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;  // plain string
  }
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw InvalidInput("override '" + assignment + "': empty path segment");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

inline void write_resolved_config(const nlohmann::json& resolved, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir / "resolved-config.json", std::ios::binary | std::ios::trunc);
  out << resolved.dump(2) << "\n";
}

}  // namespace connlearn::config
