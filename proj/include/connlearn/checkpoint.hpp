/*
 * Versioned checkpoint container: encoder config + flat named parameter
 * tensors, optional head parameters and optimizer state. JSON on disk with
 * shortest round-trip decimals, so a reloaded checkpoint reproduces forward
 * passes bit-identically. strip_heads() drops everything a downstream
 * evaluation must not see.
 */
#pragma once

#include "connlearn/encoder.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

namespace connlearn::trainer {

inline constexpr int kCheckpointSchemaVersion = 1;

using TensorMap = std::map<std::string, Matrix>;

struct OptimizerState {
  long step = 0;
  TensorMap m;  // first moments, keyed like the parameter maps
  TensorMap v;  // second moments
  bool empty() const { return step == 0 && m.empty() && v.empty(); }
};

struct MetricsSummary {
  long steps = 0;
  double final_loss = 0.0;
  double first_epoch_mean_loss = 0.0;
  double last_epoch_mean_loss = 0.0;
};

struct Checkpoint {
  encoder::EncoderConfig encoder_config;
  encoder::ParamMap encoder_params;
  TensorMap head_params;  // pretraining heads/projector; empty once stripped
  OptimizerState optimizer;
  long epoch = 0;
  std::string objective = "none";
  MetricsSummary metrics;
};

// Backbone-only view: heads and optimizer state removed, encode() outputs
// unchanged. Idempotent.
inline Checkpoint strip_heads(Checkpoint ckpt) {
  ckpt.head_params.clear();
  ckpt.optimizer = OptimizerState{};
  return ckpt;
}

namespace detail {

inline nlohmann::json tensor_to_json(const Matrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index k = 0; k < m.cols(); ++k) data.push_back(m(i, k));
  j["data"] = std::move(data);
  return j;
}

inline Matrix tensor_from_json(const nlohmann::json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw InvalidInput("tensor: data size mismatch");
  Matrix m(rows, cols);
  std::size_t idx = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = data.at(idx++).get<double>();
  return m;
}

inline nlohmann::json tensor_map_to_json(const TensorMap& tm) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, tensor] : tm) j[name] = tensor_to_json(tensor);
  return j;
}

inline TensorMap tensor_map_from_json(const nlohmann::json& j) {
  TensorMap tm;
  for (const auto& [name, tensor] : j.items()) tm[name] = tensor_from_json(tensor);
  return tm;
}

inline nlohmann::json encoder_config_to_json(const encoder::EncoderConfig& c) {
  return nlohmann::json{{"input_dim", c.input_dim},
                        {"hidden_dim", c.hidden_dim},
                        {"n_layers", c.n_layers},
                        {"n_attention_heads", c.n_attention_heads},
                        {"rwpe_steps", c.rwpe_steps},
                        {"embedding_dim", c.embedding_dim},
                        {"use_edge_weights", c.use_edge_weights},
                        {"dropout", c.dropout}};
}

inline encoder::EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  encoder::EncoderConfig c;
  c.input_dim = j.at("input_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.n_attention_heads = j.at("n_attention_heads").get<int>();
  c.rwpe_steps = j.at("rwpe_steps").get<int>();
  c.embedding_dim = j.at("embedding_dim").get<int>();
  c.use_edge_weights = j.at("use_edge_weights").get<bool>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  nlohmann::json j;
  j["schema_version"] = kCheckpointSchemaVersion;
  j["kind"] = "connlearn-checkpoint";
  j["encoder_config"] = detail::encoder_config_to_json(c.encoder_config);
  j["encoder_params"] = detail::tensor_map_to_json(c.encoder_params);
  j["head_params"] = detail::tensor_map_to_json(c.head_params);
  j["optimizer"] = nlohmann::json{{"step", c.optimizer.step},
                                  {"m", detail::tensor_map_to_json(c.optimizer.m)},
                                  {"v", detail::tensor_map_to_json(c.optimizer.v)}};
  j["epoch"] = c.epoch;
  j["objective"] = c.objective;
  j["metrics"] = nlohmann::json{{"steps", c.metrics.steps},
                                {"final_loss", c.metrics.final_loss},
                                {"first_epoch_mean_loss", c.metrics.first_epoch_mean_loss},
                                {"last_epoch_mean_loss", c.metrics.last_epoch_mean_loss}};
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  const int version = j.at("schema_version").get<int>();
  if (version != kCheckpointSchemaVersion)
    throw InvalidInput("checkpoint schema_version " + std::to_string(version) + " unsupported");
  Checkpoint c;
  c.encoder_config = detail::encoder_config_from_json(j.at("encoder_config"));
  c.encoder_params = detail::tensor_map_from_json(j.at("encoder_params"));
  c.head_params = detail::tensor_map_from_json(j.at("head_params"));
  c.optimizer.step = j.at("optimizer").at("step").get<long>();
  c.optimizer.m = detail::tensor_map_from_json(j.at("optimizer").at("m"));
  c.optimizer.v = detail::tensor_map_from_json(j.at("optimizer").at("v"));
  c.epoch = j.at("epoch").get<long>();
  c.objective = j.at("objective").get<std::string>();
  c.metrics.steps = j.at("metrics").at("steps").get<long>();
  c.metrics.final_loss = j.at("metrics").at("final_loss").get<double>();
  c.metrics.first_epoch_mean_loss = j.at("metrics").at("first_epoch_mean_loss").get<double>();
  c.metrics.last_epoch_mean_loss = j.at("metrics").at("last_epoch_mean_loss").get<double>();
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw NumericError("cannot open checkpoint path '" + path.string() + "'");
  out << checkpoint_to_json(c).dump() << "\n";
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open checkpoint '" + path.string() + "'");
  nlohmann::json j;
  in >> j;
  return checkpoint_from_json(j);
}

}  // namespace connlearn::trainer
