/*
 * Dataset persistence. A dataset directory holds:
 *
 *   manifest.json            name, schema_version, subject ids, labels,
 *                            split_seed, provenance
 *   graphs/<subject>.json    one BrainGraph record per subject
 *
 * Doubles are serialized as shortest round-trip decimals, so save/load is
 * bit-exact. ROI time-series files are whitespace-delimited text with a
 * "n_regions n_timepoints" shape header; '#' lines are comments.
 */
#pragma once

#include "connlearn/connectome.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace connlearn::connectome {

inline constexpr int kDatasetSchemaVersion = 1;

struct DatasetManifest {
  std::string name;
  std::vector<std::string> subject_ids;
  std::map<std::string, int> label_map;  // subject_id -> class, labeled subjects only
  long split_seed = 0;
  std::string provenance;
};

struct Dataset {
  std::vector<BrainGraph> graphs;  // aligned with manifest.subject_ids
  DatasetManifest manifest;

  std::size_t size() const { return graphs.size(); }
  bool labeled() const { return !manifest.label_map.empty(); }
};

inline void validate_manifest(const DatasetManifest& m) {
  std::set<std::string> ids(m.subject_ids.begin(), m.subject_ids.end());
  if (ids.size() != m.subject_ids.size()) throw InvalidInput("DatasetManifest: duplicate subject ids");
  for (const auto& [id, label] : m.label_map) {
    (void)label;
    if (ids.find(id) == ids.end())
      throw InvalidInput("DatasetManifest: labeled subject '" + id + "' missing from subject_ids");
  }
  for (const std::string& id : m.subject_ids) {
    if (id.empty()) throw InvalidInput("DatasetManifest: empty subject id");
    for (char c : id) {
      const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                      c == '_' || c == '-' || c == '.';
      if (!ok) throw InvalidInput("DatasetManifest: subject id '" + id + "' contains non-portable character");
    }
  }
}

namespace detail {

inline nlohmann::json graph_to_json(const BrainGraph& g) {
  nlohmann::json rec;
  rec["schema_version"] = kDatasetSchemaVersion;
  rec["subject_id"] = g.subject_id;
  rec["n_nodes"] = g.n_nodes;
  rec["feature_dim"] = g.feature_dim();
  nlohmann::json feats = nlohmann::json::array();
  for (Eigen::Index i = 0; i < g.node_features.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < g.node_features.cols(); ++j) row.push_back(g.node_features(i, j));
    feats.push_back(std::move(row));
  }
  rec["node_features"] = std::move(feats);
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [i, j] : g.edges) edges.push_back(nlohmann::json::array({i, j}));
  rec["edges"] = std::move(edges);
  rec["edge_weights"] = g.edge_weights;
  if (g.label.has_value())
    rec["label"] = *g.label;
  else
    rec["label"] = nullptr;
  return rec;
}

inline BrainGraph graph_from_json(const nlohmann::json& rec) {
  const int version = rec.at("schema_version").get<int>();
  if (version != kDatasetSchemaVersion)
    throw InvalidInput("graph record schema_version " + std::to_string(version) + " unsupported (expected " +
                       std::to_string(kDatasetSchemaVersion) + ")");
  BrainGraph g;
  g.subject_id = rec.at("subject_id").get<std::string>();
  g.n_nodes = rec.at("n_nodes").get<int>();
  const int fdim = rec.at("feature_dim").get<int>();
  const auto& feats = rec.at("node_features");
  if (static_cast<int>(feats.size()) != g.n_nodes) throw InvalidInput("graph record: node_features rows mismatch");
  g.node_features.resize(g.n_nodes, fdim);
  for (int i = 0; i < g.n_nodes; ++i) {
    const auto& row = feats.at(static_cast<std::size_t>(i));
    if (static_cast<int>(row.size()) != fdim) throw InvalidInput("graph record: ragged node_features");
    for (int j = 0; j < fdim; ++j) g.node_features(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
  }
  for (const auto& e : rec.at("edges")) g.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  g.edge_weights = rec.at("edge_weights").get<std::vector<double>>();
  if (!rec.at("label").is_null()) g.label = rec.at("label").get<int>();
  validate_graph(g);
  return g;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw NumericError("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw NumericError("write failed for '" + path.string() + "'");
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path.string() + "'");
  nlohmann::json j;
  in >> j;
  return j;
}

}  // namespace detail

// Writes manifest + one graph record per subject. The manifest must reference
// exactly the provided graphs (same ids, labels consistent).
inline void save_dataset(const std::vector<BrainGraph>& graphs, const DatasetManifest& manifest,
                         const std::filesystem::path& dir) {
  validate_manifest(manifest);
  if (graphs.size() != manifest.subject_ids.size())
    throw InvalidInput("save_dataset: manifest lists " + std::to_string(manifest.subject_ids.size()) +
                       " subjects but " + std::to_string(graphs.size()) + " graphs supplied");
  std::map<std::string, const BrainGraph*> by_id;
  for (const BrainGraph& g : graphs) {
    validate_graph(g);
    if (!by_id.emplace(g.subject_id, &g).second)
      throw InvalidInput("save_dataset: duplicate graph for subject '" + g.subject_id + "'");
  }
  for (const std::string& id : manifest.subject_ids)
    if (by_id.find(id) == by_id.end())
      throw InvalidInput("save_dataset: manifest references absent subject '" + id + "'");
  for (const auto& [id, label] : manifest.label_map) {
    const BrainGraph* g = by_id.at(id);
    if (g->label.has_value() && *g->label != label)
      throw InvalidInput("save_dataset: label mismatch for subject '" + id + "'");
  }

  namespace fs = std::filesystem;
  fs::create_directories(dir / "graphs");
  nlohmann::json mj;
  mj["schema_version"] = kDatasetSchemaVersion;
  mj["name"] = manifest.name;
  mj["subject_ids"] = manifest.subject_ids;
  mj["labels"] = manifest.label_map;
  mj["split_seed"] = manifest.split_seed;
  mj["provenance"] = manifest.provenance;
  detail::write_text_file(dir / "manifest.json", mj.dump(2) + "\n");
  for (const std::string& id : manifest.subject_ids) {
    nlohmann::json rec = detail::graph_to_json(*by_id.at(id));
    if (manifest.label_map.count(id)) rec["label"] = manifest.label_map.at(id);
    detail::write_text_file(dir / "graphs" / (id + ".json"), rec.dump() + "\n");
  }
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const nlohmann::json mj = detail::read_json_file(dir / "manifest.json");
  const int version = mj.at("schema_version").get<int>();
  if (version != kDatasetSchemaVersion)
    throw InvalidInput("manifest schema_version " + std::to_string(version) + " unsupported (expected " +
                       std::to_string(kDatasetSchemaVersion) + ")");
  Dataset ds;
  ds.manifest.name = mj.at("name").get<std::string>();
  ds.manifest.subject_ids = mj.at("subject_ids").get<std::vector<std::string>>();
  ds.manifest.label_map = mj.at("labels").get<std::map<std::string, int>>();
  ds.manifest.split_seed = mj.at("split_seed").get<long>();
  ds.manifest.provenance = mj.at("provenance").get<std::string>();
  validate_manifest(ds.manifest);

  ds.graphs.reserve(ds.manifest.subject_ids.size());
  for (const std::string& id : ds.manifest.subject_ids) {
    const std::filesystem::path rec_path = dir / "graphs" / (id + ".json");
    if (!std::filesystem::exists(rec_path))
      throw InvalidInput("load_dataset: manifest references subject '" + id + "' but '" + rec_path.string() +
                         "' is missing");
    BrainGraph g = detail::graph_from_json(detail::read_json_file(rec_path));
    if (g.subject_id != id) throw InvalidInput("load_dataset: record id mismatch for '" + id + "'");
    const auto it = ds.manifest.label_map.find(id);
    if (it != ds.manifest.label_map.end()) {
      if (g.label.has_value() && *g.label != it->second)
        throw InvalidInput("load_dataset: label mismatch for subject '" + id + "'");
      g.label = it->second;
    }
    ds.graphs.push_back(std::move(g));
  }
  return ds;
}

// --- ROI time-series text files ---------------------------------------------

inline void write_roi_timeseries(const RoiTimeSeries& ts, const std::filesystem::path& path) {
  validate_timeseries(ts);
  std::ostringstream out;
  out.precision(17);
  out << ts.series.rows() << " " << ts.series.cols() << "\n";
  for (Eigen::Index i = 0; i < ts.series.rows(); ++i) {
    for (Eigen::Index j = 0; j < ts.series.cols(); ++j) {
      if (j) out << " ";
      out << ts.series(i, j);
    }
    out << "\n";
  }
  detail::write_text_file(path, out.str());
}

inline RoiTimeSeries read_roi_timeseries(const std::filesystem::path& path, const std::string& subject_id) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open time-series file '" + path.string() + "'");
  std::string line;
  Eigen::Index n_regions = -1, n_timepoints = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream hdr(line);
    if (!(hdr >> n_regions >> n_timepoints))
      throw InvalidInput("time-series file '" + path.string() + "': malformed shape header");
    break;
  }
  if (n_regions < 0) throw InvalidInput("time-series file '" + path.string() + "': missing shape header");

  RoiTimeSeries ts;
  ts.subject_id = subject_id;
  ts.series.resize(n_regions, n_timepoints);
  Eigen::Index row = 0;
  while (row < n_regions && std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream vals(line);
    for (Eigen::Index j = 0; j < n_timepoints; ++j) {
      double v;
      if (!(vals >> v))
        throw InvalidInput("time-series file '" + path.string() + "': row " + std::to_string(row) + " truncated");
      ts.series(row, j) = v;
    }
    ++row;
  }
  if (row != n_regions)
    throw InvalidInput("time-series file '" + path.string() + "': expected " + std::to_string(n_regions) +
                       " rows, got " + std::to_string(row));
  validate_timeseries(ts);
  return ts;
}

}  // namespace connlearn::connectome
