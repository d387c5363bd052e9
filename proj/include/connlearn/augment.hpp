/*
 * Stochastic graph views for multi-view pretraining: random walk sampling,
 * node dropping, feature masking, edge removal. Each view is an independent
 * draw of the configured pipeline; all randomness flows through an explicit
 * Rng so (graph, config, seed) fully determines the output.
 */
#pragma once

#include "connlearn/connectome.hpp"

#include <string>
#include <vector>

namespace connlearn::augment {

using connectome::BrainGraph;

enum class Transform { random_walk_sample, node_drop, feature_mask, edge_remove };

// floor(ratio * count) with a nudge so products like 0.3 * 10 that land just
// below an integer still floor to it.
inline long scaled_count(double ratio, long count) {
  return static_cast<long>(ratio * static_cast<double>(count) + 1e-9);
}

inline Transform transform_from_string(const std::string& s) {
  if (s == "random_walk_sample") return Transform::random_walk_sample;
  if (s == "node_drop") return Transform::node_drop;
  if (s == "feature_mask") return Transform::feature_mask;
  if (s == "edge_remove") return Transform::edge_remove;
  throw InvalidInput("unknown transform '" + s + "'");
}

inline std::string to_string(Transform t) {
  switch (t) {
    case Transform::random_walk_sample: return "random_walk_sample";
    case Transform::node_drop: return "node_drop";
    case Transform::feature_mask: return "feature_mask";
    case Transform::edge_remove: return "edge_remove";
  }
  throw InvalidInput("bad transform enum");
}

struct AugmentationConfig {
  int n_views = 4;  // T
  int walk_length = 20;
  int walks_per_view = 8;
  double node_drop_ratio = 0.1;
  double feature_mask_ratio = 0.1;
  double edge_remove_ratio = 0.1;
  // Random walk sampling is off by default; mild corruption only.
  std::vector<Transform> pipeline = {Transform::node_drop, Transform::feature_mask, Transform::edge_remove};
  std::uint64_t rng_seed = 0;
};

inline void validate_augmentation(const AugmentationConfig& cfg) {
  if (cfg.n_views < 2) throw InvalidInput("AugmentationConfig: n_views must be >= 2");
  if (cfg.pipeline.empty()) throw InvalidInput("AugmentationConfig: pipeline must be non-empty");
  auto ratio_ok = [](double r) { return r >= 0.0 && r < 1.0; };
  if (!ratio_ok(cfg.node_drop_ratio) || !ratio_ok(cfg.feature_mask_ratio) || !ratio_ok(cfg.edge_remove_ratio))
    throw InvalidInput("AugmentationConfig: ratios must lie in [0, 1)");
  if (cfg.walk_length < 0 || cfg.walks_per_view < 1)
    throw InvalidInput("AugmentationConfig: walk parameters out of range");
}

// Union of nodes visited by n_walks uniform random walks of walk_length steps,
// induced subgraph. An isolated start contributes only itself. Edgeless input
// comes back unchanged with a warning.
inline BrainGraph random_walk_sample(const BrainGraph& g, int walk_length, int n_walks, Rng& rng,
                                     WarningSink* warnings = nullptr) {
  if (walk_length < 0 || n_walks < 1) throw InvalidInput("random_walk_sample: bad walk parameters");
  if (g.edges.empty()) {
    warn(warnings, "random_walk_sample: graph '" + g.subject_id + "' has no edges; returned unchanged");
    return g;
  }
  const connectome::AdjacencyList adj = adjacency(g);
  std::vector<bool> visited(static_cast<std::size_t>(g.n_nodes), false);
  for (int w = 0; w < n_walks; ++w) {
    int v = static_cast<int>(rng.below(static_cast<std::uint64_t>(g.n_nodes)));
    visited[static_cast<std::size_t>(v)] = true;
    for (int step = 0; step < walk_length; ++step) {
      const auto& nbrs = adj.neighbors[static_cast<std::size_t>(v)];
      if (nbrs.empty()) break;  // isolated start: walk stays put
      v = nbrs[rng.below(nbrs.size())];
      visited[static_cast<std::size_t>(v)] = true;
    }
  }
  std::vector<int> keep;
  for (int v = 0; v < g.n_nodes; ++v)
    if (visited[static_cast<std::size_t>(v)]) keep.push_back(v);
  return induced_subgraph(g, keep);
}

// Drops floor(ratio * |V|) uniformly chosen nodes, never below one survivor.
inline BrainGraph node_drop(const BrainGraph& g, double ratio, Rng& rng) {
  if (ratio < 0.0 || ratio >= 1.0) throw InvalidInput("node_drop: ratio must lie in [0, 1)");
  int k = static_cast<int>(scaled_count(ratio, g.n_nodes));
  if (g.n_nodes - k < 1) k = g.n_nodes - 1;
  if (k == 0) return g;
  const std::vector<int> dropped = sample_without_replacement(g.n_nodes, k, rng);
  std::vector<bool> is_dropped(static_cast<std::size_t>(g.n_nodes), false);
  for (int v : dropped) is_dropped[static_cast<std::size_t>(v)] = true;
  std::vector<int> keep;
  keep.reserve(static_cast<std::size_t>(g.n_nodes - k));
  for (int v = 0; v < g.n_nodes; ++v)
    if (!is_dropped[static_cast<std::size_t>(v)]) keep.push_back(v);
  return induced_subgraph(g, keep);
}

// Zeroes floor(ratio * n_entries) uniformly chosen feature entries.
inline BrainGraph feature_mask(const BrainGraph& g, double ratio, Rng& rng) {
  if (ratio < 0.0 || ratio > 1.0) throw InvalidInput("feature_mask: ratio must lie in [0, 1]");
  const long total = static_cast<long>(g.node_features.rows()) * static_cast<long>(g.node_features.cols());
  const long k = scaled_count(ratio, total);
  if (k == 0) return g;
  BrainGraph out = g;
  // partial Fisher-Yates over flattened entry indices
  std::vector<long> pool(static_cast<std::size_t>(total));
  for (long i = 0; i < total; ++i) pool[static_cast<std::size_t>(i)] = i;
  const long cols = g.node_features.cols();
  for (long i = 0; i < k; ++i) {
    const long j = i + static_cast<long>(rng.below(static_cast<std::uint64_t>(total - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    const long flat = pool[static_cast<std::size_t>(i)];
    out.node_features(flat / cols, flat % cols) = 0.0;
  }
  return out;
}

// Removes floor(ratio * |E|) uniformly chosen edges; nodes untouched.
inline BrainGraph edge_remove(const BrainGraph& g, double ratio, Rng& rng) {
  if (ratio < 0.0 || ratio > 1.0) throw InvalidInput("edge_remove: ratio must lie in [0, 1]");
  const int k = static_cast<int>(scaled_count(ratio, g.n_edges()));
  if (k == 0) return g;
  const std::vector<int> removed = sample_without_replacement(g.n_edges(), k, rng);
  std::vector<bool> is_removed(g.edges.size(), false);
  for (int e : removed) is_removed[static_cast<std::size_t>(e)] = true;
  BrainGraph out = g;
  out.edges.clear();
  out.edge_weights.clear();
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    if (is_removed[e]) continue;
    out.edges.push_back(g.edges[e]);
    out.edge_weights.push_back(g.edge_weights[e]);
  }
  return out;
}

inline BrainGraph apply_pipeline(const BrainGraph& g, const AugmentationConfig& cfg, Rng& rng,
                                 WarningSink* warnings = nullptr) {
  BrainGraph view = g;
  for (Transform t : cfg.pipeline) {
    switch (t) {
      case Transform::random_walk_sample:
        view = random_walk_sample(view, cfg.walk_length, cfg.walks_per_view, rng, warnings);
        break;
      case Transform::node_drop:
        view = node_drop(view, cfg.node_drop_ratio, rng);
        break;
      case Transform::feature_mask:
        view = feature_mask(view, cfg.feature_mask_ratio, rng);
        break;
      case Transform::edge_remove:
        view = edge_remove(view, cfg.edge_remove_ratio, rng);
        break;
    }
  }
  return view;
}

// T independent draws of the pipeline. Per-view substreams make the result a
// pure function of (g, cfg, rng state).
inline std::vector<BrainGraph> make_views(const BrainGraph& g, const AugmentationConfig& cfg, Rng& rng,
                                          WarningSink* warnings = nullptr) {
  validate_augmentation(cfg);
  connectome::validate_graph(g);
  std::vector<BrainGraph> views;
  views.reserve(static_cast<std::size_t>(cfg.n_views));
  for (int t = 0; t < cfg.n_views; ++t) {
    Rng view_rng = rng.substream({0x76696577ULL, static_cast<std::uint64_t>(t)});
    views.push_back(apply_pipeline(g, cfg, view_rng, warnings));
  }
  return views;
}

}  // namespace connlearn::augment
