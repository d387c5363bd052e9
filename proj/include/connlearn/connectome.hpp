/*
 * Connectome construction: ROI time series -> Pearson connectivity matrix ->
 * sparsified weighted graph with correlation-row node features.
 *
 * Conventions:
 *   - connectivity matrices are exactly symmetric with unit diagonal,
 *   - edges are unordered pairs (i < j), each pair counted once,
 *   - a graph keeps the full-width feature rows of its source matrix even
 *     when later augmentations drop nodes (encoder input width is fixed).
 */
#pragma once

#include "connlearn/common.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace connlearn::connectome {

struct RoiTimeSeries {
  std::string subject_id;
  Matrix series;  // n_regions x n_timepoints
  std::vector<std::string> region_labels;  // optional, empty when absent

  Eigen::Index n_regions() const { return series.rows(); }
  Eigen::Index n_timepoints() const { return series.cols(); }
};

inline void validate_timeseries(const RoiTimeSeries& ts) {
  if (ts.series.rows() < 2) throw InvalidInput("RoiTimeSeries: need at least 2 regions, got " + std::to_string(ts.series.rows()));
  if (ts.series.cols() < 3) throw InvalidInput("RoiTimeSeries: need at least 3 timepoints, got " + std::to_string(ts.series.cols()));
  if (!all_finite(ts.series)) throw InvalidInput("RoiTimeSeries: non-finite entries in series of subject '" + ts.subject_id + "'");
  if (!ts.region_labels.empty() && static_cast<Eigen::Index>(ts.region_labels.size()) != ts.series.rows())
    throw InvalidInput("RoiTimeSeries: region_labels size does not match n_regions");
}

struct ConnectivityMatrix {
  std::string subject_id;
  Matrix values;  // |V| x |V|, symmetric, unit diagonal, entries in [-1, 1]

  Eigen::Index n_regions() const { return values.rows(); }
};

inline void validate_connectivity(const ConnectivityMatrix& c) {
  const Matrix& m = c.values;
  if (m.rows() != m.cols() || m.rows() < 2) throw InvalidInput("ConnectivityMatrix: must be square with >= 2 regions");
  if (!all_finite(m)) throw InvalidInput("ConnectivityMatrix: non-finite entries");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (m(i, i) != 1.0) throw InvalidInput("ConnectivityMatrix: diagonal must be exactly 1");
    for (Eigen::Index j = i + 1; j < m.cols(); ++j) {
      if (m(i, j) != m(j, i)) throw InvalidInput("ConnectivityMatrix: not exactly symmetric");
      if (m(i, j) < -1.0 || m(i, j) > 1.0) throw InvalidInput("ConnectivityMatrix: entry out of [-1, 1]");
    }
  }
}

struct BrainGraph {
  std::string subject_id;
  int n_nodes = 0;
  Matrix node_features;  // n_nodes x feature_dim (feature_dim = |V| of the source atlas)
  std::vector<std::pair<int, int>> edges;  // undirected, i < j, no duplicates
  std::vector<double> edge_weights;        // aligned with edges
  std::optional<int> label;

  int n_edges() const { return static_cast<int>(edges.size()); }
  int feature_dim() const { return static_cast<int>(node_features.cols()); }
};

inline void validate_graph(const BrainGraph& g) {
  if (g.n_nodes < 1) throw InvalidInput("BrainGraph: must have at least one node");
  if (g.node_features.rows() != g.n_nodes) throw InvalidInput("BrainGraph: node_features rows != n_nodes");
  if (!all_finite(g.node_features)) throw InvalidInput("BrainGraph: non-finite node features");
  if (g.edge_weights.size() != g.edges.size()) throw InvalidInput("BrainGraph: edge_weights misaligned with edges");
  std::vector<std::pair<int, int>> seen(g.edges);
  std::sort(seen.begin(), seen.end());
  for (std::size_t k = 0; k < seen.size(); ++k) {
    const auto [i, j] = seen[k];
    if (i >= j) throw InvalidInput("BrainGraph: edge must satisfy i < j");
    if (i < 0 || j >= g.n_nodes) throw InvalidInput("BrainGraph: edge endpoint out of range");
    if (k > 0 && seen[k] == seen[k - 1]) throw InvalidInput("BrainGraph: duplicate edge");
  }
  for (double w : g.edge_weights)
    if (!std::isfinite(w)) throw InvalidInput("BrainGraph: non-finite edge weight");
}

// Pearson correlation between all region pairs. Regions with zero variance
// correlate 0 with everything (diagonal stays 1) and are reported through the
// warning sink instead of failing ingestion.
inline ConnectivityMatrix pearson_connectivity(const RoiTimeSeries& ts, WarningSink* warnings = nullptr) {
  validate_timeseries(ts);
  const Eigen::Index n = ts.series.rows();
  const Eigen::Index t = ts.series.cols();

  Matrix centered = ts.series;
  Vector norms(n);
  std::vector<bool> degenerate(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = centered.row(i).sum() / static_cast<double>(t);
    centered.row(i).array() -= mean;
    norms(i) = centered.row(i).norm();
    if (norms(i) == 0.0) {
      degenerate[static_cast<std::size_t>(i)] = true;
      warn(warnings, "pearson_connectivity: region " + std::to_string(i) + " of subject '" + ts.subject_id +
                         "' has zero variance; correlations set to 0");
    }
  }

  Matrix out = Matrix::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double r = 0.0;
      if (!degenerate[static_cast<std::size_t>(i)] && !degenerate[static_cast<std::size_t>(j)]) {
        r = centered.row(i).dot(centered.row(j)) / (norms(i) * norms(j));
        r = std::clamp(r, -1.0, 1.0);
      }
      out(i, j) = r;
      out(j, i) = r;
    }
  }
  return ConnectivityMatrix{ts.subject_id, std::move(out)};
}

// Paper budget |V|^2 / 400, floored so the retained edge count never exceeds it.
inline int default_edge_budget(int n_nodes) {
  if (n_nodes < 2) throw InvalidInput("default_edge_budget: need at least 2 nodes");
  return (n_nodes * n_nodes) / 400;
}

enum class EdgeSelection { raw, absolute };

inline EdgeSelection edge_selection_from_string(const std::string& s) {
  if (s == "raw") return EdgeSelection::raw;
  if (s == "absolute") return EdgeSelection::absolute;
  throw InvalidInput("unknown edge selection '" + s + "' (expected raw|absolute)");
}

inline std::string to_string(EdgeSelection s) { return s == EdgeSelection::raw ? "raw" : "absolute"; }

// Keeps the edge_budget largest off-diagonal entries as edges. Ties at the
// cutoff break toward the lexicographically smallest (i, j). Node features are
// the rows of C.
inline BrainGraph build_graph(const ConnectivityMatrix& c, int edge_budget,
                              EdgeSelection selection = EdgeSelection::raw,
                              WarningSink* warnings = nullptr) {
  validate_connectivity(c);
  if (edge_budget < 0) throw InvalidInput("build_graph: edge_budget must be >= 0");
  const int n = static_cast<int>(c.n_regions());
  const int max_edges = n * (n - 1) / 2;
  if (edge_budget > max_edges) {
    warn(warnings, "build_graph: edge budget " + std::to_string(edge_budget) + " exceeds " +
                       std::to_string(max_edges) + " available pairs; clamped");
    edge_budget = max_edges;
  }

  struct Candidate {
    double score;
    int i, j;
  };
  std::vector<Candidate> cands;
  cands.reserve(static_cast<std::size_t>(max_edges));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double v = c.values(i, j);
      cands.push_back({selection == EdgeSelection::absolute ? std::abs(v) : v, i, j});
    }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  cands.resize(static_cast<std::size_t>(edge_budget));
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });

  BrainGraph g;
  g.subject_id = c.subject_id;
  g.n_nodes = n;
  g.node_features = c.values;
  g.edges.reserve(cands.size());
  g.edge_weights.reserve(cands.size());
  for (const Candidate& cd : cands) {
    g.edges.emplace_back(cd.i, cd.j);
    g.edge_weights.push_back(c.values(cd.i, cd.j));
  }
  return g;
}

// Adjacency list of an undirected BrainGraph; index k of neighbors[v] aligns
// with edge_index[v][k] into g.edges.
struct AdjacencyList {
  std::vector<std::vector<int>> neighbors;
  std::vector<std::vector<int>> edge_index;
};

inline AdjacencyList adjacency(const BrainGraph& g) {
  AdjacencyList adj;
  adj.neighbors.resize(static_cast<std::size_t>(g.n_nodes));
  adj.edge_index.resize(static_cast<std::size_t>(g.n_nodes));
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [i, j] = g.edges[e];
    adj.neighbors[static_cast<std::size_t>(i)].push_back(j);
    adj.neighbors[static_cast<std::size_t>(j)].push_back(i);
    adj.edge_index[static_cast<std::size_t>(i)].push_back(static_cast<int>(e));
    adj.edge_index[static_cast<std::size_t>(j)].push_back(static_cast<int>(e));
  }
  return adj;
}

// Induced subgraph on `keep` (ascending node ids of g). Feature rows are
// carried over unchanged, so the feature width stays that of the source atlas.
inline BrainGraph induced_subgraph(const BrainGraph& g, const std::vector<int>& keep) {
  if (keep.empty()) throw InvalidInput("induced_subgraph: keep set must be non-empty");
  std::vector<int> remap(static_cast<std::size_t>(g.n_nodes), -1);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const int v = keep[k];
    if (v < 0 || v >= g.n_nodes) throw InvalidInput("induced_subgraph: node id out of range");
    if (remap[static_cast<std::size_t>(v)] != -1) throw InvalidInput("induced_subgraph: duplicate node id");
    remap[static_cast<std::size_t>(v)] = static_cast<int>(k);
  }

  BrainGraph out;
  out.subject_id = g.subject_id;
  out.label = g.label;
  out.n_nodes = static_cast<int>(keep.size());
  out.node_features.resize(out.n_nodes, g.node_features.cols());
  for (std::size_t k = 0; k < keep.size(); ++k)
    out.node_features.row(static_cast<Eigen::Index>(k)) = g.node_features.row(keep[k]);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const int a = remap[static_cast<std::size_t>(g.edges[e].first)];
    const int b = remap[static_cast<std::size_t>(g.edges[e].second)];
    if (a == -1 || b == -1) continue;
    out.edges.emplace_back(std::min(a, b), std::max(a, b));
    out.edge_weights.push_back(g.edge_weights[e]);
  }
  return out;
}

}  // namespace connlearn::connectome
