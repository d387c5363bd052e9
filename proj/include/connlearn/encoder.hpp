/*
 * Graph transformer backbone: per-layer neighborhood message passing plus
 * all-pairs multi-head self-attention, combined additively under residual
 * connections and row layer norm, with random-walk positional encodings
 * appended to the node features and global mean pooling on top.
 *
 * Attention never crosses graph boundaries; batching happens by encoding
 * each graph on the shared tape and stacking the pooled embeddings.
 */
#pragma once

#include "connlearn/autodiff.hpp"
#include "connlearn/connectome.hpp"

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace connlearn::encoder {

using connectome::BrainGraph;

struct EncoderConfig {
  int input_dim = 116;   // feature width = |V| of the source atlas
  int hidden_dim = 64;
  int n_layers = 4;
  int n_attention_heads = 4;
  int rwpe_steps = 16;   // K random-walk steps appended as positional features
  int embedding_dim = 64;
  bool use_edge_weights = true;
  double dropout = 0.1;
};

inline void validate_encoder(const EncoderConfig& c) {
  if (c.input_dim < 1 || c.hidden_dim < 1 || c.n_layers < 1 || c.n_attention_heads < 1 || c.rwpe_steps < 1 ||
      c.embedding_dim < 1)
    throw InvalidInput("EncoderConfig: all counts must be >= 1");
  if (c.hidden_dim % c.n_attention_heads != 0)
    throw InvalidInput("EncoderConfig: hidden_dim must be divisible by n_attention_heads");
  if (c.dropout < 0.0 || c.dropout >= 1.0) throw InvalidInput("EncoderConfig: dropout must lie in [0, 1)");
}

using ParamMap = std::map<std::string, Matrix>;

// t-step random-walk return probabilities, one column per step t = 1..K.
// Uses the unweighted adjacency; isolated nodes get all-zero rows.
inline Matrix rw_positional_encoding(const BrainGraph& g, int steps) {
  if (steps < 1) throw InvalidInput("rw_positional_encoding: steps must be >= 1");
  const int n = g.n_nodes;
  Matrix p = Matrix::Zero(n, n);
  std::vector<int> degree(static_cast<std::size_t>(n), 0);
  for (const auto& [i, j] : g.edges) {
    ++degree[static_cast<std::size_t>(i)];
    ++degree[static_cast<std::size_t>(j)];
  }
  for (const auto& [i, j] : g.edges) {
    p(i, j) = 1.0 / degree[static_cast<std::size_t>(i)];
    p(j, i) = 1.0 / degree[static_cast<std::size_t>(j)];
  }
  Matrix out(n, steps);
  Matrix power = p;
  for (int t = 0; t < steps; ++t) {
    out.col(t) = power.diagonal();
    if (t + 1 < steps) power = power * p;
  }
  return out;
}

// Mean-aggregation operator D^{-1} A; edge weights act as multiplicative
// gates when enabled. Degree is the unweighted neighbor count.
inline Matrix aggregation_operator(const BrainGraph& g, bool use_edge_weights) {
  const int n = g.n_nodes;
  Matrix ahat = Matrix::Zero(n, n);
  std::vector<int> degree(static_cast<std::size_t>(n), 0);
  for (const auto& [i, j] : g.edges) {
    ++degree[static_cast<std::size_t>(i)];
    ++degree[static_cast<std::size_t>(j)];
  }
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [i, j] = g.edges[e];
    const double gate = use_edge_weights ? g.edge_weights[e] : 1.0;
    ahat(i, j) = gate / degree[static_cast<std::size_t>(i)];
    ahat(j, i) = gate / degree[static_cast<std::size_t>(j)];
  }
  return ahat;
}

// Fan-in scaled normal initialization; deterministic under the rng seed.
inline ParamMap init_params(const EncoderConfig& cfg, Rng& rng) {
  validate_encoder(cfg);
  ParamMap p;
  auto w = [&rng](Eigen::Index rows, Eigen::Index cols) {
    return rng.normal_matrix(rows, cols, 1.0 / std::sqrt(static_cast<double>(rows)));
  };
  p["input.w"] = w(cfg.input_dim + cfg.rwpe_steps, cfg.hidden_dim);
  p["input.b"] = Matrix::Zero(1, cfg.hidden_dim);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    p[pre + "mp.w_self"] = w(cfg.hidden_dim, cfg.hidden_dim);
    p[pre + "mp.w_nbr"] = w(cfg.hidden_dim, cfg.hidden_dim);
    p[pre + "mp.b"] = Matrix::Zero(1, cfg.hidden_dim);
    p[pre + "attn.wq"] = w(cfg.hidden_dim, cfg.hidden_dim);
    p[pre + "attn.wk"] = w(cfg.hidden_dim, cfg.hidden_dim);
    p[pre + "attn.wv"] = w(cfg.hidden_dim, cfg.hidden_dim);
    p[pre + "attn.wo"] = w(cfg.hidden_dim, cfg.hidden_dim);
    p[pre + "attn.bo"] = Matrix::Zero(1, cfg.hidden_dim);
    p[pre + "ln1.gamma"] = Matrix::Ones(1, cfg.hidden_dim);
    p[pre + "ln1.beta"] = Matrix::Zero(1, cfg.hidden_dim);
    p[pre + "ffn.w1"] = w(cfg.hidden_dim, 2 * cfg.hidden_dim);
    p[pre + "ffn.b1"] = Matrix::Zero(1, 2 * cfg.hidden_dim);
    p[pre + "ffn.w2"] = w(2 * cfg.hidden_dim, cfg.hidden_dim);
    p[pre + "ffn.b2"] = Matrix::Zero(1, cfg.hidden_dim);
    p[pre + "ln2.gamma"] = Matrix::Ones(1, cfg.hidden_dim);
    p[pre + "ln2.beta"] = Matrix::Zero(1, cfg.hidden_dim);
  }
  p["output.w"] = w(cfg.hidden_dim, cfg.embedding_dim);
  p["output.b"] = Matrix::Zero(1, cfg.embedding_dim);
  return p;
}

// Tape handles for every parameter; trainable=false registers them as plain
// inputs so frozen inference skips gradient work entirely.
struct EncoderVars {
  std::map<std::string, ad::Var> v;
  ad::Var at(const std::string& name) const {
    const auto it = v.find(name);
    if (it == v.end()) throw InvalidInput("encoder parameter '" + name + "' missing");
    return it->second;
  }
};

inline EncoderVars encoder_vars(ad::Tape& t, const ParamMap& params, bool trainable) {
  EncoderVars ev;
  for (const auto& [name, value] : params) ev.v.emplace(name, trainable ? t.param(value) : t.input(value));
  return ev;
}

struct EncodedGraph {
  ad::Var node_embeddings;   // n x embedding_dim
  ad::Var graph_embedding;   // 1 x embedding_dim
};

namespace detail {

inline ad::Var attention_block(ad::Var h, const EncoderVars& ev, const std::string& pre, int n_heads) {
  ad::Tape& t = *h.tape;
  const Eigen::Index d = t.value(h).cols();
  const Eigen::Index dh = d / n_heads;
  ad::Var q = ad::matmul(h, ev.at(pre + "attn.wq"));
  ad::Var k = ad::matmul(h, ev.at(pre + "attn.wk"));
  ad::Var vv = ad::matmul(h, ev.at(pre + "attn.wv"));
  std::vector<ad::Var> heads;
  heads.reserve(static_cast<std::size_t>(n_heads));
  for (int hd = 0; hd < n_heads; ++hd) {
    ad::Var qh = ad::slice_cols(q, hd * dh, dh);
    ad::Var kh = ad::slice_cols(k, hd * dh, dh);
    ad::Var vh = ad::slice_cols(vv, hd * dh, dh);
    ad::Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    heads.push_back(ad::matmul(ad::softmax_rows(scores), vh));
  }
  return ad::linear(ad::concat_cols(heads), ev.at(pre + "attn.wo"), ev.at(pre + "attn.bo"));
}

inline ad::Var maybe_dropout(ad::Var x, double p, Rng* rng) {
  if (rng == nullptr || p <= 0.0) return x;
  ad::Tape& t = *x.tape;
  const Matrix& v = t.value(x);
  Matrix mask(v.rows(), v.cols());
  const double keep = 1.0 - p;
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) mask(i, j) = rng->uniform() < keep ? 1.0 / keep : 0.0;
  return ad::hadamard_const(x, std::move(mask));
}

}  // namespace detail

// Forward pass for one graph. dropout_rng == nullptr disables dropout
// (deterministic evaluation mode).
inline EncodedGraph encode_graph_tape(ad::Tape& t, const BrainGraph& g, const EncoderVars& ev,
                                      const EncoderConfig& cfg, Rng* dropout_rng = nullptr) {
  validate_encoder(cfg);
  if (g.feature_dim() != cfg.input_dim)
    throw InvalidInput("encode: graph '" + g.subject_id + "' has feature width " +
                       std::to_string(g.feature_dim()) + " but encoder expects " + std::to_string(cfg.input_dim));

  const Matrix pe = rw_positional_encoding(g, cfg.rwpe_steps);
  Matrix x(g.n_nodes, cfg.input_dim + cfg.rwpe_steps);
  x.leftCols(cfg.input_dim) = g.node_features;
  x.rightCols(cfg.rwpe_steps) = pe;

  const Matrix ahat = aggregation_operator(g, cfg.use_edge_weights);

  ad::Var h = ad::linear(t.input(std::move(x)), ev.at("input.w"), ev.at("input.b"));
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    ad::Var mp = ad::add_rowvec(ad::add(ad::matmul(ad::matmul_const_left(ahat, h), ev.at(pre + "mp.w_nbr")),
                                        ad::matmul(h, ev.at(pre + "mp.w_self"))),
                                ev.at(pre + "mp.b"));
    ad::Var at = detail::attention_block(h, ev, pre, cfg.n_attention_heads);
    ad::Var update = detail::maybe_dropout(ad::add(mp, at), cfg.dropout, dropout_rng);
    ad::Var h1 = ad::layer_norm_rows(ad::add(h, update), ev.at(pre + "ln1.gamma"), ev.at(pre + "ln1.beta"));
    ad::Var ff = ad::linear(ad::relu(ad::linear(h1, ev.at(pre + "ffn.w1"), ev.at(pre + "ffn.b1"))),
                            ev.at(pre + "ffn.w2"), ev.at(pre + "ffn.b2"));
    ff = detail::maybe_dropout(ff, cfg.dropout, dropout_rng);
    h = ad::layer_norm_rows(ad::add(h1, ff), ev.at(pre + "ln2.gamma"), ev.at(pre + "ln2.beta"));
  }

  EncodedGraph out;
  out.node_embeddings = ad::linear(h, ev.at("output.w"), ev.at("output.b"));
  out.graph_embedding = ad::mean_rows(out.node_embeddings);
  if (!all_finite(t.value(out.graph_embedding)) || !all_finite(t.value(out.node_embeddings)))
    throw NumericError("encode: non-finite activations for graph '" + g.subject_id +
                       "' (check learning rate / input scale)");
  return out;
}

struct GraphEmbedding {
  Matrix node_embeddings;  // n x embedding_dim
  Matrix graph_embedding;  // 1 x embedding_dim
};

// Deterministic forward pass outside any training step.
inline GraphEmbedding encode(const BrainGraph& g, const ParamMap& params, const EncoderConfig& cfg) {
  ad::Tape t;
  const EncoderVars ev = encoder_vars(t, params, /*trainable=*/false);
  const EncodedGraph enc = encode_graph_tape(t, g, ev, cfg, nullptr);
  return GraphEmbedding{t.value(enc.node_embeddings), t.value(enc.graph_embedding)};
}

}  // namespace connlearn::encoder
