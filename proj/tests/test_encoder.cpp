// Encoder backbone: random-walk positional encodings against hand-computed
// matrix powers, permutation invariance, determinism, and gradient flow
// through a tiny config.

#include "connlearn/encoder.hpp"
#include "connlearn/objective.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace {

using namespace connlearn;
using namespace connlearn::encoder;
using connectome::BrainGraph;

BrainGraph make_graph(int n, std::vector<std::pair<int, int>> edges, Rng& rng,
                      std::vector<double> weights = {}) {
  BrainGraph g;
  g.subject_id = "g";
  g.n_nodes = n;
  g.node_features = rng.normal_matrix(n, n);
  g.edges = std::move(edges);
  if (weights.empty()) weights.assign(g.edges.size(), 1.0);
  g.edge_weights = std::move(weights);
  return g;
}

TEST(Rwpe, TwoNodeEdgeAlternates) {
  Rng rng(1);
  const auto g = make_graph(2, {{0, 1}}, rng);
  const Matrix pe = rw_positional_encoding(g, 2);
  // bipartite parity: return impossible in 1 step, certain in 2
  EXPECT_DOUBLE_EQ(pe(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(pe(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(pe(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(pe(1, 1), 1.0);
}

TEST(Rwpe, TriangleReturnProbability) {
  Rng rng(2);
  const auto g = make_graph(3, {{0, 1}, {0, 2}, {1, 2}}, rng);
  const Matrix pe = rw_positional_encoding(g, 2);
  for (int v = 0; v < 3; ++v) {
    EXPECT_DOUBLE_EQ(pe(v, 0), 0.0);
    EXPECT_DOUBLE_EQ(pe(v, 1), 0.5);  // (D^-1 A)^2 diagonal of the triangle
  }
}

TEST(Rwpe, IsolatedNodeGetsZeros) {
  Rng rng(3);
  const auto g = make_graph(3, {{0, 1}}, rng);  // node 2 isolated
  const Matrix pe = rw_positional_encoding(g, 4);
  EXPECT_TRUE(pe.row(2).isZero());
}

TEST(Rwpe, EntriesAreProbabilities) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::pair<int, int>> edges;
    const int n = 4 + static_cast<int>(rng.below(8));
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng.uniform() < 0.4) edges.emplace_back(i, j);
    const auto g = make_graph(n, edges, rng);
    const Matrix pe = rw_positional_encoding(g, 6);
    EXPECT_GE(pe.minCoeff(), 0.0);
    EXPECT_LE(pe.maxCoeff(), 1.0);
  }
}

TEST(Rwpe, BipartitePathHasZeroOddReturns) {
  Rng rng(5);
  const auto g = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}}, rng);
  const Matrix pe = rw_positional_encoding(g, 6);
  for (int v = 0; v < 5; ++v)
    for (int t = 0; t < 6; t += 2)  // columns 0,2,4 are steps 1,3,5
      EXPECT_DOUBLE_EQ(pe(v, t), 0.0);
}

EncoderConfig tiny_config(int input_dim) {
  EncoderConfig cfg;
  cfg.input_dim = input_dim;
  cfg.hidden_dim = 8;
  cfg.n_layers = 1;
  cfg.n_attention_heads = 2;
  cfg.rwpe_steps = 3;
  cfg.embedding_dim = 5;
  cfg.dropout = 0.0;
  return cfg;
}

TEST(InitParams, SeedControlsDraws) {
  const EncoderConfig cfg = tiny_config(6);
  Rng r1(9), r2(9), r3(10);
  const ParamMap a = init_params(cfg, r1);
  const ParamMap b = init_params(cfg, r2);
  const ParamMap c = init_params(cfg, r3);
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, m] : a) EXPECT_TRUE((m.array() == b.at(name).array()).all()) << name;
  EXPECT_FALSE((a.at("input.w").array() == c.at("input.w").array()).all());
}

TEST(InitParams, RejectsBadConfig) {
  EncoderConfig cfg = tiny_config(6);
  cfg.n_layers = 0;
  Rng rng(1);
  EXPECT_THROW(init_params(cfg, rng), InvalidInput);
  cfg = tiny_config(6);
  cfg.hidden_dim = 9;  // not divisible by heads
  EXPECT_THROW(validate_encoder(cfg), InvalidInput);
}

TEST(Encode, PermutationInvariantGraphEmbedding) {
  Rng rng(11);
  for (int trial = 0; trial < 12; ++trial) {
    const int n = 4 + static_cast<int>(rng.below(6));
    std::vector<std::pair<int, int>> edges;
    std::vector<double> weights;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng.uniform() < 0.5) {
          edges.emplace_back(i, j);
          weights.push_back(2.0 * rng.uniform() - 1.0);
        }
    const auto g = make_graph(n, edges, rng, weights);
    const EncoderConfig cfg = tiny_config(n);
    Rng prng(100 + static_cast<std::uint64_t>(trial));
    const ParamMap params = init_params(cfg, prng);

    // permutation: new node i is old node perm[i]
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    rng.shuffle(perm);
    std::vector<int> inv(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) inv[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;

    BrainGraph pg = g;
    for (int i = 0; i < n; ++i) pg.node_features.row(i) = g.node_features.row(perm[static_cast<std::size_t>(i)]);
    pg.edges.clear();
    pg.edge_weights.clear();
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      int a = inv[static_cast<std::size_t>(g.edges[e].first)];
      int b = inv[static_cast<std::size_t>(g.edges[e].second)];
      pg.edges.emplace_back(std::min(a, b), std::max(a, b));
      pg.edge_weights.push_back(g.edge_weights[e]);
    }

    const Matrix base = encode(g, params, cfg).graph_embedding;
    const Matrix permuted = encode(pg, params, cfg).graph_embedding;
    EXPECT_LT((base - permuted).cwiseAbs().maxCoeff(), 1e-5) << "trial " << trial;
  }
}

TEST(Encode, SingleNodeGraphPoolsToItself) {
  Rng rng(12);
  BrainGraph g;
  g.subject_id = "solo";
  g.n_nodes = 1;
  g.node_features = rng.normal_matrix(1, 4);
  const EncoderConfig cfg = tiny_config(4);
  Rng prng(13);
  const ParamMap params = init_params(cfg, prng);
  const GraphEmbedding emb = encode(g, params, cfg);
  EXPECT_TRUE(emb.graph_embedding.isApprox(emb.node_embeddings.row(0), 1e-12));
}

TEST(Encode, PooledEmbeddingIsMeanOfNodeEmbeddings) {
  Rng rng(14);
  const auto g = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}}, rng);
  const EncoderConfig cfg = tiny_config(5);
  Rng prng(15);
  const GraphEmbedding emb = encode(g, init_params(cfg, prng), cfg);
  EXPECT_TRUE(emb.graph_embedding.isApprox(emb.node_embeddings.colwise().mean(), 1e-6));
}

TEST(Encode, DeterministicForward) {
  Rng rng(16);
  const auto g = make_graph(6, {{0, 1}, {2, 3}, {4, 5}, {1, 2}}, rng);
  const EncoderConfig cfg = tiny_config(6);
  Rng prng(17);
  const ParamMap params = init_params(cfg, prng);
  const Matrix a = encode(g, params, cfg).graph_embedding;
  const Matrix b = encode(g, params, cfg).graph_embedding;
  EXPECT_TRUE((a.array() == b.array()).all());
}

TEST(Encode, FeatureWidthMismatchFails) {
  Rng rng(18);
  const auto g = make_graph(4, {{0, 1}}, rng);
  const EncoderConfig cfg = tiny_config(7);  // expects width 7, graph has 4
  Rng prng(19);
  EXPECT_THROW(encode(g, init_params(cfg, prng), cfg), InvalidInput);
}

TEST(Encode, NonFiniteActivationsFailFast) {
  Rng rng(20);
  auto g = make_graph(4, {{0, 1}, {2, 3}}, rng);
  g.node_features *= 1e200;  // overflow through the squared layer-norm variance
  const EncoderConfig cfg = tiny_config(4);
  Rng prng(21);
  EXPECT_THROW(encode(g, init_params(cfg, prng), cfg), NumericError);
}

TEST(Encode, EdgeWeightGateChangesOutput) {
  Rng rng(22);
  const auto g = make_graph(4, {{0, 1}, {1, 2}, {2, 3}}, rng, {0.9, -0.5, 0.1});
  EncoderConfig cfg = tiny_config(4);
  Rng prng(23);
  const ParamMap params = init_params(cfg, prng);
  cfg.use_edge_weights = true;
  const Matrix gated = encode(g, params, cfg).graph_embedding;
  cfg.use_edge_weights = false;
  const Matrix ungated = encode(g, params, cfg).graph_embedding;
  EXPECT_FALSE(gated.isApprox(ungated, 1e-9));
}

TEST(Encode, DropoutMasksAreSeededAndOptional) {
  Rng rng(24);
  const auto g = make_graph(5, {{0, 1}, {1, 2}, {3, 4}}, rng);
  EncoderConfig cfg = tiny_config(5);
  cfg.dropout = 0.4;
  Rng prng(25);
  const ParamMap params = init_params(cfg, prng);
  ad::Tape t1, t2, t3;
  const EncoderVars ev1 = encoder_vars(t1, params, false);
  const EncoderVars ev2 = encoder_vars(t2, params, false);
  const EncoderVars ev3 = encoder_vars(t3, params, false);
  Rng d1(7), d2(7), d3(8);
  const Matrix a = t1.value(encode_graph_tape(t1, g, ev1, cfg, &d1).graph_embedding);
  const Matrix b = t2.value(encode_graph_tape(t2, g, ev2, cfg, &d2).graph_embedding);
  const Matrix c = t3.value(encode_graph_tape(t3, g, ev3, cfg, &d3).graph_embedding);
  EXPECT_TRUE((a.array() == b.array()).all());   // same dropout stream
  EXPECT_FALSE(a.isApprox(c, 1e-12));            // different stream
}

// End-to-end gradient flow: hfmca loss through heads and a 1-layer encoder on
// a 6-node graph, every parameter checked against central differences.
TEST(Encode, GradientFlowMatchesFiniteDifferences) {
  Rng rng(26);
  const auto g1 = make_graph(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {0, 5}}, rng);
  const auto g2 = make_graph(6, {{0, 2}, {1, 3}, {2, 4}, {3, 5}}, rng);
  const auto g3 = make_graph(6, {{0, 1}, {2, 5}, {1, 4}}, rng);
  // second view per graph: same topology, independently drawn features
  auto jitter = [&rng](BrainGraph g) {
    g.node_features += 0.3 * rng.normal_matrix(g.n_nodes, g.node_features.cols());
    return g;
  };
  const auto j1 = jitter(g1), j2 = jitter(g2), j3 = jitter(g3);
  const std::vector<const BrainGraph*> batch = {&g1, &g2, &g3};
  const std::vector<const BrainGraph*> batch2 = {&j1, &j2, &j3};

  const EncoderConfig cfg = tiny_config(6);
  Rng prng(27);
  const ParamMap params = init_params(cfg, prng);
  Rng hrng(28);
  const objective::ProjectionHeads heads = objective::init_projection_heads(cfg.embedding_dim, 4, 2, hrng);
  const double eps = 1e-3;

  // forward builder shared by the analytic and FD routes
  auto forward = [&](const ParamMap& p, const objective::ProjectionHeads& h, bool trainable, ad::Tape& t,
                     EncoderVars* ev_out, objective::HeadVars* hv_out) {
    EncoderVars ev = encoder_vars(t, p, trainable);
    objective::HeadVars hv = objective::head_vars(t, h);
    std::vector<ad::Var> v1, v2;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      v1.push_back(encode_graph_tape(t, *batch[i], ev, cfg, nullptr).graph_embedding);
      v2.push_back(encode_graph_tape(t, *batch2[i], ev, cfg, nullptr).graph_embedding);
    }
    ad::Var zl = objective::project_low_tape({ad::concat_rows(v1), ad::concat_rows(v2)}, hv);
    ad::Var zh = objective::project_high_tape({ad::concat_rows(v1), ad::concat_rows(v2)}, hv);
    if (ev_out) *ev_out = ev;
    if (hv_out) *hv_out = hv;
    return objective::dependence_loss_node(zl, zh, eps);
  };

  ad::Tape tape;
  EncoderVars ev;
  objective::HeadVars hv;
  ad::Var loss = forward(params, heads, true, tape, &ev, &hv);
  tape.backward(loss);

  auto eval = [&](const ParamMap& p) {
    ad::Tape t;
    return t.value(forward(p, heads, false, t, nullptr, nullptr))(0, 0);
  };

  const double h = 1e-5;
  int checked = 0;
  for (const auto& [name, tensor] : params) {
    const Matrix analytic = tape.grad(ev.at(name));
    for (Eigen::Index i = 0; i < tensor.rows(); ++i)
      for (Eigen::Index j = 0; j < tensor.cols(); ++j) {
        // sample a deterministic subset to keep the test quick
        if ((i * 31 + j * 7 + static_cast<Eigen::Index>(fnv1a(name) % 5)) % 5 != 0) continue;
        ParamMap up = params, down = params;
        up[name](i, j) += h;
        down[name](i, j) -= h;
        const double fd = (eval(up) - eval(down)) / (2.0 * h);
        const double a = analytic(i, j);
        if (std::abs(a - fd) < 1e-8) continue;
        EXPECT_LT(std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6}), 1e-4)
            << name << "(" << i << "," << j << ")";
        ++checked;
      }
  }
  EXPECT_GT(checked, 50);  // the sample must actually cover the parameter space
}

}  // namespace
