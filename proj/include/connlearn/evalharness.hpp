/*
 * Downstream evaluation: frozen/unfrozen probing under nested stratified
 * cross-validation, transfer evaluation, and the scaling-law runner.
 *
 * Protocol: for each of n_runs seeds, split into outer folds (stratified);
 * inner folds on the outer-train select the probe learning rate from a grid;
 * the selected probe retrains on the full outer-train and is scored on the
 * held-out fold. A run's accuracy pools correct predictions across its outer
 * folds; the report gives mean +/- sample std over the per-run accuracies.
 * Test-fold samples never touch probe training or model selection.
 */
#pragma once

#include "connlearn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace connlearn::evalharness {

using connectome::BrainGraph;
using connectome::Dataset;
using trainer::Checkpoint;

struct ProbeConfig {
  std::string mode = "frozen";  // frozen | unfrozen
  int outer_folds = 5;
  int inner_folds = 3;
  int n_runs = 10;
  int probe_epochs = 100;
  std::vector<double> probe_lr_grid = {1e-2, 1e-3, 1e-4};
  std::uint64_t seed = 0;
};

inline void validate_probe(const ProbeConfig& cfg) {
  if (cfg.mode != "frozen" && cfg.mode != "unfrozen")
    throw InvalidInput("ProbeConfig: mode must be frozen|unfrozen");
  if (cfg.outer_folds < 2 || cfg.inner_folds < 2) throw InvalidInput("ProbeConfig: folds must be >= 2");
  if (cfg.n_runs < 1) throw InvalidInput("ProbeConfig: n_runs must be >= 1");
  if (cfg.probe_epochs < 1) throw InvalidInput("ProbeConfig: probe_epochs must be >= 1");
  if (cfg.probe_lr_grid.empty()) throw InvalidInput("ProbeConfig: learning-rate grid must be non-empty");
  for (double lr : cfg.probe_lr_grid)
    if (lr <= 0.0) throw InvalidInput("ProbeConfig: learning rates must be positive");
}

struct ProbeReport {
  std::string task;      // dataset name
  std::string method;    // caller-supplied tag (objective name etc.)
  std::string mode;      // frozen | unfrozen
  std::string protocol;  // probe | transfer
  double accuracy_mean = 0.0;  // percent
  double accuracy_std = 0.0;   // sample std over runs, percent
  std::vector<double> per_run_accuracy;  // percent
  double majority_class_accuracy = 0.0;  // percent
  ProbeConfig config;
  // diagnostics: per (run, outer fold) hash of the trained probe parameters,
  // used by the leakage check
  std::vector<std::vector<std::uint64_t>> cell_hashes;
};

// Frequency of the most common label, in percent.
inline double majority_class(const std::vector<int>& labels) {
  if (labels.empty()) throw InvalidInput("majority_class: empty label list");
  std::map<int, int> counts;
  for (int y : labels) ++counts[y];
  int best = 0;
  for (const auto& [y, c] : counts) {
    (void)y;
    best = std::max(best, c);
  }
  return 100.0 * static_cast<double>(best) / static_cast<double>(labels.size());
}

// Disjoint covering folds, stratified by label: every class is shuffled and
// dealt round-robin with a cursor shared across classes, keeping per-fold
// class counts within one sample of proportional.
inline std::vector<std::vector<int>> stratified_folds(const std::vector<int>& labels, int k, Rng& rng) {
  if (k < 2) throw InvalidInput("stratified_folds: need k >= 2");
  if (static_cast<int>(labels.size()) < k) throw InvalidInput("stratified_folds: fewer samples than folds");
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));
  std::vector<std::vector<int>> folds(static_cast<std::size_t>(k));
  int cursor = 0;
  for (auto& [label, idx] : by_class) {
    (void)label;
    rng.shuffle(idx);
    for (int i : idx) {
      folds[static_cast<std::size_t>(cursor % k)].push_back(i);
      ++cursor;
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

// ---- linear probe (multinomial logistic regression) -----------------------------

struct LinearProbe {
  Matrix w;  // d x n_classes
  Matrix b;  // 1 x n_classes
};

namespace detail {

inline Matrix softmax_rows_plain(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    Eigen::ArrayXd e = (logits.row(i).array() - m).exp();
    p.row(i) = (e / e.sum()).matrix();
  }
  return p;
}

inline double cross_entropy(const Matrix& probs, const std::vector<int>& y) {
  double loss = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    loss -= std::log(std::max(probs(i, y[static_cast<std::size_t>(i)]), 1e-300));
  return loss / static_cast<double>(probs.rows());
}

}  // namespace detail

// Full-batch AdamW from zero init (convex objective, so no random restarts),
// with early exit once the training loss plateaus.
inline LinearProbe train_linear_probe(const Matrix& x, const std::vector<int>& y, int n_classes, double lr,
                                      int epochs) {
  if (x.rows() != static_cast<Eigen::Index>(y.size())) throw InvalidInput("train_linear_probe: labels misaligned");
  if (x.rows() < 1) throw InvalidInput("train_linear_probe: empty training set");
  LinearProbe p;
  p.w = Matrix::Zero(x.cols(), n_classes);
  p.b = Matrix::Zero(1, n_classes);
  Matrix mw = Matrix::Zero(x.cols(), n_classes), vw = mw;
  Matrix mb = Matrix::Zero(1, n_classes), vb = mb;
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const double n = static_cast<double>(x.rows());

  double best_loss = std::numeric_limits<double>::infinity();
  int stall = 0;
  for (int t = 1; t <= epochs; ++t) {
    Matrix logits = (x * p.w).rowwise() + p.b.row(0);
    Matrix probs = detail::softmax_rows_plain(logits);
    const double loss = detail::cross_entropy(probs, y);
    if (loss < best_loss - 1e-9 * std::max(1.0, std::abs(best_loss))) {
      best_loss = loss;
      stall = 0;
    } else if (++stall >= 10) {
      break;  // training-loss plateau
    }
    for (Eigen::Index i = 0; i < probs.rows(); ++i) probs(i, y[static_cast<std::size_t>(i)]) -= 1.0;
    probs /= n;
    const Matrix gw = x.transpose() * probs;
    const Matrix gb = probs.colwise().sum();
    const double bc1 = 1.0 - std::pow(beta1, t), bc2 = 1.0 - std::pow(beta2, t);
    mw = beta1 * mw + (1.0 - beta1) * gw;
    vw = (beta2 * vw.array() + (1.0 - beta2) * gw.array().square()).matrix();
    mb = beta1 * mb + (1.0 - beta1) * gb;
    vb = (beta2 * vb.array() + (1.0 - beta2) * gb.array().square()).matrix();
    p.w -= lr * ((mw / bc1).array() / ((vw / bc2).array().sqrt() + eps)).matrix();
    p.b -= lr * ((mb / bc1).array() / ((vb / bc2).array().sqrt() + eps)).matrix();
  }
  return p;
}

inline int probe_predict(const LinearProbe& p, const Eigen::RowVectorXd& features) {
  Eigen::RowVectorXd logits = features * p.w + p.b.row(0);
  Eigen::Index best;
  logits.maxCoeff(&best);  // ties resolve to the smallest index
  return static_cast<int>(best);
}

// ---- embedding + label plumbing ---------------------------------------------------

inline Matrix embed_graphs(const std::vector<BrainGraph>& graphs, const encoder::ParamMap& params,
                           const encoder::EncoderConfig& cfg) {
  if (graphs.empty()) throw InvalidInput("embed_graphs: no graphs");
  Matrix x(static_cast<Eigen::Index>(graphs.size()), cfg.embedding_dim);
  for (std::size_t i = 0; i < graphs.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = encoder::encode(graphs[i], params, cfg).graph_embedding.row(0);
  return x;
}

inline std::vector<int> dataset_labels(const Dataset& ds) {
  std::vector<int> y;
  y.reserve(ds.graphs.size());
  for (const auto& g : ds.graphs) {
    if (!g.label.has_value())
      throw InvalidInput("dataset '" + ds.manifest.name + "': subject '" + g.subject_id + "' is unlabeled");
    y.push_back(*g.label);
  }
  return y;
}

namespace detail {

inline std::uint64_t hash_matrix(std::uint64_t h, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::uint64_t bits;
      const double v = m(i, j);
      static_assert(sizeof(bits) == sizeof(v));
      std::memcpy(&bits, &v, sizeof(bits));
      h ^= bits;
      h *= 0x100000001b3ULL;
    }
  return h;
}

inline int count_classes(const std::vector<int>& y, const char* context) {
  int max_label = -1;
  for (int v : y) {
    if (v < 0) throw InvalidInput(std::string(context) + ": negative class label");
    max_label = std::max(max_label, v);
  }
  std::vector<bool> seen(static_cast<std::size_t>(max_label + 1), false);
  for (int v : y) seen[static_cast<std::size_t>(v)] = true;
  for (std::size_t c = 0; c < seen.size(); ++c)
    if (!seen[c])
      throw InvalidInput(std::string(context) + ": class labels must be contiguous 0..C-1 (missing " +
                         std::to_string(c) + ")");
  if (max_label < 1) throw InvalidInput(std::string(context) + ": need at least two classes");
  return max_label + 1;
}

template <typename T>
std::vector<T> take(const std::vector<T>& v, const std::vector<int>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(v[static_cast<std::size_t>(i)]);
  return out;
}

inline Matrix take_rows(const Matrix& m, const std::vector<int>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

// Unfrozen cell: fine-tune backbone + linear head with full-batch AdamW on
// the cell's training graphs. Dropout stays off for determinism.
struct UnfrozenModel {
  encoder::ParamMap enc_params;
  LinearProbe head;
};

inline UnfrozenModel train_unfrozen_cell(const std::vector<const BrainGraph*>& graphs, const std::vector<int>& y,
                                         int n_classes, const encoder::ParamMap& init_params,
                                         const encoder::EncoderConfig& cfg_in, double lr, int epochs) {
  encoder::EncoderConfig cfg = cfg_in;
  cfg.dropout = 0.0;
  UnfrozenModel model;
  model.enc_params = init_params;
  model.head.w = Matrix::Zero(cfg.embedding_dim, n_classes);
  model.head.b = Matrix::Zero(1, n_classes);

  trainer::OptimizerState opt;
  const trainer::AdamSettings adam{lr, 0.9, 0.999, 1e-8, 0.0};
  Matrix onehot_mask = Matrix::Zero(static_cast<Eigen::Index>(y.size()), n_classes);
  for (std::size_t i = 0; i < y.size(); ++i) onehot_mask(static_cast<Eigen::Index>(i), y[i]) = 1.0;

  double best_loss = std::numeric_limits<double>::infinity();
  int stall = 0;
  for (int t = 1; t <= epochs; ++t) {
    ad::Tape tape;
    encoder::EncoderVars ev = encoder::encoder_vars(tape, model.enc_params, /*trainable=*/true);
    ad::Var w = tape.param(model.head.w);
    ad::Var b = tape.param(model.head.b);
    std::vector<ad::Var> rows;
    rows.reserve(graphs.size());
    for (const BrainGraph* g : graphs)
      rows.push_back(encoder::encode_graph_tape(tape, *g, ev, cfg, nullptr).graph_embedding);
    ad::Var logits = ad::linear(ad::concat_rows(rows), w, b);
    ad::Var lse = ad::log_(ad::row_sum(ad::exp_(logits)));
    ad::Var pos = ad::row_sum(ad::hadamard_const(logits, onehot_mask));
    ad::Var loss = ad::mean_all(ad::sub(lse, pos));

    const double loss_value = tape.value(loss)(0, 0);
    if (!std::isfinite(loss_value)) throw NumericError("unfrozen probe: non-finite loss");
    if (loss_value < best_loss - 1e-9 * std::max(1.0, std::abs(best_loss))) {
      best_loss = loss_value;
      stall = 0;
    } else if (++stall >= 10) {
      break;
    }
    tape.backward(loss);

    trainer::TensorMap enc_grads;
    for (const auto& [name, var] : ev.v) enc_grads[name] = tape.grad(var);
    trainer::TensorMap head_params{{"w", model.head.w}, {"b", model.head.b}};
    trainer::TensorMap head_grads{{"w", tape.grad(w)}, {"b", tape.grad(b)}};
    trainer::adam_step_group(model.enc_params, enc_grads, opt, "enc.", adam, t);
    trainer::adam_step_group(head_params, head_grads, opt, "head.", adam, t);
    model.head.w = head_params.at("w");
    model.head.b = head_params.at("b");
  }
  return model;
}

}  // namespace detail

// ---- the probe protocol -------------------------------------------------------------

struct CellOutcome {
  std::vector<int> predictions;  // aligned with the evaluated index list
  std::uint64_t param_hash = 0;
};

// Trains on train_idx with the given learning rate and predicts eval_idx.
// Implementations must never read labels of eval_idx.
using CellTrainer =
    std::function<CellOutcome(const std::vector<int>& train_idx, const std::vector<int>& eval_idx, double lr)>;

struct RunResult {
  long correct = 0;
  long total = 0;
  std::vector<std::uint64_t> cell_hashes;  // one per outer fold
};

// One run of the nested protocol over a fixed outer partition: inner folds on
// each outer-train pick the learning rate, the winning probe retrains on the
// full outer-train and is scored on the held-out fold.
inline RunResult run_nested_cv(const std::vector<int>& labels, const std::vector<std::vector<int>>& outer,
                               const ProbeConfig& cfg, const Rng& root, int run, const CellTrainer& cell) {
  RunResult result;
  const int n_outer = static_cast<int>(outer.size());
  for (int f = 0; f < n_outer; ++f) {
    std::vector<int> train_idx;
    for (int f2 = 0; f2 < n_outer; ++f2)
      if (f2 != f)
        train_idx.insert(train_idx.end(), outer[static_cast<std::size_t>(f2)].begin(),
                         outer[static_cast<std::size_t>(f2)].end());
    const std::vector<int>& test_idx = outer[static_cast<std::size_t>(f)];
    if (static_cast<int>(train_idx.size()) < cfg.inner_folds)
      throw InvalidInput("probe: outer-train smaller than inner fold count");

    // inner model selection over the learning-rate grid; ties keep grid order
    double best_lr = cfg.probe_lr_grid.front();
    if (cfg.probe_lr_grid.size() > 1) {
      const std::vector<int> y_outer_train = detail::take(labels, train_idx);
      Rng inner_rng =
          root.substream({0x696e6e6572ULL, static_cast<std::uint64_t>(run), static_cast<std::uint64_t>(f)});
      const auto inner = stratified_folds(y_outer_train, cfg.inner_folds, inner_rng);
      double best_acc = -1.0;
      for (double lr : cfg.probe_lr_grid) {
        long inner_correct = 0, inner_total = 0;
        for (int g = 0; g < cfg.inner_folds; ++g) {
          std::vector<int> tr, va;
          for (int g2 = 0; g2 < cfg.inner_folds; ++g2) {
            for (int local : inner[static_cast<std::size_t>(g2)]) {
              (g2 == g ? va : tr).push_back(train_idx[static_cast<std::size_t>(local)]);
            }
          }
          if (tr.empty() || va.empty()) continue;
          const CellOutcome out = cell(tr, va, lr);
          for (std::size_t i = 0; i < va.size(); ++i)
            if (out.predictions[i] == labels[static_cast<std::size_t>(va[i])]) ++inner_correct;
          inner_total += static_cast<long>(va.size());
        }
        const double acc = inner_total > 0 ? static_cast<double>(inner_correct) / inner_total : 0.0;
        if (acc > best_acc + 1e-12) {
          best_acc = acc;
          best_lr = lr;
        }
      }
    }

    const CellOutcome out = cell(train_idx, test_idx, best_lr);
    for (std::size_t i = 0; i < test_idx.size(); ++i)
      if (out.predictions[i] == labels[static_cast<std::size_t>(test_idx[i])]) ++result.correct;
    result.total += static_cast<long>(test_idx.size());
    result.cell_hashes.push_back(out.param_hash);
  }
  return result;
}

// Cell trainer over fixed feature rows (the frozen path).
inline CellTrainer frozen_cell_trainer(const Matrix& features, const std::vector<int>& labels, int n_classes,
                                       const ProbeConfig& cfg) {
  return [&features, &labels, n_classes, probe_epochs = cfg.probe_epochs](
             const std::vector<int>& train_idx, const std::vector<int>& eval_idx, double lr) {
    CellOutcome out;
    const Matrix x_train = detail::take_rows(features, train_idx);
    const std::vector<int> y_train = detail::take(labels, train_idx);
    const LinearProbe p = train_linear_probe(x_train, y_train, n_classes, lr, probe_epochs);
    out.param_hash = detail::hash_matrix(detail::hash_matrix(0xcbf29ce484222325ULL, p.w), p.b);
    out.predictions.reserve(eval_idx.size());
    for (int i : eval_idx) out.predictions.push_back(probe_predict(p, features.row(i)));
    return out;
  };
}

inline ProbeReport probe(const Checkpoint& ckpt, const Dataset& ds, const ProbeConfig& cfg,
                         const std::string& protocol = "probe") {
  validate_probe(cfg);
  if (ds.graphs.empty()) throw InvalidInput("probe: dataset is empty");
  const std::vector<int> labels = dataset_labels(ds);
  const int n_classes = detail::count_classes(labels, "probe");
  const int n = static_cast<int>(labels.size());
  if (n < cfg.outer_folds) throw InvalidInput("probe: fewer samples than outer folds");

  const bool frozen = cfg.mode == "frozen";
  Matrix features;  // frozen mode embeds everything once
  CellTrainer cell;
  if (frozen) {
    features = embed_graphs(ds.graphs, ckpt.encoder_params, ckpt.encoder_config);
    cell = frozen_cell_trainer(features, labels, n_classes, cfg);
  } else {
    cell = [&ds, &labels, n_classes, &ckpt, probe_epochs = cfg.probe_epochs](
               const std::vector<int>& train_idx, const std::vector<int>& eval_idx, double lr) {
      CellOutcome out;
      std::vector<const BrainGraph*> train_graphs;
      train_graphs.reserve(train_idx.size());
      for (int i : train_idx) train_graphs.push_back(&ds.graphs[static_cast<std::size_t>(i)]);
      const std::vector<int> y_train = detail::take(labels, train_idx);
      const detail::UnfrozenModel m = detail::train_unfrozen_cell(
          train_graphs, y_train, n_classes, ckpt.encoder_params, ckpt.encoder_config, lr, probe_epochs);
      std::uint64_t h = detail::hash_matrix(detail::hash_matrix(0xcbf29ce484222325ULL, m.head.w), m.head.b);
      for (const auto& [name, tensor] : m.enc_params) {
        h ^= fnv1a(name);
        h = detail::hash_matrix(h, tensor);
      }
      out.param_hash = h;
      encoder::EncoderConfig eval_cfg = ckpt.encoder_config;
      eval_cfg.dropout = 0.0;
      out.predictions.reserve(eval_idx.size());
      for (int i : eval_idx) {
        const Matrix emb =
            encoder::encode(ds.graphs[static_cast<std::size_t>(i)], m.enc_params, eval_cfg).graph_embedding;
        out.predictions.push_back(probe_predict(m.head, emb.row(0)));
      }
      return out;
    };
  }

  const Rng root(cfg.seed);
  ProbeReport report;
  report.task = ds.manifest.name;
  report.mode = cfg.mode;
  report.protocol = protocol;
  report.config = cfg;
  report.majority_class_accuracy = majority_class(labels);

  for (int run = 0; run < cfg.n_runs; ++run) {
    Rng fold_rng = root.substream({0x72756eULL, static_cast<std::uint64_t>(run)});
    const auto outer = stratified_folds(labels, cfg.outer_folds, fold_rng);
    RunResult rr = run_nested_cv(labels, outer, cfg, root, run, cell);
    report.per_run_accuracy.push_back(100.0 * static_cast<double>(rr.correct) / static_cast<double>(rr.total));
    report.cell_hashes.push_back(std::move(rr.cell_hashes));
  }

  const auto& acc = report.per_run_accuracy;
  double mean = 0.0;
  for (double a : acc) mean += a;
  mean /= static_cast<double>(acc.size());
  double var = 0.0;
  for (double a : acc) var += (a - mean) * (a - mean);
  report.accuracy_mean = mean;
  report.accuracy_std = acc.size() > 1 ? std::sqrt(var / static_cast<double>(acc.size() - 1)) : 0.0;
  return report;
}

// Identical mechanics; the dataset is one the checkpoint never saw.
inline ProbeReport transfer_eval(const Checkpoint& ckpt, const Dataset& unseen, const ProbeConfig& cfg) {
  return probe(ckpt, unseen, cfg, "transfer");
}

// ---- scaling runner ------------------------------------------------------------------

struct ScalingPoint {
  std::string pool_name;
  std::size_t pool_size = 0;
  std::vector<ProbeReport> reports;  // one per downstream task
};

struct ScalingReport {
  std::vector<ScalingPoint> points;
};

inline Dataset merge_datasets(const std::vector<const Dataset*>& parts) {
  Dataset merged;
  std::string name;
  for (const Dataset* p : parts) {
    name += (name.empty() ? "" : "+") + p->manifest.name;
    for (const auto& g : p->graphs) merged.graphs.push_back(g);
    for (const auto& id : p->manifest.subject_ids) merged.manifest.subject_ids.push_back(id);
    for (const auto& [id, label] : p->manifest.label_map) merged.manifest.label_map[id] = label;
  }
  merged.manifest.name = name;
  merged.manifest.provenance = "merged";
  connectome::validate_manifest(merged.manifest);  // rejects duplicate subject ids across pools
  return merged;
}

// Pretrains from scratch on every prefix-union of the pools and probes each
// downstream task; records the accuracy-vs-pool-size curve without asserting
// any monotone trend.
inline ScalingReport scaling_run(const std::vector<Dataset>& pools, const std::vector<Dataset>& tasks,
                                 const trainer::TrainConfig& train_cfg, const ProbeConfig& probe_cfg,
                                 WarningSink* warnings = nullptr) {
  if (pools.empty()) throw InvalidInput("scaling_run: need at least one pretraining pool");
  if (tasks.empty()) throw InvalidInput("scaling_run: need at least one downstream task");
  ScalingReport out;
  std::vector<const Dataset*> prefix;
  for (const Dataset& pool : pools) {
    prefix.push_back(&pool);
    const Dataset merged = merge_datasets(prefix);
    trainer::PretrainOptions opts;
    opts.warnings = warnings;
    const Checkpoint ckpt = strip_heads(trainer::pretrain(merged, train_cfg, opts));
    ScalingPoint point;
    point.pool_name = merged.manifest.name;
    point.pool_size = merged.graphs.size();
    for (const Dataset& task : tasks) {
      ProbeReport r = probe(ckpt, task, probe_cfg);
      r.method = train_cfg.objective;
      point.reports.push_back(std::move(r));
    }
    out.points.push_back(std::move(point));
  }
  return out;
}

}  // namespace connlearn::evalharness
