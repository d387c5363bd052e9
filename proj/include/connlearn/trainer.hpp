/*
 * Self-supervised pretraining loop. Per step: draw a batch, make T views per
 * graph, encode every view on one tape, project, evaluate the configured
 * objective, and update backbone + heads with AdamW (decoupled weight decay).
 *
 * All per-epoch randomness (shuffling, augmentation, dropout) is derived
 * statelessly from (seed, epoch, subject), so resuming from a checkpoint
 * reproduces an uninterrupted run bit-for-bit and two runs with the same
 * seed produce identical checkpoints.
 */
#pragma once

#include "connlearn/augment.hpp"
#include "connlearn/baselines.hpp"
#include "connlearn/checkpoint.hpp"
#include "connlearn/dataset_io.hpp"
#include "connlearn/encoder.hpp"
#include "connlearn/objective.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace connlearn::trainer {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double weight_decay = 1e-6;
  std::string optimizer = "adam";
  std::string objective = "hfmca";  // hfmca | simclr | barlow_twins | vicreg | none
  int projection_dim = 32;          // K: output width of the projection heads
  double ridge_rel = 1e-4;          // trace-scaled ridge factor for the correlation blocks
  encoder::EncoderConfig encoder;
  augment::AugmentationConfig augmentation;
  baselines::BaselineConfig baseline;
  std::uint64_t seed = 0;
  int checkpoint_every = 50;
  bool deterministic = true;  // reserved: the loop is single-worker and deterministic either way
};

inline bool is_two_view_objective(const std::string& objective) {
  return objective == "simclr" || objective == "barlow_twins" || objective == "vicreg";
}

inline void validate_train(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw InvalidInput("TrainConfig: epochs must be >= 0");
  if (cfg.batch_size < 1) throw InvalidInput("TrainConfig: batch_size must be >= 1");
  if (cfg.learning_rate <= 0.0) throw InvalidInput("TrainConfig: learning_rate must be positive");
  if (cfg.weight_decay < 0.0) throw InvalidInput("TrainConfig: weight_decay must be >= 0");
  if (cfg.optimizer != "adam") throw InvalidInput("TrainConfig: only the adam optimizer is supported");
  if (cfg.objective != "hfmca" && cfg.objective != "none" && !is_two_view_objective(cfg.objective))
    throw InvalidInput("TrainConfig: unknown objective '" + cfg.objective + "'");
  if (cfg.projection_dim < 1) throw InvalidInput("TrainConfig: projection_dim must be >= 1");
  if (cfg.ridge_rel <= 0.0) throw InvalidInput("TrainConfig: ridge_rel must be positive");
  if (cfg.checkpoint_every < 1) throw InvalidInput("TrainConfig: checkpoint_every must be >= 1");
  encoder::validate_encoder(cfg.encoder);
  augment::validate_augmentation(cfg.augmentation);
  baselines::validate_baseline(cfg.baseline);
}

struct StepMetrics {
  long step = 0;
  long epoch = 0;
  double loss = 0.0;
  double cond_low = 0.0;   // condition number of ridged R_L (hfmca only)
  double cond_high = 0.0;  // condition number of ridged R_H (hfmca only)
};

using MetricsCallback = std::function<void(const StepMetrics&)>;

struct PretrainOptions {
  std::filesystem::path run_dir;  // empty: no checkpoints/metrics written
  const Checkpoint* resume = nullptr;
  MetricsCallback on_step;
  WarningSink* warnings = nullptr;
};

// ---- AdamW ---------------------------------------------------------------------

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// One decoupled-weight-decay Adam step over a named tensor group. Moment
// tensors are keyed "<prefix><name>" inside the shared optimizer state.
inline void adam_step_group(TensorMap& params, const TensorMap& grads, OptimizerState& st,
                            const std::string& prefix, const AdamSettings& s, long step) {
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(step));
  for (auto& [name, p] : params) {
    const auto git = grads.find(name);
    if (git == grads.end()) throw InvalidInput("adam_step: missing gradient for '" + name + "'");
    const Matrix& g = git->second;
    const std::string key = prefix + name;
    auto& m = st.m.try_emplace(key, Matrix::Zero(p.rows(), p.cols())).first->second;
    auto& v = st.v.try_emplace(key, Matrix::Zero(p.rows(), p.cols())).first->second;
    m = s.beta1 * m + (1.0 - s.beta1) * g;
    v = (s.beta2 * v.array() + (1.0 - s.beta2) * g.array().square()).matrix();
    const Matrix mhat = m / bc1;
    const Matrix vhat = v / bc2;
    p -= s.learning_rate *
         ((mhat.array() / (vhat.array().sqrt() + s.eps)).matrix() + s.weight_decay * p).matrix();
  }
}

// ---- head parameter (de)serialization --------------------------------------------

inline TensorMap heads_to_map(const objective::ProjectionHeads& h) {
  TensorMap tm;
  tm["low.w1"] = h.low_w1;
  tm["low.b1"] = h.low_b1;
  tm["low.w2"] = h.low_w2;
  tm["low.b2"] = h.low_b2;
  for (int t = 0; t < h.n_views; ++t) {
    tm["high." + std::to_string(t) + ".w"] = h.high_w[static_cast<std::size_t>(t)];
    tm["high." + std::to_string(t) + ".b"] = h.high_b[static_cast<std::size_t>(t)];
  }
  return tm;
}

inline objective::ProjectionHeads heads_from_map(const TensorMap& tm, int n_views) {
  objective::ProjectionHeads h;
  h.n_views = n_views;
  h.low_w1 = tm.at("low.w1");
  h.low_b1 = tm.at("low.b1");
  h.low_w2 = tm.at("low.w2");
  h.low_b2 = tm.at("low.b2");
  h.embedding_dim = static_cast<int>(h.low_w1.rows());
  h.out_dim = static_cast<int>(h.low_w2.cols());
  for (int t = 0; t < n_views; ++t) {
    h.high_w.push_back(tm.at("high." + std::to_string(t) + ".w"));
    h.high_b.push_back(tm.at("high." + std::to_string(t) + ".b"));
  }
  return h;
}

inline TensorMap projector_to_map(const baselines::Projector& p) {
  TensorMap tm;
  for (std::size_t l = 0; l < p.w.size(); ++l) {
    tm["proj." + std::to_string(l) + ".w"] = p.w[l];
    tm["proj." + std::to_string(l) + ".b"] = p.b[l];
  }
  return tm;
}

inline baselines::Projector projector_from_map(const TensorMap& tm, int n_layers) {
  baselines::Projector p;
  for (int l = 0; l < n_layers; ++l) {
    p.w.push_back(tm.at("proj." + std::to_string(l) + ".w"));
    p.b.push_back(tm.at("proj." + std::to_string(l) + ".b"));
  }
  return p;
}

// ---- pretraining -----------------------------------------------------------------

namespace detail {

inline void append_metrics_line(const std::filesystem::path& run_dir, const StepMetrics& m, bool hfmca) {
  if (run_dir.empty()) return;
  std::ofstream out(run_dir / "metrics.log", std::ios::app);
  nlohmann::json j{{"step", m.step}, {"epoch", m.epoch}, {"loss", m.loss}};
  if (hfmca) {
    j["cond_rl"] = m.cond_low;
    j["cond_rh"] = m.cond_high;
  }
  out << j.dump() << "\n";
}

}  // namespace detail

inline Checkpoint pretrain(const connectome::Dataset& dataset, const TrainConfig& cfg,
                           const PretrainOptions& opts = {}) {
  validate_train(cfg);
  if (dataset.graphs.empty()) throw InvalidInput("pretrain: dataset is empty");
  for (const auto& g : dataset.graphs)
    if (g.feature_dim() != cfg.encoder.input_dim)
      throw InvalidInput("pretrain: graph '" + g.subject_id + "' feature width " +
                         std::to_string(g.feature_dim()) + " != encoder input_dim " +
                         std::to_string(cfg.encoder.input_dim));

  const bool hfmca = cfg.objective == "hfmca";
  const bool two_view = is_two_view_objective(cfg.objective);
  augment::AugmentationConfig aug = cfg.augmentation;
  if (two_view && aug.n_views != 2) {
    warn(opts.warnings, "pretrain: objective '" + cfg.objective + "' is two-view; overriding n_views " +
                            std::to_string(aug.n_views) + " -> 2");
    aug.n_views = 2;
  }
  const int n_views = aug.n_views;

  // initialization (or resume)
  const Rng root(cfg.seed);
  Checkpoint ckpt;
  ckpt.encoder_config = cfg.encoder;
  ckpt.objective = cfg.objective;
  objective::ProjectionHeads heads;
  baselines::Projector projector;
  int projector_layers = 0;
  {
    Rng init_rng = root.substream({0x696e6974ULL});
    ckpt.encoder_params = encoder::init_params(cfg.encoder, init_rng);
    if (hfmca) {
      heads = objective::init_projection_heads(cfg.encoder.embedding_dim, cfg.projection_dim, n_views, init_rng);
      ckpt.head_params = heads_to_map(heads);
    } else if (two_view) {
      projector = baselines::init_projector(cfg.encoder.embedding_dim, cfg.baseline.projector_dims, init_rng);
      projector_layers = static_cast<int>(cfg.baseline.projector_dims.size());
      ckpt.head_params = projector_to_map(projector);
    }
  }
  if (opts.resume != nullptr) {
    const Checkpoint& r = *opts.resume;
    if (r.objective != cfg.objective)
      throw InvalidInput("pretrain: resume checkpoint objective '" + r.objective + "' != '" + cfg.objective + "'");
    if (r.epoch > cfg.epochs)
      throw InvalidInput("pretrain: resume checkpoint is at epoch " + std::to_string(r.epoch) +
                         " beyond requested " + std::to_string(cfg.epochs));
    if (r.epoch < cfg.epochs && cfg.objective != "none" && r.head_params.empty())
      throw InvalidInput("pretrain: cannot resume training from a stripped checkpoint");
    ckpt = r;
    if (hfmca && !r.head_params.empty()) heads = heads_from_map(r.head_params, n_views);
    if (two_view && !r.head_params.empty()) {
      projector_layers = static_cast<int>(cfg.baseline.projector_dims.size());
      projector = projector_from_map(r.head_params, projector_layers);
    }
  }

  if (cfg.objective == "none") {
    if (!opts.run_dir.empty()) save_checkpoint(ckpt, opts.run_dir / "ckpt-final.json");
    return ckpt;  // random-init baseline: nothing to train
  }

  const int min_batch = hfmca ? cfg.projection_dim + 1 : 2;
  if (static_cast<int>(dataset.graphs.size()) < min_batch)
    warn(opts.warnings, "pretrain: dataset smaller than the minimum batch (" + std::to_string(min_batch) +
                            "); no optimization steps will run");

  if (!opts.run_dir.empty()) std::filesystem::create_directories(opts.run_dir);

  const AdamSettings adam{cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay};
  Checkpoint last_good = ckpt;
  long step = ckpt.optimizer.step;
  double first_epoch_sum = 0.0;  // mean over the first epoch trained by this invocation
  long first_epoch_count = 0;
  const long start_epoch = ckpt.epoch;

  auto snapshot = [&](long epoch_done, double epoch_mean, long steps_total, double latest_loss) {
    ckpt.epoch = epoch_done;
    ckpt.metrics.steps = steps_total;
    ckpt.metrics.final_loss = latest_loss;
    ckpt.metrics.last_epoch_mean_loss = epoch_mean;
    if (hfmca)
      ckpt.head_params = heads_to_map(heads);
    else if (two_view)
      ckpt.head_params = projector_to_map(projector);
  };

  double last_loss = ckpt.metrics.final_loss;
  for (long e = start_epoch; e < cfg.epochs; ++e) {
    std::vector<int> order(dataset.graphs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng = root.substream({0x73687566ULL, static_cast<std::uint64_t>(e)});
    shuffle_rng.shuffle(order);

    double epoch_loss_sum = 0.0;
    long epoch_steps = 0;

    std::size_t pos = 0;
    while (pos < order.size()) {
      const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), order.size() - pos);
      if (static_cast<int>(take) < min_batch) break;  // partial batch too small for a stable block
      const std::vector<int> batch(order.begin() + static_cast<long>(pos),
                                   order.begin() + static_cast<long>(pos + take));
      pos += take;

      try {
        ad::Tape tape;
        encoder::EncoderVars ev = encoder::encoder_vars(tape, ckpt.encoder_params, /*trainable=*/true);
        objective::HeadVars hv;
        baselines::ProjectorVars pv;
        if (hfmca) hv = objective::head_vars(tape, heads);
        if (two_view) pv = baselines::projector_vars(tape, projector);

        // encode T views of every graph in the batch
        std::vector<std::vector<ad::Var>> per_view(static_cast<std::size_t>(n_views));
        for (int si : batch) {
          const connectome::BrainGraph& g = dataset.graphs[static_cast<std::size_t>(si)];
          const std::uint64_t subj_tag = fnv1a(g.subject_id);
          Rng view_parent = root.substream({0x617567ULL, subj_tag, static_cast<std::uint64_t>(e)});
          const std::vector<connectome::BrainGraph> views = augment::make_views(g, aug, view_parent, opts.warnings);
          for (int t = 0; t < n_views; ++t) {
            Rng dropout_rng = view_parent.substream({0x64726f70ULL, static_cast<std::uint64_t>(t)});
            Rng* drng = cfg.encoder.dropout > 0.0 ? &dropout_rng : nullptr;
            const encoder::EncodedGraph enc =
                encoder::encode_graph_tape(tape, views[static_cast<std::size_t>(t)], ev, cfg.encoder, drng);
            per_view[static_cast<std::size_t>(t)].push_back(enc.graph_embedding);
          }
        }
        std::vector<ad::Var> view_batches;
        view_batches.reserve(per_view.size());
        for (auto& rows : per_view) view_batches.push_back(ad::concat_rows(rows));

        StepMetrics metrics;
        ad::Var loss;
        if (hfmca) {
          ad::Var zl = objective::project_low_tape(view_batches, hv);
          ad::Var zh = objective::project_high_tape(view_batches, hv);
          const Matrix& zlv = tape.value(zl);
          const Matrix& zhv = tape.value(zh);
          const double denom = static_cast<double>(zlv.rows()) * static_cast<double>(zlv.cols() + zhv.cols());
          const double mean_diag = (zlv.squaredNorm() + zhv.squaredNorm()) / denom;
          const double eps = cfg.ridge_rel * (mean_diag > 0.0 ? mean_diag : 1.0);
          loss = objective::dependence_loss_node(zl, zh, eps);
          const objective::CorrelationBlock block = objective::correlation_block(zlv, zhv, eps);
          metrics.cond_low = objective::condition_number(block.r_low);
          metrics.cond_high = objective::condition_number(block.r_high);
        } else {
          ad::Var za = baselines::apply_projector_tape(view_batches[0], pv);
          ad::Var zb = baselines::apply_projector_tape(view_batches[1], pv);
          if (cfg.objective == "simclr") {
            loss = baselines::ntxent_loss_tape(za, zb, cfg.baseline.temperature);
          } else if (cfg.objective == "barlow_twins") {
            loss = baselines::barlow_twins_loss_tape(za, zb, cfg.baseline.off_diag_weight);
          } else {
            loss = baselines::vicreg_loss_tape(
                za, zb, {cfg.baseline.inv_weight, cfg.baseline.var_weight, cfg.baseline.cov_weight});
          }
        }

        const double loss_value = tape.value(loss)(0, 0);
        if (!std::isfinite(loss_value))
          throw NumericError("pretrain: non-finite loss at epoch " + std::to_string(e) + ", step " +
                             std::to_string(step + 1));

        tape.backward(loss);

        TensorMap enc_grads, head_grads;
        for (const auto& [name, var] : ev.v) enc_grads[name] = tape.grad(var);
        if (hfmca) {
          head_grads["low.w1"] = tape.grad(hv.low_w1);
          head_grads["low.b1"] = tape.grad(hv.low_b1);
          head_grads["low.w2"] = tape.grad(hv.low_w2);
          head_grads["low.b2"] = tape.grad(hv.low_b2);
          for (int t = 0; t < n_views; ++t) {
            head_grads["high." + std::to_string(t) + ".w"] = tape.grad(hv.high_w[static_cast<std::size_t>(t)]);
            head_grads["high." + std::to_string(t) + ".b"] = tape.grad(hv.high_b[static_cast<std::size_t>(t)]);
          }
        } else {
          for (std::size_t l = 0; l < pv.w.size(); ++l) {
            head_grads["proj." + std::to_string(l) + ".w"] = tape.grad(pv.w[l]);
            head_grads["proj." + std::to_string(l) + ".b"] = tape.grad(pv.b[l]);
          }
        }

        ++step;
        adam_step_group(ckpt.encoder_params, enc_grads, ckpt.optimizer, "enc.", adam, step);
        TensorMap head_map = hfmca ? heads_to_map(heads) : projector_to_map(projector);
        adam_step_group(head_map, head_grads, ckpt.optimizer, "head.", adam, step);
        if (hfmca)
          heads = heads_from_map(head_map, n_views);
        else
          projector = projector_from_map(head_map, projector_layers);
        ckpt.optimizer.step = step;

        metrics.step = step;
        metrics.epoch = e;
        metrics.loss = loss_value;
        detail::append_metrics_line(opts.run_dir, metrics, hfmca);
        if (opts.on_step) opts.on_step(metrics);

        last_loss = loss_value;
        epoch_loss_sum += loss_value;
        ++epoch_steps;
        if (e == start_epoch) {
          first_epoch_sum += loss_value;
          ++first_epoch_count;
        }
      } catch (const NumericError& err) {
        // abort with the checkpoint from the last completed epoch
        if (!opts.run_dir.empty()) save_checkpoint(last_good, opts.run_dir / "ckpt-lastgood.json");
        throw NumericError(std::string(err.what()) + " (epoch " + std::to_string(e) +
                           "; last-good checkpoint is from epoch " + std::to_string(last_good.epoch) + ")");
      }
    }

    const double epoch_mean = epoch_steps > 0 ? epoch_loss_sum / static_cast<double>(epoch_steps) : 0.0;
    if (e == start_epoch && first_epoch_count > 0)
      ckpt.metrics.first_epoch_mean_loss = first_epoch_sum / static_cast<double>(first_epoch_count);
    snapshot(e + 1, epoch_mean, step, last_loss);
    last_good = ckpt;
    if (!opts.run_dir.empty() && (e + 1 - start_epoch) % cfg.checkpoint_every == 0 && e + 1 < cfg.epochs)
      save_checkpoint(ckpt, opts.run_dir / ("ckpt-" + std::to_string(e + 1) + ".json"));
  }

  if (!opts.run_dir.empty()) save_checkpoint(ckpt, opts.run_dir / "ckpt-final.json");
  return ckpt;
}

}  // namespace connlearn::trainer
