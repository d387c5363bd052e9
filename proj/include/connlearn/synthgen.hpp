/*
 * Synthetic cohorts with planted class structure. Each subject's ROI series
 * comes from a latent-factor model: one latent signal per community, mixed
 * into member regions plus white noise. The class label shifts the coupling
 * between one designated community pair by +/- class_effect, so the mean
 * inter-community correlation is a sufficient statistic with a tunable
 * signal-to-noise ratio. oracle_accuracy evaluates that statistic directly
 * and serves as the reference ceiling for probe evaluations.
 */
#pragma once

#include "connlearn/connectome.hpp"
#include "connlearn/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace connlearn::synthgen {

using connectome::RoiTimeSeries;

struct SynthConfig {
  int n_subjects = 0;
  int n_regions = 116;
  int n_timepoints = 200;
  int n_classes = 2;
  // eight communities echoing the 116-region atlas by default
  std::vector<int> community_sizes = {15, 15, 15, 15, 14, 14, 14, 14};
  double class_effect = 0.2;  // delta: class-dependent coupling shift
  double base_coupling = 0.2;
  double noise_std = 1.0;
  std::pair<int, int> target_communities = {0, 1};
  std::uint64_t rng_seed = 0;
  std::string subject_prefix = "synth";  // keeps ids unique across generated pools
};

inline void validate_synth(const SynthConfig& cfg) {
  if (cfg.n_subjects < 1) throw InvalidInput("SynthConfig: n_subjects must be >= 1");
  if (cfg.n_timepoints < 3) throw InvalidInput("SynthConfig: n_timepoints must be >= 3");
  if (cfg.n_classes < 2) throw InvalidInput("SynthConfig: n_classes must be >= 2");
  if (cfg.class_effect < 0.0) throw InvalidInput("SynthConfig: class_effect must be >= 0");
  if (cfg.noise_std <= 0.0) throw InvalidInput("SynthConfig: noise_std must be positive");
  if (cfg.community_sizes.size() < 2) throw InvalidInput("SynthConfig: need at least 2 communities");
  for (int s : cfg.community_sizes)
    if (s < 1) throw InvalidInput("SynthConfig: community sizes must be >= 1");
  const int total = std::accumulate(cfg.community_sizes.begin(), cfg.community_sizes.end(), 0);
  if (total != cfg.n_regions)
    throw InvalidInput("SynthConfig: community sizes sum to " + std::to_string(total) + " but n_regions is " +
                       std::to_string(cfg.n_regions));
  const auto [c0, c1] = cfg.target_communities;
  const int nc = static_cast<int>(cfg.community_sizes.size());
  if (c0 < 0 || c1 < 0 || c0 >= nc || c1 >= nc || c0 == c1)
    throw InvalidInput("SynthConfig: target_communities must be two distinct community indices");
}

namespace detail {

// Coupling shift for class y, spread evenly over [-delta, +delta].
inline double class_shift(int y, int n_classes, double delta) {
  if (n_classes == 2) return y == 1 ? delta : -delta;
  const double pos = 2.0 * static_cast<double>(y) / static_cast<double>(n_classes - 1) - 1.0;
  return delta * pos;
}

inline std::vector<int> region_to_community(const SynthConfig& cfg) {
  std::vector<int> owner;
  owner.reserve(static_cast<std::size_t>(cfg.n_regions));
  for (std::size_t c = 0; c < cfg.community_sizes.size(); ++c)
    for (int k = 0; k < cfg.community_sizes[c]; ++k) owner.push_back(static_cast<int>(c));
  return owner;
}

inline double pearson(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) {
  const double mx = x.mean(), my = y.mean();
  const Eigen::RowVectorXd dx = x.array() - mx;
  const Eigen::RowVectorXd dy = y.array() - my;
  const double nx = dx.norm(), ny = dy.norm();
  if (nx == 0.0 || ny == 0.0) return 0.0;
  return dx.dot(dy) / (nx * ny);
}

// Mean Pearson correlation over all (r in c0, q in c1) region pairs.
inline double pair_statistic(const RoiTimeSeries& ts, const SynthConfig& cfg) {
  const std::vector<int> owner = region_to_community(cfg);
  const auto [c0, c1] = cfg.target_communities;
  double acc = 0.0;
  int count = 0;
  for (int r = 0; r < cfg.n_regions; ++r) {
    if (owner[static_cast<std::size_t>(r)] != c0) continue;
    for (int q = 0; q < cfg.n_regions; ++q) {
      if (owner[static_cast<std::size_t>(q)] != c1) continue;
      acc += pearson(ts.series.row(r), ts.series.row(q));
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

}  // namespace detail

struct Cohort {
  std::vector<RoiTimeSeries> subjects;
  std::vector<int> labels;
};

// Deterministic under (cfg.rng_seed); labels balanced up to rounding.
inline Cohort generate_cohort(const SynthConfig& cfg) {
  validate_synth(cfg);
  const std::vector<int> owner = detail::region_to_community(cfg);
  const auto [c0, c1] = cfg.target_communities;
  const int n_comm = static_cast<int>(cfg.community_sizes.size());
  const Rng root(cfg.rng_seed);

  Cohort cohort;
  cohort.subjects.reserve(static_cast<std::size_t>(cfg.n_subjects));
  cohort.labels.reserve(static_cast<std::size_t>(cfg.n_subjects));
  for (int s = 0; s < cfg.n_subjects; ++s) {
    const int y = s % cfg.n_classes;
    Rng rng = root.substream({0x73796e7468ULL, static_cast<std::uint64_t>(s)});
    const double alpha =
        std::clamp(cfg.base_coupling + detail::class_shift(y, cfg.n_classes, cfg.class_effect), -0.95, 0.95);

    Matrix latents(n_comm, cfg.n_timepoints);
    for (int c = 0; c < n_comm; ++c)
      for (int t = 0; t < cfg.n_timepoints; ++t) latents(c, t) = rng.normal();
    // couple the designated pair: community c1 borrows alpha of c0's signal
    const double resid = std::sqrt(1.0 - alpha * alpha);
    latents.row(c1) = alpha * latents.row(c0) + resid * latents.row(c1);

    RoiTimeSeries ts;
    ts.subject_id = cfg.subject_prefix + "-" + std::to_string(s);
    ts.series.resize(cfg.n_regions, cfg.n_timepoints);
    for (int r = 0; r < cfg.n_regions; ++r)
      for (int t = 0; t < cfg.n_timepoints; ++t)
        ts.series(r, t) = latents(owner[static_cast<std::size_t>(r)], t) + cfg.noise_std * rng.normal();

    cohort.subjects.push_back(std::move(ts));
    cohort.labels.push_back(y);
  }
  return cohort;
}

// Accuracy of thresholding the inter-community correlation statistic at the
// midpoint of the class means. Binary tasks only: the reference ceiling used
// by probe evaluations.
inline double oracle_accuracy(const std::vector<RoiTimeSeries>& cohort, const std::vector<int>& labels,
                              const SynthConfig& cfg) {
  if (cohort.empty()) throw InvalidInput("oracle_accuracy: empty cohort");
  if (cohort.size() != labels.size()) throw InvalidInput("oracle_accuracy: labels misaligned with cohort");
  if (cfg.n_classes != 2) throw InvalidInput("oracle_accuracy: defined for binary tasks only");

  std::vector<double> stat(cohort.size());
  double mean0 = 0.0, mean1 = 0.0;
  int n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    stat[i] = detail::pair_statistic(cohort[i], cfg);
    if (labels[i] == 0) {
      mean0 += stat[i];
      ++n0;
    } else {
      mean1 += stat[i];
      ++n1;
    }
  }
  if (n0 == 0 || n1 == 0) throw InvalidInput("oracle_accuracy: need both classes present");
  mean0 /= n0;
  mean1 /= n1;
  const double threshold = 0.5 * (mean0 + mean1);
  const bool class1_above = mean1 >= mean0;

  int correct = 0;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const int pred = (stat[i] >= threshold) == class1_above ? 1 : 0;
    if (pred == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(cohort.size());
}

// Full path from a cohort to a persistable graph dataset: Pearson
// connectivity, top-k sparsification, labels into the manifest.
inline connectome::Dataset build_dataset_from_cohort(const Cohort& cohort, const SynthConfig& cfg,
                                                     const std::string& name, int edge_budget = -1,
                                                     connectome::EdgeSelection selection =
                                                         connectome::EdgeSelection::raw,
                                                     WarningSink* warnings = nullptr) {
  if (cohort.subjects.empty()) throw InvalidInput("build_dataset_from_cohort: empty cohort");
  if (edge_budget < 0) edge_budget = connectome::default_edge_budget(cfg.n_regions);
  connectome::Dataset ds;
  ds.manifest.name = name;
  ds.manifest.split_seed = static_cast<long>(cfg.rng_seed);
  ds.manifest.provenance = "synthgen: " + std::to_string(cfg.n_subjects) + " subjects, " +
                           std::to_string(cfg.n_regions) + " regions, class_effect " +
                           std::to_string(cfg.class_effect);
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    const auto conn = connectome::pearson_connectivity(cohort.subjects[i], warnings);
    connectome::BrainGraph g = connectome::build_graph(conn, edge_budget, selection, warnings);
    g.label = cohort.labels[i];
    ds.manifest.subject_ids.push_back(g.subject_id);
    ds.manifest.label_map[g.subject_id] = cohort.labels[i];
    ds.graphs.push_back(std::move(g));
  }
  connectome::validate_manifest(ds.manifest);
  return ds;
}

}  // namespace connlearn::synthgen
