/*
 * Competing self-supervised objectives: NT-Xent (SimCLR), Barlow Twins and
 * VICReg, plus the projector MLP the two-view pipelines put between encoder
 * and loss. Everything is composed from tape ops, so the same code serves
 * loss evaluation and training; plain-matrix wrappers evaluate on a
 * throwaway tape.
 *
 * Conventions (the cited papers leave minor freedoms; these are pinned here
 * and asserted by the tests):
 *   - NT-Xent: positives are row-aligned pairs across the two batches; each
 *     anchor's denominator sums over its 2N-2 negatives (self and positive
 *     excluded), so all-equal logits give loss = ln(2N-2).
 *   - Barlow Twins: features standardized per column with population std;
 *     a zero-variance column is an error.
 *   - VICReg: unbiased (N-1) variance/covariance; hinge uses the exact std
 *     so a zero-variance dimension contributes exactly 1 per branch.
 */
#pragma once

#include "connlearn/autodiff.hpp"
#include "connlearn/common.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace connlearn::baselines {

enum class Method { simclr, barlow_twins, vicreg, none };

inline Method method_from_string(const std::string& s) {
  if (s == "simclr") return Method::simclr;
  if (s == "barlow_twins") return Method::barlow_twins;
  if (s == "vicreg") return Method::vicreg;
  if (s == "none") return Method::none;
  throw InvalidInput("unknown baseline method '" + s + "'");
}

inline std::string to_string(Method m) {
  switch (m) {
    case Method::simclr: return "simclr";
    case Method::barlow_twins: return "barlow_twins";
    case Method::vicreg: return "vicreg";
    case Method::none: return "none";
  }
  throw InvalidInput("bad method enum");
}

struct BaselineConfig {
  Method method = Method::none;
  double temperature = 0.5;       // simclr
  double off_diag_weight = 5e-3;  // barlow twins lambda
  double inv_weight = 25.0;       // vicreg
  double var_weight = 25.0;
  double cov_weight = 1.0;
  std::vector<int> projector_dims = {64, 64};
};

inline void validate_baseline(const BaselineConfig& c) {
  if (c.temperature <= 0.0) throw InvalidInput("BaselineConfig: temperature must be positive");
  if (c.off_diag_weight <= 0.0) throw InvalidInput("BaselineConfig: off_diag_weight must be positive");
  if (c.inv_weight <= 0.0 || c.var_weight <= 0.0 || c.cov_weight <= 0.0)
    throw InvalidInput("BaselineConfig: vicreg weights must be positive");
  for (int d : c.projector_dims)
    if (d < 1) throw InvalidInput("BaselineConfig: projector dims must be >= 1");
}

// ---- NT-Xent -----------------------------------------------------------------

inline ad::Var ntxent_loss_tape(ad::Var a, ad::Var b, double temperature) {
  ad::Tape& t = *a.tape;
  const Eigen::Index n = t.value(a).rows();
  if (n < 2) throw InvalidInput("ntxent_loss: need at least 2 pairs");
  if (t.value(a).rows() != t.value(b).rows() || t.value(a).cols() != t.value(b).cols())
    throw InvalidInput("ntxent_loss: batch shapes differ");
  if (temperature <= 0.0) throw InvalidInput("ntxent_loss: temperature must be positive");

  ad::Var x = ad::normalize_rows(ad::concat_rows({a, b}));
  ad::Var logits = ad::scale(ad::matmul(x, ad::transpose(x)), 1.0 / temperature);

  const Eigen::Index m = 2 * n;
  Matrix neg_mask = Matrix::Ones(m, m);
  Matrix pos_mask = Matrix::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index pos = (i < n) ? i + n : i - n;
    neg_mask(i, i) = 0.0;
    neg_mask(i, pos) = 0.0;
    pos_mask(i, pos) = 1.0;
  }
  ad::Var denom = ad::row_sum(ad::hadamard_const(ad::exp_(logits), std::move(neg_mask)));
  ad::Var pos_logit = ad::row_sum(ad::hadamard_const(logits, std::move(pos_mask)));
  return ad::mean_all(ad::sub(ad::log_(denom), pos_logit));
}

inline double ntxent_loss(const Matrix& a, const Matrix& b, double temperature) {
  ad::Tape t;
  return t.value(ntxent_loss_tape(t.input(a), t.input(b), temperature))(0, 0);
}

// ---- Barlow Twins ------------------------------------------------------------

namespace detail {

// Column-standardize with population statistics; throws on zero variance.
inline ad::Var standardize_cols(ad::Var z, const char* label) {
  ad::Tape& t = *z.tape;
  const Matrix& v = t.value(z);
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    const double mu = v.col(j).mean();
    if ((v.col(j).array() - mu).abs().maxCoeff() == 0.0)
      throw InvalidInput(std::string(label) + ": column " + std::to_string(j) +
                         " has zero variance; standardization undefined");
  }
  ad::Var mu = ad::mean_rows(z);
  ad::Var centered = ad::add_rowvec(z, ad::scale(mu, -1.0));
  ad::Var std_ = ad::sqrt_(ad::mean_rows(ad::square(centered)));
  return ad::div_rowvec(centered, std_);
}

}  // namespace detail

inline ad::Var barlow_twins_loss_tape(ad::Var a, ad::Var b, double off_diag_weight) {
  ad::Tape& t = *a.tape;
  const Eigen::Index n = t.value(a).rows();
  const Eigen::Index d = t.value(a).cols();
  if (t.value(b).rows() != n || t.value(b).cols() != d) throw InvalidInput("barlow_twins_loss: batch shapes differ");
  if (n < 2) throw InvalidInput("barlow_twins_loss: need at least 2 samples");

  ad::Var za = detail::standardize_cols(a, "barlow_twins_loss(A)");
  ad::Var zb = detail::standardize_cols(b, "barlow_twins_loss(B)");
  ad::Var c = ad::scale(ad::matmul(ad::transpose(za), zb), 1.0 / static_cast<double>(n));

  Matrix eye = Matrix::Identity(d, d);
  Matrix off = Matrix::Ones(d, d) - eye;
  ad::Var diag_term = ad::sum_all(ad::square(ad::hadamard_const(ad::add_scalar(c, -1.0), eye)));
  ad::Var off_term = ad::sum_all(ad::square(ad::hadamard_const(c, std::move(off))));
  return ad::add(diag_term, ad::scale(off_term, off_diag_weight));
}

inline double barlow_twins_loss(const Matrix& a, const Matrix& b, double off_diag_weight) {
  ad::Tape t;
  return t.value(barlow_twins_loss_tape(t.input(a), t.input(b), off_diag_weight))(0, 0);
}

// ---- VICReg --------------------------------------------------------------------

struct VicregWeights {
  double invariance = 25.0;
  double variance = 25.0;
  double covariance = 1.0;
};

namespace detail {

// Per-branch variance hinge mean(relu(1 - std)) and covariance penalty
// sum_offdiag(Cov^2)/d, both with unbiased (N-1) statistics.
inline std::pair<ad::Var, ad::Var> vicreg_branch_terms(ad::Var z) {
  ad::Tape& t = *z.tape;
  const Eigen::Index n = t.value(z).rows();
  const Eigen::Index d = t.value(z).cols();
  ad::Var mu = ad::mean_rows(z);
  ad::Var centered = ad::add_rowvec(z, ad::scale(mu, -1.0));
  ad::Var var = ad::scale(ad::mean_rows(ad::square(centered)), static_cast<double>(n) / static_cast<double>(n - 1));
  ad::Var hinge = ad::mean_all(ad::relu(ad::add_scalar(ad::scale(ad::sqrt_(var), -1.0), 1.0)));
  ad::Var cov = ad::scale(ad::matmul(ad::transpose(centered), centered), 1.0 / static_cast<double>(n - 1));
  Matrix off = Matrix::Ones(d, d) - Matrix::Identity(d, d);
  ad::Var cov_pen = ad::scale(ad::sum_all(ad::square(ad::hadamard_const(cov, std::move(off)))),
                              1.0 / static_cast<double>(d));
  return {hinge, cov_pen};
}

}  // namespace detail

inline ad::Var vicreg_loss_tape(ad::Var a, ad::Var b, const VicregWeights& w) {
  ad::Tape& t = *a.tape;
  if (t.value(a).rows() != t.value(b).rows() || t.value(a).cols() != t.value(b).cols())
    throw InvalidInput("vicreg_loss: batch shapes differ");
  if (t.value(a).rows() < 2) throw InvalidInput("vicreg_loss: need at least 2 samples");

  ad::Var inv = ad::mean_all(ad::square(ad::sub(a, b)));
  auto [var_a, cov_a] = detail::vicreg_branch_terms(a);
  auto [var_b, cov_b] = detail::vicreg_branch_terms(b);
  ad::Var var = ad::add(var_a, var_b);
  ad::Var cov = ad::add(cov_a, cov_b);
  return ad::add(ad::add(ad::scale(inv, w.invariance), ad::scale(var, w.variance)), ad::scale(cov, w.covariance));
}

inline double vicreg_loss(const Matrix& a, const Matrix& b, const VicregWeights& w) {
  ad::Tape t;
  return t.value(vicreg_loss_tape(t.input(a), t.input(b), w))(0, 0);
}

// Unweighted pieces, used by diagnostics and the term-level unit tests.
struct VicregTerms {
  double invariance;
  double variance;
  double covariance;
};

inline VicregTerms vicreg_terms(const Matrix& a, const Matrix& b) {
  ad::Tape t;
  ad::Var va = t.input(a), vb = t.input(b);
  ad::Var inv = ad::mean_all(ad::square(ad::sub(va, vb)));
  auto [var_a, cov_a] = detail::vicreg_branch_terms(va);
  auto [var_b, cov_b] = detail::vicreg_branch_terms(vb);
  return VicregTerms{t.value(inv)(0, 0), t.value(var_a)(0, 0) + t.value(var_b)(0, 0),
                     t.value(cov_a)(0, 0) + t.value(cov_b)(0, 0)};
}

// ---- projector ------------------------------------------------------------------

// MLP applied to encoder embeddings before the two-view losses. Hidden layers
// use relu; the last layer is affine.
struct Projector {
  std::vector<Matrix> w;
  std::vector<Matrix> b;
};

inline Projector init_projector(int input_dim, const std::vector<int>& dims, Rng& rng) {
  if (dims.empty()) throw InvalidInput("init_projector: need at least one layer");
  Projector p;
  int in = input_dim;
  for (int out : dims) {
    p.w.push_back(rng.normal_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in))));
    p.b.push_back(Matrix::Zero(1, out));
    in = out;
  }
  return p;
}

struct ProjectorVars {
  std::vector<ad::Var> w, b;
};

inline ProjectorVars projector_vars(ad::Tape& t, const Projector& p) {
  ProjectorVars v;
  for (const Matrix& m : p.w) v.w.push_back(t.param(m));
  for (const Matrix& m : p.b) v.b.push_back(t.param(m));
  return v;
}

inline ad::Var apply_projector_tape(ad::Var z, const ProjectorVars& p) {
  ad::Var h = z;
  for (std::size_t l = 0; l < p.w.size(); ++l) {
    h = ad::linear(h, p.w[l], p.b[l]);
    if (l + 1 < p.w.size()) h = ad::relu(h);
  }
  return h;
}

}  // namespace connlearn::baselines
