/*
 * Dependence objectives over batch autocorrelation matrices.
 *
 * Given per-view projections, the hierarchical loss compares the joint
 * second-moment matrix against its diagonal blocks:
 *
 *     R_L  = E[z_L z_L^T] + eps*I          (low level, concatenated views)
 *     R_H  = E[z_H z_H^T] + eps*I          (high level, summed views)
 *     P_LH = E[z_L z_H^T]                  (cross block, no ridge)
 *     loss = logdet(R_LH) - logdet(R_L) - logdet(R_H)
 *
 * with R_LH the 2x2 block matrix of the above. Expectations are uncentered
 * batch means. By Fischer's inequality the loss is always <= 0 and equals 0
 * exactly when the cross block vanishes; minimizing it maximizes statistical
 * dependence between the two levels. The two-view special case is the
 * classical FMCA objective, and the singular values of
 * R_F^{-1/2} P_FG R_G^{-1/2} estimate the square roots of the density-ratio
 * eigenvalues.
 *
 * All factorizations go through Cholesky; failures surface condition-number
 * diagnostics instead of silently producing garbage.
 */
#pragma once

#include "connlearn/autodiff.hpp"
#include "connlearn/common.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace connlearn::objective {

// Ready-to-factorize autocorrelation blocks. r_low / r_high already include
// the ridge recorded in epsilon; cross never carries ridge.
struct CorrelationBlock {
  Matrix r_low;   // d_L x d_L
  Matrix r_high;  // d_H x d_H
  Matrix cross;   // d_L x d_H
  double epsilon = 0.0;
};

namespace detail {

struct CholeskyLogDet {
  double logdet;
  Eigen::LLT<Matrix> llt;
};

inline CholeskyLogDet chol_logdet(const Matrix& m, const char* label) {
  CholeskyLogDet out;
  out.llt.compute(m);
  if (out.llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    const double cond = (lo > 0.0) ? hi / lo : std::numeric_limits<double>::infinity();
    throw NumericError(std::string(label) + ": Cholesky factorization failed; min eigenvalue " +
                       std::to_string(lo) + ", condition number " + std::to_string(cond) +
                       " - increase the ridge epsilon");
  }
  out.logdet = 2.0 * out.llt.matrixLLT().diagonal().array().log().sum();
  return out;
}

}  // namespace detail

// Uncentered batch second moments; ridge on the diagonal blocks only.
inline CorrelationBlock correlation_block(const Matrix& z_low, const Matrix& z_high, double epsilon) {
  if (z_low.rows() != z_high.rows() || z_low.rows() < 1)
    throw InvalidInput("correlation_block: batches must share N >= 1 rows");
  if (epsilon <= 0.0) throw InvalidInput("correlation_block: epsilon must be positive");
  if (!all_finite(z_low) || !all_finite(z_high)) throw InvalidInput("correlation_block: non-finite inputs");
  const double n = static_cast<double>(z_low.rows());
  CorrelationBlock b;
  b.r_low = (z_low.transpose() * z_low) / n;
  b.r_low.diagonal().array() += epsilon;
  b.r_high = (z_high.transpose() * z_high) / n;
  b.r_high.diagonal().array() += epsilon;
  b.cross = (z_low.transpose() * z_high) / n;
  b.epsilon = epsilon;
  return b;
}

// Ridge magnitude proportional to the mean diagonal of the raw second moment,
// so epsilon stays meaningful across feature scales.
inline double trace_scaled_epsilon(const Matrix& z, double eps_rel) {
  const double n = static_cast<double>(z.rows());
  const double d = static_cast<double>(z.cols());
  const double mean_diag = z.squaredNorm() / (n * d);
  return eps_rel * (mean_diag > 0.0 ? mean_diag : 1.0);
}

// Joint block matrix exactly as assembled from the stored blocks.
inline Matrix assemble_joint(const CorrelationBlock& b) {
  const Eigen::Index dl = b.r_low.rows(), dh = b.r_high.rows();
  if (b.r_low.cols() != dl || b.r_high.cols() != dh) throw InvalidInput("assemble_joint: blocks must be square");
  if (b.cross.rows() != dl || b.cross.cols() != dh) throw InvalidInput("assemble_joint: cross block shape mismatch");
  Matrix j(dl + dh, dl + dh);
  j.topLeftCorner(dl, dl) = b.r_low;
  j.topRightCorner(dl, dh) = b.cross;
  j.bottomLeftCorner(dh, dl) = b.cross.transpose();
  j.bottomRightCorner(dh, dh) = b.r_high;
  return j;
}

// logdet(R_LH) - logdet(R_L) - logdet(R_H), via triangular factors.
inline double hfmca_loss(const CorrelationBlock& b) {
  const Matrix joint = assemble_joint(b);
  const double ld_low = detail::chol_logdet(b.r_low, "hfmca_loss(R_L)").logdet;
  const double ld_high = detail::chol_logdet(b.r_high, "hfmca_loss(R_H)").logdet;
  const double ld_joint = detail::chol_logdet(joint, "hfmca_loss(R_LH)").logdet;
  return ld_joint - ld_low - ld_high;
}

// Loss and analytic gradients with respect to the batch features. Derivation:
// with M = R_LH^{-1} partitioned as [[A, B], [B^T, C]],
//   dL/dZ_L = (2/N) (Z_L A + Z_H B^T - Z_L R_L^{-1})
//   dL/dZ_H = (2/N) (Z_H C + Z_L B - Z_H R_H^{-1}).
struct LossGrad {
  double loss;
  Matrix d_z_low;
  Matrix d_z_high;
  double cond_low;
  double cond_high;
};

// Spectral condition number of a symmetric matrix (diagnostics for the
// metrics log and factorization failures).
inline double condition_number(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

inline LossGrad hfmca_loss_with_grad(const Matrix& z_low, const Matrix& z_high, double epsilon,
                                     bool with_conditions = false) {
  const CorrelationBlock b = correlation_block(z_low, z_high, epsilon);
  const Eigen::Index dl = b.r_low.rows(), dh = b.r_high.rows();
  const Matrix joint = assemble_joint(b);

  auto low = detail::chol_logdet(b.r_low, "hfmca_loss(R_L)");
  auto high = detail::chol_logdet(b.r_high, "hfmca_loss(R_H)");
  auto full = detail::chol_logdet(joint, "hfmca_loss(R_LH)");

  LossGrad out;
  out.loss = full.logdet - low.logdet - high.logdet;

  const Matrix m_inv = full.llt.solve(Matrix::Identity(dl + dh, dl + dh));
  const Matrix r_low_inv = low.llt.solve(Matrix::Identity(dl, dl));
  const Matrix r_high_inv = high.llt.solve(Matrix::Identity(dh, dh));
  const auto a = m_inv.topLeftCorner(dl, dl);
  const auto bb = m_inv.topRightCorner(dl, dh);
  const auto c = m_inv.bottomRightCorner(dh, dh);

  const double scale = 2.0 / static_cast<double>(z_low.rows());
  out.d_z_low = scale * (z_low * a + z_high * bb.transpose() - z_low * r_low_inv);
  out.d_z_high = scale * (z_high * c + z_low * bb - z_high * r_high_inv);
  out.cond_low = with_conditions ? condition_number(b.r_low) : 0.0;
  out.cond_high = with_conditions ? condition_number(b.r_high) : 0.0;
  return out;
}

// Two-view FMCA objective: same block algebra with F as the low level and G
// as the high level.
inline double fmca_loss(const Matrix& f, const Matrix& g, double epsilon) {
  if (f.rows() != g.rows()) throw InvalidInput("fmca_loss: batches must share N rows");
  return hfmca_loss(correlation_block(f, g, epsilon));
}

// Singular values of R_F^{-1/2} P_FG R_G^{-1/2}, descending: the empirical
// estimate of the density-ratio spectrum sqrt(sigma_k).
inline std::vector<double> fmca_spectrum(const Matrix& f, const Matrix& g, double epsilon) {
  const CorrelationBlock b = correlation_block(f, g, epsilon);
  auto inv_sqrt = [](const Matrix& m, const char* label) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    if (es.info() != Eigen::Success) throw NumericError(std::string(label) + ": eigendecomposition failed");
    Vector d = es.eigenvalues();
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      if (d(i) <= 0.0) throw NumericError(std::string(label) + ": non-positive eigenvalue after ridge");
      d(i) = 1.0 / std::sqrt(d(i));
    }
    return Matrix(es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose());
  };
  const Matrix w = inv_sqrt(b.r_low, "fmca_spectrum(R_F)") * b.cross * inv_sqrt(b.r_high, "fmca_spectrum(R_G)");
  Eigen::JacobiSVD<Matrix> svd(w);
  std::vector<double> vals(svd.singularValues().data(), svd.singularValues().data() + svd.singularValues().size());
  return vals;  // Eigen returns them descending
}

// ---- projection heads ---------------------------------------------------------

// Shared low head f2 (two-layer perceptron) and T per-view affine high heads
// f3_i, all mapping embedding_dim -> out_dim.
struct ProjectionHeads {
  int n_views = 0;        // T
  int out_dim = 0;        // K
  int embedding_dim = 0;
  Matrix low_w1, low_b1;  // emb -> emb
  Matrix low_w2, low_b2;  // emb -> K
  std::vector<Matrix> high_w;  // T of emb x K
  std::vector<Matrix> high_b;  // T of 1 x K
};

inline ProjectionHeads init_projection_heads(int embedding_dim, int out_dim, int n_views, Rng& rng) {
  if (embedding_dim < 1 || out_dim < 1 || n_views < 1) throw InvalidInput("init_projection_heads: bad dimensions");
  ProjectionHeads h;
  h.n_views = n_views;
  h.out_dim = out_dim;
  h.embedding_dim = embedding_dim;
  const double s1 = 1.0 / std::sqrt(static_cast<double>(embedding_dim));
  h.low_w1 = rng.normal_matrix(embedding_dim, embedding_dim, s1);
  h.low_b1 = Matrix::Zero(1, embedding_dim);
  h.low_w2 = rng.normal_matrix(embedding_dim, out_dim, s1);
  h.low_b2 = Matrix::Zero(1, out_dim);
  for (int t = 0; t < n_views; ++t) {
    h.high_w.push_back(rng.normal_matrix(embedding_dim, out_dim, s1));
    h.high_b.push_back(Matrix::Zero(1, out_dim));
  }
  return h;
}

// Shared low head applied to one batch of view embeddings (N x emb -> N x K).
inline Matrix apply_low_head(const ProjectionHeads& h, const Matrix& z) {
  Matrix hidden = ((z * h.low_w1).rowwise() + h.low_b1.row(0)).cwiseMax(0.0);
  return (hidden * h.low_w2).rowwise() + h.low_b2.row(0);
}

inline Matrix apply_high_head(const ProjectionHeads& h, int view, const Matrix& z) {
  if (view < 0 || view >= h.n_views) throw InvalidInput("apply_high_head: view index out of range");
  return (z * h.high_w[static_cast<std::size_t>(view)]).rowwise() +
         h.high_b[static_cast<std::size_t>(view)].row(0);
}

// Low-level projection: shared head per view, concatenated in view order.
// Accepts one row vector per view.
inline Matrix project_low(const std::vector<Matrix>& view_embeddings, const ProjectionHeads& h) {
  if (static_cast<int>(view_embeddings.size()) != h.n_views)
    throw InvalidInput("project_low: expected " + std::to_string(h.n_views) + " views, got " +
                       std::to_string(view_embeddings.size()));
  Matrix out(1, static_cast<Eigen::Index>(h.n_views) * h.out_dim);
  for (int t = 0; t < h.n_views; ++t) {
    const Matrix& z = view_embeddings[static_cast<std::size_t>(t)];
    if (z.rows() != 1 || z.cols() != h.embedding_dim) throw InvalidInput("project_low: bad embedding shape");
    out.middleCols(static_cast<Eigen::Index>(t) * h.out_dim, h.out_dim) = apply_low_head(h, z);
  }
  return out;
}

// High-level projection: per-view heads, summed across views.
inline Matrix project_high(const std::vector<Matrix>& view_embeddings, const ProjectionHeads& h) {
  if (static_cast<int>(view_embeddings.size()) != h.n_views)
    throw InvalidInput("project_high: expected " + std::to_string(h.n_views) + " views, got " +
                       std::to_string(view_embeddings.size()));
  Matrix out = Matrix::Zero(1, h.out_dim);
  for (int t = 0; t < h.n_views; ++t) {
    const Matrix& z = view_embeddings[static_cast<std::size_t>(t)];
    if (z.rows() != 1 || z.cols() != h.embedding_dim) throw InvalidInput("project_high: bad embedding shape");
    out += apply_high_head(h, t, z);
  }
  return out;
}

// ---- tape integration -----------------------------------------------------------

// Differentiable loss node over batch features; backward uses the analytic
// gradients above with the ridge treated as a constant.
inline ad::Var dependence_loss_node(ad::Var z_low, ad::Var z_high, double epsilon) {
  ad::Tape& t = *z_low.tape;
  LossGrad lg = hfmca_loss_with_grad(t.value(z_low), t.value(z_high), epsilon);
  Matrix v(1, 1);
  v(0, 0) = lg.loss;
  const bool rg = t.requires_grad(z_low) || t.requires_grad(z_high);
  Matrix gl = std::move(lg.d_z_low), gh = std::move(lg.d_z_high);
  return t.make_node(std::move(v), rg,
                     [z_low, z_high, gl = std::move(gl), gh = std::move(gh)](ad::Tape& tp, const Matrix& g) {
                       tp.accumulate(z_low, g(0, 0) * gl);
                       tp.accumulate(z_high, g(0, 0) * gh);
                     });
}

// Per-view head parameters exposed as tape vars.
struct HeadVars {
  ad::Var low_w1, low_b1, low_w2, low_b2;
  std::vector<ad::Var> high_w, high_b;
};

inline HeadVars head_vars(ad::Tape& t, const ProjectionHeads& h) {
  HeadVars v;
  v.low_w1 = t.param(h.low_w1);
  v.low_b1 = t.param(h.low_b1);
  v.low_w2 = t.param(h.low_w2);
  v.low_b2 = t.param(h.low_b2);
  for (int i = 0; i < h.n_views; ++i) {
    v.high_w.push_back(t.param(h.high_w[static_cast<std::size_t>(i)]));
    v.high_b.push_back(t.param(h.high_b[static_cast<std::size_t>(i)]));
  }
  return v;
}

// view_batches[t] is the N x emb matrix of view-t embeddings.
inline ad::Var project_low_tape(const std::vector<ad::Var>& view_batches, const HeadVars& h) {
  std::vector<ad::Var> parts;
  parts.reserve(view_batches.size());
  for (ad::Var z : view_batches) {
    ad::Var hidden = ad::relu(ad::linear(z, h.low_w1, h.low_b1));
    parts.push_back(ad::linear(hidden, h.low_w2, h.low_b2));
  }
  return ad::concat_cols(parts);
}

inline ad::Var project_high_tape(const std::vector<ad::Var>& view_batches, const HeadVars& h) {
  if (view_batches.size() != h.high_w.size()) throw InvalidInput("project_high_tape: view count mismatch");
  ad::Var acc;
  for (std::size_t t = 0; t < view_batches.size(); ++t) {
    ad::Var term = ad::linear(view_batches[t], h.high_w[t], h.high_b[t]);
    acc = (t == 0) ? term : ad::add(acc, term);
  }
  return acc;
}

}  // namespace connlearn::objective
