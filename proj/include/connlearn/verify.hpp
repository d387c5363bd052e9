/*
 * Fast self-check suite behind the `verify` CLI command: loss non-positivity
 * over random correlation blocks, analytic-vs-finite-difference gradients,
 * and the top-k edge selection against a brute-force enumeration. Runs in
 * seconds; exit status feeds straight into CI.
 */
#pragma once

#include "connlearn/connectome.hpp"
#include "connlearn/objective.hpp"

#include <cmath>
#include <functional>
#include <iostream>
#include <set>
#include <string>
#include <vector>

namespace connlearn::verify {

struct CheckResult {
  std::string name;
  bool passed;
  std::string detail;
};

inline CheckResult check_loss_non_positivity(std::uint64_t seed, int trials = 300) {
  Rng rng(seed);
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < trials; ++i) {
    const int t = rng.below(2) == 0 ? 2 : 4;
    const int k = rng.below(2) == 0 ? 2 : 8;
    const int n = 3 + static_cast<int>(rng.below(40));
    const auto block = objective::correlation_block(rng.normal_matrix(n, t * k), rng.normal_matrix(n, k),
                                                    1e-4 + rng.uniform() * 1e-2);
    worst = std::max(worst, objective::hfmca_loss(block));
    if (i % 7 == 0) {  // also pin the zero-cross case
      auto zero = block;
      zero.cross.setZero();
      worst = std::max(worst, std::abs(objective::hfmca_loss(zero)));
    }
  }
  return {"loss-non-positivity", worst <= 1e-9, "worst value " + std::to_string(worst)};
}

inline CheckResult check_gradient_fidelity(std::uint64_t seed) {
  Rng rng(seed);
  const Matrix zl = rng.normal_matrix(8, 6);
  const Matrix zh = rng.normal_matrix(8, 3);
  const double eps = 1e-3, h = 1e-5;
  const objective::LossGrad lg = objective::hfmca_loss_with_grad(zl, zh, eps);
  double worst_rel = 0.0;
  auto loss_at = [eps](const Matrix& a, const Matrix& b) {
    return objective::hfmca_loss(objective::correlation_block(a, b, eps));
  };
  for (Eigen::Index i = 0; i < zl.rows(); ++i)
    for (Eigen::Index j = 0; j < zl.cols(); ++j) {
      Matrix up = zl, down = zl;
      up(i, j) += h;
      down(i, j) -= h;
      const double fd = (loss_at(up, zh) - loss_at(down, zh)) / (2.0 * h);
      const double a = lg.d_z_low(i, j);
      if (std::abs(a - fd) < 1e-8) continue;
      worst_rel = std::max(worst_rel, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6}));
    }
  for (Eigen::Index i = 0; i < zh.rows(); ++i)
    for (Eigen::Index j = 0; j < zh.cols(); ++j) {
      Matrix up = zh, down = zh;
      up(i, j) += h;
      down(i, j) -= h;
      const double fd = (loss_at(zl, up) - loss_at(zl, down)) / (2.0 * h);
      const double a = lg.d_z_high(i, j);
      if (std::abs(a - fd) < 1e-8) continue;
      worst_rel = std::max(worst_rel, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6}));
    }
  return {"gradient-fidelity", worst_rel < 1e-4, "worst relative error " + std::to_string(worst_rel)};
}

inline CheckResult check_topk_selection(std::uint64_t seed, int trials = 100) {
  Rng rng(seed);
  for (int trial = 0; trial < trials; ++trial) {
    const int n = 8 + static_cast<int>(rng.below(25));
    Matrix m = Matrix::Identity(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const double v = 2.0 * rng.uniform() - 1.0;
        m(i, j) = v;
        m(j, i) = v;
      }
    const int max_edges = n * (n - 1) / 2;
    const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_edges + 1)));
    for (bool absolute : {false, true}) {
      struct P {
        double s;
        int i, j;
      };
      std::vector<P> pairs;
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) pairs.push_back({absolute ? std::abs(m(i, j)) : m(i, j), i, j});
      std::sort(pairs.begin(), pairs.end(), [](const P& a, const P& b) {
        if (a.s != b.s) return a.s > b.s;
        return std::make_pair(a.i, a.j) < std::make_pair(b.i, b.j);
      });
      std::set<std::pair<int, int>> expected;
      for (int e = 0; e < k; ++e) expected.insert({pairs[static_cast<std::size_t>(e)].i,
                                                   pairs[static_cast<std::size_t>(e)].j});
      const auto g = connectome::build_graph(
          connectome::ConnectivityMatrix{"v", m}, k,
          absolute ? connectome::EdgeSelection::absolute : connectome::EdgeSelection::raw);
      const std::set<std::pair<int, int>> got(g.edges.begin(), g.edges.end());
      if (got != expected)
        return {"topk-selection", false,
                "mismatch at n=" + std::to_string(n) + " k=" + std::to_string(k) +
                    (absolute ? " (absolute)" : " (raw)")};
    }
  }
  return {"topk-selection", true, std::to_string(trials) + " random matrices, both modes"};
}

// Runs the suite, prints one line per check, returns overall success.
inline bool run_verify(std::uint64_t seed, std::ostream& out = std::cout) {
  const std::vector<CheckResult> results = {
      check_loss_non_positivity(seed),
      check_gradient_fidelity(seed + 1),
      check_topk_selection(seed + 2),
  };
  bool ok = true;
  for (const auto& r : results) {
    out << "verify " << r.name << ": " << (r.passed ? "PASS" : "FAIL") << " (" << r.detail << ")\n";
    ok = ok && r.passed;
  }
  return ok;
}

}  // namespace connlearn::verify
