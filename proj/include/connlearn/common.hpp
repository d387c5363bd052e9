/*
 * Shared plumbing: deterministic RNG streams, warning collection, finite
 * checks. Everything downstream assumes double precision Eigen matrices.
 */
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace connlearn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Thrown when an input violates an operation's preconditions.
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& msg) : std::invalid_argument(msg) {}
};

// Thrown when numerics break down mid-computation (non-finite activations,
// singular factorizations, aborted training).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Collects non-fatal diagnostics (zero-variance regions, clamped budgets,
// degenerate augmentations). Callers that don't care pass nullptr.
struct WarningSink {
  std::vector<std::string> messages;
  void add(std::string msg) { messages.push_back(std::move(msg)); }
  bool empty() const { return messages.empty(); }
};

inline void warn(WarningSink* sink, std::string msg) {
  if (sink != nullptr) sink->add(std::move(msg));
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

// splitmix64, used to derive independent child streams from (seed, tags...).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic RNG. All randomness in the library flows through this type;
// std::random distributions are avoided so streams are bit-stable across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed)
      : state_(splitmix64(seed ^ 0x6c626173736575ULL) | 1ULL),
        seed_tag_(splitmix64(seed ^ 0x746167ULL)) {}

  std::uint64_t next_u64() {
    // xorshift* on top of a splitmix-initialized state
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545f4914f6cdd1dULL;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw InvalidInput("Rng::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  // Standard normal via Box-Muller (no cached second value).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = stddev * normal();
    return m;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
    }
  }

  // Child stream keyed by arbitrary tags, e.g. (seed, subject, epoch).
  // Independent of the parent's current position.
  Rng substream(std::initializer_list<std::uint64_t> tags) const {
    std::uint64_t h = seed_tag_;
    for (std::uint64_t t : tags) h = splitmix64(h ^ splitmix64(t));
    Rng child(0);
    child.state_ = h | 1ULL;  // avoid the all-zero xorshift fixed point
    child.seed_tag_ = h;
    return child;
  }

  std::uint64_t seed_tag() const { return seed_tag_; }

 private:
  std::uint64_t state_;
  std::uint64_t seed_tag_;
};

// FNV-1a, used to fold strings (subject ids) into RNG stream tags.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// k distinct indices drawn uniformly from [0, n) by partial Fisher-Yates.
// Returned sorted ascending.
inline std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
  if (k < 0 || k > n) throw InvalidInput("sample_without_replacement: k out of range");
  std::vector<int> pool(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace connlearn
