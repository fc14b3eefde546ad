#pragma once

// Label-invariant summaries of the allocation draws: the co-clustering
// similarity matrix and per-unit group membership probabilities.

#include <filesystem>
#include <span>
#include <vector>

#include "pivotal/chain_store.hpp"

namespace pivotal {

/// Estimated co-clustering probabilities c_ij = P(Z_i = Z_j | data). Full n x n
/// storage. Every entry is (integer count) / iterations_used.
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;
  /// From raw symmetric values; used for hand-built matrices in tests and for
  /// matrices read from disk. `iterations_used` may be 0 when unknown.
  SimilarityMatrix(int units, std::vector<double> values, int iterations_used = 0);

  int units() const { return units_; }
  int iterations_used() const { return iterations_used_; }
  double operator()(int i, int j) const { return c_[static_cast<std::size_t>(i) * units_ + j]; }
  std::span<const double> row(int i) const {
    return {c_.data() + static_cast<std::size_t>(i) * units_, static_cast<std::size_t>(units_)};
  }
  const std::vector<double>& values() const { return c_; }

  bool operator==(const SimilarityMatrix&) const = default;

 private:
  friend SimilarityMatrix estimate_similarity(const MixtureChain&);
  int units_ = 0;
  int iterations_used_ = 0;
  std::vector<double> c_;
};

/// q_ig estimates. `iterations_used` holds 0-based iteration positions.
struct GroupProbMatrix {
  int units = 0;
  int groups = 0;
  std::vector<double> q;
  std::vector<int> iterations_used;

  double operator()(int i, int g) const { return q[static_cast<std::size_t>(i) * groups + g]; }
};

/// Dense n x n real matrix (row-major), used for dissimilarities.
struct SquareMatrix {
  int n = 0;
  std::vector<double> values;

  double operator()(int i, int j) const { return values[static_cast<std::size_t>(i) * n + j]; }
  double& operator()(int i, int j) { return values[static_cast<std::size_t>(i) * n + j]; }
};

SimilarityMatrix estimate_similarity(const MixtureChain& chain);

/// Average of the indicator 1[z_hi == g] over `iterations`. When `normalize` is
/// false the divisor is the full chain length H, so rows over a strict subset of
/// iterations sum to less than one; when true the divisor is |iterations|.
GroupProbMatrix estimate_group_probs(const MixtureChain& chain, std::span<const int> iterations,
                                     bool normalize = false);
GroupProbMatrix estimate_group_probs(const MixtureChain& chain, bool normalize = false);

/// Entrywise 1 - c.
SquareMatrix dissimilarity(const SimilarityMatrix& sim);

/// n header-less rows of n comma-separated values.
void write_similarity_csv(const SimilarityMatrix& sim, const std::filesystem::path& path);

}  // namespace pivotal
