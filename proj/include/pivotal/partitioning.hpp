#pragma once

// Reference partitions of the units built from the similarity matrix:
// complete-linkage agglomerative clustering and expected-loss selection.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pivotal/chain_store.hpp"
#include "pivotal/similarity.hpp"

namespace pivotal {

/// Hard grouping of n units into labels 1..groups(), numbered by first appearance.
class Partition {
 public:
  Partition() = default;
  /// Canonicalizes `labels` (any integer values) to first-appearance numbering.
  explicit Partition(std::span<const int> labels, std::string source = "external");

  int units() const { return static_cast<int>(labels_.size()); }
  int groups() const { return groups_; }
  int operator[](int i) const { return labels_[i]; }
  const std::vector<int>& labels() const { return labels_; }
  const std::string& source() const { return source_; }

  /// 0-based unit positions in group g (1-based label), increasing.
  std::vector<int> members(int g) const;

  /// Equality ignores `source`.
  bool operator==(const Partition& other) const { return labels_ == other.labels_; }

 private:
  std::vector<int> labels_;
  int groups_ = 0;
  std::string source_;
};

enum class Linkage { complete };

Linkage parse_linkage(const std::string& tag);

/// One agglomeration step. Clusters are identified by their smallest member
/// (1-based unit index); the merged cluster keeps the smaller id `a`.
struct Merge {
  int a = 0;
  int b = 0;
  double height = 0.0;
};

struct Dendrogram {
  std::vector<Merge> merges;  // n - 1 entries
};

struct Clustering {
  Partition partition;
  Dendrogram tree;
};

/// Complete-linkage agglomerative clustering cut at `groups` clusters. Among pairs
/// at minimal linkage distance the lexicographically smallest (a, b) merges first.
Clustering hclust_complete(const SquareMatrix& dissim, int groups);
Clustering hclust(const SquareMatrix& dissim, int groups, Linkage linkage);

/// Cuts a full dendrogram after its first n - groups merges.
Partition cut_tree(const Dendrogram& tree, int units, int groups);

/// Pair-disagreement loss: d1 for pairs split by z_star but joined by z, d2 for
/// pairs joined by z_star but split by z.
double partition_distance(const Partition& z_star, const Partition& z, double d1, double d2);
double partition_distance(std::span<const int> z_star, std::span<const int> z, double d1, double d2);

/// sum_{i<k} |1[z*_i = z*_k] - c_ik|.
double expected_binder_loss(const Partition& z_star, const SimilarityMatrix& sim);

/// (1/H) sum_h partition_distance(z*, z^(h)).
double expected_distance_mcmc(const Partition& z_star, const MixtureChain& chain, double d1, double d2);

/// Candidate with the smallest expected_binder_loss; earliest wins ties.
Partition select_partition(std::span<const Partition> candidates, const SimilarityMatrix& sim);

/// Every sampled allocation followed by the complete-linkage cut at `groups`.
std::vector<Partition> default_candidates(const MixtureChain& chain, const SimilarityMatrix& sim, int groups);

double adjusted_rand(const Partition& p1, const Partition& p2);

/// One line of comma-separated labels.
void write_partition_csv(const Partition& p, const std::filesystem::path& path);

}  // namespace pivotal
