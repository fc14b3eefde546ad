#pragma once

// Pivotal relabelling: choose one representative unit per reference group,
// drop the iterations where the pivots cannot anchor the labels, and relabel
// the remaining iterations so that the group of pivot g is always label g.
//
// Pivot criteria, for unit u in group G_g (self-similarity excluded from the
// within-group aggregates):
//
//   a  maximize  max_{j in G_g} c_uj
//   b  maximize  sum_{j in G_g} c_uj
//   c  minimize  min_{j in G_g} c_uj
//   d  minimize  min_{j not in G_g} c_uj
//   e  minimize  sum_{j not in G_g} c_uj
//   f  maximize  sum_{j in G_g} c_uj - sum_{j not in G_g} c_uj
//   mus  Maxima Units Search (see select_pivots_mus)
//
// Ties go to the lowest unit index.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pivotal/chain_store.hpp"
#include "pivotal/partitioning.hpp"
#include "pivotal/similarity.hpp"

namespace pivotal {

enum class Criterion { a, b, c, d, e, f, mus };

Criterion parse_criterion(const std::string& tag);
std::string to_string(Criterion c);

struct PivotSet {
  std::vector<int> units;  // 0-based unit positions; units[g] belongs to group g + 1
  Criterion criterion = Criterion::b;
};

struct IterationFilter {
  std::vector<int> kept;            // H0, 0-based, increasing
  std::vector<int> too_many;        // H1: more non-empty groups than G_hat
  std::vector<int> pivots_collide;  // H3 \ H1: two pivots share a component
  std::vector<int> nonempty;        // G^(h) for every iteration
  int total = 0;                    // H
};

struct RelabelResult {
  MixtureChain chain;
  IterationFilter filter;
  double kept_proportion = 0.0;
  PivotSet pivots;
};

class MusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// H0 is empty: the data do not support relabelling with these pivots.
class NoValidIterations : public std::runtime_error {
 public:
  NoValidIterations() : std::runtime_error("no valid iterations; relabelling impossible") {}
};

constexpr int kMusMaxGroups = 6;

PivotSet select_pivots_criterion(const SimilarityMatrix& sim, const Partition& part, Criterion criterion);

/// Maxima Units Search. Per group keep the `max_candidates` units with most
/// entries <= eps against other groups, count for each candidate the
/// one-per-group tuples whose submatrix is the identity up to eps, and pick the
/// candidate in each group with the largest count.
PivotSet select_pivots_mus(const SimilarityMatrix& sim, const Partition& part, int max_candidates = 5,
                           double eps = 0.0);

PivotSet select_pivots(const SimilarityMatrix& sim, const Partition& part, Criterion criterion,
                       int mus_candidates = 5, double mus_eps = 0.0);

IterationFilter compute_filter(const MixtureChain& chain, const PivotSet& pivots, int groups);

/// Relabels the kept iterations: component g of the result is the raw component
/// holding pivot g. Throws NoValidIterations when H0 is empty.
RelabelResult relabel(const MixtureChain& chain, const PivotSet& pivots, const IterationFilter& filter);

/// compute_filter + relabel.
RelabelResult pivotal_relabel(const MixtureChain& chain, const PivotSet& pivots, int groups);

double kept_proportion(const IterationFilter& filter, int iterations);

/// Sidecar JSON: kept_proportion, |H1|, |H3|, pivots (1-based), criterion.
void write_relabel_report(const RelabelResult& result, const std::filesystem::path& path);

}  // namespace pivotal
