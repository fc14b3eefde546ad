#pragma once

// Competing relabelling methods used as benchmarks: the Bernoulli-mixture EM of
// Puolamaki and Kaski, Stephens' Kullback-Leibler relabelling, and ordering
// (identifiability) constraints.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pivotal/chain_store.hpp"

namespace pivotal {

/// p[h][i][g] = P(Z_i = g | y, theta^(h)).
struct ClassificationProbs {
  int iterations = 0;
  int units = 0;
  int components = 0;
  std::vector<double> p;

  double operator()(int h, int i, int g) const {
    return p[(static_cast<std::size_t>(h) * units + i) * components + g];
  }
  double& operator()(int h, int i, int g) {
    return p[(static_cast<std::size_t>(h) * units + i) * components + g];
  }
};

enum class ModelFamily { univariate_gaussian, multivariate_gaussian };

ModelFamily parse_family(const std::string& tag);

/// Per-iteration posterior classification probabilities. Dispersion draws are
/// read from phi: one variance (univariate) or one row-major d x d covariance
/// (multivariate), either shared or per component.
ClassificationProbs classification_probs(const Dataset& data, const MixtureChain& chain, ModelFamily family);

/// One permutation per iteration: perms[h][g] is the raw component (0-based)
/// that becomes component g.
using PermutationSequence = std::vector<std::vector<int>>;

MixtureChain apply_permutations(const MixtureChain& chain, const PermutationSequence& perms);

struct EMOptions {
  int max_iter = 500;
  double tol = 1e-8;
  std::uint64_t seed = 1;
  /// Optional n x G starting matrix (row-major); replaces the random start.
  std::optional<std::vector<double>> initial_q;
};

struct EMState {
  int units = 0;
  int components = 0;
  std::vector<double> q;      // n x G
  std::vector<double> gamma;  // (H*G) x G, row r = G*h + raw component
  double loglik = 0.0;
  std::vector<double> loglik_trace;
  int iterations = 0;
  bool converged = false;

  double q_at(int i, int g) const { return q[static_cast<std::size_t>(i) * components + g]; }
  double gamma_at(int r, int g) const { return gamma[static_cast<std::size_t>(r) * components + g]; }
};

/// EM for the Bernoulli mixture over the HG rows of indicator vectors
/// Z'_{r,i} = 1[z_hi = g'], r = G*h + g'. Non-convergence is reported through
/// `converged`, not thrown.
EMState pk_em(const MixtureChain& chain, const EMOptions& options = {});

/// Raw component g' of iteration h gets the label argmax_g gamma_{r(h,g'),g};
/// a non-injective argmax is repaired by maximum-responsibility matching.
PermutationSequence pk_permutations(const MixtureChain& chain, const EMState& em);
MixtureChain pk_relabel(const MixtureChain& chain, const EMState& em);

struct StephensResult {
  PermutationSequence perms;
  std::vector<double> q;  // n x G
  std::vector<double> loss_trace;
  int iterations = 0;
  bool converged = false;
};

/// Alternates Q = mean of permuted p and per-iteration permutations minimizing
/// KL(permuted p || Q). Exhaustive over G! for G <= 6, assignment above that.
StephensResult stephens_kl(const ClassificationProbs& probs, int max_iter = 100);

/// Total KL loss sum_h sum_i sum_g p' log(p'/Q) for the given permutations.
double stephens_loss(const ClassificationProbs& probs, const PermutationSequence& perms,
                     const std::vector<double>& q);

struct OrderingKey {
  enum class Kind { mean, weight } kind = Kind::mean;
  int coordinate = 0;
};

/// "mu" / "mu-dim-k" (1-based k) / "pi".
OrderingKey parse_ordering_key(const std::string& tag);

/// Sorts components ascending by the key in every iteration (stable on ties).
PermutationSequence ordering_permutations(const MixtureChain& chain, OrderingKey key);
MixtureChain relabel_by_ordering(const MixtureChain& chain, OrderingKey key);

}  // namespace pivotal
