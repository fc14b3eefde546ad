#pragma once

// Slow, direct reference implementations used to check the library, plus
// random instance generators. Nothing here calls into the code under test
// except for the plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include "pivotal/chain_store.hpp"
#include "pivotal/partitioning.hpp"
#include "pivotal/similarity.hpp"

namespace oracle {

using pivotal::MixtureChain;

inline MixtureChain random_chain(std::mt19937_64& rng, int H, int n, int G, int d = 1, int phi_size = 0) {
  MixtureChain chain(H, n, G, d, phi_size);
  std::uniform_int_distribution<int> label(1, G);
  std::normal_distribution<double> normal(0.0, 3.0);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  for (int h = 0; h < H; ++h) {
    for (int i = 0; i < n; ++i) chain.z(h, i) = label(rng);
    double total = 0.0;
    std::vector<double> w(G);
    for (double& v : w) total += (v = gamma(rng) + 1e-3);
    for (int g = 0; g < G; ++g) {
      chain.pi(h, g) = w[g] / total;
      for (int k = 0; k < d; ++k) chain.mu(h, g, k) = normal(rng);
    }
    for (int j = 0; j < phi_size; ++j) chain.phi(h, j) = 0.5 + gamma(rng);
  }
  return chain;
}

/// Chain whose allocations follow a fixed clustering with occasional noise,
/// so the similarity matrix has structure.
inline MixtureChain structured_chain(std::mt19937_64& rng, int H, int n, int G, double noise) {
  MixtureChain chain = random_chain(rng, H, n, G);
  std::vector<int> truth(n);
  for (int i = 0; i < n; ++i) truth[i] = i % G;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, G - 1);
  for (int h = 0; h < H; ++h) {
    std::vector<int> perm(G);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < n; ++i) {
      const int g = u(rng) < noise ? label(rng) : truth[i];
      chain.z(h, i) = perm[g] + 1;
    }
  }
  return chain;
}

/// Applies an independent uniformly random relabelling to every iteration.
inline MixtureChain scramble(const MixtureChain& chain, std::mt19937_64& rng) {
  MixtureChain out = chain;
  const int G = chain.components();
  for (int h = 0; h < chain.iterations(); ++h) {
    std::vector<int> from(G);
    std::iota(from.begin(), from.end(), 0);
    std::shuffle(from.begin(), from.end(), rng);
    out.permute_iteration(h, from);
  }
  return out;
}

inline std::vector<double> similarity(const MixtureChain& chain) {
  const int n = chain.units();
  std::vector<double> c(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      int same = 0;
      for (int h = 0; h < chain.iterations(); ++h) same += chain.z(h, i) == chain.z(h, j);
      c[static_cast<std::size_t>(i) * n + j] = static_cast<double>(same) / chain.iterations();
    }
  }
  return c;
}

inline std::vector<int> canonical(const std::vector<int>& labels) {
  std::map<int, int> seen;
  std::vector<int> out;
  for (int l : labels) {
    auto it = seen.find(l);
    if (it == seen.end()) it = seen.emplace(l, static_cast<int>(seen.size()) + 1).first;
    out.push_back(it->second);
  }
  return out;
}

/// Complete linkage, recomputing every cluster distance from scratch each step.
inline std::vector<int> hclust_complete(const pivotal::SquareMatrix& s, int groups) {
  const int n = s.n;
  std::vector<std::vector<int>> clusters(n);
  for (int i = 0; i < n; ++i) clusters[i] = {i};
  while (static_cast<int>(clusters.size()) > groups) {
    double best = std::numeric_limits<double>::infinity();
    std::pair<int, int> best_ids{n, n};
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        double dist = 0.0;
        for (int i : clusters[a]) {
          for (int j : clusters[b]) dist = std::max(dist, s(i, j));
        }
        const int ida = *std::min_element(clusters[a].begin(), clusters[a].end());
        const int idb = *std::min_element(clusters[b].begin(), clusters[b].end());
        const std::pair<int, int> ids{std::min(ida, idb), std::max(ida, idb)};
        if (dist < best || (dist == best && ids < best_ids)) {
          best = dist;
          best_ids = ids;
          ba = a;
          bb = b;
        }
      }
    }
    clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
  }
  std::vector<int> labels(n);
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (int i : clusters[c]) labels[i] = static_cast<int>(c) + 1;
  }
  return canonical(labels);
}

inline double binder_loss(const std::vector<int>& z, const std::vector<double>& c, int n) {
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int k = i + 1; k < n; ++k) {
      loss += std::abs((z[i] == z[k] ? 1.0 : 0.0) - c[static_cast<std::size_t>(i) * n + k]);
    }
  }
  return loss;
}

/// All set partitions of n units into at most `max_groups` blocks, as
/// restricted growth strings (labels 1-based, canonical).
inline std::vector<std::vector<int>> all_partitions(int n, int max_groups) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(n, 0);
  auto rec = [&](auto&& self, int i, int used) -> void {
    if (i == n) {
      std::vector<int> labels(n);
      for (int k = 0; k < n; ++k) labels[k] = cur[k] + 1;
      out.push_back(labels);
      return;
    }
    for (int g = 0; g <= std::min(used, max_groups - 1); ++g) {
      cur[i] = g;
      self(self, i + 1, std::max(used, g + 1));
    }
  };
  rec(rec, 0, 0);
  return out;
}

/// MUS by full enumeration of the candidate product, without pruning.
/// Returns 0-based pivots, or an empty vector when no identity tuple exists.
inline std::vector<int> mus(const std::vector<double>& c, int n, const std::vector<int>& part, int M, double eps) {
  const int groups = *std::max_element(part.begin(), part.end());
  std::vector<std::vector<int>> cand(groups);
  for (int g = 1; g <= groups; ++g) {
    std::vector<std::pair<int, int>> scored;
    for (int u = 0; u < n; ++u) {
      if (part[u] != g) continue;
      int zeros = 0;
      for (int j = 0; j < n; ++j) zeros += part[j] != g && c[static_cast<std::size_t>(u) * n + j] <= eps;
      scored.push_back({zeros, u});
    }
    std::stable_sort(scored.begin(), scored.end(), [](auto a, auto b) { return a.first > b.first; });
    for (int k = 0; k < std::min<int>(M, static_cast<int>(scored.size())); ++k) cand[g - 1].push_back(scored[k].second);
  }
  std::vector<std::map<int, long long>> count(groups);
  std::vector<std::size_t> idx(groups, 0);
  while (true) {
    bool identity = true;
    for (int a = 0; a < groups && identity; ++a) {
      for (int b = a + 1; b < groups && identity; ++b) {
        identity = c[static_cast<std::size_t>(cand[a][idx[a]]) * n + cand[b][idx[b]]] <= eps;
      }
    }
    if (identity) {
      for (int g = 0; g < groups; ++g) ++count[g][cand[g][idx[g]]];
    }
    int g = 0;
    while (g < groups && ++idx[g] == cand[g].size()) idx[g++] = 0;
    if (g == groups) break;
  }
  std::vector<int> out;
  for (int g = 0; g < groups; ++g) {
    int best = -1;
    long long best_count = 0;
    for (auto [u, k] : count[g]) {
      if (k > best_count) {
        best = u;
        best_count = k;
      }
    }
    if (best < 0) return {};
    out.push_back(best);
  }
  return out;
}

/// Minimum-cost permutation by enumeration; returns assignment[row] = column.
template <class Cost>
std::vector<int> brute_force_assignment(const Cost& cost, int n) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int r = 0; r < n; ++r) total += cost(r, perm[r]);
    if (total < best_cost) {
      best_cost = total;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace oracle
