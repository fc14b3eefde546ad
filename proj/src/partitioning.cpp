#include "pivotal/partitioning.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include <fmt/format.h>

namespace pivotal {

Partition::Partition(std::span<const int> labels, std::string source) : source_(std::move(source)) {
  labels_.reserve(labels.size());
  std::map<int, int> renumber;
  for (int raw : labels) {
    auto [it, inserted] = renumber.try_emplace(raw, static_cast<int>(renumber.size()) + 1);
    labels_.push_back(it->second);
  }
  groups_ = static_cast<int>(renumber.size());
}

std::vector<int> Partition::members(int g) const {
  std::vector<int> out;
  for (int i = 0; i < units(); ++i) {
    if (labels_[i] == g) out.push_back(i);
  }
  return out;
}

Linkage parse_linkage(const std::string& tag) {
  if (tag == "complete") return Linkage::complete;
  throw std::invalid_argument(fmt::format("unsupported linkage '{}' (only 'complete' is available)", tag));
}

namespace {

void check_dissimilarity(const SquareMatrix& d) {
  if (d.n < 1 || d.values.size() != static_cast<std::size_t>(d.n) * d.n) {
    throw std::invalid_argument("hclust: dissimilarity must be a non-empty n x n matrix");
  }
  for (int i = 0; i < d.n; ++i) {
    if (d(i, i) != 0.0) throw std::invalid_argument("hclust: dissimilarity diagonal must be zero");
    for (int j = i + 1; j < d.n; ++j) {
      const double v = d(i, j);
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("hclust: dissimilarities must lie in [0,1]");
      if (v != d(j, i)) throw std::invalid_argument("hclust: dissimilarity must be symmetric");
    }
  }
}

}  // namespace

Clustering hclust_complete(const SquareMatrix& dissim, int groups) {
  check_dissimilarity(dissim);
  const int n = dissim.n;
  if (groups < 1 || groups > n) {
    throw std::invalid_argument(fmt::format("hclust: number of groups {} outside 1..{}", groups, n));
  }

  constexpr double inf = std::numeric_limits<double>::infinity();
  SquareMatrix d = dissim;
  std::vector<char> active(n, 1);
  std::vector<int> nn(n, -1);
  std::vector<double> nnd(n, inf);

  // nn[i]: closest active j > i, smallest j on ties.
  auto refresh = [&](int i) {
    nn[i] = -1;
    nnd[i] = inf;
    for (int j = i + 1; j < n; ++j) {
      if (active[j] && d(i, j) < nnd[i]) {
        nnd[i] = d(i, j);
        nn[i] = j;
      }
    }
  };
  for (int i = 0; i < n; ++i) refresh(i);

  Clustering result;
  result.tree.merges.reserve(n > 0 ? n - 1 : 0);
  for (int step = 0; step + 1 < n; ++step) {
    int a = -1;
    double best = inf;
    for (int i = 0; i < n; ++i) {
      if (active[i] && nn[i] >= 0 && nnd[i] < best) {
        best = nnd[i];
        a = i;
      }
    }
    const int b = nn[a];
    result.tree.merges.push_back({a + 1, b + 1, best});

    for (int k = 0; k < n; ++k) {
      if (!active[k] || k == a || k == b) continue;
      const double merged = std::max(d(a, k), d(b, k));
      d(a, k) = merged;
      d(k, a) = merged;
    }
    active[b] = 0;
    // Linkage distances only grow, so only rows pointing at a or b can change.
    for (int i = 0; i < b; ++i) {
      if (active[i] && (i == a || nn[i] == a || nn[i] == b)) refresh(i);
    }
  }
  result.partition = cut_tree(result.tree, n, groups);
  return result;
}

Clustering hclust(const SquareMatrix& dissim, int groups, Linkage linkage) {
  switch (linkage) {
    case Linkage::complete:
      return hclust_complete(dissim, groups);
  }
  throw std::invalid_argument("hclust: unknown linkage");
}

Partition cut_tree(const Dendrogram& tree, int units, int groups) {
  if (groups < 1 || groups > units) throw std::invalid_argument("cut_tree: groups out of range");
  if (static_cast<int>(tree.merges.size()) < units - groups) {
    throw std::invalid_argument("cut_tree: dendrogram too short");
  }
  std::vector<int> parent(units);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int s = 0; s < units - groups; ++s) {
    const int ra = find(tree.merges[s].a - 1);
    const int rb = find(tree.merges[s].b - 1);
    parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<int> labels(units);
  for (int i = 0; i < units; ++i) labels[i] = find(i);
  return Partition(labels, "hclust");
}

double partition_distance(std::span<const int> z_star, std::span<const int> z, double d1, double d2) {
  if (z_star.size() != z.size()) throw std::invalid_argument("partition_distance: length mismatch");
  const std::size_t n = z.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = i + 1; k < n; ++k) {
      const bool same_star = z_star[i] == z_star[k];
      const bool same = z[i] == z[k];
      if (!same_star && same) total += d1;
      if (same_star && !same) total += d2;
    }
  }
  return total;
}

double partition_distance(const Partition& z_star, const Partition& z, double d1, double d2) {
  return partition_distance(z_star.labels(), z.labels(), d1, d2);
}

double expected_binder_loss(const Partition& z_star, const SimilarityMatrix& sim) {
  const int n = z_star.units();
  if (n != sim.units()) throw std::invalid_argument("expected_binder_loss: dimension mismatch");
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int k = i + 1; k < n; ++k) {
      const double joined = z_star[i] == z_star[k] ? 1.0 : 0.0;
      total += std::abs(joined - sim(i, k));
    }
  }
  return total;
}

double expected_distance_mcmc(const Partition& z_star, const MixtureChain& chain, double d1, double d2) {
  if (z_star.units() != chain.units()) throw std::invalid_argument("expected_distance_mcmc: dimension mismatch");
  if (chain.iterations() < 1) throw std::invalid_argument("expected_distance_mcmc: empty chain");
  double total = 0.0;
  for (int h = 0; h < chain.iterations(); ++h) {
    total += partition_distance(z_star.labels(), chain.allocations(h), d1, d2);
  }
  return total / chain.iterations();
}

Partition select_partition(std::span<const Partition> candidates, const SimilarityMatrix& sim) {
  if (candidates.empty()) throw std::invalid_argument("select_partition: empty candidate list");
  std::size_t best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    const double loss = expected_binder_loss(candidates[j], sim);
    if (loss < best_loss) {
      best_loss = loss;
      best = j;
    }
  }
  return candidates[best];
}

std::vector<Partition> default_candidates(const MixtureChain& chain, const SimilarityMatrix& sim, int groups) {
  std::vector<Partition> out;
  out.reserve(chain.iterations() + 1);
  for (int h = 0; h < chain.iterations(); ++h) {
    out.emplace_back(chain.allocations(h), fmt::format("iteration {}", h + 1));
  }
  out.push_back(hclust_complete(dissimilarity(sim), groups).partition);
  return out;
}

double adjusted_rand(const Partition& p1, const Partition& p2) {
  if (p1.units() != p2.units()) throw std::invalid_argument("adjusted_rand: length mismatch");
  const int n = p1.units();
  auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
  std::vector<double> table(static_cast<std::size_t>(p1.groups()) * p2.groups(), 0.0);
  std::vector<double> rows(p1.groups(), 0.0), cols(p2.groups(), 0.0);
  for (int i = 0; i < n; ++i) {
    table[static_cast<std::size_t>(p1[i] - 1) * p2.groups() + (p2[i] - 1)] += 1.0;
    rows[p1[i] - 1] += 1.0;
    cols[p2[i] - 1] += 1.0;
  }
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (double v : table) index += choose2(v);
  for (double v : rows) sum_rows += choose2(v);
  for (double v : cols) sum_cols += choose2(v);
  const double expected = n > 1 ? sum_rows * sum_cols / choose2(n) : 0.0;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return p1 == p2 ? 1.0 : 0.0;
  return (index - expected) / (max_index - expected);
}

void write_partition_csv(const Partition& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << fmt::format("{}\n", fmt::join(p.labels(), ","));
}

}  // namespace pivotal
