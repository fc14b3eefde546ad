#include "pivotal/similarity.hpp"

#include <cstdint>
#include <fstream>

#include <fmt/format.h>

namespace pivotal {

SimilarityMatrix::SimilarityMatrix(int units, std::vector<double> values, int iterations_used)
    : units_(units), iterations_used_(iterations_used), c_(std::move(values)) {
  if (units < 0 || c_.size() != static_cast<std::size_t>(units) * units) {
    throw std::invalid_argument("similarity: expected n*n values");
  }
  for (int i = 0; i < units; ++i) {
    for (int j = 0; j < units; ++j) {
      const double v = (*this)(i, j);
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("similarity: entries must lie in [0,1]");
      if (v != (*this)(j, i)) throw std::invalid_argument("similarity: matrix must be symmetric");
    }
  }
}

SimilarityMatrix estimate_similarity(const MixtureChain& chain) {
  const int H = chain.iterations();
  const int n = chain.units();
  const int G = chain.components();
  if (H < 1) throw std::invalid_argument("estimate_similarity: empty chain");

  // Upper-triangle pair counts; integer sums make the result independent of order.
  std::vector<std::uint32_t> counts(static_cast<std::size_t>(n) * n, 0);
  std::vector<std::vector<int>> members(G);
  for (int h = 0; h < H; ++h) {
    for (auto& m : members) m.clear();
    const auto z = chain.allocations(h);
    for (int i = 0; i < n; ++i) members[z[i] - 1].push_back(i);
    for (const auto& m : members) {
      for (std::size_t a = 0; a < m.size(); ++a) {
        std::uint32_t* row = counts.data() + static_cast<std::size_t>(m[a]) * n;
        for (std::size_t b = a + 1; b < m.size(); ++b) ++row[m[b]];
      }
    }
  }

  SimilarityMatrix sim;
  sim.units_ = n;
  sim.iterations_used_ = H;
  sim.c_.assign(static_cast<std::size_t>(n) * n, 0.0);
  const double total = static_cast<double>(H);
  for (int i = 0; i < n; ++i) {
    sim.c_[static_cast<std::size_t>(i) * n + i] = 1.0;
    for (int j = i + 1; j < n; ++j) {
      const double v = static_cast<double>(counts[static_cast<std::size_t>(i) * n + j]) / total;
      sim.c_[static_cast<std::size_t>(i) * n + j] = v;
      sim.c_[static_cast<std::size_t>(j) * n + i] = v;
    }
  }
  return sim;
}

GroupProbMatrix estimate_group_probs(const MixtureChain& chain, std::span<const int> iterations,
                                     bool normalize) {
  if (iterations.empty()) throw std::invalid_argument("estimate_group_probs: empty iteration set");
  const int n = chain.units();
  const int G = chain.components();
  std::vector<std::uint32_t> counts(static_cast<std::size_t>(n) * G, 0);
  for (int h : iterations) {
    if (h < 0 || h >= chain.iterations()) {
      throw std::out_of_range(fmt::format("estimate_group_probs: iteration {} outside chain", h + 1));
    }
    const auto z = chain.allocations(h);
    for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(i) * G + (z[i] - 1)];
  }
  GroupProbMatrix out;
  out.units = n;
  out.groups = G;
  out.iterations_used.assign(iterations.begin(), iterations.end());
  const double divisor = normalize ? static_cast<double>(iterations.size()) : static_cast<double>(chain.iterations());
  out.q.resize(counts.size());
  for (std::size_t j = 0; j < counts.size(); ++j) out.q[j] = static_cast<double>(counts[j]) / divisor;
  return out;
}

GroupProbMatrix estimate_group_probs(const MixtureChain& chain, bool normalize) {
  std::vector<int> all(chain.iterations());
  for (int h = 0; h < chain.iterations(); ++h) all[h] = h;
  return estimate_group_probs(chain, all, normalize);
}

SquareMatrix dissimilarity(const SimilarityMatrix& sim) {
  SquareMatrix s{sim.units(), std::vector<double>(sim.values().size())};
  for (std::size_t j = 0; j < s.values.size(); ++j) s.values[j] = 1.0 - sim.values()[j];
  return s;
}

void write_similarity_csv(const SimilarityMatrix& sim, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  std::string line;
  for (int i = 0; i < sim.units(); ++i) {
    line.clear();
    for (int j = 0; j < sim.units(); ++j) {
      if (j) line += ',';
      line += format_real(sim(i, j));
    }
    line += '\n';
    out << line;
  }
}

}  // namespace pivotal
