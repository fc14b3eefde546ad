#include "pivotal/pivots.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <json.hpp>

namespace pivotal {

Criterion parse_criterion(const std::string& tag) {
  if (tag == "a") return Criterion::a;
  if (tag == "b") return Criterion::b;
  if (tag == "c") return Criterion::c;
  if (tag == "d") return Criterion::d;
  if (tag == "e") return Criterion::e;
  if (tag == "f") return Criterion::f;
  if (tag == "mus" || tag == "MUS") return Criterion::mus;
  throw std::invalid_argument(fmt::format("unknown pivot criterion '{}' (expected a-f or mus)", tag));
}

std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::a: return "a";
    case Criterion::b: return "b";
    case Criterion::c: return "c";
    case Criterion::d: return "d";
    case Criterion::e: return "e";
    case Criterion::f: return "f";
    case Criterion::mus: return "mus";
  }
  return "?";
}

namespace {

void check_inputs(const SimilarityMatrix& sim, const Partition& part) {
  if (sim.units() != part.units()) {
    throw std::invalid_argument(fmt::format("pivot selection: similarity is {0}x{0} but partition has {1} units",
                                            sim.units(), part.units()));
  }
  if (part.groups() < 1) throw std::invalid_argument("pivot selection: empty partition");
}

struct UnitStats {
  double in_max = -std::numeric_limits<double>::infinity();
  double in_min = std::numeric_limits<double>::infinity();
  double in_sum = 0.0;
  double out_min = std::numeric_limits<double>::infinity();
  double out_sum = 0.0;
};

UnitStats unit_stats(const SimilarityMatrix& sim, const Partition& part, int u) {
  UnitStats s;
  const auto row = sim.row(u);
  const int g = part[u];
  for (int j = 0; j < sim.units(); ++j) {
    if (j == u) continue;
    const double c = row[j];
    if (part[j] == g) {
      s.in_max = std::max(s.in_max, c);
      s.in_min = std::min(s.in_min, c);
      s.in_sum += c;
    } else {
      s.out_min = std::min(s.out_min, c);
      s.out_sum += c;
    }
  }
  return s;
}

// Larger is better for every criterion once minimized quantities are negated.
double score(const UnitStats& s, Criterion criterion) {
  switch (criterion) {
    case Criterion::a: return s.in_max;
    case Criterion::b: return s.in_sum;
    case Criterion::c: return -s.in_min;
    case Criterion::d: return -s.out_min;
    case Criterion::e: return -s.out_sum;
    case Criterion::f: return s.in_sum - s.out_sum;
    case Criterion::mus: break;
  }
  throw std::invalid_argument("score: MUS is not a scoring criterion");
}

}  // namespace

PivotSet select_pivots_criterion(const SimilarityMatrix& sim, const Partition& part, Criterion criterion) {
  check_inputs(sim, part);
  if (criterion == Criterion::mus) throw std::invalid_argument("use select_pivots_mus for MUS");

  PivotSet out;
  out.criterion = criterion;
  out.units.reserve(part.groups());
  for (int g = 1; g <= part.groups(); ++g) {
    const auto members = part.members(g);
    if (members.empty()) throw std::invalid_argument(fmt::format("pivot selection: group {} is empty", g));
    if (members.size() == 1) {
      out.units.push_back(members.front());
      continue;
    }
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int u : members) {
      const double s = score(unit_stats(sim, part, u), criterion);
      if (best < 0 || s > best_score) {
        best = u;
        best_score = s;
      }
    }
    out.units.push_back(best);
  }
  return out;
}

PivotSet select_pivots_mus(const SimilarityMatrix& sim, const Partition& part, int max_candidates, double eps) {
  check_inputs(sim, part);
  const int groups = part.groups();
  if (groups < 2) throw std::invalid_argument("MUS needs at least two groups");
  if (groups > kMusMaxGroups) {
    throw MusError(fmt::format("MUS capped at G_hat <= {} (got {})", kMusMaxGroups, groups));
  }
  if (max_candidates < 1) throw std::invalid_argument("MUS: M must be >= 1");

  // (i) per group, the units with the most near-zero similarities to other groups.
  std::vector<std::vector<int>> candidates(groups);
  for (int g = 1; g <= groups; ++g) {
    std::vector<std::pair<int, int>> ranked;  // (-zeros, unit)
    for (int u : part.members(g)) {
      int zeros = 0;
      const auto row = sim.row(u);
      for (int j = 0; j < sim.units(); ++j) {
        if (part[j] != g && row[j] <= eps) ++zeros;
      }
      ranked.emplace_back(-zeros, u);
    }
    if (ranked.empty()) throw std::invalid_argument(fmt::format("MUS: group {} is empty", g));
    std::sort(ranked.begin(), ranked.end());
    const std::size_t keep = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(max_candidates));
    for (std::size_t r = 0; r < keep; ++r) candidates[g - 1].push_back(ranked[r].second);
  }

  // (ii) count identity submatrices through each candidate by depth-first enumeration.
  std::vector<std::vector<long long>> counts(groups);
  for (int g = 0; g < groups; ++g) counts[g].assign(candidates[g].size(), 0);
  std::vector<int> chosen(groups);
  std::vector<int> chosen_slot(groups);
  auto extend = [&](auto&& self, int g) -> void {
    if (g == groups) {
      for (int k = 0; k < groups; ++k) ++counts[k][chosen_slot[k]];
      return;
    }
    for (std::size_t s = 0; s < candidates[g].size(); ++s) {
      const int u = candidates[g][s];
      bool separated = true;
      for (int k = 0; k < g && separated; ++k) separated = sim(u, chosen[k]) <= eps;
      if (!separated) continue;
      chosen[g] = u;
      chosen_slot[g] = static_cast<int>(s);
      self(self, g + 1);
    }
  };
  extend(extend, 0);

  // (iii) per group, the candidate appearing in the most identity submatrices.
  PivotSet out;
  out.criterion = Criterion::mus;
  for (int g = 0; g < groups; ++g) {
    int best = -1;
    long long best_count = 0;
    for (std::size_t s = 0; s < candidates[g].size(); ++s) {
      const int u = candidates[g][s];
      const long long c = counts[g][s];
      if (c > best_count || (c == best_count && c > 0 && u < best)) {
        best = u;
        best_count = c;
      }
    }
    if (best < 0) throw MusError("MUS found no separated pivots");
    out.units.push_back(best);
  }
  return out;
}

PivotSet select_pivots(const SimilarityMatrix& sim, const Partition& part, Criterion criterion,
                       int mus_candidates, double mus_eps) {
  if (criterion == Criterion::mus) return select_pivots_mus(sim, part, mus_candidates, mus_eps);
  return select_pivots_criterion(sim, part, criterion);
}

IterationFilter compute_filter(const MixtureChain& chain, const PivotSet& pivots, int groups) {
  if (static_cast<int>(pivots.units.size()) != groups) {
    throw std::invalid_argument(fmt::format("compute_filter: {} pivots for {} groups", pivots.units.size(), groups));
  }
  for (int u : pivots.units) {
    if (u < 0 || u >= chain.units()) throw std::out_of_range(fmt::format("compute_filter: pivot {} outside 1..{}", u + 1, chain.units()));
  }

  IterationFilter filter;
  filter.total = chain.iterations();
  filter.nonempty.resize(chain.iterations());
  std::vector<char> seen(chain.components() + 1);
  for (int h = 0; h < chain.iterations(); ++h) {
    std::fill(seen.begin(), seen.end(), 0);
    int distinct = 0;
    for (int label : chain.allocations(h)) {
      if (!seen[label]) {
        seen[label] = 1;
        ++distinct;
      }
    }
    filter.nonempty[h] = distinct;
    if (distinct > groups) {
      filter.too_many.push_back(h);
      continue;
    }
    std::fill(seen.begin(), seen.end(), 0);
    bool collide = false;
    for (int u : pivots.units) {
      const int label = chain.z(h, u);
      if (seen[label]) {
        collide = true;
        break;
      }
      seen[label] = 1;
    }
    if (collide) {
      filter.pivots_collide.push_back(h);
    } else {
      filter.kept.push_back(h);
    }
  }
  return filter;
}

RelabelResult relabel(const MixtureChain& chain, const PivotSet& pivots, const IterationFilter& filter) {
  if (filter.total != chain.iterations()) throw std::invalid_argument("relabel: filter computed for another chain");
  if (filter.kept.empty()) throw NoValidIterations();
  const int groups = static_cast<int>(pivots.units.size());

  std::vector<std::vector<int>> maps(filter.kept.size(), std::vector<int>(groups));
  std::vector<char> used(chain.components());
  for (std::size_t r = 0; r < filter.kept.size(); ++r) {
    const int h = filter.kept[r];
    std::fill(used.begin(), used.end(), 0);
    for (int g = 0; g < groups; ++g) {
      const int raw = chain.z(h, pivots.units[g]) - 1;
      if (used[raw]) throw std::logic_error("relabel: pivots share a component in a kept iteration");
      used[raw] = 1;
      maps[r][g] = raw;
    }
  }

  RelabelResult result;
  result.chain = chain.select(filter.kept, groups, maps);
  result.filter = filter;
  result.kept_proportion = kept_proportion(filter, chain.iterations());
  result.pivots = pivots;
  return result;
}

RelabelResult pivotal_relabel(const MixtureChain& chain, const PivotSet& pivots, int groups) {
  return relabel(chain, pivots, compute_filter(chain, pivots, groups));
}

double kept_proportion(const IterationFilter& filter, int iterations) {
  if (iterations <= 0) throw std::invalid_argument("kept_proportion: H must be positive");
  return static_cast<double>(filter.kept.size()) / static_cast<double>(iterations);
}

void write_relabel_report(const RelabelResult& result, const std::filesystem::path& path) {
  std::vector<int> pivots;
  for (int u : result.pivots.units) pivots.push_back(u + 1);
  nlohmann::json report = {{"method", "pivotal"},
                           {"criterion", to_string(result.pivots.criterion)},
                           {"pivots", pivots},
                           {"H", result.filter.total},
                           {"H0", result.filter.kept.size()},
                           {"H1", result.filter.too_many.size()},
                           {"H3", result.filter.pivots_collide.size()},
                           {"kept_proportion", result.kept_proportion}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << report.dump(2) << '\n';
}

}  // namespace pivotal
