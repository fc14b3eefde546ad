#include "pivotal/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <fmt/format.h>

#include "pivotal/assignment.hpp"
#include "pivotal/random.hpp"

namespace pivotal {

namespace {

constexpr double kProbFloor = 1e-300;
constexpr double kQFloor = 1e-10;

double log_sum_exp(std::span<const double> v) {
  const double top = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(top)) return top;
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s);
}

}  // namespace

ModelFamily parse_family(const std::string& tag) {
  if (tag == "univariate-gaussian") return ModelFamily::univariate_gaussian;
  if (tag == "multivariate-gaussian") return ModelFamily::multivariate_gaussian;
  throw std::invalid_argument(fmt::format("unknown model family '{}'", tag));
}

ClassificationProbs classification_probs(const Dataset& data, const MixtureChain& chain, ModelFamily family) {
  const int n = data.units();
  const int G = chain.components();
  const int d = data.dim();
  if (n != chain.units()) throw std::invalid_argument("classification_probs: data and chain disagree on n");
  if (d != chain.dim()) throw std::invalid_argument("classification_probs: data and chain disagree on d");
  if (family == ModelFamily::univariate_gaussian && d != 1) {
    throw std::invalid_argument("classification_probs: univariate family needs d = 1");
  }
  const int block = family == ModelFamily::univariate_gaussian ? 1 : d * d;
  const bool per_component = chain.meta.phi_per_component > 0;
  if (per_component ? (chain.meta.phi_per_component != block || chain.phi_size() != G * block)
                    : chain.phi_size() != block) {
    throw std::invalid_argument("classification_probs: missing dispersion draws for this model family");
  }

  ClassificationProbs out{chain.iterations(), n, G, {}};
  out.p.resize(static_cast<std::size_t>(chain.iterations()) * n * G);
  std::vector<double> logw(G);
  std::vector<Eigen::LLT<Eigen::MatrixXd>> chol(G);
  std::vector<double> log_norm(G);
  const double log_2pi = std::log(2.0 * std::numbers::pi);

  for (int h = 0; h < chain.iterations(); ++h) {
    for (int g = 0; g < G; ++g) {
      const int offset = per_component ? g * block : 0;
      Eigen::MatrixXd sigma(d, d);
      for (int a = 0; a < d; ++a) {
        for (int b = 0; b < d; ++b) sigma(a, b) = chain.phi(h, offset + a * d + b);
      }
      chol[g].compute(sigma);
      if (chol[g].info() != Eigen::Success) {
        throw std::invalid_argument(fmt::format("classification_probs: dispersion of component {} at iteration {} is not positive definite", g + 1, h + 1));
      }
      const Eigen::MatrixXd L = chol[g].matrixL();
      log_norm[g] = -0.5 * d * log_2pi - L.diagonal().array().log().sum();
    }
    Eigen::VectorXd diff(d);
    for (int i = 0; i < n; ++i) {
      for (int g = 0; g < G; ++g) {
        for (int k = 0; k < d; ++k) diff(k) = data(i, k) - chain.mu(h, g, k);
        const Eigen::VectorXd w = chol[g].matrixL().solve(diff);
        const double pi = chain.pi(h, g);
        logw[g] = (pi > 0.0 ? std::log(pi) : -std::numeric_limits<double>::infinity()) + log_norm[g] -
                  0.5 * w.squaredNorm();
      }
      const double lse = log_sum_exp(logw);
      for (int g = 0; g < G; ++g) out(h, i, g) = std::exp(logw[g] - lse);
    }
  }
  return out;
}

MixtureChain apply_permutations(const MixtureChain& chain, const PermutationSequence& perms) {
  if (static_cast<int>(perms.size()) != chain.iterations()) {
    throw std::invalid_argument("apply_permutations: one permutation per iteration required");
  }
  MixtureChain out = chain;
  for (int h = 0; h < chain.iterations(); ++h) out.permute_iteration(h, perms[h]);
  return out;
}

// ---------------------------------------------------------------------------
// Puolamaki-Kaski

namespace {

double pk_estep(const MixtureChain& chain, const std::vector<double>& q, std::vector<double>& gamma) {
  const int H = chain.iterations();
  const int n = chain.units();
  const int G = chain.components();
  std::vector<double> base(G, 0.0);
  std::vector<double> logit(static_cast<std::size_t>(n) * G);
  for (int i = 0; i < n; ++i) {
    for (int g = 0; g < G; ++g) {
      const double v = q[static_cast<std::size_t>(i) * G + g];
      base[g] += std::log1p(-v);
      logit[static_cast<std::size_t>(i) * G + g] = std::log(v) - std::log1p(-v);
    }
  }
  double loglik = 0.0;
  std::vector<double> acc(static_cast<std::size_t>(G) * G);
  for (int h = 0; h < H; ++h) {
    // acc[g'][g]: log-likelihood of row (h, g') under cluster g.
    for (int gp = 0; gp < G; ++gp) {
      for (int g = 0; g < G; ++g) acc[static_cast<std::size_t>(gp) * G + g] = base[g];
    }
    const auto z = chain.allocations(h);
    for (int i = 0; i < n; ++i) {
      double* row = acc.data() + static_cast<std::size_t>(z[i] - 1) * G;
      const double* li = logit.data() + static_cast<std::size_t>(i) * G;
      for (int g = 0; g < G; ++g) row[g] += li[g];
    }
    for (int gp = 0; gp < G; ++gp) {
      std::span<double> row(acc.data() + static_cast<std::size_t>(gp) * G, static_cast<std::size_t>(G));
      const double lse = log_sum_exp(row);
      loglik += lse;
      double* out = gamma.data() + (static_cast<std::size_t>(h) * G + gp) * G;
      for (int g = 0; g < G; ++g) out[g] = std::exp(row[g] - lse);
    }
  }
  return loglik;
}

void pk_mstep(const MixtureChain& chain, const std::vector<double>& gamma, std::vector<double>& q) {
  const int H = chain.iterations();
  const int n = chain.units();
  const int G = chain.components();
  std::vector<double> denom(G, 0.0);
  std::fill(q.begin(), q.end(), 0.0);
  for (int h = 0; h < H; ++h) {
    for (int gp = 0; gp < G; ++gp) {
      const double* row = gamma.data() + (static_cast<std::size_t>(h) * G + gp) * G;
      for (int g = 0; g < G; ++g) denom[g] += row[g];
    }
    const auto z = chain.allocations(h);
    for (int i = 0; i < n; ++i) {
      const double* row = gamma.data() + (static_cast<std::size_t>(h) * G + (z[i] - 1)) * G;
      double* qi = q.data() + static_cast<std::size_t>(i) * G;
      for (int g = 0; g < G; ++g) qi[g] += row[g];
    }
  }
  // The box [floor, 1 - floor] keeps logs finite; clamping the separable concave
  // maximizer is still the exact maximizer over the box.
  for (int i = 0; i < n; ++i) {
    for (int g = 0; g < G; ++g) {
      double& v = q[static_cast<std::size_t>(i) * G + g];
      v = denom[g] > 0.0 ? v / denom[g] : 0.5;
      v = std::clamp(v, kQFloor, 1.0 - kQFloor);
    }
  }
}

}  // namespace

EMState pk_em(const MixtureChain& chain, const EMOptions& options) {
  const int H = chain.iterations();
  const int n = chain.units();
  const int G = chain.components();
  if (H < 1) throw std::invalid_argument("pk_em: empty chain");
  if (G < 2) throw std::invalid_argument("pk_em: needs G >= 2");
  if (options.max_iter < 1) throw std::invalid_argument("pk_em: max_iter must be >= 1");

  EMState state;
  state.units = n;
  state.components = G;
  state.q.resize(static_cast<std::size_t>(n) * G);
  if (options.initial_q) {
    if (options.initial_q->size() != state.q.size()) throw std::invalid_argument("pk_em: initial q must be n x G");
    state.q = *options.initial_q;
  } else {
    Rng rng(options.seed);
    for (int i = 0; i < n; ++i) {
      double total = 0.0;
      for (int g = 0; g < G; ++g) total += state.q[static_cast<std::size_t>(i) * G + g] = rng.uniform();
      for (int g = 0; g < G; ++g) state.q[static_cast<std::size_t>(i) * G + g] /= total;
    }
  }
  for (double& v : state.q) v = std::clamp(v, kQFloor, 1.0 - kQFloor);
  state.gamma.resize(static_cast<std::size_t>(H) * G * G);

  double previous = pk_estep(chain, state.q, state.gamma);
  state.loglik_trace.push_back(previous);
  for (int it = 1; it <= options.max_iter; ++it) {
    pk_mstep(chain, state.gamma, state.q);
    const double current = pk_estep(chain, state.q, state.gamma);
    state.loglik_trace.push_back(current);
    state.iterations = it;
    const bool done = current - previous < options.tol;
    previous = current;
    if (done) {
      state.converged = true;
      break;
    }
  }
  state.loglik = previous;
  return state;
}

PermutationSequence pk_permutations(const MixtureChain& chain, const EMState& em) {
  const int H = chain.iterations();
  const int G = chain.components();
  if (em.components != G || em.gamma.size() != static_cast<std::size_t>(H) * G * G) {
    throw std::invalid_argument("pk_relabel: EM state does not match chain");
  }
  PermutationSequence perms(H, std::vector<int>(G));
  std::vector<int> target(G);
  std::vector<char> hit(G);
  Eigen::MatrixXd cost(G, G);
  for (int h = 0; h < H; ++h) {
    std::fill(hit.begin(), hit.end(), 0);
    bool bijective = true;
    for (int gp = 0; gp < G; ++gp) {
      const int r = h * G + gp;
      int best = 0;
      for (int g = 1; g < G; ++g) {
        if (em.gamma_at(r, g) > em.gamma_at(r, best)) best = g;
      }
      target[gp] = best;
      if (hit[best]) bijective = false;
      hit[best] = 1;
    }
    if (!bijective) {
      for (int gp = 0; gp < G; ++gp) {
        for (int g = 0; g < G; ++g) cost(gp, g) = -em.gamma_at(h * G + gp, g);
      }
      target = G <= 8 ? solve_assignment_exhaustive(cost) : solve_assignment(cost);
    }
    for (int gp = 0; gp < G; ++gp) perms[h][target[gp]] = gp;
  }
  return perms;
}

MixtureChain pk_relabel(const MixtureChain& chain, const EMState& em) {
  return apply_permutations(chain, pk_permutations(chain, em));
}

// ---------------------------------------------------------------------------
// Stephens

namespace {

void stephens_mean(const ClassificationProbs& probs, const PermutationSequence& perms, std::vector<double>& q) {
  const int n = probs.units;
  const int G = probs.components;
  std::fill(q.begin(), q.end(), 0.0);
  for (int h = 0; h < probs.iterations; ++h) {
    for (int i = 0; i < n; ++i) {
      for (int g = 0; g < G; ++g) q[static_cast<std::size_t>(i) * G + g] += probs(h, i, perms[h][g]);
    }
  }
  for (double& v : q) v /= probs.iterations;
}

}  // namespace

double stephens_loss(const ClassificationProbs& probs, const PermutationSequence& perms,
                     const std::vector<double>& q) {
  const int n = probs.units;
  const int G = probs.components;
  double total = 0.0;
  for (int h = 0; h < probs.iterations; ++h) {
    for (int i = 0; i < n; ++i) {
      for (int g = 0; g < G; ++g) {
        const double p = std::max(probs(h, i, perms[h][g]), kProbFloor);
        const double qq = std::max(q[static_cast<std::size_t>(i) * G + g], kProbFloor);
        total += p * (std::log(p) - std::log(qq));
      }
    }
  }
  return total;
}

StephensResult stephens_kl(const ClassificationProbs& probs, int max_iter) {
  const int H = probs.iterations;
  const int n = probs.units;
  const int G = probs.components;
  if (H < 1 || n < 1 || G < 1) throw std::invalid_argument("stephens_kl: empty probabilities");
  if (max_iter < 1) throw std::invalid_argument("stephens_kl: max_iter must be >= 1");

  StephensResult result;
  std::vector<int> identity(G);
  std::iota(identity.begin(), identity.end(), 0);
  result.perms.assign(H, identity);
  result.q.assign(static_cast<std::size_t>(n) * G, 0.0);

  std::vector<std::vector<int>> all_perms;
  if (G <= 6) {
    std::vector<int> p = identity;
    do all_perms.push_back(p);
    while (std::next_permutation(p.begin(), p.end()));
  }

  stephens_mean(probs, result.perms, result.q);
  result.loss_trace.push_back(stephens_loss(probs, result.perms, result.q));

  Eigen::MatrixXd cost(G, G);
  std::vector<double> log_q(result.q.size());
  for (int it = 1; it <= max_iter; ++it) {
    for (std::size_t j = 0; j < log_q.size(); ++j) log_q[j] = std::log(std::max(result.q[j], kProbFloor));
    bool changed = false;
    for (int h = 0; h < H; ++h) {
      // cost(g, g'): loss of sending raw component g' to label g. The entropy
      // term is permutation invariant and omitted.
      cost.setZero();
      for (int i = 0; i < n; ++i) {
        for (int gp = 0; gp < G; ++gp) {
          const double p = probs(h, i, gp);
          if (p <= 0.0) continue;
          for (int g = 0; g < G; ++g) cost(g, gp) -= p * log_q[static_cast<std::size_t>(i) * G + g];
        }
      }
      auto& current = result.perms[h];
      double best_cost = assignment_cost(cost, current);
      std::vector<int> best = current;
      if (G <= 6) {
        const double slack = 1e-12 * std::max(1.0, std::abs(best_cost));
        for (const auto& p : all_perms) {
          const double c = assignment_cost(cost, p);
          if (c < best_cost - slack) {
            best_cost = c;
            best = p;
          }
        }
      } else {
        auto candidate = solve_assignment(cost);
        if (assignment_cost(cost, candidate) < best_cost - 1e-12 * std::max(1.0, std::abs(best_cost))) {
          best = std::move(candidate);
        }
      }
      if (best != current) {
        current = std::move(best);
        changed = true;
      }
    }
    result.iterations = it;
    stephens_mean(probs, result.perms, result.q);
    result.loss_trace.push_back(stephens_loss(probs, result.perms, result.q));
    if (!changed) {
      result.converged = true;
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Ordering constraints

OrderingKey parse_ordering_key(const std::string& tag) {
  if (tag == "pi") return {OrderingKey::Kind::weight, 0};
  if (tag == "mu") return {OrderingKey::Kind::mean, 0};
  const std::string prefix = "mu-dim-";
  if (tag.rfind(prefix, 0) == 0) {
    try {
      const int k = std::stoi(tag.substr(prefix.size()));
      if (k >= 1) return {OrderingKey::Kind::mean, k - 1};
    } catch (const std::exception&) {
    }
  }
  throw std::invalid_argument(fmt::format("unknown ordering key '{}' (expected pi, mu or mu-dim-k)", tag));
}

PermutationSequence ordering_permutations(const MixtureChain& chain, OrderingKey key) {
  const int G = chain.components();
  if (key.kind == OrderingKey::Kind::mean && (key.coordinate < 0 || key.coordinate >= chain.dim())) {
    throw std::invalid_argument("ordering: mean coordinate out of range");
  }
  PermutationSequence perms(chain.iterations(), std::vector<int>(G));
  for (int h = 0; h < chain.iterations(); ++h) {
    auto& p = perms[h];
    std::iota(p.begin(), p.end(), 0);
    auto value = [&](int g) {
      return key.kind == OrderingKey::Kind::weight ? chain.pi(h, g) : chain.mu(h, g, key.coordinate);
    };
    std::stable_sort(p.begin(), p.end(), [&](int x, int y) { return value(x) < value(y); });
  }
  return perms;
}

MixtureChain relabel_by_ordering(const MixtureChain& chain, OrderingKey key) {
  return apply_permutations(chain, ordering_permutations(chain, key));
}

}  // namespace pivotal
