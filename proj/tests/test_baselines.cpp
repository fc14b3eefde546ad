#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "pivotal/baselines.hpp"

using namespace pivotal;

namespace {

MixtureChain labels_only(const std::vector<std::vector<int>>& z, int G) {
  MixtureChain c(static_cast<int>(z.size()), static_cast<int>(z[0].size()), G, 1);
  for (int h = 0; h < c.iterations(); ++h) {
    for (int i = 0; i < c.units(); ++i) c.z(h, i) = z[h][i];
    for (int g = 0; g < G; ++g) {
      c.pi(h, g) = 1.0 / G;
      c.mu(h, g, 0) = g;
    }
  }
  return c;
}

// Univariate chain with one shared variance per iteration.
MixtureChain univariate(const std::vector<double>& mu, const std::vector<double>& pi, double var) {
  const int G = static_cast<int>(mu.size());
  MixtureChain c(1, 1, G, 1, 1);
  c.z(0, 0) = 1;
  for (int g = 0; g < G; ++g) {
    c.mu(0, g, 0) = mu[g];
    c.pi(0, g) = pi[g];
  }
  c.phi(0, 0) = var;
  return c;
}

ClassificationProbs probs_from(const std::vector<std::vector<std::vector<double>>>& p) {
  ClassificationProbs out{static_cast<int>(p.size()), static_cast<int>(p[0].size()),
                          static_cast<int>(p[0][0].size()), {}};
  for (const auto& h : p) {
    for (const auto& i : h) out.p.insert(out.p.end(), i.begin(), i.end());
  }
  return out;
}

// Allocation probabilities that put most mass on the chain's own labels.
ClassificationProbs soft_probs(const MixtureChain& c, double sharp) {
  const int G = c.components();
  ClassificationProbs p{c.iterations(), c.units(), G, {}};
  p.p.assign(static_cast<std::size_t>(c.iterations()) * c.units() * G, (1.0 - sharp) / (G - 1));
  for (int h = 0; h < c.iterations(); ++h) {
    for (int i = 0; i < c.units(); ++i) p(h, i, c.z(h, i) - 1) = sharp;
  }
  return p;
}

EMOptions em_options(int max_iter, double tol, std::uint64_t seed) {
  EMOptions o;
  o.max_iter = max_iter;
  o.tol = tol;
  o.seed = seed;
  return o;
}

}  // namespace

TEST_CASE("tags") {
  CHECK(parse_family("univariate-gaussian") == ModelFamily::univariate_gaussian);
  CHECK(parse_family("multivariate-gaussian") == ModelFamily::multivariate_gaussian);
  CHECK_THROWS_AS(parse_family("poisson"), std::invalid_argument);
  CHECK(parse_ordering_key("pi").kind == OrderingKey::Kind::weight);
  CHECK(parse_ordering_key("mu").coordinate == 0);
  CHECK(parse_ordering_key("mu-dim-2").coordinate == 1);
  CHECK_THROWS_AS(parse_ordering_key("mu-dim-0"), std::invalid_argument);
  CHECK_THROWS_AS(parse_ordering_key("sigma"), std::invalid_argument);
}

TEST_CASE("classification probabilities, univariate") {
  const Dataset y(1, 1, {0.0});
  const auto one = classification_probs(y, univariate({3.0}, {1.0}, 2.0), ModelFamily::univariate_gaussian);
  CHECK(one(0, 0, 0) == 1.0);

  const Dataset mid(1, 1, {5.0});
  const auto half = classification_probs(mid, univariate({0.0, 10.0}, {0.5, 0.5}, 1.0), ModelFamily::univariate_gaussian);
  CHECK(half(0, 0, 0) == doctest::Approx(0.5));
  CHECK(half(0, 0, 1) == doctest::Approx(0.5));

  const auto far = classification_probs(y, univariate({0.0, 10.0}, {0.5, 0.5}, 1.0), ModelFamily::univariate_gaussian);
  // phi(10) / phi(0) = exp(-50)
  CHECK(far(0, 0, 1) == doctest::Approx(std::exp(-50.0)).epsilon(1e-9));
  CHECK(far(0, 0, 1) == doctest::Approx(1.9287e-22).epsilon(1e-3));
  CHECK(far(0, 0, 0) == 1.0);

  MixtureChain per = univariate({0.0, 1.0}, {0.3, 0.7}, 1.0);
  CHECK_THROWS_AS(classification_probs(y, MixtureChain(1, 1, 2, 1), ModelFamily::univariate_gaussian), std::invalid_argument);
  per = MixtureChain(1, 1, 2, 1, 2);
  per.meta.phi_per_component = 1;
  per.z(0, 0) = 1;
  per.pi(0, 0) = 0.3;
  per.pi(0, 1) = 0.7;
  per.mu(0, 1, 0) = 1.0;
  per.phi(0, 0) = 1.0;
  per.phi(0, 1) = 4.0;
  const Dataset x(1, 1, {0.4});
  const auto p = classification_probs(x, per, ModelFamily::univariate_gaussian);
  const double w0 = 0.3 * std::exp(-0.5 * 0.16) / 1.0;
  const double w1 = 0.7 * std::exp(-0.5 * 0.36 / 4.0) / 2.0;
  CHECK(p(0, 0, 0) == doctest::Approx(w0 / (w0 + w1)).epsilon(1e-12));
}

TEST_CASE("classification probabilities, bivariate against explicit densities") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> N(0.0, 2.0);
  const int G = 3;
  MixtureChain c(4, 5, G, 2, G * 4);
  c.meta.phi_per_component = 4;
  Dataset y(5, 2);
  for (int i = 0; i < 5; ++i) {
    y(i, 0) = N(rng);
    y(i, 1) = N(rng);
  }
  for (int h = 0; h < 4; ++h) {
    for (int i = 0; i < 5; ++i) c.z(h, i) = 1 + i % G;
    for (int g = 0; g < G; ++g) {
      c.pi(h, g) = (g + 1) / 6.0;
      c.mu(h, g, 0) = N(rng);
      c.mu(h, g, 1) = N(rng);
      const double a = 1.0 + std::abs(N(rng)), b = 1.0 + std::abs(N(rng)), r = 0.3 * std::tanh(N(rng));
      c.phi(h, 4 * g + 0) = a;
      c.phi(h, 4 * g + 1) = c.phi(h, 4 * g + 2) = r * std::sqrt(a * b);
      c.phi(h, 4 * g + 3) = b;
    }
  }
  const auto p = classification_probs(y, c, ModelFamily::multivariate_gaussian);
  for (int h = 0; h < 4; ++h) {
    for (int i = 0; i < 5; ++i) {
      std::vector<double> w(G);
      double total = 0.0;
      for (int g = 0; g < G; ++g) {
        const double s11 = c.phi(h, 4 * g), s12 = c.phi(h, 4 * g + 1), s22 = c.phi(h, 4 * g + 3);
        const double det = s11 * s22 - s12 * s12;
        const double dx = y(i, 0) - c.mu(h, g, 0), dy = y(i, 1) - c.mu(h, g, 1);
        const double q = (s22 * dx * dx - 2 * s12 * dx * dy + s11 * dy * dy) / det;
        w[g] = c.pi(h, g) * std::exp(-0.5 * q) / (2 * std::numbers::pi * std::sqrt(det));
        total += w[g];
      }
      double sum = 0.0;
      for (int g = 0; g < G; ++g) {
        CHECK(p(h, i, g) == doctest::Approx(w[g] / total).epsilon(1e-10));
        sum += p(h, i, g);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-10);
    }
  }
}

TEST_CASE("PK EM separates two stable groups") {
  std::vector<std::vector<int>> z(20, {1, 1, 1, 2, 2, 2});
  const MixtureChain c = labels_only(z, 2);
  const EMState em = pk_em(c, em_options(500, 1e-10, 3));
  const int g = em.q_at(0, 0) > 0.5 ? 0 : 1;
  for (int i = 0; i < 3; ++i) {
    CHECK(em.q_at(i, g) > 0.99);
    CHECK(em.q_at(i + 3, 1 - g) > 0.99);
  }
  CHECK(em.converged);
  const auto perms = pk_permutations(c, em);
  for (const auto& p : perms) CHECK(p == perms[0]);
}

TEST_CASE("PK EM on the swap chain: symmetric fixed point and polarization") {
  const MixtureChain c = labels_only({{1, 2}, {2, 1}}, 2);
  EMOptions sym = em_options(50, 0.0, 1);
  sym.initial_q = std::vector<double>(4, 0.5);
  const EMState flat = pk_em(c, sym);
  for (double v : flat.q) CHECK(v == doctest::Approx(0.5));

  EMOptions asym = sym;
  asym.initial_q = std::vector<double>{0.7, 0.3, 0.4, 0.6};
  const EMState em = pk_em(c, asym);
  const int g = em.q_at(0, 0) > 0.5 ? 0 : 1;
  CHECK(em.q_at(0, g) > 0.99);
  CHECK(em.q_at(1, g) < 0.01);
  CHECK(em.q_at(0, 1 - g) < 0.01);
  CHECK(em.q_at(1, 1 - g) > 0.99);

  const MixtureChain r = pk_relabel(c, em);
  CHECK(r.z(0, 0) == r.z(1, 0));
  CHECK(r.z(0, 1) == r.z(1, 1));
  CHECK(r.mu(0, 0, 0) != r.mu(1, 0, 0));
}

TEST_CASE("PK EM on a single iteration recovers its allocation") {
  const MixtureChain c = labels_only({{1, 2, 1, 2, 2}}, 2);
  const EMState em = pk_em(c, em_options(500, 1e-12, 9));
  const int g = em.q_at(0, 0) > 0.5 ? 0 : 1;
  for (int i = 0; i < 5; ++i) {
    const int own = c.z(0, i) == 1 ? g : 1 - g;
    CHECK(em.q_at(i, own) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(em.q_at(i, 1 - own) == doctest::Approx(0.0).epsilon(1e-6));
  }
}

TEST_CASE("PK readout repairs ties to the lowest-index bijection") {
  const MixtureChain c = labels_only({{1, 2}, {2, 1}}, 2);
  EMState em;
  em.units = 2;
  em.components = 2;
  em.q.assign(4, 0.5);
  em.gamma.assign(8, 0.5);
  const auto perms = pk_permutations(c, em);
  CHECK(perms[0] == std::vector<int>{0, 1});
  CHECK(perms[1] == std::vector<int>{0, 1});
  em.gamma.pop_back();
  CHECK_THROWS_AS(pk_permutations(c, em), std::invalid_argument);
}

TEST_CASE("PK EM monotone log-likelihood and row-normalized responsibilities") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 30; ++t) {
    const MixtureChain c = oracle::structured_chain(rng, 5 + t, 4 + t % 7, 2 + t % 3, 0.25);
    const EMState em = pk_em(c, em_options(200, 1e-10, static_cast<std::uint64_t>(t)));
    for (std::size_t k = 1; k < em.loglik_trace.size(); ++k) {
      CHECK(em.loglik_trace[k] >= em.loglik_trace[k - 1] - 1e-9);
    }
    const int G = c.components();
    for (std::size_t r = 0; r < em.gamma.size() / G; ++r) {
      double s = 0.0;
      for (int g = 0; g < G; ++g) s += em.gamma_at(static_cast<int>(r), g);
      CHECK(std::abs(s - 1.0) <= 1e-10);
    }
    for (double v : em.q) CHECK((v >= 0.0 && v <= 1.0));
    for (const auto& p : pk_permutations(c, em)) {
      auto s = p;
      std::sort(s.begin(), s.end());
      for (int g = 0; g < G; ++g) CHECK(s[g] == g);
    }
  }
  CHECK_THROWS_AS(pk_em(labels_only({{1, 1}}, 1)), std::invalid_argument);
}

TEST_CASE("Stephens: nothing to undo") {
  const auto p = probs_from({{{0.9, 0.1}, {0.2, 0.8}}, {{0.8, 0.2}, {0.1, 0.9}}});
  const StephensResult r = stephens_kl(p, 100);
  CHECK(r.iterations == 1);
  CHECK(r.converged);
  for (const auto& perm : r.perms) CHECK(perm == std::vector<int>{0, 1});
}

TEST_CASE("Stephens undoes a swap") {
  const auto p = probs_from({{{1, 0}, {0, 1}}, {{1, 0}, {0, 1}}, {{0, 1}, {1, 0}}});
  const StephensResult r = stephens_kl(p, 100);
  CHECK(r.perms[0] == std::vector<int>{0, 1});
  CHECK(r.perms[1] == std::vector<int>{0, 1});
  CHECK(r.perms[2] == std::vector<int>{1, 0});
  CHECK(r.q == std::vector<double>{1, 0, 0, 1});
  CHECK(r.loss_trace.back() == doctest::Approx(0.0));
}

TEST_CASE("Stephens loss is non-increasing and beats the identity") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 30; ++t) {
    const int G = 2 + t % 6;  // G = 7 exercises the assignment path
    const MixtureChain c = oracle::scramble(oracle::structured_chain(rng, 10 + t, 6 + t % 5, G, 0.2), rng);
    const ClassificationProbs p = soft_probs(c, 0.7);
    const StephensResult r = stephens_kl(p, 100);
    for (std::size_t k = 1; k < r.loss_trace.size(); ++k) {
      CHECK(r.loss_trace[k] <= r.loss_trace[k - 1] + 1e-9 * std::max(1.0, std::abs(r.loss_trace[k - 1])));
    }
    CHECK(r.loss_trace.back() == doctest::Approx(stephens_loss(p, r.perms, r.q)));
    CHECK(r.loss_trace.back() <= r.loss_trace.front() + 1e-12);
  }
  const MixtureChain big = oracle::scramble(oracle::structured_chain(rng, 15, 14, 7, 0.1), rng);
  const StephensResult r = stephens_kl(soft_probs(big, 0.8), 100);
  for (std::size_t k = 1; k < r.loss_trace.size(); ++k) CHECK(r.loss_trace[k] <= r.loss_trace[k - 1] + 1e-9);
  CHECK(r.converged);
}

TEST_CASE("ordering constraints") {
  MixtureChain c = labels_only({{1, 2}, {1, 2}}, 2);
  CHECK(relabel_by_ordering(c, parse_ordering_key("mu")) == c);

  MixtureChain swap = c;
  swap.permute_iteration(1, std::vector<int>{1, 0});
  CHECK(swap.z(1, 0) == 2);
  CHECK(relabel_by_ordering(swap, parse_ordering_key("mu")) == c);

  const auto perms = ordering_permutations(c, parse_ordering_key("pi"));
  CHECK(perms[0] == std::vector<int>{0, 1});

  CHECK_THROWS_AS(ordering_permutations(c, parse_ordering_key("mu-dim-2")), std::invalid_argument);
  CHECK_THROWS_AS(apply_permutations(c, PermutationSequence(1, {0, 1})), std::invalid_argument);
}

TEST_CASE("ordering is exactly equivariant") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 20; ++t) {
    const MixtureChain c = oracle::random_chain(rng, 12, 5, 2 + t % 4, 2);
    const OrderingKey key = parse_ordering_key(t % 2 ? "mu-dim-2" : "pi");
    CHECK(relabel_by_ordering(oracle::scramble(c, rng), key) == relabel_by_ordering(c, key));
  }
}
