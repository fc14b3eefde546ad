#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include <Eigen/Dense>

#include "oracles.hpp"
#include "pivotal/pivots.hpp"
#include "pivotal/random.hpp"
#include "pivotal/sim_harness.hpp"
#include "scratch.hpp"

using namespace pivotal;

namespace {

MixtureChain means_only(const std::vector<std::vector<double>>& mu) {
  const int G = static_cast<int>(mu[0].size());
  MixtureChain c(static_cast<int>(mu.size()), 1, G, 1);
  for (int h = 0; h < c.iterations(); ++h) {
    c.z(h, 0) = 1;
    for (int g = 0; g < G; ++g) {
      c.mu(h, g, 0) = mu[h][g];
      c.pi(h, g) = 1.0 / G;
    }
  }
  return c;
}

Eigen::MatrixXd rows(std::initializer_list<std::initializer_list<double>> r) {
  Eigen::MatrixXd m(static_cast<int>(r.size()), static_cast<int>(r.begin()->size()));
  int i = 0;
  for (const auto& row : r) {
    int k = 0;
    for (double v : row) m(i, k++) = v;
    ++i;
  }
  return m;
}

// Posterior of a single Gaussian under the normal-inverse-Wishart prior,
// written out directly: returns (posterior mean of mu, posterior mean of Sigma).
std::pair<Eigen::VectorXd, Eigen::MatrixXd> niw_posterior(const Dataset& y, const PriorSpec& prior) {
  const int d = y.dim();
  const double n = y.units();
  Eigen::VectorXd ybar = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < y.units(); ++i) {
    for (int k = 0; k < d; ++k) ybar(k) += y(i, k) / n;
  }
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < y.units(); ++i) {
    Eigen::VectorXd r(d);
    for (int k = 0; k < d; ++k) r(k) = y(i, k) - ybar(k);
    s += r * r.transpose();
  }
  const Eigen::Map<const Eigen::VectorXd> m0(prior.mean.data(), d);
  const Eigen::Map<const Eigen::MatrixXd> s0(prior.scatter.data(), d, d);
  const double k0 = prior.mean_precision;
  const Eigen::VectorXd mean = (k0 * m0 + n * ybar) / (k0 + n);
  const Eigen::MatrixXd sn = s0 + s + (k0 * n / (k0 + n)) * (ybar - m0) * (ybar - m0).transpose();
  return {mean, sn / (prior.dof + n - d - 1.0)};
}

}  // namespace

TEST_CASE("scenario means") {
  const ScenarioSpec a = scenario_spec('A');
  CHECK(a.means == rows({{25, 0}, {60, 0}, {0, 20}, {50, 20}}));
  CHECK(scenario_spec('B').means == rows({{-10, -10}, {20, -10}, {-10, 20}, {20, 20}}));
  CHECK(scenario_spec('C').means == rows({{-10, -10}, {20, -10}, {5, 5}, {5, 25}}));
  CHECK(a.weights == std::vector<double>(4, 0.25));
  CHECK(a.sub_weights == std::vector<double>{0.2, 0.8});
  CHECK(a.sub_cov_scales == std::vector<double>{1.0, 200.0});
  CHECK_THROWS_AS(scenario_spec('D'), std::invalid_argument);
}

TEST_CASE("scenario draws") {
  const LabeledSample s = generate_scenario(scenario_spec('A', 1000), 5);
  CHECK(s.data.units() == 1000);
  CHECK(s.data.dim() == 2);
  std::vector<int> count(4, 0);
  for (int l : s.true_labels) ++count[l - 1];
  const double sd = std::sqrt(1000 * 0.25 * 0.75);
  for (int c : count) CHECK(std::abs(c - 250) <= 4 * sd);

  const LabeledSample again = generate_scenario(scenario_spec('A', 1000), 5);
  CHECK(again.data == s.data);
  CHECK(again.true_labels == s.true_labels);
  CHECK_FALSE(generate_scenario(scenario_spec('A', 1000), 6).data == s.data);
}

TEST_CASE("group frequencies and within-group spread at n = 100000") {
  const LabeledSample s = generate_scenario(scenario_spec('B', 100000), 77);
  std::vector<double> count(4, 0.0);
  double spread = 0.0;
  const Eigen::MatrixXd means = scenario_spec('B').means;
  for (int i = 0; i < s.data.units(); ++i) {
    const int g = s.true_labels[i] - 1;
    ++count[g];
    for (int k = 0; k < 2; ++k) spread += std::pow(s.data(i, k) - means(g, k), 2);
  }
  double chi2 = 0.0;
  for (double c : count) chi2 += (c - 25000.0) * (c - 25000.0) / 25000.0;
  CHECK(chi2 < 30.66);  // 3 degrees of freedom, upper tail 1e-6
  // E ||y - mu_g||^2 = 2 (0.2 * 1 + 0.8 * 200)
  CHECK(spread / 100000 == doctest::Approx(2 * (0.2 + 160.0)).epsilon(0.02));
}

TEST_CASE("fishery-style data") {
  const LabeledSample s = generate_univariate(fishery_like_spec(), 256, 3);
  CHECK(s.data.units() == 256);
  CHECK(s.data.dim() == 1);
  for (int l : s.true_labels) CHECK((l >= 1 && l <= 5));
  CHECK_THROWS_AS(generate_univariate({{1.0}, {}, {1.0}}, 5, 1), std::invalid_argument);
}

TEST_CASE("labeled sample csv round trip") {
  ScratchDir dir("sim");
  const LabeledSample s = generate_scenario(scenario_spec('C', 50), 1);
  write_labeled_sample_csv(s, dir / "s.csv");
  const LabeledSample back = read_labeled_sample_csv(dir / "s.csv");
  CHECK(back.data == s.data);
  CHECK(back.true_labels == s.true_labels);

  spit(dir / "plain.csv", "y1\n1.5\n-2\n");
  const LabeledSample plain = read_labeled_sample_csv(dir / "plain.csv");
  CHECK(plain.data.units() == 2);
  CHECK(plain.true_labels.empty());

  spit(dir / "bad.csv", "y1,y2\n1,abc\n");
  CHECK_THROWS_AS(read_labeled_sample_csv(dir / "bad.csv"), std::runtime_error);
  spit(dir / "short.csv", "y1,y2\n1\n");
  CHECK_THROWS_AS(read_labeled_sample_csv(dir / "short.csv"), std::runtime_error);
}

TEST_CASE("prior checks") {
  const Dataset y(3, 1, {1.0, 2.0, 4.0});
  const PriorSpec p = default_prior(y, 2);
  CHECK_NOTHROW(p.validate(1));
  CHECK(p.mean[0] == doctest::Approx(7.0 / 3.0));
  PriorSpec bad = p;
  bad.mean_precision = 0.0;
  CHECK_THROWS_AS(bad.validate(1), std::invalid_argument);
  bad = p;
  bad.scatter = {-1.0};
  CHECK_THROWS_AS(bad.validate(1), std::invalid_argument);
  CHECK_THROWS_AS(p.validate(2), std::invalid_argument);
}

TEST_CASE("sampler argument checks") {
  const Dataset y(3, 1, {1.0, 2.0, 4.0});
  GibbsOptions o;
  o.components = 1;
  o.iterations = 10;
  o.burnin = 10;
  CHECK_THROWS_AS(gibbs_univariate(y, o), std::invalid_argument);
  o.burnin = 2;
  o.components = 4;
  CHECK_THROWS_AS(gibbs_univariate(y, o), std::invalid_argument);
  o.components = 2;
  CHECK_THROWS_AS(gibbs_multivariate(y, o), std::invalid_argument);
  const MixtureChain c = gibbs_univariate(y, o);
  CHECK(c.iterations() == 8);
}

TEST_CASE("single-component posterior matches the conjugate closed form") {
  for (int d : {1, 2}) {
    for (bool shared : {false, true}) {
      CAPTURE(d);
      CAPTURE(shared);
      Rng rng(100 + d);
      Dataset y(40, d);
      for (int i = 0; i < 40; ++i) {
        for (int k = 0; k < d; ++k) y(i, k) = 3.0 + 2.0 * k + 1.5 * rng.normal();
      }
      PriorSpec prior;
      prior.mean.assign(d, -4.0);
      prior.mean_precision = 6.0;
      prior.dof = d + 4.0;
      prior.scatter.assign(static_cast<std::size_t>(d) * d, 0.0);
      for (int k = 0; k < d; ++k) prior.scatter[static_cast<std::size_t>(k) * d + k] = 3.0;

      GibbsOptions o;
      o.components = 1;
      o.iterations = 8000;
      o.burnin = 200;
      o.shared_covariance = shared;
      o.seed = 9;
      o.prior = prior;
      const MixtureChain c = gibbs_sample(y, o);
      CHECK(validate_chain(c).empty());

      const auto [mean, sigma] = niw_posterior(y, prior);
      const auto closed = conjugate_posterior_mean(y, prior);
      for (int k = 0; k < d; ++k) {
        CHECK(closed[k] == doctest::Approx(mean(k)).epsilon(1e-12));
        double m = 0.0, m2 = 0.0, s = 0.0;
        const int H = c.iterations();
        for (int h = 0; h < H; ++h) {
          m += c.mu(h, 0, k) / H;
          m2 += c.mu(h, 0, k) * c.mu(h, 0, k) / H;
          s += c.phi(h, k * d + k) / H;
        }
        const double se = std::sqrt((m2 - m * m) / H);
        CHECK(std::abs(m - mean(k)) <= 3 * se);
        CHECK(s == doctest::Approx(sigma(k, k)).epsilon(0.05));
      }
    }
  }
}

TEST_CASE("sampler output is a valid chain and the permutation move switches labels") {
  const LabeledSample s = generate_univariate(fishery_like_spec(), 200, 4);
  GibbsOptions o;
  o.components = 5;
  o.iterations = 600;
  o.burnin = 100;
  o.seed = 5;
  o.permute_move = false;
  const MixtureChain still = gibbs_univariate(s.data, o);
  CHECK(validate_chain(still).empty());
  CHECK(still.phi_size() == 5);
  CHECK(still.meta.phi_per_component == 1);
  CHECK(switch_rate(still, parse_ordering_key("mu")) < 0.05);

  o.permute_move = true;
  const MixtureChain moving = gibbs_univariate(s.data, o);
  CHECK(validate_chain(moving).empty());
  CHECK(switch_rate(moving, parse_ordering_key("mu")) > 0.5);

  const SimilarityMatrix sim = estimate_similarity(moving);
  Rng rng(3);
  CHECK(estimate_similarity(oracle::scramble(moving, rng.engine())) == sim);
  const Partition part = hclust_complete(dissimilarity(sim), 5).partition;
  const RelabelResult r = pivotal_relabel(moving, select_pivots_criterion(sim, part, Criterion::b), 5);
  CHECK(switch_rate(r.chain, parse_ordering_key("mu")) == 0.0);
}

TEST_CASE("bivariate sampler layouts") {
  const LabeledSample s = generate_scenario(scenario_spec('B', 120), 8);
  GibbsOptions o;
  o.components = 4;
  o.iterations = 150;
  o.burnin = 50;
  o.permute_move = true;
  for (bool shared : {false, true}) {
    o.shared_covariance = shared;
    const MixtureChain c = gibbs_multivariate(s.data, o);
    CHECK(validate_chain(c).empty());
    CHECK(c.iterations() == 100);
    CHECK(c.phi_size() == (shared ? 4 : 16));
    CHECK(c.meta.phi_per_component == (shared ? 0 : 4));
    CHECK(c == gibbs_multivariate(s.data, o));
  }
}

TEST_CASE("component mse") {
  const Eigen::MatrixXd truth = rows({{0, 0}, {10, 0}});
  CHECK(component_mse(truth, truth) == std::vector<double>{0, 0});
  CHECK(component_mse(rows({{10, 0}, {0, 0}}), truth) == std::vector<double>{0, 0});
  CHECK(component_mse(rows({{3, 4}}), rows({{0, 0}})) == std::vector<double>{5.0});
  CHECK_THROWS_AS(component_mse(rows({{3, 4}}), truth), std::invalid_argument);

  std::mt19937_64 rng(6);
  std::normal_distribution<double> N(0.0, 5.0);
  Eigen::MatrixXd t(4, 2), e(4, 2);
  for (int g = 0; g < 4; ++g) {
    for (int k = 0; k < 2; ++k) {
      t(g, k) = N(rng);
      e(g, k) = N(rng);
    }
  }
  const auto base = component_mse(e, t);
  Eigen::MatrixXd shuffled = e;
  shuffled.row(0) = e.row(2);
  shuffled.row(2) = e.row(3);
  shuffled.row(3) = e.row(0);
  CHECK(component_mse(shuffled, t) == base);
  // Matching minimizes the total distance.
  const auto best = oracle::brute_force_assignment([&](int a, int b) { return (t.row(a) - e.row(b)).norm(); }, 4);
  double total = 0.0, oracle_total = 0.0;
  for (int g = 0; g < 4; ++g) {
    total += base[g];
    oracle_total += (t.row(g) - e.row(best[g])).norm();
  }
  CHECK(total == doctest::Approx(oracle_total));
}

TEST_CASE("switch rate") {
  const OrderingKey mu = parse_ordering_key("mu");
  CHECK(switch_rate(means_only({{1, 2}, {1, 2}, {1, 2}}), mu) == 0.0);
  CHECK(switch_rate(means_only({{1, 2}, {2, 1}, {1, 2}, {2, 1}}), mu) == 1.0);
  CHECK(switch_rate(means_only({{1, 2}, {2, 1}, {2, 1}}), mu) == 0.5);
  CHECK_THROWS_AS(switch_rate(means_only({{1, 2}}), mu), std::invalid_argument);
}

TEST_CASE("posterior medians") {
  const Eigen::MatrixXd constant = estimate_component_means(means_only({{4, 7}, {4, 7}}));
  CHECK(constant == rows({{4}, {7}}));
  CHECK(estimate_component_means(means_only({{3}, {1}, {2}}))(0, 0) == 2.0);
  CHECK(estimate_component_means(means_only({{3}, {1}, {2}, {10}}))(0, 0) == 2.5);
  CHECK(estimate_component_means(means_only({{3}, {1}, {2}, {3}, {1}, {2}}))(0, 0) == 2.0);
  CHECK_THROWS_AS(estimate_component_means(MixtureChain(0, 1, 1, 1)), std::invalid_argument);
}
