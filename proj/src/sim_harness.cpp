#include "pivotal/sim_harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <fmt/format.h>

#include "pivotal/assignment.hpp"
#include "pivotal/random.hpp"

namespace pivotal {

ScenarioSpec scenario_spec(char scenario, int units) {
  ScenarioSpec spec;
  spec.scenario = scenario;
  spec.units = units;
  spec.means.resize(4, 2);
  switch (scenario) {
    case 'A':
      spec.means << 25, 0, 60, 0, 0, 20, 50, 20;
      break;
    case 'B':
      spec.means << -10, -10, 20, -10, -10, 20, 20, 20;
      break;
    case 'C':
      spec.means << -10, -10, 20, -10, 5, 5, 5, 25;
      break;
    default:
      throw std::invalid_argument(fmt::format("unknown scenario '{}' (expected A, B or C)", scenario));
  }
  spec.weights.assign(4, 0.25);
  spec.sub_weights = {0.2, 0.8};
  spec.sub_cov_scales = {1.0, 200.0};
  return spec;
}

LabeledSample generate_scenario(const ScenarioSpec& spec, std::uint64_t seed) {
  if (spec.units < 1) throw std::invalid_argument("generate_scenario: n must be >= 1");
  const int d = static_cast<int>(spec.means.cols());
  Rng rng(seed);
  LabeledSample sample{Dataset(spec.units, d), std::vector<int>(spec.units), seed};
  for (int i = 0; i < spec.units; ++i) {
    const int g = rng.categorical(spec.weights);
    const int s = rng.categorical(spec.sub_weights);
    const double sd = std::sqrt(spec.sub_cov_scales[s]);
    for (int k = 0; k < d; ++k) sample.data(i, k) = spec.means(g, k) + sd * rng.normal();
    sample.true_labels[i] = g + 1;
  }
  return sample;
}

UnivariateMixtureSpec fishery_like_spec() {
  return {{3.3, 5.2, 7.3, 9.8, 12.6}, {0.3, 0.4, 0.5, 0.55, 0.7}, {0.12, 0.45, 0.18, 0.15, 0.10}};
}

LabeledSample generate_univariate(const UnivariateMixtureSpec& spec, int units, std::uint64_t seed) {
  if (spec.means.size() != spec.sds.size() || spec.means.size() != spec.weights.size() || spec.means.empty()) {
    throw std::invalid_argument("generate_univariate: means, sds and weights must have equal nonzero length");
  }
  Rng rng(seed);
  LabeledSample sample{Dataset(units, 1), std::vector<int>(units), seed};
  for (int i = 0; i < units; ++i) {
    const int g = rng.categorical(spec.weights);
    sample.data(i, 0) = spec.means[g] + spec.sds[g] * rng.normal();
    sample.true_labels[i] = g + 1;
  }
  return sample;
}

void PriorSpec::validate(int dim) const {
  if (static_cast<int>(mean.size()) != dim) throw std::invalid_argument("prior: mean has wrong dimension");
  if (static_cast<int>(scatter.size()) != dim * dim) throw std::invalid_argument("prior: scatter has wrong dimension");
  if (!(mean_precision > 0.0)) throw std::invalid_argument("prior: mean precision must be positive");
  if (!(dof > dim - 1.0)) throw std::invalid_argument("prior: degrees of freedom must exceed d - 1");
  if (!(dirichlet > 0.0)) throw std::invalid_argument("prior: Dirichlet concentration must be positive");
  Eigen::Map<const Eigen::MatrixXd> s(scatter.data(), dim, dim);
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("prior: scatter must be positive definite");
}

namespace {

Eigen::MatrixXd as_matrix(const Dataset& data) {
  Eigen::MatrixXd y(data.units(), data.dim());
  for (int i = 0; i < data.units(); ++i) {
    for (int k = 0; k < data.dim(); ++k) y(i, k) = data(i, k);
  }
  return y;
}

}  // namespace

PriorSpec default_prior(const Dataset& data, int components) {
  data.validate();
  const int d = data.dim();
  const Eigen::MatrixXd y = as_matrix(data);
  const Eigen::RowVectorXd mean = y.colwise().mean();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(d, d);
  if (data.units() > 1) {
    const Eigen::MatrixXd centered = y.rowwise() - mean;
    cov = centered.transpose() * centered / (data.units() - 1.0);
  }
  // Degenerate data (constant coordinate) would give a singular scatter.
  for (int k = 0; k < d; ++k) cov(k, k) = std::max(cov(k, k), 1e-6);

  PriorSpec prior;
  prior.mean.assign(mean.data(), mean.data() + d);
  prior.mean_precision = 0.01;
  prior.dof = d + 3.0;
  const double shrink = (prior.dof - d - 1.0) / (static_cast<double>(components) * components);
  prior.scatter.resize(static_cast<std::size_t>(d) * d);
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) prior.scatter[static_cast<std::size_t>(a) * d + b] = cov(a, b) * shrink;
  }
  prior.dirichlet = 1.0;
  return prior;
}

namespace {

// One k-means run: k-means++ seeding followed by Lloyd steps. Returns the
// allocations and their within-cluster sum of squares.
std::pair<std::vector<int>, double> kmeans_once(const Eigen::MatrixXd& y, int G, Rng& rng) {
  const int n = static_cast<int>(y.rows());
  Eigen::MatrixXd centers(G, y.cols());
  centers.row(0) = y.row(static_cast<int>(rng.uniform() * n) % n);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  for (int g = 1; g < G; ++g) {
    for (int i = 0; i < n; ++i) dist[i] = std::min(dist[i], (y.row(i) - centers.row(g - 1)).squaredNorm());
    double total = 0.0;
    for (double v : dist) total += v;
    const int pick = total > 0.0 ? rng.categorical(dist) : static_cast<int>(rng.uniform() * n) % n;
    centers.row(g) = y.row(pick);
  }
  std::vector<int> z(n, 0);
  for (int step = 0; step < 20; ++step) {
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int g = 0; g < G; ++g) {
        const double dd = (y.row(i) - centers.row(g)).squaredNorm();
        if (dd < best_d) {
          best_d = dd;
          best = g;
        }
      }
      z[i] = best;
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(G, y.cols());
    std::vector<int> counts(G, 0);
    for (int i = 0; i < n; ++i) {
      sums.row(z[i]) += y.row(i);
      ++counts[z[i]];
    }
    for (int g = 0; g < G; ++g) {
      if (counts[g] > 0) centers.row(g) = sums.row(g) / counts[g];
    }
  }
  double sse = 0.0;
  for (int i = 0; i < n; ++i) sse += (y.row(i) - centers.row(z[i])).squaredNorm();
  return {std::move(z), sse};
}

// Initial allocations: best of several k-means runs.
std::vector<int> initial_allocations(const Eigen::MatrixXd& y, int G, Rng& rng) {
  constexpr int kRestarts = 10;
  auto best = kmeans_once(y, G, rng);
  for (int r = 1; r < kRestarts; ++r) {
    auto next = kmeans_once(y, G, rng);
    if (next.second < best.second) best = std::move(next);
  }
  return best.first;
}

// Normal-inverse-Wishart update for the members of one component: posterior
// location and precision of mu, and the data part of the scatter (the prior
// scatter itself is not included).
struct NiwUpdate {
  Eigen::VectorXd mean;
  double kappa = 0.0;
  double count = 0.0;
  Eigen::MatrixXd scatter;
};

NiwUpdate niw_update(const Eigen::MatrixXd& y, const std::vector<int>& members, const PriorSpec& prior) {
  const int d = static_cast<int>(y.cols());
  const Eigen::Map<const Eigen::VectorXd> m0(prior.mean.data(), d);
  NiwUpdate u;
  u.count = static_cast<double>(members.size());
  u.scatter = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd ybar = Eigen::VectorXd::Zero(d);
  for (int i : members) ybar += y.row(i).transpose();
  if (u.count > 0) {
    ybar /= u.count;
    for (int i : members) {
      const Eigen::VectorXd r = y.row(i).transpose() - ybar;
      u.scatter.noalias() += r * r.transpose();
    }
    const Eigen::VectorXd shift = ybar - m0;
    u.scatter.noalias() += (prior.mean_precision * u.count / (prior.mean_precision + u.count)) * shift * shift.transpose();
  }
  u.kappa = prior.mean_precision + u.count;
  u.mean = (prior.mean_precision * m0 + u.count * ybar) / u.kappa;
  return u;
}

// Sigma ~ IW(dof, scatter), via Sigma^{-1} ~ Wishart(dof, scatter^{-1}) and the
// Bartlett decomposition.
Eigen::MatrixXd draw_inverse_wishart(double dof, const Eigen::MatrixXd& scatter, Rng& rng) {
  const int d = static_cast<int>(scatter.rows());
  const Eigen::MatrixXd scatter_inv = scatter.inverse();
  const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(0.5 * (scatter_inv + scatter_inv.transpose())).matrixL();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
  for (int k = 0; k < d; ++k) {
    A(k, k) = std::sqrt(rng.chi_squared(dof - k));
    for (int l = 0; l < k; ++l) A(k, l) = rng.normal();
  }
  const Eigen::MatrixXd LA = L * A;
  Eigen::MatrixXd sigma = (LA * LA.transpose()).inverse();
  return 0.5 * (sigma + sigma.transpose());
}

Eigen::VectorXd draw_mean(const NiwUpdate& u, const Eigen::MatrixXd& sigma, Rng& rng) {
  const int d = static_cast<int>(sigma.rows());
  const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(sigma / u.kappa).matrixL();
  Eigen::VectorXd eps(d);
  for (int k = 0; k < d; ++k) eps(k) = rng.normal();
  return u.mean + chol * eps;
}

void check_sampler_inputs(const Dataset& data, const GibbsOptions& options) {
  data.validate();
  if (options.components < 1) throw std::invalid_argument("gibbs: G must be >= 1");
  if (options.components > data.units()) {
    throw std::invalid_argument(fmt::format("gibbs: G={} exceeds n={}", options.components, data.units()));
  }
  if (options.burnin < 0) throw std::invalid_argument("gibbs: burn-in must be >= 0");
  if (options.iterations <= options.burnin) {
    throw std::invalid_argument(fmt::format("gibbs: iterations ({}) must exceed burn-in ({})", options.iterations,
                                            options.burnin));
  }
}

// Shared Gibbs cycle; the univariate and multivariate samplers differ only in
// how densities and draws are computed, which the NIW code handles for any d.
MixtureChain run_gibbs(const Dataset& data, const GibbsOptions& options, const char* sampler_id) {
  check_sampler_inputs(data, options);
  const int n = data.units();
  const int d = data.dim();
  const int G = options.components;
  const PriorSpec prior = options.prior ? *options.prior : default_prior(data, G);
  prior.validate(d);

  const Eigen::MatrixXd y = as_matrix(data);
  Rng rng(options.seed);
  std::vector<int> z = initial_allocations(y, G, rng);

  std::vector<Eigen::VectorXd> mu(G, Eigen::VectorXd::Zero(d));
  std::vector<Eigen::MatrixXd> sigma(G, Eigen::MatrixXd::Identity(d, d));
  std::vector<double> pi(G, 1.0 / G);
  std::vector<std::vector<int>> members(G);

  const int kept = options.iterations - options.burnin;
  const int phi_block = d * d;
  const int phi_size = options.shared_covariance ? phi_block : G * phi_block;
  MixtureChain chain(kept, n, G, d, phi_size);
  chain.meta.seed = options.seed;
  chain.meta.sampler = sampler_id;
  chain.meta.burnin_removed = true;
  chain.meta.phi_per_component = options.shared_covariance ? 0 : phi_block;

  const double log_2pi = std::log(2.0 * std::numbers::pi);
  std::vector<double> alpha(G);
  std::vector<double> logw(G);
  std::vector<Eigen::MatrixXd> chol_inv(G);
  std::vector<double> log_norm(G);

  auto update_parameters = [&] {
    for (auto& m : members) m.clear();
    for (int i = 0; i < n; ++i) members[z[i]].push_back(i);
    for (int g = 0; g < G; ++g) alpha[g] = prior.dirichlet + static_cast<double>(members[g].size());
    pi = rng.dirichlet(alpha);
    const Eigen::Map<const Eigen::MatrixXd> s0(prior.scatter.data(), d, d);
    if (options.shared_covariance) {
      // Sigma | z is inverse-Wishart once the means are integrated out.
      std::vector<NiwUpdate> updates;
      Eigen::MatrixXd scatter = s0;
      for (int g = 0; g < G; ++g) {
        updates.push_back(niw_update(y, members[g], prior));
        scatter += updates.back().scatter;
      }
      const Eigen::MatrixXd shared = draw_inverse_wishart(prior.dof + n, scatter, rng);
      for (int g = 0; g < G; ++g) {
        sigma[g] = shared;
        mu[g] = draw_mean(updates[g], shared, rng);
      }
    } else {
      for (int g = 0; g < G; ++g) {
        const NiwUpdate u = niw_update(y, members[g], prior);
        sigma[g] = draw_inverse_wishart(prior.dof + u.count, s0 + u.scatter, rng);
        mu[g] = draw_mean(u, sigma[g], rng);
      }
    }
  };

  update_parameters();
  for (int sweep = 0; sweep < options.iterations; ++sweep) {
    // Allocations given parameters.
    for (int g = 0; g < G; ++g) {
      const Eigen::LLT<Eigen::MatrixXd> llt(sigma[g]);
      const Eigen::MatrixXd L = llt.matrixL();
      chol_inv[g] = L.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(d, d));
      log_norm[g] = std::log(std::max(pi[g], 1e-300)) - 0.5 * d * log_2pi - L.diagonal().array().log().sum();
    }
    for (int i = 0; i < n; ++i) {
      for (int g = 0; g < G; ++g) {
        const Eigen::VectorXd r = chol_inv[g] * (y.row(i).transpose() - mu[g]);
        logw[g] = log_norm[g] - 0.5 * r.squaredNorm();
      }
      z[i] = G == 1 ? 0 : rng.categorical_log(logw);
    }
    // Weights, then means and covariances, given allocations.
    update_parameters();

    if (options.permute_move && G > 1) {
      // Exact move: the posterior is invariant under relabelling.
      const std::vector<int> perm = rng.permutation(G);  // new component g takes old perm[g]
      std::vector<int> to_new(G);
      for (int g = 0; g < G; ++g) to_new[perm[g]] = g;
      for (int& label : z) label = to_new[label];
      std::vector<Eigen::VectorXd> mu2(G);
      std::vector<Eigen::MatrixXd> sigma2(G);
      std::vector<double> pi2(G);
      for (int g = 0; g < G; ++g) {
        mu2[g] = mu[perm[g]];
        sigma2[g] = sigma[perm[g]];
        pi2[g] = pi[perm[g]];
      }
      mu.swap(mu2);
      sigma.swap(sigma2);
      pi.swap(pi2);
    }

    if (sweep >= options.burnin) {
      const int h = sweep - options.burnin;
      for (int i = 0; i < n; ++i) chain.z(h, i) = z[i] + 1;
      for (int g = 0; g < G; ++g) {
        for (int k = 0; k < d; ++k) chain.mu(h, g, k) = mu[g](k);
        chain.pi(h, g) = pi[g];
      }
      const int blocks = options.shared_covariance ? 1 : G;
      for (int g = 0; g < blocks; ++g) {
        for (int a = 0; a < d; ++a) {
          for (int b = 0; b < d; ++b) chain.phi(h, g * phi_block + a * d + b) = sigma[g](a, b);
        }
      }
    }
  }
  return chain;
}

}  // namespace

MixtureChain gibbs_univariate(const Dataset& data, const GibbsOptions& options) {
  if (data.dim() != 1) throw std::invalid_argument("gibbs_univariate: data must be one-dimensional");
  return run_gibbs(data, options, "gibbs-univariate");
}

MixtureChain gibbs_multivariate(const Dataset& data, const GibbsOptions& options) {
  if (data.dim() < 2) throw std::invalid_argument("gibbs_multivariate: data must have d >= 2");
  return run_gibbs(data, options, "gibbs-multivariate");
}

MixtureChain gibbs_sample(const Dataset& data, const GibbsOptions& options) {
  return data.dim() == 1 ? gibbs_univariate(data, options) : gibbs_multivariate(data, options);
}

std::vector<double> conjugate_posterior_mean(const Dataset& data, const PriorSpec& prior) {
  prior.validate(data.dim());
  const double n = data.units();
  std::vector<double> out(data.dim());
  for (int k = 0; k < data.dim(); ++k) {
    double sum = 0.0;
    for (int i = 0; i < data.units(); ++i) sum += data(i, k);
    out[k] = (prior.mean_precision * prior.mean[k] + sum) / (prior.mean_precision + n);
  }
  return out;
}

std::vector<double> component_mse(const Eigen::MatrixXd& estimates, const Eigen::MatrixXd& truth) {
  if (estimates.rows() != truth.rows()) {
    throw std::invalid_argument(fmt::format("component_mse: {} estimated components for {} true components",
                                            estimates.rows(), truth.rows()));
  }
  if (estimates.cols() != truth.cols()) throw std::invalid_argument("component_mse: dimension mismatch");
  const int G = static_cast<int>(truth.rows());
  Eigen::MatrixXd cost(G, G);
  for (int t = 0; t < G; ++t) {
    for (int e = 0; e < G; ++e) cost(t, e) = (truth.row(t) - estimates.row(e)).norm();
  }
  const std::vector<int> match = solve_assignment(cost);
  std::vector<double> out(G);
  for (int t = 0; t < G; ++t) out[t] = cost(t, match[t]);
  return out;
}

double switch_rate(const MixtureChain& chain, OrderingKey key) {
  if (chain.iterations() < 2) throw std::invalid_argument("switch_rate: needs at least two iterations");
  const PermutationSequence order = ordering_permutations(chain, key);
  int switches = 0;
  for (int h = 1; h < chain.iterations(); ++h) {
    if (order[h] != order[h - 1]) ++switches;
  }
  return static_cast<double>(switches) / (chain.iterations() - 1);
}

Eigen::MatrixXd estimate_component_means(const MixtureChain& chain) {
  const int H = chain.iterations();
  if (H < 1) throw std::invalid_argument("estimate_component_means: empty chain");
  Eigen::MatrixXd out(chain.components(), chain.dim());
  std::vector<double> values(H);
  for (int g = 0; g < chain.components(); ++g) {
    for (int k = 0; k < chain.dim(); ++k) {
      for (int h = 0; h < H; ++h) values[h] = chain.mu(h, g, k);
      const auto mid = values.begin() + H / 2;
      std::nth_element(values.begin(), mid, values.end());
      double median = *mid;
      if (H % 2 == 0) median = 0.5 * (median + *std::max_element(values.begin(), mid));
      out(g, k) = median;
    }
  }
  return out;
}

void write_labeled_sample_csv(const LabeledSample& sample, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  const int d = sample.data.dim();
  for (int k = 0; k < d; ++k) out << 'y' << k + 1 << ',';
  out << "true_label\n";
  for (int i = 0; i < sample.data.units(); ++i) {
    for (int k = 0; k < d; ++k) out << format_real(sample.data(i, k)) << ',';
    out << (sample.true_labels.empty() ? 0 : sample.true_labels[i]) << '\n';
  }
}

LabeledSample read_labeled_sample_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open data file '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(fmt::format("data file '{}' is empty", path.string()));

  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      cells.push_back(cell);
    }
    return cells;
  };
  const auto header = split(line);
  int dim = 0;
  bool labelled = false;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == fmt::format("y{}", dim + 1) && !labelled) {
      ++dim;
    } else if (header[c] == "true_label" && c + 1 == header.size()) {
      labelled = true;
    } else {
      throw std::runtime_error(fmt::format("data file '{}': unexpected column '{}'", path.string(), header[c]));
    }
  }
  if (dim == 0) throw std::runtime_error(fmt::format("data file '{}': no y columns", path.string()));

  std::vector<double> values;
  std::vector<int> labels;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error(fmt::format("data file '{}': row {} has {} cells, expected {}", path.string(), row,
                                           cells.size(), header.size()));
    }
    for (int k = 0; k < dim; ++k) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cells[k], &used));
        if (used != cells[k].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw std::runtime_error(fmt::format("data file '{}': row {} column y{} is not a number", path.string(), row, k + 1));
      }
    }
    if (labelled) labels.push_back(std::stoi(cells[dim]));
  }
  LabeledSample sample{Dataset(row, dim, std::move(values)), std::move(labels), 0};
  sample.data.validate();
  return sample;
}

}  // namespace pivotal
