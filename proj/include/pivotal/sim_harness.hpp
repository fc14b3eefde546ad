#pragma once

// Simulation harness: the mixture-of-mixtures scenarios, conjugate Gibbs
// samplers for Gaussian mixtures, and the evaluation metrics used to compare
// relabelling methods.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pivotal/baselines.hpp"
#include "pivotal/chain_store.hpp"

namespace pivotal {

/// Four bivariate groups, each a two-part mixture sharing the group mean:
/// (Y | Z = g) ~ p_1 N(mu_g, s_1 I) + p_2 N(mu_g, s_2 I).
struct ScenarioSpec {
  char scenario = 'A';
  int units = 1000;
  Eigen::MatrixXd means;                  // G x 2
  std::vector<double> weights;            // pi_g
  std::vector<double> sub_weights;        // p_g1, p_g2
  std::vector<double> sub_cov_scales;     // Sigma_s = scale_s * I
};

/// Table of group means for scenarios A, B and C; weights 1/4, sub-weights
/// (0.2, 0.8), covariances I and 200 I.
ScenarioSpec scenario_spec(char scenario, int units = 1000);

struct LabeledSample {
  Dataset data;
  std::vector<int> true_labels;  // 1..G
  std::uint64_t seed = 0;
};

LabeledSample generate_scenario(const ScenarioSpec& spec, std::uint64_t seed);

/// Univariate Gaussian mixture used for the fishery-style pipeline.
struct UnivariateMixtureSpec {
  std::vector<double> means;
  std::vector<double> sds;
  std::vector<double> weights;
};

/// Five well separated length classes resembling a snapper length histogram.
UnivariateMixtureSpec fishery_like_spec();

LabeledSample generate_univariate(const UnivariateMixtureSpec& spec, int units, std::uint64_t seed);

/// Conjugate normal-inverse-gamma (d = 1) or normal-inverse-Wishart (d >= 2)
/// prior, shared by all components, plus a symmetric Dirichlet on the weights:
///   Sigma_g ~ IW(dof, scatter), mu_g | Sigma_g ~ N(mean, Sigma_g / mean_precision).
/// For d = 1 this is sigma^2 ~ IG(dof / 2, scatter / 2).
struct PriorSpec {
  std::vector<double> mean;   // d
  double mean_precision = 0.01;
  double dof = 4.0;
  std::vector<double> scatter;  // d x d row-major
  double dirichlet = 1.0;

  void validate(int dim) const;
};

/// Weakly informative default: prior mean = data mean, prior scatter = data
/// covariance scaled by (dof - d - 1) / G^2 so the prior mean covariance of one
/// component is the data covariance shrunk by the number of components.
PriorSpec default_prior(const Dataset& data, int components);

struct GibbsOptions {
  int components = 2;
  int iterations = 1000;  // total sweeps including burn-in
  int burnin = 0;
  bool permute_move = false;
  bool shared_covariance = false;  // one Sigma for all components
  std::uint64_t seed = 1;
  std::optional<PriorSpec> prior;
};

/// Gibbs sampler for y_i ~ sum_g pi_g N(mu_g, sigma_g^2); phi holds sigma_g^2,
/// or the single sigma^2 with shared_covariance.
MixtureChain gibbs_univariate(const Dataset& data, const GibbsOptions& options);

/// Gibbs sampler for y_i ~ sum_g pi_g N_d(mu_g, Sigma_g); phi holds Sigma_g
/// row-major, or the single Sigma with shared_covariance. With a shared Sigma
/// its prior is IW(dof, scatter) and mu_g | Sigma ~ N(mean, Sigma / mean_precision).
MixtureChain gibbs_multivariate(const Dataset& data, const GibbsOptions& options);

/// Dispatches on data dimension.
MixtureChain gibbs_sample(const Dataset& data, const GibbsOptions& options);

/// Closed-form posterior mean of mu for a single component under `prior`.
std::vector<double> conjugate_posterior_mean(const Dataset& data, const PriorSpec& prior);

/// ||mu_g - mu_hat_g|| per truth row after optimal matching of estimate rows to truth rows.
std::vector<double> component_mse(const Eigen::MatrixXd& estimates, const Eigen::MatrixXd& truth);

/// Fraction of consecutive iteration pairs whose component order by `key` differs.
double switch_rate(const MixtureChain& chain, OrderingKey key);

/// Coordinatewise posterior medians of the component means, G x d.
Eigen::MatrixXd estimate_component_means(const MixtureChain& chain);

/// CSV with columns y1..yd,true_label.
void write_labeled_sample_csv(const LabeledSample& sample, const std::filesystem::path& path);

/// Reads y1..yd[,true_label]; true_labels stays empty when the column is absent.
LabeledSample read_labeled_sample_csv(const std::filesystem::path& path);

}  // namespace pivotal
