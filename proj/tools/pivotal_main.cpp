// pivotal: command-line front end.
//
//   pivotal simulate  --scenario B --n 500 --seed 7 --out run/
//   pivotal sample    --data run/sample.csv --G 4 --iters 1500 --burnin 300 --out run/
//   pivotal relabel   --chain run/chain.ndjson --criterion b --out run/
//   pivotal baseline  --chain run/chain.ndjson --data run/sample.csv --baseline stephens --out run/
//   pivotal metrics   --chain run/relabelled.ndjson --scenario B --out run/
//   pivotal pipeline  --scenario B --n 500 --iters 1500 --reps 10 --out run/
//   pivotal compare   --scenario B --baseline pk --baseline stephens --out run/
//
// Exit codes: 0 success, 1 configuration or runtime error, 2 no valid iterations.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "pivotal/pipeline.hpp"

namespace fs = std::filesystem;
using namespace pivotal;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitNoValid = 2;

struct Common {
  std::string scenario;
  std::string data;
  std::string chain;
  std::string out = "out";
  int units = 1000;
  int components = 4;
  int groups = 0;
  int iterations = 3000;
  int burnin = 500;
  bool no_permute = false;
  std::string covariance = "auto";
  std::uint64_t seed = 1;
  std::string criterion = "b";
  int mus_candidates = 5;
  double mus_eps = 0.0;
  std::string linkage = "complete";
  std::vector<std::string> baselines;
  std::string ordering_key = "mu";
  int replications = 1;
  bool normalize_q = false;
};

PipelineConfig to_config(const Common& c) {
  PipelineConfig config;
  if (!c.scenario.empty()) config.scenario = c.scenario;
  if (!c.data.empty()) config.data_path = c.data;
  config.units = c.units;
  config.components = c.components;
  config.groups = c.groups;
  config.iterations = c.iterations;
  config.burnin = c.burnin;
  config.permute_move = !c.no_permute;
  config.covariance = c.covariance;
  config.seed = c.seed;
  config.criterion = c.criterion;
  config.mus_candidates = c.mus_candidates;
  config.mus_eps = c.mus_eps;
  config.linkage = c.linkage;
  config.baselines = c.baselines;
  config.ordering_key = c.ordering_key;
  config.out_dir = c.out;
  config.replications = c.replications;
  config.normalize_q = c.normalize_q;
  config.threads = threads_from_env(1);
  return config;
}

void add_input(CLI::App* app, Common& c) {
  app->add_option("--scenario", c.scenario, "simulation scenario: A, B, C or fishery");
  app->add_option("--data", c.data, "CSV with columns y1..yd[,true_label]");
}

void add_sampler(CLI::App* app, Common& c) {
  app->add_option("--n", c.units, "sample size for simulated data");
  app->add_option("--G", c.components, "number of mixture components");
  app->add_option("--iters", c.iterations, "total Gibbs sweeps, burn-in included");
  app->add_option("--burnin", c.burnin, "sweeps discarded before storing");
  app->add_flag("--no-permute", c.no_permute, "disable the random permutation move");
  app->add_option("--covariance", c.covariance, "auto, shared or component (auto: shared when d >= 2)");
}

void add_pivotal(CLI::App* app, Common& c) {
  app->add_option("--G-hat", c.groups, "number of groups in the reference partition (default: G)");
  app->add_option("--criterion", c.criterion, "pivot criterion: a, b, c, d, e, f or mus");
  app->add_option("--mus-M", c.mus_candidates, "MUS candidates per group");
  app->add_option("--mus-eps", c.mus_eps, "MUS zero threshold");
  app->add_option("--linkage", c.linkage, "hierarchical clustering linkage");
  app->add_flag("--normalize-q", c.normalize_q, "divide group probabilities by |H0| instead of H");
}

void check_positive(int value, const char* flag) {
  if (value < 1) throw ConfigError(fmt::format("{} must be positive", flag));
}

void ensure_dir(const fs::path& dir) { fs::create_directories(dir); }

int cmd_simulate(const Common& c) {
  if (c.scenario.empty()) throw ConfigError("simulate needs --scenario");
  PipelineConfig config = to_config(c);
  config.data_path.reset();
  config.iterations = 2;
  config.burnin = 0;
  validate_config(config);
  const StageSeeds seeds = stage_seeds(c.seed, 0);
  LabeledSample sample;
  if (c.scenario == "fishery") {
    sample = generate_univariate(fishery_like_spec(), c.units, seeds.data);
  } else {
    sample = generate_scenario(scenario_spec(c.scenario.front(), c.units), seeds.data);
  }
  ensure_dir(c.out);
  write_labeled_sample_csv(sample, fs::path(c.out) / "sample.csv");
  fmt::print("wrote {} units to {}\n", sample.data.units(), (fs::path(c.out) / "sample.csv").string());
  return 0;
}

int cmd_sample(const Common& c) {
  if (c.data.empty()) throw ConfigError("sample needs --data");
  if (!fs::exists(c.data)) throw ConfigError(fmt::format("data file '{}' does not exist", c.data));
  check_positive(c.components, "--G");
  check_positive(c.iterations, "--iters");
  if (c.burnin < 0 || c.burnin >= c.iterations) throw ConfigError("--burnin must be in [0, --iters)");
  const LabeledSample sample = read_labeled_sample_csv(c.data);
  GibbsOptions options;
  options.components = c.components;
  options.iterations = c.iterations;
  options.burnin = c.burnin;
  options.permute_move = !c.no_permute;
  if (c.covariance != "auto" && c.covariance != "shared" && c.covariance != "component") {
    throw ConfigError(fmt::format("unknown covariance '{}'", c.covariance));
  }
  options.shared_covariance = c.covariance == "shared" || (c.covariance == "auto" && sample.data.dim() >= 2);
  options.seed = stage_seeds(c.seed, 0).sampler;
  const MixtureChain chain = gibbs_sample(sample.data, options);
  ensure_dir(c.out);
  save_chain(chain, fs::path(c.out) / "chain.ndjson");
  fmt::print("wrote {} iterations to {}\n", chain.iterations(), (fs::path(c.out) / "chain.ndjson").string());
  return 0;
}

int cmd_relabel(const Common& c) {
  if (c.chain.empty()) throw ConfigError("relabel needs --chain");
  if (!fs::exists(c.chain)) throw ConfigError(fmt::format("chain file '{}' does not exist", c.chain));
  Criterion criterion;
  Linkage linkage;
  try {
    criterion = parse_criterion(c.criterion);
    linkage = parse_linkage(c.linkage);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const MixtureChain chain = load_chain(c.chain);
  const int groups = c.groups > 0 ? c.groups : chain.components();
  if (criterion == Criterion::mus && groups > kMusMaxGroups) {
    throw ConfigError(fmt::format("MUS capped at G_hat <= {} (got {})", kMusMaxGroups, groups));
  }
  const SimilarityMatrix sim = estimate_similarity(chain);
  const Clustering clustering = hclust(dissimilarity(sim), groups, linkage);
  const PivotSet pivots = select_pivots(sim, clustering.partition, criterion, c.mus_candidates, c.mus_eps);
  const RelabelResult result = pivotal_relabel(chain, pivots, groups);
  const fs::path out(c.out);
  ensure_dir(out);
  save_chain(result.chain, out / "relabelled.ndjson");
  write_relabel_report(result, out / "relabelled.report.json");
  write_partition_csv(clustering.partition, out / "partition.csv");
  write_group_probs_csv(relabelled_group_probs(result, c.normalize_q), out / "group_probs.csv");
  fmt::print("kept {} of {} iterations ({:.4f})\n", result.filter.kept.size(), chain.iterations(), result.kept_proportion);
  return 0;
}

int cmd_baseline(const Common& c) {
  if (c.chain.empty()) throw ConfigError("baseline needs --chain");
  if (c.baselines.empty()) throw ConfigError("baseline needs --baseline");
  const MixtureChain chain = load_chain(c.chain);
  const fs::path out(c.out);
  ensure_dir(out);
  for (const auto& tag : c.baselines) {
    MixtureChain relabelled;
    if (tag == "pk") {
      EMOptions options;
      options.seed = stage_seeds(c.seed, 0).em;
      relabelled = pk_relabel(chain, pk_em(chain, options));
    } else if (tag == "stephens") {
      if (c.data.empty()) throw ConfigError("stephens needs --data for the classification probabilities");
      const LabeledSample sample = read_labeled_sample_csv(c.data);
      const ModelFamily family =
          sample.data.dim() == 1 ? ModelFamily::univariate_gaussian : ModelFamily::multivariate_gaussian;
      relabelled = apply_permutations(chain, stephens_kl(classification_probs(sample.data, chain, family)).perms);
    } else if (tag == "ordering") {
      OrderingKey key;
      try {
        key = parse_ordering_key(c.ordering_key);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      relabelled = relabel_by_ordering(chain, key);
    } else {
      throw ConfigError(fmt::format("unknown baseline '{}' (expected pk, stephens or ordering)", tag));
    }
    save_chain(relabelled, out / (tag + ".ndjson"));
    fmt::print("wrote {}\n", (out / (tag + ".ndjson")).string());
  }
  return 0;
}

int cmd_metrics(const Common& c, const std::vector<std::string>& chains) {
  if (chains.empty()) throw ConfigError("metrics needs at least one --chain");
  OrderingKey key;
  try {
    key = parse_ordering_key(c.ordering_key);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  std::optional<Eigen::MatrixXd> truth;
  if (c.scenario == "fishery") {
    const auto spec = fishery_like_spec();
    truth = Eigen::Map<const Eigen::VectorXd>(spec.means.data(), static_cast<Eigen::Index>(spec.means.size()));
  } else if (!c.scenario.empty()) {
    if (c.scenario != "A" && c.scenario != "B" && c.scenario != "C") {
      throw ConfigError(fmt::format("unknown scenario '{}'", c.scenario));
    }
    truth = scenario_spec(c.scenario.front()).means;
  }
  const fs::path out(c.out);
  ensure_dir(out);
  std::ofstream csv(out / "metrics.csv");
  csv << "scenario,method,replication,metric,component,value\n";
  const std::string scenario = c.scenario.empty() ? "data" : c.scenario;
  for (const auto& path : chains) {
    const MixtureChain chain = load_chain(path);
    const std::string method = fs::path(path).stem().string();
    const Eigen::MatrixXd estimates = estimate_component_means(chain);
    if (truth && truth->rows() == estimates.rows() && truth->cols() == estimates.cols()) {
      const auto mse = component_mse(estimates, *truth);
      for (std::size_t g = 0; g < mse.size(); ++g) {
        csv << fmt::format("{},{},1,mse,{},{}\n", scenario, method, g + 1, format_real(mse[g]));
      }
    }
    if (chain.iterations() >= 2) {
      csv << fmt::format("{},{},1,switch_rate,0,{}\n", scenario, method, format_real(switch_rate(chain, key)));
    }
  }
  fmt::print("wrote {}\n", (out / "metrics.csv").string());
  return 0;
}

int cmd_pipeline(const Common& c, bool compare) {
  const PipelineConfig config = to_config(c);
  const PipelineReport report = compare ? run_compare(config) : run_pipeline(config);
  for (const auto& rep : report.replications) {
    for (const auto& m : rep.methods) {
      if (m.no_valid_iterations) {
        fmt::print(stderr, "replication {}: {}: {}\n", rep.replication + 1, m.method, m.error);
      } else {
        fmt::print("replication {}: {} kept={:.4f} switch_rate={:.4f} seconds={:.3f}\n", rep.replication + 1,
                   m.method, m.kept_proportion, m.switch_rate, m.seconds);
      }
    }
  }
  return report.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pivotal-units relabelling for MCMC output of Bayesian mixtures"};
  app.require_subcommand(1);
  Common c;
  std::vector<std::string> metric_chains;

  auto* simulate = app.add_subcommand("simulate", "generate a labelled sample");
  add_input(simulate, c);
  simulate->add_option("--n", c.units, "sample size");
  simulate->add_option("--seed", c.seed, "master seed");
  simulate->add_option("--out", c.out, "output directory");

  auto* sample = app.add_subcommand("sample", "run the Gibbs sampler on a CSV sample");
  add_input(sample, c);
  add_sampler(sample, c);
  sample->add_option("--seed", c.seed, "master seed");
  sample->add_option("--out", c.out, "output directory");

  auto* relabel = app.add_subcommand("relabel", "pivotal relabelling of a stored chain");
  relabel->add_option("--chain", c.chain, "chain file (NDJSON)")->required();
  add_pivotal(relabel, c);
  relabel->add_option("--out", c.out, "output directory");

  auto* baseline = app.add_subcommand("baseline", "baseline relabelling of a stored chain");
  baseline->add_option("--chain", c.chain, "chain file (NDJSON)")->required();
  baseline->add_option("--data", c.data, "sample CSV (needed by stephens)");
  baseline->add_option("--baseline", c.baselines, "pk, stephens or ordering; repeatable");
  baseline->add_option("--ordering-key", c.ordering_key, "mu, pi or mu-dim-k");
  baseline->add_option("--seed", c.seed, "master seed");
  baseline->add_option("--out", c.out, "output directory");

  auto* metrics = app.add_subcommand("metrics", "estimates, MSE and switch rates of stored chains");
  metrics->add_option("--chain", metric_chains, "chain file; repeatable")->required();
  metrics->add_option("--scenario", c.scenario, "scenario providing the true means");
  metrics->add_option("--ordering-key", c.ordering_key, "key for the switch rate");
  metrics->add_option("--out", c.out, "output directory");

  auto* pipeline = app.add_subcommand("pipeline", "simulate, sample, relabel and score");
  auto* compare = app.add_subcommand("compare", "pipeline plus baselines on the same chains");
  for (auto* sub : {pipeline, compare}) {
    add_input(sub, c);
    add_sampler(sub, c);
    add_pivotal(sub, c);
    sub->add_option("--seed", c.seed, "master seed");
    sub->add_option("--reps", c.replications, "number of replications");
    sub->add_option("--baseline", c.baselines, "pk, stephens or ordering; repeatable");
    sub->add_option("--ordering-key", c.ordering_key, "mu, pi or mu-dim-k");
    sub->add_option("--out", c.out, "output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(c);
    if (sample->parsed()) return cmd_sample(c);
    if (relabel->parsed()) return cmd_relabel(c);
    if (baseline->parsed()) return cmd_baseline(c);
    if (metrics->parsed()) return cmd_metrics(c, metric_chains);
    if (pipeline->parsed()) return cmd_pipeline(c, false);
    if (compare->parsed()) return cmd_pipeline(c, true);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitConfig;
  } catch (const NoValidIterations& e) {
    fmt::print(stderr, "relabel: {}\n", e.what());
    return kExitNoValid;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitConfig;
  }
  return 0;
}
