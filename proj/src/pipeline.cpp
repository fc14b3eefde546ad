#include "pivotal/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "pivotal/random.hpp"

namespace pivotal {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool is_known_scenario(const std::string& s) { return s == "A" || s == "B" || s == "C" || s == "fishery"; }

std::string scenario_label(const PipelineConfig& config) {
  if (config.scenario) return *config.scenario;
  return config.data_path ? config.data_path->filename().string() : "data";
}

// Runs body(r) for r in [0, count) on up to `threads` workers. The first
// exception is rethrown after all workers finish.
template <class Body>
void parallel_for(int count, int threads, Body&& body) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int r = 0; r < count; ++r) body(r);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int r = next++; r < count; r = next++) {
        try {
          body(r);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

template <class F>
auto in_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const NoValidIterations&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

void finish_outcome(MethodOutcome& out, const PreparedRun& run, const PipelineConfig& config) {
  const MixtureChain& chain = *out.relabelled;
  out.estimates = estimate_component_means(chain);
  if (run.truth && run.truth->rows() == out.estimates.rows() && run.truth->cols() == out.estimates.cols()) {
    out.mse = component_mse(out.estimates, *run.truth);
  }
  out.switch_rate = chain.iterations() >= 2 ? switch_rate(chain, parse_ordering_key(config.ordering_key))
                                            : std::numeric_limits<double>::quiet_NaN();
  out.ok = true;
}

}  // namespace

void validate_config(const PipelineConfig& config, bool needs_baselines) {
  if (config.scenario && config.data_path) throw ConfigError("give either --scenario or --data, not both");
  if (!config.scenario && !config.data_path) throw ConfigError("missing input: give --scenario {A,B,C} or --data PATH");
  if (config.scenario && !is_known_scenario(*config.scenario)) {
    throw ConfigError(fmt::format("unknown scenario '{}' (expected A, B, C or fishery)", *config.scenario));
  }
  if (config.data_path && !std::filesystem::exists(*config.data_path)) {
    throw ConfigError(fmt::format("data file '{}' does not exist", config.data_path->string()));
  }
  if (config.units < 1) throw ConfigError("--n must be positive");
  if (config.components < 1) throw ConfigError("--G must be positive");
  if (config.groups < 0) throw ConfigError("--G-hat must be positive");
  if (config.iterations < 1) throw ConfigError("--iters must be positive");
  if (config.burnin < 0) throw ConfigError("--burnin must be non-negative");
  if (config.iterations <= config.burnin) throw ConfigError("--iters must exceed --burnin");
  if (config.replications < 1) throw ConfigError("--reps must be positive");
  if (config.mus_candidates < 1) throw ConfigError("--mus-M must be positive");
  if (!(config.mus_eps >= 0.0)) throw ConfigError("--mus-eps must be non-negative");
  if (config.em_max_iter < 1 || config.stephens_max_iter < 1) throw ConfigError("iteration caps must be positive");
  Criterion criterion;
  try {
    criterion = parse_criterion(config.criterion);
    parse_linkage(config.linkage);
    parse_ordering_key(config.ordering_key);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (criterion == Criterion::mus && config.effective_groups() > kMusMaxGroups) {
    throw ConfigError(fmt::format("MUS capped at G_hat <= {} (got {})", kMusMaxGroups, config.effective_groups()));
  }
  if (criterion == Criterion::mus && config.effective_groups() < 2) throw ConfigError("MUS needs G_hat >= 2");
  if (needs_baselines && config.baselines.empty()) throw ConfigError("at least one --baseline is required");
  for (const auto& b : config.baselines) {
    if (b != "pk" && b != "stephens" && b != "ordering") {
      throw ConfigError(fmt::format("unknown baseline '{}' (expected pk, stephens or ordering)", b));
    }
  }
  if (config.covariance != "auto" && config.covariance != "shared" && config.covariance != "component") {
    throw ConfigError(fmt::format("unknown covariance '{}' (expected auto, shared or component)", config.covariance));
  }
  if (config.threads < 1) throw ConfigError("thread count must be positive");
}

int threads_from_env(int fallback) {
  const char* value = std::getenv("PIVOTAL_THREADS");
  if (!value) return fallback;
  try {
    const int t = std::stoi(value);
    return t >= 1 ? t : fallback;
  } catch (const std::exception&) {
    return fallback;
  }
}

GroupProbMatrix relabelled_group_probs(const RelabelResult& result, bool normalize) {
  GroupProbMatrix q = estimate_group_probs(result.chain, true);
  if (!normalize) {
    const double kept = static_cast<double>(result.chain.iterations());
    const double total = static_cast<double>(result.filter.total);
    for (double& v : q.q) v = std::round(v * kept) / total;
  }
  q.iterations_used = result.filter.kept;
  return q;
}

StageSeeds stage_seeds(std::uint64_t master, int replication) {
  const std::uint64_t base = derive_seed(master, 1000 + static_cast<std::uint64_t>(replication));
  return {derive_seed(base, 0), derive_seed(base, 1), derive_seed(base, 2)};
}

PreparedRun prepare_run(const PipelineConfig& config, int replication) {
  const StageSeeds seeds = stage_seeds(config.seed, replication);
  PreparedRun run;
  run.replication = replication;

  in_stage("simulate", [&] {
    if (config.scenario && *config.scenario == "fishery") {
      const auto spec = fishery_like_spec();
      run.sample = generate_univariate(spec, config.units, seeds.data);
      run.truth = Eigen::Map<const Eigen::VectorXd>(spec.means.data(), static_cast<Eigen::Index>(spec.means.size()));
    } else if (config.scenario) {
      const auto spec = scenario_spec(config.scenario->front(), config.units);
      run.sample = generate_scenario(spec, seeds.data);
      run.truth = spec.means;
    } else {
      run.sample = read_labeled_sample_csv(*config.data_path);
    }
  });

  const auto start = Clock::now();
  run.chain = in_stage("sample", [&] {
    GibbsOptions options;
    options.components = config.components;
    options.iterations = config.iterations;
    options.burnin = config.burnin;
    options.permute_move = config.permute_move;
    options.shared_covariance =
        config.covariance == "shared" || (config.covariance == "auto" && run.sample.data.dim() >= 2);
    options.seed = seeds.sampler;
    return gibbs_sample(run.sample.data, options);
  });
  run.seconds_sampling = seconds_since(start);

  const auto partition_start = Clock::now();
  run.similarity = in_stage("similarity", [&] { return estimate_similarity(run.chain); });
  run.clustering = in_stage("cluster", [&] {
    return hclust(dissimilarity(run.similarity), config.effective_groups(), parse_linkage(config.linkage));
  });
  run.seconds_partition = seconds_since(partition_start);
  return run;
}

MethodOutcome run_pivotal_method(const PreparedRun& run, Criterion criterion, const PipelineConfig& config) {
  MethodOutcome out;
  out.method = "pivotal-" + to_string(criterion);
  const auto start = Clock::now();
  try {
    const PivotSet pivots = in_stage("pivots", [&] {
      return select_pivots(run.similarity, run.clustering.partition, criterion, config.mus_candidates, config.mus_eps);
    });
    const IterationFilter filter =
        in_stage("filter", [&] { return compute_filter(run.chain, pivots, config.effective_groups()); });
    out.kept_proportion = kept_proportion(filter, run.chain.iterations());
    out.pivotal = in_stage("relabel", [&] { return relabel(run.chain, pivots, filter); });
    out.relabelled = out.pivotal->chain;
    out.seconds = run.seconds_partition + seconds_since(start);
    in_stage("metrics", [&] { finish_outcome(out, run, config); });
  } catch (const NoValidIterations& e) {
    out.no_valid_iterations = true;
    out.kept_proportion = 0.0;
    out.error = std::string("relabel: ") + e.what();
    out.seconds = run.seconds_partition + seconds_since(start);
  } catch (const std::exception& e) {
    out.error = e.what();
    out.kept_proportion = std::numeric_limits<double>::quiet_NaN();
    out.seconds = run.seconds_partition + seconds_since(start);
  }
  return out;
}

MethodOutcome run_baseline_method(const PreparedRun& run, const std::string& tag, const PipelineConfig& config) {
  MethodOutcome out;
  out.method = tag;
  const auto start = Clock::now();
  try {
    out.relabelled = in_stage(tag, [&]() -> MixtureChain {
      if (tag == "pk") {
        EMOptions options;
        options.max_iter = config.em_max_iter;
        options.seed = stage_seeds(config.seed, run.replication).em;
        return pk_relabel(run.chain, pk_em(run.chain, options));
      }
      if (tag == "stephens") {
        const ModelFamily family = run.sample.data.dim() == 1 ? ModelFamily::univariate_gaussian
                                                              : ModelFamily::multivariate_gaussian;
        const auto probs = classification_probs(run.sample.data, run.chain, family);
        return apply_permutations(run.chain, stephens_kl(probs, config.stephens_max_iter).perms);
      }
      if (tag == "ordering") return relabel_by_ordering(run.chain, parse_ordering_key(config.ordering_key));
      throw std::invalid_argument(fmt::format("unknown baseline '{}'", tag));
    });
    out.seconds = seconds_since(start);
    in_stage("metrics", [&] { finish_outcome(out, run, config); });
  } catch (const std::exception& e) {
    out.error = e.what();
    out.seconds = seconds_since(start);
  }
  return out;
}

namespace {

PipelineReport run_all(const PipelineConfig& config, bool with_baselines) {
  validate_config(config, with_baselines);
  const Criterion criterion = parse_criterion(config.criterion);
  PipelineReport report;
  report.replications.resize(config.replications);
  std::vector<GroupProbMatrix> group_probs(config.replications);

  parallel_for(config.replications, config.threads, [&](int r) {
    const PreparedRun run = prepare_run(config, r);
    ReplicationReport rep;
    rep.replication = r;
    rep.methods.push_back(run_pivotal_method(run, criterion, config));
    if (const auto& piv = rep.methods.front().pivotal) group_probs[r] = relabelled_group_probs(*piv, config.normalize_q);
    if (with_baselines) {
      for (const auto& b : config.baselines) rep.methods.push_back(run_baseline_method(run, b, config));
    }
    report.replications[r] = std::move(rep);
  });

  std::filesystem::create_directories(config.out_dir);
  for (const auto& rep : report.replications) {
    for (const auto& m : rep.methods) {
      if (!m.error.empty() && !m.no_valid_iterations) throw StageError(m.method, m.error);
      if (m.no_valid_iterations) report.exit_code = 2;
    }
  }
  for (std::size_t r = 0; r < report.replications.size(); ++r) {
    const auto& rep = report.replications[r];
    for (const auto& m : rep.methods) {
      const std::string stem = with_baselines ? fmt::format("{}_rep{}", m.method, r) : fmt::format("relabelled_rep{}", r);
      if (m.pivotal) {
        save_chain(m.pivotal->chain, config.out_dir / (stem + ".ndjson"));
        write_relabel_report(*m.pivotal, config.out_dir / (stem + ".report.json"));
      } else if (m.relabelled) {
        save_chain(*m.relabelled, config.out_dir / (stem + ".ndjson"));
        write_method_report(m, config.out_dir / (stem + ".report.json"));
      }
    }
    if (!group_probs[r].q.empty()) {
      write_group_probs_csv(group_probs[r], config.out_dir / fmt::format("group_probs_rep{}.csv", r));
    }
  }
  write_metrics_csv(config, report, config.out_dir / "metrics.csv");
  write_estimates_csv(config, report, config.out_dir / "estimates.csv");
  write_timings_csv(config, report, config.out_dir / "timings.csv");
  return report;
}

}  // namespace

PipelineReport run_pipeline(const PipelineConfig& config) { return run_all(config, false); }

PipelineReport run_compare(const PipelineConfig& config) { return run_all(config, true); }

void write_metrics_csv(const PipelineConfig& config, const PipelineReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  const std::string scenario = scenario_label(config);
  out << "scenario,method,replication,metric,component,value\n";
  auto row = [&](const std::string& method, int r, const char* metric, int component, double value) {
    out << fmt::format("{},{},{},{},{},{}\n", scenario, method, r + 1, metric, component, format_real(value));
  };
  for (const auto& rep : report.replications) {
    for (const auto& m : rep.methods) {
      if (m.pivotal || m.no_valid_iterations) row(m.method, rep.replication, "kept_proportion", 0, m.kept_proportion);
      if (!m.ok) continue;
      for (std::size_t g = 0; g < m.mse.size(); ++g) {
        row(m.method, rep.replication, "mse", static_cast<int>(g) + 1, m.mse[g]);
      }
      row(m.method, rep.replication, "switch_rate", 0, m.switch_rate);
    }
  }
}

void write_timings_csv(const PipelineConfig& config, const PipelineReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  const std::string scenario = scenario_label(config);
  out << "scenario,method,replication,seconds\n";
  for (const auto& rep : report.replications) {
    for (const auto& m : rep.methods) {
      out << fmt::format("{},{},{},{:.6f}\n", scenario, m.method, rep.replication + 1, m.seconds);
    }
  }
}

void write_estimates_csv(const PipelineConfig& config, const PipelineReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  const std::string scenario = scenario_label(config);
  int dim = 0;
  for (const auto& rep : report.replications) {
    for (const auto& m : rep.methods) dim = std::max(dim, static_cast<int>(m.estimates.cols()));
  }
  out << "scenario,method,replication,component";
  for (int k = 0; k < dim; ++k) out << ",mu" << k + 1;
  out << '\n';
  for (const auto& rep : report.replications) {
    for (const auto& m : rep.methods) {
      if (!m.ok) continue;
      for (Eigen::Index g = 0; g < m.estimates.rows(); ++g) {
        out << fmt::format("{},{},{},{}", scenario, m.method, rep.replication + 1, g + 1);
        for (Eigen::Index k = 0; k < m.estimates.cols(); ++k) out << ',' << format_real(m.estimates(g, k));
        out << '\n';
      }
    }
  }
}

void write_group_probs_csv(const GroupProbMatrix& q, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << "unit";
  for (int g = 0; g < q.groups; ++g) out << ",q" << g + 1;
  out << '\n';
  for (int i = 0; i < q.units; ++i) {
    out << i + 1;
    for (int g = 0; g < q.groups; ++g) out << ',' << format_real(q(i, g));
    out << '\n';
  }
}

void write_method_report(const MethodOutcome& outcome, const std::filesystem::path& path) {
  nlohmann::json report = {{"method", outcome.method},
                           {"ok", outcome.ok},
                           {"seconds", outcome.seconds},
                           {"H", outcome.relabelled ? outcome.relabelled->iterations() : 0}};
  if (!outcome.error.empty()) report["error"] = outcome.error;
  if (outcome.ok) report["switch_rate"] = outcome.switch_rate;
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << report.dump(2) << '\n';
}

}  // namespace pivotal
