#pragma once

// End-to-end runs: simulate or load data, sample, build the similarity matrix
// and reference partition, select pivots, filter and relabel, and score the
// result. The CLI is a thin layer over these functions.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pivotal/baselines.hpp"
#include "pivotal/chain_store.hpp"
#include "pivotal/partitioning.hpp"
#include "pivotal/pivots.hpp"
#include "pivotal/sim_harness.hpp"
#include "pivotal/similarity.hpp"

namespace pivotal {

/// Invalid configuration; maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure inside one pipeline stage; the message is prefixed with the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct PipelineConfig {
  std::optional<std::string> scenario;  // "A", "B", "C" or "fishery"
  std::optional<std::filesystem::path> data_path;
  int units = 1000;
  int components = 4;
  int groups = 0;  // G_hat; 0 means "same as components"
  int iterations = 3000;
  int burnin = 500;
  bool permute_move = true;
  std::string covariance = "auto";  // "shared", "component", or "auto": shared when d >= 2
  std::uint64_t seed = 1;
  std::string criterion = "b";
  int mus_candidates = 5;
  double mus_eps = 0.0;
  std::string linkage = "complete";
  std::vector<std::string> baselines;
  std::string ordering_key = "mu";
  int em_max_iter = 200;
  int stephens_max_iter = 100;
  std::filesystem::path out_dir = "out";
  int replications = 1;
  bool normalize_q = false;
  int threads = 1;

  int effective_groups() const { return groups > 0 ? groups : components; }
};

/// Throws ConfigError on any invalid field.
void validate_config(const PipelineConfig& config, bool needs_baselines = false);

/// Thread count from PIVOTAL_THREADS, or `fallback` when unset or invalid.
int threads_from_env(int fallback = 1);

/// Stage seeds for replication r:
///   base    = derive_seed(master, 1000 + r)
///   data    = derive_seed(base, 0)
///   sampler = derive_seed(base, 1)
///   em      = derive_seed(base, 2)
struct StageSeeds {
  std::uint64_t data = 0;
  std::uint64_t sampler = 0;
  std::uint64_t em = 0;
};
StageSeeds stage_seeds(std::uint64_t master, int replication);

/// q_ig over the kept iterations of a relabelled chain, divided by H or, when
/// `normalize`, by |H0|.
GroupProbMatrix relabelled_group_probs(const RelabelResult& result, bool normalize);

/// Steps up to the reference partition, shared by every relabelling method.
struct PreparedRun {
  int replication = 0;
  LabeledSample sample;
  std::optional<Eigen::MatrixXd> truth;
  MixtureChain chain;
  SimilarityMatrix similarity;
  Clustering clustering;
  double seconds_sampling = 0.0;
  double seconds_partition = 0.0;  // similarity + clustering
};

PreparedRun prepare_run(const PipelineConfig& config, int replication);

struct MethodOutcome {
  std::string method;
  bool ok = false;
  bool no_valid_iterations = false;
  std::string error;
  std::optional<MixtureChain> relabelled;
  std::optional<RelabelResult> pivotal;  // pivotal methods only
  double kept_proportion = 1.0;
  Eigen::MatrixXd estimates;
  std::vector<double> mse;  // empty without ground truth
  double switch_rate = 0.0;
  double seconds = 0.0;
};

/// Pivot selection, filtering and relabelling on a prepared run. Timing includes
/// the similarity and clustering steps.
MethodOutcome run_pivotal_method(const PreparedRun& run, Criterion criterion, const PipelineConfig& config);

/// "pk", "stephens" or "ordering".
MethodOutcome run_baseline_method(const PreparedRun& run, const std::string& tag, const PipelineConfig& config);

struct ReplicationReport {
  int replication = 0;
  std::vector<MethodOutcome> methods;
};

struct PipelineReport {
  int exit_code = 0;
  std::vector<ReplicationReport> replications;
};

/// Full pivotal pipeline, all replications. Writes into config.out_dir:
///   relabelled_rep<r>.ndjson and relabelled_rep<r>.report.json
///   group_probs_rep<r>.csv, metrics.csv, estimates.csv, timings.csv
/// Exit code 2 when some replication had no valid iterations.
PipelineReport run_pipeline(const PipelineConfig& config);

/// Pivotal plus every configured baseline on the same chains. Writes
/// <method>_rep<r>.ndjson (+ .report.json), metrics.csv and estimates.csv.
PipelineReport run_compare(const PipelineConfig& config);

/// Rows: scenario,method,replication,metric,component,value.
void write_metrics_csv(const PipelineConfig& config, const PipelineReport& report,
                       const std::filesystem::path& path);

/// Rows: scenario,method,replication,seconds. Kept apart from metrics.csv,
/// which is byte-reproducible.
void write_timings_csv(const PipelineConfig& config, const PipelineReport& report,
                       const std::filesystem::path& path);

/// Rows: scenario,method,replication,component,mu1..mud.
void write_estimates_csv(const PipelineConfig& config, const PipelineReport& report,
                         const std::filesystem::path& path);

void write_group_probs_csv(const GroupProbMatrix& q, const std::filesystem::path& path);

/// Sidecar report for a baseline relabelling.
void write_method_report(const MethodOutcome& outcome, const std::filesystem::path& path);

}  // namespace pivotal
