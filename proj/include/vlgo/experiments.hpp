#pragma once

// Desk-scale experiment runners. Each runner returns its results and, when
// the configured output directory is non-empty, writes CSV and JSON files
// there. run_experiment maps failures to process exit codes.

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vlgo/check_grads.hpp"
#include "vlgo/lie_training.hpp"
#include "vlgo/run_config.hpp"

namespace vlgo {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitCheckFailed = 4;

struct SwissRollRun {
  /// "fista", "standard_J<J>" or "thresholded_J<J>".
  std::string name;
  LieTrainResult result;
  /// Mean distance improvement on the held-out pairs.
  double heldout_di = 0.0;
};

struct SwissRollOutcome {
  std::vector<SwissRollRun> runs;

  [[nodiscard]] const SwissRollRun* find(const std::string& name) const;
};

[[nodiscard]] SwissRollOutcome run_swissroll_experiment(const RunConfig& cfg, std::ostream* log = nullptr);

struct ClrTrialResult {
  int trial = 0;
  std::string system;
  double probe_accuracy = 0.0;
  double effective_rank = 0.0;
  ClrLosses final_losses;
};

struct ClrToyOutcome {
  std::vector<ClrTrialResult> trials;
};

[[nodiscard]] ClrToyOutcome run_manifoldclr_toy_experiment(const RunConfig& cfg, std::ostream* log = nullptr);

/// Toy dataset, trained model and frozen features for one seed.
struct PretrainedToy {
  SynthClassDataset train;
  SynthClassDataset test;
  ManifoldClrModel model;
  std::vector<ClrLosses> losses;
};

/// Trains the configured system on a fresh class-manifold dataset.
[[nodiscard]] PretrainedToy pretrain_toy(const ManifoldClrToyExperiment& exp, const std::string& system,
                                         std::uint64_t seed, int workers);

struct SplitResult {
  int split_id = 0;
  std::string method;
  double accuracy = 0.0;
  /// Accuracy gain over the supervised run on the same split, in percentage points.
  double improvement_pct = 0.0;
};

struct MethodSummary {
  std::string method;
  double mean_accuracy = 0.0;
  double mean_improvement_pct = 0.0;
  /// Standard error of the improvement over splits.
  double improvement_se = 0.0;
};

struct SemiSupToyOutcome {
  std::vector<SplitResult> results;
  std::vector<MethodSummary> summary;
  std::vector<LabelSplit> splits;

  /// Accuracy of `method` on split `id`; nullopt when not run.
  [[nodiscard]] std::optional<double> accuracy(int id, const std::string& method) const;
};

[[nodiscard]] SemiSupToyOutcome run_semisup_toy_experiment(const RunConfig& cfg, std::ostream* log = nullptr);

[[nodiscard]] std::vector<GradCheck> run_check_grads_experiment(const RunConfig& cfg, std::ostream* log = nullptr);

/// One path per (start, operator); rows are stacked in that order.
struct PathsOutcome {
  Eigen::MatrixXd starts;
  std::vector<double> grid;
  std::vector<Eigen::MatrixXd> paths;
};

[[nodiscard]] PathsOutcome run_paths_experiment(const RunConfig& cfg, std::ostream* log = nullptr);

/// `start,op,c,x_1..x_d` rows for every path.
[[nodiscard]] std::string paths_table_csv(const PathsOutcome& paths, Index num_ops);

[[nodiscard]] std::string semisup_results_csv(const std::vector<SplitResult>& results);

/// `trial,system,probe_accuracy,effective_rank`.
[[nodiscard]] std::string clr_results_csv(const std::vector<ClrTrialResult>& trials);

/// split_id, labels per class and the per-class index lists.
[[nodiscard]] nlohmann::json split_to_json(int split_id, const LabelSplit& split);
[[nodiscard]] LabelSplit split_from_json(const nlohmann::json& j);

/// Writes the config echo, runs the configured experiment and returns the
/// exit code: 0 success, 2 configuration error, 3 numerical divergence,
/// 4 failed oracle check, 1 any other failure.
int run_experiment(const RunConfig& cfg, std::ostream& log);

}  // namespace vlgo
