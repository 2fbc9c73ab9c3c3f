#pragma once

// Experiment configuration: one JSON document holding every hyper-parameter.
// Parsing validates the document against the defaults (field names and
// types) and then checks ranges, reporting the offending field path.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "vlgo/check_grads.hpp"
#include "vlgo/contrastive.hpp"
#include "vlgo/data_gen.hpp"
#include "vlgo/lie_training.hpp"
#include "vlgo/semisup.hpp"
#include "vlgo/types.hpp"

namespace vlgo {

enum class ExperimentKind { swissroll, manifoldclr_toy, semisup_toy, check_grads, paths };

[[nodiscard]] std::string to_string(ExperimentKind k);

struct SwissRollExperiment {
  Index points = 5000;
  double noise_sd = 0.0;
  /// Multiplier applied to the generated roll before pairing.
  double data_scale = 0.15;
  Index k_lo = 20;
  Index k_hi = 60;
  Index pairs_per_iter = 500;
  /// Fresh pairs used for the final distance-improvement report.
  Index heldout_pairs = 500;
  Index num_ops = 6;
  InitConfig init{0.0, 0.0, 0.3, true};
  LieTrainConfig train = default_train();
  bool run_fista = true;
  /// Any of "standard", "thresholded".
  std::vector<std::string> variants{"standard", "thresholded"};
  /// Best-of-many sample counts J.
  std::vector<int> samples{1, 5, 10, 20};
  /// Path grid c in [-extent, extent] with the given step.
  double path_extent = 3.0;
  double path_step = 0.1;
  Index path_starts = 3;

  [[nodiscard]] static LieTrainConfig default_train();
};

struct ManifoldClrToyExperiment {
  int classes = 5;
  Index ambient_dim = 32;
  Index intrinsic_dim = 2;
  SynthClassConfig data{4, 3.14159265358979, 0.05, 1.0, 0.05, 0.05};
  Index train_per_class = 200;
  Index test_per_class = 200;
  Index batch_size = 128;
  int iterations = 500;
  /// Independent datasets and initializations.
  int trials = 3;
  /// S0 (full system), S1 (no stop-grad), S2 (no augmentation), S3
  /// (lambda = 0), S4 (fixed prior) or simclr (lambda = beta = 0, no
  /// augmentation).
  std::string system = "S0";
  /// Also train the simclr configuration on each trial.
  bool compare_simclr = true;
  ManifoldClrConfig model = default_model();
  LinearProbeConfig probe;
  /// Loss rows are written every log_every iterations.
  int log_every = 10;

  [[nodiscard]] static ManifoldClrConfig default_model();
};

/// Applies an ablation system preset; throws ConfigError for unknown names.
void apply_system_preset(ManifoldClrConfig& cfg, const std::string& system);

struct SemiSupToyExperiment {
  /// Backbone pretraining; its `trials` and `compare_simclr` are unused.
  ManifoldClrToyExperiment pretrain;
  Index labels_per_class = 5;
  int splits = 20;
  SemiSupConfig semisup = default_semisup();
  std::vector<std::string> methods{"supervised", "pseudo_label", "mixup", "vlgo"};
  /// When non-empty, split_<id>.json files are read from here instead of drawn.
  std::string split_dir;

  [[nodiscard]] static SemiSupConfig default_semisup();
};

struct CheckGradsExperiment {
  int trials = 3;
  double perturb = 0.0;
};

struct PathsExperiment {
  /// Dictionary checkpoint written by the swissroll run.
  std::string dictionary;
  Index points = 5000;
  double noise_sd = 0.0;
  double data_scale = 0.15;
  Index num_starts = 5;
  double extent = 3.0;
  double step = 0.1;
};

struct RunConfig {
  ExperimentKind experiment = ExperimentKind::swissroll;
  std::uint64_t seed = 0;
  std::string output_dir = "vlgo_out";
  int workers = 1;
  /// Wall-clock columns are written as 0 when false, making every output
  /// byte-reproducible.
  bool record_runtime = true;
  SwissRollExperiment swissroll;
  ManifoldClrToyExperiment manifoldclr_toy;
  SemiSupToyExperiment semisup_toy;
  CheckGradsExperiment check_grads;
  PathsExperiment paths;
};

[[nodiscard]] nlohmann::json to_json(const RunConfig& cfg);

/// Validates `doc` against the default document and merges it over the
/// defaults. Throws ConfigError naming the field path.
[[nodiscard]] RunConfig parse_run_config(const nlohmann::json& doc);

/// Reads and parses a JSON file; unreadable or malformed files raise ConfigError.
[[nodiscard]] RunConfig load_run_config(const std::filesystem::path& path);

/// Semantic checks (ranges, cross-field constraints, referenced files).
void validate(const RunConfig& cfg);

}  // namespace vlgo
