#pragma once

// Training diagnostics and their persistence: per-epoch metric records,
// effective rank, extrapolated operator paths, CSV/JSON writers and
// checkpoint containers.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlgo/networks.hpp"
#include "vlgo/operator_dict.hpp"

namespace vlgo {

struct MetricsRecord {
  std::int64_t epoch = 0;
  double mse = 0.0;
  double l1 = 0.0;
  double kl = 0.0;
  double di_mean = 0.0;
  /// Cumulative seconds since the start of the run.
  double runtime_s = 0.0;
  std::optional<double> effective_rank;
  /// Frobenius norm of each operator.
  std::vector<double> op_fro;

  bool operator==(const MetricsRecord&) const = default;
};

/// exp(H(p)) with p the singular values of the mean-centered rows of
/// `features`, normalized to sum to one.
[[nodiscard]] double effective_rank(const Eigen::MatrixXd& features);

/// Row g holds transport(dict, grid[g] * e_op, start).
[[nodiscard]] Eigen::MatrixXd operator_paths(const OperatorDictionaryd& dict, const Eigen::VectorXd& start,
                                             Index op, const std::vector<double>& grid);

/// Shortest round-trip decimal text, independent of the global locale.
[[nodiscard]] std::string format_double(double v);
[[nodiscard]] double parse_double(std::string_view text);

/// `epoch,mse,l1,kl,di_mean,runtime_s,effective_rank,op_fro_1..op_fro_M`.
[[nodiscard]] std::string metrics_csv_header(Index num_ops);
[[nodiscard]] std::string metrics_csv(const std::vector<MetricsRecord>& records, Index num_ops);
[[nodiscard]] std::vector<MetricsRecord> parse_metrics_csv(const std::string& text);

void write_text_file(const std::filesystem::path& path, const std::string& text);
[[nodiscard]] std::string read_text_file(const std::filesystem::path& path);

struct RunSummary {
  nlohmann::json config;
  std::uint64_t seed = 0;
  double wall_clock_s = 0.0;
  std::optional<MetricsRecord> final_metrics;
  /// Free-form experiment results merged into the document.
  nlohmann::json extra = nlohmann::json::object();
};

[[nodiscard]] nlohmann::json metrics_to_json(const MetricsRecord& r);
[[nodiscard]] nlohmann::json summary_to_json(const RunSummary& s);

/// Writes the metrics CSV and the JSON summary. Throws IoError naming the
/// path that could not be written.
void emit(const std::vector<MetricsRecord>& records, Index num_ops, const std::filesystem::path& csv_path,
          const std::filesystem::path& json_path, const RunSummary& summary);

/// `c,x_1..x_d`, one row per grid value.
[[nodiscard]] std::string paths_csv(const Eigen::MatrixXd& path, const std::vector<double>& grid);

/// One point per row, optional trailing integer label column.
[[nodiscard]] std::string points_csv(const Eigen::MatrixXd& points, const std::vector<int>* labels = nullptr);

/// Checkpoint containers: {"kind", "num_ops", "dim", "block_size",
/// "operators": [[row-major block entries] per op per block]}.
[[nodiscard]] nlohmann::json dictionary_to_json(const OperatorDictionaryd& dict);
[[nodiscard]] OperatorDictionaryd dictionary_from_json(const nlohmann::json& j);

/// {"kind", "dims", "negative_slope", "head", "log_scale_min",
/// "log_scale_max", "params"}.
[[nodiscard]] nlohmann::json network_to_json(const MlpNet& net);
[[nodiscard]] MlpNet network_from_json(const nlohmann::json& j);

}  // namespace vlgo
