#include "vlgo/metrics_io.hpp"

#include <Eigen/SVD>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace vlgo {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::int64_t parse_int(std::string_view text) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("parse_int: bad integer '" + std::string(text) + "'");
  }
  return v;
}

std::string head_name(HeadType h) {
  switch (h) {
    case HeadType::plain:
      return "plain";
    case HeadType::laplacian:
      return "laplacian";
    case HeadType::normalized:
      return "normalized";
  }
  return "plain";
}

HeadType head_from_name(const std::string& s) {
  if (s == "plain") return HeadType::plain;
  if (s == "laplacian") return HeadType::laplacian;
  if (s == "normalized") return HeadType::normalized;
  throw std::invalid_argument("network_from_json: unknown head '" + s + "'");
}

}  // namespace

double effective_rank(const Eigen::MatrixXd& features) {
  if (features.rows() < 2) throw std::invalid_argument("effective_rank: need at least two rows");
  if (!features.allFinite()) throw std::invalid_argument("effective_rank: non-finite features");
  const Eigen::MatrixXd centered = features.rowwise() - features.colwise().mean();
  const Eigen::VectorXd sv = Eigen::BDCSVD<Eigen::MatrixXd>(centered).singularValues();
  const double total = sv.sum();
  if (!(total > 0.0)) throw std::invalid_argument("effective_rank: features have zero spread");
  double entropy = 0.0;
  for (Index i = 0; i < sv.size(); ++i) {
    const double p = sv[i] / total;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

Eigen::MatrixXd operator_paths(const OperatorDictionaryd& dict, const Eigen::VectorXd& start, Index op,
                               const std::vector<double>& grid) {
  if (op < 0 || op >= dict.size()) throw std::invalid_argument("operator_paths: operator index out of range");
  if (grid.empty()) throw std::invalid_argument("operator_paths: empty coefficient grid");
  if (start.size() != dict.dim()) throw std::invalid_argument("operator_paths: start point dim mismatch");
  Eigen::MatrixXd out(static_cast<Index>(grid.size()), dict.dim());
  Eigen::VectorXd c = Eigen::VectorXd::Zero(dict.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    c[op] = grid[g];
    out.row(static_cast<Index>(g)) = transport(dict, c, start).transpose();
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("parse_double: bad number '" + std::string(text) + "'");
  }
  return v;
}

std::string metrics_csv_header(Index num_ops) {
  std::string h = "epoch,mse,l1,kl,di_mean,runtime_s,effective_rank";
  for (Index m = 1; m <= num_ops; ++m) h += ",op_fro_" + std::to_string(m);
  return h;
}

std::string metrics_csv(const std::vector<MetricsRecord>& records, Index num_ops) {
  std::string out = metrics_csv_header(num_ops) + "\n";
  for (const auto& r : records) {
    if (static_cast<Index>(r.op_fro.size()) != num_ops) {
      throw std::invalid_argument("metrics_csv: record has " + std::to_string(r.op_fro.size()) +
                                  " operator norms, header has " + std::to_string(num_ops));
    }
    out += std::to_string(r.epoch);
    for (double v : {r.mse, r.l1, r.kl, r.di_mean, r.runtime_s}) out += "," + format_double(v);
    out += ",";
    if (r.effective_rank) out += format_double(*r.effective_rank);
    for (double v : r.op_fro) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

std::vector<MetricsRecord> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("parse_metrics_csv: missing header");
  const auto header = split(line, ',');
  if (header.size() < 7) throw std::invalid_argument("parse_metrics_csv: short header");
  const std::size_t num_ops = header.size() - 7;
  if (line != metrics_csv_header(static_cast<Index>(num_ops))) {
    throw std::invalid_argument("parse_metrics_csv: unexpected header '" + line + "'");
  }
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != header.size()) throw std::invalid_argument("parse_metrics_csv: wrong field count");
    MetricsRecord r;
    r.epoch = parse_int(f[0]);
    r.mse = parse_double(f[1]);
    r.l1 = parse_double(f[2]);
    r.kl = parse_double(f[3]);
    r.di_mean = parse_double(f[4]);
    r.runtime_s = parse_double(f[5]);
    if (!f[6].empty()) r.effective_rank = parse_double(f[6]);
    for (std::size_t m = 0; m < num_ops; ++m) r.op_fro.push_back(parse_double(f[7 + m]));
    out.push_back(std::move(r));
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(path.string(), "cannot open for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  f.flush();
  if (!f) throw IoError(path.string(), "write failed");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path.string(), "cannot open for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

nlohmann::json metrics_to_json(const MetricsRecord& r) {
  nlohmann::json j{{"epoch", r.epoch}, {"mse", r.mse},         {"l1", r.l1},
                   {"kl", r.kl},       {"di_mean", r.di_mean}, {"runtime_s", r.runtime_s},
                   {"op_fro", r.op_fro}};
  j["effective_rank"] = r.effective_rank ? nlohmann::json(*r.effective_rank) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json summary_to_json(const RunSummary& s) {
  nlohmann::json j;
  j["config"] = s.config;
  j["seed"] = s.seed;
  j["wall_clock_s"] = s.wall_clock_s;
  j["final_metrics"] = s.final_metrics ? metrics_to_json(*s.final_metrics) : nlohmann::json(nullptr);
  if (s.extra.is_object()) {
    for (const auto& [k, v] : s.extra.items()) j[k] = v;
  }
  return j;
}

void emit(const std::vector<MetricsRecord>& records, Index num_ops, const std::filesystem::path& csv_path,
          const std::filesystem::path& json_path, const RunSummary& summary) {
  write_text_file(csv_path, metrics_csv(records, num_ops));
  write_text_file(json_path, summary_to_json(summary).dump(2) + "\n");
}

std::string paths_csv(const Eigen::MatrixXd& path, const std::vector<double>& grid) {
  if (static_cast<Index>(grid.size()) != path.rows()) throw std::invalid_argument("paths_csv: grid/path size mismatch");
  std::string out = "c";
  for (Index k = 1; k <= path.cols(); ++k) out += ",x_" + std::to_string(k);
  out += "\n";
  for (Index g = 0; g < path.rows(); ++g) {
    out += format_double(grid[static_cast<std::size_t>(g)]);
    for (Index k = 0; k < path.cols(); ++k) out += "," + format_double(path(g, k));
    out += "\n";
  }
  return out;
}

std::string points_csv(const Eigen::MatrixXd& points, const std::vector<int>* labels) {
  if (labels && static_cast<Index>(labels->size()) != points.rows()) {
    throw std::invalid_argument("points_csv: label count mismatch");
  }
  std::string out;
  for (Index k = 1; k <= points.cols(); ++k) out += (k > 1 ? ",x_" : "x_") + std::to_string(k);
  if (labels) out += points.cols() > 0 ? ",label" : "label";
  out += "\n";
  for (Index i = 0; i < points.rows(); ++i) {
    for (Index k = 0; k < points.cols(); ++k) out += (k > 0 ? "," : "") + format_double(points(i, k));
    if (labels) out += "," + std::to_string((*labels)[static_cast<std::size_t>(i)]);
    out += "\n";
  }
  return out;
}

nlohmann::json dictionary_to_json(const OperatorDictionaryd& dict) {
  nlohmann::json ops = nlohmann::json::array();
  for (Index m = 0; m < dict.size(); ++m) {
    nlohmann::json blocks = nlohmann::json::array();
    for (Index j = 0; j < dict.num_blocks(); ++j) {
      const Eigen::MatrixXd& blk = dict.op(m).block(j);
      std::vector<double> entries;
      entries.reserve(static_cast<std::size_t>(blk.size()));
      for (Index r = 0; r < blk.rows(); ++r) {
        for (Index c = 0; c < blk.cols(); ++c) entries.push_back(blk(r, c));
      }
      blocks.push_back(entries);
    }
    ops.push_back(blocks);
  }
  return {{"kind", "operator_dictionary"},
          {"num_ops", dict.size()},
          {"dim", dict.dim()},
          {"block_size", dict.block_size()},
          {"operators", ops}};
}

OperatorDictionaryd dictionary_from_json(const nlohmann::json& j) {
  if (j.value("kind", std::string()) != "operator_dictionary") {
    throw std::invalid_argument("dictionary_from_json: not an operator dictionary");
  }
  OperatorDictionaryd dict(j.at("num_ops").get<Index>(), j.at("dim").get<Index>(), j.at("block_size").get<Index>());
  const auto& ops = j.at("operators");
  if (static_cast<Index>(ops.size()) != dict.size()) throw std::invalid_argument("dictionary_from_json: op count");
  const Index b = dict.block_size();
  for (Index m = 0; m < dict.size(); ++m) {
    const auto& blocks = ops[static_cast<std::size_t>(m)];
    if (static_cast<Index>(blocks.size()) != dict.num_blocks()) {
      throw std::invalid_argument("dictionary_from_json: block count");
    }
    for (Index k = 0; k < dict.num_blocks(); ++k) {
      const auto entries = blocks[static_cast<std::size_t>(k)].get<std::vector<double>>();
      if (static_cast<Index>(entries.size()) != b * b) throw std::invalid_argument("dictionary_from_json: block size");
      for (Index r = 0; r < b; ++r) {
        for (Index c = 0; c < b; ++c) dict.op(m).block(k)(r, c) = entries[static_cast<std::size_t>(r * b + c)];
      }
    }
  }
  if (!dict.all_finite()) throw std::invalid_argument("dictionary_from_json: non-finite entries");
  return dict;
}

nlohmann::json network_to_json(const MlpNet& net) {
  const auto& cfg = net.config();
  const Eigen::VectorXd& p = net.params();
  return {{"kind", "mlp"},
          {"dims", cfg.dims},
          {"negative_slope", cfg.negative_slope},
          {"head", head_name(cfg.head)},
          {"log_scale_min", cfg.log_scale_min},
          {"log_scale_max", cfg.log_scale_max},
          {"params", std::vector<double>(p.data(), p.data() + p.size())}};
}

MlpNet network_from_json(const nlohmann::json& j) {
  if (j.value("kind", std::string()) != "mlp") throw std::invalid_argument("network_from_json: not an mlp");
  MlpConfig cfg;
  cfg.dims = j.at("dims").get<std::vector<Index>>();
  cfg.negative_slope = j.at("negative_slope").get<double>();
  cfg.head = head_from_name(j.at("head").get<std::string>());
  cfg.log_scale_min = j.at("log_scale_min").get<double>();
  cfg.log_scale_max = j.at("log_scale_max").get<double>();
  MlpNet net(cfg);
  const auto params = j.at("params").get<std::vector<double>>();
  net.set_params(Eigen::Map<const Eigen::VectorXd>(params.data(), static_cast<Index>(params.size())));
  return net;
}

}  // namespace vlgo
