#include "vlgo/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <sstream>

#include "vlgo/data_gen.hpp"
#include "vlgo/metrics_io.hpp"
#include "vlgo/parallel.hpp"

namespace vlgo {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool writes_output(const RunConfig& cfg) { return !cfg.output_dir.empty(); }

std::vector<double> symmetric_grid(double extent, double step) {
  std::vector<double> grid;
  const auto half = static_cast<long>(std::floor(extent / step + 1e-9));
  for (long k = -half; k <= half; ++k) grid.push_back(static_cast<double>(k) * step);
  return grid;
}

double mean_heldout_di(const OperatorDictionaryd& dict, const PointPairBatch& pairs, const Eigen::MatrixXd& coeffs) {
  double sum = 0.0;
  Index count = 0;
  for (Index i = 0; i < pairs.size(); ++i) {
    const Eigen::VectorXd z = pairs.sources.row(i).transpose();
    const Eigen::VectorXd t = pairs.targets.row(i).transpose();
    const double before = (t - z).squaredNorm();
    if (before == 0.0) continue;
    sum += manifold_loss_value(dict, z, t, Eigen::VectorXd(coeffs.row(i).transpose())) / before;
    ++count;
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

PathsOutcome build_paths(const OperatorDictionaryd& dict, const Eigen::MatrixXd& starts,
                         const std::vector<double>& grid) {
  PathsOutcome out{starts, grid, {}};
  for (Index s = 0; s < starts.rows(); ++s) {
    for (Index m = 0; m < dict.size(); ++m) {
      out.paths.push_back(operator_paths(dict, starts.row(s).transpose(), m, grid));
    }
  }
  return out;
}

std::string loss_rows_csv(const std::vector<std::tuple<int, std::string, std::vector<ClrLosses>>>& runs, int every) {
  std::ostringstream os;
  os << "trial,system,iteration,total,contrastive,manifold,kl\n";
  for (const auto& [trial, system, losses] : runs) {
    for (std::size_t i = 0; i < losses.size(); ++i) {
      if ((i + 1) % static_cast<std::size_t>(every) != 0 && i + 1 != losses.size()) continue;
      const ClrLosses& l = losses[i];
      os << trial << ',' << system << ',' << (i + 1) << ',' << format_double(l.total) << ','
         << format_double(l.contrastive) << ',' << format_double(l.manifold) << ',' << format_double(l.kl) << '\n';
    }
  }
  return os.str();
}

}  // namespace

const SwissRollRun* SwissRollOutcome::find(const std::string& name) const {
  for (const auto& r : runs) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

SwissRollOutcome run_swissroll_experiment(const RunConfig& cfg, std::ostream* log) {
  const SwissRollExperiment& sr = cfg.swissroll;
  SwissRoll roll = swiss_roll(sr.points, sr.noise_sd, derive_seed(cfg.seed, {0x5011}));
  roll.points *= sr.data_scale;
  const NeighborTable table(roll.points, sr.k_hi);
  const auto epochs = std::max<std::int64_t>(1, sr.train.epochs);
  std::vector<PointPairBatch> batches;
  batches.reserve(static_cast<std::size_t>(epochs));
  for (std::int64_t e = 0; e < epochs; ++e) {
    batches.push_back(table.sample(roll.points, sr.k_lo, sr.k_hi, sr.pairs_per_iter,
                                   derive_seed(cfg.seed, {0xba7c, static_cast<std::uint64_t>(e)})));
  }
  const PointPairBatch heldout =
      table.sample(roll.points, sr.k_lo, sr.k_hi, sr.heldout_pairs, derive_seed(cfg.seed, {0x4e1d}));
  Rng init_rng = make_rng(cfg.seed, {0x1417});
  const OperatorDictionaryd init = init_dictionary(sr.num_ops, 3, 3, sr.init, init_rng);

  struct Plan {
    std::string name;
    LieTrainConfig train;
  };
  std::vector<Plan> plans;
  LieTrainConfig base = sr.train;
  base.workers = cfg.workers;
  base.record_runtime = cfg.record_runtime;
  base.seed = cfg.seed;
  if (sr.run_fista) {
    LieTrainConfig t = base;
    t.inference = InferenceKind::fista;
    plans.push_back({"fista", t});
  }
  for (const std::string& variant : sr.variants) {
    for (int j : sr.samples) {
      LieTrainConfig t = base;
      t.inference = InferenceKind::variational;
      t.variational.samples = j;
      t.variational.use_threshold = variant == "thresholded";
      plans.push_back({variant + "_J" + std::to_string(j), t});
    }
  }

  const fs::path out = cfg.output_dir;
  if (writes_output(cfg)) write_text_file(out / "swissroll_points.csv", points_csv(roll.points));
  const Index n_starts = std::min(sr.path_starts, heldout.size());
  const Eigen::MatrixXd starts = heldout.sources.topRows(n_starts);
  const std::vector<double> grid = symmetric_grid(sr.path_extent, sr.path_step);

  SwissRollOutcome outcome;
  json runs = json::array();
  for (const Plan& plan : plans) {
    SwissRollRun run{plan.name, train_lie_operators(batches, init, plan.train), 0.0};
    const Eigen::MatrixXd coeffs =
        infer_coefficients(run.result, heldout, plan.train, derive_seed(cfg.seed, {0x4e1e}));
    run.heldout_di = mean_heldout_di(run.result.dict, heldout, coeffs);
    const double wall = cfg.record_runtime ? run.result.wall_clock_s : 0.0;
    if (log) {
      const MetricsRecord& last = run.result.records.back();
      *log << "swissroll " << plan.name << ": mse " << format_double(last.mse) << ", l1 " << format_double(last.l1)
           << ", heldout di " << format_double(run.heldout_di) << ", " << format_double(run.result.wall_clock_s)
           << " s\n";
    }
    if (writes_output(cfg)) {
      RunSummary summary{to_json(cfg), cfg.seed, wall, run.result.records.back(),
                         {{"run", plan.name}, {"heldout_di", run.heldout_di}}};
      emit(run.result.records, sr.num_ops, out / ("metrics_" + plan.name + ".csv"),
           out / ("summary_" + plan.name + ".json"), summary);
      write_text_file(out / ("dict_" + plan.name + ".json"), dictionary_to_json(run.result.dict).dump(2) + "\n");
      if (n_starts > 0) {
        write_text_file(out / ("paths_" + plan.name + ".csv"),
                        paths_table_csv(build_paths(run.result.dict, starts, grid), sr.num_ops));
      }
    }
    runs.push_back({{"run", plan.name},
                    {"final", metrics_to_json(run.result.records.back())},
                    {"heldout_di", run.heldout_di},
                    {"wall_clock_s", wall}});
    outcome.runs.push_back(std::move(run));
  }
  if (writes_output(cfg)) {
    double total = 0.0;
    for (const auto& r : outcome.runs) total += r.result.wall_clock_s;
    RunSummary summary{to_json(cfg), cfg.seed, cfg.record_runtime ? total : 0.0, std::nullopt, {{"runs", runs}}};
    write_text_file(out / "summary.json", summary_to_json(summary).dump(2) + "\n");
  }
  return outcome;
}

PretrainedToy pretrain_toy(const ManifoldClrToyExperiment& exp, const std::string& system, std::uint64_t seed,
                           int workers) {
  const SynthClassManifolds gen(exp.classes, exp.ambient_dim, exp.intrinsic_dim, derive_seed(seed, {0xda7a}),
                                exp.data);
  ManifoldClrConfig mc = exp.model;
  apply_system_preset(mc, system);
  mc.workers = workers;
  Rng rng = make_rng(seed, {0x3});
  PretrainedToy out{gen.sample(exp.train_per_class, derive_seed(seed, {0x1})),
                    gen.sample(exp.test_per_class, derive_seed(seed, {0x2})),
                    make_manifoldclr_model(exp.ambient_dim, mc, rng),
                    {}};
  ManifoldClrOptimizers opt = make_manifoldclr_optimizers(mc);
  out.losses.reserve(static_cast<std::size_t>(exp.iterations));
  for (int it = 0; it < exp.iterations; ++it) {
    const auto u = static_cast<std::uint64_t>(it);
    const auto pairs = gen.sample_pairs(exp.batch_size, derive_seed(seed, {0x4, u}));
    out.losses.push_back(manifoldclr_step(out.model, opt, pairs.first, pairs.second, mc, it, derive_seed(seed, {0x5, u})));
  }
  return out;
}

std::string clr_results_csv(const std::vector<ClrTrialResult>& trials) {
  std::ostringstream os;
  os << "trial,system,probe_accuracy,effective_rank\n";
  for (const auto& t : trials) {
    os << t.trial << ',' << t.system << ',' << format_double(t.probe_accuracy) << ','
       << format_double(t.effective_rank) << '\n';
  }
  return os.str();
}

ClrToyOutcome run_manifoldclr_toy_experiment(const RunConfig& cfg, std::ostream* log) {
  const ManifoldClrToyExperiment& exp = cfg.manifoldclr_toy;
  std::vector<std::string> systems{exp.system};
  if (exp.compare_simclr && exp.system != "simclr") systems.emplace_back("simclr");

  const auto start = std::chrono::steady_clock::now();
  ClrToyOutcome outcome;
  std::vector<std::tuple<int, std::string, std::vector<ClrLosses>>> loss_log;
  for (int t = 0; t < exp.trials; ++t) {
    const std::uint64_t trial_seed = derive_seed(cfg.seed, {0xc1a0, static_cast<std::uint64_t>(t)});
    for (const std::string& system : systems) {
      PretrainedToy pre = pretrain_toy(exp, system, trial_seed, cfg.workers);
      const Eigen::MatrixXd ftr = encode_features(pre.model.backbone, pre.train.points);
      const Eigen::MatrixXd fte = encode_features(pre.model.backbone, pre.test.points);
      LinearProbeConfig probe = exp.probe;
      probe.seed = trial_seed;
      ClrTrialResult r{t, system, linear_probe(ftr, pre.train.labels, fte, pre.test.labels, probe),
                       effective_rank(ftr), pre.losses.empty() ? ClrLosses{} : pre.losses.back()};
      if (log) {
        *log << "manifoldclr-toy trial " << t << ' ' << system << ": probe accuracy "
             << format_double(r.probe_accuracy) << ", effective rank " << format_double(r.effective_rank) << '\n';
      }
      outcome.trials.push_back(r);
      loss_log.emplace_back(t, system, std::move(pre.losses));
    }
  }
  if (writes_output(cfg)) {
    const fs::path out = cfg.output_dir;
    write_text_file(out / "clr_results.csv", clr_results_csv(outcome.trials));
    write_text_file(out / "clr_losses.csv", loss_rows_csv(loss_log, exp.log_every));
    json per_system = json::object();
    for (const std::string& system : systems) {
      double acc = 0.0;
      double rank = 0.0;
      int n = 0;
      for (const auto& r : outcome.trials) {
        if (r.system != system) continue;
        acc += r.probe_accuracy;
        rank += r.effective_rank;
        ++n;
      }
      per_system[system] = {{"mean_probe_accuracy", acc / n}, {"mean_effective_rank", rank / n}};
    }
    RunSummary summary{to_json(cfg), cfg.seed, cfg.record_runtime ? seconds_since(start) : 0.0, std::nullopt,
                       {{"systems", per_system}}};
    write_text_file(out / "summary.json", summary_to_json(summary).dump(2) + "\n");
  }
  return outcome;
}

json split_to_json(int split_id, const LabelSplit& split) {
  return {{"split_id", split_id},
          {"labels_per_class", split.per_class.empty() ? 0 : split.per_class.front().size()},
          {"per_class", split.per_class}};
}

LabelSplit split_from_json(const json& j) {
  LabelSplit s;
  try {
    s.per_class = j.at("per_class").get<std::vector<std::vector<Index>>>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("split_from_json: ") + e.what());
  }
  return s;
}

std::optional<double> SemiSupToyOutcome::accuracy(int id, const std::string& method) const {
  for (const auto& r : results) {
    if (r.split_id == id && r.method == method) return r.accuracy;
  }
  return std::nullopt;
}

std::string semisup_results_csv(const std::vector<SplitResult>& results) {
  std::ostringstream os;
  os << "split_id,method,accuracy,improvement_pct\n";
  for (const auto& r : results) {
    os << r.split_id << ',' << r.method << ',' << format_double(r.accuracy) << ','
       << format_double(r.improvement_pct) << '\n';
  }
  return os.str();
}

SemiSupToyOutcome run_semisup_toy_experiment(const RunConfig& cfg, std::ostream* log) {
  const SemiSupToyExperiment& exp = cfg.semisup_toy;
  const auto start = std::chrono::steady_clock::now();
  PretrainedToy pre = pretrain_toy(exp.pretrain, exp.pretrain.system, derive_seed(cfg.seed, {0x55a0}), cfg.workers);
  const SemiSupData data{encode_features(pre.model.backbone, pre.train.points), pre.train.labels,
                         encode_features(pre.model.backbone, pre.test.points), pre.test.labels, pre.train.num_classes};
  const SemiSupAugmenter aug{&pre.model.dict, &pre.model.prior};
  const fs::path out = cfg.output_dir;

  SemiSupToyOutcome outcome;
  for (int s = 0; s < exp.splits; ++s) {
    if (!exp.split_dir.empty()) {
      const fs::path file = fs::path(exp.split_dir) / ("split_" + std::to_string(s) + ".json");
      json doc;
      try {
        doc = json::parse(read_text_file(file));
      } catch (const json::exception& e) {
        throw ConfigError("semisup_toy.split_dir", "malformed split file " + file.string() + ": " + e.what());
      } catch (const IoError& e) {
        throw ConfigError("semisup_toy.split_dir", e.what());
      }
      outcome.splits.push_back(split_from_json(doc));
    } else {
      outcome.splits.push_back(make_label_split(data.train_labels, data.num_classes, exp.labels_per_class,
                                                derive_seed(cfg.seed, {0x5b17, static_cast<std::uint64_t>(s)})));
    }
  }

  // The supervised baseline always runs: improvements are measured against it.
  std::vector<SemiSupMethod> methods{SemiSupMethod::supervised};
  for (const std::string& name : exp.methods) {
    const SemiSupMethod m = *parse_semisup_method(name);
    if (m != SemiSupMethod::supervised) methods.push_back(m);
  }
  std::vector<std::vector<double>> acc(static_cast<std::size_t>(exp.splits), std::vector<double>(methods.size()));
  parallel_for(static_cast<std::size_t>(exp.splits), cfg.workers, [&](std::size_t s) {
    const std::uint64_t trial_seed = derive_seed(cfg.seed, {0x7e1a, s});
    for (std::size_t k = 0; k < methods.size(); ++k) {
      acc[s][k] = run_semisup_trial(data, outcome.splits[s], methods[k], aug, exp.semisup, trial_seed).accuracy;
    }
  });

  const bool report_supervised =
      std::find(exp.methods.begin(), exp.methods.end(), "supervised") != exp.methods.end();
  for (std::size_t k = 0; k < methods.size(); ++k) {
    if (k == 0 && !report_supervised) continue;
    MethodSummary ms{std::string(to_string(methods[k])), 0.0, 0.0, 0.0};
    std::vector<double> gains;
    for (int s = 0; s < exp.splits; ++s) {
      const auto us = static_cast<std::size_t>(s);
      const double gain = 100.0 * (acc[us][k] - acc[us][0]);
      outcome.results.push_back({s, ms.method, acc[us][k], gain});
      ms.mean_accuracy += acc[us][k] / exp.splits;
      gains.push_back(gain);
    }
    for (double g : gains) ms.mean_improvement_pct += g / exp.splits;
    if (gains.size() > 1) {
      double var = 0.0;
      for (double g : gains) var += (g - ms.mean_improvement_pct) * (g - ms.mean_improvement_pct);
      var /= static_cast<double>(gains.size() - 1);
      ms.improvement_se = std::sqrt(var / static_cast<double>(gains.size()));
    }
    if (log) {
      *log << "semisup-toy " << ms.method << ": mean accuracy " << format_double(ms.mean_accuracy)
           << ", improvement " << format_double(ms.mean_improvement_pct) << " +/- " << format_double(ms.improvement_se)
           << " pct points\n";
    }
    outcome.summary.push_back(ms);
  }
  std::stable_sort(outcome.results.begin(), outcome.results.end(),
                   [](const SplitResult& a, const SplitResult& b) { return a.split_id < b.split_id; });

  if (writes_output(cfg)) {
    for (int s = 0; s < exp.splits; ++s) {
      write_text_file(out / "splits" / ("split_" + std::to_string(s) + ".json"),
                      split_to_json(s, outcome.splits[static_cast<std::size_t>(s)]).dump(2) + "\n");
    }
    write_text_file(out / "semisup_results.csv", semisup_results_csv(outcome.results));
    json methods_json = json::array();
    for (const auto& ms : outcome.summary) {
      methods_json.push_back({{"method", ms.method},
                              {"mean_accuracy", ms.mean_accuracy},
                              {"mean_improvement_pct", ms.mean_improvement_pct},
                              {"improvement_se", ms.improvement_se}});
    }
    RunSummary summary{to_json(cfg), cfg.seed, cfg.record_runtime ? seconds_since(start) : 0.0, std::nullopt,
                       {{"methods", methods_json}}};
    write_text_file(out / "summary.json", summary_to_json(summary).dump(2) + "\n");
  }
  return outcome;
}

std::vector<GradCheck> run_check_grads_experiment(const RunConfig& cfg, std::ostream* log) {
  const std::vector<GradCheck> checks =
      run_gradient_checks({cfg.seed, cfg.check_grads.trials, cfg.check_grads.perturb});
  const std::string table = format_check_table(checks);
  if (log) *log << table;
  if (writes_output(cfg)) {
    std::ostringstream os;
    os << "check,max_error,tolerance,passed\n";
    for (const auto& c : checks) {
      os << c.name << ',' << format_double(c.max_error) << ',' << format_double(c.tolerance) << ','
         << (c.passed ? 1 : 0) << '\n';
    }
    write_text_file(fs::path(cfg.output_dir) / "check_grads.csv", os.str());
    write_text_file(fs::path(cfg.output_dir) / "check_grads.txt", table);
  }
  return checks;
}

std::string paths_table_csv(const PathsOutcome& paths, Index num_ops) {
  std::ostringstream os;
  const Index d = paths.starts.cols();
  os << "start,op,c";
  for (Index k = 1; k <= d; ++k) os << ",x_" << k;
  os << '\n';
  for (std::size_t p = 0; p < paths.paths.size(); ++p) {
    const auto s = static_cast<Index>(p) / num_ops;
    const auto m = static_cast<Index>(p) % num_ops;
    const Eigen::MatrixXd& path = paths.paths[p];
    for (Index g = 0; g < path.rows(); ++g) {
      os << s << ',' << m << ',' << format_double(paths.grid[static_cast<std::size_t>(g)]);
      for (Index k = 0; k < d; ++k) os << ',' << format_double(path(g, k));
      os << '\n';
    }
  }
  return os.str();
}

PathsOutcome run_paths_experiment(const RunConfig& cfg, std::ostream* log) {
  const PathsExperiment& pc = cfg.paths;
  OperatorDictionaryd dict;
  try {
    dict = dictionary_from_json(json::parse(read_text_file(pc.dictionary)));
  } catch (const json::exception& e) {
    throw ConfigError("paths.dictionary", std::string("malformed checkpoint: ") + e.what());
  } catch (const IoError& e) {
    throw ConfigError("paths.dictionary", e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError("paths.dictionary", e.what());
  }
  if (dict.dim() != 3) {
    throw ConfigError("paths.dictionary", "dictionary acts on dimension " + std::to_string(dict.dim()) +
                                              "; the swiss roll is 3-D");
  }
  SwissRoll roll = swiss_roll(pc.points, pc.noise_sd, derive_seed(cfg.seed, {0x5011}));
  roll.points *= pc.data_scale;
  Eigen::MatrixXd starts(pc.num_starts, 3);
  for (Index s = 0; s < pc.num_starts; ++s) starts.row(s) = roll.points.row(s * pc.points / pc.num_starts);
  PathsOutcome out = build_paths(dict, starts, symmetric_grid(pc.extent, pc.step));
  if (log) *log << "paths: " << out.paths.size() << " paths of " << out.grid.size() << " points\n";
  if (writes_output(cfg)) {
    write_text_file(fs::path(cfg.output_dir) / "paths.csv", paths_table_csv(out, dict.size()));
    write_text_file(fs::path(cfg.output_dir) / "swissroll_points.csv", points_csv(roll.points));
  }
  return out;
}

int run_experiment(const RunConfig& cfg, std::ostream& log) {
  try {
    validate(cfg);
    write_text_file(fs::path(cfg.output_dir) / "config.json", to_json(cfg).dump(2) + "\n");
    switch (cfg.experiment) {
      case ExperimentKind::swissroll:
        (void)run_swissroll_experiment(cfg, &log);
        break;
      case ExperimentKind::manifoldclr_toy:
        (void)run_manifoldclr_toy_experiment(cfg, &log);
        break;
      case ExperimentKind::semisup_toy:
        (void)run_semisup_toy_experiment(cfg, &log);
        break;
      case ExperimentKind::check_grads: {
        const auto checks = run_check_grads_experiment(cfg, &log);
        const bool ok = std::all_of(checks.begin(), checks.end(), [](const GradCheck& c) { return c.passed; });
        if (!ok) {
          log << "check-grads: at least one check exceeded its tolerance\n";
          return kExitCheckFailed;
        }
        break;
      }
      case ExperimentKind::paths:
        (void)run_paths_experiment(cfg, &log);
        break;
    }
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& e) {
    log << "numerical divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace vlgo
