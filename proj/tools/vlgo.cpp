// vlgo: runs the desk-scale experiments and the gradient oracle suite.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "vlgo/experiments.hpp"
#include "vlgo/run_config.hpp"

namespace {

struct Options {
  std::string config;
  std::string experiment;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> workers;
  bool dry_run = false;
  bool print_defaults = false;
};

vlgo::RunConfig resolve(const Options& opt) {
  nlohmann::json doc = nlohmann::json::object();
  if (!opt.config.empty()) doc = vlgo::to_json(vlgo::load_run_config(opt.config));
  if (!opt.experiment.empty()) doc["experiment"] = opt.experiment;
  if (opt.seed) doc["seed"] = *opt.seed;
  if (opt.out) doc["output_dir"] = *opt.out;
  if (opt.workers) doc["workers"] = *opt.workers;
  return vlgo::parse_run_config(doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational Lie group operator experiments"};
  Options opt;
  app.add_option("experiment", opt.experiment,
                 "swissroll | manifoldclr-toy | semisup-toy | check-grads | paths (overrides the config)");
  app.add_option("--config", opt.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", opt.seed, "Master seed");
  app.add_option("--out", opt.out, "Output directory");
  app.add_option("--workers", opt.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--dry-run", opt.dry_run, "Validate the configuration and exit");
  app.add_flag("--print-defaults", opt.print_defaults, "Print the default configuration and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? vlgo::kExitOk : vlgo::kExitConfig;
  }

  if (opt.print_defaults) {
    std::cout << vlgo::to_json(vlgo::RunConfig{}).dump(2) << '\n';
    return vlgo::kExitOk;
  }

  vlgo::RunConfig cfg;
  try {
    cfg = resolve(opt);
    vlgo::validate(cfg);
  } catch (const vlgo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return vlgo::kExitConfig;
  }
  if (opt.dry_run) {
    std::cout << "config ok: " << vlgo::to_string(cfg.experiment) << ", seed " << cfg.seed << ", output "
              << cfg.output_dir << '\n';
    return vlgo::kExitOk;
  }
  return vlgo::run_experiment(cfg, std::cout);
}
