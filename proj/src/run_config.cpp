#include "vlgo/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace vlgo {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

[[noreturn]] void fail(const std::string& path, const std::string& msg) { throw ConfigError(path, msg); }

const char* type_name(const json& j) {
  if (j.is_boolean()) return "a boolean";
  if (j.is_number_integer()) return "an integer";
  if (j.is_number()) return "a number";
  if (j.is_string()) return "a string";
  if (j.is_array()) return "an array";
  if (j.is_object()) return "an object";
  return "null";
}

/// Field names and value types of `user` must exist in `defaults`.
void check_shape(const json& defaults, const json& user, const std::string& path) {
  const auto mismatch = [&] {
    fail(path.empty() ? "<root>" : path, std::string("expected ") + type_name(defaults) + ", got " + type_name(user));
  };
  if (defaults.is_object()) {
    if (!user.is_object()) mismatch();
    for (const auto& [key, value] : user.items()) {
      if (!defaults.contains(key)) fail(join(path, key), "unknown field");
      check_shape(defaults.at(key), value, join(path, key));
    }
  } else if (defaults.is_array()) {
    if (!user.is_array()) mismatch();
    if (!defaults.empty()) {
      for (std::size_t i = 0; i < user.size(); ++i) {
        check_shape(defaults.front(), user[i], path + "[" + std::to_string(i) + "]");
      }
    }
  } else if (defaults.is_boolean()) {
    if (!user.is_boolean()) mismatch();
  } else if (defaults.is_number_integer()) {
    if (!user.is_number_integer()) mismatch();
  } else if (defaults.is_number()) {
    if (!user.is_number()) mismatch();
  } else if (defaults.is_string()) {
    if (!user.is_string()) mismatch();
  }
}

template <typename T>
T read(const json& j, const std::string& path, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(join(path, key), e.what());
  }
}

void require(bool ok, const std::string& path, const std::string& msg) {
  if (!ok) fail(path, msg);
}

// ---- enums ----

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adamw"; }
std::string to_string(DistanceKind k) { return k == DistanceKind::squared ? "squared" : "normalized"; }
std::string to_string(AugmentSource k) {
  switch (k) {
    case AugmentSource::prior:
      return "prior";
    case AugmentSource::encoder:
      return "encoder";
    case AugmentSource::none:
      return "none";
  }
  return "none";
}

OptimizerKind optimizer_kind(const std::string& s, const std::string& path) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adamw") return OptimizerKind::adamw;
  fail(path, "expected \"sgd\" or \"adamw\", got \"" + s + "\"");
}

DistanceKind distance_kind(const std::string& s, const std::string& path) {
  if (s == "squared") return DistanceKind::squared;
  if (s == "normalized") return DistanceKind::normalized;
  fail(path, "expected \"squared\" or \"normalized\", got \"" + s + "\"");
}

AugmentSource augment_source(const std::string& s, const std::string& path) {
  if (s == "prior") return AugmentSource::prior;
  if (s == "encoder") return AugmentSource::encoder;
  if (s == "none") return AugmentSource::none;
  fail(path, "expected \"prior\", \"encoder\" or \"none\", got \"" + s + "\"");
}

ExperimentKind experiment_kind(const std::string& s, const std::string& path) {
  for (ExperimentKind k : {ExperimentKind::swissroll, ExperimentKind::manifoldclr_toy, ExperimentKind::semisup_toy,
                           ExperimentKind::check_grads, ExperimentKind::paths}) {
    if (to_string(k) == s) return k;
  }
  fail(path, "unknown experiment \"" + s + "\"");
}

// ---- leaf structs ----

json to_json(const OptimizerConfig& c) {
  return {{"kind", to_string(c.kind)}, {"lr", c.lr},       {"weight_decay", c.weight_decay},
          {"clip_norm", c.clip_norm},  {"beta1", c.beta1}, {"beta2", c.beta2},
          {"eps", c.eps}};
}

OptimizerConfig optimizer_from(const json& j, const std::string& path) {
  OptimizerConfig c;
  c.kind = optimizer_kind(read<std::string>(j, path, "kind"), join(path, "kind"));
  c.lr = read<double>(j, path, "lr");
  c.weight_decay = read<double>(j, path, "weight_decay");
  c.clip_norm = read<double>(j, path, "clip_norm");
  c.beta1 = read<double>(j, path, "beta1");
  c.beta2 = read<double>(j, path, "beta2");
  c.eps = read<double>(j, path, "eps");
  require(c.lr > 0.0, join(path, "lr"), "must be > 0");
  require(c.weight_decay >= 0.0, join(path, "weight_decay"), "must be >= 0");
  require(c.beta1 >= 0.0 && c.beta1 < 1.0, join(path, "beta1"), "must lie in [0, 1)");
  require(c.beta2 >= 0.0 && c.beta2 < 1.0, join(path, "beta2"), "must lie in [0, 1)");
  require(c.eps > 0.0, join(path, "eps"), "must be > 0");
  return c;
}

json to_json(const FistaConfig& c) {
  return {{"l1_weight", c.l1_weight},
          {"max_iters", c.max_iters},
          {"tol", c.tol},
          {"initial_lipschitz", c.initial_lipschitz},
          {"backtrack_factor", c.backtrack_factor},
          {"restart", c.restart}};
}

FistaConfig fista_from(const json& j, const std::string& path) {
  FistaConfig c;
  c.l1_weight = read<double>(j, path, "l1_weight");
  c.max_iters = read<int>(j, path, "max_iters");
  c.tol = read<double>(j, path, "tol");
  c.initial_lipschitz = read<double>(j, path, "initial_lipschitz");
  c.backtrack_factor = read<double>(j, path, "backtrack_factor");
  c.restart = read<bool>(j, path, "restart");
  require(c.l1_weight >= 0.0, join(path, "l1_weight"), "must be >= 0");
  require(c.max_iters >= 1, join(path, "max_iters"), "must be >= 1");
  require(c.tol >= 0.0, join(path, "tol"), "must be >= 0");
  require(c.initial_lipschitz > 0.0, join(path, "initial_lipschitz"), "must be > 0");
  require(c.backtrack_factor > 1.0, join(path, "backtrack_factor"), "must be > 1");
  return c;
}

json to_json(const VariationalConfig& c) {
  return {{"samples", c.samples}, {"zeta", c.zeta}, {"use_threshold", c.use_threshold}, {"beta_kl", c.beta_kl}};
}

VariationalConfig variational_from(const json& j, const std::string& path) {
  VariationalConfig c;
  c.samples = read<int>(j, path, "samples");
  c.zeta = read<double>(j, path, "zeta");
  c.use_threshold = read<bool>(j, path, "use_threshold");
  c.beta_kl = read<double>(j, path, "beta_kl");
  require(c.samples >= 1, join(path, "samples"), "must be >= 1");
  require(c.zeta >= 0.0, join(path, "zeta"), "must be >= 0");
  require(c.beta_kl >= 0.0, join(path, "beta_kl"), "must be >= 0");
  return c;
}

json to_json(const InitConfig& c) {
  return {{"alpha", c.alpha},
          {"beta_eig", c.beta_eig},
          {"jitter_sd", c.jitter_sd},
          {"odd_trailing_cell", c.odd_trailing_cell}};
}

InitConfig init_from(const json& j, const std::string& path) {
  InitConfig c;
  c.alpha = read<double>(j, path, "alpha");
  c.beta_eig = read<double>(j, path, "beta_eig");
  c.jitter_sd = read<double>(j, path, "jitter_sd");
  c.odd_trailing_cell = read<bool>(j, path, "odd_trailing_cell");
  require(c.jitter_sd >= 0.0, join(path, "jitter_sd"), "must be >= 0");
  return c;
}

json to_json(const WarmupSchedule& c) {
  return {{"total_iters", c.total_iters}, {"mu0", c.mu0}, {"b0", c.b0}};
}

WarmupSchedule warmup_from(const json& j, const std::string& path) {
  WarmupSchedule c;
  c.total_iters = read<Index>(j, path, "total_iters");
  c.mu0 = read<double>(j, path, "mu0");
  c.b0 = read<double>(j, path, "b0");
  require(c.total_iters >= 0, join(path, "total_iters"), "must be >= 0");
  require(c.b0 > 0.0, join(path, "b0"), "must be > 0");
  return c;
}

std::vector<Index> widths_from(const json& j, const std::string& path, const char* key) {
  auto v = read<std::vector<Index>>(j, path, key);
  for (std::size_t i = 0; i < v.size(); ++i) {
    require(v[i] >= 1, join(path, key) + "[" + std::to_string(i) + "]", "width must be >= 1");
  }
  return v;
}

// ---- swissroll ----

json to_json(const LieTrainConfig& c) {
  return {{"epochs", c.epochs},
          {"fro_weight", c.fro_weight},
          {"fista", to_json(c.fista)},
          {"variational", to_json(c.variational)},
          {"prior_shift", c.prior_shift},
          {"prior_scale", c.prior_scale},
          {"encoder_hidden", c.encoder_hidden},
          {"encoder_input_scale", c.encoder_input_scale},
          {"encoder_init_log_scale", c.encoder_init_log_scale},
          {"encoder_output_init_scale", c.encoder_output_init_scale},
          {"dict_optimizer", to_json(c.dict_optimizer)},
          {"encoder_optimizer", to_json(c.encoder_optimizer)}};
}

LieTrainConfig train_from(const json& j, const std::string& path) {
  LieTrainConfig c;
  c.epochs = read<std::int64_t>(j, path, "epochs");
  c.fro_weight = read<double>(j, path, "fro_weight");
  c.fista = fista_from(j.at("fista"), join(path, "fista"));
  c.variational = variational_from(j.at("variational"), join(path, "variational"));
  c.prior_shift = read<double>(j, path, "prior_shift");
  c.prior_scale = read<double>(j, path, "prior_scale");
  c.encoder_hidden = widths_from(j, path, "encoder_hidden");
  c.encoder_input_scale = read<double>(j, path, "encoder_input_scale");
  c.encoder_init_log_scale = read<double>(j, path, "encoder_init_log_scale");
  c.encoder_output_init_scale = read<double>(j, path, "encoder_output_init_scale");
  c.dict_optimizer = optimizer_from(j.at("dict_optimizer"), join(path, "dict_optimizer"));
  c.encoder_optimizer = optimizer_from(j.at("encoder_optimizer"), join(path, "encoder_optimizer"));
  require(c.epochs >= 0, join(path, "epochs"), "must be >= 0");
  require(c.fro_weight >= 0.0, join(path, "fro_weight"), "must be >= 0");
  require(c.prior_scale > 0.0, join(path, "prior_scale"), "must be > 0");
  require(c.encoder_input_scale > 0.0, join(path, "encoder_input_scale"), "must be > 0");
  return c;
}

json to_json(const SwissRollExperiment& c) {
  return {{"points", c.points},
          {"noise_sd", c.noise_sd},
          {"data_scale", c.data_scale},
          {"k_lo", c.k_lo},
          {"k_hi", c.k_hi},
          {"pairs_per_iter", c.pairs_per_iter},
          {"heldout_pairs", c.heldout_pairs},
          {"num_ops", c.num_ops},
          {"init", to_json(c.init)},
          {"train", to_json(c.train)},
          {"run_fista", c.run_fista},
          {"variants", c.variants},
          {"samples", c.samples},
          {"path_extent", c.path_extent},
          {"path_step", c.path_step},
          {"path_starts", c.path_starts}};
}

SwissRollExperiment swissroll_from(const json& j, const std::string& path) {
  SwissRollExperiment c;
  c.points = read<Index>(j, path, "points");
  c.noise_sd = read<double>(j, path, "noise_sd");
  c.data_scale = read<double>(j, path, "data_scale");
  c.k_lo = read<Index>(j, path, "k_lo");
  c.k_hi = read<Index>(j, path, "k_hi");
  c.pairs_per_iter = read<Index>(j, path, "pairs_per_iter");
  c.heldout_pairs = read<Index>(j, path, "heldout_pairs");
  c.num_ops = read<Index>(j, path, "num_ops");
  c.init = init_from(j.at("init"), join(path, "init"));
  c.train = train_from(j.at("train"), join(path, "train"));
  c.run_fista = read<bool>(j, path, "run_fista");
  c.variants = read<std::vector<std::string>>(j, path, "variants");
  c.samples = read<std::vector<int>>(j, path, "samples");
  c.path_extent = read<double>(j, path, "path_extent");
  c.path_step = read<double>(j, path, "path_step");
  c.path_starts = read<Index>(j, path, "path_starts");
  require(c.points >= 2, join(path, "points"), "must be >= 2");
  require(c.noise_sd >= 0.0, join(path, "noise_sd"), "must be >= 0");
  require(c.data_scale > 0.0, join(path, "data_scale"), "must be > 0");
  require(c.k_lo >= 1, join(path, "k_lo"), "must be >= 1");
  require(c.k_hi >= c.k_lo, join(path, "k_hi"), "must be >= k_lo");
  require(c.k_hi < c.points, join(path, "k_hi"), "must be < points");
  require(c.pairs_per_iter >= 1, join(path, "pairs_per_iter"), "must be >= 1");
  require(c.heldout_pairs >= 1, join(path, "heldout_pairs"), "must be >= 1");
  require(c.num_ops >= 1, join(path, "num_ops"), "must be >= 1");
  require(c.init.odd_trailing_cell, join(path, "init.odd_trailing_cell"), "the 3-D roll needs the trailing 1x1 cell");
  for (std::size_t i = 0; i < c.variants.size(); ++i) {
    require(c.variants[i] == "standard" || c.variants[i] == "thresholded",
            join(path, "variants") + "[" + std::to_string(i) + "]", "expected \"standard\" or \"thresholded\"");
  }
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    require(c.samples[i] >= 1, join(path, "samples") + "[" + std::to_string(i) + "]", "must be >= 1");
  }
  require(c.path_extent >= 0.0, join(path, "path_extent"), "must be >= 0");
  require(c.path_step > 0.0, join(path, "path_step"), "must be > 0");
  require(c.path_starts >= 0, join(path, "path_starts"), "must be >= 0");
  return c;
}

// ---- contrastive ----

json to_json(const SynthClassConfig& c) {
  return {{"frequencies", c.frequencies}, {"segment", c.segment},   {"center_sd", c.center_sd},
          {"radius", c.radius},           {"noise_sd", c.noise_sd}, {"pair_sd", c.pair_sd}};
}

SynthClassConfig synth_from(const json& j, const std::string& path) {
  SynthClassConfig c;
  c.frequencies = read<Index>(j, path, "frequencies");
  c.segment = read<double>(j, path, "segment");
  c.center_sd = read<double>(j, path, "center_sd");
  c.radius = read<double>(j, path, "radius");
  c.noise_sd = read<double>(j, path, "noise_sd");
  c.pair_sd = read<double>(j, path, "pair_sd");
  require(c.frequencies >= 1, join(path, "frequencies"), "must be >= 1");
  require(c.segment > 0.0, join(path, "segment"), "must be > 0");
  require(c.center_sd >= 0.0, join(path, "center_sd"), "must be >= 0");
  require(c.radius >= 0.0, join(path, "radius"), "must be >= 0");
  require(c.noise_sd >= 0.0, join(path, "noise_sd"), "must be >= 0");
  require(c.pair_sd >= 0.0, join(path, "pair_sd"), "must be >= 0");
  return c;
}

json to_json(const ManifoldClrConfig& c) {
  return {{"temperature", c.contrastive.temperature},
          {"distance", to_string(c.contrastive.distance)},
          {"use_projection", c.contrastive.use_projection},
          {"augment_source", to_string(c.contrastive.augment_source)},
          {"lambda_manifold", c.lambda_manifold},
          {"variational", to_json(c.variational)},
          {"stop_grad_target", c.stop_grad_target},
          {"fixed_prior", c.fixed_prior},
          {"prior_threshold", c.prior_threshold},
          {"kl_prior_stop_grad", c.kl_prior_stop_grad},
          {"warmup", to_json(c.warmup)},
          {"feature_dim", c.feature_dim},
          {"num_ops", c.num_ops},
          {"block_size", c.block_size},
          {"backbone_hidden", c.backbone_hidden},
          {"encoder_hidden", c.encoder_hidden},
          {"prior_hidden", c.prior_hidden},
          {"projection_hidden", c.projection_hidden},
          {"projection_dim", c.projection_dim},
          {"dict_init", to_json(c.dict_init)},
          {"coefficient_init_scale", c.coefficient_init_scale},
          {"backbone_optimizer", to_json(c.backbone_optimizer)},
          {"projection_optimizer", to_json(c.projection_optimizer)},
          {"dict_optimizer", to_json(c.dict_optimizer)},
          {"encoder_optimizer", to_json(c.encoder_optimizer)},
          {"prior_optimizer", to_json(c.prior_optimizer)}};
}

ManifoldClrConfig model_from(const json& j, const std::string& path) {
  ManifoldClrConfig c;
  c.contrastive.temperature = read<double>(j, path, "temperature");
  c.contrastive.distance = distance_kind(read<std::string>(j, path, "distance"), join(path, "distance"));
  c.contrastive.use_projection = read<bool>(j, path, "use_projection");
  c.contrastive.augment_source =
      augment_source(read<std::string>(j, path, "augment_source"), join(path, "augment_source"));
  c.lambda_manifold = read<double>(j, path, "lambda_manifold");
  c.variational = variational_from(j.at("variational"), join(path, "variational"));
  c.stop_grad_target = read<bool>(j, path, "stop_grad_target");
  c.fixed_prior = read<bool>(j, path, "fixed_prior");
  c.prior_threshold = read<bool>(j, path, "prior_threshold");
  c.kl_prior_stop_grad = read<bool>(j, path, "kl_prior_stop_grad");
  c.warmup = warmup_from(j.at("warmup"), join(path, "warmup"));
  c.feature_dim = read<Index>(j, path, "feature_dim");
  c.num_ops = read<Index>(j, path, "num_ops");
  c.block_size = read<Index>(j, path, "block_size");
  c.backbone_hidden = widths_from(j, path, "backbone_hidden");
  c.encoder_hidden = widths_from(j, path, "encoder_hidden");
  c.prior_hidden = widths_from(j, path, "prior_hidden");
  c.projection_hidden = widths_from(j, path, "projection_hidden");
  c.projection_dim = read<Index>(j, path, "projection_dim");
  c.dict_init = init_from(j.at("dict_init"), join(path, "dict_init"));
  c.coefficient_init_scale = read<double>(j, path, "coefficient_init_scale");
  c.backbone_optimizer = optimizer_from(j.at("backbone_optimizer"), join(path, "backbone_optimizer"));
  c.projection_optimizer = optimizer_from(j.at("projection_optimizer"), join(path, "projection_optimizer"));
  c.dict_optimizer = optimizer_from(j.at("dict_optimizer"), join(path, "dict_optimizer"));
  c.encoder_optimizer = optimizer_from(j.at("encoder_optimizer"), join(path, "encoder_optimizer"));
  c.prior_optimizer = optimizer_from(j.at("prior_optimizer"), join(path, "prior_optimizer"));
  require(c.contrastive.temperature > 0.0, join(path, "temperature"), "must be > 0");
  require(c.lambda_manifold >= 0.0, join(path, "lambda_manifold"), "must be >= 0");
  require(c.feature_dim >= 1, join(path, "feature_dim"), "must be >= 1");
  require(c.num_ops >= 1, join(path, "num_ops"), "must be >= 1");
  require(c.block_size >= 1 && c.feature_dim % c.block_size == 0, join(path, "block_size"),
          "must be >= 1 and divide feature_dim");
  require(c.projection_dim >= 1, join(path, "projection_dim"), "must be >= 1");
  return c;
}

json to_json(const LinearProbeConfig& c) {
  return {{"epochs", c.epochs},
          {"lr_start", c.lr_start},
          {"lr_end", c.lr_end},
          {"test_fraction", c.test_fraction},
          {"standardize", c.standardize}};
}

LinearProbeConfig probe_from(const json& j, const std::string& path) {
  LinearProbeConfig c;
  c.epochs = read<int>(j, path, "epochs");
  c.lr_start = read<double>(j, path, "lr_start");
  c.lr_end = read<double>(j, path, "lr_end");
  c.test_fraction = read<double>(j, path, "test_fraction");
  c.standardize = read<bool>(j, path, "standardize");
  require(c.epochs >= 1, join(path, "epochs"), "must be >= 1");
  require(c.lr_start > 0.0, join(path, "lr_start"), "must be > 0");
  require(c.lr_end > 0.0, join(path, "lr_end"), "must be > 0");
  require(c.test_fraction > 0.0 && c.test_fraction < 1.0, join(path, "test_fraction"), "must lie in (0, 1)");
  return c;
}

json to_json(const ManifoldClrToyExperiment& c) {
  return {{"classes", c.classes},
          {"ambient_dim", c.ambient_dim},
          {"intrinsic_dim", c.intrinsic_dim},
          {"data", to_json(c.data)},
          {"train_per_class", c.train_per_class},
          {"test_per_class", c.test_per_class},
          {"batch_size", c.batch_size},
          {"iterations", c.iterations},
          {"trials", c.trials},
          {"system", c.system},
          {"compare_simclr", c.compare_simclr},
          {"model", to_json(c.model)},
          {"probe", to_json(c.probe)},
          {"log_every", c.log_every}};
}

ManifoldClrToyExperiment clr_from(const json& j, const std::string& path) {
  ManifoldClrToyExperiment c;
  c.classes = read<int>(j, path, "classes");
  c.ambient_dim = read<Index>(j, path, "ambient_dim");
  c.intrinsic_dim = read<Index>(j, path, "intrinsic_dim");
  c.data = synth_from(j.at("data"), join(path, "data"));
  c.train_per_class = read<Index>(j, path, "train_per_class");
  c.test_per_class = read<Index>(j, path, "test_per_class");
  c.batch_size = read<Index>(j, path, "batch_size");
  c.iterations = read<int>(j, path, "iterations");
  c.trials = read<int>(j, path, "trials");
  c.system = read<std::string>(j, path, "system");
  c.compare_simclr = read<bool>(j, path, "compare_simclr");
  c.model = model_from(j.at("model"), join(path, "model"));
  c.probe = probe_from(j.at("probe"), join(path, "probe"));
  c.log_every = read<int>(j, path, "log_every");
  require(c.classes >= 2, join(path, "classes"), "must be >= 2");
  require(c.ambient_dim >= 1, join(path, "ambient_dim"), "must be >= 1");
  require(c.intrinsic_dim >= 0 && c.intrinsic_dim <= c.ambient_dim, join(path, "intrinsic_dim"),
          "must lie in [0, ambient_dim]");
  require(c.train_per_class >= 1, join(path, "train_per_class"), "must be >= 1");
  require(c.test_per_class >= 1, join(path, "test_per_class"), "must be >= 1");
  require(c.batch_size >= 2, join(path, "batch_size"), "must be >= 2 (in-batch negatives)");
  require(c.iterations >= 0, join(path, "iterations"), "must be >= 0");
  require(c.trials >= 1, join(path, "trials"), "must be >= 1");
  require(c.log_every >= 1, join(path, "log_every"), "must be >= 1");
  try {
    ManifoldClrConfig probe = c.model;
    apply_system_preset(probe, c.system);
  } catch (const ConfigError& e) {
    fail(join(path, "system"), e.what());
  }
  return c;
}

// ---- semisup ----

json to_json(const SemiSupConfig& c) {
  return {{"labeled_batch", c.labeled_batch},
          {"unlabeled_batch", c.unlabeled_batch},
          {"confidence", c.confidence},
          {"iterations", c.iterations},
          {"ema_decay", c.ema_decay},
          {"ema_pseudo_labels", c.ema_pseudo_labels},
          {"unlabeled_weight", c.unlabeled_weight},
          {"hidden", c.hidden},
          {"optimizer", to_json(c.optimizer)},
          {"prior_threshold", c.prior_threshold},
          {"zeta", c.zeta}};
}

SemiSupConfig semisup_from(const json& j, const std::string& path) {
  SemiSupConfig c;
  c.labeled_batch = read<Index>(j, path, "labeled_batch");
  c.unlabeled_batch = read<Index>(j, path, "unlabeled_batch");
  c.confidence = read<double>(j, path, "confidence");
  c.iterations = read<int>(j, path, "iterations");
  c.ema_decay = read<double>(j, path, "ema_decay");
  c.ema_pseudo_labels = read<bool>(j, path, "ema_pseudo_labels");
  c.unlabeled_weight = read<double>(j, path, "unlabeled_weight");
  c.hidden = read<Index>(j, path, "hidden");
  c.optimizer = optimizer_from(j.at("optimizer"), join(path, "optimizer"));
  c.prior_threshold = read<bool>(j, path, "prior_threshold");
  c.zeta = read<double>(j, path, "zeta");
  try {
    validate(c);
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  return c;
}

json to_json(const SemiSupToyExperiment& c) {
  return {{"pretrain", to_json(c.pretrain)},     {"labels_per_class", c.labels_per_class},
          {"splits", c.splits},                  {"semisup", to_json(c.semisup)},
          {"methods", c.methods},                {"split_dir", c.split_dir}};
}

SemiSupToyExperiment semisup_toy_from(const json& j, const std::string& path) {
  SemiSupToyExperiment c;
  c.pretrain = clr_from(j.at("pretrain"), join(path, "pretrain"));
  c.labels_per_class = read<Index>(j, path, "labels_per_class");
  c.splits = read<int>(j, path, "splits");
  c.semisup = semisup_from(j.at("semisup"), join(path, "semisup"));
  c.methods = read<std::vector<std::string>>(j, path, "methods");
  c.split_dir = read<std::string>(j, path, "split_dir");
  require(c.labels_per_class >= 1, join(path, "labels_per_class"), "must be >= 1");
  require(c.labels_per_class <= c.pretrain.train_per_class, join(path, "labels_per_class"),
          "exceeds pretrain.train_per_class");
  require(c.splits >= 1, join(path, "splits"), "must be >= 1");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < c.methods.size(); ++i) {
    const std::string p = join(path, "methods") + "[" + std::to_string(i) + "]";
    require(parse_semisup_method(c.methods[i]).has_value(), p,
            "expected one of supervised, pseudo_label, mixup, vlgo");
    require(seen.insert(c.methods[i]).second, p, "duplicate method");
  }
  return c;
}

// ---- small sections ----

json to_json(const CheckGradsExperiment& c) { return {{"trials", c.trials}, {"perturb", c.perturb}}; }

CheckGradsExperiment check_from(const json& j, const std::string& path) {
  CheckGradsExperiment c;
  c.trials = read<int>(j, path, "trials");
  c.perturb = read<double>(j, path, "perturb");
  require(c.trials >= 1, join(path, "trials"), "must be >= 1");
  return c;
}

json to_json(const PathsExperiment& c) {
  return {{"dictionary", c.dictionary}, {"points", c.points}, {"noise_sd", c.noise_sd}, {"data_scale", c.data_scale},
          {"num_starts", c.num_starts}, {"extent", c.extent}, {"step", c.step}};
}

PathsExperiment paths_from(const json& j, const std::string& path) {
  PathsExperiment c;
  c.dictionary = read<std::string>(j, path, "dictionary");
  c.points = read<Index>(j, path, "points");
  c.noise_sd = read<double>(j, path, "noise_sd");
  c.data_scale = read<double>(j, path, "data_scale");
  c.num_starts = read<Index>(j, path, "num_starts");
  c.extent = read<double>(j, path, "extent");
  c.step = read<double>(j, path, "step");
  require(c.points >= 1, join(path, "points"), "must be >= 1");
  require(c.noise_sd >= 0.0, join(path, "noise_sd"), "must be >= 0");
  require(c.data_scale > 0.0, join(path, "data_scale"), "must be > 0");
  require(c.num_starts >= 1 && c.num_starts <= c.points, join(path, "num_starts"), "must lie in [1, points]");
  require(c.extent >= 0.0, join(path, "extent"), "must be >= 0");
  require(c.step > 0.0, join(path, "step"), "must be > 0");
  return c;
}

}  // namespace

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::swissroll:
      return "swissroll";
    case ExperimentKind::manifoldclr_toy:
      return "manifoldclr-toy";
    case ExperimentKind::semisup_toy:
      return "semisup-toy";
    case ExperimentKind::check_grads:
      return "check-grads";
    case ExperimentKind::paths:
      return "paths";
  }
  return "swissroll";
}

LieTrainConfig SwissRollExperiment::default_train() {
  LieTrainConfig c;
  c.epochs = 1000;
  c.fro_weight = 1e-3;
  c.fista.l1_weight = 0.6;
  c.variational.samples = 20;
  c.variational.beta_kl = 5e-3;
  c.prior_scale = 0.01;
  c.encoder_hidden = {128, 128};
  c.encoder_input_scale = 0.5;
  c.encoder_optimizer.lr = 3e-3;
  return c;
}

ManifoldClrConfig ManifoldClrToyExperiment::default_model() {
  ManifoldClrConfig c;
  c.contrastive.distance = DistanceKind::normalized;
  c.warmup.total_iters = 1000;
  return c;
}

SemiSupConfig SemiSupToyExperiment::default_semisup() {
  SemiSupConfig c;
  c.iterations = 2000;
  c.ema_decay = 0.999;
  return c;
}

void apply_system_preset(ManifoldClrConfig& cfg, const std::string& system) {
  if (system == "S0") return;
  if (system == "S1") {
    cfg.stop_grad_target = false;
  } else if (system == "S2") {
    cfg.contrastive.augment_source = AugmentSource::none;
  } else if (system == "S3") {
    cfg.lambda_manifold = 0.0;
  } else if (system == "S4") {
    cfg.fixed_prior = true;
  } else if (system == "simclr") {
    cfg.lambda_manifold = 0.0;
    cfg.variational.beta_kl = 0.0;
    cfg.contrastive.augment_source = AugmentSource::none;
  } else {
    throw ConfigError("system", "expected S0, S1, S2, S3, S4 or simclr, got \"" + system + "\"");
  }
}

json to_json(const RunConfig& cfg) {
  return {{"experiment", to_string(cfg.experiment)},
          {"seed", cfg.seed},
          {"output_dir", cfg.output_dir},
          {"workers", cfg.workers},
          {"record_runtime", cfg.record_runtime},
          {"swissroll", to_json(cfg.swissroll)},
          {"manifoldclr_toy", to_json(cfg.manifoldclr_toy)},
          {"semisup_toy", to_json(cfg.semisup_toy)},
          {"check_grads", to_json(cfg.check_grads)},
          {"paths", to_json(cfg.paths)}};
}

RunConfig parse_run_config(const json& doc) {
  const json defaults = to_json(RunConfig{});
  check_shape(defaults, doc, "");
  json merged = defaults;
  merged.merge_patch(doc);

  RunConfig cfg;
  cfg.experiment = experiment_kind(read<std::string>(merged, "", "experiment"), "experiment");
  if (!merged.at("seed").is_number_unsigned() && merged.at("seed").get<std::int64_t>() < 0) fail("seed", "must be >= 0");
  cfg.seed = read<std::uint64_t>(merged, "", "seed");
  cfg.output_dir = read<std::string>(merged, "", "output_dir");
  cfg.workers = read<int>(merged, "", "workers");
  cfg.record_runtime = read<bool>(merged, "", "record_runtime");
  cfg.swissroll = swissroll_from(merged.at("swissroll"), "swissroll");
  cfg.manifoldclr_toy = clr_from(merged.at("manifoldclr_toy"), "manifoldclr_toy");
  cfg.semisup_toy = semisup_toy_from(merged.at("semisup_toy"), "semisup_toy");
  cfg.check_grads = check_from(merged.at("check_grads"), "check_grads");
  cfg.paths = paths_from(merged.at("paths"), "paths");
  validate(cfg);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", "malformed JSON in " + path.string() + ": " + e.what());
  }
  return parse_run_config(doc);
}

void validate(const RunConfig& cfg) {
  require(cfg.workers >= 1, "workers", "must be >= 1");
  require(!cfg.output_dir.empty(), "output_dir", "must not be empty");
  if (cfg.experiment == ExperimentKind::paths) {
    require(!cfg.paths.dictionary.empty(), "paths.dictionary", "a dictionary checkpoint is required");
    require(std::filesystem::is_regular_file(cfg.paths.dictionary), "paths.dictionary",
            "no such file: " + cfg.paths.dictionary);
  }
  if (cfg.experiment == ExperimentKind::semisup_toy && !cfg.semisup_toy.split_dir.empty()) {
    require(std::filesystem::is_directory(cfg.semisup_toy.split_dir), "semisup_toy.split_dir",
            "no such directory: " + cfg.semisup_toy.split_dir);
  }
}

}  // namespace vlgo
