#include "hwscen/config.hpp"

#include <fstream>

#include "hwscen/errors.hpp"

namespace hwscen {

using nlohmann::json;

std::pair<Lateral, Lateral> parse_class_filter(const std::string& text) {
  const auto arrow = text.find("->");
  if (arrow == std::string::npos) throw ConfigError("class_filter entry '" + text + "' must look like KL->LC");
  try {
    return {parse_lateral(text.substr(0, arrow)), parse_lateral(text.substr(arrow + 2))};
  } catch (const Error&) {
    throw ConfigError("class_filter entry '" + text + "' names an unknown lateral state");
  }
}

std::uint64_t stage_seed(const Config& cfg, SeedStage stage) {
  return cfg.seed + static_cast<std::uint64_t>(stage);
}

void Config::validate() const {
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (synth.kind != "archetype" && synth.kind != "random") throw ConfigError("synth.kind must be archetype or random");
  if (synth.scenes < 1 || synth.trajectories < 1 || synth.frames < 1) throw ConfigError("synth: counts must be >= 1");
  if (!(synth.dt > 0.0) || synth.noise_sigma < 0.0) throw ConfigError("synth: need dt > 0 and noise_sigma >= 0");
  detector.rules.validate();
  if (detector.window < 1) throw ConfigError("detector.window must be >= 1");
  dgsfm.validate();
  extraction.window.validate();
  if (!(extraction.train_fraction > 0.0 && extraction.train_fraction < 1.0))
    throw ConfigError("extraction.train_fraction must lie in (0, 1)");
  if (extraction.augment_count < 0 || !(extraction.augment_min_gap > 0.0))
    throw ConfigError("extraction: augment_count >= 0 and augment_min_gap > 0 required");
  model.validate();
  train.validate();
  if (clustering.k < 0 || clustering.max_iter < 1) throw ConfigError("clustering: k >= 0 and max_iter >= 1 required");
  if (clustering.records != "train" && clustering.records != "all")
    throw ConfigError("clustering.records must be train or all");
}

json config_to_json(const Config& c) {
  json up = json::array();
  for (const auto& p : c.detector.rules.up_pairs) up.push_back({p.tau, p.frames});
  json backends = json::array();
  for (auto b : c.clustering.backends) backends.push_back(to_string(b));
  return {
      {"seed", c.seed},
      {"jobs", c.jobs},
      {"synth",
       {{"kind", c.synth.kind},
        {"scenes", c.synth.scenes},
        {"trajectories", c.synth.trajectories},
        {"frames", c.synth.frames},
        {"noise_sigma", c.synth.noise_sigma},
        {"dt", c.synth.dt},
        {"mirror_odd", c.synth.mirror_odd}}},
      {"detector",
       {{"up_pairs", up},
        {"tau_down", c.detector.rules.tau_down},
        {"n_down", c.detector.rules.n_down},
        {"tau_extreme", c.detector.rules.tau_extreme},
        {"tau_lc", c.detector.rules.tau_lc},
        {"min_segment", c.detector.rules.min_segment},
        {"window", c.detector.window},
        {"ema_windows", c.detector.ema.windows},
        {"ema_alpha", c.detector.ema.alpha},
        {"ema_peak_factor", c.detector.ema.peak_factor},
        {"snippet", c.detector.snippet.enabled},
        {"snippet_len", c.detector.snippet.snippet_len},
        {"snippet_codebook_size", c.detector.snippet.codebook_size},
        {"snippet_latent_dim", c.detector.snippet.latent_dim},
        {"snippet_hidden", c.detector.snippet.hidden},
        {"snippet_epochs", c.detector.snippet.epochs},
        {"snippet_learning_rate", c.detector.snippet.learning_rate}}},
      {"dgsfm",
       {{"amplitude", c.dgsfm.egg.amplitude},
        {"sigma", c.dgsfm.egg.sigma},
        {"forward_stretch", c.dgsfm.egg.forward_stretch},
        {"rear_compress", c.dgsfm.egg.rear_compress},
        {"lateral_scale", c.dgsfm.egg.lateral_scale},
        {"tau_sum", c.dgsfm.tau_sum},
        {"n_dg", c.dgsfm.n_dg},
        {"softmax_temperature", c.dgsfm.softmax_temperature}}},
      {"extraction",
       {{"pre_frames", c.extraction.window.pre_frames},
        {"post_frames", c.extraction.window.post_frames},
        {"tensor_offset", c.extraction.window.tensor_offset},
        {"class_filter", c.extraction.class_filter},
        {"train_fraction", c.extraction.train_fraction},
        {"augment_count", c.extraction.augment_count},
        {"augment_min_gap", c.extraction.augment_min_gap}}},
      {"model",
       {{"latent_dim", c.model.latent_dim}, {"hidden", c.model.hidden}, {"codebook_size", c.model.codebook_size}}},
      {"train",
       {{"lambda_cl", c.train.lambda_cl},
        {"lambda_int", c.train.lambda_int},
        {"learning_rate", c.train.learning_rate},
        {"batch_size", c.train.batch_size},
        {"epochs", c.train.epochs},
        {"commitment_weight", c.train.commitment_weight},
        {"dead_code_threshold", c.train.dead_code_threshold},
        {"revival_noise", c.train.revival_noise},
        {"usage_decay", c.train.usage_decay},
        {"reduction", c.train.reduction == LossReduction::Mean ? "mean" : "sum"},
        {"standardize", c.train.standardize},
        {"compare_no_dk", c.compare_no_dk}}},
      {"clustering",
       {{"backends", backends},
        {"k", c.clustering.k},
        {"linkage", to_string(c.clustering.linkage)},
        {"max_iter", c.clustering.max_iter},
        {"records", c.clustering.records}}},
  };
}

namespace {

// Rejects keys absent from the reference layout, recursively for sections.
void check_keys(const json& given, const json& reference, const std::string& prefix) {
  if (!given.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (const auto& [key, value] : given.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (!reference.contains(key)) throw ConfigError("unknown config key '" + name + "'");
    if (reference.at(key).is_object()) check_keys(value, reference.at(key), name);
  }
}

void merge(json& base, const json& patch) {
  for (const auto& [key, value] : patch.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object())
      merge(base[key], value);
    else
      base[key] = value;
  }
}

Config parse_resolved(const json& j) {
  Config c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.jobs = j.at("jobs");
  const auto& s = j.at("synth");
  c.synth.kind = s.at("kind");
  c.synth.scenes = s.at("scenes");
  c.synth.trajectories = s.at("trajectories");
  c.synth.frames = s.at("frames");
  c.synth.noise_sigma = s.at("noise_sigma");
  c.synth.dt = s.at("dt");
  c.synth.mirror_odd = s.at("mirror_odd");

  const auto& d = j.at("detector");
  c.detector.rules.up_pairs.clear();
  for (const auto& p : d.at("up_pairs")) {
    if (!p.is_array() || p.size() != 2) throw ConfigError("detector.up_pairs entries must be [tau, frames]");
    c.detector.rules.up_pairs.push_back({p[0].get<double>(), p[1].get<int>()});
  }
  c.detector.rules.tau_down = d.at("tau_down");
  c.detector.rules.n_down = d.at("n_down");
  c.detector.rules.tau_extreme = d.at("tau_extreme");
  c.detector.rules.tau_lc = d.at("tau_lc");
  c.detector.rules.min_segment = d.at("min_segment");
  c.detector.window = d.at("window");
  c.detector.ema.windows = d.at("ema_windows").get<std::vector<int>>();
  c.detector.ema.alpha = d.at("ema_alpha");
  c.detector.ema.peak_factor = d.at("ema_peak_factor");
  c.detector.snippet.enabled = d.at("snippet");
  c.detector.snippet.snippet_len = d.at("snippet_len");
  c.detector.snippet.codebook_size = d.at("snippet_codebook_size");
  c.detector.snippet.latent_dim = d.at("snippet_latent_dim");
  c.detector.snippet.hidden = d.at("snippet_hidden").get<std::vector<int>>();
  c.detector.snippet.epochs = d.at("snippet_epochs");
  c.detector.snippet.learning_rate = d.at("snippet_learning_rate");

  const auto& g = j.at("dgsfm");
  c.dgsfm.egg.amplitude = g.at("amplitude");
  c.dgsfm.egg.sigma = g.at("sigma");
  c.dgsfm.egg.forward_stretch = g.at("forward_stretch");
  c.dgsfm.egg.rear_compress = g.at("rear_compress");
  c.dgsfm.egg.lateral_scale = g.at("lateral_scale");
  c.dgsfm.tau_sum = g.at("tau_sum");
  c.dgsfm.n_dg = g.at("n_dg");
  c.dgsfm.softmax_temperature = g.at("softmax_temperature");
  c.dgsfm.dt = c.synth.dt;

  const auto& e = j.at("extraction");
  c.extraction.window.pre_frames = e.at("pre_frames");
  c.extraction.window.post_frames = e.at("post_frames");
  c.extraction.window.tensor_offset = e.at("tensor_offset");
  c.extraction.class_filter = e.at("class_filter").get<std::vector<std::string>>();
  for (const auto& f : c.extraction.class_filter) c.extraction.window.class_filter.push_back(parse_class_filter(f));
  c.extraction.train_fraction = e.at("train_fraction");
  c.extraction.augment_count = e.at("augment_count");
  c.extraction.augment_min_gap = e.at("augment_min_gap");

  const auto& m = j.at("model");
  c.model.latent_dim = m.at("latent_dim");
  c.model.hidden = m.at("hidden").get<std::vector<int>>();
  c.model.codebook_size = m.at("codebook_size");

  const auto& t = j.at("train");
  c.train.lambda_cl = t.at("lambda_cl");
  c.train.lambda_int = t.at("lambda_int");
  c.train.learning_rate = t.at("learning_rate");
  c.train.batch_size = t.at("batch_size");
  c.train.epochs = t.at("epochs");
  c.train.commitment_weight = t.at("commitment_weight");
  c.train.dead_code_threshold = t.at("dead_code_threshold");
  c.train.revival_noise = t.at("revival_noise");
  c.train.usage_decay = t.at("usage_decay");
  const std::string reduction = t.at("reduction");
  if (reduction != "mean" && reduction != "sum") throw ConfigError("train.reduction must be mean or sum");
  c.train.reduction = reduction == "mean" ? LossReduction::Mean : LossReduction::Sum;
  c.train.standardize = t.at("standardize");
  c.compare_no_dk = t.at("compare_no_dk");

  const auto& k = j.at("clustering");
  c.clustering.backends.clear();
  for (const auto& b : k.at("backends")) c.clustering.backends.push_back(parse_backend(b.get<std::string>()));
  c.clustering.k = k.at("k");
  c.clustering.linkage = parse_linkage(k.at("linkage"));
  c.clustering.max_iter = k.at("max_iter");
  c.clustering.records = k.at("records");
  return c;
}

Config resolve(const json& patch) {
  json base = config_to_json(Config{});
  check_keys(patch, base, "");
  merge(base, patch);
  Config c;
  try {
    c = parse_resolved(base);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

} // namespace

Config config_from_json(const json& j) { return resolve(j); }

Config load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw StageError("missing input artifact: config file " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_override(Config& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must be key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json patch = config_to_json(cfg);
  const auto dot = key.find('.');
  if (dot == std::string::npos) {
    if (!patch.contains(key) || patch[key].is_object()) throw ConfigError("unknown config key '" + key + "'");
    patch[key] = value;
  } else {
    const std::string section = key.substr(0, dot), name = key.substr(dot + 1);
    if (!patch.contains(section) || !patch[section].is_object() || !patch[section].contains(name))
      throw ConfigError("unknown config key '" + key + "'");
    patch[section][name] = value;
  }
  cfg = resolve(patch);
}

} // namespace hwscen
