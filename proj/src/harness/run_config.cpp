#include "lrpca/harness/run_config.hpp"

#include <sstream>

#include "lrpca/errors.hpp"

namespace lrpca::harness {

using util::format_double;
using util::to_double;
using util::to_size;

namespace {

constexpr std::pair<RunMode, std::string_view> kModeNames[] = {
    {RunMode::train, "train"},         {RunMode::eval, "eval"},
    {RunMode::decompose, "decompose"}, {RunMode::sweep, "sweep"},
    {RunMode::synth, "synth"},         {RunMode::gradcheck, "gradcheck"},
    {RunMode::baseline, "baseline"},   {RunMode::ablate, "ablate"},
};

std::string_view noise_kind_name(data::NoiseKind k) {
  return k == data::NoiseKind::gaussian ? "gaussian" : "salt_pepper";
}

}  // namespace

std::string_view to_string(RunMode mode) {
  for (const auto& [m, name] : kModeNames) {
    if (m == mode) return name;
  }
  return "unknown";
}

RunMode run_mode_from_string(std::string_view name) {
  for (const auto& [m, n] : kModeNames) {
    if (n == name) return m;
  }
  throw ConfigError("unknown mode '" + std::string(name) + "'");
}

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (val_every == 0) throw ConfigError("val_every must be at least 1");
  if (!data.dataset) {
    data.scene.validate();
    if (data.scene_count == 0) throw ConfigError("scene.count must be at least 1");
  }
  if (!(data.train_fraction >= 0.0 && data.train_fraction <= 1.0)) {
    throw ConfigError("train_fraction must lie in [0, 1]");
  }
  if (train_noise.enabled) train_noise.spec.validate();
  if (rpca.lambda && !(*rpca.lambda > 0.0)) throw ConfigError("rpca.lambda must be positive");
  if (rpca.mu && !(*rpca.mu > 0.0)) throw ConfigError("rpca.mu must be positive");
  if (rpca.max_iters == 0) throw ConfigError("rpca.max_iters must be at least 1");
}

std::string RunConfig::str(bool include_paths) const {
  std::ostringstream os;
  os << "mode = " << to_string(mode) << '\n'
     << "seed = " << seed << '\n'
     << "lr = " << format_double(lr) << '\n'
     << "batch_size = " << batch_size << '\n'
     << "epochs = " << epochs << '\n'
     << "val_every = " << val_every << '\n'
     << "eta = " << format_double(loss.eta) << '\n'
     << "threshold = " << format_double(loss.binarize_threshold) << '\n';
  std::istringstream model_text(model.str());
  for (std::string line; std::getline(model_text, line);) os << "model." << line << '\n';
  if (data.dataset) {
    if (include_paths) os << "data = " << data.dataset->string() << '\n';
  } else {
    const auto& s = data.scene;
    os << "scene.height = " << s.height << '\n'
       << "scene.width = " << s.width << '\n'
       << "scene.rank = " << s.background_rank << '\n'
       << "scene.scale = " << format_double(s.background_scale) << '\n'
       << "scene.targets = " << s.target_count << '\n'
       << "scene.amplitude_lo = " << format_double(s.target_amplitude.lo) << '\n'
       << "scene.amplitude_hi = " << format_double(s.target_amplitude.hi) << '\n'
       << "scene.sigma_lo = " << format_double(s.target_sigma.lo) << '\n'
       << "scene.sigma_hi = " << format_double(s.target_sigma.hi) << '\n'
       << "scene.count = " << data.scene_count << '\n';
  }
  os << "train_fraction = " << format_double(data.train_fraction) << '\n';
  if (train_noise.enabled) {
    const auto& n = train_noise.spec;
    os << "train_noise = " << noise_kind_name(n.kind) << '\n';
    if (n.kind == data::NoiseKind::gaussian) {
      os << "train_noise.variance = " << format_double(n.gaussian_variance) << '\n';
    } else {
      os << "train_noise.salt = " << format_double(n.salt_prob) << '\n'
         << "train_noise.pepper = " << format_double(n.pepper_prob) << '\n';
    }
  } else {
    os << "train_noise = none\n";
  }
  if (rpca.lambda) os << "rpca.lambda = " << format_double(*rpca.lambda) << '\n';
  if (rpca.mu) os << "rpca.mu = " << format_double(*rpca.mu) << '\n';
  os << "rpca.max_iters = " << rpca.max_iters << '\n';
  if (include_paths) os << "out = " << output_dir.string() << '\n';
  return os.str();
}

RunConfig RunConfig::from_key_values(const util::KeyValues& kv) {
  RunConfig c;
  std::string model_text;
  bool scene_keys = false;
  std::string noise_kind = "none";
  double noise_variance = 0.0, noise_salt = 0.0, noise_pepper = 0.0;
  for (const auto& [key, value] : kv) {
    if (key.rfind("model.", 0) == 0) {
      model_text += key.substr(6) + " = " + value + "\n";
      continue;
    }
    if (key.rfind("scene.", 0) == 0) {
      scene_keys = true;
      auto& s = c.data.scene;
      const std::string k = key.substr(6);
      if (k == "height") s.height = to_size(key, value);
      else if (k == "width") s.width = to_size(key, value);
      else if (k == "rank") s.background_rank = to_size(key, value);
      else if (k == "scale") s.background_scale = to_double(key, value);
      else if (k == "targets") s.target_count = to_size(key, value);
      else if (k == "amplitude_lo") s.target_amplitude.lo = to_double(key, value);
      else if (k == "amplitude_hi") s.target_amplitude.hi = to_double(key, value);
      else if (k == "sigma_lo") s.target_sigma.lo = to_double(key, value);
      else if (k == "sigma_hi") s.target_sigma.hi = to_double(key, value);
      else if (k == "count") c.data.scene_count = to_size(key, value);
      else throw ConfigError("unknown config key '" + key + "'");
      continue;
    }
    if (key == "mode") c.mode = run_mode_from_string(value);
    else if (key == "seed") c.seed = util::to_u64(key, value);
    else if (key == "lr") c.lr = to_double(key, value);
    else if (key == "batch_size") c.batch_size = to_size(key, value);
    else if (key == "epochs") c.epochs = to_size(key, value);
    else if (key == "val_every") c.val_every = to_size(key, value);
    else if (key == "eta") c.loss.eta = to_double(key, value);
    else if (key == "threshold") c.loss.binarize_threshold = to_double(key, value);
    else if (key == "data") c.data.dataset = value;
    else if (key == "train_fraction") c.data.train_fraction = to_double(key, value);
    else if (key == "train_noise") noise_kind = value;
    else if (key == "train_noise.variance") noise_variance = to_double(key, value);
    else if (key == "train_noise.salt") noise_salt = to_double(key, value);
    else if (key == "train_noise.pepper") noise_pepper = to_double(key, value);
    else if (key == "rpca.lambda") c.rpca.lambda = to_double(key, value);
    else if (key == "rpca.mu") c.rpca.mu = to_double(key, value);
    else if (key == "rpca.max_iters") c.rpca.max_iters = to_size(key, value);
    else if (key == "out") c.output_dir = value;
    else throw ConfigError("unknown config key '" + key + "'");
  }
  if (c.data.dataset && scene_keys) {
    throw ConfigError("config names both a dataset directory and synthetic scene keys");
  }
  if (noise_kind == "gaussian") {
    c.train_noise = {true, data::NoiseSpec::gaussian(noise_variance)};
  } else if (noise_kind == "salt_pepper") {
    c.train_noise = {true, data::NoiseSpec::salt_pepper(noise_salt, noise_pepper)};
  } else if (noise_kind != "none") {
    throw ConfigError("train_noise must be none, gaussian or salt_pepper");
  }
  if (!model_text.empty()) c.model = model::ModelConfig::parse(model_text);
  c.validate();
  return c;
}

RunConfig RunConfig::parse(std::string_view text) {
  return from_key_values(util::parse_key_values(text));
}

util::KeyValues merge(util::KeyValues base, const util::KeyValues& overrides) {
  for (const auto& [k, v] : overrides) base[k] = v;
  return base;
}

}  // namespace lrpca::harness
