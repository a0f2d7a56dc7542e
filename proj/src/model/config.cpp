#include "lrpca/model/config.hpp"

#include <cmath>
#include <sstream>

#include "lrpca/errors.hpp"
#include "lrpca/util/kv.hpp"

namespace lrpca::model {

std::string_view to_string(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::background: return "background";
    case ModuleKind::target: return "target";
    case ModuleKind::noise: return "noise";
    case ModuleKind::reconstruction: return "reconstruction";
  }
  return "unknown";
}

ModuleKind module_kind_from_string(std::string_view name) {
  if (name == "background" || name == "B") return ModuleKind::background;
  if (name == "target" || name == "T") return ModuleKind::target;
  if (name == "noise" || name == "N") return ModuleKind::noise;
  if (name == "reconstruction" || name == "R") return ModuleKind::reconstruction;
  throw ConfigError("unknown module kind '" + std::string(name) + "'");
}

bool SeFlags::enabled(ModuleKind kind) const noexcept {
  switch (kind) {
    case ModuleKind::background: return background;
    case ModuleKind::target: return target;
    case ModuleKind::noise: return noise;
    case ModuleKind::reconstruction: return reconstruction;
  }
  return false;
}

std::string SeFlags::str() const {
  std::string s;
  if (background) s += 'B';
  if (target) s += 'T';
  if (noise) s += 'N';
  if (reconstruction) s += 'R';
  return s.empty() ? "none" : s;
}

SeFlags SeFlags::parse(std::string_view text) {
  SeFlags f{false, false, false, false};
  if (text == "none") return f;
  if (text.empty()) throw ConfigError("se flags: empty value (use 'none')");
  for (char c : text) {
    bool* slot = nullptr;
    switch (c) {
      case 'B': slot = &f.background; break;
      case 'T': slot = &f.target; break;
      case 'N': slot = &f.noise; break;
      case 'R': slot = &f.reconstruction; break;
      default: throw ConfigError("se flags: unknown module letter '" + std::string(1, c) + "'");
    }
    if (*slot) throw ConfigError("se flags: repeated letter '" + std::string(1, c) + "'");
    *slot = true;
  }
  return f;
}

void ModelConfig::validate() const {
  if (stages < 1) throw ConfigError("model: stages (K) must be at least 1");
  if (channels < 1) throw ConfigError("model: channels (C) must be at least 1");
  if (bottleneck_channels < 1 || bottleneck_channels > channels) {
    throw ConfigError("model: bottleneck channels must satisfy 1 <= BC <= C");
  }
  if (se_ratio < 1 || channels % se_ratio != 0) {
    throw ConfigError("model: se_ratio must divide C (C=" + std::to_string(channels) +
                      ", ratio=" + std::to_string(se_ratio) + ")");
  }
  if (!std::isfinite(epsilon_init) || !std::isfinite(sigma_init)) {
    throw ConfigError("model: epsilon_init and sigma_init must be finite");
  }
}

std::string ModelConfig::str() const {
  std::ostringstream os;
  os << "stages = " << stages << '\n'
     << "bottleneck_channels = " << bottleneck_channels << '\n'
     << "channels = " << channels << '\n'
     << "reconstruction_depth = " << reconstruction_depth << '\n'
     << "se_ratio = " << se_ratio << '\n'
     << "fill_blocks = " << fill_blocks << '\n'
     << "se = " << se.str() << '\n'
     << "epsilon_init = " << util::format_double(epsilon_init) << '\n'
     << "sigma_init = " << util::format_double(sigma_init) << '\n';
  return os.str();
}

ModelConfig ModelConfig::parse(std::string_view text) {
  ModelConfig c;
  for (const auto& [key, value] : util::parse_key_values(text)) {
    if (key == "stages") c.stages = util::to_size(key, value);
    else if (key == "bottleneck_channels") c.bottleneck_channels = util::to_size(key, value);
    else if (key == "channels") c.channels = util::to_size(key, value);
    else if (key == "reconstruction_depth") c.reconstruction_depth = util::to_size(key, value);
    else if (key == "se_ratio") c.se_ratio = util::to_size(key, value);
    else if (key == "fill_blocks") c.fill_blocks = util::to_size(key, value);
    else if (key == "se") c.se = SeFlags::parse(value);
    else if (key == "epsilon_init") c.epsilon_init = util::to_double(key, value);
    else if (key == "sigma_init") c.sigma_init = util::to_double(key, value);
    else throw ConfigError("model: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

std::uint64_t ModelConfig::hash() const { return util::fnv1a64(str()); }

namespace {

constexpr std::size_t conv_params(std::size_t in, std::size_t out) { return 9 * in * out + out; }
constexpr std::size_t bn_params(std::size_t c) { return 2 * c; }

}  // namespace

std::size_t se_parameter_count(std::size_t channels, std::size_t ratio) {
  const std::size_t hidden = channels / ratio;
  return channels * hidden + hidden + hidden * channels + channels;
}

std::size_t count_parameters(const ModelConfig& config) {
  config.validate();
  const std::size_t bc = config.bottleneck_channels;
  const std::size_t c = config.channels;
  const std::size_t se = se_parameter_count(c, config.se_ratio);

  auto branch = [&](bool batchnorm, bool with_se) {
    const std::size_t bn = batchnorm ? 1 : 0;
    std::size_t n = conv_params(1, bc) + bn * bn_params(bc);
    n += conv_params(bc, c) + bn * bn_params(c);
    n += config.fill_blocks * (conv_params(c, c) + bn * bn_params(c));
    if (with_se) n += se;
    return n + conv_params(c, 1);
  };
  std::size_t recon = conv_params(1, c) + config.reconstruction_depth * conv_params(c, c) +
                      conv_params(c, 1);
  if (config.se.reconstruction) recon += se;

  const std::size_t per_stage = branch(true, config.se.background) +
                                branch(false, config.se.target) +
                                branch(false, config.se.noise) + recon + 2;
  return config.stages * per_stage;
}

}  // namespace lrpca::model
