#include "lrpca/harness/ablation.hpp"

#include "lrpca/errors.hpp"
#include "lrpca/util/kv.hpp"

namespace lrpca::harness {

std::string_view to_string(AblationGrid g) {
  switch (g) {
    case AblationGrid::se: return "se";
    case AblationGrid::stages: return "stages";
    case AblationGrid::channels: return "channels";
    case AblationGrid::eta: return "eta";
  }
  return "unknown";
}

AblationGrid ablation_grid_from_string(std::string_view name) {
  for (auto g : {AblationGrid::se, AblationGrid::stages, AblationGrid::channels, AblationGrid::eta}) {
    if (to_string(g) == name) return g;
  }
  throw ConfigError("unknown ablation grid '" + std::string(name) + "'");
}

std::vector<AblationEntry> ablation_grid(AblationGrid grid, const RunConfig& base) {
  std::vector<AblationEntry> out;
  const auto add = [&](std::string label, RunConfig c) {
    c.mode = RunMode::train;
    c.output_dir = base.output_dir / (std::string(to_string(grid)) + "_" + label);
    c.validate();
    out.push_back({std::move(label), std::move(c)});
  };
  switch (grid) {
    case AblationGrid::se:
      for (const char* flags : {"none", "B", "BT", "BTN", "BTNR"}) {
        RunConfig c = base;
        c.model.se = model::SeFlags::parse(flags);
        add(flags, c);
      }
      break;
    case AblationGrid::stages:
      for (std::size_t k = 1; k <= 7; ++k) {
        RunConfig c = base;
        c.model.stages = k;
        add("K" + std::to_string(k), c);
      }
      break;
    case AblationGrid::channels:
      for (const auto& [bc, ch] : {std::pair<std::size_t, std::size_t>{4, 32}, {8, 32}, {16, 32},
                                  {4, 40}, {4, 48}, {4, 56}, {4, 64}}) {
        RunConfig c = base;
        c.model.bottleneck_channels = bc;
        c.model.channels = ch;
        add("BC" + std::to_string(bc) + "_C" + std::to_string(ch), c);
      }
      break;
    case AblationGrid::eta:
      for (const double eta : {0.005, 0.01, 0.015, 0.2}) {
        RunConfig c = base;
        c.loss.eta = eta;
        add("eta" + util::format_double(eta), c);
      }
      break;
  }
  return out;
}

}  // namespace lrpca::harness
