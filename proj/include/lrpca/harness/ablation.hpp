#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "lrpca/harness/run_config.hpp"

namespace lrpca::harness {

enum class AblationGrid { se, stages, channels, eta };

std::string_view to_string(AblationGrid g);
AblationGrid ablation_grid_from_string(std::string_view name);

struct AblationEntry {
  std::string label;
  RunConfig config;
};

/// Config sets varying one factor of `base`:
///   se       SE blocks in none, B, BT, BTN, BTNR
///   stages   K = 1..7
///   channels (BC, C) in (4,32) (8,32) (16,32) (4,40) (4,48) (4,56) (4,64)
///   eta      0.005, 0.01, 0.015, 0.2
/// Each entry writes to its own subdirectory of base.output_dir.
std::vector<AblationEntry> ablation_grid(AblationGrid grid, const RunConfig& base);

}  // namespace lrpca::harness
