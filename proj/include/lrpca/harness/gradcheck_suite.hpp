#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lrpca/model/config.hpp"
#include "lrpca/nn/grad_check.hpp"

namespace lrpca::harness {

struct GradCheckEntry {
  std::string name;
  nn::GradCheckReport report;
};

/// 64-bit gradient checks over every layer type, the SE block, the three
/// conv-group shapes, and a full model with `model_config` (stage count
/// overridden to 2) on a 2 x 1 x 16 x 16 input. Zero-initialized layers are
/// perturbed first so no gradient is trivially zero.
std::vector<GradCheckEntry> run_gradcheck_suite(model::ModelConfig model_config, std::uint64_t seed);

}  // namespace lrpca::harness
