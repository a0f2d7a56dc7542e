#include "lrpca/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace lrpca::nn {

namespace {

std::vector<std::size_t> sample_indices(std::size_t size, std::size_t count, Rng& rng) {
  std::vector<std::size_t> all(size);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (count >= size) return all;
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(all[i], all[i + rng.index(size - i)]);
  }
  all.resize(count);
  return all;
}

}  // namespace

GradCheckReport grad_check(Layer<double>& network, const Array4<double>& input,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ConfigError("grad_check: step must be positive");
  Rng rng(options.seed);
  auto params = network.parameters();

  Array4<double> x = input;
  Array4<double> projection;
  auto loss = [&](const Array4<double>& in) {
    const Array4<double> out = network.forward(in, options.mode);
    if (projection.empty()) {
      projection = Array4<double>(out.shape());
      for (double& v : projection.values()) v = rng.normal();
    }
    const double l = dot(out, projection);
    if (!std::isfinite(l)) throw NumericError("grad_check: non-finite output while probing");
    return l;
  };

  zero_grads(params);
  const Array4<double> out0 = network.forward(x, options.mode);
  loss(x);
  const Array4<double> grad_input = network.backward(projection);

  GradCheckReport report;
  // Rounding in L bounds what a central difference can resolve; gradients
  // below that resolution are scored against it rather than relatively.
  double abs_terms = 0.0;
  for (std::size_t i = 0; i < out0.size(); ++i) abs_terms += std::abs(out0[i] * projection[i]);
  report.resolution = std::numeric_limits<double>::epsilon() * abs_terms / options.step;
  const double floor =
      std::max(options.denominator_floor, report.resolution / options.tolerance);
  auto score = [&](double analytic, double& slot, const std::string& label,
                   const Array4<double>& probe_input) {
    const double saved = slot;
    auto central = [&](double h) {
      slot = saved + h;
      const double up = loss(probe_input);
      slot = saved - h;
      const double down = loss(probe_input);
      slot = saved;
      return (up - down) / (2.0 * h);
    };
    const double numeric = central(options.step);
    const double numeric_half = central(0.5 * options.step);
    const double kink_scale =
        std::max({std::abs(numeric), std::abs(numeric_half), floor});
    if (std::abs(numeric - numeric_half) > options.tolerance * kink_scale) {
      ++report.skipped;
      return;
    }
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), floor});
    const double rel = std::abs(analytic - numeric) / denom;
    ++report.checked;
    if (rel >= report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_entry = label;
    }
  };

  // The analytic gradients are copied before probing; probing runs more
  // forwards but no backward.
  for (auto* p : params) {
    if (!p->trainable) continue;
    const Array4<double> analytic = p->grad;
    for (std::size_t i : sample_indices(p->size(), options.samples_per_tensor, rng)) {
      score(analytic[i], p->value[i], p->name + "[" + std::to_string(i) + "]", x);
    }
  }
  for (std::size_t i : sample_indices(x.size(), options.input_samples, rng)) {
    score(grad_input[i], x[i], "input[" + std::to_string(i) + "]", x);
  }
  zero_grads(params);

  if (report.checked == 0) {
    throw NumericError("grad_check: every probe straddled a non-differentiable point");
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace lrpca::nn
