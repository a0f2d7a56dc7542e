#include "lrpca/harness/gradcheck_suite.hpp"

#include <memory>

#include "lrpca/model/blocks.hpp"
#include "lrpca/model/unfolded_model.hpp"

namespace lrpca::harness {

namespace {

using nn::Array4;
using nn::Mode;

Array4<double> randn(nn::Shape4 s, nn::Rng& rng) {
  Array4<double> a(s);
  for (double& v : a.values()) v = rng.normal();
  return a;
}

void perturb(const nn::ParameterList<double>& params, nn::Rng& rng, double scale) {
  for (auto* p : params) {
    if (!p->trainable) continue;
    for (double& v : p->value.values()) v += scale * rng.normal();
  }
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(model::ModelConfig model_config, std::uint64_t seed) {
  nn::Rng rng(seed);
  std::vector<GradCheckEntry> out;
  const auto check = [&](const std::string& name, nn::Layer<double>& layer, const Array4<double>& x,
                         Mode mode, std::size_t samples, double step = nn::GradCheckOptions{}.step) {
    nn::GradCheckOptions o;
    o.mode = mode;
    o.step = step;
    o.samples_per_tensor = samples;
    o.seed = nn::derive_seed(seed, out.size());
    out.push_back({name, nn::grad_check(layer, x, o)});
  };

  {
    nn::Conv2d<double> conv(3, 4);
    conv.init_kaiming(rng);
    perturb(conv.parameters(), rng, 0.1);
    check("conv2d", conv, randn({2, 3, 7, 6}, rng), Mode::train, 12);
  }
  for (Mode mode : {Mode::train, Mode::eval}) {
    nn::BatchNorm2d<double> bn(3);
    perturb(bn.parameters(), rng, 0.3);
    check(mode == Mode::train ? "batchnorm(train)" : "batchnorm(eval)", bn,
          randn({3, 3, 5, 5}, rng), mode, 6);
  }
  {
    nn::Activation<double> relu(nn::ActivationKind::relu);
    check("relu", relu, randn({2, 2, 5, 5}, rng), Mode::train, 0);
    nn::Activation<double> sig(nn::ActivationKind::sigmoid);
    check("sigmoid", sig, randn({2, 2, 5, 5}, rng), Mode::train, 0);
    nn::GlobalAvgPool<double> pool;
    check("global_avg_pool", pool, randn({2, 3, 4, 5}, rng), Mode::train, 0);
  }
  {
    nn::Dense<double> fc(6, 3);
    fc.init_kaiming(rng);
    perturb(fc.parameters(), rng, 0.1);
    check("dense", fc, randn({4, 6, 1, 1}, rng), Mode::train, 12);
  }
  {
    model::SEBlock<double> se(8, 4);
    perturb(se.parameters(), rng, 0.3);
    check("se_block", se, randn({2, 8, 4, 4}, rng), Mode::train, 8);
  }

  model::ModelConfig small = model_config;
  small.stages = 1;
  {
    auto g = model::make_branch_group<double>(small, true, true, rng);
    perturb(g.parameters(), rng, 0.1);
    check("background_group", g, randn({2, 1, 8, 8}, rng), Mode::train, 3);
  }
  {
    auto g = model::make_branch_group<double>(small, false, true, rng);
    perturb(g.parameters(), rng, 0.1);
    check("gradient_group", g, randn({2, 1, 8, 8}, rng), Mode::train, 3);
  }
  {
    auto g = model::make_reconstruction_group<double>(small, true, rng);
    perturb(g.parameters(), rng, 0.05);
    check("reconstruction_group", g, randn({2, 1, 8, 8}, rng), Mode::train, 3);
  }
  {
    model::ModelConfig full = model_config;
    full.stages = 2;
    model::UnfoldedModel<double> m(full, nn::derive_seed(seed, 100));
    perturb(m.parameters(), rng, 0.05);
    model::StackedOutputAdapter<double> adapter(m);
    Array4<double> image({2, 1, 16, 16});
    for (double& v : image.values()) v = rng.uniform();
    // thousands of ReLUs sit within 1e-5 of a kink once a bias shifts them all
    check("model(K=2)", adapter, image, Mode::train, 2, 1e-6);
  }
  return out;
}

}  // namespace lrpca::harness
