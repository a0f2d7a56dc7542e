#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <iostream>

#include "lrpca/model/lipschitz.hpp"
#include "lrpca/model/unfolded_model.hpp"
#include "lrpca/nn/grad_check.hpp"

using namespace lrpca;
using namespace lrpca::model;
using nn::Array4;
using nn::Shape4;

namespace {

ModelConfig small_config(std::size_t stages = 1) {
  ModelConfig c;
  c.stages = stages;
  c.bottleneck_channels = 2;
  c.channels = 4;
  c.se_ratio = 2;
  return c;
}

Array4<double> randn(Shape4 s, nn::Rng& rng, double scale = 1.0) {
  Array4<double> a(s);
  for (double& v : a.values()) v = scale * rng.normal();
  return a;
}

void fill_group(nn::Sequential<double>& g, double value) {
  for (auto* p : g.parameters()) {
    if (p->trainable) p->value.fill(value);
  }
}

void perturb(const nn::ParameterList<double>& params, nn::Rng& rng, double scale) {
  for (auto* p : params) {
    if (!p->trainable) continue;
    for (double& v : p->value.values()) v += scale * rng.normal();
  }
}

DecompositionState<double> random_state(Shape4 s, nn::Rng& rng) {
  DecompositionState<double> st;
  st.D = randn(s, rng);
  st.B = randn(s, rng);
  st.T = randn(s, rng, 0.3);
  st.N = randn(s, rng, 0.1);
  return st;
}

// Recomputes a group layer by layer from its parameters with the raw ops.
Array4<double> group_oracle(nn::Sequential<double>& g, Array4<double> x) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto& layer = g.layer(i);
    if (auto* conv = dynamic_cast<nn::Conv2d<double>*>(&layer)) {
      x = nn::conv2d(x, conv->weight().value, conv->bias().value);
    } else if (auto* bn = dynamic_cast<nn::BatchNorm2d<double>*>(&layer)) {
      const Shape4 s = x.shape();
      for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
          for (double& v : x.plane(n, c)) {
            v = bn->gamma().value[c] * (v - bn->running_mean().value[c]) /
                    std::sqrt(bn->running_var().value[c] + bn->eps()) +
                bn->beta().value[c];
          }
    } else if (layer.kind() == "relu") {
      for (double& v : x.values()) v = std::max(v, 0.0);
    } else if (auto* se = dynamic_cast<SEBlock<double>*>(&layer)) {
      auto z = nn::global_avg_pool(x);
      z = nn::dense(z, se->squeeze().weight().value, se->squeeze().bias().value);
      for (double& v : z.values()) v = std::max(v, 0.0);
      z = nn::dense(z, se->excite().weight().value, se->excite().bias().value);
      for (double& v : z.values()) v = 1.0 / (1.0 + std::exp(-v));
      x = nn::scale_channels(x, z);
    } else {
      ADD_FAILURE() << "unexpected layer " << layer.kind();
    }
  }
  return x;
}

double max_abs_diff(const Array4<double>& a, const Array4<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

// ------------------------------------------------------------------- SE

TEST(SEBlock, SaturatedGatesPassInputThrough) {
  SEBlock<double> se(4, 2);
  nn::Rng rng(1);
  se.init_kaiming(rng);
  se.excite().weight().value.fill(0.0);
  se.excite().bias().value.fill(60.0);
  const auto x = randn({2, 4, 3, 3}, rng);
  EXPECT_LT(max_abs_diff(se.infer(x), x), 1e-15);
}

TEST(SEBlock, ZeroWeightsHalveEveryChannel) {
  SEBlock<double> se(4, 4);
  nn::Rng rng(2);
  const auto x = randn({1, 4, 5, 5}, rng);
  const auto y = se.infer(x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], 0.5 * x[i]);
}

TEST(SEBlock, SingleChannelByHand) {
  SEBlock<double> se(1, 1);
  se.squeeze().weight().value[0] = 2.0;
  se.squeeze().bias().value[0] = -0.5;
  se.excite().weight().value[0] = -1.5;
  se.excite().bias().value[0] = 0.25;
  const double c = 0.8;
  const Array4<double> x({1, 1, 4, 4}, c);
  const double h = std::max(2.0 * c - 0.5, 0.0);
  const double expected = c / (1.0 + std::exp(-(-1.5 * h + 0.25)));
  const auto y = se.infer(x);
  for (double v : y.values()) EXPECT_NEAR(v, expected, 1e-15);
}

TEST(SEBlock, GatesLieInOpenUnitInterval) {
  SEBlock<double> se(8, 4);
  nn::Rng rng(3);
  se.init_kaiming(rng);
  const auto x = randn({3, 8, 4, 4}, rng, 3.0);
  const auto g = se.gates(x);
  for (double v : g.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_EQ(se.infer(x).shape(), x.shape());
}

TEST(SEBlock, RejectsChannelMismatchAndBadRatio) {
  SEBlock<double> se(4, 2);
  EXPECT_THROW(se.infer(Array4<double>({1, 3, 2, 2})), ShapeError);
  EXPECT_THROW(SEBlock<double>(6, 4), ConfigError);
}

TEST(SEBlock, GradCheck) {
  SEBlock<double> se(4, 2);
  nn::Rng rng(4);
  se.init_kaiming(rng);
  perturb(se.parameters(), rng, 0.3);
  const auto r = nn::grad_check(se, randn({2, 4, 3, 3}, rng), {.samples_per_tensor = 8, .seed = 5});
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_entry;
}

// ---------------------------------------------------------------- groups

TEST(Groups, TargetAndNoiseBranchesHaveNoBatchnorm) {
  nn::Rng rng(5);
  Stage<double> stage(ModelConfig{}, 0, rng);
  for (ModuleKind kind : {ModuleKind::target, ModuleKind::noise}) {
    auto& g = stage.group(kind);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NE(g.layer(i).kind(), "batchnorm");
    for (auto* p : g.parameters()) EXPECT_EQ(p->name.find("bn"), std::string::npos) << p->name;
  }
  std::size_t bn_layers = 0;
  auto& w = stage.group(ModuleKind::background);
  for (std::size_t i = 0; i < w.size(); ++i) bn_layers += w.layer(i).kind() == "batchnorm";
  EXPECT_EQ(bn_layers, 2u);
}

TEST(Groups, BranchesStartAsTheZeroMap) {
  nn::Rng rng(6);
  Stage<double> stage(small_config(), 0, rng);
  const auto x = randn({2, 1, 6, 6}, rng);
  for (ModuleKind kind : {ModuleKind::background, ModuleKind::target, ModuleKind::noise}) {
    const auto y = stage.group(kind).infer(x);
    for (double v : y.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Groups, GradCheckBranchWithBatchnorm) {
  nn::Rng rng(7);
  auto g = make_branch_group<double>(small_config(), true, true, rng);
  perturb(g.parameters(), rng, 0.3);
  const auto r = nn::grad_check(g, randn({3, 1, 5, 5}, rng), {.samples_per_tensor = 6, .seed = 8});
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_entry;
}

// ---------------------------------------------------------------- stages

TEST(Stage, BackgroundWithZeroBranchIsTheResidual) {
  nn::Rng rng(10);
  Stage<double> stage(small_config(), 0, rng);
  fill_group(stage.group(ModuleKind::background), 0.0);
  const auto s = random_state({2, 1, 5, 6}, rng);
  EXPECT_EQ(stage.background(s), s.D - s.T - s.N);
}

TEST(Stage, ModuleOutputsKeepInputShape) {
  nn::Rng rng(11);
  Stage<double> stage(small_config(), 0, rng);
  perturb(stage.parameters(), rng, 0.2);
  for (Shape4 s : {Shape4{1, 1, 3, 3}, Shape4{2, 1, 5, 7}, Shape4{1, 1, 9, 4}}) {
    const auto st = random_state(s, rng);
    const auto out = stage.infer(st);
    EXPECT_EQ(out.B.shape(), s);
    EXPECT_EQ(out.T.shape(), s);
    EXPECT_EQ(out.N.shape(), s);
    EXPECT_EQ(out.D.shape(), s);
  }
}

TEST(Stage, BackgroundMatchesLayerOracle) {
  nn::Rng rng(12);
  Stage<double> stage(small_config(), 0, rng);
  perturb(stage.parameters(), rng, 0.3);
  auto& w = stage.group(ModuleKind::background);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (auto* bn = dynamic_cast<nn::BatchNorm2d<double>*>(&w.layer(i))) {
      for (double& v : bn->running_mean().value.values()) v = 0.2 * rng.normal();
      for (double& v : bn->running_var().value.values()) v = 0.5 + rng.uniform();
    }
  }
  const auto s = random_state({2, 1, 6, 5}, rng);
  const auto r = s.D - s.T - s.N;
  EXPECT_LT(max_abs_diff(stage.background(s), r + group_oracle(w, r)), 1e-12);
}

TEST(Stage, TargetUpdateExamples) {
  nn::Rng rng(13);
  Stage<double> stage(small_config(), 0, rng);
  perturb(stage.parameters(), rng, 0.3);
  const auto s = random_state({1, 1, 6, 6}, rng);
  const auto b = randn(s.D.shape(), rng);
  const auto u = s.T + s.D - b - s.N;

  stage.epsilon().value[0] = 0.5;
  EXPECT_LT(max_abs_diff(stage.target(s, b), u - 0.5 * group_oracle(stage.group(ModuleKind::target), u)),
            1e-12);

  stage.epsilon().value[0] = 0.0;
  EXPECT_EQ(stage.target(s, b), u);

  stage.epsilon().value[0] = 0.7;
  fill_group(stage.group(ModuleKind::target), 0.0);
  EXPECT_EQ(stage.target(s, b), u);
}

TEST(Stage, NoiseUpdateExamples) {
  nn::Rng rng(14);
  Stage<double> stage(small_config(), 0, rng);
  perturb(stage.parameters(), rng, 0.3);
  const auto s = random_state({1, 1, 6, 6}, rng);
  const auto b = randn(s.D.shape(), rng);
  const auto t = randn(s.D.shape(), rng);

  stage.sigma().value[0] = 0.0;
  EXPECT_EQ(stage.noise(s, b, t), s.N + s.D - b - t);

  // perturbing the target network leaves the noise update unchanged
  stage.sigma().value[0] = 0.5;
  const auto before = stage.noise(s, b, t);
  perturb(stage.group(ModuleKind::target).parameters(), rng, 1.0);
  EXPECT_EQ(stage.noise(s, b, t), before);
}

TEST(Stage, ZeroStateWithZeroBranchesHasNoNoise) {
  nn::Rng rng(15);
  Stage<double> stage(small_config(), 0, rng);
  const auto image = randn({1, 1, 7, 7}, rng);
  const auto s = DecompositionState<double>::initial(image);
  const auto b = stage.background(s);
  EXPECT_EQ(b, image);
  const auto t = stage.target(s, b);
  const auto n = stage.noise(s, b, t);
  for (double v : n.values()) EXPECT_EQ(v, 0.0);
}

TEST(Stage, ReconstructionExamples) {
  nn::Rng rng(16);
  Stage<double> stage(small_config(), 0, rng);
  perturb(stage.parameters(), rng, 0.2);
  const Shape4 s{2, 1, 5, 5};
  const auto b = randn(s, rng), t = randn(s, rng), n = randn(s, rng);
  auto& m = stage.group(ModuleKind::reconstruction);
  const auto d = stage.reconstruct(b, t, n);
  EXPECT_EQ(d.shape(), s);
  EXPECT_LT(max_abs_diff(d, group_oracle(m, b + t + n)), 1e-12);

  auto* out = dynamic_cast<nn::Conv2d<double>*>(&m.layer(m.size() - 1));
  ASSERT_NE(out, nullptr);
  out->init_zero();
  const auto zero = stage.reconstruct(b, t, n);
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
}

TEST(Stage, ZeroBranchAlgebraIsExact) {
  nn::Rng rng(17);
  Stage<double> stage(small_config(), 0, rng);
  for (ModuleKind kind : {ModuleKind::background, ModuleKind::target, ModuleKind::noise}) {
    fill_group(stage.group(kind), 0.0);
  }
  stage.epsilon().value[0] = 0.0;
  stage.sigma().value[0] = 0.0;
  const auto s = random_state({2, 1, 6, 6}, rng);
  for (Mode mode : {Mode::train, Mode::eval}) {
    const auto out = stage.forward(s, mode);
    EXPECT_EQ(out.B, s.D - s.T - s.N);
    EXPECT_EQ(out.T, s.T + s.D - out.B - s.N);
    EXPECT_EQ(out.N, s.N + s.D - out.B - out.T);
  }
}

TEST(Stage, RejectsMismatchedPlanes) {
  nn::Rng rng(18);
  Stage<double> stage(small_config(), 0, rng);
  auto s = random_state({1, 1, 4, 4}, rng);
  s.N = Array4<double>({1, 1, 4, 5});
  EXPECT_THROW(stage.background(s), ShapeError);
  EXPECT_THROW(stage.reconstruct(s.D, s.T, s.N), ShapeError);
}

// ----------------------------------------------------------------- model

TEST(Model, SingleStageWithZeroBranches) {
  ModelConfig c = small_config(1);
  c.epsilon_init = 0.0;
  c.sigma_init = 0.0;
  UnfoldedModel<double> model(c, 3);
  auto& m = model.stage(0).group(ModuleKind::reconstruction);
  dynamic_cast<nn::Conv2d<double>&>(m.layer(m.size() - 1)).init_zero();
  nn::Rng rng(19);
  const auto image = randn({2, 1, 8, 8}, rng);
  const auto out = model.infer(image, true);
  ASSERT_TRUE(out.trace.has_value());
  const auto& st = out.trace->at(0);
  EXPECT_EQ(st.B, image);
  for (const auto* plane : {&st.T, &st.N, &st.D}) {
    for (double v : plane->values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Model, TraceHasOneEntryPerStage) {
  UnfoldedModel<float> model(small_config(3), 4);
  const auto out = model.infer(Array4<float>({1, 1, 8, 8}, 0.25f), true);
  ASSERT_TRUE(out.trace.has_value());
  ASSERT_EQ(out.trace->size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& s = out.trace->at(k);
    EXPECT_EQ(s.stage_index, k + 1);
    EXPECT_NO_THROW(s.check());
  }
  EXPECT_EQ(out.trace->back().T, out.target);
  EXPECT_EQ(out.trace->back().D, out.reconstruction);
  EXPECT_FALSE(model.infer(Array4<float>({1, 1, 8, 8})).trace.has_value());
}

TEST(Model, InferMatchesEvalForward) {
  UnfoldedModel<float> model(small_config(2), 5);
  nn::Rng rng(20);
  Array4<float> image({2, 1, 9, 9});
  for (float& v : image.values()) v = static_cast<float>(rng.uniform());
  // give the residual branches something to do
  auto params = model.parameters();
  for (auto* p : params) {
    if (p->trainable) {
      for (float& v : p->value.values()) v += static_cast<float>(0.1 * rng.normal());
    }
  }
  const auto a = model.infer(image);
  const auto b = model.forward(image, Mode::eval);
  EXPECT_EQ(a.target, b.target);
  EXPECT_EQ(a.reconstruction, b.reconstruction);
}

TEST(Model, RejectsMultiChannelInput) {
  UnfoldedModel<float> model(small_config(1), 6);
  EXPECT_THROW(model.infer(Array4<float>({1, 2, 4, 4})), ShapeError);
}

TEST(Model, FullModelGradCheck) {
  ModelConfig c = small_config(2);
  UnfoldedModel<double> model(c, 7);
  nn::Rng rng(21);
  perturb(model.parameters(), rng, 0.2);
  StackedOutputAdapter<double> adapter(model);
  Array4<double> image({2, 1, 16, 16});
  for (double& v : image.values()) v = rng.uniform();
  const auto r = nn::grad_check(adapter, image, {.samples_per_tensor = 2, .seed = 9});
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_entry;
  EXPECT_GT(r.checked, 100u);
}

// ---------------------------------------------------------------- config

TEST(Config, ValidationErrors) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.stages = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.bottleneck_channels = 40;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.se_ratio = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(UnfoldedModel<float>(c, 0), ConfigError);
}

TEST(Config, TextRoundTripAndHash) {
  ModelConfig c;
  c.stages = 3;
  c.se = SeFlags::parse("BT");
  c.epsilon_init = 0.1;
  const auto back = ModelConfig::parse(c.str());
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_NE(ModelConfig{}.hash(), c.hash());
  EXPECT_EQ(SeFlags::parse("none").str(), "none");
  EXPECT_THROW(SeFlags::parse("BX"), ConfigError);
  EXPECT_THROW(ModelConfig::parse("stages = 2\nwidth = 3\n"), ConfigError);
}

// ------------------------------------------------------------ parameters

TEST(ParameterCount, MatchesBuiltModels) {
  for (const ModelConfig& c : {small_config(1), small_config(3), ModelConfig{}}) {
    UnfoldedModel<float> model(c, 0);
    EXPECT_EQ(nn::trainable_count(model.parameters()), count_parameters(c));
  }
  ModelConfig filled = small_config(2);
  filled.fill_blocks = 2;
  filled.se = SeFlags::parse("TR");
  UnfoldedModel<float> model(filled, 0);
  EXPECT_EQ(nn::trainable_count(model.parameters()), count_parameters(filled));
}

TEST(ParameterCount, LinearInStageCount) {
  ModelConfig c;
  c.stages = 1;
  const std::size_t one = count_parameters(c);
  for (std::size_t k = 1; k <= 7; ++k) {
    c.stages = k;
    EXPECT_EQ(count_parameters(c), k * one);
  }
  c.stages = 6;
  const std::size_t six = count_parameters(c);
  c.stages = 12;
  EXPECT_EQ(count_parameters(c), 2 * six);
}

TEST(ParameterCount, DefaultsAreNearTheReferenceBudget) {
  const std::size_t n = count_parameters(ModelConfig{});
  std::cout << "default model trainable parameters: " << n << '\n';
  EXPECT_GE(n, 110000u);
  EXPECT_LE(n, 430000u);
}

TEST(ParameterCount, DisablingSeRemovesExactlyTheSeWeights) {
  ModelConfig c;
  const std::size_t with = count_parameters(c);
  c.se = SeFlags::parse("none");
  EXPECT_EQ(with - count_parameters(c), c.stages * 4 * se_parameter_count(32, 4));
}

TEST(ParameterCount, StagesAreIdentical) {
  UnfoldedModel<float> model(small_config(3), 1);
  const std::size_t first = nn::trainable_count(model.stage(0).parameters());
  for (std::size_t k = 1; k < 3; ++k) {
    EXPECT_EQ(nn::trainable_count(model.stage(k).parameters()), first);
  }
}

// ------------------------------------------------------------- lipschitz

namespace {

// Dense matrix of a single-channel 3x3 conv (no bias) on an h x w plane.
Eigen::MatrixXd conv_matrix(const Array4<double>& w, std::size_t h, std::size_t wd) {
  const std::size_t n = h * wd;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < wd; ++c)
      for (int ky = -1; ky <= 1; ++ky)
        for (int kx = -1; kx <= 1; ++kx) {
          const long rr = static_cast<long>(r) + ky, cc = static_cast<long>(c) + kx;
          if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(wd)) continue;
          a(static_cast<Eigen::Index>(r * wd + c), static_cast<Eigen::Index>(rr * static_cast<long>(wd) + cc)) +=
              w(0, 0, static_cast<std::size_t>(ky + 1), static_cast<std::size_t>(kx + 1));
        }
  return a;
}

}  // namespace

TEST(Lipschitz, ZeroMapGivesZero) {
  nn::Conv2d<double> g(1, 1);
  const auto e = estimate_lipschitz<double>(g, {.probe_count = 3});
  EXPECT_EQ(e.estimate, 0.0);
  EXPECT_GE(e.sample_count, 3u);
}

TEST(Lipschitz, ScaledIdentity) {
  nn::Conv2d<double> g(1, 1);
  g.weight().value(0, 0, 1, 1) = 1.7;
  g.bias().value[0] = 0.3;
  const auto e = estimate_lipschitz<double>(g, {.probe_count = 2});
  EXPECT_NEAR(e.estimate, 1.7, 1e-9);
}

TEST(Lipschitz, LinearConvApproachesOperatorNorm) {
  nn::Rng rng(30);
  nn::Conv2d<double> g(1, 1);
  g.init_kaiming(rng);
  const LipschitzOptions opts{.probe_count = 3, .power_steps = 30, .probe_shape = {1, 1, 12, 12}};
  const auto e = estimate_lipschitz<double>(g, opts);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(conv_matrix(g.weight().value, 12, 12));
  const double norm = svd.singularValues()(0);
  EXPECT_LE(e.estimate, norm * (1.0 + 1e-9));
  EXPECT_GE(e.estimate, 0.98 * norm);
}

TEST(Lipschitz, LeavesGradientsUntouched) {
  nn::Rng rng(31);
  auto g = make_branch_group<double>(small_config(), false, true, rng);
  perturb(g.parameters(), rng, 0.3);
  for (auto* p : g.parameters()) p->grad.fill(0.125);
  estimate_lipschitz<double>(g, {.probe_count = 2, .probe_shape = {1, 1, 8, 8}});
  for (auto* p : g.parameters()) {
    for (double v : p->grad.values()) EXPECT_EQ(v, 0.125);
  }
}

TEST(Lipschitz, ModelWrapperAndErrors) {
  UnfoldedModel<double> model(small_config(2), 2);
  const auto e = estimate_lipschitz(model, ModuleKind::noise, 1, {.probe_count = 2});
  EXPECT_EQ(e.module, ModuleKind::noise);
  EXPECT_EQ(e.stage_index, 1u);
  EXPECT_THROW(estimate_lipschitz(model, ModuleKind::background, 0, {}), ConfigError);
  EXPECT_THROW(estimate_lipschitz(model, ModuleKind::target, 2, {}), ConfigError);
  EXPECT_THROW(estimate_lipschitz(model, ModuleKind::target, 0, {.probe_count = 1}), ConfigError);
}
