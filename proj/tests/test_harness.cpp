#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "lrpca/errors.hpp"
#include "lrpca/harness/ablation.hpp"
#include "lrpca/harness/checkpoint.hpp"
#include "lrpca/harness/decompose.hpp"
#include "lrpca/harness/evaluate.hpp"
#include "lrpca/harness/run_config.hpp"
#include "lrpca/harness/trainer.hpp"
#include "lrpca/util/png.hpp"

using namespace lrpca;
using namespace lrpca::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lrpca_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

RunConfig tiny_run(const fs::path& out) {
  RunConfig c;
  c.model.stages = 2;
  c.model.bottleneck_channels = 2;
  c.model.channels = 4;
  c.model.se_ratio = 2;
  c.data.scene.height = 24;
  c.data.scene.width = 24;
  c.data.scene_count = 10;
  c.batch_size = 4;
  c.epochs = 3;
  c.val_every = 1;
  c.lr = 1e-3;
  c.seed = 9;
  c.output_dir = out;
  return c;
}

TrainOptions quiet() {
  TrainOptions o;
  o.lipschitz.probe_shape = {1, 1, 12, 12};
  o.lipschitz.probe_count = 2;
  o.lipschitz.power_steps = 1;
  return o;
}

model::UnfoldedModel<float> tiny_model(std::uint64_t seed) {
  return model::UnfoldedModel<float>(tiny_run("unused").model, seed);
}

}  // namespace

// ------------------------------------------------------------ run config

TEST(RunConfig, TextRoundTrip) {
  auto c = tiny_run("somewhere");
  c.train_noise.enabled = true;
  c.train_noise.spec = data::NoiseSpec::salt_pepper(0.02, 0.04);
  c.rpca.lambda = 0.05;
  const auto back = RunConfig::parse(c.str());
  EXPECT_EQ(back.str(), c.str());
  EXPECT_EQ(back.model, c.model);
  EXPECT_EQ(back.output_dir, c.output_dir);
}

TEST(RunConfig, PathFreeTextOmitsLocations) {
  const auto c = tiny_run("/tmp/run_a");
  EXPECT_EQ(c.str(false).find("run_a"), std::string::npos);
  EXPECT_EQ(c.str(false), tiny_run("/tmp/run_b").str(false));
}

TEST(RunConfig, RejectsBadValues) {
  EXPECT_THROW(RunConfig::parse("lr = 0"), ConfigError);
  EXPECT_THROW(RunConfig::parse("batch_size = 0"), ConfigError);
  EXPECT_THROW(RunConfig::parse("eta = -1"), ConfigError);
  EXPECT_THROW(RunConfig::parse("mode = dance"), ConfigError);
  EXPECT_THROW(RunConfig::parse("no_such_key = 1"), ConfigError);
  EXPECT_THROW(RunConfig::parse("data = /x\nscene.height = 32"), ConfigError);
  EXPECT_THROW(RunConfig::parse("train_noise = fog"), ConfigError);
}

TEST(RunConfig, MergeOverrides) {
  util::KeyValues base{{"lr", "0.1"}, {"seed", "3"}};
  const auto m = merge(base, {{"seed", "4"}});
  EXPECT_EQ(m.at("lr"), "0.1");
  EXPECT_EQ(m.at("seed"), "4");
}

// ------------------------------------------------------------ checkpoint

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto dir = scratch("ckpt_roundtrip");
  auto model = tiny_model(1);
  Checkpoint ck = capture(model, nullptr);
  ck.epoch = 7;
  ck.best_val_miou = 0.125;
  ck.train_log = "epoch\n1\n";
  save_checkpoint(dir / "a.ckpt", ck);
  const auto back = load_checkpoint(dir / "a.ckpt", model.config());
  ASSERT_EQ(back.parameters.size(), ck.parameters.size());
  for (std::size_t i = 0; i < ck.parameters.size(); ++i) {
    EXPECT_EQ(back.parameters[i].name, ck.parameters[i].name);
    EXPECT_EQ(back.parameters[i].data, ck.parameters[i].data);
  }
  EXPECT_EQ(back.epoch, 7u);
  EXPECT_EQ(back.train_log, ck.train_log);
  save_checkpoint(dir / "b.ckpt", back);
  EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));

  auto other = tiny_model(2);
  restore(back, other, nullptr);
  const data::Plane img({1, 1, 12, 12}, 0.3);
  EXPECT_EQ(other.infer(img.cast<float>()).target, model.infer(img.cast<float>()).target);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto dir = scratch("ckpt_corrupt");
  auto model = tiny_model(1);
  save_checkpoint(dir / "ok.ckpt", capture(model, nullptr));
  const auto bytes = slurp(dir / "ok.ckpt");
  const auto write = [&](const std::string& name, const std::string& b) {
    std::ofstream(dir / name, std::ios::binary) << b;
    return dir / name;
  };

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(load_checkpoint(write("magic.ckpt", bad_magic)), FormatError);

  auto bad_version = bytes;
  bad_version[8] = 99;
  EXPECT_THROW(load_checkpoint(write("version.ckpt", bad_version)), FormatError);

  EXPECT_THROW(load_checkpoint(write("short.ckpt", bytes.substr(0, bytes.size() / 2))), FormatError);
  EXPECT_THROW(load_checkpoint(write("long.ckpt", bytes + "x")), FormatError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), DataError);

  auto wider = model.config();
  wider.channels = 8;
  EXPECT_THROW(load_checkpoint(dir / "ok.ckpt", wider), FormatError);
}

TEST(Checkpoint, MismatchLeavesModelUntouched) {
  auto source = tiny_model(1);
  auto ck = capture(source, nullptr);
  ck.parameters.back().shape.n += 1;
  auto target = tiny_model(2);
  const auto before = capture(target, nullptr);
  EXPECT_THROW(restore(ck, target, nullptr), FormatError);
  const auto after = capture(target, nullptr);
  for (std::size_t i = 0; i < before.parameters.size(); ++i) {
    EXPECT_EQ(before.parameters[i].data, after.parameters[i].data);
  }
}

// ------------------------------------------------------------ training

TEST(Trainer, IdenticalRunsProduceIdenticalArtifacts) {
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  const auto ca = tiny_run(a);
  const auto cb = tiny_run(b);
  train(ca, prepare_data(ca), quiet());
  train(cb, prepare_data(cb), quiet());
  for (const char* f : {"train_log.csv", "lipschitz.csv", "last.ckpt", "best.ckpt"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

TEST(Trainer, ResumeReproducesTheUninterruptedRun) {
  const auto full = scratch("resume_full");
  const auto part = scratch("resume_part");
  const auto cf = tiny_run(full);
  const auto cp = tiny_run(part);
  const auto ref = train(cf, prepare_data(cf), quiet());

  auto first = quiet();
  first.stop_after = 1;
  const auto half = train(cp, prepare_data(cp), first);
  EXPECT_EQ(half.history.size(), 1u);
  auto second = quiet();
  second.resume = part / "last.ckpt";
  const auto resumed = train(cp, prepare_data(cp), second);

  ASSERT_EQ(resumed.history.size(), ref.history.size());
  EXPECT_EQ(slurp(part / "train_log.csv"), slurp(full / "train_log.csv"));
  EXPECT_EQ(slurp(part / "lipschitz.csv"), slurp(full / "lipschitz.csv"));
  EXPECT_EQ(slurp(part / "last.ckpt"), slurp(full / "last.ckpt"));
}

TEST(Trainer, ResumeRejectsADifferentConfig) {
  const auto dir = scratch("resume_mismatch");
  auto c = tiny_run(dir);
  auto o = quiet();
  o.stop_after = 1;
  train(c, prepare_data(c), o);
  c.lr = 5e-4;
  auto r = quiet();
  r.resume = dir / "last.ckpt";
  EXPECT_THROW(train(c, prepare_data(c), r), ConfigError);
}

TEST(Trainer, WritesOneLogLinePerEpoch) {
  const auto dir = scratch("log_lines");
  const auto c = tiny_run(dir);
  const auto r = train(c, prepare_data(c), quiet());
  ASSERT_EQ(r.history.size(), 3u);
  std::istringstream log(slurp(dir / "train_log.csv"));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) ++lines;
  EXPECT_EQ(lines, 4u);
  for (const auto& e : r.history) {
    EXPECT_TRUE(std::isfinite(e.total));
    EXPECT_TRUE(e.val_miou.has_value());
  }
  // two stages, target and noise networks, three validation epochs
  EXPECT_EQ(r.lipschitz.size(), 12u);
}

TEST(Trainer, NonFiniteInputNamesTheStage) {
  const auto dir = scratch("nan");
  auto c = tiny_run(dir);
  auto split = prepare_data(c);
  for (auto& s : split.train) s.image[5] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(c, split, quiet());
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("stage 1"), std::string::npos) << e.what();
  }
}

TEST(Trainer, SplitIsDeterministicAndDisjoint) {
  const auto c = tiny_run("unused");
  const auto a = prepare_data(c);
  const auto b = prepare_data(c);
  ASSERT_EQ(a.train.size() + a.val.size(), 10u);
  EXPECT_EQ(a.train.size(), 8u);
  for (std::size_t i = 0; i < a.val.size(); ++i) EXPECT_EQ(a.val[i].id, b.val[i].id);
  for (const auto& v : a.val) {
    for (const auto& t : a.train) EXPECT_NE(v.id, t.id);
  }
}

TEST(Trainer, MovingAverageAndCv) {
  const auto ma = moving_average({1, 2, 3, 4, 5, 6}, 5);
  ASSERT_EQ(ma.size(), 2u);
  EXPECT_DOUBLE_EQ(ma[0], 3.0);
  EXPECT_DOUBLE_EQ(ma[1], 4.0);
  EXPECT_TRUE(moving_average({1, 2}, 5).empty());
  // last ceil(5/4) = 2 values: {2, 4}, std 1, mean 3
  EXPECT_DOUBLE_EQ(final_quarter_cv({9, 9, 9, 2, 4}), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(final_quarter_cv({5, 5, 5, 5}), 0.0);
}

// ------------------------------------------------------------ evaluation

TEST(Evaluate, GroundTruthPredictorIsPerfect) {
  const auto split = prepare_data(tiny_run("unused"));
  const Predictor oracle = [&](const data::Plane& img) {
    for (const auto& s : split.val) {
      if (&s.image == &img || s.image == img) return s.mask;
    }
    return data::Plane(img.shape());
  };
  const auto acc = evaluate(oracle, split.val);
  const auto s = acc.summary();
  EXPECT_DOUBLE_EQ(s.miou, 1.0);
  EXPECT_DOUBLE_EQ(s.pd, 1.0);
  EXPECT_DOUBLE_EQ(s.fa, 0.0);
  EXPECT_DOUBLE_EQ(s.auc, 1.0);
  std::istringstream csv(acc.csv());
  std::string line;
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, split.val.size() + 2);  // header + images + summary
}

TEST(Evaluate, FalsePositivesFallWithThreshold) {
  auto model = tiny_model(4);
  const auto split = prepare_data(tiny_run("unused"));
  std::uint64_t last = std::numeric_limits<std::uint64_t>::max();
  for (double t = 0.1; t < 0.95; t += 0.1) {
    EvalOptions o;
    o.threshold = t;
    const auto fp = evaluate(model_predictor(model), split.val, o).summary().counts.fp;
    EXPECT_LE(fp, last);
    last = fp;
  }
}

TEST(Evaluate, RejectsMismatchedPrediction) {
  const auto split = prepare_data(tiny_run("unused"));
  const Predictor wrong = [](const data::Plane&) { return data::Plane({1, 1, 3, 3}); };
  EXPECT_THROW(evaluate(wrong, split.val), ShapeError);
}

TEST(Evaluate, SweepRowCountsAndCleanLevel) {
  auto model = tiny_model(5);
  const auto split = prepare_data(tiny_run("unused"));
  const auto predict = model_predictor(model);
  const auto clean = evaluate(predict, split.val).summary();
  const auto g = robustness_sweep(predict, split.val, SweepProtocol::gaussian,
                                  default_sweep_levels(SweepProtocol::gaussian));
  const auto sp = robustness_sweep(predict, split.val, SweepProtocol::salt_pepper,
                                   default_sweep_levels(SweepProtocol::salt_pepper));
  ASSERT_EQ(g.size(), 5u);
  ASSERT_EQ(sp.size(), 6u);
  for (const auto* rows : {&g, &sp}) {
    const auto& r0 = rows->front().report;
    EXPECT_EQ(r0.miou, clean.miou);
    EXPECT_EQ(r0.counts, clean.counts);
    EXPECT_EQ(std::isnan(r0.auc) ? 0.0 : r0.auc, std::isnan(clean.auc) ? 0.0 : clean.auc);
  }
  EXPECT_EQ(sp[3].level.spec.pepper_prob, kSweepPepper);
  std::istringstream csv(sweep_csv(sp));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 7u);
}

TEST(Evaluate, NoiseSeedsAreStable) {
  auto model = tiny_model(6);
  const auto split = prepare_data(tiny_run("unused"));
  EvalOptions o;
  o.noise = data::NoiseSpec::gaussian(10.0);
  o.noise_seed = 3;
  const auto a = evaluate(model_predictor(model), split.val, o).csv();
  const auto b = evaluate(model_predictor(model), split.val, o).csv();
  EXPECT_EQ(a, b);
}

TEST(Evaluate, BaselinePredictorIsBounded) {
  const auto split = prepare_data(tiny_run("unused"));
  const auto p = rpca_predictor({})(split.val.front().image);
  for (double v : p.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

// ------------------------------------------------------------ decompose

TEST(Decompose, WritesEveryStageAndComponent) {
  const auto dir = scratch("decompose");
  auto model = tiny_model(7);
  auto& bg = model.stage(0).group(model::ModuleKind::background);
  for (auto* p : bg.parameters()) {
    if (p->trainable) p->value.fill(0.0f);
  }
  const auto split = prepare_data(tiny_run("unused"));
  const auto image = split.val.front().image.cast<float>();
  const auto entries = decompose(model, image, dir);
  ASSERT_EQ(entries.size(), 2u * 4u);
  for (const auto& e : entries) {
    EXPECT_TRUE(fs::exists(e.raw));
    EXPECT_TRUE(fs::exists(e.png));
    const auto png = util::read_png_gray(e.png);
    EXPECT_EQ(png.width, 24u);
    EXPECT_EQ(png.height, 24u);
  }
  EXPECT_TRUE(fs::exists(dir / "manifest.tsv"));
  const auto b1 = read_raw(dir / "stage01_B.raw");
  EXPECT_EQ(b1, image);
}

TEST(Decompose, RawRoundTripAndBadMagic) {
  const auto dir = scratch("raw");
  nn::Array4<float> p({1, 1, 3, 4});
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = 0.5f * static_cast<float>(i) - 1.0f;
  write_raw(dir / "p.raw", p);
  EXPECT_EQ(read_raw(dir / "p.raw"), p);
  std::ofstream(dir / "bad.raw", std::ios::binary) << "NOTARAW!00000000";
  EXPECT_THROW(read_raw(dir / "bad.raw"), FormatError);
}

TEST(Decompose, GrayScaling) {
  const auto flat = scale_to_gray8(nn::Array4<float>({1, 1, 2, 2}, 3.0f));
  for (auto v : flat.pixels) EXPECT_EQ(v, 0);
  nn::Array4<float> ramp({1, 1, 1, 3});
  ramp[0] = -1.0f;
  ramp[1] = 0.0f;
  ramp[2] = 1.0f;
  const auto g = scale_to_gray8(ramp);
  EXPECT_EQ(g.pixels[0], 0);
  EXPECT_EQ(g.pixels[2], 255);
}

// ------------------------------------------------------------ ablation

TEST(Ablation, GridSizes) {
  const RunConfig base = tiny_run("abl");
  EXPECT_EQ(ablation_grid(AblationGrid::se, base).size(), 5u);
  EXPECT_EQ(ablation_grid(AblationGrid::stages, base).size(), 7u);
  EXPECT_EQ(ablation_grid(AblationGrid::channels, base).size(), 7u);
  EXPECT_EQ(ablation_grid(AblationGrid::eta, base).size(), 4u);
  EXPECT_THROW(ablation_grid_from_string("depth"), ConfigError);
}

TEST(Ablation, EntriesVaryOneFactor) {
  const RunConfig base = tiny_run("abl");
  const auto stages = ablation_grid(AblationGrid::stages, base);
  for (std::size_t k = 0; k < stages.size(); ++k) {
    EXPECT_EQ(stages[k].config.model.stages, k + 1);
    EXPECT_EQ(stages[k].config.model.channels, base.model.channels);
    EXPECT_NO_THROW(stages[k].config.validate());
  }
  const auto se = ablation_grid(AblationGrid::se, base);
  EXPECT_EQ(se.front().config.model.se.str(), "none");
  EXPECT_EQ(se.back().config.model.se.str(), "BTNR");
  const auto eta = ablation_grid(AblationGrid::eta, base);
  EXPECT_DOUBLE_EQ(eta.back().config.loss.eta, 0.2);
  EXPECT_NE(eta[0].config.output_dir, eta[1].config.output_dir);
}
