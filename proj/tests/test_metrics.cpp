#include <gtest/gtest.h>

#include <cmath>

#include "lrpca/errors.hpp"
#include "lrpca/metrics/metrics.hpp"
#include "lrpca/nn/rng.hpp"

using namespace lrpca;
using namespace lrpca::metrics;
using A = nn::Array4<double>;

namespace {

A square(std::size_t size, std::size_t y0, std::size_t x0, std::size_t side) {
  A a({1, 1, size, size});
  for (std::size_t y = y0; y < y0 + side; ++y)
    for (std::size_t x = x0; x < x0 + side; ++x) a(0, 0, y, x) = 1.0;
  return a;
}

A random_mask(std::size_t h, std::size_t w, double p, nn::Rng& rng) {
  A a({1, 1, h, w});
  for (auto& v : a.values()) v = rng.uniform() < p ? 1.0 : 0.0;
  return a;
}

A relax(const A& m) {
  A out = m;
  for (auto& v : out.values()) v = v > 0.5 ? 1.0 - 1e-6 : 1e-6;
  return out;
}

}  // namespace

TEST(SoftIou, PerfectPredictionGivesZero) {
  const A gt = square(16, 4, 4, 5);
  EXPECT_NEAR(soft_iou_loss(relax(gt), gt), 0.0, 1e-4);
}

TEST(SoftIou, ZeroPredictionGivesOne) {
  const A gt = square(16, 4, 4, 5);
  A pred({1, 1, 16, 16});
  pred.fill(1e-9);
  EXPECT_NEAR(soft_iou_loss(pred, gt), 1.0, 1e-6);
}

TEST(SoftIou, HalfOverlapSquares) {
  // 4x4 squares shifted by 2 columns: intersection 8, union 24
  const A gt = square(12, 2, 2, 4);
  const A pred = square(12, 2, 4, 4);
  EXPECT_NEAR(soft_iou_loss(pred, gt), 1.0 - 1.0 / 3.0, 1e-6);
}

TEST(SoftIou, BatchMean) {
  A pred({2, 1, 4, 4}), gt({2, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) {
    gt[i] = pred[i] = 1.0;  // sample 0 perfect
    gt[16 + i] = 1.0;       // sample 1 all missed
  }
  EXPECT_NEAR(soft_iou_loss(pred, gt), 0.5, 1e-6);
}

TEST(SoftIou, ShapeMismatchThrows) {
  EXPECT_THROW(soft_iou_loss(A({1, 1, 4, 4}), A({1, 1, 4, 5})), ShapeError);
}

TEST(SoftIou, GradientMatchesFiniteDifferences) {
  nn::Rng rng(3);
  A gt({2, 1, 3, 5});
  for (auto& v : gt.values()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
  A pred(gt.shape());
  for (auto& v : pred.values()) v = rng.uniform(0.05, 0.95);
  A grad;
  soft_iou_loss(pred, gt, &grad);
  const double h = 1e-6;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    A p = pred, m = pred;
    p[i] += h;
    m[i] -= h;
    const double fd = (soft_iou_loss(p, gt) - soft_iou_loss(m, gt)) / (2 * h);
    EXPECT_NEAR(grad[i], fd, 1e-7 * std::max(1.0, std::abs(fd))) << "index " << i;
  }
}

TEST(TotalLoss, EtaZeroIsSegmentationOnly) {
  nn::Rng rng(4);
  const A gt = random_mask(8, 8, 0.2, rng);
  A pred(gt.shape()), recon(gt.shape()), input(gt.shape());
  for (auto& v : pred.values()) v = rng.uniform(0.01, 0.99);
  for (auto& v : recon.values()) v = rng.uniform();
  for (auto& v : input.values()) v = rng.uniform();
  LossConfig c;
  c.eta = 0.0;
  const auto l = total_loss(pred, gt, recon, input, c);
  EXPECT_EQ(l.total, l.seg);
  EXPECT_EQ(l.seg, soft_iou_loss(pred, gt));
  EXPECT_GT(l.fidelity, 0.0);
}

TEST(TotalLoss, PerfectCaseIsNearZero) {
  const A gt = square(10, 2, 2, 3);
  A input(gt.shape());
  input.fill(0.3);
  const auto l = total_loss(relax(gt), gt, input, input, LossConfig{});
  EXPECT_NEAR(l.total, 0.0, 1e-4);
  EXPECT_EQ(l.fidelity, 0.0);
}

TEST(TotalLoss, WorkedExample) {
  // seg 0.4 from a 0.6 overlap ratio; recon error sqrt(0.02) at every pixel
  A gt({1, 1, 1, 10}), pred({1, 1, 1, 10});
  for (std::size_t i = 0; i < 10; ++i) gt[i] = 1.0;
  for (std::size_t i = 0; i < 6; ++i) pred[i] = 1.0;
  A input(gt.shape()), recon(gt.shape());
  for (auto& v : recon.values()) v = std::sqrt(0.02);
  const auto l = total_loss(pred, gt, recon, input, LossConfig{});
  EXPECT_NEAR(l.seg, 0.4, 1e-6);
  EXPECT_NEAR(l.fidelity, 0.02, 1e-15);
  EXPECT_NEAR(l.total, 0.4002, 1e-6);
}

TEST(TotalLoss, ReconstructionGradient) {
  nn::Rng rng(5);
  A gt = random_mask(4, 4, 0.3, rng);
  A pred(gt.shape()), recon(gt.shape()), input(gt.shape());
  for (auto& v : pred.values()) v = rng.uniform(0.1, 0.9);
  for (auto& v : recon.values()) v = rng.uniform();
  for (auto& v : input.values()) v = rng.uniform();
  LossConfig c;
  c.eta = 0.7;
  A gp, gr;
  total_loss(pred, gt, recon, input, c, &gp, &gr);
  const double h = 1e-6;
  for (std::size_t i = 0; i < recon.size(); ++i) {
    A p = recon, m = recon;
    p[i] += h;
    m[i] -= h;
    const double fd =
        (total_loss(pred, gt, p, input, c).total - total_loss(pred, gt, m, input, c).total) / (2 * h);
    EXPECT_NEAR(gr[i], fd, 1e-7);
  }
}

TEST(TotalLoss, RejectsBadConfigAndShapes) {
  const A a({1, 1, 4, 4});
  LossConfig c;
  c.eta = -0.1;
  EXPECT_THROW(total_loss(a, a, a, a, c), ConfigError);
  EXPECT_THROW(total_loss(a, a, A({1, 1, 4, 3}), A({1, 1, 4, 3}), LossConfig{}), ShapeError);
}

TEST(PixelMetrics, IdenticalMasks) {
  const A gt = square(10, 3, 3, 2);
  const auto m = pixel_metrics(gt, gt, 0.5);
  EXPECT_EQ(m.miou, 1.0);
  EXPECT_EQ(m.f1, 1.0);
  EXPECT_EQ(m.fa, 0.0);
  EXPECT_EQ(m.counts.total(), 100u);
}

TEST(PixelMetrics, DisjointMasks) {
  A gt({1, 1, 10, 10}), pred({1, 1, 10, 10});
  for (std::size_t x = 0; x < 10; ++x) {
    gt(0, 0, 0, x) = 1.0;
    pred(0, 0, 9, x) = 1.0;
  }
  const auto m = pixel_metrics(pred, gt, 0.5);
  EXPECT_EQ(m.miou, 0.0);
  EXPECT_EQ(m.f1, 0.0);
  EXPECT_DOUBLE_EQ(m.fa, 0.1);
  EXPECT_EQ(m.counts, (ConfusionCounts{0, 10, 10, 80}));
}

TEST(PixelMetrics, EmptyVersusEmpty) {
  const A z({1, 1, 5, 5});
  const auto m = pixel_metrics(z, z, 0.5);
  EXPECT_EQ(m.miou, 1.0);
  EXPECT_EQ(m.f1, 1.0);
  EXPECT_EQ(m.fa, 0.0);
}

TEST(PixelMetrics, EmptyImageThrows) {
  EXPECT_THROW(pixel_metrics(A({1, 1, 0, 0}), A({1, 1, 0, 0}), 0.5), DataError);
}

TEST(PixelMetrics, F1MatchesPrecisionRecallForm) {
  nn::Rng rng(6);
  for (int k = 0; k < 50; ++k) {
    const A gt = random_mask(12, 12, 0.2, rng);
    const A pred = random_mask(12, 12, 0.25, rng);
    const auto m = pixel_metrics(pred, gt, 0.5);
    const auto& c = m.counts;
    if (c.tp == 0) continue;
    const double prec = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    const double rec = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    EXPECT_NEAR(m.f1, 2 * prec * rec / (prec + rec), 1e-12);
  }
}

TEST(PixelMetrics, FalseAlarmMonotoneInThreshold) {
  nn::Rng rng(7);
  const A gt = random_mask(16, 16, 0.1, rng);
  A scores(gt.shape());
  for (auto& v : scores.values()) v = rng.uniform();
  double prev = -1.0;
  for (int i = 9; i >= 1; --i) {
    const double fa = pixel_metrics(scores, gt, i / 10.0).fa;
    EXPECT_GE(fa, prev);
    prev = fa;
  }
}

TEST(Components, SolidBlobIsOne) {
  const auto l = connected_components(square(10, 2, 2, 4));
  ASSERT_EQ(l.components.size(), 1u);
  EXPECT_EQ(l.components[0].pixels.size(), 16u);
  EXPECT_DOUBLE_EQ(l.components[0].cy, 3.5);
  EXPECT_DOUBLE_EQ(l.components[0].cx, 3.5);
}

TEST(Components, DiagonalNeighboursConnect) {
  A m({1, 1, 4, 4});
  m(0, 0, 1, 1) = 1.0;
  m(0, 0, 2, 2) = 1.0;
  EXPECT_EQ(connected_components(m).components.size(), 1u);
}

TEST(Components, SeparatedBlobsAreDistinct) {
  A m = square(12, 1, 1, 3);
  m += square(12, 1, 6, 3);
  const auto l = connected_components(m);
  ASSERT_EQ(l.components.size(), 2u);
  EXPECT_EQ(l.labels[1 * 12 + 1], 0);
  EXPECT_EQ(l.labels[1 * 12 + 6], 1);
  EXPECT_EQ(l.labels[0], -1);
}

TEST(TargetPd, IdenticalMasks) {
  A m = square(20, 2, 2, 3);
  m += square(20, 10, 10, 2);
  const auto r = target_pd(m, m);
  EXPECT_EQ(r.pd, 1.0);
  EXPECT_EQ(r.matched, 2u);
}

TEST(TargetPd, EmptyPrediction) {
  const auto r = target_pd(A({1, 1, 20, 20}), square(20, 5, 5, 2));
  EXPECT_EQ(r.pd, 0.0);
  EXPECT_EQ(r.total, 1u);
}

TEST(TargetPd, NoTargetsGivesOne) {
  const auto r = target_pd(square(20, 5, 5, 2), A({1, 1, 20, 20}));
  EXPECT_EQ(r.pd, 1.0);
  EXPECT_EQ(r.total, 0u);
  EXPECT_EQ(r.predicted, 1u);
}

TEST(TargetPd, TwoOfThreeDetected) {
  A gt = square(32, 2, 2, 3);
  gt += square(32, 2, 20, 3);
  gt += square(32, 20, 12, 3);
  A pred = square(32, 3, 3, 2);  // overlaps the first
  pred += square(32, 4, 23, 1);  // centroid within 3 px of the second, no overlap
  pred += square(32, 28, 28, 2); // far from everything
  const auto r = target_pd(pred, gt);
  EXPECT_NEAR(r.pd, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(r.matched, 2u);
  EXPECT_EQ(r.predicted, 3u);
}

TEST(TargetPd, OneToOneMatching) {
  // a single large prediction covering two targets detects only one
  A gt = square(16, 2, 2, 2);
  gt += square(16, 2, 6, 2);
  const auto r = target_pd(square(16, 1, 1, 8), gt);
  EXPECT_EQ(r.matched, 1u);
  EXPECT_DOUBLE_EQ(r.pd, 0.5);
}

TEST(RocAuc, PerfectSeparation) {
  nn::Rng rng(8);
  const A gt = random_mask(10, 10, 0.2, rng);
  A s(gt.shape());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = gt[i] > 0.5 ? rng.uniform(0.6, 1.0) : rng.uniform(0.0, 0.5);
  EXPECT_DOUBLE_EQ(roc_auc(s, gt), 1.0);
}

TEST(RocAuc, ConstantScoresGiveHalf) {
  nn::Rng rng(9);
  const A gt = random_mask(10, 10, 0.3, rng);
  A s(gt.shape());
  s.fill(0.42);
  EXPECT_DOUBLE_EQ(roc_auc(s, gt), 0.5);
}

TEST(RocAuc, FourPointExample) {
  EXPECT_DOUBLE_EQ(roc_auc({0.9, 0.8, 0.4, 0.3}, {1, 0, 1, 0}), 0.75);
}

TEST(RocAuc, MatchesPairCountingWithTies) {
  nn::Rng rng(10);
  std::vector<double> s(60);
  std::vector<std::uint8_t> l(60);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = static_cast<double>(rng.index(5));  // heavy ties
    l[i] = rng.uniform() < 0.4 ? 1 : 0;
  }
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (l[i] == 1 && l[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  EXPECT_NEAR(roc_auc(s, l), wins / pairs, 1e-12);
}

TEST(RocAuc, InvariantUnderMonotoneTransforms) {
  nn::Rng rng(11);
  for (int k = 0; k < 20; ++k) {
    const A gt = random_mask(12, 12, 0.15, rng);
    A s(gt.shape());
    for (auto& v : s.values()) v = rng.uniform(0.01, 0.99);
    A t1 = s, t2 = s;
    for (auto& v : t1.values()) v = std::log(v / (1 - v));
    for (auto& v : t2.values()) v = std::pow(v, 3.0) * 7.0 - 2.0;
    const double base = roc_auc(s, gt);
    EXPECT_NEAR(roc_auc(t1, gt), base, 1e-12);
    EXPECT_NEAR(roc_auc(t2, gt), base, 1e-12);
  }
}

TEST(RocAuc, SingleClassThrows) {
  A s({1, 1, 4, 4}), gt({1, 1, 4, 4});
  EXPECT_THROW(roc_auc(s, gt), DataError);
  gt.fill(1.0);
  EXPECT_THROW(roc_auc(s, gt), DataError);
}

TEST(Accumulator, SummaryAndCsv) {
  MetricAccumulator acc;
  const A gt = square(10, 2, 2, 3);
  A prob(gt.shape());
  for (std::size_t i = 0; i < prob.size(); ++i) prob[i] = gt[i] > 0.5 ? 0.9 : 0.1;
  const auto& r = acc.add("a", prob, gt);
  EXPECT_EQ(r.miou, 1.0);
  EXPECT_EQ(r.pd, 1.0);
  EXPECT_EQ(r.auc, 1.0);
  A empty_prob(gt.shape());
  empty_prob.fill(0.1);
  acc.add("b", empty_prob, gt);
  const auto s = acc.summary();
  EXPECT_DOUBLE_EQ(s.miou, 0.5);
  EXPECT_DOUBLE_EQ(s.pd, 0.5);
  EXPECT_EQ(s.counts.total(), 200u);
  const std::string csv = acc.csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "image_id,miou,f1,pd,fa,auc,tp,fp,fn,tn");
  EXPECT_NE(csv.find("\na,1,1,1,0,1,9,0,0,91\n"), std::string::npos);
  EXPECT_NE(csv.find("__summary__,0.5,"), std::string::npos);
}
