#include "lrpca/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "lrpca/errors.hpp"
#include "lrpca/util/kv.hpp"

namespace lrpca::metrics {

namespace {

template <typename T>
void require_same_shape(const Array4<T>& a, const Array4<T>& b, const char* what) {
  const auto sa = a.shape();
  const auto sb = b.shape();
  const char* axis = sa.n != sb.n   ? "batch"
                     : sa.c != sb.c ? "channels"
                     : sa.h != sb.h ? "height"
                     : sa.w != sb.w ? "width"
                                    : nullptr;
  if (axis != nullptr) throw ShapeError(std::string(what) + ": shape mismatch", axis);
}

template <typename T>
bool on(T v) {
  return v > T(0.5);
}

}  // namespace

void LossConfig::validate() const {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("loss: eta must be finite and >= 0");
  if (!(binarize_threshold > 0.0 && binarize_threshold < 1.0)) {
    throw ConfigError("loss: binarize_threshold must lie in (0, 1)");
  }
}

template <typename T>
double soft_iou_loss(const Array4<T>& pred, const Array4<T>& gt, Array4<T>* grad) {
  require_same_shape(pred, gt, "soft_iou_loss");
  const std::size_t batch = pred.shape().n;
  if (batch == 0 || pred.empty()) throw ShapeError("soft_iou_loss: empty batch", "batch");
  if (grad != nullptr) *grad = Array4<T>(pred.shape());
  double acc = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    const auto p = pred.sample(n);
    const auto g = gt.sample(n);
    double inter = 0.0, sp = 0.0, sg = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      inter += static_cast<double>(p[i]) * g[i];
      sp += p[i];
      sg += g[i];
    }
    const double uni = sp + sg - inter + kSoftIouEps;
    acc += inter / uni;
    if (grad != nullptr) {
      auto out = grad->sample(n);
      const double scale = -1.0 / (static_cast<double>(batch) * uni * uni);
      for (std::size_t i = 0; i < p.size(); ++i) {
        out[i] = static_cast<T>(scale * (g[i] * uni - inter * (1.0 - g[i])));
      }
    }
  }
  return 1.0 - acc / static_cast<double>(batch);
}

template <typename T>
LossValue total_loss(const Array4<T>& pred, const Array4<T>& gt, const Array4<T>& recon,
                     const Array4<T>& input, const LossConfig& config, Array4<T>* grad_pred,
                     Array4<T>* grad_recon) {
  config.validate();
  require_same_shape(pred, gt, "total_loss");
  require_same_shape(recon, input, "total_loss");
  require_same_shape(pred, recon, "total_loss");
  LossValue v;
  v.seg = soft_iou_loss(pred, gt, grad_pred);
  const std::size_t batch = recon.shape().n;
  const double m = static_cast<double>(recon.size() / batch);
  double sq = 0.0;
  for (std::size_t i = 0; i < recon.size(); ++i) {
    const double d = static_cast<double>(recon[i]) - input[i];
    sq += d * d;
  }
  v.fidelity = sq / (m * static_cast<double>(batch));
  v.total = v.seg + config.eta * v.fidelity;
  if (grad_recon != nullptr) {
    *grad_recon = Array4<T>(recon.shape());
    const double scale = 2.0 * config.eta / (m * static_cast<double>(batch));
    for (std::size_t i = 0; i < recon.size(); ++i) {
      (*grad_recon)[i] = static_cast<T>(scale * (static_cast<double>(recon[i]) - input[i]));
    }
  }
  return v;
}

double iou_from(const ConfusionCounts& c) {
  const auto den = c.tp + c.fp + c.fn;
  return den == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(den);
}

double f1_from(const ConfusionCounts& c) {
  const auto den = 2 * c.tp + c.fp + c.fn;
  return den == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
}

template <typename T>
PixelMetrics pixel_metrics(const Array4<T>& pred, const Array4<T>& gt, double threshold) {
  require_same_shape(pred, gt, "pixel_metrics");
  if (pred.empty()) throw DataError("pixel_metrics: empty image");
  PixelMetrics out;
  auto& c = out.counts;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = static_cast<double>(pred[i]) > threshold;
    const bool g = on(gt[i]);
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  out.miou = iou_from(c);
  out.f1 = f1_from(c);
  out.fa = static_cast<double>(c.fp) / static_cast<double>(c.total());
  return out;
}

template <typename T>
Labeling connected_components(const Array4<T>& mask, std::size_t n, std::size_t c) {
  const auto s = mask.shape();
  if (n >= s.n || c >= s.c) throw ShapeError("connected_components: plane out of range", "batch");
  const auto plane = mask.plane(n, c);
  const std::size_t h = s.h, w = s.w;
  Labeling out;
  out.labels.assign(h * w, -1);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (!on(plane[start]) || out.labels[start] >= 0) continue;
    const int id = static_cast<int>(out.components.size());
    Component comp;
    out.labels[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t idx = stack.back();
      stack.pop_back();
      comp.pixels.push_back(idx);
      const std::size_t y = idx / w, x = idx % w;
      for (std::size_t ny = y == 0 ? 0 : y - 1; ny <= std::min(y + 1, h - 1); ++ny) {
        for (std::size_t nx = x == 0 ? 0 : x - 1; nx <= std::min(x + 1, w - 1); ++nx) {
          const std::size_t j = ny * w + nx;
          if (on(plane[j]) && out.labels[j] < 0) {
            out.labels[j] = id;
            stack.push_back(j);
          }
        }
      }
    }
    std::sort(comp.pixels.begin(), comp.pixels.end());
    double sy = 0.0, sx = 0.0;
    for (const std::size_t idx : comp.pixels) {
      sy += static_cast<double>(idx / w);
      sx += static_cast<double>(idx % w);
    }
    comp.cy = sy / static_cast<double>(comp.pixels.size());
    comp.cx = sx / static_cast<double>(comp.pixels.size());
    out.components.push_back(std::move(comp));
  }
  return out;
}

template <typename T>
TargetMatch target_pd(const Array4<T>& pred_mask, const Array4<T>& gt_mask, double radius,
                      std::size_t n, std::size_t c) {
  require_same_shape(pred_mask, gt_mask, "target_pd");
  const Labeling gt = connected_components(gt_mask, n, c);
  const Labeling pr = connected_components(pred_mask, n, c);
  TargetMatch m;
  m.total = gt.components.size();
  m.predicted = pr.components.size();
  if (m.total == 0) return m;

  struct Pair {
    std::size_t overlap;
    double dist;
    std::size_t g, p;
  };
  std::vector<Pair> pairs;
  for (std::size_t g = 0; g < gt.components.size(); ++g) {
    const auto& gc = gt.components[g];
    std::vector<std::size_t> overlap(pr.components.size(), 0);
    for (const std::size_t idx : gc.pixels) {
      if (const int l = pr.labels[idx]; l >= 0) ++overlap[static_cast<std::size_t>(l)];
    }
    for (std::size_t p = 0; p < pr.components.size(); ++p) {
      const auto& pc = pr.components[p];
      const double dist = std::hypot(gc.cy - pc.cy, gc.cx - pc.cx);
      if (overlap[p] > 0 || dist <= radius) pairs.push_back({overlap[p], dist, g, p});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::tie(b.overlap, a.dist, a.g, a.p) < std::tie(a.overlap, b.dist, b.g, b.p);
  });
  std::vector<bool> gt_used(gt.components.size(), false), pr_used(pr.components.size(), false);
  for (const auto& pr_pair : pairs) {
    if (gt_used[pr_pair.g] || pr_used[pr_pair.p]) continue;
    gt_used[pr_pair.g] = pr_used[pr_pair.p] = true;
    ++m.matched;
  }
  m.pd = static_cast<double>(m.matched) / static_cast<double>(m.total);
  return m;
}

double roc_auc(std::vector<double> scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: size mismatch", "width");
  std::size_t pos = 0;
  for (const auto l : labels) pos += l != 0;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("roc_auc: undefined for single-class ground truth");
  for (const double s : scores) {
    if (!std::isfinite(s)) throw NumericError("roc_auc: non-finite score");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  // sweep thresholds from high to low; tied scores move together
  double area = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const std::size_t tp0 = tp, fp0 = fp;
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      if (labels[order[i]] != 0) ++tp;
      else ++fp;
    }
    area += static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0) / 2.0;
  }
  return area / (static_cast<double>(pos) * static_cast<double>(neg));
}

template <typename T>
double roc_auc(const Array4<T>& scores, const Array4<T>& gt) {
  require_same_shape(scores, gt, "roc_auc");
  std::vector<double> s(scores.size());
  std::vector<std::uint8_t> l(gt.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = scores[i];
    l[i] = on(gt[i]) ? 1 : 0;
  }
  return roc_auc(std::move(s), l);
}

std::string csv_header() { return "image_id,miou,f1,pd,fa,auc,tp,fp,fn,tn"; }

std::string csv_row(const std::string& id, const MetricReport& r) {
  using util::format_double;
  const auto num = [](double v) { return std::isnan(v) ? std::string("nan") : format_double(v); };
  return id + "," + num(r.miou) + "," + num(r.f1) + "," + num(r.pd) + "," + num(r.fa) + "," +
         num(r.auc) + "," + std::to_string(r.counts.tp) + "," + std::to_string(r.counts.fp) + "," +
         std::to_string(r.counts.fn) + "," + std::to_string(r.counts.tn);
}

MetricAccumulator::MetricAccumulator(double threshold, double radius)
    : threshold_(threshold), radius_(radius) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("metrics: threshold must lie in (0, 1)");
  }
  if (!(radius >= 0.0)) throw ConfigError("metrics: match radius must be >= 0");
}

template <typename T>
const MetricReport& MetricAccumulator::add(const std::string& id, const Array4<T>& prob,
                                           const Array4<T>& gt) {
  require_same_shape(prob, gt, "metrics");
  if (prob.shape().n != 1 || prob.shape().c != 1) {
    throw ShapeError("metrics: expected a single plane", "batch");
  }
  MetricReport r;
  const PixelMetrics px = pixel_metrics(prob, gt, threshold_);
  r.miou = px.miou;
  r.f1 = px.f1;
  r.fa = px.fa;
  r.counts = px.counts;
  Array4<T> binary(prob.shape());
  for (std::size_t i = 0; i < prob.size(); ++i) {
    binary[i] = static_cast<double>(prob[i]) > threshold_ ? T(1) : T(0);
  }
  const TargetMatch tm = target_pd(binary, gt, radius_);
  r.pd = tm.pd;
  r.matched_targets = tm.matched;
  r.total_targets = tm.total;
  r.predicted_components = tm.predicted;
  std::vector<double> s(prob.size());
  std::vector<std::uint8_t> l(gt.size());
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = prob[i];
    l[i] = on(gt[i]) ? 1 : 0;
    (l[i] != 0 ? has_pos : has_neg) = true;
  }
  r.auc = has_pos && has_neg ? roc_auc(s, l) : std::numeric_limits<double>::quiet_NaN();
  scores_.insert(scores_.end(), s.begin(), s.end());
  labels_.insert(labels_.end(), l.begin(), l.end());
  rows_.emplace_back(id, r);
  return rows_.back().second;
}

MetricReport MetricAccumulator::summary() const {
  MetricReport s;
  if (rows_.empty()) throw DataError("metrics: no images evaluated");
  for (const auto& [id, r] : rows_) {
    s.miou += r.miou;
    s.f1 += r.f1;
    s.counts += r.counts;
    s.matched_targets += r.matched_targets;
    s.total_targets += r.total_targets;
    s.predicted_components += r.predicted_components;
  }
  const double k = static_cast<double>(rows_.size());
  s.miou /= k;
  s.f1 /= k;
  s.pd = s.total_targets == 0 ? 1.0
                              : static_cast<double>(s.matched_targets) /
                                    static_cast<double>(s.total_targets);
  s.fa = static_cast<double>(s.counts.fp) / static_cast<double>(s.counts.total());
  const bool both = std::any_of(labels_.begin(), labels_.end(), [](auto l) { return l != 0; }) &&
                    std::any_of(labels_.begin(), labels_.end(), [](auto l) { return l == 0; });
  s.auc = both ? roc_auc(scores_, labels_) : std::numeric_limits<double>::quiet_NaN();
  return s;
}

std::string MetricAccumulator::csv() const {
  std::string out = csv_header() + "\n";
  for (const auto& [id, r] : rows_) out += csv_row(id, r) + "\n";
  out += csv_row("__summary__", summary()) + "\n";
  return out;
}

#define LRPCA_INSTANTIATE(T)                                                                   \
  template double soft_iou_loss<T>(const Array4<T>&, const Array4<T>&, Array4<T>*);           \
  template LossValue total_loss<T>(const Array4<T>&, const Array4<T>&, const Array4<T>&,      \
                                   const Array4<T>&, const LossConfig&, Array4<T>*,           \
                                   Array4<T>*);                                               \
  template PixelMetrics pixel_metrics<T>(const Array4<T>&, const Array4<T>&, double);         \
  template Labeling connected_components<T>(const Array4<T>&, std::size_t, std::size_t);      \
  template TargetMatch target_pd<T>(const Array4<T>&, const Array4<T>&, double, std::size_t, \
                                    std::size_t);                                             \
  template double roc_auc<T>(const Array4<T>&, const Array4<T>&);                             \
  template const MetricReport& MetricAccumulator::add<T>(const std::string&, const Array4<T>&, \
                                                         const Array4<T>&);

LRPCA_INSTANTIATE(float)
LRPCA_INSTANTIATE(double)

#undef LRPCA_INSTANTIATE

}  // namespace lrpca::metrics
