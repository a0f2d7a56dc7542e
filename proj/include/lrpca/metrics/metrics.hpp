#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lrpca/nn/array4.hpp"

namespace lrpca::metrics {

using nn::Array4;

inline constexpr double kSoftIouEps = 1e-6;
inline constexpr double kDefaultMatchRadius = 3.0;

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct LossConfig {
  double eta = 0.01;                // weight of the reconstruction term
  double binarize_threshold = 0.5;  // pred > threshold counts as target

  void validate() const;
};

struct LossValue {
  double total = 0.0;
  double seg = 0.0;
  double fidelity = 0.0;
};

/// 1 - mean_n I_n / (P_n + G_n - I_n + eps) over the batch axis, with
/// I = sum(pred * gt), P = sum(pred), G = sum(gt). If `grad` is non-null it
/// receives dL/dpred.
template <typename T>
double soft_iou_loss(const Array4<T>& pred, const Array4<T>& gt, Array4<T>* grad = nullptr);

/// seg = soft_iou_loss(pred, gt); fidelity = mean_n ||recon - input||^2 / M;
/// total = seg + eta * fidelity. Gradients are written when non-null.
template <typename T>
LossValue total_loss(const Array4<T>& pred, const Array4<T>& gt, const Array4<T>& recon,
                     const Array4<T>& input, const LossConfig& config,
                     Array4<T>* grad_pred = nullptr, Array4<T>* grad_recon = nullptr);

struct PixelMetrics {
  double miou = 0.0;
  double f1 = 0.0;
  double fa = 0.0;
  ConfusionCounts counts;
};

/// Counts over every pixel of `pred` (binarized as pred > threshold) against
/// `gt` (> 0.5). Empty-vs-empty scores IoU = F1 = 1.
template <typename T>
PixelMetrics pixel_metrics(const Array4<T>& pred, const Array4<T>& gt, double threshold);

/// IoU and F1 from counts, with the empty-class convention.
double iou_from(const ConfusionCounts& c);
double f1_from(const ConfusionCounts& c);

struct Component {
  std::vector<std::size_t> pixels;  // flat row-major indices within the plane
  double cy = 0.0;
  double cx = 0.0;
};

struct Labeling {
  std::vector<int> labels;  // per pixel, -1 for background
  std::vector<Component> components;
};

/// 8-connected components of plane (n, c), foreground = value > 0.5,
/// numbered in raster order of their first pixel.
template <typename T>
Labeling connected_components(const Array4<T>& mask, std::size_t n = 0, std::size_t c = 0);

struct TargetMatch {
  double pd = 1.0;
  std::size_t matched = 0;
  std::size_t total = 0;      // ground-truth components
  std::size_t predicted = 0;  // predicted components
};

/// One-to-one greedy matching of components in plane (n, c): a pair is
/// admissible if the components overlap or their centroids lie within
/// `radius`; pairs are taken by descending overlap, then ascending distance.
template <typename T>
TargetMatch target_pd(const Array4<T>& pred_mask, const Array4<T>& gt_mask,
                      double radius = kDefaultMatchRadius, std::size_t n = 0, std::size_t c = 0);

/// Area under the pixel-level ROC curve over all entries, ties handled by a
/// single ROC step. DataError if gt holds only one class.
template <typename T>
double roc_auc(const Array4<T>& scores, const Array4<T>& gt);

/// AUC from parallel score/label vectors (labels are 0/1).
double roc_auc(std::vector<double> scores, const std::vector<std::uint8_t>& labels);

struct MetricReport {
  double miou = 0.0;
  double f1 = 0.0;
  double pd = 0.0;
  double fa = 0.0;
  double auc = 0.0;  // NaN when undefined (single-class ground truth)
  ConfusionCounts counts;
  std::size_t matched_targets = 0;
  std::size_t total_targets = 0;
  std::size_t predicted_components = 0;
};

/// Columns: image_id,miou,f1,pd,fa,auc,tp,fp,fn,tn
std::string csv_header();
std::string csv_row(const std::string& id, const MetricReport& r);

/// Per-image metrics plus the dataset summary: miou and f1 are means of the
/// per-image values, pd and fa pool targets and pixels, auc pools all pixels.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(double threshold = 0.5, double radius = kDefaultMatchRadius);

  /// `prob` and `gt` are single planes (1 x 1 x H x W).
  template <typename T>
  const MetricReport& add(const std::string& id, const Array4<T>& prob, const Array4<T>& gt);

  MetricReport summary() const;
  const std::vector<std::pair<std::string, MetricReport>>& per_image() const noexcept {
    return rows_;
  }
  /// Header, one row per image, then a "__summary__" row.
  std::string csv() const;

 private:
  double threshold_;
  double radius_;
  std::vector<std::pair<std::string, MetricReport>> rows_;
  std::vector<double> scores_;
  std::vector<std::uint8_t> labels_;
};

}  // namespace lrpca::metrics
