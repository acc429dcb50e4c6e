#include "o4d/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "o4d/errors.hpp"

namespace o4d {

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

std::uint64_t ConfusionMatrix::row_sum(int gt) const {
  std::uint64_t s = 0;
  for (int p = 0; p < n_; ++p) s += count(gt, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(int pred) const {
  std::uint64_t s = 0;
  for (int g = 0; g < n_; ++g) s += count(g, pred);
  return s;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw ValidationError("cannot add confusion matrices of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

ConfusionMatrix confusion(std::span<const std::uint16_t> pred, std::span<const std::uint16_t> gt,
                          int num_classes) {
  if (pred.size() != gt.size()) {
    throw ValidationError("prediction has " + std::to_string(pred.size()) +
                          " labels but ground truth has " + std::to_string(gt.size()));
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= num_classes || gt[i] >= num_classes) {
      throw ValidationError("label outside [0, " + std::to_string(num_classes) + ")");
    }
    cm.add(gt[i], pred[i]);
  }
  return cm;
}

ConfusionMatrix confusion(const LabelField& pred, std::span<const std::uint16_t> gt) {
  return confusion(pred.labels, gt, pred.num_classes + 1);
}

SegmentationMetrics metrics(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw ValidationError("metrics of an empty confusion matrix");
  SegmentationMetrics m;
  const int n = cm.num_classes();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  m.class_accuracy.assign(static_cast<std::size_t>(n), nan);
  m.class_iou.assign(static_cast<std::size_t>(n), nan);
  std::uint64_t diag = 0;
  double acc_sum = 0.0;
  double iou_sum = 0.0;
  int present = 0;
  for (int c = 0; c < n; ++c) {
    const auto tp = cm.count(c, c);
    diag += tp;
    const auto row = cm.row_sum(c);
    if (row == 0) continue;
    const auto col = cm.col_sum(c);
    m.class_accuracy[c] = static_cast<double>(tp) / static_cast<double>(row);
    m.class_iou[c] = static_cast<double>(tp) / static_cast<double>(row + col - tp);
    acc_sum += m.class_accuracy[c];
    iou_sum += m.class_iou[c];
    ++present;
  }
  m.overall_accuracy = static_cast<double>(diag) / static_cast<double>(total);
  m.mean_class_accuracy = acc_sum / present;
  m.mean_iou = iou_sum / present;
  return m;
}

EvaluationReport evaluate(const LabelFile& pred, const LabelFile& gt) {
  if (pred.frames.size() != gt.frames.size()) {
    throw ValidationError("prediction has " + std::to_string(pred.frames.size()) +
                          " frames, ground truth " + std::to_string(gt.frames.size()));
  }
  EvaluationReport report;
  report.classes = gt.classes;
  auto class_index = [&report](const std::string& name) {
    const auto it = std::find(report.classes.begin(), report.classes.end(), name);
    if (it != report.classes.end()) return static_cast<std::uint16_t>(it - report.classes.begin());
    report.classes.push_back(name);
    return static_cast<std::uint16_t>(report.classes.size() - 1);
  };
  std::vector<std::uint16_t> pred_map;
  for (const auto& c : pred.classes) pred_map.push_back(class_index(c));
  const int n = static_cast<int>(report.classes.size());

  report.pooled_confusion = ConfusionMatrix(n);
  double oa = 0.0;
  double macc = 0.0;
  double miou = 0.0;
  for (std::size_t t = 0; t < gt.frames.size(); ++t) {
    const auto& p = pred.frames[t];
    if (p.size() != gt.frames[t].size()) {
      throw ValidationError("frame " + std::to_string(t) + ": " + std::to_string(p.size()) +
                            " predicted labels for " + std::to_string(gt.frames[t].size()) +
                            " points");
    }
    std::vector<std::uint16_t> mapped(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] >= pred_map.size()) {
        throw ValidationError("predicted label " + std::to_string(p[i]) + " has no class name");
      }
      mapped[i] = pred_map[p[i]];
    }
    const auto cm = confusion(mapped, gt.frames[t], n);
    report.pooled_confusion += cm;
    report.frames.push_back(metrics(cm));
    oa += report.frames.back().overall_accuracy;
    macc += report.frames.back().mean_class_accuracy;
    miou += report.frames.back().mean_iou;
  }
  report.pooled = metrics(report.pooled_confusion);
  const double frames = static_cast<double>(gt.frames.size());
  report.per_frame_mean.overall_accuracy = oa / frames;
  report.per_frame_mean.mean_class_accuracy = macc / frames;
  report.per_frame_mean.mean_iou = miou / frames;
  return report;
}

}  // namespace o4d
