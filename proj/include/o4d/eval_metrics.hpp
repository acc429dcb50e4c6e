#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "o4d/open_vocab_classifier.hpp"

namespace o4d {

// counts[g][p]: points with ground truth g predicted as p.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int num_classes)
      : n_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {}

  int num_classes() const { return n_; }
  std::uint64_t count(int gt, int pred) const { return counts_[index(gt, pred)]; }
  void add(int gt, int pred, std::uint64_t n = 1) { counts_[index(gt, pred)] += n; }
  std::uint64_t total() const;
  std::uint64_t row_sum(int gt) const;
  std::uint64_t col_sum(int pred) const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t index(int gt, int pred) const {
    return static_cast<std::size_t>(gt) * static_cast<std::size_t>(n_) +
           static_cast<std::size_t>(pred);
  }

  int n_ = 0;
  std::vector<std::uint64_t> counts_;
};

// Tallies a num_classes x num_classes matrix. Throws ValidationError on
// length mismatch or labels >= num_classes.
ConfusionMatrix confusion(std::span<const std::uint16_t> pred, std::span<const std::uint16_t> gt,
                          int num_classes);
// K + 1 classes, the last being no label.
ConfusionMatrix confusion(const LabelField& pred, std::span<const std::uint16_t> gt);

struct SegmentationMetrics {
  double overall_accuracy = 0.0;
  double mean_class_accuracy = 0.0;
  double mean_iou = 0.0;
  // Per class; classes absent from ground truth hold NaN and are excluded
  // from the means.
  std::vector<double> class_accuracy;
  std::vector<double> class_iou;
};

// Throws ValidationError on an empty matrix.
SegmentationMetrics metrics(const ConfusionMatrix& cm);

struct EvaluationReport {
  std::vector<std::string> classes;  // ground-truth classes, then unmatched predicted ones
  ConfusionMatrix pooled_confusion;
  SegmentationMetrics pooled;           // all points of the sequence in one matrix
  SegmentationMetrics per_frame_mean;   // OA, mAcc, mIoU averaged over frames
  std::vector<SegmentationMetrics> frames;
};

// Matches classes by name. Throws ValidationError when frame counts or point
// counts differ.
EvaluationReport evaluate(const LabelFile& pred, const LabelFile& gt);

}  // namespace o4d
