#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dfss/corpus.hpp"
#include "dfss/network.hpp"

namespace dfss {

struct MiouReport {
  std::size_t num_classes = 0;
  // Row = ground truth, column = prediction, row-major K x K.
  std::vector<std::uint64_t> confusion;
  // IoU per class; classes absent from both prediction and ground truth have
  // present[k] == false and are left out of mean_iou.
  std::vector<double> iou;
  std::vector<bool> present;
  double mean_iou = 0;
  std::uint64_t pixel_count = 0;
  std::string split_hash;
};

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  void add(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);
  void merge(const ConfusionMatrix& other);
  MiouReport report() const;

  std::uint64_t at(std::size_t gt, std::size_t pred) const {
    return counts_[gt * k_ + pred];
  }

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

// IoU_k = TP / (TP + FP + FN) over one label map pair.
MiouReport miou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                std::size_t num_classes);

// mIoU(teacher) - mIoU(student); both reports must come from the same split.
double performance_gap(const MiouReport& teacher, const MiouReport& student);

// Per-pixel argmax of 1 x K x H x W logits; ties go to the lower class.
std::vector<std::uint8_t> argmax_labels(const Tensor& logits);

// Confusion accumulated over every labeled record of `split`.
MiouReport evaluate_network(const Network& net, const Corpus& split);

}  // namespace dfss
