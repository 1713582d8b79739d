#include "dfss/metrics.hpp"

#include <cmath>
#include <mutex>

#include "dfss/parallel.hpp"

namespace dfss {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : k_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw PreconditionError("confusion matrix needs >= 1 class");
}

void ConfusionMatrix::add(std::span<const std::uint8_t> pred,
                          std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) {
    throw ShapeError("miou: prediction has " + std::to_string(pred.size()) +
                     " pixels, ground truth " + std::to_string(gt.size()));
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= k_ || gt[i] >= k_) {
      throw PreconditionError("miou: class index " +
                              std::to_string(std::max(pred[i], gt[i])) +
                              " >= K=" + std::to_string(k_));
    }
  }
  for (std::size_t i = 0; i < pred.size(); ++i) ++counts_[gt[i] * k_ + pred[i]];
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw PreconditionError("confusion matrix class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

MiouReport ConfusionMatrix::report() const {
  MiouReport r;
  r.num_classes = k_;
  r.confusion = counts_;
  r.iou.assign(k_, 0.0);
  r.present.assign(k_, false);
  double sum = 0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < k_; ++c) {
    const std::uint64_t tp = at(c, c);
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < k_; ++j) {
      row += at(c, j);
      col += at(j, c);
    }
    r.pixel_count += row;
    const std::uint64_t uni = row + col - tp;
    if (uni == 0) continue;
    r.present[c] = true;
    r.iou[c] = double(tp) / double(uni);
    sum += r.iou[c];
    ++used;
  }
  r.mean_iou = used ? sum / double(used) : 0.0;
  return r;
}

MiouReport miou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                std::size_t num_classes) {
  ConfusionMatrix cm(num_classes);
  cm.add(pred, gt);
  return cm.report();
}

double performance_gap(const MiouReport& teacher, const MiouReport& student) {
  if (teacher.num_classes != student.num_classes) {
    throw PreconditionError("performance_gap: class counts differ");
  }
  if (teacher.split_hash != student.split_hash) {
    throw PreconditionError("performance_gap: reports come from different splits (" +
                            teacher.split_hash + " vs " + student.split_hash + ")");
  }
  return teacher.mean_iou - student.mean_iou;
}

std::vector<std::uint8_t> argmax_labels(const Tensor& logits) {
  require_rank(logits, 4, "argmax_labels");
  if (logits.dim(0) != 1) throw ShapeError("argmax_labels: expects one sample");
  const std::size_t k = logits.dim(1), area = logits.dim(2) * logits.dim(3);
  std::vector<std::uint8_t> out(area);
  for (std::size_t i = 0; i < area; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (logits[c * area + i] > logits[best * area + i]) best = c;
    }
    out[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

MiouReport evaluate_network(const Network& net, const Corpus& split) {
  if (!split.labeled) throw PreconditionError("evaluate: split has no labels");
  const std::size_t k = net.spec().num_classes;
  std::vector<std::vector<std::uint8_t>> preds(split.size());
  parallel_for(split.size(), [&](std::size_t i) {
    const Tensor logits = net.infer(split.records[i].as_tensor());
    require_finite(logits, "evaluation logits");
    preds[i] = argmax_labels(logits);
  });
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < split.size(); ++i) cm.add(preds[i], *split.records[i].labels);
  MiouReport r = cm.report();
  r.split_hash = split.config_hash;
  return r;
}

}  // namespace dfss
