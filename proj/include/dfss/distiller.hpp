#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dfss/corpus.hpp"
#include "dfss/network.hpp"
#include "dfss/sampler.hpp"

namespace dfss {

enum class KdSpace { logits, probs };
enum class DistillStrategy { vanilla, wdd, wdpd };

const char* kd_space_name(KdSpace s);
KdSpace parse_kd_space(const std::string& name);
const char* distill_strategy_name(DistillStrategy s);
DistillStrategy parse_distill_strategy(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 16;
  double lr = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  double lambda = 1.0;  // data-driven KD trade-off
  KdSpace kd_space = KdSpace::logits;
  DistillStrategy strategy = DistillStrategy::vanilla;
  // Keep student BN layers on running statistics while training.
  bool freeze_student_bn = false;
  // Validation mIoU every N epochs (0: final epoch only). Needs a val split.
  std::size_t eval_every = 0;
};

// Optimizer steps for `samples` training examples; must be even so that the
// schedule midpoint I/2 is an integer step.
long total_iterations(const TrainConfig& config, std::size_t samples);

struct EpochMetrics {
  std::size_t epoch = 0;
  long step = 0;        // optimizer steps taken so far
  double lr = 0;        // learning rate of the last step
  double loss = 0;      // mean batch loss over the epoch
  std::optional<double> miou_val;
};

struct TrainResult {
  Network net;
  std::vector<EpochMetrics> log;
};

void write_metrics_csv(std::span<const EpochMetrics> log, const std::filesystem::path& path);

// Progressive weight: omega + (1 - omega) * t / (I/2) up to I/2, then 1.
double alpha(long t, double omega, long total_iterations);

// Weighted L1 objective of one batch: (1/B) sum_i a_i * mean|s_i - t_i|,
// where s, t are logits or channel softmaxes per kd_space. `student_logits`
// and `teacher_targets` are B x K x H x W; targets are already in kd_space.
struct BatchObjective {
  double loss = 0;
  Tensor grad;  // d loss / d student_logits
};
BatchObjective kd_batch_objective(const Tensor& student_logits, const Tensor& teacher_targets,
                                  std::span<const double> weights, KdSpace space);

// Teacher outputs in kd_space for the given records; the teacher is only
// read through infer().
Tensor teacher_targets(const Network& teacher, const Corpus& corpus,
                       std::span<const std::size_t> indices, KdSpace space);

// Full (1/|D|) sum_i w_i * H_l1 at fixed student parameters, eval semantics.
double weighted_distillation_objective(const Network& student, const Network& teacher,
                                       const Corpus& corpus,
                                       std::span<const std::uint32_t> ids,
                                       std::span<const double> weights, KdSpace space);

// Per-pixel softmax cross-entropy, SGD with momentum and cosine decay.
TrainResult train_supervised(const Corpus& labeled, const NetworkSpec& spec,
                             const TrainConfig& config, const Corpus* val = nullptr);
TrainResult train_teacher(const Corpus& original, const NetworkSpec& spec,
                          const TrainConfig& config, const Corpus* val = nullptr);

// H_task + lambda * H_kd on labeled original data.
TrainResult kd_with_original_data(const Network& teacher, const NetworkSpec& student_spec,
                                  const Corpus& original, const TrainConfig& config,
                                  const Corpus* val = nullptr);

// Data-free distillation over the selected records. `weights` (aligned with
// selection.ids) are required for wdd and wdpd and ignored for vanilla.
// `init`, when given, seeds the student parameters instead of a fresh build.
TrainResult distill(const Network& teacher, const NetworkSpec& student_spec,
                    const Corpus& corpus, const SelectionResult& selection,
                    std::span<const double> weights, const TrainConfig& config,
                    const Corpus* val = nullptr, const Network* init = nullptr);

TrainResult distill_vanilla(const Network& teacher, const NetworkSpec& student_spec,
                            const Corpus& corpus, const SelectionResult& selection,
                            TrainConfig config, const Corpus* val = nullptr);
TrainResult distill_wdd(const Network& teacher, const NetworkSpec& student_spec,
                        const Corpus& corpus, const SelectionResult& selection,
                        std::span<const double> weights, TrainConfig config,
                        const Corpus* val = nullptr);
TrainResult distill_wdpd(const Network& teacher, const NetworkSpec& student_spec,
                         const Corpus& corpus, const SelectionResult& selection,
                         std::span<const double> weights, TrainConfig config,
                         const Corpus* val = nullptr);

// Copies `n` samples (by record index) into one N x 3 x H x W batch.
Tensor stack_inputs(const Corpus& corpus, std::span<const std::size_t> indices);

}  // namespace dfss
