#include "dfss/distiller.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "dfss/io.hpp"
#include "dfss/metrics.hpp"
#include "dfss/optim.hpp"

namespace dfss {
namespace {

constexpr std::uint64_t kInitSalt = 0x696e6974;     // "init"
constexpr std::uint64_t kShuffleSalt = 0x73687566;  // "shuf"

std::vector<int> stack_labels(const Corpus& corpus, std::span<const std::size_t> indices) {
  std::vector<int> out;
  for (std::size_t i : indices) {
    const ImageRecord& r = corpus.records[i];
    if (!r.labels) throw PreconditionError("record " + std::to_string(r.id) + " has no labels");
    out.insert(out.end(), r.labels->begin(), r.labels->end());
  }
  return out;
}

Tensor stack_tensors(const std::vector<Tensor>& per_sample,
                     std::span<const std::size_t> positions) {
  const Tensor& first = per_sample.at(positions[0]);
  Shape shape = first.shape();
  shape[0] = positions.size();
  Tensor out(shape);
  const std::size_t stride = first.size();
  for (std::size_t k = 0; k < positions.size(); ++k) {
    const Tensor& t = per_sample[positions[k]];
    std::copy(t.data(), t.data() + stride, out.data() + k * stride);
  }
  return out;
}

void check_config(const TrainConfig& c) {
  if (c.epochs == 0) throw PreconditionError("train config: epochs must be >= 1");
  if (c.batch_size == 0) throw PreconditionError("train config: batch size must be >= 1");
  if (!(c.lr > 0.0)) throw PreconditionError("train config: lr must be > 0");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) {
    throw PreconditionError("train config: momentum must lie in [0, 1)");
  }
  if (!(c.lambda >= 0.0)) throw PreconditionError("train config: lambda must be >= 0");
}

std::vector<std::size_t> record_indices(const Corpus& corpus,
                                        std::span<const std::uint32_t> ids) {
  std::map<std::uint32_t, std::size_t> index;
  for (std::size_t i = 0; i < corpus.size(); ++i) index[corpus.records[i].id] = i;
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (std::uint32_t id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) {
      throw PreconditionError("selection refers to id " + std::to_string(id) +
                              " which is not in the corpus");
    }
    out.push_back(it->second);
  }
  return out;
}

// Shared epoch/batch/optimizer loop. `step(net, positions, t, total)` runs
// forward and backward for the batch and returns its loss.
template <typename StepFn>
TrainResult run_training(Network net, std::size_t samples, const TrainConfig& config,
                         const Corpus* val, StepFn&& step) {
  check_config(config);
  if (samples == 0) throw PreconditionError("training set is empty");
  const long total = total_iterations(config, samples);
  const Mode train_mode = config.freeze_student_bn ? Mode::eval : Mode::train;
  net.set_mode(train_mode);
  Sgd<float> sgd(net.parameters(), config.momentum);
  TrainResult result{std::move(net), {}};
  Network& model = result.net;
  long t = 0;
  std::vector<std::size_t> order(samples);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(config.seed ^ kShuffleSalt, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    double lr = 0;
    for (std::size_t start = 0; start < samples; start += config.batch_size) {
      const std::size_t end = std::min(samples, start + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      sgd.zero_grad();
      lr = cosine_lr(t, total, config.lr);
      const double loss = step(model, batch, t, total);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss at step " + std::to_string(t));
      }
      sgd.step(lr);
      loss_sum += loss;
      ++batches;
      ++t;
    }
    EpochMetrics m{epoch, t, lr, loss_sum / double(batches), std::nullopt};
    const bool last = epoch + 1 == config.epochs;
    if (val && (last || (config.eval_every && (epoch + 1) % config.eval_every == 0))) {
      model.set_mode(Mode::eval);
      m.miou_val = evaluate_network(model, *val).mean_iou;
      model.set_mode(train_mode);
    }
    result.log.push_back(m);
  }
  model.clear_tape();
  model.zero_grad();
  model.set_mode(Mode::eval);
  return result;
}

}  // namespace

const char* kd_space_name(KdSpace s) { return s == KdSpace::logits ? "logits" : "probs"; }

KdSpace parse_kd_space(const std::string& name) {
  if (name == "logits") return KdSpace::logits;
  if (name == "probs") return KdSpace::probs;
  throw PreconditionError("unknown kd_space '" + name + "'");
}

const char* distill_strategy_name(DistillStrategy s) {
  switch (s) {
    case DistillStrategy::vanilla:
      return "vanilla";
    case DistillStrategy::wdd:
      return "wdd";
    case DistillStrategy::wdpd:
      return "wdpd";
  }
  return "?";
}

DistillStrategy parse_distill_strategy(const std::string& name) {
  if (name == "vanilla") return DistillStrategy::vanilla;
  if (name == "wdd") return DistillStrategy::wdd;
  if (name == "wdpd") return DistillStrategy::wdpd;
  throw PreconditionError("unknown distillation strategy '" + name + "'");
}

long total_iterations(const TrainConfig& config, std::size_t samples) {
  if (config.batch_size == 0) throw PreconditionError("train config: batch size must be >= 1");
  const std::size_t steps_per_epoch = (samples + config.batch_size - 1) / config.batch_size;
  const auto total = static_cast<long>(steps_per_epoch * config.epochs);
  if (total % 2 != 0) {
    throw PreconditionError("total iterations " + std::to_string(total) +
                            " must be even (steps per epoch x epochs)");
  }
  return total;
}

void write_metrics_csv(std::span<const EpochMetrics> log, const std::filesystem::path& path) {
  std::string out = "epoch,step,lr,loss,mIoU_val\n";
  for (const EpochMetrics& m : log) {
    out += std::to_string(m.epoch) + ',' + std::to_string(m.step) + ',' + format_double(m.lr) +
           ',' + format_double(m.loss) + ',' + (m.miou_val ? format_double(*m.miou_val) : "") +
           '\n';
  }
  write_text_file(path, out);
}

double alpha(long t, double omega, long total) {
  if (total <= 0) throw PreconditionError("alpha: total iterations must be > 0");
  if (t < 0 || t > total) throw PreconditionError("alpha: t outside [0, I]");
  if (!(omega >= 0.0 && omega <= 1.0)) throw PreconditionError("alpha: omega outside [0, 1]");
  const double half = double(total) / 2.0;
  if (double(t) >= half) return 1.0;
  return omega + (1.0 - omega) / half * double(t);
}

BatchObjective kd_batch_objective(const Tensor& student_logits, const Tensor& teacher_targets,
                                  std::span<const double> weights, KdSpace space) {
  require_rank(student_logits, 4, "kd objective");
  require_same_shape(student_logits, teacher_targets, "kd objective");
  const std::size_t b = student_logits.dim(0);
  if (weights.size() != b) {
    throw PreconditionError("kd objective: " + std::to_string(weights.size()) +
                            " weights for batch of " + std::to_string(b));
  }
  const Tensor s = space == KdSpace::probs ? ops::softmax_channels(student_logits)
                                           : student_logits;
  const std::size_t per = s.size() / b;
  BatchObjective obj;
  Tensor g(s.shape());
  double total = 0;
  for (std::size_t i = 0; i < b; ++i) {
    double abs_sum = 0;
    const float scale = static_cast<float>(weights[i] / double(b * per));
    for (std::size_t j = i * per; j < (i + 1) * per; ++j) {
      const float diff = s[j] - teacher_targets[j];
      abs_sum += std::abs(double(diff));
      g[j] = diff > 0 ? scale : (diff < 0 ? -scale : 0.0f);
    }
    total += weights[i] * (abs_sum / double(per));
  }
  obj.loss = total / double(b);
  obj.grad = space == KdSpace::probs ? ops::softmax_channels_backward(s, g) : std::move(g);
  return obj;
}

Tensor stack_inputs(const Corpus& corpus, std::span<const std::size_t> indices) {
  if (indices.empty()) throw PreconditionError("stack_inputs: empty batch");
  const ImageRecord& first = corpus.records.at(indices[0]);
  Tensor out({indices.size(), 3, first.height, first.width});
  const std::size_t stride = 3 * first.height * first.width;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const ImageRecord& r = corpus.records.at(indices[k]);
    if (r.pixels.size() != stride) throw ShapeError("stack_inputs: mixed image sizes");
    std::copy(r.pixels.begin(), r.pixels.end(), out.data() + k * stride);
  }
  return out;
}

Tensor teacher_targets(const Network& teacher, const Corpus& corpus,
                       std::span<const std::size_t> indices, KdSpace space) {
  const Tensor logits = teacher.infer(stack_inputs(corpus, indices));
  require_finite(logits, "teacher logits");
  return space == KdSpace::probs ? ops::softmax_channels(logits) : logits;
}

double weighted_distillation_objective(const Network& student, const Network& teacher,
                                       const Corpus& corpus,
                                       std::span<const std::uint32_t> ids,
                                       std::span<const double> weights, KdSpace space) {
  if (ids.empty() || ids.size() != weights.size()) {
    throw PreconditionError("objective: need one weight per selected id");
  }
  const auto idx = record_indices(corpus, ids);
  double total = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t one[1] = {idx[k]};
    const Tensor target = teacher_targets(teacher, corpus, one, space);
    Tensor out = student.infer(stack_inputs(corpus, one));
    if (space == KdSpace::probs) out = ops::softmax_channels(out);
    total += weights[k] * double(ops::l1_loss(out, target));
  }
  return total / double(idx.size());
}

TrainResult train_supervised(const Corpus& labeled, const NetworkSpec& spec,
                             const TrainConfig& config, const Corpus* val) {
  return kd_with_original_data(Network(spec, 0), spec, labeled,
                               [&] {
                                 TrainConfig c = config;
                                 c.lambda = 0.0;
                                 return c;
                               }(),
                               val);
}

TrainResult train_teacher(const Corpus& original, const NetworkSpec& spec,
                          const TrainConfig& config, const Corpus* val) {
  return train_supervised(original, spec, config, val);
}

TrainResult kd_with_original_data(const Network& teacher, const NetworkSpec& student_spec,
                                  const Corpus& original, const TrainConfig& config,
                                  const Corpus* val) {
  if (!original.labeled) throw PreconditionError("supervised training needs a labeled corpus");
  check_config(config);
  std::vector<std::size_t> all(original.size());
  std::iota(all.begin(), all.end(), 0);
  // Validate every label up front so a bad index fails before training.
  for (const ImageRecord& r : original.records) {
    for (std::uint8_t y : *r.labels) {
      if (y >= student_spec.num_classes) {
        throw PreconditionError("record " + std::to_string(r.id) + " has label " +
                                std::to_string(y) + " >= K=" +
                                std::to_string(student_spec.num_classes));
      }
    }
  }
  const bool use_kd = config.lambda > 0.0;
  std::vector<Tensor> targets;
  if (use_kd) {
    targets.reserve(all.size());
    for (std::size_t i : all) {
      const std::size_t one[1] = {i};
      targets.push_back(teacher_targets(teacher, original, one, config.kd_space));
    }
  }
  Network student(student_spec, mix_seed(config.seed, kInitSalt));
  auto step = [&](Network& net, std::span<const std::size_t> batch, long, long) {
    const Tensor logits = net.forward(stack_inputs(original, batch));
    const std::vector<int> labels = stack_labels(original, batch);
    double loss = ops::softmax_cross_entropy(logits, labels);
    Tensor grad = ops::softmax_cross_entropy_backward(logits, labels);
    if (use_kd) {
      const std::vector<double> ones(batch.size(), 1.0);
      const BatchObjective kd =
          kd_batch_objective(logits, stack_tensors(targets, batch), ones, config.kd_space);
      loss += config.lambda * kd.loss;
      const auto lambda = static_cast<float>(config.lambda);
      for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += lambda * kd.grad[j];
    }
    net.backward(grad);
    return loss;
  };
  return run_training(std::move(student), original.size(), config, val, step);
}

TrainResult distill(const Network& teacher, const NetworkSpec& student_spec,
                    const Corpus& corpus, const SelectionResult& selection,
                    std::span<const double> weights, const TrainConfig& config,
                    const Corpus* val, const Network* init) {
  if (selection.ids.empty()) throw PreconditionError("distill: empty selection");
  check_config(config);
  const auto idx = record_indices(corpus, selection.ids);
  std::vector<double> base(idx.size(), 1.0);
  if (config.strategy != DistillStrategy::vanilla) {
    if (weights.size() != idx.size()) {
      throw PreconditionError(std::string("distill ") + distill_strategy_name(config.strategy) +
                              ": missing per-sample weights (" +
                              std::to_string(weights.size()) + " for " +
                              std::to_string(idx.size()) + " samples)");
    }
    for (double w : weights) {
      if (!(w >= 0.0 && w <= 1.0)) throw PreconditionError("distill: weight outside [0, 1]");
    }
    base.assign(weights.begin(), weights.end());
  }
  std::vector<Tensor> targets;
  targets.reserve(idx.size());
  for (std::size_t i : idx) {
    const std::size_t one[1] = {i};
    targets.push_back(teacher_targets(teacher, corpus, one, config.kd_space));
  }
  Network student = init ? *init : Network(student_spec, mix_seed(config.seed, kInitSalt));
  if (init && !(init->spec() == student_spec)) {
    throw PreconditionError("distill: init network does not match the student spec");
  }
  std::vector<std::size_t> batch_records;
  std::vector<double> batch_weights;
  auto step = [&](Network& net, std::span<const std::size_t> batch, long t, long total) {
    batch_records.clear();
    batch_weights.clear();
    for (std::size_t pos : batch) {
      batch_records.push_back(idx[pos]);
      switch (config.strategy) {
        case DistillStrategy::vanilla:
        case DistillStrategy::wdd:
          batch_weights.push_back(base[pos]);
          break;
        case DistillStrategy::wdpd:
          batch_weights.push_back(alpha(t, base[pos], total));
          break;
      }
    }
    const Tensor logits = net.forward(stack_inputs(corpus, batch_records));
    const BatchObjective obj =
        kd_batch_objective(logits, stack_tensors(targets, batch), batch_weights, config.kd_space);
    net.backward(obj.grad);
    return obj.loss;
  };
  return run_training(std::move(student), idx.size(), config, val, step);
}

TrainResult distill_vanilla(const Network& teacher, const NetworkSpec& student_spec,
                            const Corpus& corpus, const SelectionResult& selection,
                            TrainConfig config, const Corpus* val) {
  config.strategy = DistillStrategy::vanilla;
  return distill(teacher, student_spec, corpus, selection, {}, config, val);
}

TrainResult distill_wdd(const Network& teacher, const NetworkSpec& student_spec,
                        const Corpus& corpus, const SelectionResult& selection,
                        std::span<const double> weights, TrainConfig config,
                        const Corpus* val) {
  config.strategy = DistillStrategy::wdd;
  return distill(teacher, student_spec, corpus, selection, weights, config, val);
}

TrainResult distill_wdpd(const Network& teacher, const NetworkSpec& student_spec,
                         const Corpus& corpus, const SelectionResult& selection,
                         std::span<const double> weights, TrainConfig config,
                         const Corpus* val) {
  config.strategy = DistillStrategy::wdpd;
  return distill(teacher, student_spec, corpus, selection, weights, config, val);
}

}  // namespace dfss
