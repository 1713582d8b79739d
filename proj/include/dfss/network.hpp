#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "dfss/hash.hpp"
#include "dfss/layers.hpp"

namespace dfss {

enum class NetRole { teacher, student };

enum class LayerKind { conv, batchnorm, relu, upsample };

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  std::size_t out_channels = 0;  // conv
  std::size_t kernel = 3;        // conv
  std::size_t stride = 1;        // conv
  std::size_t padding = 1;       // conv
  std::size_t factor = 2;        // upsample

  static LayerSpec conv(std::size_t out, std::size_t kernel, std::size_t stride,
                        std::size_t padding) {
    return {LayerKind::conv, out, kernel, stride, padding, 2};
  }
  static LayerSpec batchnorm() { return {LayerKind::batchnorm}; }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec upsample(std::size_t factor) {
    LayerSpec s{LayerKind::upsample};
    s.factor = factor;
    return s;
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
  std::string name;
  NetRole role = NetRole::teacher;
  std::size_t in_channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t num_classes = 4;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  std::vector<LayerSpec> layers;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

// Six conv+BN blocks with one stride-2 downsample and a matching bilinear
// upsample, followed by a 1x1 classifier.
NetworkSpec default_teacher_spec(std::size_t num_classes = 4);
// Three conv+BN blocks at full resolution and a 1x1 classifier.
NetworkSpec default_student_spec(std::size_t num_classes = 4);

std::string canonical_spec_text(const NetworkSpec& spec);
Digest spec_digest(const NetworkSpec& spec);

// Checks channel flow and that the output lands at input resolution with
// num_classes channels. Throws ShapeError otherwise.
void validate_spec(const NetworkSpec& spec);

// Per-channel mean and population variance of one BN layer's input, taken
// over spatial positions of a single sample.
struct LayerMoments {
  std::vector<float> mean;
  std::vector<float> var;
};

struct FeatureStats {
  std::vector<LayerMoments> layers;
};

template <typename T>
using AnyLayer = std::variant<Conv2dLayer<T>, BatchNormLayer<T>, ReluLayer<T>,
                              UpsampleLayer<T>>;

template <typename T>
class BasicNetwork {
 public:
  // He fan-in initialization of conv kernels from a generator seeded with
  // `seed`; biases and BN shifts start at 0, BN scales at 1.
  BasicNetwork(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  std::uint64_t init_seed() const { return init_seed_; }

  // Tape-recording forward; BN layers follow the network mode.
  BasicTensor<T> forward(const BasicTensor<T>& x);
  // Accumulates parameter gradients; returns d loss / d input.
  BasicTensor<T> backward(const BasicTensor<T>& grad_logits);
  // Eval-semantics forward (running statistics), no tape, reentrant.
  BasicTensor<T> infer(const BasicTensor<T>& x) const;

  // Logits plus the spatial moments of every BN layer input for a single
  // sample. Refuses a train-mode network.
  std::pair<BasicTensor<T>, FeatureStats> forward_with_stats(
      const BasicTensor<T>& x) const;

  void set_mode(Mode mode);
  Mode mode() const { return mode_; }

  std::vector<Param<T>*> parameters();
  std::vector<const Param<T>*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();
  // Drops every cached activation.
  void clear_tape();

  std::vector<BatchNormLayer<T>*> batchnorm_layers();
  std::vector<const BatchNormLayer<T>*> batchnorm_layers() const;

  std::vector<AnyLayer<T>>& layers() { return layers_; }
  const std::vector<AnyLayer<T>>& layers() const { return layers_; }

 private:
  NetworkSpec spec_;
  std::uint64_t init_seed_;
  Mode mode_ = Mode::train;
  std::vector<AnyLayer<T>> layers_;
};

using Network = BasicNetwork<float>;

extern template class BasicNetwork<float>;
extern template class BasicNetwork<double>;

// Same (spec, seed) yields bit-identical parameters.
Network build_network(const NetworkSpec& spec, std::uint64_t seed);

}  // namespace dfss
