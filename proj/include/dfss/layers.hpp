#pragma once

#include <optional>
#include <vector>

#include "dfss/ops.hpp"
#include "dfss/tensor.hpp"

namespace dfss {

enum class Mode { train, eval };

template <typename T>
struct Param {
  BasicTensor<T> value;
  BasicTensor<T> grad;

  explicit Param(Shape shape) : value(shape), grad(shape) {}
};

// Each layer keeps the activations its backward pass needs (the tape) from
// the most recent forward(). infer() is const, touches no cache and always
// evaluates batch norm with running statistics.

template <typename T>
class Conv2dLayer {
 public:
  Conv2dLayer(std::size_t in_channels, std::size_t out_channels,
              std::size_t kernel, ops::Conv2dGeometry geom);

  BasicTensor<T> forward(const BasicTensor<T>& x);
  BasicTensor<T> infer(const BasicTensor<T>& x) const;
  BasicTensor<T> backward(const BasicTensor<T>& grad_output);
  void clear_tape() { input_.reset(); }

  ops::Conv2dGeometry geometry() const { return geom_; }

  Param<T> weight;
  Param<T> bias;

 private:
  ops::Conv2dGeometry geom_;
  std::optional<BasicTensor<T>> input_;
};

template <typename T>
class BatchNormLayer {
 public:
  BatchNormLayer(std::size_t channels, T momentum, T eps);

  // Train mode normalizes with batch moments and folds them into the running
  // estimates: running = (1 - momentum) * running + momentum * batch.
  BasicTensor<T> forward(const BasicTensor<T>& x);
  BasicTensor<T> infer(const BasicTensor<T>& x) const;
  BasicTensor<T> backward(const BasicTensor<T>& grad_output);
  void clear_tape() {
    input_.reset();
    cache_.reset();
  }

  std::size_t channels() const { return running_mean.size(); }

  Param<T> gamma;
  Param<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum;
  T eps;
  Mode mode = Mode::train;

 private:
  std::optional<BasicTensor<T>> input_;
  std::optional<ops::BatchNormCache<T>> cache_;
  Mode cached_mode_ = Mode::train;
};

template <typename T>
class ReluLayer {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x);
  BasicTensor<T> infer(const BasicTensor<T>& x) const { return ops::relu(x); }
  BasicTensor<T> backward(const BasicTensor<T>& grad_output);
  void clear_tape() { input_.reset(); }

 private:
  std::optional<BasicTensor<T>> input_;
};

template <typename T>
class UpsampleLayer {
 public:
  explicit UpsampleLayer(std::size_t factor) : factor_(factor) {}

  BasicTensor<T> forward(const BasicTensor<T>& x);
  BasicTensor<T> infer(const BasicTensor<T>& x) const {
    return ops::upsample_bilinear(x, factor_);
  }
  BasicTensor<T> backward(const BasicTensor<T>& grad_output);
  void clear_tape() { ran_ = false; }

  std::size_t factor() const { return factor_; }

 private:
  std::size_t factor_;
  bool ran_ = false;
};

extern template class Conv2dLayer<float>;
extern template class Conv2dLayer<double>;
extern template class BatchNormLayer<float>;
extern template class BatchNormLayer<double>;
extern template class ReluLayer<float>;
extern template class ReluLayer<double>;
extern template class UpsampleLayer<float>;
extern template class UpsampleLayer<double>;

}  // namespace dfss
