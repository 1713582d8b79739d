#include "dfss/layers.hpp"

namespace dfss {
namespace {

template <typename T>
void add_into(BasicTensor<T>& acc, const BasicTensor<T>& delta) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += delta[i];
}

[[noreturn]] void no_tape(const char* layer) {
  throw TapeError(std::string(layer) + " backward called before forward");
}

}  // namespace

template <typename T>
Conv2dLayer<T>::Conv2dLayer(std::size_t in_channels, std::size_t out_channels,
                            std::size_t kernel, ops::Conv2dGeometry geom)
    : weight({out_channels, in_channels, kernel, kernel}),
      bias({out_channels}),
      geom_(geom) {}

template <typename T>
BasicTensor<T> Conv2dLayer<T>::forward(const BasicTensor<T>& x) {
  auto y = ops::conv2d(x, weight.value, bias.value, geom_);
  input_ = x;
  return y;
}

template <typename T>
BasicTensor<T> Conv2dLayer<T>::infer(const BasicTensor<T>& x) const {
  return ops::conv2d(x, weight.value, bias.value, geom_);
}

template <typename T>
BasicTensor<T> Conv2dLayer<T>::backward(const BasicTensor<T>& grad_output) {
  if (!input_) no_tape("conv2d");
  auto g = ops::conv2d_backward(*input_, weight.value, grad_output, geom_);
  add_into(weight.grad, g.kernel);
  add_into(bias.grad, g.bias);
  return std::move(g.input);
}

template <typename T>
BatchNormLayer<T>::BatchNormLayer(std::size_t channels, T momentum_, T eps_)
    : gamma({channels}),
      beta({channels}),
      running_mean(channels, T{0}),
      running_var(channels, T{1}),
      momentum(momentum_),
      eps(eps_) {
  gamma.value.fill(T{1});
}

template <typename T>
BasicTensor<T> BatchNormLayer<T>::forward(const BasicTensor<T>& x) {
  const std::vector<T>& g = gamma.value.storage();
  const std::vector<T>& b = beta.value.storage();
  cached_mode_ = mode;
  if (mode == Mode::eval) {
    auto y = ops::batchnorm_eval(x, running_mean, running_var, g, b, eps);
    input_ = x;
    cache_.reset();
    return y;
  }
  if (x.rank() == 4 && x.dim(1) != channels()) {
    throw ShapeError("batchnorm: input has " + std::to_string(x.dim(1)) +
                     " channels, layer has " + std::to_string(channels()));
  }
  const auto moments = ops::channel_moments(x);
  ops::BatchNormCache<T> cache;
  auto y = ops::batchnorm_train(x, moments, g, b, eps, &cache);
  for (std::size_t c = 0; c < channels(); ++c) {
    running_mean[c] = (T{1} - momentum) * running_mean[c] + momentum * moments.mean[c];
    running_var[c] = (T{1} - momentum) * running_var[c] + momentum * moments.var[c];
  }
  input_.reset();
  cache_ = std::move(cache);
  return y;
}

template <typename T>
BasicTensor<T> BatchNormLayer<T>::infer(const BasicTensor<T>& x) const {
  return ops::batchnorm_eval(x, running_mean, running_var,
                             gamma.value.storage(), beta.value.storage(), eps);
}

template <typename T>
BasicTensor<T> BatchNormLayer<T>::backward(const BasicTensor<T>& grad_output) {
  ops::BatchNormGrads<T> g;
  if (cached_mode_ == Mode::train) {
    if (!cache_) no_tape("batchnorm");
    g = ops::batchnorm_train_backward(grad_output, *cache_, gamma.value.storage());
  } else {
    if (!input_) no_tape("batchnorm");
    g = ops::batchnorm_eval_backward(grad_output, *input_, running_mean,
                                     running_var, gamma.value.storage(), eps);
  }
  for (std::size_t c = 0; c < channels(); ++c) {
    gamma.grad[c] += g.gamma[c];
    beta.grad[c] += g.beta[c];
  }
  return std::move(g.input);
}

template <typename T>
BasicTensor<T> ReluLayer<T>::forward(const BasicTensor<T>& x) {
  input_ = x;
  return ops::relu(x);
}

template <typename T>
BasicTensor<T> ReluLayer<T>::backward(const BasicTensor<T>& grad_output) {
  if (!input_) no_tape("relu");
  return ops::relu_backward(*input_, grad_output);
}

template <typename T>
BasicTensor<T> UpsampleLayer<T>::forward(const BasicTensor<T>& x) {
  ran_ = true;
  return ops::upsample_bilinear(x, factor_);
}

template <typename T>
BasicTensor<T> UpsampleLayer<T>::backward(const BasicTensor<T>& grad_output) {
  if (!ran_) no_tape("upsample");
  return ops::upsample_bilinear_backward(grad_output, factor_);
}

template class Conv2dLayer<float>;
template class Conv2dLayer<double>;
template class BatchNormLayer<float>;
template class BatchNormLayer<double>;
template class ReluLayer<float>;
template class ReluLayer<double>;
template class UpsampleLayer<float>;
template class UpsampleLayer<double>;

}  // namespace dfss
