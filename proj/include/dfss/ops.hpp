#pragma once

#include <cstddef>
#include <vector>

#include "dfss/tensor.hpp"

// Stateless forward/backward kernels. Layer objects in layers.hpp wrap these
// with parameter storage and cached activations.
namespace dfss::ops {

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Cross-correlation. input N x Cin x H x W, kernel Cout x Cin x kh x kw,
// bias Cout. Output extent (H + 2*pad - kh) / stride + 1.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const BasicTensor<T>& bias, Conv2dGeometry geom);

template <typename T>
struct Conv2dGrads {
  BasicTensor<T> input;
  BasicTensor<T> kernel;
  BasicTensor<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& input,
                               const BasicTensor<T>& kernel,
                               const BasicTensor<T>& grad_output,
                               Conv2dGeometry geom);

// Per-channel statistics of an N x C x H x W tensor over N*H*W positions.
// Variance is the biased (population) estimate.
template <typename T>
struct ChannelMoments {
  std::vector<T> mean;
  std::vector<T> var;
};

template <typename T>
ChannelMoments<T> channel_moments(const BasicTensor<T>& input);

// Everything the batch-norm backward pass needs from a train-mode forward.
template <typename T>
struct BatchNormCache {
  BasicTensor<T> normalized;  // x_hat
  std::vector<T> inv_std;
};

// Train-mode normalization with the given batch moments; fills `cache`.
template <typename T>
BasicTensor<T> batchnorm_train(const BasicTensor<T>& input,
                               const ChannelMoments<T>& moments,
                               const std::vector<T>& gamma,
                               const std::vector<T>& beta, T eps,
                               BatchNormCache<T>* cache);

// Eval-mode normalization: (x - running_mean) / sqrt(running_var + eps).
template <typename T>
BasicTensor<T> batchnorm_eval(const BasicTensor<T>& input,
                              const std::vector<T>& running_mean,
                              const std::vector<T>& running_var,
                              const std::vector<T>& gamma,
                              const std::vector<T>& beta, T eps);

template <typename T>
struct BatchNormGrads {
  BasicTensor<T> input;
  std::vector<T> gamma;
  std::vector<T> beta;
};

template <typename T>
BatchNormGrads<T> batchnorm_train_backward(const BasicTensor<T>& grad_output,
                                           const BatchNormCache<T>& cache,
                                           const std::vector<T>& gamma);

// Backward of batchnorm_eval; the running statistics are constants there.
template <typename T>
BatchNormGrads<T> batchnorm_eval_backward(const BasicTensor<T>& grad_output,
                                          const BasicTensor<T>& input,
                                          const std::vector<T>& running_mean,
                                          const std::vector<T>& running_var,
                                          const std::vector<T>& gamma, T eps);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input,
                             const BasicTensor<T>& grad_output);

// Bilinear resize by an integer factor with half-pixel centers
// (align_corners = false):
//   src = (dst + 0.5) / factor - 0.5, clamped below at 0
//   i0 = floor(src), i1 = min(i0 + 1, in - 1), w1 = src - i0
//   out = (1 - w1) * in[i0] + w1 * in[i1]      (separably in h and w)
template <typename T>
BasicTensor<T> upsample_bilinear(const BasicTensor<T>& input,
                                 std::size_t factor);

template <typename T>
BasicTensor<T> upsample_bilinear_backward(const BasicTensor<T>& grad_output,
                                          std::size_t factor);

// Softmax over the channel axis of an N x K x H x W tensor.
template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& logits);

template <typename T>
BasicTensor<T> softmax_channels_backward(const BasicTensor<T>& probs,
                                         const BasicTensor<T>& grad_output);

// Mean per-pixel cross-entropy. labels holds N*H*W class indices.
template <typename T>
T softmax_cross_entropy(const BasicTensor<T>& logits,
                        const std::vector<int>& labels);

template <typename T>
BasicTensor<T> softmax_cross_entropy_backward(const BasicTensor<T>& logits,
                                              const std::vector<int>& labels);

// Mean absolute difference.
template <typename T>
T l1_loss(const BasicTensor<T>& a, const BasicTensor<T>& b);

// d/da of l1_loss: sign(a - b) / count, zero at ties.
template <typename T>
BasicTensor<T> l1_loss_backward(const BasicTensor<T>& a,
                                const BasicTensor<T>& b);

}  // namespace dfss::ops
