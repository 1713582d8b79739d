#include "dfss/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Core>

namespace dfss {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

}  // namespace dfss

namespace dfss::ops {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

struct ConvDims {
  std::size_t n, cin, h, w, cout, kh, kw, oh, ow;
};

template <typename T>
ConvDims conv_dims(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                   Conv2dGeometry geom) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  if (geom.stride == 0) throw PreconditionError("conv2d: stride must be >= 1");
  ConvDims d{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
             kernel.dim(0), kernel.dim(2), kernel.dim(3), 0, 0};
  if (kernel.dim(1) != d.cin) {
    throw ShapeError("conv2d: input has " + std::to_string(d.cin) +
                     " channels but kernel expects " +
                     std::to_string(kernel.dim(1)));
  }
  const std::size_t ph = d.h + 2 * geom.padding;
  const std::size_t pw = d.w + 2 * geom.padding;
  if (d.kh > ph || d.kw > pw) {
    throw ShapeError("conv2d: kernel " + shape_string(kernel.shape()) +
                     " larger than padded input " + std::to_string(ph) + "x" +
                     std::to_string(pw));
  }
  d.oh = (ph - d.kh) / geom.stride + 1;
  d.ow = (pw - d.kw) / geom.stride + 1;
  return d;
}

// Unfolds one sample into a (Cin*kh*kw) x (oh*ow) matrix.
template <typename T>
void im2col(const T* image, const ConvDims& d, Conv2dGeometry geom, T* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(geom.padding);
  const std::size_t out_area = d.oh * d.ow;
  for (std::size_t c = 0; c < d.cin; ++c) {
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        T* row = cols + ((c * d.kh + ky) * d.kw + kx) * out_area;
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * geom.stride + ky) - pad;
          T* dst = row + oy * d.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) {
            std::fill(dst, dst + d.ow, T{0});
            continue;
          }
          const T* src = image + (c * d.h + static_cast<std::size_t>(iy)) * d.w;
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * geom.stride + kx) - pad;
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w))
                          ? T{0}
                          : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvDims& d, Conv2dGeometry geom, T* image) {
  const auto pad = static_cast<std::ptrdiff_t>(geom.padding);
  const std::size_t out_area = d.oh * d.ow;
  for (std::size_t c = 0; c < d.cin; ++c) {
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const T* row = cols + ((c * d.kh + ky) * d.kw + kx) * out_area;
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * geom.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
          T* dst = image + (c * d.h + static_cast<std::size_t>(iy)) * d.w;
          const T* src = row + oy * d.ow;
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * geom.stride + kx) - pad;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
            dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void require_nchw_channels(const BasicTensor<T>& input, std::size_t channels,
                           const std::string& what) {
  require_rank(input, 4, what);
  if (input.dim(1) != channels) {
    throw ShapeError(what + ": input has " + std::to_string(input.dim(1)) +
                     " channels, layer has " + std::to_string(channels));
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const BasicTensor<T>& bias, Conv2dGeometry geom) {
  const ConvDims d = conv_dims(input, kernel, geom);
  if (bias.size() != d.cout) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias.size()) +
                     " != output channels " + std::to_string(d.cout));
  }
  BasicTensor<T> out({d.n, d.cout, d.oh, d.ow});
  const std::size_t patch = d.cin * d.kh * d.kw;
  const std::size_t area = d.oh * d.ow;
  std::vector<T> cols(patch * area);
  ConstMatrixMap<T> weights(kernel.data(), d.cout, patch);
  for (std::size_t n = 0; n < d.n; ++n) {
    im2col(input.data() + n * d.cin * d.h * d.w, d, geom, cols.data());
    MatrixMap<T> result(out.data() + n * d.cout * area, d.cout, area);
    result.noalias() = weights * ConstMatrixMap<T>(cols.data(), patch, area);
    for (std::size_t c = 0; c < d.cout; ++c) result.row(c).array() += bias[c];
  }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& input,
                               const BasicTensor<T>& kernel,
                               const BasicTensor<T>& grad_output,
                               Conv2dGeometry geom) {
  const ConvDims d = conv_dims(input, kernel, geom);
  const Shape expected{d.n, d.cout, d.oh, d.ow};
  if (grad_output.shape() != expected) {
    throw ShapeError("conv2d backward: grad shape " +
                     shape_string(grad_output.shape()) + " != " +
                     shape_string(expected));
  }
  const std::size_t patch = d.cin * d.kh * d.kw;
  const std::size_t area = d.oh * d.ow;
  Conv2dGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>(kernel.shape()),
                   BasicTensor<T>({d.cout})};
  std::vector<T> cols(patch * area);
  std::vector<T> dcols(patch * area);
  ConstMatrixMap<T> weights(kernel.data(), d.cout, patch);
  MatrixMap<T> dweights(g.kernel.data(), d.cout, patch);
  for (std::size_t n = 0; n < d.n; ++n) {
    ConstMatrixMap<T> dy(grad_output.data() + n * d.cout * area, d.cout, area);
    im2col(input.data() + n * d.cin * d.h * d.w, d, geom, cols.data());
    ConstMatrixMap<T> colm(cols.data(), patch, area);
    dweights.noalias() += dy * colm.transpose();
    for (std::size_t c = 0; c < d.cout; ++c) g.bias[c] += dy.row(c).sum();
    MatrixMap<T>(dcols.data(), patch, area).noalias() = weights.transpose() * dy;
    col2im(dcols.data(), d, geom, g.input.data() + n * d.cin * d.h * d.w);
  }
  return g;
}

template <typename T>
ChannelMoments<T> channel_moments(const BasicTensor<T>& input) {
  require_rank(input, 4, "channel_moments");
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t area = input.dim(2) * input.dim(3);
  const auto count = static_cast<T>(n * area);
  ChannelMoments<T> m{std::vector<T>(c, T{0}), std::vector<T>(c, T{0})};
  // Two passes; accumulate in double even for float tensors.
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0;
    for (std::size_t s = 0; s < n; ++s) {
      const T* p = input.data() + (s * c + ch) * area;
      for (std::size_t i = 0; i < area; ++i) sum += p[i];
    }
    const double mean = sum / static_cast<double>(count);
    double sq = 0;
    for (std::size_t s = 0; s < n; ++s) {
      const T* p = input.data() + (s * c + ch) * area;
      for (std::size_t i = 0; i < area; ++i) {
        const double dv = p[i] - mean;
        sq += dv * dv;
      }
    }
    m.mean[ch] = static_cast<T>(mean);
    m.var[ch] = static_cast<T>(sq / static_cast<double>(count));
  }
  return m;
}

template <typename T>
BasicTensor<T> batchnorm_train(const BasicTensor<T>& input,
                               const ChannelMoments<T>& moments,
                               const std::vector<T>& gamma,
                               const std::vector<T>& beta, T eps,
                               BatchNormCache<T>* cache) {
  require_nchw_channels(input, gamma.size(), "batchnorm");
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t area = input.dim(2) * input.dim(3);
  BasicTensor<T> out(input.shape());
  BasicTensor<T> xhat(input.shape());
  std::vector<T> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    inv_std[ch] = T{1} / std::sqrt(moments.var[ch] + eps);
  }
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (s * c + ch) * area;
      for (std::size_t i = 0; i < area; ++i) {
        const T xh = (input[off + i] - moments.mean[ch]) * inv_std[ch];
        xhat[off + i] = xh;
        out[off + i] = gamma[ch] * xh + beta[ch];
      }
    }
  }
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
BasicTensor<T> batchnorm_eval(const BasicTensor<T>& input,
                              const std::vector<T>& running_mean,
                              const std::vector<T>& running_var,
                              const std::vector<T>& gamma,
                              const std::vector<T>& beta, T eps) {
  require_nchw_channels(input, gamma.size(), "batchnorm");
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t area = input.dim(2) * input.dim(3);
  BasicTensor<T> out(input.shape());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T scale = gamma[ch] / std::sqrt(running_var[ch] + eps);
      const std::size_t off = (s * c + ch) * area;
      for (std::size_t i = 0; i < area; ++i) {
        out[off + i] = (input[off + i] - running_mean[ch]) * scale + beta[ch];
      }
    }
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batchnorm_train_backward(const BasicTensor<T>& grad_output,
                                           const BatchNormCache<T>& cache,
                                           const std::vector<T>& gamma) {
  require_same_shape(grad_output, cache.normalized, "batchnorm backward");
  const std::size_t n = grad_output.dim(0), c = grad_output.dim(1);
  const std::size_t area = grad_output.dim(2) * grad_output.dim(3);
  const auto count = static_cast<T>(n * area);
  BatchNormGrads<T> g{BasicTensor<T>(grad_output.shape()),
                      std::vector<T>(c, T{0}), std::vector<T>(c, T{0})};
  for (std::size_t ch = 0; ch < c; ++ch) {
    T sum_dy = 0, sum_dy_xhat = 0;
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t off = (s * c + ch) * area;
      for (std::size_t i = 0; i < area; ++i) {
        sum_dy += grad_output[off + i];
        sum_dy_xhat += grad_output[off + i] * cache.normalized[off + i];
      }
    }
    g.beta[ch] = sum_dy;
    g.gamma[ch] = sum_dy_xhat;
    const T k = gamma[ch] * cache.inv_std[ch] / count;
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t off = (s * c + ch) * area;
      for (std::size_t i = 0; i < area; ++i) {
        g.input[off + i] = k * (count * grad_output[off + i] - sum_dy -
                                cache.normalized[off + i] * sum_dy_xhat);
      }
    }
  }
  return g;
}

template <typename T>
BatchNormGrads<T> batchnorm_eval_backward(const BasicTensor<T>& grad_output,
                                          const BasicTensor<T>& input,
                                          const std::vector<T>& running_mean,
                                          const std::vector<T>& running_var,
                                          const std::vector<T>& gamma, T eps) {
  require_same_shape(grad_output, input, "batchnorm backward");
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t area = input.dim(2) * input.dim(3);
  BatchNormGrads<T> g{BasicTensor<T>(input.shape()), std::vector<T>(c, T{0}),
                      std::vector<T>(c, T{0})};
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T inv_std = T{1} / std::sqrt(running_var[ch] + eps);
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t off = (s * c + ch) * area;
      for (std::size_t i = 0; i < area; ++i) {
        const T dy = grad_output[off + i];
        g.beta[ch] += dy;
        g.gamma[ch] += dy * (input[off + i] - running_mean[ch]) * inv_std;
        g.input[off + i] = dy * gamma[ch] * inv_std;
      }
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = input[i] > T{0} ? input[i] : T{0};
  }
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input,
                             const BasicTensor<T>& grad_output) {
  require_same_shape(input, grad_output, "relu backward");
  BasicTensor<T> g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    g[i] = input[i] > T{0} ? grad_output[i] : T{0};
  }
  return g;
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double w1;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t factor) {
  std::vector<Tap> taps(in * factor);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

template <typename T>
BasicTensor<T> upsample_bilinear(const BasicTensor<T>& input,
                                 std::size_t factor) {
  require_rank(input, 4, "upsample");
  if (factor == 0) throw PreconditionError("upsample: factor must be >= 1");
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  const auto ty = bilinear_taps(h, factor);
  const auto tx = bilinear_taps(w, factor);
  BasicTensor<T> out({n, c, h * factor, w * factor});
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* src = input.data() + p * h * w;
    T* dst = out.data() + p * h * w * factor * factor;
    for (std::size_t oy = 0; oy < ty.size(); ++oy) {
      const T wy1 = static_cast<T>(ty[oy].w1), wy0 = T{1} - wy1;
      const T* r0 = src + ty[oy].i0 * w;
      const T* r1 = src + ty[oy].i1 * w;
      for (std::size_t ox = 0; ox < tx.size(); ++ox) {
        const T wx1 = static_cast<T>(tx[ox].w1), wx0 = T{1} - wx1;
        dst[oy * tx.size() + ox] =
            wy0 * (wx0 * r0[tx[ox].i0] + wx1 * r0[tx[ox].i1]) +
            wy1 * (wx0 * r1[tx[ox].i0] + wx1 * r1[tx[ox].i1]);
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> upsample_bilinear_backward(const BasicTensor<T>& grad_output,
                                          std::size_t factor) {
  require_rank(grad_output, 4, "upsample backward");
  if (factor == 0) throw PreconditionError("upsample: factor must be >= 1");
  const std::size_t n = grad_output.dim(0), c = grad_output.dim(1);
  const std::size_t oh = grad_output.dim(2), ow = grad_output.dim(3);
  if (oh % factor || ow % factor) {
    throw ShapeError("upsample backward: grad extent not divisible by factor");
  }
  const std::size_t h = oh / factor, w = ow / factor;
  const auto ty = bilinear_taps(h, factor);
  const auto tx = bilinear_taps(w, factor);
  BasicTensor<T> g({n, c, h, w});
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* src = grad_output.data() + p * oh * ow;
    T* dst = g.data() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const T wy1 = static_cast<T>(ty[oy].w1), wy0 = T{1} - wy1;
      T* r0 = dst + ty[oy].i0 * w;
      T* r1 = dst + ty[oy].i1 * w;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const T wx1 = static_cast<T>(tx[ox].w1), wx0 = T{1} - wx1;
        const T v = src[oy * ow + ox];
        r0[tx[ox].i0] += wy0 * wx0 * v;
        r0[tx[ox].i1] += wy0 * wx1 * v;
        r1[tx[ox].i0] += wy1 * wx0 * v;
        r1[tx[ox].i1] += wy1 * wx1 * v;
      }
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& logits) {
  require_rank(logits, 4, "softmax");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  const std::size_t area = logits.dim(2) * logits.dim(3);
  BasicTensor<T> probs(logits.shape());
  for (std::size_t s = 0; s < n; ++s) {
    const T* in = logits.data() + s * k * area;
    T* out = probs.data() + s * k * area;
    for (std::size_t i = 0; i < area; ++i) {
      T mx = in[i];
      for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, in[c * area + i]);
      T total = 0;
      for (std::size_t c = 0; c < k; ++c) {
        out[c * area + i] = std::exp(in[c * area + i] - mx);
        total += out[c * area + i];
      }
      for (std::size_t c = 0; c < k; ++c) out[c * area + i] /= total;
    }
  }
  return probs;
}

template <typename T>
BasicTensor<T> softmax_channels_backward(const BasicTensor<T>& probs,
                                         const BasicTensor<T>& grad_output) {
  require_same_shape(probs, grad_output, "softmax backward");
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  const std::size_t area = probs.dim(2) * probs.dim(3);
  BasicTensor<T> g(probs.shape());
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t base = s * k * area;
    for (std::size_t i = 0; i < area; ++i) {
      T dot = 0;
      for (std::size_t c = 0; c < k; ++c) {
        dot += probs[base + c * area + i] * grad_output[base + c * area + i];
      }
      for (std::size_t c = 0; c < k; ++c) {
        const std::size_t j = base + c * area + i;
        g[j] = probs[j] * (grad_output[j] - dot);
      }
    }
  }
  return g;
}

namespace {

template <typename T>
void check_labels(const BasicTensor<T>& logits, const std::vector<int>& labels) {
  require_rank(logits, 4, "cross-entropy logits");
  const std::size_t pixels = logits.dim(0) * logits.dim(2) * logits.dim(3);
  if (labels.size() != pixels) {
    throw ShapeError("cross-entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(pixels) + " pixels");
  }
  const int k = static_cast<int>(logits.dim(1));
  for (int y : labels) {
    if (y < 0 || y >= k) {
      throw PreconditionError("cross-entropy: label " + std::to_string(y) +
                              " outside [0, " + std::to_string(k) + ")");
    }
  }
}

}  // namespace

template <typename T>
T softmax_cross_entropy(const BasicTensor<T>& logits,
                        const std::vector<int>& labels) {
  check_labels(logits, labels);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  const std::size_t area = logits.dim(2) * logits.dim(3);
  double total = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const T* in = logits.data() + s * k * area;
    for (std::size_t i = 0; i < area; ++i) {
      T mx = in[i];
      for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, in[c * area + i]);
      double z = 0;
      for (std::size_t c = 0; c < k; ++c) z += std::exp(double(in[c * area + i] - mx));
      const auto y = static_cast<std::size_t>(labels[s * area + i]);
      total += std::log(z) - double(in[y * area + i] - mx);
    }
  }
  return static_cast<T>(total / static_cast<double>(n * area));
}

template <typename T>
BasicTensor<T> softmax_cross_entropy_backward(const BasicTensor<T>& logits,
                                              const std::vector<int>& labels) {
  check_labels(logits, labels);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  const std::size_t area = logits.dim(2) * logits.dim(3);
  BasicTensor<T> g = softmax_channels(logits);
  const T inv = T{1} / static_cast<T>(n * area);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < area; ++i) {
      const auto y = static_cast<std::size_t>(labels[s * area + i]);
      g[(s * k + y) * area + i] -= T{1};
    }
  }
  for (auto& v : g.values()) v *= inv;
  return g;
}

template <typename T>
T l1_loss(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "l1_loss");
  double total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(double(a[i]) - double(b[i]));
  return static_cast<T>(total / static_cast<double>(a.size()));
}

template <typename T>
BasicTensor<T> l1_loss_backward(const BasicTensor<T>& a,
                                const BasicTensor<T>& b) {
  require_same_shape(a, b, "l1_loss backward");
  BasicTensor<T> g(a.shape());
  const T inv = T{1} / static_cast<T>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    g[i] = a[i] > b[i] ? inv : (a[i] < b[i] ? -inv : T{0});
  }
  return g;
}

#define DFSS_INSTANTIATE_OPS(T)                                                \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, \
                                 const BasicTensor<T>&, Conv2dGeometry);       \
  template Conv2dGrads<T> conv2d_backward(const BasicTensor<T>&,               \
                                          const BasicTensor<T>&,               \
                                          const BasicTensor<T>&,               \
                                          Conv2dGeometry);                     \
  template ChannelMoments<T> channel_moments(const BasicTensor<T>&);           \
  template BasicTensor<T> batchnorm_train(                                     \
      const BasicTensor<T>&, const ChannelMoments<T>&, const std::vector<T>&,  \
      const std::vector<T>&, T, BatchNormCache<T>*);                           \
  template BasicTensor<T> batchnorm_eval(                                      \
      const BasicTensor<T>&, const std::vector<T>&, const std::vector<T>&,     \
      const std::vector<T>&, const std::vector<T>&, T);                        \
  template BatchNormGrads<T> batchnorm_train_backward(                         \
      const BasicTensor<T>&, const BatchNormCache<T>&, const std::vector<T>&); \
  template BatchNormGrads<T> batchnorm_eval_backward(                          \
      const BasicTensor<T>&, const BasicTensor<T>&, const std::vector<T>&,     \
      const std::vector<T>&, const std::vector<T>&, T);                        \
  template BasicTensor<T> relu(const BasicTensor<T>&);                         \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&,                 \
                                        const BasicTensor<T>&);                \
  template BasicTensor<T> upsample_bilinear(const BasicTensor<T>&,             \
                                            std::size_t);                      \
  template BasicTensor<T> upsample_bilinear_backward(const BasicTensor<T>&,    \
                                                     std::size_t);             \
  template BasicTensor<T> softmax_channels(const BasicTensor<T>&);             \
  template BasicTensor<T> softmax_channels_backward(const BasicTensor<T>&,     \
                                                    const BasicTensor<T>&);    \
  template T softmax_cross_entropy(const BasicTensor<T>&,                      \
                                   const std::vector<int>&);                   \
  template BasicTensor<T> softmax_cross_entropy_backward(                      \
      const BasicTensor<T>&, const std::vector<int>&);                         \
  template T l1_loss(const BasicTensor<T>&, const BasicTensor<T>&);            \
  template BasicTensor<T> l1_loss_backward(const BasicTensor<T>&,              \
                                           const BasicTensor<T>&);

DFSS_INSTANTIATE_OPS(float)
DFSS_INSTANTIATE_OPS(double)

#undef DFSS_INSTANTIATE_OPS

}  // namespace dfss::ops
