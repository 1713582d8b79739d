#include "dfss/network.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace dfss {

NetworkSpec default_teacher_spec(std::size_t num_classes) {
  NetworkSpec s;
  s.name = "toy-teacher";
  s.role = NetRole::teacher;
  s.num_classes = num_classes;
  auto block = [&](std::size_t out, std::size_t stride) {
    s.layers.push_back(LayerSpec::conv(out, 3, stride, 1));
    s.layers.push_back(LayerSpec::batchnorm());
    s.layers.push_back(LayerSpec::relu());
  };
  block(16, 1);
  block(24, 2);
  block(24, 1);
  block(24, 1);
  block(24, 1);
  s.layers.push_back(LayerSpec::upsample(2));
  block(16, 1);
  s.layers.push_back(LayerSpec::conv(num_classes, 1, 1, 0));
  return s;
}

NetworkSpec default_student_spec(std::size_t num_classes) {
  NetworkSpec s;
  s.name = "toy-student";
  s.role = NetRole::student;
  s.num_classes = num_classes;
  for (int i = 0; i < 3; ++i) {
    s.layers.push_back(LayerSpec::conv(8, 3, 1, 1));
    s.layers.push_back(LayerSpec::batchnorm());
    s.layers.push_back(LayerSpec::relu());
  }
  s.layers.push_back(LayerSpec::conv(num_classes, 1, 1, 0));
  return s;
}

std::string canonical_spec_text(const NetworkSpec& spec) {
  std::ostringstream out;
  out.precision(17);
  out << "name=" << spec.name
      << ";role=" << (spec.role == NetRole::teacher ? "teacher" : "student")
      << ";input=" << spec.in_channels << 'x' << spec.height << 'x' << spec.width
      << ";classes=" << spec.num_classes << ";bn_momentum=" << spec.bn_momentum
      << ";bn_eps=" << spec.bn_eps << ";layers=";
  for (const LayerSpec& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::conv:
        out << "conv(" << l.out_channels << ',' << l.kernel << ',' << l.stride
            << ',' << l.padding << ')';
        break;
      case LayerKind::batchnorm:
        out << "bn";
        break;
      case LayerKind::relu:
        out << "relu";
        break;
      case LayerKind::upsample:
        out << "up(" << l.factor << ')';
        break;
    }
    out << ';';
  }
  return out.str();
}

Digest spec_digest(const NetworkSpec& spec) {
  return sha256(canonical_spec_text(spec));
}

void validate_spec(const NetworkSpec& spec) {
  auto fail = [&](const std::string& why) {
    throw ShapeError("network spec '" + spec.name + "': " + why);
  };
  if (spec.in_channels == 0 || spec.height == 0 || spec.width == 0) {
    fail("input extents must be positive");
  }
  if (spec.num_classes < 2) fail("need at least 2 classes");
  if (!(spec.bn_momentum > 0.0 && spec.bn_momentum <= 1.0)) {
    fail("bn momentum must lie in (0, 1]");
  }
  if (!(spec.bn_eps > 0.0)) fail("bn eps must be positive");
  std::size_t channels = spec.in_channels;
  std::size_t h = spec.height, w = spec.width;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string at = "layer " + std::to_string(i) + ": ";
    switch (l.kind) {
      case LayerKind::conv: {
        if (l.out_channels == 0 || l.kernel == 0 || l.stride == 0) {
          fail(at + "conv needs positive channels, kernel and stride");
        }
        if (l.kernel > h + 2 * l.padding || l.kernel > w + 2 * l.padding) {
          fail(at + "kernel larger than padded input");
        }
        h = (h + 2 * l.padding - l.kernel) / l.stride + 1;
        w = (w + 2 * l.padding - l.kernel) / l.stride + 1;
        channels = l.out_channels;
        break;
      }
      case LayerKind::batchnorm:
      case LayerKind::relu:
        break;
      case LayerKind::upsample:
        if (l.factor == 0) fail(at + "upsample factor must be >= 1");
        h *= l.factor;
        w *= l.factor;
        break;
    }
  }
  if (spec.layers.empty() || spec.layers.back().kind != LayerKind::conv) {
    fail("last layer must be the classifier conv");
  }
  if (channels != spec.num_classes) {
    fail("classifier emits " + std::to_string(channels) + " channels, expected " +
         std::to_string(spec.num_classes));
  }
  if (h != spec.height || w != spec.width) {
    fail("output resolution " + std::to_string(h) + "x" + std::to_string(w) +
         " differs from input " + std::to_string(spec.height) + "x" +
         std::to_string(spec.width));
  }
}

template <typename T>
BasicNetwork<T>::BasicNetwork(NetworkSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), init_seed_(seed) {
  validate_spec(spec_);
  std::mt19937_64 rng(seed);
  std::size_t channels = spec_.in_channels;
  for (const LayerSpec& l : spec_.layers) {
    switch (l.kind) {
      case LayerKind::conv: {
        Conv2dLayer<T> conv(channels, l.out_channels, l.kernel,
                            {l.stride, l.padding});
        const double fan_in = static_cast<double>(channels * l.kernel * l.kernel);
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (auto& v : conv.weight.value.values()) v = static_cast<T>(dist(rng));
        layers_.emplace_back(std::move(conv));
        channels = l.out_channels;
        break;
      }
      case LayerKind::batchnorm:
        layers_.emplace_back(BatchNormLayer<T>(channels,
                                               static_cast<T>(spec_.bn_momentum),
                                               static_cast<T>(spec_.bn_eps)));
        break;
      case LayerKind::relu:
        layers_.emplace_back(ReluLayer<T>());
        break;
      case LayerKind::upsample:
        layers_.emplace_back(UpsampleLayer<T>(l.factor));
        break;
    }
  }
}

template <typename T>
BasicTensor<T> BasicNetwork<T>::forward(const BasicTensor<T>& x) {
  BasicTensor<T> h = x;
  for (auto& layer : layers_) {
    h = std::visit([&](auto& l) { return l.forward(h); }, layer);
  }
  return h;
}

template <typename T>
BasicTensor<T> BasicNetwork<T>::backward(const BasicTensor<T>& grad_logits) {
  BasicTensor<T> g = grad_logits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    g = std::visit([&](auto& l) { return l.backward(g); }, *it);
  }
  return g;
}

template <typename T>
BasicTensor<T> BasicNetwork<T>::infer(const BasicTensor<T>& x) const {
  BasicTensor<T> h = x;
  for (const auto& layer : layers_) {
    h = std::visit([&](const auto& l) { return l.infer(h); }, layer);
  }
  return h;
}

template <typename T>
std::pair<BasicTensor<T>, FeatureStats> BasicNetwork<T>::forward_with_stats(
    const BasicTensor<T>& x) const {
  if (mode_ != Mode::eval) {
    throw PreconditionError(
        "forward_with_stats: network must be in eval mode");
  }
  require_rank(x, 4, "forward_with_stats input");
  if (x.dim(0) != 1) {
    throw ShapeError("forward_with_stats: expects a single-sample batch, got " +
                     shape_string(x.shape()));
  }
  FeatureStats stats;
  BasicTensor<T> h = x;
  for (const auto& layer : layers_) {
    if (std::holds_alternative<BatchNormLayer<T>>(layer)) {
      const auto m = ops::channel_moments(h);
      stats.layers.push_back({std::vector<float>(m.mean.begin(), m.mean.end()),
                              std::vector<float>(m.var.begin(), m.var.end())});
    }
    h = std::visit([&](const auto& l) { return l.infer(h); }, layer);
  }
  return {std::move(h), std::move(stats)};
}

template <typename T>
void BasicNetwork<T>::set_mode(Mode mode) {
  mode_ = mode;
  for (BatchNormLayer<T>* bn : batchnorm_layers()) bn->mode = mode;
}

template <typename T>
std::vector<Param<T>*> BasicNetwork<T>::parameters() {
  std::vector<Param<T>*> out;
  for (auto& layer : layers_) {
    if (auto* c = std::get_if<Conv2dLayer<T>>(&layer)) {
      out.push_back(&c->weight);
      out.push_back(&c->bias);
    } else if (auto* b = std::get_if<BatchNormLayer<T>>(&layer)) {
      out.push_back(&b->gamma);
      out.push_back(&b->beta);
    }
  }
  return out;
}

template <typename T>
std::vector<const Param<T>*> BasicNetwork<T>::parameters() const {
  auto mutable_params = const_cast<BasicNetwork*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

template <typename T>
std::size_t BasicNetwork<T>::parameter_count() const {
  std::size_t n = 0;
  for (const Param<T>* p : parameters()) n += p->value.size();
  return n;
}

template <typename T>
void BasicNetwork<T>::zero_grad() {
  for (Param<T>* p : parameters()) p->grad.fill(T{0});
}

template <typename T>
void BasicNetwork<T>::clear_tape() {
  for (auto& layer : layers_) std::visit([](auto& l) { l.clear_tape(); }, layer);
}

template <typename T>
std::vector<BatchNormLayer<T>*> BasicNetwork<T>::batchnorm_layers() {
  std::vector<BatchNormLayer<T>*> out;
  for (auto& layer : layers_) {
    if (auto* b = std::get_if<BatchNormLayer<T>>(&layer)) out.push_back(b);
  }
  return out;
}

template <typename T>
std::vector<const BatchNormLayer<T>*> BasicNetwork<T>::batchnorm_layers() const {
  std::vector<const BatchNormLayer<T>*> out;
  for (const auto& layer : layers_) {
    if (const auto* b = std::get_if<BatchNormLayer<T>>(&layer)) out.push_back(b);
  }
  return out;
}

template class BasicNetwork<float>;
template class BasicNetwork<double>;

Network build_network(const NetworkSpec& spec, std::uint64_t seed) {
  return Network(spec, seed);
}

}  // namespace dfss
