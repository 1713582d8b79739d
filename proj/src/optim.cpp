#include "dfss/optim.hpp"

#include <string>

namespace dfss {

double cosine_lr(long t, long total, double lr0) {
  if (total <= 0) throw PreconditionError("cosine_lr: total iterations must be > 0");
  if (t < 0 || t > total) {
    throw PreconditionError("cosine_lr: t=" + std::to_string(t) +
                            " outside [0, " + std::to_string(total) + "]");
  }
  if (t == total) return 0.0;
  return lr0 * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) /
                         static_cast<double>(total)));
}

template <typename T>
Sgd<T>::Sgd(std::vector<Param<T>*> params, double momentum)
    : params_(std::move(params)), momentum_(momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw PreconditionError("sgd: momentum must lie in [0, 1)");
  }
  velocity_.reserve(params_.size());
  for (const Param<T>* p : params_) velocity_.emplace_back(p->value.size(), T{0});
}

template <typename T>
void Sgd<T>::step(double lr) {
  if (!(lr > 0.0)) throw PreconditionError("sgd: lr must be > 0");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i]->grad.all_finite()) {
      throw NumericError("sgd: non-finite gradient in parameter " +
                         std::to_string(i) + " (shape " +
                         shape_string(params_[i]->grad.shape()) + ")");
    }
  }
  const T mu = static_cast<T>(momentum_);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& v = velocity_[i];
    auto& p = params_[i]->value;
    const auto& g = params_[i]->grad;
    for (std::size_t j = 0; j < v.size(); ++j) {
      v[j] = mu * v[j] + g[j];
      p[j] -= rate * v[j];
    }
  }
}

template <typename T>
void Sgd<T>::zero_grad() {
  for (Param<T>* p : params_) p->grad.fill(T{0});
}

template class Sgd<float>;
template class Sgd<double>;

}  // namespace dfss
