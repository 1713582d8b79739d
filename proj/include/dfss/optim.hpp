#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "dfss/layers.hpp"

namespace dfss {

// lr0 * 0.5 * (1 + cos(pi * t / total)), for 0 <= t <= total.
double cosine_lr(long t, long total, double lr0);

// Classical momentum SGD:
//   v <- momentum * v + grad
//   p <- p - lr * v
// Throws NumericError (and leaves every parameter untouched) if any gradient
// is NaN or Inf.
template <typename T>
class Sgd {
 public:
  Sgd(std::vector<Param<T>*> params, double momentum);

  void step(double lr);
  void zero_grad();

  double momentum() const { return momentum_; }

 private:
  std::vector<Param<T>*> params_;
  std::vector<std::vector<T>> velocity_;
  double momentum_;
};

extern template class Sgd<float>;
extern template class Sgd<double>;

}  // namespace dfss
