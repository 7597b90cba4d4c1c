#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "causecast/random.hpp"
#include "causecast/tensor.hpp"

namespace causecast::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double lo = -2.0, double hi = 2.0) {
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

// Largest norm-wise relative error between analytic and central-difference
// gradients over all inputs. Gradients that vanish analytically (e.g. a key
// bias under softmax shift invariance) are judged against a 1e-4 norm floor.
inline double gradient_error(const std::function<Tensor()>& loss, std::vector<Tensor> inputs, double h = 1e-5) {
  for (auto& x : inputs) x.zero_grad();
  Tensor out = loss();
  out.backward();
  double worst = 0.0;
  for (auto& x : inputs) {
    std::vector<double> analytic(x.numel(), 0.0);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
    std::vector<double> numeric(x.numel());
    auto data = x.values_mut();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = loss().item();
      data[i] = saved - h;
      const double down = loss().item();
      data[i] = saved;
      numeric[i] = (up - down) / (2.0 * h);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const double denom = std::max(std::sqrt(na) + std::sqrt(nn), 1e-4);
    worst = std::max(worst, std::sqrt(diff) / denom);
  }
  return worst;
}

}  // namespace causecast::testing
