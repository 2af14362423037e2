#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hgan/tensor.hpp"

namespace testsupport {

inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1e-4, std::fabs(a), std::fabs(b)});
}

// Compares analytic gradients of a scalar loss against central finite
// differences over every element of every listed parameter. make_loss must
// rebuild the graph from the current parameter values on each call.
template <class LossFn>
double max_grad_rel_err(std::vector<hgan::Tensor> params, LossFn make_loss, double h = 1e-3) {
  for (auto& p : params) p.zero_grad();
  hgan::Tensor loss = make_loss();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.grad());

  auto eval = [&]() {
    hgan::NoGradGuard guard;
    return make_loss().item();
  };

  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& data = params[pi].data();
    for (size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double fp = eval();
      data[i] = saved - h;
      const double fm = eval();
      data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      worst = std::max(worst, rel_err(analytic[pi][i], numeric));
    }
  }
  return worst;
}

inline hgan::Tensor random_tensor(hgan::Shape shape, hgan::Rng& rng, bool requires_grad = false,
                                  double lo = -1.0, double hi = 1.0) {
  hgan::Tensor t = hgan::Tensor::zeros(std::move(shape), requires_grad);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace testsupport
