#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hgan/nn_ops.hpp"
#include "hgan/tensor.hpp"

namespace hgan {

struct NamedParam {
  std::string name;
  Tensor tensor;
};
using ParamMap = std::vector<NamedParam>;

// Xavier-uniform: draws in +-sqrt(6/(fan_in+fan_out)); empty arrays unchanged.
inline void xavier_fill(Tensor& w, int64_t fan_in, int64_t fan_out, Rng& rng) {
  if (w.numel() == 0) return;
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : w.data()) v = rng.uniform(-bound, bound);
}

struct Conv2dLayer {
  Tensor w, b;
  int64_t stride = 1, pad = 0;

  static Conv2dLayer make(int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad,
                          Rng& rng) {
    Conv2dLayer l;
    l.w = Tensor::param({cout, cin, k, k});
    l.b = Tensor::param({cout});
    l.stride = stride;
    l.pad = pad;
    xavier_fill(l.w, cin * k * k, cout * k * k, rng);
    return l;
  }
  Tensor operator()(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
  void collect(const std::string& prefix, ParamMap& out) {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }
};

struct ConvT2dLayer {
  Tensor w, b;
  int64_t stride = 2, pad = 1, outpad = 1;

  static ConvT2dLayer make(int64_t cin, int64_t cout, int64_t k, Rng& rng) {
    ConvT2dLayer l;
    l.w = Tensor::param({cin, cout, k, k});
    l.b = Tensor::param({cout});
    xavier_fill(l.w, cin * k * k, cout * k * k, rng);
    return l;
  }
  Tensor operator()(const Tensor& x) const { return conv_transpose2d(x, w, b, stride, pad, outpad); }
  void collect(const std::string& prefix, ParamMap& out) {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }
};

struct InstanceNormLayer {
  Tensor gamma, beta;

  static InstanceNormLayer make(int64_t c) {
    InstanceNormLayer l;
    l.gamma = Tensor::param({c});
    std::fill(l.gamma.data().begin(), l.gamma.data().end(), 1.0);
    l.beta = Tensor::param({c});
    return l;
  }
  Tensor operator()(const Tensor& x) const { return instance_norm2d(x, gamma, beta); }
  void collect(const std::string& prefix, ParamMap& out) {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
  }
};

struct LayerNormLayer {
  Tensor gamma, beta;

  static LayerNormLayer make(int64_t d) {
    LayerNormLayer l;
    l.gamma = Tensor::param({d});
    std::fill(l.gamma.data().begin(), l.gamma.data().end(), 1.0);
    l.beta = Tensor::param({d});
    return l;
  }
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
  void collect(const std::string& prefix, ParamMap& out) {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
  }
};

struct LinearLayer {
  Tensor w, b;

  static LinearLayer make(int64_t in, int64_t out, Rng& rng) {
    LinearLayer l;
    l.w = Tensor::param({in, out});
    l.b = Tensor::param({out});
    xavier_fill(l.w, in, out, rng);
    return l;
  }
  Tensor operator()(const Tensor& x) const { return linear(x, w, b); }
  void collect(const std::string& prefix, ParamMap& out) {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }
};

inline void set_params_trainable(ParamMap& params, bool trainable) {
  for (auto& p : params) p.tensor.set_requires_grad(trainable);
}

inline void zero_grads(ParamMap& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

inline int64_t param_count(const ParamMap& params) {
  int64_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

}  // namespace hgan
