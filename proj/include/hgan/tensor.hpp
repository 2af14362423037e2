#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hgan/errors.hpp"
#include "hgan/rng.hpp"

namespace hgan {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << s[i] << (i + 1 < s.size() ? "," : "");
  os << ")";
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  std::vector<double>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

inline int& nograd_depth() {
  thread_local int depth = 0;
  return depth;
}

}  // namespace detail

struct NoGradGuard {
  NoGradGuard() { ++detail::nograd_depth(); }
  ~NoGradGuard() { --detail::nograd_depth(); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::nograd_depth() == 0; }

// Dynamically-shaped dense tensor of doubles with reverse-mode autodiff.
// Value-semantic handle; copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), {}, requires_grad, true);
  }
  static Tensor full(Shape shape, double v) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.data().begin(), t.data().end(), v);
    return t;
  }
  static Tensor scalar(double v) { return full({1}, v); }
  static Tensor from(Shape shape, std::vector<double> value, bool requires_grad = false) {
    require(shape_numel(shape) == static_cast<int64_t>(value.size()), Err::ShapeMismatch,
            "tensor data size does not match shape " + shape_str(shape));
    Tensor t;
    t.n_ = std::make_shared<detail::Node>();
    t.n_->shape = std::move(shape);
    t.n_->value = std::move(value);
    t.n_->requires_grad = requires_grad;
    return t;
  }
  // Trainable parameter.
  static Tensor param(Shape shape) { return zeros(std::move(shape), true); }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int64_t dim(size_t i) const { return n_->shape[i]; }
  size_t ndim() const { return n_->shape.size(); }
  int64_t numel() const { return n_->numel(); }
  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool rg) { n_->requires_grad = rg; }

  std::vector<double>& data() { return n_->value; }
  const std::vector<double>& data() const { return n_->value; }
  std::vector<double>& grad() { return n_->grad_buffer(); }
  void zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
  }

  double item() const {
    require(numel() == 1, Err::ShapeError, "item() on non-scalar tensor " + shape_str(shape()));
    return n_->value[0];
  }

  Tensor detach() const {
    Tensor t;
    t.n_ = std::make_shared<detail::Node>();
    t.n_->shape = n_->shape;
    t.n_->value = n_->value;
    t.n_->requires_grad = false;
    return t;
  }

  // Reverse-mode sweep from a scalar root.
  void backward() const {
    require(numel() == 1, Err::ShapeError, "backward() root must be scalar");
    if (!n_->requires_grad) return;
    std::vector<detail::Node*> order;
    topo_sort(order);
    n_->grad_buffer()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* node = *it;
      if (node->backprop) {
        node->grad_buffer();
        node->backprop(*node);
      }
    }
  }

  std::shared_ptr<detail::Node> node() const { return n_; }

  static Tensor wrap(std::shared_ptr<detail::Node> n) {
    Tensor t;
    t.n_ = std::move(n);
    return t;
  }

 private:
  Tensor(Shape shape, std::vector<double>, bool requires_grad, bool) {
    n_ = std::make_shared<detail::Node>();
    n_->value.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
    n_->shape = std::move(shape);
    n_->requires_grad = requires_grad;
  }

  void topo_sort(std::vector<detail::Node*>& order) const {
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, size_t>> stack;
    stack.emplace_back(n_.get(), 0);
    seen.insert(n_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      bool descended = false;
      while (next < node->parents.size()) {
        detail::Node* p = node->parents[next++].get();
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.emplace_back(p, 0);
          descended = true;
          break;
        }
      }
      if (!descended && (stack.back().second >= stack.back().first->parents.size())) {
        order.push_back(stack.back().first);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<detail::Node> n_;
};

// Builds an op node. The backprop closure may capture parent Tensors and must
// accumulate (+=) into their grad buffers.
inline Tensor make_op(Shape shape, std::vector<double> value, const std::vector<Tensor>& parents,
                      std::function<void(detail::Node&)> backprop) {
  Tensor out = Tensor::from(std::move(shape), std::move(value));
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    auto n = out.node();
    n->requires_grad = true;
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backprop = std::move(backprop);
  }
  return out;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), Err::ShapeMismatch,
          std::string(op) + ": shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> v(a.data());
  const auto& bv = b.data();
  for (size_t i = 0; i < v.size(); ++i) v[i] += bv[i];
  return make_op(a.shape(), std::move(v), {a, b}, [a, b](detail::Node& self) mutable {
    if (a.requires_grad()) {
      auto& g = a.grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (b.requires_grad()) {
      auto& g = b.grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> v(a.data());
  const auto& bv = b.data();
  for (size_t i = 0; i < v.size(); ++i) v[i] -= bv[i];
  return make_op(a.shape(), std::move(v), {a, b}, [a, b](detail::Node& self) mutable {
    if (a.requires_grad()) {
      auto& g = a.grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (b.requires_grad()) {
      auto& g = b.grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> v(a.data());
  const auto& bv = b.data();
  for (size_t i = 0; i < v.size(); ++i) v[i] *= bv[i];
  return make_op(a.shape(), std::move(v), {a, b}, [a, b](detail::Node& self) mutable {
    if (a.requires_grad()) {
      auto& g = a.grad();
      const auto& other = b.data();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * other[i];
    }
    if (b.requires_grad()) {
      auto& g = b.grad();
      const auto& other = a.data();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * other[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> v(a.data());
  for (auto& x : v) x *= s;
  return make_op(a.shape(), std::move(v), {a}, [a, s](detail::Node& self) mutable {
    if (!a.requires_grad()) return;
    auto& g = a.grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> v(a.data());
  for (auto& x : v) x += s;
  return make_op(a.shape(), std::move(v), {a}, [a](detail::Node& self) mutable {
    if (!a.requires_grad()) return;
    auto& g = a.grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

template <class F, class DF>
Tensor unary_op(const Tensor& a, F f, DF df) {
  std::vector<double> v(a.data());
  for (auto& x : v) x = f(x);
  return make_op(a.shape(), std::move(v), {a}, [a, df](detail::Node& self) mutable {
    if (!a.requires_grad()) return;
    auto& g = a.grad();
    const auto& x = a.data();
    const auto& y = self.value;
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(x[i], y[i]);
  });
}

inline Tensor abs_t(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x >= 0.0 ? 1.0 : -1.0; });
}

inline Tensor square(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Tensor tanh_t(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor leaky_relu(const Tensor& a, double slope = 0.2) {
  return unary_op(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

inline Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return unary_op(
      a, [=](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [=](double x, double) {
        double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        return cdf + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
      });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& a) {
  double s = std::accumulate(a.data().begin(), a.data().end(), 0.0);
  return make_op({1}, {s}, {a}, [a](detail::Node& self) mutable {
    if (!a.requires_grad()) return;
    auto& g = a.grad();
    const double gout = self.grad[0];
    for (auto& x : g) x += gout;
  });
}

inline Tensor mean_all(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double s = std::accumulate(a.data().begin(), a.data().end(), 0.0) / n;
  return make_op({1}, {s}, {a}, [a, n](detail::Node& self) mutable {
    if (!a.requires_grad()) return;
    auto& g = a.grad();
    const double gout = self.grad[0] / n;
    for (auto& x : g) x += gout;
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape shape) {
  require(shape_numel(shape) == a.numel(), Err::ShapeMismatch,
          "reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<double> v(a.data());
  return make_op(std::move(shape), std::move(v), {a}, [a](detail::Node& self) mutable {
    if (!a.requires_grad()) return;
    auto& g = a.grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

namespace detail {
inline std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}
}  // namespace detail

inline Tensor permute(const Tensor& a, const std::vector<size_t>& perm) {
  require(perm.size() == a.ndim(), Err::ShapeError, "permute rank mismatch");
  const Shape& in = a.shape();
  Shape out(in.size());
  for (size_t i = 0; i < perm.size(); ++i) out[i] = in[perm[i]];
  auto in_strides = detail::row_major_strides(in);
  auto out_strides = detail::row_major_strides(out);
  const int64_t n = a.numel();
  // Map out index -> in index.
  std::vector<int64_t> src_index(static_cast<size_t>(n));
  std::vector<int64_t> idx(in.size(), 0);
  for (int64_t o = 0; o < n; ++o) {
    int64_t rem = o, src = 0;
    for (size_t d = 0; d < out.size(); ++d) {
      int64_t q = rem / out_strides[d];
      rem -= q * out_strides[d];
      src += q * in_strides[perm[d]];
    }
    src_index[static_cast<size_t>(o)] = src;
  }
  std::vector<double> v(static_cast<size_t>(n));
  const auto& av = a.data();
  for (int64_t o = 0; o < n; ++o) v[o] = av[src_index[o]];
  return make_op(std::move(out), std::move(v), {a},
                 [a, src_index = std::move(src_index)](detail::Node& self) mutable {
                   if (!a.requires_grad()) return;
                   auto& g = a.grad();
                   for (size_t o = 0; o < src_index.size(); ++o) g[src_index[o]] += self.grad[o];
                 });
}

inline Tensor concat(const std::vector<Tensor>& parts, size_t axis) {
  require(!parts.empty(), Err::ShapeError, "concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  require(axis < s0.size(), Err::ShapeError, "concat axis out of range");
  Shape out = s0;
  int64_t axis_total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    require(s.size() == s0.size(), Err::ShapeMismatch, "concat rank mismatch");
    for (size_t d = 0; d < s.size(); ++d)
      require(d == axis || s[d] == s0[d], Err::ShapeMismatch, "concat shape mismatch");
    axis_total += s[axis];
  }
  out[axis] = axis_total;

  int64_t outer = 1, inner = 1;
  for (size_t d = 0; d < axis; ++d) outer *= s0[d];
  for (size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];

  std::vector<double> v(static_cast<size_t>(shape_numel(out)));
  int64_t offset = 0;
  for (const auto& p : parts) {
    const int64_t len = p.dim(axis) * inner;
    const auto& pv = p.data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(pv.begin() + o * len, len, v.begin() + o * axis_total * inner + offset);
    offset += len;
  }
  return make_op(std::move(out), std::move(v), parts,
                 [parts, outer, inner, axis_total, axis](detail::Node& self) mutable {
                   int64_t offset = 0;
                   for (auto& p : parts) {
                     const int64_t len = p.dim(axis) * inner;
                     if (p.requires_grad()) {
                       auto& g = p.grad();
                       for (int64_t o = 0; o < outer; ++o) {
                         const double* src = self.grad.data() + o * axis_total * inner + offset;
                         double* dst = g.data() + o * len;
                         for (int64_t i = 0; i < len; ++i) dst[i] += src[i];
                       }
                     }
                     offset += len;
                   }
                 });
}

// a has leading batch dim, b is broadcast with dim(0) == 1; shapes equal elsewhere.
inline Tensor add_broadcast_batch(const Tensor& a, const Tensor& b) {
  require(a.ndim() == b.ndim() && b.dim(0) == 1, Err::ShapeMismatch, "add_broadcast_batch");
  for (size_t d = 1; d < a.ndim(); ++d)
    require(a.dim(d) == b.dim(d), Err::ShapeMismatch, "add_broadcast_batch trailing dims");
  const int64_t n = a.dim(0);
  const int64_t chunk = b.numel();
  std::vector<double> v(a.data());
  const auto& bv = b.data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < chunk; ++j) v[i * chunk + j] += bv[j];
  return make_op(a.shape(), std::move(v), {a, b}, [a, b, n, chunk](detail::Node& self) mutable {
    if (a.requires_grad()) {
      auto& g = a.grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (b.requires_grad()) {
      auto& g = b.grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < chunk; ++j) g[j] += self.grad[i * chunk + j];
    }
  });
}

// ---------------------------------------------------------------------------
// Matrix products (Eigen GEMM backend)
// ---------------------------------------------------------------------------

namespace detail {
using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;
}  // namespace detail

// (M,K) x (K,N) -> (M,N)
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(0), Err::ShapeMismatch,
          "matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> v(static_cast<size_t>(m * n));
  detail::EMap(v.data(), m, n) = detail::ECMap(a.data().data(), m, k) * detail::ECMap(b.data().data(), k, n);
  return make_op({m, n}, std::move(v), {a, b}, [a, b, m, k, n](detail::Node& self) mutable {
    detail::ECMap gy(self.grad.data(), m, n);
    if (a.requires_grad())
      detail::EMap(a.grad().data(), m, k) += gy * detail::ECMap(b.data().data(), k, n).transpose();
    if (b.requires_grad())
      detail::EMap(b.grad().data(), k, n) += detail::ECMap(a.data().data(), m, k).transpose() * gy;
  });
}

// Batched (B,M,K) x (B,K,N) -> (B,M,N)
inline Tensor bmm(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1),
          Err::ShapeMismatch, "bmm " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int64_t bt = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<double> v(static_cast<size_t>(bt * m * n));
  for (int64_t i = 0; i < bt; ++i)
    detail::EMap(v.data() + i * m * n, m, n) =
        detail::ECMap(a.data().data() + i * m * k, m, k) * detail::ECMap(b.data().data() + i * k * n, k, n);
  return make_op({bt, m, n}, std::move(v), {a, b}, [a, b, bt, m, k, n](detail::Node& self) mutable {
    for (int64_t i = 0; i < bt; ++i) {
      detail::ECMap gy(self.grad.data() + i * m * n, m, n);
      if (a.requires_grad())
        detail::EMap(a.grad().data() + i * m * k, m, k) +=
            gy * detail::ECMap(b.data().data() + i * k * n, k, n).transpose();
      if (b.requires_grad())
        detail::EMap(b.grad().data() + i * k * n, k, n) +=
            detail::ECMap(a.data().data() + i * m * k, m, k).transpose() * gy;
    }
  });
}

// x (..., K) times w (K, N) plus optional bias (N); leading dims preserved.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = Tensor()) {
  require(x.ndim() >= 1 && w.ndim() == 2 && x.dim(x.ndim() - 1) == w.dim(0), Err::ShapeMismatch,
          "linear " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
  const int64_t k = w.dim(0), n = w.dim(1);
  const int64_t rows = x.numel() / k;
  std::vector<double> v(static_cast<size_t>(rows * n));
  detail::EMap y(v.data(), rows, n);
  y = detail::ECMap(x.data().data(), rows, k) * detail::ECMap(w.data().data(), k, n);
  if (b.defined()) {
    require(b.numel() == n, Err::ShapeMismatch, "linear bias");
    Eigen::Map<const Eigen::RowVectorXd> bv(b.data().data(), n);
    y.rowwise() += bv;
  }
  Shape out = x.shape();
  out.back() = n;
  std::vector<Tensor> parents = b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
  return make_op(std::move(out), std::move(v), parents, [x, w, b, rows, k, n](detail::Node& self) mutable {
    detail::ECMap gy(self.grad.data(), rows, n);
    if (x.requires_grad())
      detail::EMap(x.grad().data(), rows, k) += gy * detail::ECMap(w.data().data(), k, n).transpose();
    if (w.requires_grad())
      detail::EMap(w.grad().data(), k, n) += detail::ECMap(x.data().data(), rows, k).transpose() * gy;
    if (b.defined() && b.requires_grad())
      Eigen::Map<Eigen::RowVectorXd>(b.grad().data(), n) += gy.colwise().sum();
  });
}

inline bool all_finite(const Tensor& t) {
  for (double v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace hgan
