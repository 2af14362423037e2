#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "hgan/tensor.hpp"

namespace hgan {

namespace detail {

// col is (C*kh*kw) x (Ho*Wo), row-major. Out-of-range source pixels read 0.
inline void im2col(const double* x, int64_t c_in, int64_t h, int64_t w, int64_t kh, int64_t kw,
                   int64_t stride, int64_t pad, int64_t ho, int64_t wo, double* col) {
  for (int64_t c = 0; c < c_in; ++c) {
    const double* xc = x + c * h * w;
    for (int64_t i = 0; i < kh; ++i) {
      for (int64_t j = 0; j < kw; ++j) {
        double* row = col + ((c * kh + i) * kw + j) * ho * wo;
        for (int64_t oh = 0; oh < ho; ++oh) {
          const int64_t ih = oh * stride - pad + i;
          if (ih < 0 || ih >= h) {
            std::fill_n(row + oh * wo, wo, 0.0);
            continue;
          }
          for (int64_t ow = 0; ow < wo; ++ow) {
            const int64_t iw = ow * stride - pad + j;
            row[oh * wo + ow] = (iw < 0 || iw >= w) ? 0.0 : xc[ih * w + iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add back into the image.
inline void col2im(const double* col, int64_t c_in, int64_t h, int64_t w, int64_t kh, int64_t kw,
                   int64_t stride, int64_t pad, int64_t ho, int64_t wo, double* x) {
  for (int64_t c = 0; c < c_in; ++c) {
    double* xc = x + c * h * w;
    for (int64_t i = 0; i < kh; ++i) {
      for (int64_t j = 0; j < kw; ++j) {
        const double* row = col + ((c * kh + i) * kw + j) * ho * wo;
        for (int64_t oh = 0; oh < ho; ++oh) {
          const int64_t ih = oh * stride - pad + i;
          if (ih < 0 || ih >= h) continue;
          for (int64_t ow = 0; ow < wo; ++ow) {
            const int64_t iw = ow * stride - pad + j;
            if (iw >= 0 && iw < w) xc[ih * w + iw] += row[oh * wo + ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

// x: (N,Cin,H,W), w: (Cout,Cin,kh,kw), optional b: (Cout). Zero padding.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride, int64_t pad) {
  require(x.ndim() == 4 && w.ndim() == 4, Err::ShapeError, "conv2d expects NCHW input and OIHW weight");
  const int64_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t c_out = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  require(w.dim(1) == c_in, Err::ShapeMismatch, "conv2d channel mismatch");
  const int64_t ho = (h + 2 * pad - kh) / stride + 1;
  const int64_t wo = (wd + 2 * pad - kw) / stride + 1;
  require(ho >= 1 && wo >= 1, Err::ShapeError, "conv2d output would be empty");

  const int64_t ckk = c_in * kh * kw;
  std::vector<double> col(static_cast<size_t>(ckk * ho * wo));
  std::vector<double> v(static_cast<size_t>(n * c_out * ho * wo));
  detail::ECMap wm(w.data().data(), c_out, ckk);
  for (int64_t i = 0; i < n; ++i) {
    detail::im2col(x.data().data() + i * c_in * h * wd, c_in, h, wd, kh, kw, stride, pad, ho, wo, col.data());
    detail::EMap y(v.data() + i * c_out * ho * wo, c_out, ho * wo);
    y = wm * detail::ECMap(col.data(), ckk, ho * wo);
    if (b.defined())
      for (int64_t c = 0; c < c_out; ++c) y.row(c).array() += b.data()[c];
  }

  std::vector<Tensor> parents = b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
  auto bw = [x, w, b, n, c_in, h, wd, c_out, kh, kw, stride, pad, ho, wo, ckk](detail::Node& self) mutable {
    std::vector<double> col(static_cast<size_t>(ckk * ho * wo));
    std::vector<double> dcol(static_cast<size_t>(ckk * ho * wo));
    for (int64_t i = 0; i < n; ++i) {
      detail::ECMap gy(self.grad.data() + i * c_out * ho * wo, c_out, ho * wo);
      if (w.requires_grad()) {
        detail::im2col(x.data().data() + i * c_in * h * wd, c_in, h, wd, kh, kw, stride, pad, ho, wo,
                       col.data());
        detail::EMap(w.grad().data(), c_out, ckk) += gy * detail::ECMap(col.data(), ckk, ho * wo).transpose();
      }
      if (x.requires_grad()) {
        detail::EMap(dcol.data(), ckk, ho * wo) =
            detail::ECMap(w.data().data(), c_out, ckk).transpose() * gy;
        detail::col2im(dcol.data(), c_in, h, wd, kh, kw, stride, pad, ho, wo,
                       x.grad().data() + i * c_in * h * wd);
      }
      if (b.defined() && b.requires_grad()) {
        auto& gb = b.grad();
        for (int64_t c = 0; c < c_out; ++c) gb[c] += gy.row(c).sum();
      }
    }
  };
  return make_op({n, c_out, ho, wo}, std::move(v), parents, std::move(bw));
}

// x: (N,Cin,H,W), w: (Cin,Cout,kh,kw). Output (H-1)*stride - 2*pad + kh + outpad.
inline Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride,
                               int64_t pad, int64_t outpad) {
  require(x.ndim() == 4 && w.ndim() == 4, Err::ShapeError, "conv_transpose2d expects NCHW/IOHW");
  const int64_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t c_out = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  require(w.dim(0) == c_in, Err::ShapeMismatch, "conv_transpose2d channel mismatch");
  const int64_t ho = (h - 1) * stride - 2 * pad + kh + outpad;
  const int64_t wo = (wd - 1) * stride - 2 * pad + kw + outpad;
  require(ho >= 1 && wo >= 1, Err::ShapeError, "conv_transpose2d output would be empty");

  const int64_t okk = c_out * kh * kw;
  std::vector<double> cols(static_cast<size_t>(okk * h * wd));
  std::vector<double> v(static_cast<size_t>(n * c_out * ho * wo), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    // cols = W^T X, then scatter into the upsampled grid.
    detail::EMap(cols.data(), okk, h * wd) =
        detail::ECMap(w.data().data(), c_in, okk).transpose() *
        detail::ECMap(x.data().data() + i * c_in * h * wd, c_in, h * wd);
    double* out = v.data() + i * c_out * ho * wo;
    for (int64_t c = 0; c < c_out; ++c)
      for (int64_t ki = 0; ki < kh; ++ki)
        for (int64_t kj = 0; kj < kw; ++kj) {
          const double* row = cols.data() + ((c * kh + ki) * kw + kj) * h * wd;
          for (int64_t ih = 0; ih < h; ++ih) {
            const int64_t oh = ih * stride - pad + ki;
            if (oh < 0 || oh >= ho) continue;
            for (int64_t iw = 0; iw < wd; ++iw) {
              const int64_t ow = iw * stride - pad + kj;
              if (ow >= 0 && ow < wo) out[(c * ho + oh) * wo + ow] += row[ih * wd + iw];
            }
          }
        }
    if (b.defined()) {
      double* out_b = v.data() + i * c_out * ho * wo;
      for (int64_t c = 0; c < c_out; ++c)
        for (int64_t p = 0; p < ho * wo; ++p) out_b[c * ho * wo + p] += b.data()[c];
    }
  }

  std::vector<Tensor> parents = b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
  auto bw = [x, w, b, n, c_in, h, wd, c_out, kh, kw, stride, pad, ho, wo, okk](detail::Node& self) mutable {
    std::vector<double> dcols(static_cast<size_t>(okk * h * wd));
    for (int64_t i = 0; i < n; ++i) {
      // Gather: mirror of the forward scatter.
      const double* gy = self.grad.data() + i * c_out * ho * wo;
      for (int64_t c = 0; c < c_out; ++c)
        for (int64_t ki = 0; ki < kh; ++ki)
          for (int64_t kj = 0; kj < kw; ++kj) {
            double* row = dcols.data() + ((c * kh + ki) * kw + kj) * h * wd;
            for (int64_t ih = 0; ih < h; ++ih) {
              const int64_t oh = ih * stride - pad + ki;
              for (int64_t iw = 0; iw < wd; ++iw) {
                const int64_t ow = iw * stride - pad + kj;
                row[ih * wd + iw] = (oh < 0 || oh >= ho || ow < 0 || ow >= wo)
                                        ? 0.0
                                        : gy[(c * ho + oh) * wo + ow];
              }
            }
          }
      if (x.requires_grad())
        detail::EMap(x.grad().data() + i * c_in * h * wd, c_in, h * wd) +=
            detail::ECMap(w.data().data(), c_in, okk) * detail::ECMap(dcols.data(), okk, h * wd);
      if (w.requires_grad())
        detail::EMap(w.grad().data(), c_in, okk) +=
            detail::ECMap(x.data().data() + i * c_in * h * wd, c_in, h * wd) *
            detail::ECMap(dcols.data(), okk, h * wd).transpose();
      if (b.defined() && b.requires_grad()) {
        auto& gb = b.grad();
        for (int64_t c = 0; c < c_out; ++c)
          for (int64_t p = 0; p < ho * wo; ++p) gb[c] += gy[c * ho * wo + p];
      }
    }
  };
  return make_op({n, c_out, ho, wo}, std::move(v), parents, std::move(bw));
}

inline Tensor reflect_pad2d(const Tensor& x, int64_t p) {
  require(x.ndim() == 4, Err::ShapeError, "reflect_pad2d expects NCHW");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(p < h && p < w, Err::ShapeError, "reflect_pad2d padding too large");
  const int64_t ho = h + 2 * p, wo = w + 2 * p;
  auto reflect = [](int64_t i, int64_t size) {
    if (i < 0) i = -i;
    if (i >= size) i = 2 * size - 2 - i;
    return i;
  };
  std::vector<double> v(static_cast<size_t>(n * c * ho * wo));
  const auto& xv = x.data();
  for (int64_t i = 0; i < n * c; ++i) {
    const double* src = xv.data() + i * h * w;
    double* dst = v.data() + i * ho * wo;
    for (int64_t oh = 0; oh < ho; ++oh) {
      const int64_t ih = reflect(oh - p, h);
      for (int64_t ow = 0; ow < wo; ++ow) dst[oh * wo + ow] = src[ih * w + reflect(ow - p, w)];
    }
  }
  return make_op({n, c, ho, wo}, std::move(v), {x},
                 [x, n, c, h, w, p, ho, wo, reflect](detail::Node& self) mutable {
                   if (!x.requires_grad()) return;
                   auto& g = x.grad();
                   for (int64_t i = 0; i < n * c; ++i) {
                     double* dst = g.data() + i * h * w;
                     const double* src = self.grad.data() + i * ho * wo;
                     for (int64_t oh = 0; oh < ho; ++oh) {
                       const int64_t ih = reflect(oh - p, h);
                       for (int64_t ow = 0; ow < wo; ++ow)
                         dst[ih * w + reflect(ow - p, w)] += src[oh * wo + ow];
                     }
                   }
                 });
}

inline Tensor maxpool2d(const Tensor& x, int64_t k = 2) {
  require(x.ndim() == 4, Err::ShapeError, "maxpool2d expects NCHW");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(h % k == 0 && w % k == 0, Err::ShapeError, "maxpool2d dims must divide by k");
  const int64_t ho = h / k, wo = w / k;
  std::vector<double> v(static_cast<size_t>(n * c * ho * wo));
  std::vector<int64_t> argmax(v.size());
  const auto& xv = x.data();
  for (int64_t i = 0; i < n * c; ++i) {
    const double* src = xv.data() + i * h * w;
    for (int64_t oh = 0; oh < ho; ++oh)
      for (int64_t ow = 0; ow < wo; ++ow) {
        int64_t best = (oh * k) * w + ow * k;
        double bestv = src[best];
        for (int64_t di = 0; di < k; ++di)
          for (int64_t dj = 0; dj < k; ++dj) {
            const int64_t idx = (oh * k + di) * w + ow * k + dj;
            if (src[idx] > bestv) {
              bestv = src[idx];
              best = idx;
            }
          }
        v[i * ho * wo + oh * wo + ow] = bestv;
        argmax[i * ho * wo + oh * wo + ow] = i * h * w + best;
      }
  }
  return make_op({n, c, ho, wo}, std::move(v), {x},
                 [x, argmax = std::move(argmax)](detail::Node& self) mutable {
                   if (!x.requires_grad()) return;
                   auto& g = x.grad();
                   for (size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[o];
                 });
}

inline Tensor global_avg_pool(const Tensor& x) {
  require(x.ndim() == 4, Err::ShapeError, "global_avg_pool expects NCHW");
  const int64_t n = x.dim(0), c = x.dim(1), m = x.dim(2) * x.dim(3);
  std::vector<double> v(static_cast<size_t>(n * c), 0.0);
  const auto& xv = x.data();
  for (int64_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < m; ++j) s += xv[i * m + j];
    v[i] = s / static_cast<double>(m);
  }
  return make_op({n, c}, std::move(v), {x}, [x, n, c, m](detail::Node& self) mutable {
    if (!x.requires_grad()) return;
    auto& g = x.grad();
    for (int64_t i = 0; i < n * c; ++i) {
      const double gv = self.grad[i] / static_cast<double>(m);
      for (int64_t j = 0; j < m; ++j) g[i * m + j] += gv;
    }
  });
}

// Per-sample, per-channel normalization with affine parameters.
inline Tensor instance_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                              double eps = 1e-5) {
  require(x.ndim() == 4, Err::ShapeError, "instance_norm2d expects NCHW");
  const int64_t n = x.dim(0), c = x.dim(1), m = x.dim(2) * x.dim(3);
  require(gamma.numel() == c && beta.numel() == c, Err::ShapeMismatch, "instance_norm2d affine dims");
  std::vector<double> v(x.data().size());
  const auto& xv = x.data();
  for (int64_t i = 0; i < n * c; ++i) {
    const double* src = xv.data() + i * m;
    double mean = 0.0;
    for (int64_t j = 0; j < m; ++j) mean += src[j];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (int64_t j = 0; j < m; ++j) var += (src[j] - mean) * (src[j] - mean);
    var /= static_cast<double>(m);
    const double istd = 1.0 / std::sqrt(var + eps);
    const double g = gamma.data()[i % c], b = beta.data()[i % c];
    double* dst = v.data() + i * m;
    for (int64_t j = 0; j < m; ++j) dst[j] = (src[j] - mean) * istd * g + b;
  }
  return make_op(x.shape(), std::move(v), {x, gamma, beta},
                 [x, gamma, beta, n, c, m, eps](detail::Node& self) mutable {
                   const auto& xv = x.data();
                   for (int64_t i = 0; i < n * c; ++i) {
                     const double* src = xv.data() + i * m;
                     const double* gy = self.grad.data() + i * m;
                     double mean = 0.0;
                     for (int64_t j = 0; j < m; ++j) mean += src[j];
                     mean /= static_cast<double>(m);
                     double var = 0.0;
                     for (int64_t j = 0; j < m; ++j) var += (src[j] - mean) * (src[j] - mean);
                     var /= static_cast<double>(m);
                     const double istd = 1.0 / std::sqrt(var + eps);
                     const double gscale = gamma.data()[i % c];
                     double sum_gy = 0.0, sum_gy_xhat = 0.0;
                     for (int64_t j = 0; j < m; ++j) {
                       sum_gy += gy[j];
                       sum_gy_xhat += gy[j] * (src[j] - mean) * istd;
                     }
                     if (gamma.requires_grad()) gamma.grad()[i % c] += sum_gy_xhat;
                     if (beta.requires_grad()) beta.grad()[i % c] += sum_gy;
                     if (x.requires_grad()) {
                       auto& gx = x.grad();
                       const double inv_m = 1.0 / static_cast<double>(m);
                       for (int64_t j = 0; j < m; ++j) {
                         const double xhat = (src[j] - mean) * istd;
                         gx[i * m + j] += gscale * istd *
                                          (gy[j] - sum_gy * inv_m - xhat * sum_gy_xhat * inv_m);
                       }
                     }
                   }
                 });
}

// Normalizes over the last dimension.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
  const int64_t d = x.dim(x.ndim() - 1);
  require(gamma.numel() == d && beta.numel() == d, Err::ShapeMismatch, "layer_norm affine dims");
  const int64_t rows = x.numel() / d;
  std::vector<double> v(x.data().size());
  const auto& xv = x.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * d;
    double mean = 0.0;
    for (int64_t j = 0; j < d; ++j) mean += src[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) var += (src[j] - mean) * (src[j] - mean);
    var /= static_cast<double>(d);
    const double istd = 1.0 / std::sqrt(var + eps);
    double* dst = v.data() + r * d;
    for (int64_t j = 0; j < d; ++j)
      dst[j] = (src[j] - mean) * istd * gamma.data()[j] + beta.data()[j];
  }
  return make_op(x.shape(), std::move(v), {x, gamma, beta},
                 [x, gamma, beta, rows, d, eps](detail::Node& self) mutable {
                   const auto& xv = x.data();
                   for (int64_t r = 0; r < rows; ++r) {
                     const double* src = xv.data() + r * d;
                     const double* gy = self.grad.data() + r * d;
                     double mean = 0.0;
                     for (int64_t j = 0; j < d; ++j) mean += src[j];
                     mean /= static_cast<double>(d);
                     double var = 0.0;
                     for (int64_t j = 0; j < d; ++j) var += (src[j] - mean) * (src[j] - mean);
                     var /= static_cast<double>(d);
                     const double istd = 1.0 / std::sqrt(var + eps);
                     double sum_t = 0.0, sum_t_xhat = 0.0;
                     for (int64_t j = 0; j < d; ++j) {
                       const double t = gy[j] * gamma.data()[j];
                       const double xhat = (src[j] - mean) * istd;
                       sum_t += t;
                       sum_t_xhat += t * xhat;
                       if (gamma.requires_grad()) gamma.grad()[j] += gy[j] * xhat;
                       if (beta.requires_grad()) beta.grad()[j] += gy[j];
                     }
                     if (x.requires_grad()) {
                       auto& gx = x.grad();
                       const double inv_d = 1.0 / static_cast<double>(d);
                       for (int64_t j = 0; j < d; ++j) {
                         const double xhat = (src[j] - mean) * istd;
                         const double t = gy[j] * gamma.data()[j];
                         gx[r * d + j] += istd * (t - sum_t * inv_d - xhat * sum_t_xhat * inv_d);
                       }
                     }
                   }
                 });
}

inline Tensor softmax_last(const Tensor& x) {
  const int64_t d = x.dim(x.ndim() - 1);
  const int64_t rows = x.numel() / d;
  std::vector<double> v(x.data().size());
  const auto& xv = x.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * d;
    double mx = src[0];
    for (int64_t j = 1; j < d; ++j) mx = std::max(mx, src[j]);
    double z = 0.0;
    for (int64_t j = 0; j < d; ++j) z += std::exp(src[j] - mx);
    double* dst = v.data() + r * d;
    for (int64_t j = 0; j < d; ++j) dst[j] = std::exp(src[j] - mx) / z;
  }
  return make_op(x.shape(), std::move(v), {x}, [x, rows, d](detail::Node& self) mutable {
    if (!x.requires_grad()) return;
    auto& g = x.grad();
    for (int64_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * d;
      const double* gy = self.grad.data() + r * d;
      double dot = 0.0;
      for (int64_t j = 0; j < d; ++j) dot += gy[j] * y[j];
      for (int64_t j = 0; j < d; ++j) g[r * d + j] += y[j] * (gy[j] - dot);
    }
  });
}

// Mean softmax cross-entropy over the batch; labels index the last dim.
inline Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int64_t>& labels) {
  require(logits.ndim() == 2, Err::ShapeError, "cross_entropy_logits expects (N,C)");
  const int64_t n = logits.dim(0), c = logits.dim(1);
  require(static_cast<int64_t>(labels.size()) == n, Err::ShapeMismatch, "labels size");
  const auto& xv = logits.data();
  std::vector<double> probs(xv.size());
  double loss = 0.0;
  for (int64_t r = 0; r < n; ++r) {
    const double* src = xv.data() + r * c;
    double mx = src[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, src[j]);
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) z += std::exp(src[j] - mx);
    for (int64_t j = 0; j < c; ++j) probs[r * c + j] = std::exp(src[j] - mx) / z;
    loss -= std::log(std::max(probs[r * c + labels[r]], 1e-300));
  }
  loss /= static_cast<double>(n);
  return make_op({1}, {loss}, {logits},
                 [logits, labels, probs = std::move(probs), n, c](detail::Node& self) mutable {
                   if (!logits.requires_grad()) return;
                   auto& g = logits.grad();
                   const double gout = self.grad[0] / static_cast<double>(n);
                   for (int64_t r = 0; r < n; ++r)
                     for (int64_t j = 0; j < c; ++j)
                       g[r * c + j] += gout * (probs[r * c + j] - (j == labels[r] ? 1.0 : 0.0));
                 });
}

// (N,T,D) -> (N,D)
inline Tensor mean_tokens(const Tensor& x) {
  require(x.ndim() == 3, Err::ShapeError, "mean_tokens expects (N,T,D)");
  const int64_t n = x.dim(0), t = x.dim(1), d = x.dim(2);
  std::vector<double> v(static_cast<size_t>(n * d), 0.0);
  const auto& xv = x.data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < t; ++j)
      for (int64_t k = 0; k < d; ++k) v[i * d + k] += xv[(i * t + j) * d + k];
  for (auto& e : v) e /= static_cast<double>(t);
  return make_op({n, d}, std::move(v), {x}, [x, n, t, d](detail::Node& self) mutable {
    if (!x.requires_grad()) return;
    auto& g = x.grad();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < t; ++j)
        for (int64_t k = 0; k < d; ++k)
          g[(i * t + j) * d + k] += self.grad[i * d + k] / static_cast<double>(t);
  });
}

}  // namespace hgan
