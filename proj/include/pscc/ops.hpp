#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "pscc/autograd.hpp"
#include "pscc/kernels.hpp"

// Differentiable op library. Tensors are NHWC; folded attention operands are
// rank-3 (batch, rows, cols). Backward closures accumulate into parent grads.
// Scatter-style backwards (conv input, bilinear) parallelize across batch
// only, keeping every output element single-writer.

namespace pscc::ops {

using pscc::Tensor;
using pscc::Var;

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "add");
  Tensor<T> out(a->value.dims());
  kern::add(out.numel(), a->value.data(), b->value.data(), out.data());
  return make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& n) {
    if (a->requires_grad) {
      a->ensure_grad();
      kern::axpy(n.grad.numel(), T(1), n.grad.data(), a->grad.data());
    }
    if (b->requires_grad) {
      b->ensure_grad();
      kern::axpy(n.grad.numel(), T(1), n.grad.data(), b->grad.data());
    }
  });
}

template <typename T>
Var<T> add_n(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("add_n: empty input");
  Tensor<T> out = xs[0]->value.clone();
  for (size_t i = 1; i < xs.size(); ++i) {
    check_same_shape(out, xs[i]->value, "add_n");
    kern::axpy(out.numel(), T(1), xs[i]->value.data(), out.data());
  }
  std::vector<Var<T>> parents(xs.begin(), xs.end());
  return make_op<T>(std::move(out), parents, [xs](Node<T>& n) {
    for (const auto& x : xs) {
      if (!x->requires_grad) continue;
      x->ensure_grad();
      kern::axpy(n.grad.numel(), T(1), n.grad.data(), x->grad.data());
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "mul");
  Tensor<T> out(a->value.dims());
  kern::mul(out.numel(), a->value.data(), b->value.data(), out.data());
  return make_op<T>(std::move(out), {a, b}, [a, b](Node<T>& n) {
    int64_t m = n.grad.numel();
    if (a->requires_grad) {
      a->ensure_grad();
      for (int64_t i = 0; i < m; ++i) a->grad[i] += n.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int64_t i = 0; i < m; ++i) b->grad[i] += n.grad[i] * a->value[i];
    }
  });
}

template <typename T>
Var<T> scale_const(const Var<T>& x, T c) {
  Tensor<T> out(x->value.dims());
  kern::scale(out.numel(), c, x->value.data(), out.data());
  return make_op<T>(std::move(out), {x}, [x, c](Node<T>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    kern::axpy(n.grad.numel(), c, n.grad.data(), x->grad.data());
  });
}

// y = alpha * x with a learnable scalar alpha (numel == 1).
template <typename T>
Var<T> scale_by(const Var<T>& alpha, const Var<T>& x) {
  if (alpha->value.numel() != 1) throw ShapeError("scale_by: alpha must be scalar");
  Tensor<T> out(x->value.dims());
  kern::scale(out.numel(), alpha->value[0], x->value.data(), out.data());
  return make_op<T>(std::move(out), {alpha, x}, [alpha, x](Node<T>& n) {
    if (alpha->requires_grad) {
      alpha->ensure_grad();
      alpha->grad[0] += kern::dot(n.grad.numel(), n.grad.data(), x->value.data());
    }
    if (x->requires_grad) {
      x->ensure_grad();
      kern::axpy(n.grad.numel(), alpha->value[0], n.grad.data(), x->grad.data());
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x->value.dims());
  kern::relu(out.numel(), x->value.data(), out.data());
  return make_op<T>(std::move(out), {x}, [x](Node<T>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    kern::relu_backward(n.grad.numel(), x->value.data(), n.grad.data(), x->grad.data());
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x->value.dims());
  kern::sigmoid(out.numel(), x->value.data(), out.data());
  return make_op<T>(std::move(out), {x}, [x](Node<T>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    int64_t m = n.grad.numel();
    for (int64_t i = 0; i < m; ++i) {
      T y = n.value[i];
      x->grad[i] += n.grad[i] * y * (T(1) - y);
    }
  });
}

// Broadcast add of a length-C bias over the last dimension.
template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& b) {
  int64_t c = x->value.dim(x->value.rank() - 1);
  if (b->value.numel() != c) throw ShapeError("add_bias: bias length mismatch");
  Tensor<T> out = x->value.clone();
  int64_t rows = out.numel() / c;
  for (int64_t r = 0; r < rows; ++r)
    kern::axpy(c, T(1), b->value.data(), out.data() + r * c);
  return make_op<T>(std::move(out), {x, b}, [x, b, rows, c](Node<T>& n) {
    if (x->requires_grad) {
      x->ensure_grad();
      kern::axpy(n.grad.numel(), T(1), n.grad.data(), x->grad.data());
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        kern::axpy(c, T(1), n.grad.data() + r * c, b->grad.data());
    }
  });
}

// x: N x H x W x C, m: N x H x W x 1 broadcast over channels.
template <typename T>
Var<T> mul_mask(const Var<T>& x, const Var<T>& m) {
  const auto& xd = x->value.dims();
  const auto& md = m->value.dims();
  if (xd.size() != 4 || md.size() != 4 || md[3] != 1 || xd[0] != md[0] || xd[1] != md[1] ||
      xd[2] != md[2])
    throw ShapeError("mul_mask: expected NHWC and NHW1, got " + x->value.shape_str() + " and " +
                     m->value.shape_str());
  int64_t pixels = xd[0] * xd[1] * xd[2], c = xd[3];
  Tensor<T> out(xd);
  for (int64_t p = 0; p < pixels; ++p)
    kern::scale(c, m->value[p], x->value.data() + p * c, out.data() + p * c);
  return make_op<T>(std::move(out), {x, m}, [x, m, pixels, c](Node<T>& n) {
    if (x->requires_grad) {
      x->ensure_grad();
      for (int64_t p = 0; p < pixels; ++p)
        kern::axpy(c, m->value[p], n.grad.data() + p * c, x->grad.data() + p * c);
    }
    if (m->requires_grad) {
      m->ensure_grad();
      for (int64_t p = 0; p < pixels; ++p)
        m->grad[p] += kern::dot(c, n.grad.data() + p * c, x->value.data() + p * c);
    }
  });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
Var<T> mean_all(const Var<T>& x) {
  T inv = T(1) / static_cast<T>(x->value.numel());
  Tensor<T> out = Tensor<T>::scalar(kern::reduce_sum(x->value.numel(), x->value.data()) * inv);
  return make_op<T>(std::move(out), {x}, [x, inv](Node<T>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    T g = n.grad[0] * inv;
    for (int64_t i = 0; i < x->grad.numel(); ++i) x->grad[i] += g;
  });
}

// N x H x W x C -> N x C
template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const auto& d = x->value.dims();
  if (d.size() != 4) throw ShapeError("global_avg_pool: expected NHWC");
  int64_t nb = d[0], hw = d[1] * d[2], c = d[3];
  Tensor<T> out({nb, c});
  T inv = T(1) / static_cast<T>(hw);
  for (int64_t n = 0; n < nb; ++n) {
    const T* src = x->value.data() + n * hw * c;
    T* dst = out.data() + n * c;
    for (int64_t p = 0; p < hw; ++p) kern::axpy(c, T(1), src + p * c, dst);
    kern::scale(c, inv, dst, dst);
  }
  return make_op<T>(std::move(out), {x}, [x, nb, hw, c, inv](Node<T>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (int64_t b = 0; b < nb; ++b) {
      const T* g = n.grad.data() + b * c;
      T* dst = x->grad.data() + b * hw * c;
      for (int64_t p = 0; p < hw; ++p) kern::axpy(c, inv, g, dst + p * c);
    }
  });
}

// ---------------------------------------------------------------------------
// matrix products (rank-2, and rank-3 batched with shared or per-batch sides)
// ---------------------------------------------------------------------------

// x: N x K, w: K x M  ->  N x M
template <typename T>
Var<T> matmul(const Var<T>& x, const Var<T>& w) {
  const auto& xd = x->value.dims();
  const auto& wd = w->value.dims();
  if (xd.size() != 2 || wd.size() != 2 || xd[1] != wd[0]) throw ShapeError("matmul: bad shapes");
  int64_t m = xd[0], k = xd[1], nn = wd[1];
  Tensor<T> out({m, nn});
  kern::gemm_nn(m, nn, k, x->value.data(), w->value.data(), out.data(), false);
  return make_op<T>(std::move(out), {x, w}, [x, w, m, k, nn](Node<T>& n) {
    if (x->requires_grad) {
      x->ensure_grad();
      kern::gemm_nt(m, k, nn, n.grad.data(), w->value.data(), x->grad.data(), true);
    }
    if (w->requires_grad) {
      w->ensure_grad();
      kern::gemm_tn(m, nn, k, x->value.data(), n.grad.data(), w->grad.data(), true);
    }
  });
}

// Per-row linear map shared across the batch: x (B,M,K) * w (K,D) -> (B,M,D).
template <typename T>
Var<T> linear_rows(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const auto& xd = x->value.dims();
  const auto& wd = w->value.dims();
  if (xd.size() != 3 || wd.size() != 2 || xd[2] != wd[0])
    throw ShapeError("linear_rows: bad shapes " + x->value.shape_str() + " * " +
                     w->value.shape_str());
  int64_t nb = xd[0], m = xd[1], k = xd[2], d = wd[1];
  if (b && b->value.numel() != d) throw ShapeError("linear_rows: bias mismatch");
  Tensor<T> out({nb, m, d});
  kern::gemm_nn(nb * m, d, k, x->value.data(), w->value.data(), out.data(), false);
  if (b) {
    for (int64_t r = 0; r < nb * m; ++r) kern::axpy(d, T(1), b->value.data(), out.data() + r * d);
  }
  std::vector<Var<T>> parents = b ? std::vector<Var<T>>{x, w, b} : std::vector<Var<T>>{x, w};
  return make_op<T>(std::move(out), parents, [x, w, b, nb, m, k, d](Node<T>& n) {
    if (x->requires_grad) {
      x->ensure_grad();
      kern::gemm_nt(nb * m, k, d, n.grad.data(), w->value.data(), x->grad.data(), true);
    }
    if (w->requires_grad) {
      w->ensure_grad();
      kern::gemm_tn(nb * m, d, k, x->value.data(), n.grad.data(), w->grad.data(), true);
    }
    if (b && b->requires_grad) {
      b->ensure_grad();
      for (int64_t r = 0; r < nb * m; ++r)
        kern::axpy(d, T(1), n.grad.data() + r * d, b->grad.data());
    }
  });
}

// Batched score product: a (B,M,K) x b (B,M,K) -> (B,M,M) = a[b] * b[b]^T.
template <typename T>
Var<T> bmm_nt(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "bmm_nt");
  const auto& d = a->value.dims();
  if (d.size() != 3) throw ShapeError("bmm_nt: expected rank-3");
  int64_t nb = d[0], m = d[1], k = d[2];
  Tensor<T> out({nb, m, m});
  for (int64_t i = 0; i < nb; ++i)
    kern::gemm_nt(m, m, k, a->value.data() + i * m * k, b->value.data() + i * m * k,
                  out.data() + i * m * m, false);
  return make_op<T>(std::move(out), {a, b}, [a, b, nb, m, k](Node<T>& n) {
    for (int64_t i = 0; i < nb; ++i) {
      const T* g = n.grad.data() + i * m * m;
      if (a->requires_grad) {
        a->ensure_grad();
        kern::gemm_nn(m, k, m, g, b->value.data() + i * m * k, a->grad.data() + i * m * k, true);
      }
      if (b->requires_grad) {
        b->ensure_grad();
        kern::gemm_tn(m, k, m, g, a->value.data() + i * m * k, b->grad.data() + i * m * k, true);
      }
    }
  });
}

// Channel score product: a (B,M,K) x b (B,M,K) -> (B,K,K) = a[b]^T * b[b].
template <typename T>
Var<T> bmm_tn(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "bmm_tn");
  const auto& d = a->value.dims();
  if (d.size() != 3) throw ShapeError("bmm_tn: expected rank-3");
  int64_t nb = d[0], m = d[1], k = d[2];
  Tensor<T> out({nb, k, k});
  for (int64_t i = 0; i < nb; ++i)
    kern::gemm_tn(m, k, k, a->value.data() + i * m * k, b->value.data() + i * m * k,
                  out.data() + i * k * k, false);
  return make_op<T>(std::move(out), {a, b}, [a, b, nb, m, k](Node<T>& n) {
    for (int64_t i = 0; i < nb; ++i) {
      const T* g = n.grad.data() + i * k * k;  // dS, K x K
      if (a->requires_grad) {
        a->ensure_grad();
        // da = b * dS^T: (M,K)x(K,K) -> use nt with dS as row-major (K,K)
        kern::gemm_nt(m, k, k, b->value.data() + i * m * k, g, a->grad.data() + i * m * k, true);
      }
      if (b->requires_grad) {
        b->ensure_grad();
        kern::gemm_nn(m, k, k, a->value.data() + i * m * k, g, b->grad.data() + i * m * k, true);
      }
    }
  });
}

// a (B,M,P) x b (B,P,K) -> (B,M,K)
template <typename T>
Var<T> bmm_nn(const Var<T>& a, const Var<T>& b) {
  const auto& ad = a->value.dims();
  const auto& bd = b->value.dims();
  if (ad.size() != 3 || bd.size() != 3 || ad[0] != bd[0] || ad[2] != bd[1])
    throw ShapeError("bmm_nn: bad shapes " + a->value.shape_str() + " x " + b->value.shape_str());
  int64_t nb = ad[0], m = ad[1], p = ad[2], k = bd[2];
  Tensor<T> out({nb, m, k});
  for (int64_t i = 0; i < nb; ++i)
    kern::gemm_nn(m, k, p, a->value.data() + i * m * p, b->value.data() + i * p * k,
                  out.data() + i * m * k, false);
  return make_op<T>(std::move(out), {a, b}, [a, b, nb, m, p, k](Node<T>& n) {
    for (int64_t i = 0; i < nb; ++i) {
      const T* g = n.grad.data() + i * m * k;
      if (a->requires_grad) {
        a->ensure_grad();
        kern::gemm_nt(m, p, k, g, b->value.data() + i * p * k, a->grad.data() + i * m * p, true);
      }
      if (b->requires_grad) {
        b->ensure_grad();
        kern::gemm_tn(m, k, p, a->value.data() + i * m * p, g, b->grad.data() + i * p * k, true);
      }
    }
  });
}

// Row-wise softmax over the last dimension (rank 2 or 3).
template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
  const auto& d = x->value.dims();
  if (d.size() < 2) throw ShapeError("softmax_rows: rank must be >= 2");
  int64_t cols = d.back();
  int64_t rows = x->value.numel() / cols;
  Tensor<T> out(d);
  kern::softmax_rows(rows, cols, x->value.data(), out.data());
  return make_op<T>(std::move(out), {x}, [x, rows, cols](Node<T>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
#pragma omp parallel for schedule(static) if (rows > 8)
    for (int64_t r = 0; r < rows; ++r) {
      const T* y = n.value.data() + r * cols;
      const T* gy = n.grad.data() + r * cols;
      T* gx = x->grad.data() + r * cols;
      T dotv = kern::dot(cols, gy, y);
      for (int64_t j = 0; j < cols; ++j) gx[j] += y[j] * (gy[j] - dotv);
    }
  });
}

// ---------------------------------------------------------------------------
// convolution (NHWC, weights (kh*kw*Cin) x Cout)
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void im2col_rows(const T* img, int64_t h, int64_t w, int64_t cin, int64_t kh, int64_t kw,
                 int64_t stride, int64_t pad, int64_t wo, int64_t row0, int64_t nrows, T* col) {
  int64_t kcols = kh * kw * cin;
#pragma omp parallel for schedule(static) if (nrows * kcols > 1 << 15)
  for (int64_t r = 0; r < nrows; ++r) {
    int64_t idx = row0 + r;
    int64_t oy = idx / wo, ox = idx % wo;
    T* dst = col + r * kcols;
    for (int64_t ky = 0; ky < kh; ++ky) {
      int64_t iy = oy * stride - pad + ky;
      for (int64_t kx = 0; kx < kw; ++kx) {
        int64_t ix = ox * stride - pad + kx;
        T* d = dst + (ky * kw + kx) * cin;
        if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
          for (int64_t c = 0; c < cin; ++c) d[c] = T(0);
        } else {
          const T* s = img + (iy * w + ix) * cin;
          for (int64_t c = 0; c < cin; ++c) d[c] = s[c];
        }
      }
    }
  }
}

template <typename T>
void col2im_rows(const T* col, int64_t h, int64_t w, int64_t cin, int64_t kh, int64_t kw,
                 int64_t stride, int64_t pad, int64_t wo, int64_t row0, int64_t nrows, T* img) {
  int64_t kcols = kh * kw * cin;
  for (int64_t r = 0; r < nrows; ++r) {
    int64_t idx = row0 + r;
    int64_t oy = idx / wo, ox = idx % wo;
    const T* src = col + r * kcols;
    for (int64_t ky = 0; ky < kh; ++ky) {
      int64_t iy = oy * stride - pad + ky;
      if (iy < 0 || iy >= h) continue;
      for (int64_t kx = 0; kx < kw; ++kx) {
        int64_t ix = ox * stride - pad + kx;
        if (ix < 0 || ix >= w) continue;
        kern::axpy(cin, T(1), src + (ky * kw + kx) * cin, img + (iy * w + ix) * cin);
      }
    }
  }
}

inline int64_t conv_chunk_rows(int64_t kcols) {
  int64_t target = (1 << 19) / std::max<int64_t>(1, kcols);  // ~0.5M elements per chunk
  return std::max<int64_t>(64, target);
}

}  // namespace detail

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t kh, int64_t kw,
              int64_t stride, int64_t pad) {
  const auto& xd = x->value.dims();
  if (xd.size() != 4) throw ShapeError("conv2d: input must be NHWC");
  int64_t nb = xd[0], h = xd[1], wd = xd[2], cin = xd[3];
  int64_t kcols = kh * kw * cin;
  if (w->value.rank() != 2 || w->value.dim(0) != kcols)
    throw ShapeError("conv2d: weight shape mismatch, expected " + std::to_string(kcols) +
                     " rows, got " + w->value.shape_str());
  int64_t cout = w->value.dim(1);
  if (b && b->value.numel() != cout) throw ShapeError("conv2d: bias mismatch");
  int64_t ho = (h + 2 * pad - kh) / stride + 1;
  int64_t wo = (wd + 2 * pad - kw) / stride + 1;
  if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: empty output");

  Tensor<T> out({nb, ho, wo, cout});
  int64_t chunk = detail::conv_chunk_rows(kcols);
  Tensor<T> col({std::min(chunk, ho * wo), kcols});
  for (int64_t n = 0; n < nb; ++n) {
    const T* img = x->value.data() + n * h * wd * cin;
    for (int64_t r0 = 0; r0 < ho * wo; r0 += chunk) {
      int64_t nr = std::min(chunk, ho * wo - r0);
      detail::im2col_rows(img, h, wd, cin, kh, kw, stride, pad, wo, r0, nr, col.data());
      kern::gemm_nn(nr, cout, kcols, col.data(), w->value.data(),
                    out.data() + (n * ho * wo + r0) * cout, false);
    }
  }
  if (b) {
    int64_t rows = nb * ho * wo;
    for (int64_t r = 0; r < rows; ++r)
      kern::axpy(cout, T(1), b->value.data(), out.data() + r * cout);
  }

  auto backfn = [x, w, b, nb, h, wd, cin, kh, kw, stride, pad, ho, wo, cout,
                 kcols](Node<T>& n) {
    int64_t chunk2 = detail::conv_chunk_rows(kcols);
    Tensor<T> colbuf({std::min(chunk2, ho * wo), kcols});
    if (w->requires_grad) w->ensure_grad();
    if (x->requires_grad) x->ensure_grad();
    for (int64_t i = 0; i < nb; ++i) {
      const T* img = x->value.data() + i * h * wd * cin;
      for (int64_t r0 = 0; r0 < ho * wo; r0 += chunk2) {
        int64_t nr = std::min(chunk2, ho * wo - r0);
        const T* gy = n.grad.data() + (i * ho * wo + r0) * cout;
        if (w->requires_grad) {
          detail::im2col_rows(img, h, wd, cin, kh, kw, stride, pad, wo, r0, nr, colbuf.data());
          kern::gemm_tn(nr, cout, kcols, colbuf.data(), gy, w->grad.data(), true);
        }
        if (x->requires_grad) {
          kern::gemm_nt(nr, kcols, cout, gy, w->value.data(), colbuf.data(), false);
          detail::col2im_rows(colbuf.data(), h, wd, cin, kh, kw, stride, pad, wo, r0, nr,
                              x->grad.data() + i * h * wd * cin);
        }
      }
    }
    if (b && b->requires_grad) {
      b->ensure_grad();
      int64_t rows = nb * ho * wo;
      for (int64_t r = 0; r < rows; ++r)
        kern::axpy(cout, T(1), n.grad.data() + r * cout, b->grad.data());
    }
  };
  std::vector<Var<T>> parents = b ? std::vector<Var<T>>{x, w, b} : std::vector<Var<T>>{x, w};
  return make_op<T>(std::move(out), parents, backfn);
}

// ---------------------------------------------------------------------------
// group normalization over (H,W,Cg) per image and group
// ---------------------------------------------------------------------------

template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, int64_t groups,
                  T eps = T(1e-5)) {
  const auto& d = x->value.dims();
  if (d.size() != 4) throw ShapeError("group_norm: input must be NHWC");
  int64_t nb = d[0], hw = d[1] * d[2], c = d[3];
  if (c % groups != 0) throw ShapeError("group_norm: channels not divisible by groups");
  if (gamma->value.numel() != c || beta->value.numel() != c)
    throw ShapeError("group_norm: gamma/beta mismatch");
  int64_t cg = c / groups;
  int64_t gsize = hw * cg;

  Tensor<T> out(d);
  auto xhat = std::make_shared<Tensor<T>>(d);
  auto invstd = std::make_shared<Tensor<T>>(std::vector<int64_t>{nb, groups});

#pragma omp parallel for schedule(static) collapse(2) if (nb * groups > 1)
  for (int64_t n = 0; n < nb; ++n) {
    for (int64_t g = 0; g < groups; ++g) {
      const T* xp = x->value.data() + n * hw * c;
      T mean = T(0);
      for (int64_t p = 0; p < hw; ++p) {
        const T* row = xp + p * c + g * cg;
        for (int64_t j = 0; j < cg; ++j) mean += row[j];
      }
      mean /= static_cast<T>(gsize);
      T var = T(0);
      for (int64_t p = 0; p < hw; ++p) {
        const T* row = xp + p * c + g * cg;
        for (int64_t j = 0; j < cg; ++j) {
          T dd = row[j] - mean;
          var += dd * dd;
        }
      }
      var /= static_cast<T>(gsize);
      T is = T(1) / std::sqrt(var + eps);
      invstd->at2(n, g) = is;
      T* xh = xhat->data() + n * hw * c;
      T* op = out.data() + n * hw * c;
      for (int64_t p = 0; p < hw; ++p) {
        int64_t off = p * c + g * cg;
        for (int64_t j = 0; j < cg; ++j) {
          T v = (xp[off + j] - mean) * is;
          xh[off + j] = v;
          op[off + j] = gamma->value[g * cg + j] * v + beta->value[g * cg + j];
        }
      }
    }
  }

  return make_op<T>(std::move(out), {x, gamma, beta},
                    [x, gamma, beta, xhat, invstd, nb, hw, c, cg, groups](Node<T>& n) {
    if (gamma->requires_grad) gamma->ensure_grad();
    if (beta->requires_grad) beta->ensure_grad();
    if (x->requires_grad) x->ensure_grad();
    int64_t gsize = hw * cg;
    // dgamma/dbeta: serial over images for deterministic accumulation
    if (gamma->requires_grad || beta->requires_grad) {
      for (int64_t b = 0; b < nb; ++b) {
        const T* gy = n.grad.data() + b * hw * c;
        const T* xh = xhat->data() + b * hw * c;
        for (int64_t p = 0; p < hw; ++p) {
          for (int64_t j = 0; j < c; ++j) {
            if (gamma->requires_grad) gamma->grad[j] += gy[p * c + j] * xh[p * c + j];
            if (beta->requires_grad) beta->grad[j] += gy[p * c + j];
          }
        }
      }
    }
    if (!x->requires_grad) return;
#pragma omp parallel for schedule(static) collapse(2) if (nb * groups > 1)
    for (int64_t b = 0; b < nb; ++b) {
      for (int64_t g = 0; g < groups; ++g) {
        const T* gy = n.grad.data() + b * hw * c;
        const T* xh = xhat->data() + b * hw * c;
        T is = invstd->at2(b, g);
        T sum_g = T(0), sum_gx = T(0);
        for (int64_t p = 0; p < hw; ++p) {
          int64_t off = p * c + g * cg;
          for (int64_t j = 0; j < cg; ++j) {
            T gh = gy[off + j] * gamma->value[g * cg + j];
            sum_g += gh;
            sum_gx += gh * xh[off + j];
          }
        }
        T mg = sum_g / static_cast<T>(gsize);
        T mgx = sum_gx / static_cast<T>(gsize);
        T* gx = x->grad.data() + b * hw * c;
        for (int64_t p = 0; p < hw; ++p) {
          int64_t off = p * c + g * cg;
          for (int64_t j = 0; j < cg; ++j) {
            T gh = gy[off + j] * gamma->value[g * cg + j];
            gx[off + j] += is * (gh - mg - xh[off + j] * mgx);
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// bilinear resize with half-pixel centers
// ---------------------------------------------------------------------------

template <typename T>
Var<T> bilinear_resize(const Var<T>& x, int64_t ho, int64_t wo) {
  const auto& d = x->value.dims();
  if (d.size() != 4) throw ShapeError("bilinear_resize: input must be NHWC");
  int64_t nb = d[0], h = d[1], w = d[2], c = d[3];
  if (h == ho && w == wo) {
    // identity at equal size
    Tensor<T> out = x->value.clone();
    return make_op<T>(std::move(out), {x}, [x](Node<T>& n) {
      if (!x->requires_grad) return;
      x->ensure_grad();
      kern::axpy(n.grad.numel(), T(1), n.grad.data(), x->grad.data());
    });
  }
  double sy = static_cast<double>(h) / static_cast<double>(ho);
  double sx = static_cast<double>(w) / static_cast<double>(wo);
  Tensor<T> out({nb, ho, wo, c});

  auto tap = [](double s, int64_t o, int64_t size, int64_t& i0, int64_t& i1, T& f) {
    double src = (static_cast<double>(o) + 0.5) * s - 0.5;
    if (src < 0) src = 0;
    double mx = static_cast<double>(size - 1);
    if (src > mx) src = mx;
    i0 = static_cast<int64_t>(src);
    if (i0 > size - 1) i0 = size - 1;
    i1 = std::min<int64_t>(i0 + 1, size - 1);
    f = static_cast<T>(src - static_cast<double>(i0));
  };

#pragma omp parallel for schedule(static) collapse(2) if (nb * ho > 8)
  for (int64_t n = 0; n < nb; ++n) {
    for (int64_t oy = 0; oy < ho; ++oy) {
      int64_t y0, y1;
      T fy;
      tap(sy, oy, h, y0, y1, fy);
      const T* img = x->value.data() + n * h * w * c;
      T* dst = out.data() + ((n * ho + oy) * wo) * c;
      for (int64_t ox = 0; ox < wo; ++ox) {
        int64_t x0, x1;
        T fx;
        tap(sx, ox, w, x0, x1, fx);
        const T* p00 = img + (y0 * w + x0) * c;
        const T* p01 = img + (y0 * w + x1) * c;
        const T* p10 = img + (y1 * w + x0) * c;
        const T* p11 = img + (y1 * w + x1) * c;
        T w00 = (T(1) - fy) * (T(1) - fx), w01 = (T(1) - fy) * fx;
        T w10 = fy * (T(1) - fx), w11 = fy * fx;
        T* o = dst + ox * c;
        for (int64_t j = 0; j < c; ++j)
          o[j] = w00 * p00[j] + w01 * p01[j] + w10 * p10[j] + w11 * p11[j];
      }
    }
  }

  return make_op<T>(std::move(out), {x}, [x, nb, h, w, c, ho, wo, sy, sx, tap](Node<T>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    // scatter-add; parallel across batch only (single writer per image)
#pragma omp parallel for schedule(static) if (nb > 1)
    for (int64_t b = 0; b < nb; ++b) {
      T* gx = x->grad.data() + b * h * w * c;
      for (int64_t oy = 0; oy < ho; ++oy) {
        int64_t y0, y1;
        T fy;
        tap(sy, oy, h, y0, y1, fy);
        const T* g = n.grad.data() + ((b * ho + oy) * wo) * c;
        for (int64_t ox = 0; ox < wo; ++ox) {
          int64_t x0, x1;
          T fx;
          tap(sx, ox, w, x0, x1, fx);
          const T* gp = g + ox * c;
          kern::axpy(c, (T(1) - fy) * (T(1) - fx), gp, gx + (y0 * w + x0) * c);
          kern::axpy(c, (T(1) - fy) * fx, gp, gx + (y0 * w + x1) * c);
          kern::axpy(c, fy * (T(1) - fx), gp, gx + (y1 * w + x0) * c);
          kern::axpy(c, fy * fx, gp, gx + (y1 * w + x1) * c);
        }
      }
    }
  });
}

// Spatial crop of NHWC (used to drop right/bottom padding).
template <typename T>
Var<T> crop_spatial(const Var<T>& x, int64_t h0, int64_t w0, int64_t nh, int64_t nw) {
  const auto& d = x->value.dims();
  if (d.size() != 4) throw ShapeError("crop_spatial: input must be NHWC");
  int64_t nb = d[0], h = d[1], w = d[2], c = d[3];
  if (h0 + nh > h || w0 + nw > w) throw ShapeError("crop_spatial: region out of range");
  Tensor<T> out({nb, nh, nw, c});
  for (int64_t n = 0; n < nb; ++n)
    for (int64_t y = 0; y < nh; ++y)
      std::memcpy(out.data() + ((n * nh + y) * nw) * c,
                  x->value.data() + ((n * h + (h0 + y)) * w + w0) * c,
                  sizeof(T) * static_cast<size_t>(nw * c));
  return make_op<T>(std::move(out), {x}, [x, nb, h, w, c, h0, w0, nh, nw](Node<T>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (int64_t b = 0; b < nb; ++b)
      for (int64_t y = 0; y < nh; ++y) {
        const T* g = n.grad.data() + ((b * nh + y) * nw) * c;
        T* dst = x->grad.data() + ((b * h + (h0 + y)) * w + w0) * c;
        kern::axpy(nw * c, T(1), g, dst);
      }
  });
}

// ---------------------------------------------------------------------------
// fold / unfold: lossless space-to-depth reshape with block size r.
// Row index enumerates the (H/r)x(W/r) grid of r x r blocks in row-major
// order; column index nests (channel, in-block row, in-block column).
// ---------------------------------------------------------------------------

template <typename T>
void fold_copy(const T* x, int64_t h, int64_t w, int64_t c, int64_t r, T* out) {
  int64_t bw = w / r;
#pragma omp parallel for schedule(static) if (h * w * c > 1 << 15)
  for (int64_t y = 0; y < h; ++y) {
    int64_t by = y / r, iy = y % r;
    for (int64_t xx = 0; xx < w; ++xx) {
      int64_t bx = xx / r, ix = xx % r;
      int64_t row = by * bw + bx;
      const T* src = x + (y * w + xx) * c;
      T* dst = out + row * (c * r * r);
      for (int64_t ch = 0; ch < c; ++ch) dst[ch * r * r + iy * r + ix] = src[ch];
    }
  }
}

template <typename T>
void unfold_copy(const T* m, int64_t h, int64_t w, int64_t c, int64_t r, T* out) {
  int64_t bw = w / r;
#pragma omp parallel for schedule(static) if (h * w * c > 1 << 15)
  for (int64_t y = 0; y < h; ++y) {
    int64_t by = y / r, iy = y % r;
    for (int64_t xx = 0; xx < w; ++xx) {
      int64_t bx = xx / r, ix = xx % r;
      int64_t row = by * bw + bx;
      const T* src = m + row * (c * r * r);
      T* dst = out + (y * w + xx) * c;
      for (int64_t ch = 0; ch < c; ++ch) dst[ch] = src[ch * r * r + iy * r + ix];
    }
  }
}

// x: N x H x W x C -> (N, HW/r^2, C r^2)
template <typename T>
Var<T> fold(const Var<T>& x, int64_t r) {
  const auto& d = x->value.dims();
  if (d.size() != 4) throw ShapeError("fold: input must be NHWC");
  int64_t nb = d[0], h = d[1], w = d[2], c = d[3];
  if (r <= 0 || h % r != 0 || w % r != 0)
    throw ShapeError("fold: spatial dims " + x->value.shape_str() + " not divisible by r=" +
                     std::to_string(r));
  int64_t m = (h / r) * (w / r), k = c * r * r;
  Tensor<T> out({nb, m, k});
  for (int64_t n = 0; n < nb; ++n)
    fold_copy(x->value.data() + n * h * w * c, h, w, c, r, out.data() + n * m * k);
  return make_op<T>(std::move(out), {x}, [x, nb, h, w, c, r, m, k](Node<T>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    Tensor<T> tmp({h, w, c});
    for (int64_t b = 0; b < nb; ++b) {
      unfold_copy(n.grad.data() + b * m * k, h, w, c, r, tmp.data());
      kern::axpy(h * w * c, T(1), tmp.data(), x->grad.data() + b * h * w * c);
    }
  });
}

// (N, HW/r^2, C r^2) -> N x H x W x C; exact inverse of fold.
template <typename T>
Var<T> unfold(const Var<T>& m, int64_t r, int64_t h, int64_t w, int64_t c) {
  const auto& d = m->value.dims();
  if (d.size() != 3) throw ShapeError("unfold: input must be rank-3");
  if (r <= 0 || h % r != 0 || w % r != 0 || d[1] != (h / r) * (w / r) || d[2] != c * r * r)
    throw ShapeError("unfold: inconsistent dimensions " + m->value.shape_str() + " for " +
                     std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c) +
                     " r=" + std::to_string(r));
  int64_t nb = d[0], mm = d[1], kk = d[2];
  Tensor<T> out({nb, h, w, c});
  for (int64_t n = 0; n < nb; ++n)
    unfold_copy(m->value.data() + n * mm * kk, h, w, c, r, out.data() + n * h * w * c);
  return make_op<T>(std::move(out), {m}, [m, nb, h, w, c, r, mm, kk](Node<T>& n) {
    if (!m->requires_grad) return;
    m->ensure_grad();
    Tensor<T> tmp({mm, kk});
    for (int64_t b = 0; b < nb; ++b) {
      fold_copy(n.grad.data() + b * h * w * c, h, w, c, r, tmp.data());
      kern::axpy(mm * kk, T(1), tmp.data(), m->grad.data() + b * mm * kk);
    }
  });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// Mean binary cross-entropy over all elements. Predictions are probabilities;
// they are clamped to [eps, 1-eps] inside the loss only.
template <typename T>
Var<T> bce_mean(const Var<T>& pred, const Tensor<T>& target, T eps = T(1e-7)) {
  check_same_shape(pred->value, target, "bce_mean");
  int64_t n = pred->value.numel();
  if (n == 0) throw ShapeError("bce_mean: empty input");
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    T p = std::clamp(pred->value[i], eps, T(1) - eps);
    T t = target[i];
    acc += -(static_cast<double>(t) * std::log(static_cast<double>(p)) +
             (1.0 - static_cast<double>(t)) * std::log(1.0 - static_cast<double>(p)));
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
  Tensor<T> tgt = target;  // shared buffer keeps target alive
  return make_op<T>(std::move(out), {pred}, [pred, tgt, n, eps](Node<T>& nd) {
    if (!pred->requires_grad) return;
    pred->ensure_grad();
    T g = nd.grad[0] / static_cast<T>(n);
    for (int64_t i = 0; i < n; ++i) {
      T p = pred->value[i];
      if (p < eps || p > T(1) - eps) continue;  // clamp region: zero slope
      T t = tgt[i];
      pred->grad[i] += g * ((T(1) - t) / (T(1) - p) - t / p);
    }
  });
}

}  // namespace pscc::ops
