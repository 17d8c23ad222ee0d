#include <cmath>
#include <cstring>

#include "pscc/kernels.hpp"

// Reference lane. Straightforward loops, parallelized only across disjoint
// output partitions so results are independent of the thread count.

namespace pscc::kern::scalar {

namespace {

template <typename T>
void gemm_nn_impl(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c, bool acc) {
#pragma omp parallel for schedule(static) if (m * n * k > 1 << 16)
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!acc) {
      for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
    }
    for (int64_t p = 0; p < k; ++p) {
      T av = a[i * k + p];
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt_impl(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c, bool acc) {
#pragma omp parallel for schedule(static) if (m * n * k > 1 << 16)
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T s = T(0);
      for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = acc ? crow[j] + s : s;
    }
  }
}

template <typename T>
void gemm_tn_impl(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c, bool acc) {
#pragma omp parallel for schedule(static) if (m * n * k > 1 << 16)
  for (int64_t p = 0; p < k; ++p) {
    T* crow = c + p * n;
    if (!acc) {
      for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
    }
    for (int64_t i = 0; i < m; ++i) {
      T av = a[i * k + p];
      const T* brow = b + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void softmax_rows_impl(int64_t rows, int64_t cols, const T* in, T* out) {
#pragma omp parallel for schedule(static) if (rows * cols > 1 << 14)
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = in + r * cols;
    T* y = out + r * cols;
    T mx = x[0];
    for (int64_t j = 1; j < cols; ++j)
      if (x[j] > mx) mx = x[j];
    T sum = T(0);
    for (int64_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    T inv = T(1) / sum;
    for (int64_t j = 0; j < cols; ++j) y[j] *= inv;
  }
}

}  // namespace

void gemm_nn(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c,
             bool acc) {
  gemm_nn_impl(m, n, k, a, b, c, acc);
}
void gemm_nn(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool acc) {
  gemm_nn_impl(m, n, k, a, b, c, acc);
}
void gemm_nt(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c,
             bool acc) {
  gemm_nt_impl(m, n, k, a, b, c, acc);
}
void gemm_nt(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool acc) {
  gemm_nt_impl(m, n, k, a, b, c, acc);
}
void gemm_tn(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c,
             bool acc) {
  gemm_tn_impl(m, n, k, a, b, c, acc);
}
void gemm_tn(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool acc) {
  gemm_tn_impl(m, n, k, a, b, c, acc);
}
void softmax_rows(int64_t rows, int64_t cols, const float* in, float* out) {
  softmax_rows_impl(rows, cols, in, out);
}
void softmax_rows(int64_t rows, int64_t cols, const double* in, double* out) {
  softmax_rows_impl(rows, cols, in, out);
}

template <typename T>
static void add_impl(int64_t n, const T* a, const T* b, T* out) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
template <typename T>
static void mul_impl(int64_t n, const T* a, const T* b, T* out) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
template <typename T>
static void axpy_impl(int64_t n, T alpha, const T* x, T* y) {
  for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
template <typename T>
static void scale_impl(int64_t n, T alpha, const T* x, T* out) {
  for (int64_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}
template <typename T>
static void relu_impl(int64_t n, const T* x, T* out) {
  for (int64_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}
template <typename T>
static void relu_backward_impl(int64_t n, const T* x, const T* gy, T* gx) {
  for (int64_t i = 0; i < n; ++i)
    if (x[i] > T(0)) gx[i] += gy[i];
}
template <typename T>
static void sigmoid_impl(int64_t n, const T* x, T* out) {
  for (int64_t i = 0; i < n; ++i) out[i] = T(1) / (T(1) + std::exp(-x[i]));
}
template <typename T>
static T reduce_sum_impl(int64_t n, const T* x) {
  T s = T(0);
  for (int64_t i = 0; i < n; ++i) s += x[i];
  return s;
}
template <typename T>
static T dot_impl(int64_t n, const T* a, const T* b) {
  T s = T(0);
  for (int64_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}
template <typename T>
static void adam_step_impl(int64_t n, T* w, const T* g, T* m, T* v, T lr_t, T b1, T b2, T eps) {
  for (int64_t i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (T(1) - b1) * g[i];
    v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
    w[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps);
  }
}

void add(int64_t n, const float* a, const float* b, float* out) { add_impl(n, a, b, out); }
void add(int64_t n, const double* a, const double* b, double* out) { add_impl(n, a, b, out); }
void mul(int64_t n, const float* a, const float* b, float* out) { mul_impl(n, a, b, out); }
void mul(int64_t n, const double* a, const double* b, double* out) { mul_impl(n, a, b, out); }
void axpy(int64_t n, float alpha, const float* x, float* y) { axpy_impl(n, alpha, x, y); }
void axpy(int64_t n, double alpha, const double* x, double* y) { axpy_impl(n, alpha, x, y); }
void scale(int64_t n, float alpha, const float* x, float* out) { scale_impl(n, alpha, x, out); }
void scale(int64_t n, double alpha, const double* x, double* out) { scale_impl(n, alpha, x, out); }
void relu(int64_t n, const float* x, float* out) { relu_impl(n, x, out); }
void relu(int64_t n, const double* x, double* out) { relu_impl(n, x, out); }
void relu_backward(int64_t n, const float* x, const float* gy, float* gx) {
  relu_backward_impl(n, x, gy, gx);
}
void relu_backward(int64_t n, const double* x, const double* gy, double* gx) {
  relu_backward_impl(n, x, gy, gx);
}
void sigmoid(int64_t n, const float* x, float* out) { sigmoid_impl(n, x, out); }
void sigmoid(int64_t n, const double* x, double* out) { sigmoid_impl(n, x, out); }
float reduce_sum(int64_t n, const float* x) { return reduce_sum_impl(n, x); }
double reduce_sum(int64_t n, const double* x) { return reduce_sum_impl(n, x); }
float dot(int64_t n, const float* a, const float* b) { return dot_impl(n, a, b); }
double dot(int64_t n, const double* a, const double* b) { return dot_impl(n, a, b); }
void adam_step(int64_t n, float* w, const float* g, float* m, float* v, float lr_t, float b1,
               float b2, float eps) {
  adam_step_impl(n, w, g, m, v, lr_t, b1, b2, eps);
}
void adam_step(int64_t n, double* w, const double* g, double* m, double* v, double lr_t,
               double b1, double b2, double eps) {
  adam_step_impl(n, w, g, m, v, lr_t, b1, b2, eps);
}

}  // namespace pscc::kern::scalar
