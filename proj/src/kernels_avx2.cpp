#include <cmath>
#include <cstring>
#include <immintrin.h>

#include "pscc/kernels.hpp"

// AVX2/FMA lane. Same output-partitioning rules as the scalar lane; register
// blocking only, no packing (matrices here are small enough that B panels
// stay cache-resident across a 4-row block).

namespace pscc::kern::avx2 {

namespace {

inline float hsum256(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}

inline double hsum256d(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  lo = _mm_hadd_pd(lo, lo);
  return _mm_cvtsd_f64(lo);
}

// ---- float gemm_nn: 4-row x 16-col microkernel ----
void gemm_nn_f32(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c,
                 bool acc) {
#pragma omp parallel for schedule(static) if (m * n * k > 1 << 16)
  for (int64_t i0 = 0; i0 < m; i0 += 4) {
    int64_t mr = std::min<int64_t>(4, m - i0);
    int64_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256 acc00 = _mm256_setzero_ps(), acc01 = _mm256_setzero_ps();
      __m256 acc10 = _mm256_setzero_ps(), acc11 = _mm256_setzero_ps();
      __m256 acc20 = _mm256_setzero_ps(), acc21 = _mm256_setzero_ps();
      __m256 acc30 = _mm256_setzero_ps(), acc31 = _mm256_setzero_ps();
      for (int64_t p = 0; p < k; ++p) {
        __m256 b0 = _mm256_loadu_ps(b + p * n + j);
        __m256 b1 = _mm256_loadu_ps(b + p * n + j + 8);
        __m256 a0 = _mm256_broadcast_ss(a + (i0 + 0) * k + p);
        acc00 = _mm256_fmadd_ps(a0, b0, acc00);
        acc01 = _mm256_fmadd_ps(a0, b1, acc01);
        if (mr > 1) {
          __m256 a1 = _mm256_broadcast_ss(a + (i0 + 1) * k + p);
          acc10 = _mm256_fmadd_ps(a1, b0, acc10);
          acc11 = _mm256_fmadd_ps(a1, b1, acc11);
        }
        if (mr > 2) {
          __m256 a2 = _mm256_broadcast_ss(a + (i0 + 2) * k + p);
          acc20 = _mm256_fmadd_ps(a2, b0, acc20);
          acc21 = _mm256_fmadd_ps(a2, b1, acc21);
        }
        if (mr > 3) {
          __m256 a3 = _mm256_broadcast_ss(a + (i0 + 3) * k + p);
          acc30 = _mm256_fmadd_ps(a3, b0, acc30);
          acc31 = _mm256_fmadd_ps(a3, b1, acc31);
        }
      }
      __m256 accs[4][2] = {{acc00, acc01}, {acc10, acc11}, {acc20, acc21}, {acc30, acc31}};
      for (int64_t r = 0; r < mr; ++r) {
        float* crow = c + (i0 + r) * n + j;
        if (acc) {
          _mm256_storeu_ps(crow, _mm256_add_ps(_mm256_loadu_ps(crow), accs[r][0]));
          _mm256_storeu_ps(crow + 8, _mm256_add_ps(_mm256_loadu_ps(crow + 8), accs[r][1]));
        } else {
          _mm256_storeu_ps(crow, accs[r][0]);
          _mm256_storeu_ps(crow + 8, accs[r][1]);
        }
      }
    }
    // column tail
    for (; j < n; ++j) {
      for (int64_t r = 0; r < mr; ++r) {
        const float* arow = a + (i0 + r) * k;
        float s = 0.f;
        for (int64_t p = 0; p < k; ++p) s += arow[p] * b[p * n + j];
        float* cp = c + (i0 + r) * n + j;
        *cp = acc ? *cp + s : s;
      }
    }
  }
}

void gemm_nn_f64(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
                 bool acc) {
#pragma omp parallel for schedule(static) if (m * n * k > 1 << 16)
  for (int64_t i0 = 0; i0 < m; i0 += 4) {
    int64_t mr = std::min<int64_t>(4, m - i0);
    int64_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d acc_[4][2];
      for (int r = 0; r < 4; ++r) acc_[r][0] = acc_[r][1] = _mm256_setzero_pd();
      for (int64_t p = 0; p < k; ++p) {
        __m256d b0 = _mm256_loadu_pd(b + p * n + j);
        __m256d b1 = _mm256_loadu_pd(b + p * n + j + 4);
        for (int64_t r = 0; r < mr; ++r) {
          __m256d av = _mm256_broadcast_sd(a + (i0 + r) * k + p);
          acc_[r][0] = _mm256_fmadd_pd(av, b0, acc_[r][0]);
          acc_[r][1] = _mm256_fmadd_pd(av, b1, acc_[r][1]);
        }
      }
      for (int64_t r = 0; r < mr; ++r) {
        double* crow = c + (i0 + r) * n + j;
        if (acc) {
          _mm256_storeu_pd(crow, _mm256_add_pd(_mm256_loadu_pd(crow), acc_[r][0]));
          _mm256_storeu_pd(crow + 4, _mm256_add_pd(_mm256_loadu_pd(crow + 4), acc_[r][1]));
        } else {
          _mm256_storeu_pd(crow, acc_[r][0]);
          _mm256_storeu_pd(crow + 4, acc_[r][1]);
        }
      }
    }
    for (; j < n; ++j) {
      for (int64_t r = 0; r < mr; ++r) {
        const double* arow = a + (i0 + r) * k;
        double s = 0.0;
        for (int64_t p = 0; p < k; ++p) s += arow[p] * b[p * n + j];
        double* cp = c + (i0 + r) * n + j;
        *cp = acc ? *cp + s : s;
      }
    }
  }
}

// ---- gemm_nt: K-contiguous dot products, 4 B-rows at a time ----
template <typename T>
struct V;
template <>
struct V<float> {
  using reg = __m256;
  static constexpr int64_t w = 8;
  static reg zero() { return _mm256_setzero_ps(); }
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static float hsum(reg v) { return hsum256(v); }
};
template <>
struct V<double> {
  using reg = __m256d;
  static constexpr int64_t w = 4;
  static reg zero() { return _mm256_setzero_pd(); }
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static double hsum(reg v) { return hsum256d(v); }
};

template <typename T>
void gemm_nt_impl(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c, bool acc) {
  using VV = V<T>;
#pragma omp parallel for schedule(static) if (m * n * k > 1 << 16)
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    int64_t j = 0;
    for (; j + 4 <= n; j += 4) {
      typename VV::reg s0 = VV::zero(), s1 = VV::zero(), s2 = VV::zero(), s3 = VV::zero();
      const T* b0 = b + (j + 0) * k;
      const T* b1 = b + (j + 1) * k;
      const T* b2 = b + (j + 2) * k;
      const T* b3 = b + (j + 3) * k;
      int64_t p = 0;
      for (; p + VV::w <= k; p += VV::w) {
        typename VV::reg va = VV::load(arow + p);
        s0 = VV::fmadd(va, VV::load(b0 + p), s0);
        s1 = VV::fmadd(va, VV::load(b1 + p), s1);
        s2 = VV::fmadd(va, VV::load(b2 + p), s2);
        s3 = VV::fmadd(va, VV::load(b3 + p), s3);
      }
      T t0 = VV::hsum(s0), t1 = VV::hsum(s1), t2 = VV::hsum(s2), t3 = VV::hsum(s3);
      for (; p < k; ++p) {
        t0 += arow[p] * b0[p];
        t1 += arow[p] * b1[p];
        t2 += arow[p] * b2[p];
        t3 += arow[p] * b3[p];
      }
      T* crow = c + i * n + j;
      if (acc) {
        crow[0] += t0; crow[1] += t1; crow[2] += t2; crow[3] += t3;
      } else {
        crow[0] = t0; crow[1] = t1; crow[2] = t2; crow[3] = t3;
      }
    }
    for (; j < n; ++j) {
      const T* brow = b + j * k;
      typename VV::reg s = VV::zero();
      int64_t p = 0;
      for (; p + VV::w <= k; p += VV::w) s = VV::fmadd(VV::load(arow + p), VV::load(brow + p), s);
      T t = VV::hsum(s);
      for (; p < k; ++p) t += arow[p] * brow[p];
      T* cp = c + i * n + j;
      *cp = acc ? *cp + t : t;
    }
  }
}

// ---- gemm_tn: rank-1 row updates, vectorized over N ----
template <typename T>
void gemm_tn_impl(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c, bool acc) {
  using VV = V<T>;
#pragma omp parallel for schedule(static) if (m * n * k > 1 << 16)
  for (int64_t p = 0; p < k; ++p) {
    T* crow = c + p * n;
    if (!acc) {
      for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
    }
    for (int64_t i = 0; i < m; ++i) {
      T av = a[i * k + p];
      if (av == T(0)) continue;
      const T* brow = b + i * n;
      typename VV::reg va;
      if constexpr (std::is_same_v<T, float>) va = _mm256_set1_ps(av);
      else va = _mm256_set1_pd(av);
      int64_t j = 0;
      for (; j + VV::w <= n; j += VV::w) {
        typename VV::reg r = VV::fmadd(va, VV::load(brow + j), VV::load(crow + j));
        if constexpr (std::is_same_v<T, float>) _mm256_storeu_ps(crow + j, r);
        else _mm256_storeu_pd(crow + j, r);
      }
      for (; j < n; ++j) crow[j] += av * brow[j];
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
    using VV = V<T>;
    typename VV::reg vinv;
    if constexpr (std::is_same_v<T, float>) vinv = _mm256_set1_ps(inv);
    else vinv = _mm256_set1_pd(inv);
    int64_t j = 0;
    for (; j + VV::w <= cols; j += VV::w) {
      if constexpr (std::is_same_v<T, float>)
        _mm256_storeu_ps(y + j, _mm256_mul_ps(_mm256_loadu_ps(y + j), vinv));
      else
        _mm256_storeu_pd(y + j, _mm256_mul_pd(_mm256_loadu_pd(y + j), vinv));
    }
    for (; j < cols; ++j) y[j] *= inv;
  }
}

}  // namespace

void gemm_nn(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c,
             bool acc) {
  gemm_nn_f32(m, n, k, a, b, c, acc);
}
void gemm_nn(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool acc) {
  gemm_nn_f64(m, n, k, a, b, c, acc);
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

void add(int64_t n, const float* a, const float* b, float* out) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}
void add(int64_t n, const double* a, const double* b, double* out) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}
void mul(int64_t n, const float* a, const float* b, float* out) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}
void mul(int64_t n, const double* a, const double* b, double* out) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}
void axpy(int64_t n, float alpha, const float* x, float* y) {
  __m256 va = _mm256_set1_ps(alpha);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}
void axpy(int64_t n, double alpha, const double* x, double* y) {
  __m256d va = _mm256_set1_pd(alpha);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}
void scale(int64_t n, float alpha, const float* x, float* out) {
  __m256 va = _mm256_set1_ps(alpha);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(out + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}
void scale(int64_t n, double alpha, const double* x, double* out) {
  __m256d va = _mm256_set1_pd(alpha);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}
void relu(int64_t n, const float* x, float* out) {
  __m256 z = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(out + i, _mm256_max_ps(z, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) out[i] = x[i] > 0.f ? x[i] : 0.f;
}
void relu(int64_t n, const double* x, double* out) {
  __m256d z = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_max_pd(z, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}
void relu_backward(int64_t n, const float* x, const float* gy, float* gx) {
  __m256 z = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), z, _CMP_GT_OQ);
    __m256 g = _mm256_and_ps(mask, _mm256_loadu_ps(gy + i));
    _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), g));
  }
  for (; i < n; ++i)
    if (x[i] > 0.f) gx[i] += gy[i];
}
void relu_backward(int64_t n, const double* x, const double* gy, double* gx) {
  __m256d z = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), z, _CMP_GT_OQ);
    __m256d g = _mm256_and_pd(mask, _mm256_loadu_pd(gy + i));
    _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), g));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0) gx[i] += gy[i];
}
void sigmoid(int64_t n, const float* x, float* out) {
  for (int64_t i = 0; i < n; ++i) out[i] = 1.f / (1.f + std::exp(-x[i]));
}
void sigmoid(int64_t n, const double* x, double* out) {
  for (int64_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
}
float reduce_sum(int64_t n, const float* x) {
  __m256 s = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) s = _mm256_add_ps(s, _mm256_loadu_ps(x + i));
  float t = hsum256(s);
  for (; i < n; ++i) t += x[i];
  return t;
}
double reduce_sum(int64_t n, const double* x) {
  __m256d s = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) s = _mm256_add_pd(s, _mm256_loadu_pd(x + i));
  double t = hsum256d(s);
  for (; i < n; ++i) t += x[i];
  return t;
}
float dot(int64_t n, const float* a, const float* b) {
  __m256 s = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    s = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), s);
  float t = hsum256(s);
  for (; i < n; ++i) t += a[i] * b[i];
  return t;
}
double dot(int64_t n, const double* a, const double* b) {
  __m256d s = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    s = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s);
  double t = hsum256d(s);
  for (; i < n; ++i) t += a[i] * b[i];
  return t;
}
void adam_step(int64_t n, float* w, const float* g, float* m, float* v, float lr_t, float b1,
               float b2, float eps) {
  __m256 vb1 = _mm256_set1_ps(b1), vb2 = _mm256_set1_ps(b2);
  __m256 v1b1 = _mm256_set1_ps(1.f - b1), v1b2 = _mm256_set1_ps(1.f - b2);
  __m256 vlr = _mm256_set1_ps(lr_t), veps = _mm256_set1_ps(eps);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vg = _mm256_loadu_ps(g + i);
    __m256 vm = _mm256_fmadd_ps(v1b1, vg, _mm256_mul_ps(vb1, _mm256_loadu_ps(m + i)));
    __m256 vv = _mm256_fmadd_ps(v1b2, _mm256_mul_ps(vg, vg), _mm256_mul_ps(vb2, _mm256_loadu_ps(v + i)));
    _mm256_storeu_ps(m + i, vm);
    _mm256_storeu_ps(v + i, vv);
    __m256 den = _mm256_add_ps(_mm256_sqrt_ps(vv), veps);
    __m256 upd = _mm256_div_ps(_mm256_mul_ps(vlr, vm), den);
    _mm256_storeu_ps(w + i, _mm256_sub_ps(_mm256_loadu_ps(w + i), upd));
  }
  for (; i < n; ++i) {
    m[i] = b1 * m[i] + (1.f - b1) * g[i];
    v[i] = b2 * v[i] + (1.f - b2) * g[i] * g[i];
    w[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps);
  }
}
void adam_step(int64_t n, double* w, const double* g, double* m, double* v, double lr_t,
               double b1, double b2, double eps) {
  int64_t i = 0;
  __m256d vb1 = _mm256_set1_pd(b1), vb2 = _mm256_set1_pd(b2);
  __m256d v1b1 = _mm256_set1_pd(1.0 - b1), v1b2 = _mm256_set1_pd(1.0 - b2);
  __m256d vlr = _mm256_set1_pd(lr_t), veps = _mm256_set1_pd(eps);
  for (; i + 4 <= n; i += 4) {
    __m256d vg = _mm256_loadu_pd(g + i);
    __m256d vm = _mm256_fmadd_pd(v1b1, vg, _mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)));
    __m256d vv = _mm256_fmadd_pd(v1b2, _mm256_mul_pd(vg, vg), _mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)));
    _mm256_storeu_pd(m + i, vm);
    _mm256_storeu_pd(v + i, vv);
    __m256d den = _mm256_add_pd(_mm256_sqrt_pd(vv), veps);
    __m256d upd = _mm256_div_pd(_mm256_mul_pd(vlr, vm), den);
    _mm256_storeu_pd(w + i, _mm256_sub_pd(_mm256_loadu_pd(w + i), upd));
  }
  for (; i < n; ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    w[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps);
  }
}

}  // namespace pscc::kern::avx2
