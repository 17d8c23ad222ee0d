#include <cstdlib>
#include <cstring>

#include "pscc/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)
#include <cpuid.h>
#endif

namespace pscc::kern {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  unsigned int eax, ebx, ecx, edx;
  if (!__get_cpuid_count(7, 0, &eax, &ebx, &ecx, &edx)) return false;
  bool avx2 = (ebx & (1u << 5)) != 0;
  if (!__get_cpuid(1, &eax, &ebx, &ecx, &edx)) return false;
  bool fma = (ecx & (1u << 12)) != 0;
  return avx2 && fma;
#else
  return false;
#endif
}

namespace {

Backend pick_initial() {
  if (const char* env = std::getenv("PSCC_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::kScalar;
    if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return Backend::kAvx2;
  }
  return cpu_has_avx2() ? Backend::kAvx2 : Backend::kScalar;
}

Backend g_backend = pick_initial();

}  // namespace

Backend active_backend() { return g_backend; }

void set_backend(Backend b) {
  if (b == Backend::kAvx2 && !cpu_has_avx2()) b = Backend::kScalar;
  g_backend = b;
}

const char* backend_name() { return g_backend == Backend::kAvx2 ? "avx2" : "scalar"; }

#define PSCC_DISPATCH(call)                \
  if (g_backend == Backend::kAvx2) {       \
    return avx2::call;                     \
  }                                        \
  return scalar::call

void gemm_nn(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c, bool acc) {
  PSCC_DISPATCH(gemm_nn(m, n, k, a, b, c, acc));
}
void gemm_nn(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c, bool acc) {
  PSCC_DISPATCH(gemm_nn(m, n, k, a, b, c, acc));
}
void gemm_nt(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c, bool acc) {
  PSCC_DISPATCH(gemm_nt(m, n, k, a, b, c, acc));
}
void gemm_nt(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c, bool acc) {
  PSCC_DISPATCH(gemm_nt(m, n, k, a, b, c, acc));
}
void gemm_tn(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c, bool acc) {
  PSCC_DISPATCH(gemm_tn(m, n, k, a, b, c, acc));
}
void gemm_tn(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c, bool acc) {
  PSCC_DISPATCH(gemm_tn(m, n, k, a, b, c, acc));
}
void softmax_rows(int64_t rows, int64_t cols, const float* in, float* out) {
  PSCC_DISPATCH(softmax_rows(rows, cols, in, out));
}
void softmax_rows(int64_t rows, int64_t cols, const double* in, double* out) {
  PSCC_DISPATCH(softmax_rows(rows, cols, in, out));
}
void add(int64_t n, const float* a, const float* b, float* out) { PSCC_DISPATCH(add(n, a, b, out)); }
void add(int64_t n, const double* a, const double* b, double* out) { PSCC_DISPATCH(add(n, a, b, out)); }
void mul(int64_t n, const float* a, const float* b, float* out) { PSCC_DISPATCH(mul(n, a, b, out)); }
void mul(int64_t n, const double* a, const double* b, double* out) { PSCC_DISPATCH(mul(n, a, b, out)); }
void axpy(int64_t n, float alpha, const float* x, float* y) { PSCC_DISPATCH(axpy(n, alpha, x, y)); }
void axpy(int64_t n, double alpha, const double* x, double* y) { PSCC_DISPATCH(axpy(n, alpha, x, y)); }
void scale(int64_t n, float alpha, const float* x, float* out) { PSCC_DISPATCH(scale(n, alpha, x, out)); }
void scale(int64_t n, double alpha, const double* x, double* out) { PSCC_DISPATCH(scale(n, alpha, x, out)); }
void relu(int64_t n, const float* x, float* out) { PSCC_DISPATCH(relu(n, x, out)); }
void relu(int64_t n, const double* x, double* out) { PSCC_DISPATCH(relu(n, x, out)); }
void relu_backward(int64_t n, const float* x, const float* gy, float* gx) {
  PSCC_DISPATCH(relu_backward(n, x, gy, gx));
}
void relu_backward(int64_t n, const double* x, const double* gy, double* gx) {
  PSCC_DISPATCH(relu_backward(n, x, gy, gx));
}
void sigmoid(int64_t n, const float* x, float* out) { PSCC_DISPATCH(sigmoid(n, x, out)); }
void sigmoid(int64_t n, const double* x, double* out) { PSCC_DISPATCH(sigmoid(n, x, out)); }
float reduce_sum(int64_t n, const float* x) { PSCC_DISPATCH(reduce_sum(n, x)); }
double reduce_sum(int64_t n, const double* x) { PSCC_DISPATCH(reduce_sum(n, x)); }
float dot(int64_t n, const float* a, const float* b) { PSCC_DISPATCH(dot(n, a, b)); }
double dot(int64_t n, const double* a, const double* b) { PSCC_DISPATCH(dot(n, a, b)); }
void adam_step(int64_t n, float* w, const float* g, float* m, float* v, float lr_t, float b1,
               float b2, float eps) {
  PSCC_DISPATCH(adam_step(n, w, g, m, v, lr_t, b1, b2, eps));
}
void adam_step(int64_t n, double* w, const double* g, double* m, double* v, double lr_t,
               double b1, double b2, double eps) {
  PSCC_DISPATCH(adam_step(n, w, g, m, v, lr_t, b1, b2, eps));
}

#undef PSCC_DISPATCH

}  // namespace pscc::kern
