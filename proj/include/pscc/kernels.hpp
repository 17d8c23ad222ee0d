#pragma once

#include <cstdint>
#include <string>

namespace pscc::kern {

// Arithmetic inner loops exist in two lanes: a plain scalar reference and an
// AVX2/FMA variant. The lane is chosen once at startup from CPUID and can be
// overridden with PSCC_KERNELS=scalar|avx2. Both lanes partition work so that
// every output element is accumulated serially by a single thread; results do
// not depend on the thread count.
enum class Backend { kScalar, kAvx2 };

Backend active_backend();
void set_backend(Backend b);
const char* backend_name();
bool cpu_has_avx2();

// C (MxN) = A (MxK) * B (KxN), row-major; accumulate adds into C.
void gemm_nn(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c,
             bool accumulate);
void gemm_nn(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool accumulate);

// C (MxN) = A (MxK) * B (NxK)^T.
void gemm_nt(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c,
             bool accumulate);
void gemm_nt(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool accumulate);

// C (KxN) = A (MxK)^T * B (MxN).
void gemm_tn(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c,
             bool accumulate);
void gemm_tn(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool accumulate);

// Row-wise softmax with per-row max subtraction.
void softmax_rows(int64_t rows, int64_t cols, const float* in, float* out);
void softmax_rows(int64_t rows, int64_t cols, const double* in, double* out);

void add(int64_t n, const float* a, const float* b, float* out);
void add(int64_t n, const double* a, const double* b, double* out);
void mul(int64_t n, const float* a, const float* b, float* out);
void mul(int64_t n, const double* a, const double* b, double* out);
void axpy(int64_t n, float alpha, const float* x, float* y);
void axpy(int64_t n, double alpha, const double* x, double* y);
void scale(int64_t n, float alpha, const float* x, float* out);
void scale(int64_t n, double alpha, const double* x, double* out);
void relu(int64_t n, const float* x, float* out);
void relu(int64_t n, const double* x, double* out);
// gx += gy where x > 0
void relu_backward(int64_t n, const float* x, const float* gy, float* gx);
void relu_backward(int64_t n, const double* x, const double* gy, double* gx);
void sigmoid(int64_t n, const float* x, float* out);
void sigmoid(int64_t n, const double* x, double* out);
float reduce_sum(int64_t n, const float* x);
double reduce_sum(int64_t n, const double* x);
float dot(int64_t n, const float* a, const float* b);
double dot(int64_t n, const double* a, const double* b);

// Adam update, elementwise over parameter/grad/moment buffers.
// m = b1*m + (1-b1)*g; v = b2*v + (1-b2)*g^2; w -= lr_t * m / (sqrt(v) + eps)
void adam_step(int64_t n, float* w, const float* g, float* m, float* v, float lr_t, float b1,
               float b2, float eps);
void adam_step(int64_t n, double* w, const double* g, double* m, double* v, double lr_t,
               double b1, double b2, double eps);

// Scalar-lane entry points, exposed for lane-equivalence tests.
namespace scalar {
void gemm_nn(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c,
             bool accumulate);
void gemm_nn(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_nt(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c,
             bool accumulate);
void gemm_nt(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_tn(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c,
             bool accumulate);
void gemm_tn(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool accumulate);
void softmax_rows(int64_t rows, int64_t cols, const float* in, float* out);
void softmax_rows(int64_t rows, int64_t cols, const double* in, double* out);
void add(int64_t n, const float* a, const float* b, float* out);
void add(int64_t n, const double* a, const double* b, double* out);
void mul(int64_t n, const float* a, const float* b, float* out);
void mul(int64_t n, const double* a, const double* b, double* out);
void axpy(int64_t n, float alpha, const float* x, float* y);
void axpy(int64_t n, double alpha, const double* x, double* y);
void scale(int64_t n, float alpha, const float* x, float* out);
void scale(int64_t n, double alpha, const double* x, double* out);
void relu(int64_t n, const float* x, float* out);
void relu(int64_t n, const double* x, double* out);
void relu_backward(int64_t n, const float* x, const float* gy, float* gx);
void relu_backward(int64_t n, const double* x, const double* gy, double* gx);
void sigmoid(int64_t n, const float* x, float* out);
void sigmoid(int64_t n, const double* x, double* out);
float reduce_sum(int64_t n, const float* x);
double reduce_sum(int64_t n, const double* x);
float dot(int64_t n, const float* a, const float* b);
double dot(int64_t n, const double* a, const double* b);
void adam_step(int64_t n, float* w, const float* g, float* m, float* v, float lr_t, float b1,
               float b2, float eps);
void adam_step(int64_t n, double* w, const double* g, double* m, double* v, double lr_t,
               double b1, double b2, double eps);
}  // namespace scalar

namespace avx2 {
void gemm_nn(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c,
             bool accumulate);
void gemm_nn(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_nt(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c,
             bool accumulate);
void gemm_nt(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_tn(int64_t m, int64_t n, int64_t k, const float* a, const float* b, float* c,
             bool accumulate);
void gemm_tn(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool accumulate);
void softmax_rows(int64_t rows, int64_t cols, const float* in, float* out);
void softmax_rows(int64_t rows, int64_t cols, const double* in, double* out);
void add(int64_t n, const float* a, const float* b, float* out);
void add(int64_t n, const double* a, const double* b, double* out);
void mul(int64_t n, const float* a, const float* b, float* out);
void mul(int64_t n, const double* a, const double* b, double* out);
void axpy(int64_t n, float alpha, const float* x, float* y);
void axpy(int64_t n, double alpha, const double* x, double* y);
void scale(int64_t n, float alpha, const float* x, float* out);
void scale(int64_t n, double alpha, const double* x, double* out);
void relu(int64_t n, const float* x, float* out);
void relu(int64_t n, const double* x, double* out);
void relu_backward(int64_t n, const float* x, const float* gy, float* gx);
void relu_backward(int64_t n, const double* x, const double* gy, double* gx);
void sigmoid(int64_t n, const float* x, float* out);
void sigmoid(int64_t n, const double* x, double* out);
float reduce_sum(int64_t n, const float* x);
double reduce_sum(int64_t n, const double* x);
float dot(int64_t n, const float* a, const float* b);
double dot(int64_t n, const double* a, const double* b);
void adam_step(int64_t n, float* w, const float* g, float* m, float* v, float lr_t, float b1,
               float b2, float eps);
void adam_step(int64_t n, double* w, const double* g, double* m, double* v, double lr_t,
               double b1, double b2, double eps);
}  // namespace avx2

}  // namespace pscc::kern
