#pragma once

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <cmath>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pscc/error.hpp"

namespace pscc {

// Dense row-major tensor. Image-like data uses NHWC (channel fastest).
// Copy is shallow (shared buffer); use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> dims) : dims_(std::move(dims)) {
    int64_t n = 1;
    for (int64_t d : dims_) {
      if (d < 0) throw ShapeError("negative tensor dimension");
      n *= d;
    }
    numel_ = n;
    data_ = alloc(n);
    std::memset(data_.get(), 0, sizeof(T) * static_cast<size_t>(n));
  }

  Tensor(std::initializer_list<int64_t> dims)
      : Tensor(std::vector<int64_t>(dims)) {}

  static Tensor zeros(std::vector<int64_t> dims) { return Tensor(std::move(dims)); }

  static Tensor full(std::vector<int64_t> dims, T v) {
    Tensor t(std::move(dims));
    for (int64_t i = 0; i < t.numel_; ++i) t.data_.get()[i] = v;
    return t;
  }

  static Tensor scalar(T v) { return full({1}, v); }

  static Tensor from_vector(std::vector<int64_t> dims, const std::vector<T>& v) {
    Tensor t(std::move(dims));
    if (static_cast<int64_t>(v.size()) != t.numel_)
      throw ShapeError("from_vector: size mismatch");
    std::memcpy(t.data(), v.data(), sizeof(T) * v.size());
    return t;
  }

  bool defined() const { return data_ != nullptr || numel_ == 0; }
  bool empty() const { return numel_ == 0; }
  int rank() const { return static_cast<int>(dims_.size()); }
  int64_t numel() const { return numel_; }
  const std::vector<int64_t>& dims() const { return dims_; }
  int64_t dim(int i) const { return dims_.at(static_cast<size_t>(i)); }

  T* data() { return data_.get(); }
  const T* data() const { return data_.get(); }

  T& operator[](int64_t i) { return data_.get()[i]; }
  const T& operator[](int64_t i) const { return data_.get()[i]; }

  // NHWC accessor for rank-4, HWC for rank-3, row/col for rank-2.
  T& at4(int64_t n, int64_t h, int64_t w, int64_t c) {
    return data_.get()[((n * dims_[1] + h) * dims_[2] + w) * dims_[3] + c];
  }
  const T& at4(int64_t n, int64_t h, int64_t w, int64_t c) const {
    return data_.get()[((n * dims_[1] + h) * dims_[2] + w) * dims_[3] + c];
  }
  T& at3(int64_t h, int64_t w, int64_t c) {
    return data_.get()[(h * dims_[1] + w) * dims_[2] + c];
  }
  const T& at3(int64_t h, int64_t w, int64_t c) const {
    return data_.get()[(h * dims_[1] + w) * dims_[2] + c];
  }
  T& at2(int64_t r, int64_t c) { return data_.get()[r * dims_[1] + c]; }
  const T& at2(int64_t r, int64_t c) const { return data_.get()[r * dims_[1] + c]; }

  Tensor clone() const {
    Tensor t;
    t.dims_ = dims_;
    t.numel_ = numel_;
    t.data_ = alloc(numel_);
    std::memcpy(t.data_.get(), data_.get(), sizeof(T) * static_cast<size_t>(numel_));
    return t;
  }

  // Shares the buffer under a new shape with identical numel.
  Tensor reshaped(std::vector<int64_t> dims) const {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    if (n != numel_) throw ShapeError("reshape: numel mismatch");
    Tensor t;
    t.dims_ = std::move(dims);
    t.numel_ = numel_;
    t.data_ = data_;
    return t;
  }

  void fill(T v) {
    for (int64_t i = 0; i < numel_; ++i) data_.get()[i] = v;
  }

  bool all_finite() const {
    for (int64_t i = 0; i < numel_; ++i)
      if (!std::isfinite(static_cast<double>(data_.get()[i]))) return false;
    return true;
  }

  bool same_dims(const Tensor& o) const { return dims_ == o.dims_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < dims_.size(); ++i) os << (i ? "x" : "") << dims_[i];
    os << "]";
    return os.str();
  }

 private:
  static std::shared_ptr<T[]> alloc(int64_t n) {
    if (n == 0) n = 1;
    void* p = std::aligned_alloc(64, ((sizeof(T) * static_cast<size_t>(n) + 63) / 64) * 64);
    if (!p) throw std::bad_alloc();
    return std::shared_ptr<T[]>(static_cast<T*>(p), [](T* q) { std::free(q); });
  }

  std::vector<int64_t> dims_;
  int64_t numel_ = 0;
  std::shared_ptr<T[]> data_;
};

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* where) {
  if (!a.same_dims(b))
    throw ShapeError(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
}

}  // namespace pscc
