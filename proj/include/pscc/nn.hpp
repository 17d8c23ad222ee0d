#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "pscc/ops.hpp"
#include "pscc/rng.hpp"

namespace pscc::nn {

using pscc::Tensor;
using pscc::Var;

template <typename T>
struct ParamEntry {
  std::string name;
  Var<T> var;
};

// Flat named parameter registry. Modules register leaves at construction in a
// fixed order, which makes seeded init, checkpoints and optimizer state
// reproducible.
template <typename T>
class ParamSet {
 public:
  Var<T> add(const std::string& name, Tensor<T> init) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    auto v = make_leaf<T>(std::move(init), true);
    index_[name] = entries_.size();
    entries_.push_back({name, v});
    return v;
  }

  const std::vector<ParamEntry<T>>& entries() const { return entries_; }

  Var<T> find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : entries_[it->second].var;
  }

  int64_t count() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.var->value.numel();
    return n;
  }

  int64_t count_prefix(const std::string& prefix) const {
    int64_t n = 0;
    for (const auto& e : entries_)
      if (e.name.rfind(prefix, 0) == 0) n += e.var->value.numel();
    return n;
  }

  void zero_grads() {
    for (auto& e : entries_) e.var->zero_grad();
  }

 private:
  std::vector<ParamEntry<T>> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Variance-scaling init for conv/linear weights, zeros for biases, ones/zeros
// for normalization parameters.
template <typename T>
Tensor<T> he_normal(Rng& rng, std::vector<int64_t> dims, int64_t fan_in) {
  Tensor<T> t(std::move(dims));
  double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal() * std);
  return t;
}

inline int64_t norm_groups_for(int64_t c) {
  for (int64_t g : {8, 6, 4, 3, 2}) {
    if (c % g == 0) return g;
  }
  return 1;
}

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamSet<T>& ps, const std::string& name, Rng& rng, int64_t cin, int64_t cout,
         int64_t k, int64_t stride = 1, bool bias = true)
      : k_(k), stride_(stride), pad_(k / 2) {
    w_ = ps.add(name + ".w", he_normal<T>(rng, {k * k * cin, cout}, k * k * cin));
    if (bias) b_ = ps.add(name + ".b", Tensor<T>({cout}));
  }
  Var<T> operator()(const Var<T>& x) const {
    return ops::conv2d(x, w_, b_, k_, k_, stride_, pad_);
  }
  int64_t k_ = 0, stride_ = 1, pad_ = 0;
  Var<T> w_, b_;
};

template <typename T>
class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(ParamSet<T>& ps, const std::string& name, int64_t c)
      : groups_(norm_groups_for(c)) {
    gamma_ = ps.add(name + ".g", Tensor<T>::full({c}, T(1)));
    beta_ = ps.add(name + ".b", Tensor<T>({c}));
  }
  Var<T> operator()(const Var<T>& x) const {
    return ops::group_norm(x, gamma_, beta_, groups_);
  }
  int64_t groups_ = 1;
  Var<T> gamma_, beta_;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamSet<T>& ps, const std::string& name, Rng& rng, int64_t in, int64_t out,
         bool bias = true) {
    w_ = ps.add(name + ".w", he_normal<T>(rng, {in, out}, in));
    if (bias) b_ = ps.add(name + ".b", Tensor<T>({out}));
  }
  // x: N x in -> N x out
  Var<T> operator()(const Var<T>& x) const {
    auto y = ops::matmul(x, w_);
    return b_ ? ops::add_bias(y, b_) : y;
  }
  Var<T> w_, b_;
};

// Per-row linear map in folded attention space.
template <typename T>
class RowLinear {
 public:
  RowLinear() = default;
  RowLinear(ParamSet<T>& ps, const std::string& name, Rng& rng, int64_t in, int64_t out) {
    w_ = ps.add(name + ".w", he_normal<T>(rng, {in, out}, in));
    b_ = ps.add(name + ".b", Tensor<T>({out}));
  }
  Var<T> operator()(const Var<T>& x) const { return ops::linear_rows(x, w_, b_); }
  Var<T> w_, b_;
};

}  // namespace pscc::nn
