#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bair/common.hpp"

namespace bair {

// Dense row-major tensor, rank 1..4, every dimension >= 1.
// Images use shape {C, H, W} with unit-range intensities; per-record matrices
// use {rows, cols}; batched data would use {B, C, H, W}.
template <class T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    validate_shape();
    data.assign(std::size_t(numel()), T(0));
  }
  TensorT(std::vector<int> s, std::vector<T> d)
      : shape(std::move(s)), data(std::move(d)) {
    validate_shape();
    if (std::int64_t(data.size()) != numel())
      throw ContractError("Tensor: data length does not match shape");
  }

  static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }
  static TensorT full(std::vector<int> s, T v) {
    TensorT t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  int rank() const { return int(shape.size()); }
  int dim(int i) const { return shape[std::size_t(i)]; }
  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  // {C,H,W} accessors.
  T& at(int c, int y, int x) {
    return data[std::size_t((std::int64_t(c) * dim(1) + y) * dim(2) + x)];
  }
  T at(int c, int y, int x) const {
    return data[std::size_t((std::int64_t(c) * dim(1) + y) * dim(2) + x)];
  }
  // {rows,cols} accessors.
  T& at(int r, int c) { return data[std::size_t(std::int64_t(r) * dim(1) + c)]; }
  T at(int r, int c) const {
    return data[std::size_t(std::int64_t(r) * dim(1) + c)];
  }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  template <class U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
    return out;
  }

  std::string shape_str() const {
    std::string s = "{";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "}";
  }

 private:
  void validate_shape() const {
    if (shape.empty() || shape.size() > 4)
      throw ContractError("Tensor: rank must be 1..4");
    for (int d : shape)
      if (d < 1) throw ContractError("Tensor: dimensions must be >= 1");
  }
};

using Tensor = TensorT<float>;
// {C,H,W} unit-range image; same storage, named for intent.
using Image = TensorT<float>;

}  // namespace bair
