#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "fingerdiff/errors.hpp"

namespace fingerdiff {

// Dense row-major n-d array. Deliberately minimal: shape bookkeeping plus a
// flat buffer; all math lives in the layer code.
template <typename T>
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)), data(numel_of(shape)) {}
  Tensor(std::initializer_list<std::int64_t> s) : Tensor(std::vector<std::int64_t>(s)) {}

  static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

  void zero() { std::fill(data.begin(), data.end(), T(0)); }

  void reshape(std::vector<std::int64_t> s) {
    if (numel_of(s) != numel()) throw NumericError("reshape changes element count");
    shape = std::move(s);
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (const T& v : t.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

}  // namespace fingerdiff
