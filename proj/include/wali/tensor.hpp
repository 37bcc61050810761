// Copyright 2026 The WaLi Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "wali/errors.hpp"

namespace wali {

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// Complex-valued tensor stored as two row-major real planes. Real and
// imaginary parts are independent real coordinates throughout; every gradient
// in this codebase is taken with respect to both planes separately.
template <typename T>
struct ComplexTensor {
  Shape shape;
  std::vector<T> re, im;

  ComplexTensor() = default;

  explicit ComplexTensor(Shape s) : shape(std::move(s)) {
    const int64_t n = numel_of(shape);
    if (n < 0) throw std::invalid_argument("ComplexTensor: negative extent in " + shape_str(shape));
    re.assign(size_t(n), T(0));
    im.assign(size_t(n), T(0));
  }

  ComplexTensor(Shape s, std::vector<T> r, std::vector<T> i)
      : shape(std::move(s)), re(std::move(r)), im(std::move(i)) {
    const size_t n = size_t(numel_of(shape));
    if (re.size() != n || im.size() != n) {
      throw std::invalid_argument("ComplexTensor: plane size does not match shape " + shape_str(shape));
    }
  }

  static ComplexTensor zeros(Shape s) { return ComplexTensor(std::move(s)); }

  int64_t numel() const { return numel_of(shape); }
  int ndim() const { return int(shape.size()); }
  int64_t dim(int i) const { return shape[size_t(i)]; }

  bool same_shape(const ComplexTensor& o) const { return shape == o.shape; }

  // Row-major strides.
  std::vector<int64_t> strides() const {
    std::vector<int64_t> st(shape.size(), 1);
    for (int i = int(shape.size()) - 2; i >= 0; --i) st[size_t(i)] = st[size_t(i + 1)] * shape[size_t(i + 1)];
    return st;
  }

  template <typename S>
  ComplexTensor<S> cast() const {
    ComplexTensor<S> out;
    out.shape = shape;
    out.re.assign(re.begin(), re.end());
    out.im.assign(im.begin(), im.end());
    return out;
  }
};

template <typename T>
void require_shape(const ComplexTensor<T>& x, const Shape& want, const char* who) {
  if (x.shape != want) {
    throw std::invalid_argument(std::string(who) + ": expected shape " + shape_str(want) + ", got " +
                                shape_str(x.shape));
  }
}

template <typename T>
void require_ndim(const ComplexTensor<T>& x, int nd, const char* who) {
  if (x.ndim() != nd) {
    throw std::invalid_argument(std::string(who) + ": expected " + std::to_string(nd) +
                                "-d tensor, got " + shape_str(x.shape));
  }
}

}  // namespace wali
