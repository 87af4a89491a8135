#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tuap/errors.hpp"

namespace tuap {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Values double as the on-disk encoding of p.
enum class NormType : std::uint8_t { l1 = 1, l2 = 2, linf = 255 };

inline std::string_view to_string(NormType p) {
  switch (p) {
    case NormType::l1: return "1";
    case NormType::l2: return "2";
    case NormType::linf: return "inf";
  }
  return "?";
}

inline NormType parse_norm_type(std::string_view s) {
  if (s == "1") return NormType::l1;
  if (s == "2") return NormType::l2;
  if (s == "inf" || s == "Inf" || s == "INF") return NormType::linf;
  throw domain_error("norm type must be one of 1, 2, inf (got '" + std::string(s) + "')");
}

inline NormType norm_type_from_code(unsigned code) {
  switch (code) {
    case 1: return NormType::l1;
    case 2: return NormType::l2;
    case 255: return NormType::linf;
    default: throw domain_error("invalid norm type code " + std::to_string(code));
  }
}

/// Dense row-major array with explicit shape. No views or strides; copies are deep.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{}) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    check_dims();
  }

  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (shape_size(shape_) != data_.size())
      throw shape_error("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                        shape_string(shape_));
  }

  /// Rank-1 tensor from a literal list.
  static BasicTensor of(std::initializer_list<T> values) { return BasicTensor(Shape{values.size()}, std::vector<T>(values)); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  /// Same data, new shape of equal element count.
  BasicTensor reshaped(Shape shape) const { return BasicTensor(std::move(shape), data_); }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  void check_dims() const {
    for (auto d : shape_)
      if (d == 0) throw shape_error("tensor dimensions must be positive, got " + shape_string(shape_));
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<double>;

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, std::string_view what) {
  if (a.shape() != b.shape())
    throw shape_error(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                      shape_string(b.shape()));
}

template <typename T>
double lp_norm(const BasicTensor<T>& t, NormType p) {
  if (t.empty()) throw domain_error("lp_norm of an empty tensor");
  // Accumulate in long double; gradient sums run over thousands of pixels.
  long double acc = 0;
  switch (p) {
    case NormType::l1:
      for (auto v : t) acc += std::abs(static_cast<long double>(v));
      return static_cast<double>(acc);
    case NormType::l2: {
      // Scale by the max to avoid overflow on large entries.
      long double m = 0;
      for (auto v : t) m = std::max(m, std::abs(static_cast<long double>(v)));
      if (m == 0) return 0.0;
      for (auto v : t) {
        long double s = static_cast<long double>(v) / m;
        acc += s * s;
      }
      return static_cast<double>(m * std::sqrt(acc));
    }
    case NormType::linf:
      for (auto v : t) acc = std::max(acc, std::abs(static_cast<long double>(v)));
      return static_cast<double>(acc);
  }
  return 0.0;
}

/// Elementwise sign with sign(0) == 0.
template <typename T>
BasicTensor<T> sign(const BasicTensor<T>& t) {
  BasicTensor<T> out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<T>((t[i] > 0) - (t[i] < 0));
  return out;
}

/// a*x + y.
template <typename T>
BasicTensor<T> axpy(T a, const BasicTensor<T>& x, const BasicTensor<T>& y) {
  require_same_shape(x, y, "axpy");
  BasicTensor<T> out = y;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += a * x[i];
  return out;
}

template <typename T>
BasicTensor<T> operator+(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return axpy(T{1}, a, b);
}

template <typename T>
BasicTensor<T> operator-(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return axpy(T{-1}, b, a);
}

template <typename T>
BasicTensor<T> operator*(T a, BasicTensor<T> t) {
  for (auto& v : t) v *= a;
  return t;
}

template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "dot");
  long double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<long double>(a[i]) * b[i];
  return static_cast<double>(acc);
}

template <typename T>
bool all_finite(const BasicTensor<T>& t) {
  return std::all_of(t.begin(), t.end(), [](T v) { return std::isfinite(v); });
}

/// Index of the largest element; ties go to the lowest index.
template <typename T>
std::size_t argmax(const BasicTensor<T>& t) {
  if (t.empty()) throw domain_error("argmax of an empty tensor");
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] > t[best]) best = i;
  return best;
}

}  // namespace tuap
