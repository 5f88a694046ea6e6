#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "sspnet/errors.hpp"

namespace ssp {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor, last axis fastest. Rank 1..5. Values are
// immutable once an op has produced them; mutation happens only through
// parameter updates.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(Shape shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(static_cast<size_t>(shape_numel(shape_)), T(0));
  }

  TensorT(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    check(static_cast<int64_t>(data_.size()) == shape_numel(shape_), errc::contract,
          "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
              shape_str(shape_));
  }

  static TensorT full(Shape shape, T value) {
    TensorT t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
  }

  static TensorT zeros(Shape shape) { return TensorT(std::move(shape)); }

  static TensorT of(std::initializer_list<int64_t> shape, std::initializer_list<T> values) {
    return TensorT(Shape(shape), std::vector<T>(values));
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Reshape never changes the element count.
  TensorT reshaped(Shape new_shape) const& {
    check_reshape(new_shape);
    return TensorT(std::move(new_shape), data_);
  }
  TensorT reshaped(Shape new_shape) && {
    check_reshape(new_shape);
    return TensorT(std::move(new_shape), std::move(data_));
  }

  template <typename U>
  TensorT<U> cast() const {
    std::vector<U> out(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return TensorT<U>(shape_, std::move(out));
  }

  void fill(T v) {
    for (auto& x : data_) x = v;
  }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

 private:
  void check_reshape(const Shape& new_shape) const {
    validate_shape(new_shape);
    check(shape_numel(new_shape) == numel(), errc::contract,
          "reshape " + shape_str(shape_) + " -> " + shape_str(new_shape) +
              " changes element count");
  }

  static void validate_shape(const Shape& s) {
    check(!s.empty() && s.size() <= 5, errc::contract,
          "tensor rank must be 1..5, got " + std::to_string(s.size()));
    for (int64_t e : s)
      check(e >= 1, errc::contract, "tensor extents must be positive, got " + shape_str(s));
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

}  // namespace ssp
