#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace domino {

/// Dense row-major tensor of rank <= 4.
///
/// Activations are always rank 4 (batch, channels, height, width). Parameter
/// tensors are rank 4 (weights) or rank 1 (per-channel vectors).
template <typename T>
class BasicTensor {
public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(std::vector<std::size_t> dims, T fill = T{})
      : dims_(std::move(dims)), data_(element_count(dims_), fill) {}
  BasicTensor(std::vector<std::size_t> dims, std::vector<T> data);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Elements per index of axis 0 (one filter, one batch item).
  std::size_t stride0() const noexcept { return dims_.empty() || dims_[0] == 0 ? 0 : data_.size() / dims_[0]; }

  /// Contiguous view of the (n, c) plane of a rank-4 tensor.
  std::span<T> plane(std::size_t n, std::size_t c) {
    const std::size_t hw = dims_[2] * dims_[3];
    return {data_.data() + (n * dims_[1] + c) * hw, hw};
  }
  std::span<const T> plane(std::size_t n, std::size_t c) const {
    const std::size_t hw = dims_[2] * dims_[3];
    return {data_.data() + (n * dims_[1] + c) * hw, hw};
  }

  bool operator==(const BasicTensor&) const = default;

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

private:
  std::vector<std::size_t> dims_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

std::string shape_string(const std::vector<std::size_t>& dims);

/// Element-wise conversion between precisions.
template <typename To, typename From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& src) {
  std::vector<To> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<To>(src[i]);
  return BasicTensor<To>(src.dims(), std::move(out));
}

}  // namespace domino
