#include "domino/tensor.hpp"

#include "domino/error.hpp"

namespace domino {

template <typename T>
BasicTensor<T>::BasicTensor(std::vector<std::size_t> dims, std::vector<T> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (element_count(dims_) != data_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "tensor " + shape_string(dims_) + " given " +
                                              std::to_string(data_.size()) + " elements");
  }
}

std::string shape_string(const std::vector<std::size_t>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace domino
