#include "domino/tensor_store.hpp"

#include "domino/error.hpp"

namespace domino {

const Tensor& TensorStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error(ErrorCode::DanglingTensorRef, "no tensor named '" + name + "'");
  return it->second;
}

Tensor& TensorStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error(ErrorCode::DanglingTensorRef, "no tensor named '" + name + "'");
  return it->second;
}

std::size_t TensorStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

}  // namespace domino
