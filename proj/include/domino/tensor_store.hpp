#pragma once

#include <map>
#include <string>
#include <vector>

#include "domino/tensor.hpp"

namespace domino {

/// Named float32 parameter tensors. Iteration order is by name, which is also
/// the on-disk record order.
class TensorStore {
public:
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  void put(const std::string& name, Tensor t) { tensors_[name] = std::move(t); }
  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t parameter_count() const;
  const std::map<std::string, Tensor>& tensors() const noexcept { return tensors_; }

  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }
  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }

  bool operator==(const TensorStore&) const = default;

private:
  std::map<std::string, Tensor> tensors_;
};

}  // namespace domino
