#pragma once

#include <cstddef>

#include "domino/graph.hpp"
#include "domino/tensor.hpp"

namespace domino::kernels {

/// Shape of a (grouped) convolution. A fully-connected layer is the special
/// case of a kernel covering the whole input with no padding.
struct ConvGeometry {
  std::size_t in_c = 0, in_h = 0, in_w = 0;
  std::size_t out_c = 0, out_h = 0, out_w = 0;
  std::size_t kh = 1, kw = 1;
  std::size_t stride = 1, pad = 0;
  std::size_t groups = 1;
  GroupMapping mapping = GroupMapping::Interleaved;

  std::size_t slots() const { return in_c / groups; }
  std::size_t group_of_output(std::size_t o) const { return o / (out_c / groups); }
  std::size_t channel_of(std::size_t group, std::size_t slot) const {
    if (groups == 1) return slot;
    return mapping == GroupMapping::Interleaved ? group * slots() + slot : slot * groups + group;
  }
};

ConvGeometry geometry_of(const LayerNode& layer);

// Batch-parallel kernels (OpenMP). Accumulation is in double and in a fixed
// order per output element, so results do not depend on the thread count.

template <typename T>
void conv_forward(const ConvGeometry& g, const BasicTensor<T>& in, const BasicTensor<T>& weight,
                  const BasicTensor<T>* bias, BasicTensor<T>& out);

/// grad_in is overwritten.
template <typename T>
void conv_backward_input(const ConvGeometry& g, const BasicTensor<T>& grad_out, const BasicTensor<T>& weight,
                         BasicTensor<T>& grad_in);

/// grad_weight and grad_bias (if non-null) are overwritten.
template <typename T>
void conv_backward_params(const ConvGeometry& g, const BasicTensor<T>& in, const BasicTensor<T>& grad_out,
                          BasicTensor<T>& grad_weight, BasicTensor<T>* grad_bias);

namespace reference {

/// Serial one-output-element-at-a-time convolution. Kept for tests and the
/// kernel benchmark.
template <typename T>
void conv_forward(const ConvGeometry& g, const BasicTensor<T>& in, const BasicTensor<T>& weight,
                  const BasicTensor<T>* bias, BasicTensor<T>& out);

template <typename T>
void conv_backward_input(const ConvGeometry& g, const BasicTensor<T>& grad_out, const BasicTensor<T>& weight,
                         BasicTensor<T>& grad_in);

template <typename T>
void conv_backward_params(const ConvGeometry& g, const BasicTensor<T>& in, const BasicTensor<T>& grad_out,
                          BasicTensor<T>& grad_weight, BasicTensor<T>* grad_bias);

}  // namespace reference

}  // namespace domino::kernels
