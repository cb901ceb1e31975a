#include "domino/kernels.hpp"

#include <vector>

#include "domino/error.hpp"

namespace domino::kernels {

ConvGeometry geometry_of(const LayerNode& layer) {
  ConvGeometry g;
  g.in_c = layer.in_channels;
  g.in_h = layer.in_height;
  g.in_w = layer.in_width;
  g.out_c = layer.out_channels;
  g.out_h = layer.out_height;
  g.out_w = layer.out_width;
  if (layer.kind == LayerKind::Conv2D) {
    g.kh = g.kw = layer.kernel;
    g.stride = layer.stride;
    g.pad = layer.pad;
    g.groups = layer.groups;
    g.mapping = layer.mapping;
  } else if (layer.kind == LayerKind::FullyConnected) {
    g.kh = layer.in_height;
    g.kw = layer.in_width;
  } else {
    throw Error(ErrorCode::InvalidArgument, "layer '" + layer.id + "' is not weight-bearing");
  }
  return g;
}

namespace {

// Range of output positions whose input coordinate pos*stride + k - pad lies in [0, extent).
struct Span {
  std::size_t lo, hi;
};

Span valid_outputs(std::size_t out_extent, std::size_t in_extent, std::size_t k, std::size_t stride,
                   std::size_t pad) {
  std::size_t lo = 0;
  if (k < pad) lo = (pad - k + stride - 1) / stride;
  std::size_t hi = 0;
  if (in_extent + pad > k) hi = (in_extent + pad - k - 1) / stride + 1;
  if (hi > out_extent) hi = out_extent;
  if (lo > hi) lo = hi;
  return {lo, hi};
}

void check_batch(const ConvGeometry& g, const std::vector<std::size_t>& in_dims,
                 const std::vector<std::size_t>& out_dims) {
  if (in_dims.size() != 4 || in_dims[1] != g.in_c || in_dims[2] != g.in_h || in_dims[3] != g.in_w ||
      out_dims.size() != 4 || out_dims[0] != in_dims[0] || out_dims[1] != g.out_c || out_dims[2] != g.out_h ||
      out_dims[3] != g.out_w) {
    throw Error(ErrorCode::ShapeMismatch, "conv kernel got input " + shape_string(in_dims) + " and output " +
                                              shape_string(out_dims));
  }
}

}  // namespace

template <typename T>
void conv_forward(const ConvGeometry& g, const BasicTensor<T>& in, const BasicTensor<T>& weight,
                  const BasicTensor<T>* bias, BasicTensor<T>& out) {
  check_batch(g, in.dims(), out.dims());
  const long batch = static_cast<long>(in.dim(0));
  const std::size_t slots = g.slots();
  const std::size_t out_hw = g.out_h * g.out_w;

#pragma omp parallel for schedule(static)
  for (long n = 0; n < batch; ++n) {
    std::vector<double> acc(out_hw);
    for (std::size_t o = 0; o < g.out_c; ++o) {
      const double b = bias ? static_cast<double>((*bias)[o]) : 0.0;
      std::fill(acc.begin(), acc.end(), b);
      const std::size_t grp = g.group_of_output(o);
      for (std::size_t s = 0; s < slots; ++s) {
        const T* src = in.plane(n, g.channel_of(grp, s)).data();
        const T* w = weight.data() + ((o * slots + s) * g.kh) * g.kw;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const Span ys = valid_outputs(g.out_h, g.in_h, ky, g.stride, g.pad);
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const Span xs = valid_outputs(g.out_w, g.in_w, kx, g.stride, g.pad);
            const double wv = static_cast<double>(w[ky * g.kw + kx]);
            for (std::size_t oy = ys.lo; oy < ys.hi; ++oy) {
              const T* row = src + (oy * g.stride + ky - g.pad) * g.in_w;
              double* dst = acc.data() + oy * g.out_w;
              for (std::size_t ox = xs.lo; ox < xs.hi; ++ox) {
                dst[ox] += wv * static_cast<double>(row[ox * g.stride + kx - g.pad]);
              }
            }
          }
        }
      }
      auto plane = out.plane(n, o);
      for (std::size_t i = 0; i < out_hw; ++i) plane[i] = static_cast<T>(acc[i]);
    }
  }
}

template <typename T>
void conv_backward_input(const ConvGeometry& g, const BasicTensor<T>& grad_out, const BasicTensor<T>& weight,
                         BasicTensor<T>& grad_in) {
  check_batch(g, grad_in.dims(), grad_out.dims());
  const long batch = static_cast<long>(grad_in.dim(0));
  const std::size_t slots = g.slots();
  const std::size_t in_hw = g.in_h * g.in_w;

#pragma omp parallel for schedule(static)
  for (long n = 0; n < batch; ++n) {
    std::vector<double> acc(g.in_c * in_hw, 0.0);
    for (std::size_t o = 0; o < g.out_c; ++o) {
      const T* go = grad_out.plane(n, o).data();
      const std::size_t grp = g.group_of_output(o);
      for (std::size_t s = 0; s < slots; ++s) {
        double* dst = acc.data() + g.channel_of(grp, s) * in_hw;
        const T* w = weight.data() + ((o * slots + s) * g.kh) * g.kw;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const Span ys = valid_outputs(g.out_h, g.in_h, ky, g.stride, g.pad);
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const Span xs = valid_outputs(g.out_w, g.in_w, kx, g.stride, g.pad);
            const double wv = static_cast<double>(w[ky * g.kw + kx]);
            for (std::size_t oy = ys.lo; oy < ys.hi; ++oy) {
              double* row = dst + (oy * g.stride + ky - g.pad) * g.in_w;
              const T* gorow = go + oy * g.out_w;
              for (std::size_t ox = xs.lo; ox < xs.hi; ++ox) {
                row[ox * g.stride + kx - g.pad] += wv * static_cast<double>(gorow[ox]);
              }
            }
          }
        }
      }
    }
    T* out = grad_in.data() + static_cast<std::size_t>(n) * g.in_c * in_hw;
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<T>(acc[i]);
  }
}

template <typename T>
void conv_backward_params(const ConvGeometry& g, const BasicTensor<T>& in, const BasicTensor<T>& grad_out,
                          BasicTensor<T>& grad_weight, BasicTensor<T>* grad_bias) {
  check_batch(g, in.dims(), grad_out.dims());
  const std::size_t batch = in.dim(0);
  const std::size_t slots = g.slots();
  const long out_c = static_cast<long>(g.out_c);

  // Parallel over filters; each filter reduces over the batch in item order.
#pragma omp parallel for schedule(static)
  for (long ol = 0; ol < out_c; ++ol) {
    const auto o = static_cast<std::size_t>(ol);
    const std::size_t grp = g.group_of_output(o);
    std::vector<double> acc(slots * g.kh * g.kw, 0.0);
    double bias_acc = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const T* go = grad_out.plane(n, o).data();
      if (grad_bias) {
        for (std::size_t i = 0; i < g.out_h * g.out_w; ++i) bias_acc += static_cast<double>(go[i]);
      }
      for (std::size_t s = 0; s < slots; ++s) {
        const T* src = in.plane(n, g.channel_of(grp, s)).data();
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const Span ys = valid_outputs(g.out_h, g.in_h, ky, g.stride, g.pad);
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const Span xs = valid_outputs(g.out_w, g.in_w, kx, g.stride, g.pad);
            double sum = 0.0;
            for (std::size_t oy = ys.lo; oy < ys.hi; ++oy) {
              const T* row = src + (oy * g.stride + ky - g.pad) * g.in_w;
              const T* gorow = go + oy * g.out_w;
              for (std::size_t ox = xs.lo; ox < xs.hi; ++ox) {
                sum += static_cast<double>(gorow[ox]) * static_cast<double>(row[ox * g.stride + kx - g.pad]);
              }
            }
            acc[(s * g.kh + ky) * g.kw + kx] += sum;
          }
        }
      }
    }
    T* gw = grad_weight.data() + o * acc.size();
    for (std::size_t i = 0; i < acc.size(); ++i) gw[i] = static_cast<T>(acc[i]);
    if (grad_bias) (*grad_bias)[o] = static_cast<T>(bias_acc);
  }
}

namespace reference {

namespace {

// Input coordinate for output position `pos` and kernel offset `k`, or -1.
long input_coord(std::size_t pos, std::size_t k, std::size_t stride, std::size_t pad, std::size_t extent) {
  const long c = static_cast<long>(pos * stride + k) - static_cast<long>(pad);
  return (c < 0 || c >= static_cast<long>(extent)) ? -1 : c;
}

}  // namespace

template <typename T>
void conv_forward(const ConvGeometry& g, const BasicTensor<T>& in, const BasicTensor<T>& weight,
                  const BasicTensor<T>* bias, BasicTensor<T>& out) {
  check_batch(g, in.dims(), out.dims());
  const std::size_t slots = g.slots();
  for (std::size_t n = 0; n < in.dim(0); ++n) {
    for (std::size_t o = 0; o < g.out_c; ++o) {
      const std::size_t grp = g.group_of_output(o);
      for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          double sum = bias ? static_cast<double>((*bias)[o]) : 0.0;
          for (std::size_t s = 0; s < slots; ++s) {
            const std::size_t c = g.channel_of(grp, s);
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
              const long iy = input_coord(oy, ky, g.stride, g.pad, g.in_h);
              if (iy < 0) continue;
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const long ix = input_coord(ox, kx, g.stride, g.pad, g.in_w);
                if (ix < 0) continue;
                const double w = weight[((o * slots + s) * g.kh + ky) * g.kw + kx];
                const double x = in[((n * g.in_c + c) * g.in_h + iy) * g.in_w + ix];
                sum += w * x;
              }
            }
          }
          out[((n * g.out_c + o) * g.out_h + oy) * g.out_w + ox] = static_cast<T>(sum);
        }
      }
    }
  }
}

template <typename T>
void conv_backward_input(const ConvGeometry& g, const BasicTensor<T>& grad_out, const BasicTensor<T>& weight,
                         BasicTensor<T>& grad_in) {
  check_batch(g, grad_in.dims(), grad_out.dims());
  const std::size_t slots = g.slots();
  // Gather form: each input element sums over the outputs that read it.
  for (std::size_t n = 0; n < grad_in.dim(0); ++n) {
    for (std::size_t c = 0; c < g.in_c; ++c) {
      for (std::size_t iy = 0; iy < g.in_h; ++iy) {
        for (std::size_t ix = 0; ix < g.in_w; ++ix) {
          double sum = 0.0;
          for (std::size_t o = 0; o < g.out_c; ++o) {
            const std::size_t grp = g.group_of_output(o);
            for (std::size_t s = 0; s < slots; ++s) {
              if (g.channel_of(grp, s) != c) continue;
              for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                  const long ky = static_cast<long>(iy + g.pad) - static_cast<long>(oy * g.stride);
                  const long kx = static_cast<long>(ix + g.pad) - static_cast<long>(ox * g.stride);
                  if (ky < 0 || kx < 0 || ky >= static_cast<long>(g.kh) || kx >= static_cast<long>(g.kw)) continue;
                  sum += static_cast<double>(weight[((o * slots + s) * g.kh + ky) * g.kw + kx]) *
                         static_cast<double>(grad_out[((n * g.out_c + o) * g.out_h + oy) * g.out_w + ox]);
                }
              }
            }
          }
          grad_in[((n * g.in_c + c) * g.in_h + iy) * g.in_w + ix] = static_cast<T>(sum);
        }
      }
    }
  }
}

template <typename T>
void conv_backward_params(const ConvGeometry& g, const BasicTensor<T>& in, const BasicTensor<T>& grad_out,
                          BasicTensor<T>& grad_weight, BasicTensor<T>* grad_bias) {
  check_batch(g, in.dims(), grad_out.dims());
  const std::size_t slots = g.slots();
  for (std::size_t o = 0; o < g.out_c; ++o) {
    const std::size_t grp = g.group_of_output(o);
    for (std::size_t s = 0; s < slots; ++s) {
      const std::size_t c = g.channel_of(grp, s);
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          double sum = 0.0;
          for (std::size_t n = 0; n < in.dim(0); ++n) {
            for (std::size_t oy = 0; oy < g.out_h; ++oy) {
              const long iy = input_coord(oy, ky, g.stride, g.pad, g.in_h);
              if (iy < 0) continue;
              for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                const long ix = input_coord(ox, kx, g.stride, g.pad, g.in_w);
                if (ix < 0) continue;
                sum += static_cast<double>(grad_out[((n * g.out_c + o) * g.out_h + oy) * g.out_w + ox]) *
                       static_cast<double>(in[((n * g.in_c + c) * g.in_h + iy) * g.in_w + ix]);
              }
            }
          }
          grad_weight[((o * slots + s) * g.kh + ky) * g.kw + kx] = static_cast<T>(sum);
        }
      }
    }
    if (grad_bias) {
      double sum = 0.0;
      for (std::size_t n = 0; n < in.dim(0); ++n) {
        for (std::size_t i = 0; i < g.out_h * g.out_w; ++i) sum += grad_out[(n * g.out_c + o) * g.out_h * g.out_w + i];
      }
      (*grad_bias)[o] = static_cast<T>(sum);
    }
  }
}

}  // namespace reference

#define DOMINO_INSTANTIATE(T)                                                                                   \
  template void conv_forward<T>(const ConvGeometry&, const BasicTensor<T>&, const BasicTensor<T>&,            \
                                const BasicTensor<T>*, BasicTensor<T>&);                                      \
  template void conv_backward_input<T>(const ConvGeometry&, const BasicTensor<T>&, const BasicTensor<T>&,     \
                                       BasicTensor<T>&);                                                      \
  template void conv_backward_params<T>(const ConvGeometry&, const BasicTensor<T>&, const BasicTensor<T>&,    \
                                        BasicTensor<T>&, BasicTensor<T>*);                                    \
  template void reference::conv_forward<T>(const ConvGeometry&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                           const BasicTensor<T>*, BasicTensor<T>&);                           \
  template void reference::conv_backward_input<T>(const ConvGeometry&, const BasicTensor<T>&,                 \
                                                  const BasicTensor<T>&, BasicTensor<T>&);                    \
  template void reference::conv_backward_params<T>(const ConvGeometry&, const BasicTensor<T>&,                \
                                                   const BasicTensor<T>&, BasicTensor<T>&, BasicTensor<T>*);

DOMINO_INSTANTIATE(float)
DOMINO_INSTANTIATE(double)

#undef DOMINO_INSTANTIATE

}  // namespace domino::kernels
