#include "domino/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "domino/error.hpp"
#include "domino/kernels.hpp"

namespace domino {

namespace {

template <typename T>
const BasicTensor<T>& param(const BasicParams<T>& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw Error(ErrorCode::DanglingTensorRef, "missing parameter '" + name + "'");
  return it->second;
}

template <typename T>
BasicTensor<T> activation_tensor(const LayerNode& l, std::size_t batch) {
  return BasicTensor<T>({batch, l.out_channels, l.out_height, l.out_width});
}

template <typename T>
void add_into(BasicTensor<T>& dst, const BasicTensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
std::size_t argmax_row(const T* row, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < n; ++k) {
    if (row[k] > row[best]) best = k;
  }
  return best;
}

template <typename T>
void pool_forward(const LayerNode& l, const BasicTensor<T>& in, BasicTensor<T>& out, bool max) {
  const std::size_t k = l.kernel, s = l.stride;
  for (std::size_t n = 0; n < in.dim(0); ++n) {
    for (std::size_t c = 0; c < l.out_channels; ++c) {
      auto src = in.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t oy = 0; oy < l.out_height; ++oy) {
        for (std::size_t ox = 0; ox < l.out_width; ++ox) {
          double acc = max ? static_cast<double>(src[(oy * s) * l.in_width + ox * s]) : 0.0;
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const double v = src[(oy * s + ky) * l.in_width + ox * s + kx];
              acc = max ? std::max(acc, v) : acc + v;
            }
          }
          dst[oy * l.out_width + ox] = static_cast<T>(max ? acc : acc / static_cast<double>(k * k));
        }
      }
    }
  }
}

template <typename T>
void pool_backward(const LayerNode& l, const BasicTensor<T>& in, const BasicTensor<T>& gout, BasicTensor<T>& gin,
                   bool max) {
  const std::size_t k = l.kernel, s = l.stride;
  for (std::size_t n = 0; n < in.dim(0); ++n) {
    for (std::size_t c = 0; c < l.out_channels; ++c) {
      auto src = in.plane(n, c);
      auto g = gout.plane(n, c);
      auto dst = gin.plane(n, c);
      for (std::size_t oy = 0; oy < l.out_height; ++oy) {
        for (std::size_t ox = 0; ox < l.out_width; ++ox) {
          const T go = g[oy * l.out_width + ox];
          if (max) {
            std::size_t best = (oy * s) * l.in_width + ox * s;
            for (std::size_t ky = 0; ky < k; ++ky) {
              for (std::size_t kx = 0; kx < k; ++kx) {
                const std::size_t idx = (oy * s + ky) * l.in_width + ox * s + kx;
                if (src[idx] > src[best]) best = idx;
              }
            }
            dst[best] += go;
          } else {
            const T share = static_cast<T>(static_cast<double>(go) / static_cast<double>(k * k));
            for (std::size_t ky = 0; ky < k; ++ky) {
              for (std::size_t kx = 0; kx < k; ++kx) dst[(oy * s + ky) * l.in_width + ox * s + kx] += share;
            }
          }
        }
      }
    }
  }
}

template <typename T>
void run_forward(BasicBatchResult<T>& r, const BasicParams<T>& params, const BasicTensor<T>& batch,
                 std::span<const int> labels) {
  const NetworkGraph& g = r.graph;
  const LayerNode& input = g.layer(g.input_index());
  if (batch.rank() != 4 || batch.dim(1) != input.out_channels || batch.dim(2) != input.out_height ||
      batch.dim(3) != input.out_width) {
    throw Error(ErrorCode::ShapeMismatch, "batch " + shape_string(batch.dims()) + " does not match input '" +
                                              input.id + "'");
  }
  const std::size_t N = batch.dim(0);
  if (!labels.empty() && labels.size() != N) {
    throw Error(ErrorCode::ShapeMismatch, "label count does not match batch size");
  }
  r.batch = N;
  r.activations.assign(g.size(), {});

  for (std::size_t i = 0; i < g.size(); ++i) {
    const LayerNode& l = g.layer(i);
    const auto& preds = g.predecessors(i);
    if (l.kind == LayerKind::Input) {
      r.activations[i] = batch;
      continue;
    }
    const BasicTensor<T>& in = r.activations[preds.front()];
    BasicTensor<T> out = activation_tensor<T>(l, N);
    switch (l.kind) {
      case LayerKind::Conv2D:
      case LayerKind::FullyConnected: {
        const BasicTensor<T>* bias = l.params.bias.empty() ? nullptr : &param(params, l.params.bias);
        kernels::conv_forward(kernels::geometry_of(l), in, param(params, l.params.weight), bias, out);
        break;
      }
      case LayerKind::EltwiseAdd:
        out = in;
        for (std::size_t k = 1; k < preds.size(); ++k) add_into(out, r.activations[preds[k]]);
        break;
      case LayerKind::ReLU:
        for (std::size_t e = 0; e < out.size(); ++e) out[e] = in[e] > T(0) ? in[e] : T(0);
        break;
      case LayerKind::BatchNorm: {
        const auto &scale = param(params, l.params.scale), &shift = param(params, l.params.shift);
        const auto &mean = param(params, l.params.mean), &var = param(params, l.params.var);
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t c = 0; c < l.out_channels; ++c) {
            const double inv = 1.0 / std::sqrt(static_cast<double>(var[c]) + kBatchNormEpsilon);
            auto src = in.plane(n, c);
            auto dst = out.plane(n, c);
            for (std::size_t e = 0; e < src.size(); ++e) {
              dst[e] = static_cast<T>(static_cast<double>(scale[c]) * (src[e] - static_cast<double>(mean[c])) * inv +
                                      static_cast<double>(shift[c]));
            }
          }
        }
        break;
      }
      case LayerKind::Bias: {
        const auto& b = param(params, l.params.bias);
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t c = 0; c < l.out_channels; ++c) {
            auto src = in.plane(n, c);
            auto dst = out.plane(n, c);
            for (std::size_t e = 0; e < src.size(); ++e) dst[e] = src[e] + b[c];
          }
        }
        break;
      }
      case LayerKind::MaxPool:
        pool_forward(l, in, out, true);
        break;
      case LayerKind::AvgPool:
        pool_forward(l, in, out, false);
        break;
      case LayerKind::GlobalAvgPool:
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t c = 0; c < l.out_channels; ++c) {
            auto src = in.plane(n, c);
            double acc = 0.0;
            for (T v : src) acc += v;
            out.plane(n, c)[0] = static_cast<T>(acc / static_cast<double>(src.size()));
          }
        }
        break;
      case LayerKind::Flatten:
      case LayerKind::SoftmaxLoss:
        out = in;
        break;
      case LayerKind::Input:
        break;
    }
    r.activations[i] = std::move(out);
  }

  const BasicTensor<T>& z = r.activations[g.loss_index()];
  const std::size_t K = z.dim(1);
  r.loss = 0.0;
  r.correct = 0;
  if (labels.empty()) return;
  for (std::size_t n = 0; n < N; ++n) {
    const T* row = z.data() + n * K;
    const std::size_t top = argmax_row(row, K);
    const double zmax = row[top];
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(static_cast<double>(row[k]) - zmax);
    const auto label = static_cast<std::size_t>(labels[n]);
    if (label >= K) throw Error(ErrorCode::ShapeMismatch, "label out of range of logits");
    r.loss += zmax + std::log(sum) - static_cast<double>(row[label]);
    r.correct += top == label;
  }
  r.loss /= static_cast<double>(N);
}

template <typename T>
void run_backward(BasicBatchResult<T>& r, const BasicParams<T>& params, std::span<const int> labels) {
  const NetworkGraph& g = r.graph;
  const std::size_t N = r.batch;
  r.has_grads = true;
  r.grads_a.assign(g.size(), {});
  r.grads_in.assign(g.size(), {});
  r.grads_w.clear();

  auto grad_of = [&](std::size_t i) -> BasicTensor<T>& {
    if (r.grads_a[i].empty()) r.grads_a[i] = BasicTensor<T>(r.activations[i].dims());
    return r.grads_a[i];
  };
  auto param_grad = [&](const std::string& name) -> BasicTensor<T>& {
    auto it = r.grads_w.find(name);
    if (it == r.grads_w.end()) it = r.grads_w.emplace(name, BasicTensor<T>(param(params, name).dims())).first;
    return it->second;
  };

  {
    const std::size_t loss = g.loss_index();
    const BasicTensor<T>& z = r.activations[loss];
    const std::size_t K = z.dim(1);
    BasicTensor<T>& gz = grad_of(loss);
    for (std::size_t n = 0; n < N; ++n) {
      const T* row = z.data() + n * K;
      const double zmax = row[argmax_row(row, K)];
      double sum = 0.0;
      for (std::size_t k = 0; k < K; ++k) sum += std::exp(static_cast<double>(row[k]) - zmax);
      for (std::size_t k = 0; k < K; ++k) {
        const double p = std::exp(static_cast<double>(row[k]) - zmax) / sum;
        gz[n * K + k] = static_cast<T>((p - (static_cast<std::size_t>(labels[n]) == k ? 1.0 : 0.0)) /
                                       static_cast<double>(N));
      }
    }
  }

  for (std::size_t ii = g.size(); ii-- > 0;) {
    const LayerNode& l = g.layer(ii);
    if (l.kind == LayerKind::Input) continue;
    const BasicTensor<T>& gout = grad_of(ii);
    const auto& preds = g.predecessors(ii);
    const std::size_t p = preds.front();
    const BasicTensor<T>& in = r.activations[p];

    switch (l.kind) {
      case LayerKind::Conv2D:
      case LayerKind::FullyConnected: {
        const auto geom = kernels::geometry_of(l);
        const auto& w = param(params, l.params.weight);
        BasicTensor<T> gw(w.dims());
        BasicTensor<T> gb;
        if (!l.params.bias.empty()) gb = BasicTensor<T>({l.out_channels});
        kernels::conv_backward_params(geom, in, gout, gw, l.params.bias.empty() ? nullptr : &gb);
        add_into(param_grad(l.params.weight), gw);
        if (!l.params.bias.empty()) add_into(param_grad(l.params.bias), gb);
        BasicTensor<T> gin(in.dims());
        kernels::conv_backward_input(geom, gout, w, gin);
        add_into(grad_of(p), gin);
        r.grads_in[ii] = std::move(gin);
        break;
      }
      case LayerKind::EltwiseAdd:
        for (std::size_t q : preds) add_into(grad_of(q), gout);
        break;
      case LayerKind::ReLU: {
        BasicTensor<T>& gin = grad_of(p);
        for (std::size_t e = 0; e < gin.size(); ++e) {
          if (in[e] > T(0)) gin[e] += gout[e];
        }
        break;
      }
      case LayerKind::BatchNorm: {
        const auto &scale = param(params, l.params.scale), &mean = param(params, l.params.mean);
        const auto& var = param(params, l.params.var);
        auto &gscale = param_grad(l.params.scale), &gshift = param_grad(l.params.shift);
        auto &gmean = param_grad(l.params.mean), &gvar = param_grad(l.params.var);
        BasicTensor<T>& gin = grad_of(p);
        for (std::size_t c = 0; c < l.out_channels; ++c) {
          const double v = static_cast<double>(var[c]) + kBatchNormEpsilon;
          const double inv = 1.0 / std::sqrt(v);
          const double sc = scale[c], mu = mean[c];
          double dscale = 0.0, dshift = 0.0, dcentered = 0.0;
          for (std::size_t n = 0; n < N; ++n) {
            auto x = in.plane(n, c);
            auto go = gout.plane(n, c);
            auto gi = gin.plane(n, c);
            for (std::size_t e = 0; e < x.size(); ++e) {
              const double d = go[e];
              dshift += d;
              dscale += d * (x[e] - mu) * inv;
              dcentered += d * (x[e] - mu);
              gi[e] += static_cast<T>(d * sc * inv);
            }
          }
          gscale[c] += static_cast<T>(dscale);
          gshift[c] += static_cast<T>(dshift);
          gmean[c] += static_cast<T>(-dshift * sc * inv);
          gvar[c] += static_cast<T>(-0.5 * sc * dcentered * inv / v);
        }
        break;
      }
      case LayerKind::Bias: {
        auto& gb = param_grad(l.params.bias);
        BasicTensor<T>& gin = grad_of(p);
        for (std::size_t c = 0; c < l.out_channels; ++c) {
          double acc = 0.0;
          for (std::size_t n = 0; n < N; ++n) {
            auto go = gout.plane(n, c);
            auto gi = gin.plane(n, c);
            for (std::size_t e = 0; e < go.size(); ++e) {
              acc += go[e];
              gi[e] += go[e];
            }
          }
          gb[c] += static_cast<T>(acc);
        }
        break;
      }
      case LayerKind::MaxPool:
        pool_backward(l, in, gout, grad_of(p), true);
        break;
      case LayerKind::AvgPool:
        pool_backward(l, in, gout, grad_of(p), false);
        break;
      case LayerKind::GlobalAvgPool: {
        BasicTensor<T>& gin = grad_of(p);
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t c = 0; c < l.out_channels; ++c) {
            auto gi = gin.plane(n, c);
            const T share = static_cast<T>(static_cast<double>(gout.plane(n, c)[0]) / static_cast<double>(gi.size()));
            for (auto& v : gi) v += share;
          }
        }
        break;
      }
      case LayerKind::Flatten:
      case LayerKind::SoftmaxLoss:
        add_into(grad_of(p), gout);
        break;
      case LayerKind::Input:
        break;
    }
  }
  for (std::size_t i = 0; i < g.size(); ++i) grad_of(i);
}

template <typename T>
BasicBatchResult<T> make_result(const NetworkGraph& net) {
  BasicBatchResult<T> r;
  r.graph = expand_absorbed(net);
  return r;
}

}  // namespace

template <typename T>
BasicBatchResult<T> forward(const NetworkGraph& net, const BasicParams<T>& params, const BasicTensor<T>& batch,
                            std::span<const int> labels) {
  auto r = make_result<T>(net);
  run_forward(r, params, batch, labels);
  return r;
}

template <typename T>
BasicBatchResult<T> backward(const NetworkGraph& net, const BasicParams<T>& params, const BasicTensor<T>& batch,
                             std::span<const int> labels) {
  if (labels.size() != batch.dim(0)) throw Error(ErrorCode::ShapeMismatch, "backward needs one label per item");
  auto r = make_result<T>(net);
  run_forward(r, params, batch, labels);
  run_backward(r, params, labels);
  return r;
}

template BasicBatchResult<float> forward(const NetworkGraph&, const BasicParams<float>&, const BasicTensor<float>&,
                                         std::span<const int>);
template BasicBatchResult<double> forward(const NetworkGraph&, const BasicParams<double>&,
                                          const BasicTensor<double>&, std::span<const int>);
template BasicBatchResult<float> backward(const NetworkGraph&, const BasicParams<float>&, const BasicTensor<float>&,
                                          std::span<const int>);
template BasicBatchResult<double> backward(const NetworkGraph&, const BasicParams<double>&,
                                           const BasicTensor<double>&, std::span<const int>);

BatchResult forward(const NetworkGraph& net, const TensorStore& params, const Tensor& batch,
                    std::span<const int> labels) {
  return forward<float>(net, params.tensors(), batch, labels);
}

BatchResult backward(const NetworkGraph& net, const TensorStore& params, const Tensor& batch,
                     std::span<const int> labels) {
  return backward<float>(net, params.tensors(), batch, labels);
}

Tensor logits(const NetworkGraph& net, const TensorStore& params, const Tensor& batch) {
  auto r = forward<float>(net, params.tensors(), batch, {});
  return r.activations[r.graph.loss_index()];
}

double evaluate_accuracy(const NetworkGraph& net, const TensorStore& params, const Dataset& data,
                         std::size_t batch_size) {
  if (data.size() == 0) throw Error(ErrorCode::EmptyDataset, "evaluation split '" + data.split + "' is empty");
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(data.size(), begin + batch_size);
    const Tensor batch = data.slice(begin, end);
    auto r = forward<float>(net, params.tensors(), batch,
                            std::span<const int>(data.labels).subspan(begin, end - begin));
    correct += r.correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

BasicParams<double> to_double(const TensorStore& store) {
  BasicParams<double> out;
  for (const auto& [name, t] : store) out.emplace(name, tensor_cast<double>(t));
  return out;
}

BasicParams<float> to_float(const TensorStore& store) { return store.tensors(); }

double train_sgd(const NetworkGraph& net, TensorStore& params, const Dataset& train, const TrainConfig& cfg) {
  if (train.size() == 0) throw Error(ErrorCode::EmptyDataset, "training split is empty");
  const NetworkGraph g = expand_absorbed(net);

  struct Slot {
    std::string name;
    bool decay;
  };
  std::vector<Slot> trainable;
  for (const LayerNode& l : g.layers()) {
    if (is_weight_bearing(l.kind)) {
      trainable.push_back({l.params.weight, true});
      if (!l.params.bias.empty()) trainable.push_back({l.params.bias, false});
    } else if (l.kind == LayerKind::BatchNorm) {
      trainable.push_back({l.params.scale, false});
      trainable.push_back({l.params.shift, false});
    } else if (l.kind == LayerKind::Bias) {
      trainable.push_back({l.params.bias, false});
    }
  }
  std::map<std::string, std::vector<float>> velocity;
  for (const auto& s : trainable) velocity[s.name].assign(params.at(s.name).size(), 0.0f);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t steps_per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  const double total_steps = static_cast<double>(cfg.epochs * steps_per_epoch);
  std::size_t step = 0;
  double epoch_loss = 0.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const Dataset mb = train.gather({order.begin() + static_cast<long>(begin), order.begin() + static_cast<long>(end)});
      auto r = backward<float>(g, params.tensors(), mb.images, mb.labels);
      epoch_loss += r.loss * static_cast<double>(end - begin);
      const double lr = cfg.learning_rate * (1.0 - static_cast<double>(step) / total_steps);
      ++step;
      for (const auto& s : trainable) {
        Tensor& w = params.at(s.name);
        const Tensor& grad = r.grads_w.at(s.name);
        auto& v = velocity[s.name];
        for (std::size_t e = 0; e < w.size(); ++e) {
          const double d = grad[e] + (s.decay ? cfg.weight_decay * w[e] : 0.0);
          v[e] = static_cast<float>(cfg.momentum * v[e] - lr * d);
          w[e] += v[e];
        }
      }
    }
  }
  return epoch_loss / static_cast<double>(train.size());
}

}  // namespace domino
