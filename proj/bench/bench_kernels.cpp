// Times the OpenMP convolution kernels against the serial reference.
#include <chrono>
#include <cstdio>
#include <random>

#include <omp.h>

#include "domino/kernels.hpp"

using namespace domino;
using kernels::ConvGeometry;

namespace {

Tensor random_tensor(std::vector<std::size_t> dims, std::mt19937_64& rng) {
  Tensor t(std::move(dims));
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

template <typename F>
double best_ms(F&& f, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void run(const char* label, const ConvGeometry& g, std::size_t batch, int reps) {
  std::mt19937_64 rng(7);
  const Tensor in = random_tensor({batch, g.in_c, g.in_h, g.in_w}, rng);
  const Tensor w = random_tensor({g.out_c, g.slots(), g.kh, g.kw}, rng);
  const Tensor b = random_tensor({g.out_c}, rng);
  const Tensor gout = random_tensor({batch, g.out_c, g.out_h, g.out_w}, rng);
  Tensor out({batch, g.out_c, g.out_h, g.out_w}), gin({batch, g.in_c, g.in_h, g.in_w});
  Tensor gw(w.dims()), gb({g.out_c});

  const double fp = best_ms([&] { kernels::conv_forward(g, in, w, &b, out); }, reps);
  const double fr = best_ms([&] { kernels::reference::conv_forward(g, in, w, &b, out); }, reps);
  const double bp = best_ms([&] {
    kernels::conv_backward_input(g, gout, w, gin);
    kernels::conv_backward_params(g, in, gout, gw, &gb);
  }, reps);
  const double br = best_ms([&] {
    kernels::reference::conv_backward_input(g, gout, w, gin);
    kernels::reference::conv_backward_params(g, in, gout, gw, &gb);
  }, reps);
  std::printf("%-22s fwd %8.2f ms (ref %8.2f, x%.2f)   bwd %8.2f ms (ref %8.2f, x%.2f)\n", label, fp, fr, fr / fp,
              bp, br, br / bp);
}

ConvGeometry conv(std::size_t c_in, std::size_t c_out, std::size_t hw, std::size_t k, std::size_t stride,
                  std::size_t groups) {
  ConvGeometry g;
  g.in_c = c_in;
  g.out_c = c_out;
  g.in_h = g.in_w = hw;
  g.kh = g.kw = k;
  g.stride = stride;
  g.pad = k / 2;
  g.out_h = g.out_w = (hw + 2 * g.pad - k) / stride + 1;
  g.groups = groups;
  return g;
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t batch = argc > 1 ? std::stoul(argv[1]) : 64;
  const int reps = argc > 2 ? std::stoi(argv[2]) : 5;
  std::printf("batch %zu, %d threads, best of %d\n", batch, omp_get_max_threads(), reps);
  run("3->16 k3 32x32", conv(3, 16, 32, 3, 1, 1), batch, reps);
  run("16->16 k3 32x32", conv(16, 16, 32, 3, 1, 1), batch, reps);
  run("16->32 k3 s2 32x32", conv(16, 32, 32, 3, 2, 1), batch, reps);
  run("32->32 k3 g4 16x16", conv(32, 32, 16, 3, 1, 4), batch, reps);
  return 0;
}
