#pragma once

#include <random>
#include <set>
#include <vector>

#include "domino/dependency.hpp"
#include "domino/error.hpp"
#include "domino/fixtures.hpp"

namespace support {

using namespace domino;

inline Tensor random_images(const NetworkGraph& g, std::size_t n, std::uint64_t seed) {
  const LayerNode& in = g.layer(g.input_index());
  Tensor x({n, in.out_channels, in.out_height, in.out_width});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : x.values()) v = static_cast<float>(u(rng));
  return x;
}

inline std::vector<int> random_labels(std::size_t n, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> out(n);
  for (auto& l : out) l = static_cast<int>(rng() % static_cast<std::uint64_t>(classes));
  return out;
}

inline Dataset random_dataset(const NetworkGraph& g, std::size_t n, int classes, std::uint64_t seed) {
  Dataset d;
  d.images = random_images(g, n, seed);
  d.labels = random_labels(n, classes, seed + 1);
  d.classes = static_cast<std::size_t>(classes);
  d.split = "test";
  return d;
}

inline void randomize(TensorStore& store, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> centred(-0.5, 0.5), positive(0.5, 1.5);
  for (auto& [name, t] : store) {
    const bool pos = name.ends_with(".var") || name.ends_with(".scale");
    for (auto& v : t.values()) v = static_cast<float>(pos ? positive(rng) : centred(rng));
  }
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;  // sentinel: nothing thrown
}

}  // namespace support
