#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "domino/tensor.hpp"

namespace domino {

/// Images (N x C x H x W, values in [0,1]) with class labels.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t classes = 0;
  std::string split;

  std::size_t size() const noexcept { return labels.size(); }
  /// Copy of items [begin, end).
  Tensor slice(std::size_t begin, std::size_t end) const;
  /// Copy of the listed items, in order.
  Dataset gather(const std::vector<std::size_t>& items) const;
  /// First n items (or all, if fewer).
  Dataset truncated(std::size_t n) const;
};

struct CifarSplits {
  Dataset train;
  Dataset test;
};

inline constexpr std::size_t kCifarRecordBytes = 3073;

/// Decodes one file of CIFAR-10 binary records (label byte + 3x32x32
/// channel-planar pixels). Throws MissingFile, BadRecordSize.
Dataset load_cifar10_file(const std::filesystem::path& file, std::string split);

/// Reads data_batch_1..5.bin and test_batch.bin from `dir`. A non-zero
/// `subset` keeps the first `subset` records of each concatenated split.
CifarSplits load_cifar10(const std::filesystem::path& dir, std::size_t subset = 0);

struct SynthSpec {
  std::size_t classes = 10;
  std::size_t channels = 3;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t train_size = 2000;
  std::size_t test_size = 1000;
  double blob_sigma = 1.6;   // pixels
  double jitter = 1.0;       // pixels of centre displacement per sample
  double noise = 0.25;       // per-pixel Gaussian noise
};

struct SynthSplits {
  Dataset train;
  Dataset test;
};

/// Deterministic Gaussian class blobs: each class owns a centre and a colour;
/// each sample renders that blob at a jittered centre plus pixel noise,
/// clamped to [0,1]. Same seed and spec give bit-identical data.
/// Throws InvalidArgument for zero classes or empty dimensions.
SynthSplits synth_dataset(std::uint64_t seed, const SynthSpec& spec);

}  // namespace domino
