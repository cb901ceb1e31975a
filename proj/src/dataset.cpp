#include "domino/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "domino/error.hpp"

namespace domino {

Tensor Dataset::slice(std::size_t begin, std::size_t end) const {
  const std::size_t per = images.stride0();
  auto dims = images.dims();
  dims[0] = end - begin;
  std::vector<float> data(images.data() + begin * per, images.data() + end * per);
  return Tensor(std::move(dims), std::move(data));
}

Dataset Dataset::gather(const std::vector<std::size_t>& items) const {
  const std::size_t per = images.stride0();
  auto dims = images.dims();
  dims[0] = items.size();
  std::vector<float> data;
  data.reserve(items.size() * per);
  Dataset out;
  out.classes = classes;
  out.split = split;
  for (std::size_t i : items) {
    data.insert(data.end(), images.data() + i * per, images.data() + (i + 1) * per);
    out.labels.push_back(labels.at(i));
  }
  out.images = Tensor(std::move(dims), std::move(data));
  return out;
}

Dataset Dataset::truncated(std::size_t n) const {
  n = std::min(n, size());
  Dataset out;
  out.images = slice(0, n);
  out.labels.assign(labels.begin(), labels.begin() + static_cast<long>(n));
  out.classes = classes;
  out.split = split;
  return out;
}

Dataset load_cifar10_file(const std::filesystem::path& file, std::string split) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + file.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw Error(ErrorCode::BadRecordSize, file.string() + " has " + std::to_string(bytes.size()) +
                                              " bytes, not a multiple of " + std::to_string(kCifarRecordBytes));
  }
  const std::size_t records = bytes.size() / kCifarRecordBytes;
  Dataset d;
  d.classes = 10;
  d.split = std::move(split);
  std::vector<float> pixels;
  pixels.reserve(records * (kCifarRecordBytes - 1));
  for (std::size_t r = 0; r < records; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] >= 10) throw Error(ErrorCode::BadRecordSize, "label byte out of range in " + file.string());
    d.labels.push_back(rec[0]);
    for (std::size_t i = 1; i < kCifarRecordBytes; ++i) pixels.push_back(static_cast<float>(rec[i]) / 255.0f);
  }
  d.images = Tensor({records, 3, 32, 32}, std::move(pixels));
  return d;
}

namespace {

Dataset concat(const std::vector<Dataset>& parts, std::string split) {
  Dataset out;
  out.classes = 10;
  out.split = std::move(split);
  std::vector<float> pixels;
  std::size_t n = 0;
  for (const auto& p : parts) {
    pixels.insert(pixels.end(), p.images.data(), p.images.data() + p.images.size());
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    n += p.size();
  }
  out.images = Tensor({n, 3, 32, 32}, std::move(pixels));
  return out;
}

}  // namespace

CifarSplits load_cifar10(const std::filesystem::path& dir, std::size_t subset) {
  std::vector<Dataset> train_parts;
  for (int b = 1; b <= 5; ++b) {
    train_parts.push_back(load_cifar10_file(dir / ("data_batch_" + std::to_string(b) + ".bin"), "train"));
  }
  CifarSplits s{concat(train_parts, "train"), concat({load_cifar10_file(dir / "test_batch.bin", "test")}, "test")};
  if (subset) {
    s.train = s.train.truncated(subset);
    s.test = s.test.truncated(subset);
  }
  return s;
}

namespace {

struct ClassBlob {
  double cy, cx;
  std::vector<double> colour;
};

Dataset render(const SynthSpec& spec, const std::vector<ClassBlob>& blobs, std::size_t count, std::uint64_t seed,
               std::string split) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(spec.classes) - 1);
  Dataset d;
  d.classes = spec.classes;
  d.split = std::move(split);
  const std::size_t C = spec.channels, H = spec.height, W = spec.width;
  std::vector<float> pixels(count * C * H * W);
  for (std::size_t n = 0; n < count; ++n) {
    const int label = pick(rng);
    d.labels.push_back(label);
    const ClassBlob& b = blobs[static_cast<std::size_t>(label)];
    const double cy = b.cy + spec.jitter * unit(rng);
    const double cx = b.cx + spec.jitter * unit(rng);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
          const double g = std::exp(-(dy * dy + dx * dx) / (2.0 * spec.blob_sigma * spec.blob_sigma));
          const double v = b.colour[c] * g + spec.noise * unit(rng);
          pixels[((n * C + c) * H + y) * W + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
  d.images = Tensor({count, C, H, W}, std::move(pixels));
  return d;
}

}  // namespace

SynthSplits synth_dataset(std::uint64_t seed, const SynthSpec& spec) {
  if (spec.classes == 0) throw Error(ErrorCode::InvalidArgument, "synthetic dataset needs at least one class");
  if (spec.channels == 0 || spec.height == 0 || spec.width == 0) {
    throw Error(ErrorCode::InvalidArgument, "synthetic dataset needs positive image dimensions");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ypos(0.0, static_cast<double>(spec.height - 1));
  std::uniform_real_distribution<double> xpos(0.0, static_cast<double>(spec.width - 1));
  std::uniform_real_distribution<double> level(0.2, 1.0);
  std::vector<ClassBlob> blobs(spec.classes);
  for (auto& b : blobs) {
    b.cy = ypos(rng);
    b.cx = xpos(rng);
    b.colour.resize(spec.channels);
    for (auto& c : b.colour) c = level(rng);
  }
  const std::uint64_t train_seed = rng();
  const std::uint64_t test_seed = rng();
  return {render(spec, blobs, spec.train_size, train_seed, "train"),
          render(spec, blobs, spec.test_size, test_seed, "test")};
}

}  // namespace domino
