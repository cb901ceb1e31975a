#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "domino/model_io.hpp"
#include "domino/pruner.hpp"
#include "support.hpp"

using namespace domino;
using support::code_of;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "domino-tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("save/load round trip is bit-identical") {
  const fs::path dir = scratch("roundtrip");
  for (const auto& name : fixture_names()) {
    Model m = make_fixture(name, 5);
    support::randomize(m.params, 5);
    save_model(m.graph, m.params, dir / "m.json", dir / "m.bin");
    const LoadedModel l = load_model(dir / "m.json", dir / "m.bin");
    CHECK(l.graph == m.graph);
    CHECK(l.params == m.params);
    const auto blob = read_file_bytes(dir / "m.bin");
    const auto manifest = read_file_bytes(dir / "m.json");
    save_model(l.graph, l.params, dir / "n.json", dir / "n.bin");
    CHECK(read_file_bytes(dir / "n.bin") == blob);
    CHECK(read_file_bytes(dir / "n.json") == manifest);
    CHECK(l.checksum == fnv1a64_hex(blob));
  }
}

TEST_CASE("resblock-toy loads with two joins") {
  const fs::path dir = scratch("resblock");
  const Model m = resblock_toy(1);
  save_model(m.graph, m.params, dir / "m.json", dir / "m.bin");
  CHECK(load_model(dir / "m.json", dir / "m.bin").graph.count(LayerKind::EltwiseAdd) == 2);
}

TEST_CASE("pruned zeros survive a round trip") {
  const fs::path dir = scratch("pruned");
  const Model m = resblock_toy(1);
  PruneState s(m.graph, m.params, {});
  s.apply_prune(prune_set(s.dependency(), out_ch("convA", 3)));
  save_model(s.graph(), s.params(), dir / "m.json", dir / "m.bin");
  const LoadedModel l = load_model(dir / "m.json", dir / "m.bin");
  CHECK(l.params == s.params());
  const Tensor& w = l.params.at("convA.weight");
  for (std::size_t e = 0; e < w.stride0(); ++e) CHECK(w[3 * w.stride0() + e] == 0.0f);
}

TEST_CASE("blob corruption is detected") {
  const fs::path dir = scratch("corrupt");
  const Model m = linear_toy(1);
  save_model(m.graph, m.params, dir / "m.json", dir / "m.bin");
  auto bytes = read_file_bytes(dir / "m.bin");

  SUBCASE("truncated file") {
    bytes.resize(bytes.size() - 5);
    write_file_bytes(dir / "m.bin", bytes);
    CHECK(code_of([&] { load_model(dir / "m.json", dir / "m.bin"); }) == ErrorCode::ChecksumMismatch);
    CHECK(code_of([&] { decode_blob(bytes); }) == ErrorCode::ChecksumMismatch);
  }
  SUBCASE("flipped payload byte") {
    bytes.back() ^= 0x40;
    CHECK(code_of([&] { decode_blob(bytes); }) == ErrorCode::ChecksumMismatch);
  }
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    CHECK(code_of([&] { decode_blob(bytes); }) == ErrorCode::ParseError);
  }
}

TEST_CASE("manifest errors") {
  const fs::path dir = scratch("manifest");
  const Model m = linear_toy(1);
  TensorStore partial = m.params;
  TensorStore missing;
  for (const auto& [name, t] : partial) {
    if (name != "conv2.weight") missing.put(name, t);
  }
  const auto blob = encode_blob(missing);
  write_file_bytes(dir / "m.bin", blob);
  write_file_text(dir / "m.json", manifest_text(m.graph, missing, fnv1a64_hex(blob)));
  CHECK(code_of([&] { load_model(dir / "m.json", dir / "m.bin"); }) == ErrorCode::DanglingTensorRef);

  write_file_text(dir / "m.json", "{ not json");
  CHECK(code_of([&] { load_model(dir / "m.json", dir / "m.bin"); }) == ErrorCode::ParseError);
  CHECK(code_of([&] { load_model(dir / "absent.json", dir / "m.bin"); }) == ErrorCode::MissingFile);
}

TEST_CASE("blob layout is little-endian and 8-byte aligned") {
  TensorStore s;
  s.put("a", Tensor({1}, {1.0f}));
  s.put("b", Tensor({3}, {1.0f, 2.0f, 3.0f}));
  const auto bytes = encode_blob(s);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "DPT1");
  CHECK(bytes[4] == 2);
  CHECK(bytes.size() % 8 == 0);
  // 1.0f = 0x3f800000, stored low byte first, at the start of the payload.
  const std::size_t payload = bytes.size() - 24;
  CHECK(bytes[payload + 3] == 0x3f);
  CHECK(bytes[payload + 2] == 0x80);
  CHECK(bytes[payload + 8 + 3] == 0x3f);
  CHECK(decode_blob(bytes) == s);
}

TEST_CASE("CIFAR-10 records decode exactly") {
  const fs::path dir = scratch("cifar");
  std::vector<std::uint8_t> bytes(2 * kCifarRecordBytes);
  for (std::size_t r = 0; r < 2; ++r) {
    bytes[r * kCifarRecordBytes] = static_cast<std::uint8_t>(7 - r);
    for (std::size_t i = 1; i < kCifarRecordBytes; ++i) bytes[r * kCifarRecordBytes + i] = static_cast<std::uint8_t>((i * 31 + r) % 256);
  }
  write_file_bytes(dir / "test_batch.bin", bytes);
  const Dataset d = load_cifar10_file(dir / "test_batch.bin", "test");
  REQUIRE(d.size() == 2);
  CHECK(d.labels == std::vector<int>{7, 6});
  CHECK(d.images.dims() == std::vector<std::size_t>{2, 3, 32, 32});
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t i = 0; i < 3072; ++i) {
      REQUIRE(d.images[r * 3072 + i] == static_cast<float>(bytes[r * kCifarRecordBytes + 1 + i]) / 255.0f);
    }
  }

  for (int b = 1; b <= 5; ++b) write_file_bytes(dir / ("data_batch_" + std::to_string(b) + ".bin"), bytes);
  const CifarSplits all = load_cifar10(dir, 3);
  CHECK(all.train.size() == 3);
  CHECK(all.test.size() == 2);
  CHECK(all.train.labels == std::vector<int>{7, 6, 7});

  bytes.pop_back();
  write_file_bytes(dir / "test_batch.bin", bytes);
  CHECK(code_of([&] { load_cifar10_file(dir / "test_batch.bin", "test"); }) == ErrorCode::BadRecordSize);
  CHECK(code_of([&] { load_cifar10_file(dir / "nope.bin", "test"); }) == ErrorCode::MissingFile);
}

TEST_CASE("synthetic data is deterministic") {
  const SynthSplits a = synth_dataset(7, {}), b = synth_dataset(7, {});
  CHECK(a.train.images == b.train.images);
  CHECK(a.test.labels == b.test.labels);
  CHECK(code_of([] { synth_dataset(7, {.classes = 0}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("two well-separated classes are learnable") {
  SynthSpec spec{.classes = 2, .train_size = 400, .test_size = 200};
  const SynthSplits d = synth_dataset(3, spec);
  Model m = linear_toy(3, 2);
  TrainConfig cfg;
  cfg.epochs = 10;
  train_sgd(m.graph, m.params, d.train, cfg);
  CHECK(evaluate_accuracy(m.graph, m.params, d.test) > 0.95);
}
