#include "domino/model_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "domino/error.hpp"

namespace domino {

namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'D', 'P', 'T', '1'};
constexpr std::uint8_t kDtypeF32 = 1;
constexpr std::string_view kFormat = "domino-manifest v1";

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
public:
  template <typename U>
  void put(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_bytes(std::string_view s) { bytes.insert(bytes.end(), s.begin(), s.end()); }
  void align8() {
    while (bytes.size() % 8) bytes.push_back(0);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(ErrorCode::ChecksumMismatch, "blob is truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

json layer_json(const LayerNode& l) {
  json j;
  j["id"] = l.id;
  j["kind"] = std::string(to_string(l.kind));
  if (!l.inputs.empty()) j["inputs"] = l.inputs;
  switch (l.kind) {
    case LayerKind::Input:
      j["channels"] = l.out_channels;
      j["height"] = l.out_height;
      j["width"] = l.out_width;
      break;
    case LayerKind::Conv2D:
      j["in_channels"] = l.in_channels;
      j["out_channels"] = l.out_channels;
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      j["pad"] = l.pad;
      j["groups"] = l.groups;
      if (l.groups > 1) j["mapping"] = std::string(to_string(l.mapping));
      break;
    case LayerKind::FullyConnected:
      j["in_channels"] = l.in_channels;
      j["out_channels"] = l.out_channels;
      break;
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      break;
    default:
      break;
  }
  json params = json::object();
  const ParamRefs& p = l.params;
  for (const auto& [key, ref] : {std::pair{"weight", &p.weight}, {"bias", &p.bias}, {"scale", &p.scale},
                                 {"shift", &p.shift}, {"mean", &p.mean}, {"var", &p.var}}) {
    if (!ref->empty()) params[key] = *ref;
  }
  if (!params.empty()) j["params"] = params;
  return j;
}

template <typename U>
U field(const json& j, const char* key, U fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : it->template get<U>();
}

LayerNode parse_layer(const json& j) {
  LayerNode l;
  l.id = j.at("id").get<std::string>();
  l.kind = parse_layer_kind(j.at("kind").get<std::string>());
  l.inputs = field<std::vector<std::string>>(j, "inputs", {});
  if (l.kind == LayerKind::Input) {
    l.out_channels = j.at("channels").get<std::size_t>();
    l.out_height = j.at("height").get<std::size_t>();
    l.out_width = j.at("width").get<std::size_t>();
  } else {
    l.in_channels = field<std::size_t>(j, "in_channels", 0);
    l.out_channels = field<std::size_t>(j, "out_channels", 0);
  }
  l.kernel = field<std::size_t>(j, "kernel", 1);
  l.stride = field<std::size_t>(j, "stride", 1);
  l.pad = field<std::size_t>(j, "pad", 0);
  l.groups = field<std::size_t>(j, "groups", 1);
  l.mapping = parse_group_mapping(field<std::string>(j, "mapping", "interleaved"));
  if (auto it = j.find("params"); it != j.end()) {
    ParamRefs& p = l.params;
    for (const auto& [key, ref] : {std::pair{"weight", &p.weight}, {"bias", &p.bias}, {"scale", &p.scale},
                                   {"shift", &p.shift}, {"mean", &p.mean}, {"var", &p.var}}) {
      *ref = field<std::string>(*it, key, "");
    }
  }
  return l;
}

}  // namespace

std::string fnv1a64_hex(std::span<const std::uint8_t> bytes) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

std::vector<std::uint8_t> encode_blob(const TensorStore& store) {
  Writer payload;
  Writer index;
  for (const auto& [name, t] : store) {
    if (name.size() > 0xffff) throw Error(ErrorCode::IoError, "tensor name too long: " + name);
    payload.align8();
    const std::uint64_t offset = payload.bytes.size();
    for (float v : t.values()) payload.put(std::bit_cast<std::uint32_t>(v));
    index.put(static_cast<std::uint16_t>(name.size()));
    index.put_bytes(name);
    index.put(kDtypeF32);
    index.put(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.dims()) index.put(static_cast<std::uint32_t>(d));
    index.put(offset);
    index.put(static_cast<std::uint64_t>(t.size() * 4));
  }
  payload.align8();

  Writer out;
  out.put_bytes({kMagic, 4});
  out.put(static_cast<std::uint32_t>(store.size()));
  out.put(static_cast<std::uint64_t>(payload.bytes.size()));
  out.put(fnv1a64(payload.bytes));
  out.bytes.insert(out.bytes.end(), index.bytes.begin(), index.bytes.end());
  out.align8();
  out.bytes.insert(out.bytes.end(), payload.bytes.begin(), payload.bytes.end());
  return out.bytes;
}

TensorStore decode_blob(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::ParseError, "blob does not start with DPT1");
  }
  Reader r(bytes.subspan(4));
  const auto records = r.get<std::uint32_t>();
  const auto payload_bytes = r.get<std::uint64_t>();
  const auto payload_hash = r.get<std::uint64_t>();

  struct Entry {
    std::string name;
    std::vector<std::size_t> dims;
    std::uint64_t offset, length;
  };
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < records; ++i) {
    Entry e;
    e.name = r.get_string(r.get<std::uint16_t>());
    if (r.get<std::uint8_t>() != kDtypeF32) throw Error(ErrorCode::ParseError, "tensor '" + e.name + "' is not f32");
    const auto rank = r.get<std::uint8_t>();
    for (std::uint8_t d = 0; d < rank; ++d) e.dims.push_back(r.get<std::uint32_t>());
    e.offset = r.get<std::uint64_t>();
    e.length = r.get<std::uint64_t>();
    entries.push_back(std::move(e));
  }
  const std::size_t start = (4 + r.pos() + 7) / 8 * 8;
  if (start > bytes.size() || bytes.size() - start != payload_bytes) {
    throw Error(ErrorCode::ChecksumMismatch, "blob payload is " +
                                                 std::to_string(bytes.size() >= start ? bytes.size() - start : 0) +
                                                 " bytes, header says " + std::to_string(payload_bytes));
  }
  const auto payload = bytes.subspan(start);
  if (fnv1a64(payload) != payload_hash) throw Error(ErrorCode::ChecksumMismatch, "blob payload hash differs");

  TensorStore store;
  std::uint64_t end_of_last = 0;
  for (const Entry& e : entries) {
    const std::size_t n = Tensor::element_count(e.dims);
    if (e.length != n * 4 || e.offset % 8 != 0 || e.offset < end_of_last || e.offset + e.length > payload.size()) {
      throw Error(ErrorCode::ParseError, "record '" + e.name + "' has a bad extent");
    }
    end_of_last = e.offset + e.length;
    Tensor t(e.dims);
    Reader pr(payload.subspan(e.offset, e.length));
    for (std::size_t i = 0; i < n; ++i) t[i] = std::bit_cast<float>(pr.get<std::uint32_t>());
    store.put(e.name, std::move(t));
  }
  return store;
}

std::string manifest_text(const NetworkGraph& graph, const TensorStore& store, const std::string& checksum) {
  const NetworkGraph plain = expand_absorbed(graph);
  json doc;
  doc["format"] = kFormat;
  doc["blob_checksum"] = checksum;
  json layers = json::array();
  for (const LayerNode& l : plain.layers()) layers.push_back(layer_json(l));
  doc["layers"] = layers;
  json tensors = json::array();
  for (const auto& [name, t] : store) tensors.push_back({{"name", name}, {"dtype", "f32le"}, {"shape", t.dims()}});
  doc["tensors"] = tensors;
  return doc.dump(2) + "\n";
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      std::filesystem::remove(tmp);
      throw Error(ErrorCode::IoError, "short write to " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorCode::IoError, "cannot rename into " + path.string() + ": " + ec.message());
  }
}

void write_file_text(const std::filesystem::path& path, std::string_view text) {
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

LoadedModel load_model(const std::filesystem::path& manifest, const std::filesystem::path& blob) {
  const auto text_bytes = read_file_bytes(manifest);
  json doc;
  try {
    doc = json::parse(text_bytes.begin(), text_bytes.end());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, manifest.string() + ": " + e.what());
  }

  LoadedModel out;
  const auto bytes = read_file_bytes(blob);
  out.checksum = fnv1a64_hex(bytes);
  std::vector<LayerNode> layers;
  try {
    if (doc.at("format").get<std::string>() != kFormat) throw Error(ErrorCode::ParseError, "unknown manifest format");
    const std::string expected = doc.at("blob_checksum").get<std::string>();
    if (expected != out.checksum) {
      throw Error(ErrorCode::ChecksumMismatch, blob.string() + " is " + out.checksum + ", manifest expects " + expected);
    }
    out.params = decode_blob(bytes);
    for (const auto& t : doc.at("tensors")) {
      const std::string name = t.at("name").get<std::string>();
      if (!out.params.contains(name)) throw Error(ErrorCode::DanglingTensorRef, "blob lacks tensor '" + name + "'");
      const auto dims = t.at("shape").get<std::vector<std::size_t>>();
      if (dims != out.params.at(name).dims()) {
        throw Error(ErrorCode::ShapeMismatch, "tensor '" + name + "' is " + shape_string(out.params.at(name).dims()) +
                                                  " in the blob, " + shape_string(dims) + " in the manifest");
      }
    }
    for (const auto& l : doc.at("layers")) layers.push_back(parse_layer(l));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, manifest.string() + ": " + e.what());
  }
  out.graph = build_graph(std::move(layers), out.params);
  return out;
}

void save_model(const NetworkGraph& graph, const TensorStore& store, const std::filesystem::path& manifest,
                const std::filesystem::path& blob) {
  const auto bytes = encode_blob(store);
  write_file_bytes(blob, bytes);
  write_file_text(manifest, manifest_text(graph, store, fnv1a64_hex(bytes)));
}

std::filesystem::path default_blob_path(const std::filesystem::path& manifest) {
  std::filesystem::path p = manifest;
  return p.replace_extension(".bin");
}

}  // namespace domino
