#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "domino/graph.hpp"
#include "domino/tensor_store.hpp"

namespace domino {

/// "fnv1a64:" followed by 16 lowercase hex digits.
std::string fnv1a64_hex(std::span<const std::uint8_t> bytes);

/// DPT1 container, little-endian throughout:
///   "DPT1" | u32 records | u64 payload bytes | u64 payload FNV-1a
///   per record: u16 name length, name, u8 dtype (1 = f32), u8 rank,
///               u32 dims[rank], u64 offset, u64 length
///   zero padding to 8 bytes, then the payload. Offsets are relative to the
///   payload start and 8-byte aligned.
std::vector<std::uint8_t> encode_blob(const TensorStore& store);
/// Throws ParseError, ChecksumMismatch.
TensorStore decode_blob(std::span<const std::uint8_t> bytes);

/// Canonical manifest text: sorted keys, layers in topological order.
std::string manifest_text(const NetworkGraph& graph, const TensorStore& store, const std::string& checksum);

struct LoadedModel {
  NetworkGraph graph;
  TensorStore params;
  std::string checksum;  // of the blob file
};

/// Throws ParseError, ChecksumMismatch, ShapeMismatch, DanglingTensorRef,
/// MissingFile and every build_graph error.
LoadedModel load_model(const std::filesystem::path& manifest, const std::filesystem::path& blob);

/// Throws IoError.
void save_model(const NetworkGraph& graph, const TensorStore& store, const std::filesystem::path& manifest,
                const std::filesystem::path& blob);

/// `model.json` -> `model.bin`.
std::filesystem::path default_blob_path(const std::filesystem::path& manifest);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Writes via a temporary sibling and renames, so readers never see a partial
/// file. Throws IoError.
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_text(const std::filesystem::path& path, std::string_view text);

}  // namespace domino
