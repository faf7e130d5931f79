#pragma once

// On-disk dataset cache: a JSON manifest beside a binary blob.
//
// Blob layout (all little-endian):
//   bytes  0..3   magic "SFSR"
//   bytes  4..7   u32 format version (1)
//   bytes  8..11  u32 record width d
//   bytes 12..19  u64 record count n
//   bytes 20..    n * d float32, record-major
// The file is exactly 20 + 4 n d bytes long.
//
// Feature caches hold one record per item (its feature f) followed by the token
// feature rows of every class that has them. Clip caches hold one flattened clip
// (frames x height x width x channels) per item.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "safsar/episodic/dataset.hpp"

namespace safsar::cache {

inline constexpr std::array<char, 4> kMagic{'S', 'F', 'S', 'R'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint64_t kHeaderBytes = 20;
inline constexpr std::string_view kFormatName = "safsar-cache";

struct BlobHeader {
    std::uint32_t version = kVersion;
    std::uint32_t dim = 0;
    std::uint64_t count = 0;
};

struct ClassEntry {
    std::size_t id = 0;
    std::string description;
    Split split = Split::train;
    std::optional<std::uint64_t> text_offset;  // first record of the token rows
    std::uint64_t text_rows = 0;
};

struct ItemEntry {
    std::string id;
    std::size_t class_id = 0;
    std::uint64_t offset = 0;  // record index
};

struct Manifest {
    std::uint32_t version = kVersion;
    std::uint32_t dim = 0;
    std::string blob;  // relative to the manifest directory
    std::uint64_t record_count = 0;
    std::string record_kind = "feature";  // "feature" | "clip"
    std::array<std::size_t, 4> clip_shape{};  // clip caches only
    std::vector<ClassEntry> classes;
    std::vector<ItemEntry> items;
};

nlohmann::json manifest_to_json(const Manifest& m);
/// Throws CacheCorruptionError on missing or mistyped fields.
Manifest manifest_from_json(const nlohmann::json& j);

/// Byte-exact blob encoding of a header and payload.
std::vector<char> encode_blob(const BlobHeader& header, std::span<const float> payload);
/// Validates magic, version and the length equation; never reads past `bytes`.
BlobHeader decode_header(std::span<const char> bytes);

/// Writes `<manifest_path>` and its blob (`<stem>.bin` next to it) via temp
/// files and rename. Identical inputs give byte-identical files.
void write_cache(const Dataset& data, const std::filesystem::path& manifest_path);

/// Loads and validates a cache. Errors: NotACacheError, CacheVersionError,
/// CacheCorruptionError (length or offset violations, malformed manifest),
/// CacheIoError (unreadable files).
Dataset read_cache(const std::filesystem::path& manifest_path);

/// Blob path that a manifest refers to.
std::filesystem::path blob_path(const std::filesystem::path& manifest_path, const Manifest& m);

/// Machine-readable report; problems are listed under "violations" and never thrown.
nlohmann::json validate_cache(const std::filesystem::path& manifest_path);

}  // namespace safsar::cache
