#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace safsar::cache::detail {

template <typename U>
void put_le(std::vector<char>& out, U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        out.push_back(static_cast<char>(static_cast<unsigned char>(value >> (8 * i))));
    }
}

template <typename U>
U get_le(const char* p) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        v |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
    }
    return v;
}

/// Whole file; CacheIoError when unreadable.
std::vector<char> read_file(const std::filesystem::path& path);
/// Writes `<path>.tmp`, then renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::span<const char> bytes);

}  // namespace safsar::cache::detail
