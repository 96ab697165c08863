// SPDX-License-Identifier: Apache-2.0
//
// 64-bit FNV-1a content hashing for artifact manifests and idempotence
// checks.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace ts2 {

inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

std::uint64_t hash_file(const std::filesystem::path& path);

std::string hash_hex(std::uint64_t h);

}  // namespace ts2
