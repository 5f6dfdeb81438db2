#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace xrtm {

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t state = 0xcbf29ce484222325ULL);

/// FNV-1a of the file contents as 16 lowercase hex digits.
std::string hash_file(const std::filesystem::path& path);

}  // namespace xrtm
