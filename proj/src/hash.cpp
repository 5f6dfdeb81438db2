#include "xrtm/hash.hpp"

#include <cstdio>
#include <fstream>
#include <vector>

#include "xrtm/error.hpp"

namespace xrtm {

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t state) {
    for (const unsigned char b : bytes) {
        state ^= b;
        state *= 0x100000001b3ULL;
    }
    return state;
}

std::string hash_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string() + " for hashing");
    std::vector<unsigned char> buf(1 << 16);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    while (in) {
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        h = fnv1a64(std::span<const unsigned char>(buf.data(), static_cast<std::size_t>(in.gcount())), h);
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

}  // namespace xrtm
