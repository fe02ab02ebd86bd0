#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

#include "diffaudit/error.hpp"

namespace diffaudit {

inline std::array<unsigned char, 32> sha256(std::string_view data) {
    std::array<unsigned char, 32> out{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32)
        fail(ErrorKind::stage, "sha256 digest failed");
    return out;
}

inline std::string sha256_hex(std::string_view data) {
    static constexpr char digits[] = "0123456789abcdef";
    const auto d = sha256(data);
    std::string hex;
    hex.reserve(64);
    for (unsigned char c : d) {
        hex.push_back(digits[c >> 4]);
        hex.push_back(digits[c & 0xF]);
    }
    return hex;
}

/// Stable 64-bit seed from (seed, stage, entity...). Independent of platform and
/// of the order in which other entities are processed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::string_view> parts) {
    std::string buf = std::to_string(seed);
    for (auto p : parts) {
        buf.push_back('\x1f');
        buf.append(p);
    }
    const auto d = sha256(buf);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | d[static_cast<std::size_t>(i)];
    return v;
}

} // namespace diffaudit
