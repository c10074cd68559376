#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace diverify {

using Bytes = std::vector<std::uint8_t>;
using Digest32 = std::array<std::uint8_t, 32>;
using Key32 = std::array<std::uint8_t, 32>;
using KeyId = std::array<std::uint8_t, 8>;

// Error taxonomy. Verification verdicts are values, never exceptions;
// exceptions are reserved for malformed inputs and operational failures.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EncodingError : Error {
    using Error::Error;
};
struct ParseError : Error {
    using Error::Error;
};
struct CryptoError : Error {
    using Error::Error;
};
struct TransportError : Error {
    using Error::Error;
};
struct DenialError : Error {
    using Error::Error;
};
struct NotFoundError : Error {
    using Error::Error;
};

inline std::string to_hex(std::span<const std::uint8_t> data) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (auto b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0f]);
    }
    return out;
}

inline int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

inline Bytes from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) throw ParseError("hex string has odd length");
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = hex_nibble(hex[2 * i]);
        int lo = hex_nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw ParseError("invalid hex digit");
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

template <std::size_t N>
std::array<std::uint8_t, N> from_hex_array(std::string_view hex) {
    Bytes raw = from_hex(hex);
    if (raw.size() != N)
        throw ParseError("expected " + std::to_string(N) + " bytes, got " +
                         std::to_string(raw.size()));
    std::array<std::uint8_t, N> out{};
    std::copy(raw.begin(), raw.end(), out.begin());
    return out;
}

inline Bytes to_bytes(std::string_view s) {
    return Bytes(s.begin(), s.end());
}

inline Bytes concat(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    Bytes out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

}  // namespace diverify
