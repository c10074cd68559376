#pragma once

#include <sodium.h>

#include <chrono>
#include <cstring>
#include <mutex>

#include "diverify/bytes.hpp"

namespace diverify {

inline void crypto_init() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw CryptoError("libsodium initialization failed");
    });
}

inline std::int64_t now_unix() {
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

inline Digest32 sha256(std::span<const std::uint8_t> data) {
    crypto_init();
    Digest32 out{};
    crypto_hash_sha256(out.data(), data.data(), data.size());
    return out;
}

inline Digest32 sha256(std::string_view s) {
    return sha256(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

inline Bytes random_bytes(std::size_t n) {
    crypto_init();
    Bytes out(n);
    randombytes_buf(out.data(), out.size());
    return out;
}

template <std::size_t N>
std::array<std::uint8_t, N> random_array() {
    crypto_init();
    std::array<std::uint8_t, N> out{};
    randombytes_buf(out.data(), out.size());
    return out;
}

inline KeyId key_id_of(const Key32& public_key) {
    Digest32 d = sha256(public_key);
    KeyId id{};
    std::copy(d.begin(), d.begin() + id.size(), id.begin());
    return id;
}

enum class SignatureAlgorithm { ed25519 };

inline std::string to_string(SignatureAlgorithm a) {
    switch (a) {
        case SignatureAlgorithm::ed25519: return "ed25519";
    }
    throw EncodingError("unknown signature algorithm");
}

inline SignatureAlgorithm signature_algorithm_from_string(std::string_view s) {
    if (s == "ed25519") return SignatureAlgorithm::ed25519;
    throw ParseError("unknown signature algorithm: " + std::string(s));
}

struct Signature {
    KeyId key_id{};
    SignatureAlgorithm algorithm = SignatureAlgorithm::ed25519;
    std::array<std::uint8_t, 64> bytes{};

    bool operator==(const Signature&) const = default;
};

// Ed25519 keypair. secret is libsodium layout (seed || public); the seed is
// secret.data()[0..32) and suffices to reconstruct the pair.
struct KeyPair {
    Key32 public_key{};
    std::array<std::uint8_t, 64> secret{};
    KeyId key_id{};

    static KeyPair generate() {
        crypto_init();
        KeyPair kp;
        crypto_sign_keypair(kp.public_key.data(), kp.secret.data());
        kp.key_id = key_id_of(kp.public_key);
        return kp;
    }

    static KeyPair from_seed(const Key32& seed) {
        crypto_init();
        KeyPair kp;
        crypto_sign_seed_keypair(kp.public_key.data(), kp.secret.data(), seed.data());
        kp.key_id = key_id_of(kp.public_key);
        return kp;
    }

    Key32 seed() const {
        Key32 s{};
        std::copy(secret.begin(), secret.begin() + s.size(), s.begin());
        return s;
    }

    void wipe() { sodium_memzero(secret.data(), secret.size()); }
};

inline Signature sign(const KeyPair& key, std::span<const std::uint8_t> message) {
    crypto_init();
    Signature sig;
    sig.key_id = key.key_id;
    unsigned long long len = 0;
    crypto_sign_detached(sig.bytes.data(), &len, message.data(), message.size(),
                         key.secret.data());
    return sig;
}

inline bool verify(const Key32& public_key, std::span<const std::uint8_t> message,
                   const Signature& sig) {
    crypto_init();
    return crypto_sign_verify_detached(sig.bytes.data(), message.data(), message.size(),
                                       public_key.data()) == 0;
}

// Raw-span variant: length violations are errors, not a "false" verdict.
inline bool verify_raw(std::span<const std::uint8_t> public_key,
                       std::span<const std::uint8_t> message,
                       std::span<const std::uint8_t> signature) {
    crypto_init();
    if (public_key.size() != crypto_sign_PUBLICKEYBYTES)
        throw CryptoError("public key must be 32 bytes");
    if (signature.size() != crypto_sign_BYTES)
        throw CryptoError("signature must be 64 bytes");
    return crypto_sign_verify_detached(signature.data(), message.data(), message.size(),
                                       public_key.data()) == 0;
}

struct Nonce {
    std::array<std::uint8_t, 32> value{};
    std::int64_t issued_at = 0;

    static Nonce fresh(std::int64_t now = now_unix()) {
        Nonce n;
        n.value = random_array<32>();
        n.issued_at = now;
        return n;
    }

    bool operator==(const Nonce&) const = default;
};

}  // namespace diverify
