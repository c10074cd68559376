#include <catch2/catch_amalgamated.hpp>

#include "diverify/crypto.hpp"
#include "support/sha256_ref.hpp"

using namespace diverify;

TEST_CASE("sign/verify round trips, including the empty message", "[crypto]") {
    KeyPair kp = KeyPair::generate();
    Bytes empty;
    Signature sig = sign(kp, empty);
    CHECK(verify(kp.public_key, empty, sig));

    Bytes msg = to_bytes("an artifact digest stand-in");
    CHECK(verify(kp.public_key, msg, sign(kp, msg)));
}

TEST_CASE("verification fails under the wrong key or any mutation", "[crypto]") {
    KeyPair kp = KeyPair::generate();
    KeyPair other = KeyPair::generate();
    Bytes msg = to_bytes("payload");
    Signature sig = sign(kp, msg);

    CHECK_FALSE(verify(other.public_key, msg, sig));

    Bytes mutated = msg;
    mutated[0] ^= 0x01;
    CHECK_FALSE(verify(kp.public_key, mutated, sig));

    Signature twisted = sig;
    twisted.bytes[17] ^= 0x80;
    CHECK_FALSE(verify(kp.public_key, msg, twisted));
}

TEST_CASE("RFC 8032 known-answer vector", "[crypto]") {
    // Test 3 from RFC 8032 section 7.1.
    Key32 seed = from_hex_array<32>(
        "c5aa8df43f9f837bedb7442f31dcb7b166d38535076f094b85ce3a2e0b4458f7");
    KeyPair kp = KeyPair::from_seed(seed);
    CHECK(to_hex(kp.public_key) ==
          "fc51cd8e6218a1a38da47ed00230f0580816ed13ba3303ac5deb911548908025");
    Bytes msg = from_hex("af82");
    Signature sig = sign(kp, msg);
    CHECK(to_hex(sig.bytes) ==
          "6291d657deec24024827e69c3abe01a30ce548a284743a445e3680d7db5ac3ac"
          "18ff9b538d16f290ae67f760984dc6594a7c15e9716ed28dc027beceea1ec40a");
    CHECK(verify(kp.public_key, msg, sig));
}

TEST_CASE("malformed key or signature lengths are errors, not false", "[crypto]") {
    KeyPair kp = KeyPair::generate();
    Bytes msg = to_bytes("m");
    Signature sig = sign(kp, msg);

    Bytes short_key(kp.public_key.begin(), kp.public_key.end() - 1);
    CHECK_THROWS_AS(verify_raw(short_key, msg, sig.bytes), CryptoError);

    Bytes short_sig(sig.bytes.begin(), sig.bytes.end() - 1);
    CHECK_THROWS_AS(verify_raw(kp.public_key, msg, short_sig), CryptoError);

    CHECK(verify_raw(kp.public_key, msg, sig.bytes));
}

TEST_CASE("key ids are the truncated digest of the public key", "[crypto]") {
    KeyPair kp = KeyPair::generate();
    auto digest = testsupport::sha256_ref(kp.public_key);
    CHECK(std::equal(kp.key_id.begin(), kp.key_id.end(), digest.begin()));
    CHECK(key_id_of(kp.public_key) == kp.key_id);
    KeyPair again = KeyPair::from_seed(kp.seed());
    CHECK(again.key_id == kp.key_id);
}

TEST_CASE("nonces come from the csprng and do not repeat", "[crypto][property]") {
    std::set<std::string> seen;
    for (int i = 0; i < 256; ++i) seen.insert(to_hex(Nonce::fresh().value));
    CHECK(seen.size() == 256);
}
