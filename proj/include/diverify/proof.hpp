#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diverify/canonical.hpp"
#include "diverify/crypto.hpp"

namespace diverify {

enum class Mode { core, legacy, trusted_auth };

inline std::string to_string(Mode m) {
    switch (m) {
        case Mode::core: return "core";
        case Mode::legacy: return "legacy";
        case Mode::trusted_auth: return "trusted_auth";
    }
    throw EncodingError("unknown mode");
}

inline Mode mode_from_string(std::string_view s) {
    if (s == "core") return Mode::core;
    if (s == "legacy") return Mode::legacy;
    if (s == "trusted_auth" || s == "trusted-auth") return Mode::trusted_auth;
    throw ParseError("unknown mode: " + std::string(s));
}

struct ArtifactRef {
    std::string name;
    Digest32 digest{};
    std::uint64_t length = 0;

    static ArtifactRef from_bytes(std::string name, std::span<const std::uint8_t> bytes) {
        ArtifactRef a;
        a.name = std::move(name);
        a.digest = sha256(bytes);
        a.length = bytes.size();
        return a;
    }

    std::string display() const { return name + " sha256:" + to_hex(digest); }

    bool operator==(const ArtifactRef&) const = default;
};

inline Json signature_to_json(const Signature& s) {
    return Json{{"algorithm", to_string(s.algorithm)},
                {"bytes", to_hex(s.bytes)},
                {"key_id", to_hex(s.key_id)}};
}

inline Signature signature_from_json(const Json& j) {
    Signature s;
    s.algorithm = signature_algorithm_from_string(j.at("algorithm").get<std::string>());
    s.bytes = from_hex_array<64>(j.at("bytes").get<std::string>());
    s.key_id = from_hex_array<8>(j.at("key_id").get<std::string>());
    return s;
}

struct ScopeClaim {
    std::string provider_id;
    std::string scope_type;
    std::string value;
    std::array<std::uint8_t, 32> nonce{};
    Signature provider_signature;
    std::map<std::string, std::string> extra;

    Json to_json() const {
        Json j{{"nonce", to_hex(nonce)},
               {"provider_id", provider_id},
               {"scope_type", scope_type},
               {"signature", signature_to_json(provider_signature)},
               {"value", value}};
        if (!extra.empty()) j["extra"] = extra;
        return j;
    }

    static ScopeClaim from_json(const Json& j) {
        ScopeClaim c;
        c.provider_id = j.at("provider_id").get<std::string>();
        c.scope_type = j.at("scope_type").get<std::string>();
        c.value = j.at("value").get<std::string>();
        c.nonce = from_hex_array<32>(j.at("nonce").get<std::string>());
        c.provider_signature = signature_from_json(j.at("signature"));
        if (j.contains("extra")) c.extra = j.at("extra").get<std::map<std::string, std::string>>();
        return c;
    }

    bool operator==(const ScopeClaim&) const = default;
};

// Simulated certificate: a canonical-JSON statement binding a subject name to
// an Ed25519 key, signed by the issuer's key. Stands in for X.509 in the
// attestation chain and the PIV slot chain.
struct SimCert {
    std::string subject;
    Key32 subject_key{};
    std::string issuer;
    Signature signature;

    static Json body_json(const std::string& subject, const Key32& subject_key,
                          const std::string& issuer) {
        return Json{{"issuer", issuer},
                    {"subject", subject},
                    {"subject_key_hex", to_hex(subject_key)}};
    }

    Bytes body_bytes() const { return canonical_bytes(body_json(subject, subject_key, issuer)); }

    Json to_json() const {
        Json j = body_json(subject, subject_key, issuer);
        j["sig_hex"] = to_hex(signature.bytes);
        j["sig_key_id"] = to_hex(signature.key_id);
        return j;
    }

    static SimCert from_json(const Json& j) {
        SimCert c;
        c.subject = j.at("subject").get<std::string>();
        c.subject_key = from_hex_array<32>(j.at("subject_key_hex").get<std::string>());
        c.issuer = j.at("issuer").get<std::string>();
        c.signature.bytes = from_hex_array<64>(j.at("sig_hex").get<std::string>());
        c.signature.key_id = from_hex_array<8>(j.at("sig_key_id").get<std::string>());
        return c;
    }

    bool operator==(const SimCert&) const = default;
};

inline SimCert make_sim_cert(const std::string& subject, const Key32& subject_key,
                             const std::string& issuer, const KeyPair& issuer_key) {
    SimCert c;
    c.subject = subject;
    c.subject_key = subject_key;
    c.issuer = issuer;
    c.signature = sign(issuer_key, canonical_bytes(SimCert::body_json(subject, subject_key, issuer)));
    return c;
}

struct Quote {
    Digest32 measurement{};
    std::array<std::uint8_t, 64> custom_data{};
    Signature report_signature;
    std::vector<SimCert> cert_chain;  // leaf first, trusted root last
    std::int64_t timestamp = 0;

    static Json report_body_json(const Digest32& measurement,
                                 std::span<const std::uint8_t, 64> custom_data,
                                 std::int64_t timestamp) {
        return Json{{"custom_data", to_hex(custom_data)},
                    {"measurement", to_hex(measurement)},
                    {"timestamp", timestamp}};
    }

    Bytes report_body_bytes() const {
        return canonical_bytes(report_body_json(measurement, custom_data, timestamp));
    }

    Json to_json() const {
        Json chain = Json::array();
        for (const auto& c : cert_chain) chain.push_back(c.to_json());
        return Json{{"cert_chain", chain},
                    {"custom_data_hex", to_hex(custom_data)},
                    {"measurement_hex", to_hex(measurement)},
                    {"report_sig_hex", to_hex(report_signature.bytes)},
                    {"timestamp", timestamp}};
    }

    static Quote from_json(const Json& j) {
        Quote q;
        q.measurement = from_hex_array<32>(j.at("measurement_hex").get<std::string>());
        q.custom_data = from_hex_array<64>(j.at("custom_data_hex").get<std::string>());
        q.report_signature.bytes = from_hex_array<64>(j.at("report_sig_hex").get<std::string>());
        q.timestamp = j.at("timestamp").get<std::int64_t>();
        for (const auto& cj : j.at("cert_chain")) q.cert_chain.push_back(SimCert::from_json(cj));
        if (!q.cert_chain.empty())
            q.report_signature.key_id = key_id_of(q.cert_chain.front().subject_key);
        return q;
    }

    bool operator==(const Quote&) const = default;
};

struct DiVerifyProof {
    std::string config_version;
    int trust_level = 0;
    std::vector<ScopeClaim> scopes;
    Key32 signing_key{};
    std::optional<Quote> quote;  // absent in legacy mode
    Mode mode = Mode::core;

    Json to_json() const {
        Json scopes_json = Json::array();
        for (const auto& s : scopes) scopes_json.push_back(s.to_json());
        Json j{{"config_version", config_version},
               {"mode", to_string(mode)},
               {"scopes", scopes_json},
               {"signing_key", to_hex(signing_key)},
               {"trust_level", trust_level}};
        if (quote) j["remote_attestation"] = Json{{"enclave_quote", quote->to_json()}};
        return j;
    }

    static DiVerifyProof from_json(const Json& j) {
        DiVerifyProof p;
        p.config_version = j.at("config_version").get<std::string>();
        p.trust_level = j.at("trust_level").get<int>();
        p.mode = mode_from_string(j.at("mode").get<std::string>());
        p.signing_key = from_hex_array<32>(j.at("signing_key").get<std::string>());
        for (const auto& sj : j.at("scopes")) p.scopes.push_back(ScopeClaim::from_json(sj));
        if (j.contains("remote_attestation"))
            p.quote = Quote::from_json(j.at("remote_attestation").at("enclave_quote"));
        return p;
    }

    // Content identity irrespective of scope order, for comparing a proof
    // against a certificate-embedded copy.
    Digest32 fingerprint() const {
        Json j = to_json();
        std::vector<std::string> encoded;
        for (const auto& s : scopes) encoded.push_back(canonical_encode(s.to_json()));
        std::sort(encoded.begin(), encoded.end());
        Json sorted = Json::array();
        for (const auto& e : encoded) sorted.push_back(Json::parse(e));
        j["scopes"] = sorted;
        return canonical_digest(j);
    }

    bool operator==(const DiVerifyProof&) const = default;
};

// Digest over the claim set: claims are sorted by (scope_type, provider_id)
// so the digest is independent of fetch order.
inline Digest32 hash_scopes(std::span<const ScopeClaim> scopes) {
    if (scopes.empty()) throw Error("hash_scopes: empty scope list");
    std::vector<const ScopeClaim*> order;
    order.reserve(scopes.size());
    for (const auto& s : scopes) order.push_back(&s);
    std::sort(order.begin(), order.end(), [](const ScopeClaim* a, const ScopeClaim* b) {
        return std::tie(a->scope_type, a->provider_id) < std::tie(b->scope_type, b->provider_id);
    });
    Json arr = Json::array();
    for (const auto* s : order) arr.push_back(s->to_json());
    return canonical_digest(arr);
}

}  // namespace diverify
