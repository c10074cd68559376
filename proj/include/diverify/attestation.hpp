#pragma once

#include <set>

#include "diverify/proof.hpp"

namespace diverify {

inline constexpr std::int64_t kQuoteSkewSeconds = 300;
inline constexpr const char* kQuoteProcedureId = "sim-tee-v1";

// Measurement stands in for MRENCLAVE: the digest of the daemon's declared
// code+config manifest.
inline Digest32 measurement_from_manifest(const Json& manifest) {
    return canonical_digest(manifest);
}

struct AttestationIdentity {
    KeyPair attestation_key;
    std::vector<SimCert> cert_chain;  // leaf (attestation key under root), root
    Digest32 measurement{};

    static AttestationIdentity create(const KeyPair& root_key, const Json& manifest) {
        AttestationIdentity id;
        id.attestation_key = KeyPair::generate();
        SimCert leaf = make_sim_cert("sim-tee-attestation-key", id.attestation_key.public_key,
                                     "sim-tee-root", root_key);
        SimCert root =
            make_sim_cert("sim-tee-root", root_key.public_key, "sim-tee-root", root_key);
        id.cert_chain = {leaf, root};
        id.measurement = measurement_from_manifest(manifest);
        return id;
    }
};

struct TrustedRootStore {
    std::vector<SimCert> roots;
    std::set<std::string> expected_measurements;  // hex

    bool is_trusted_root(const Key32& key) const {
        for (const auto& r : roots)
            if (r.subject_key == key) return true;
        return false;
    }

    bool measurement_expected(const Digest32& m) const {
        return expected_measurements.count(to_hex(m)) > 0;
    }

    Json to_json() const {
        Json roots_json = Json::array();
        for (const auto& r : roots) roots_json.push_back(r.to_json());
        Json meas = Json::array();
        for (const auto& m : expected_measurements) meas.push_back(m);
        return Json{{"expected_measurements", meas}, {"roots", roots_json}};
    }

    static TrustedRootStore from_json(const Json& j) {
        TrustedRootStore s;
        for (const auto& rj : j.at("roots")) s.roots.push_back(SimCert::from_json(rj));
        for (const auto& m : j.at("expected_measurements"))
            s.expected_measurements.insert(m.get<std::string>());
        return s;
    }
};

// Single seam between quote producers/consumers and the TEE. The simulated
// backend ships; a hardware-backed one would implement the same two calls.
class AttestationBackend {
   public:
    virtual ~AttestationBackend() = default;
    virtual Quote get_quote(std::span<const std::uint8_t> custom_data, std::int64_t now) = 0;
    virtual bool verify_quote(const Quote& quote, const TrustedRootStore& roots,
                              std::int64_t now) const = 0;
};

inline Quote make_quote(const AttestationIdentity& identity,
                        std::span<const std::uint8_t> custom_data, std::int64_t now) {
    if (custom_data.size() != 64) throw CryptoError("quote custom_data must be exactly 64 bytes");
    Quote q;
    q.measurement = identity.measurement;
    std::copy(custom_data.begin(), custom_data.end(), q.custom_data.begin());
    q.timestamp = now;
    q.cert_chain = identity.cert_chain;
    q.report_signature = sign(identity.attestation_key, q.report_body_bytes());
    return q;
}

// Quote checks: chain anchored in a trusted root, report signature under the
// leaf key, expected measurement, timestamp within the skew window.
// A structurally broken chain is an error, not a false verdict.
inline bool check_quote(const Quote& quote, const TrustedRootStore& roots, std::int64_t now) {
    if (roots.roots.empty()) throw Error("trusted root store is empty");
    if (quote.cert_chain.empty()) throw ParseError("quote has an empty cert chain");
    for (std::size_t i = 0; i + 1 < quote.cert_chain.size(); ++i) {
        const SimCert& cert = quote.cert_chain[i];
        const SimCert& issuer = quote.cert_chain[i + 1];
        if (cert.issuer != issuer.subject) return false;
        if (!verify(issuer.subject_key, cert.body_bytes(), cert.signature)) return false;
    }
    const SimCert& anchor = quote.cert_chain.back();
    if (!verify(anchor.subject_key, anchor.body_bytes(), anchor.signature)) return false;
    if (!roots.is_trusted_root(anchor.subject_key)) return false;
    const Key32& leaf_key = quote.cert_chain.front().subject_key;
    if (!verify(leaf_key, quote.report_body_bytes(), quote.report_signature)) return false;
    if (!roots.measurement_expected(quote.measurement)) return false;
    if (now + kQuoteSkewSeconds < quote.timestamp || quote.timestamp + kQuoteSkewSeconds < now)
        return false;
    return true;
}

class SimTeeBackend : public AttestationBackend {
   public:
    explicit SimTeeBackend(AttestationIdentity identity) : identity_(std::move(identity)) {}

    Quote get_quote(std::span<const std::uint8_t> custom_data, std::int64_t now) override {
        std::lock_guard lock(mu_);
        return make_quote(identity_, custom_data, now);
    }

    bool verify_quote(const Quote& quote, const TrustedRootStore& roots,
                      std::int64_t now) const override {
        return check_quote(quote, roots, now);
    }

    const AttestationIdentity& identity() const { return identity_; }

   private:
    AttestationIdentity identity_;
    std::mutex mu_;
};

}  // namespace diverify
