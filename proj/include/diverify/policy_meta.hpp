#pragma once

#include <filesystem>
#include <fstream>

#include "diverify/policy.hpp"

namespace diverify {

inline constexpr std::int64_t kMetaIssuedAtSkewSeconds = 120;
inline constexpr std::int64_t kDefaultMetaValiditySeconds = 30LL * 24 * 3600;

// Signed metadata record governing a policy's validity. Semantic records
// (version bumps, including key rotation) carry both signatures; epoch-only
// refreshes carry sig_pol alone.
struct PolicyMeta {
    std::int64_t version = 0;
    std::int64_t epoch = 0;
    std::int64_t issued_at = 0;
    std::int64_t expires_at = 0;
    Digest32 policy_hash{};  // h_P over the canonical policy
    Key32 policy_key{};      // key authorized to issue metadata for this version
    Signature sig_pol;
    std::optional<Signature> sig_root;

    KeyId policy_key_id() const { return key_id_of(policy_key); }

    Json signing_body() const {
        return Json{{"epoch", epoch},
                    {"expires_at", expires_at},
                    {"issued_at", issued_at},
                    {"policy_hash", to_hex(policy_hash)},
                    {"policy_key", to_hex(policy_key)},
                    {"version", version}};
    }

    Json to_json() const {
        Json j = signing_body();
        j["policy_key_id"] = to_hex(policy_key_id());
        j["sig_pol"] = signature_to_json(sig_pol);
        if (sig_root) j["sig_root"] = signature_to_json(*sig_root);
        return j;
    }

    static PolicyMeta from_json(const Json& j) {
        PolicyMeta m;
        m.version = j.at("version").get<std::int64_t>();
        m.epoch = j.at("epoch").get<std::int64_t>();
        m.issued_at = j.at("issued_at").get<std::int64_t>();
        m.expires_at = j.at("expires_at").get<std::int64_t>();
        m.policy_hash = from_hex_array<32>(j.at("policy_hash").get<std::string>());
        m.policy_key = from_hex_array<32>(j.at("policy_key").get<std::string>());
        m.sig_pol = signature_from_json(j.at("sig_pol"));
        if (j.contains("sig_root")) m.sig_root = signature_from_json(j.at("sig_root"));
        if (j.at("policy_key_id").get<std::string>() != to_hex(m.policy_key_id()))
            throw ParseError("policy_key_id does not match policy_key");
        if (m.version < 1 || m.epoch < 1) throw ParseError("version and epoch must be positive");
        if (m.issued_at >= m.expires_at) throw ParseError("issued_at must precede expires_at");
        return m;
    }
};

struct SignedPolicy {
    PolicyMeta meta;
    Policy policy;
};

// Semantic update: version+1, epoch reset to 1, jointly authorized by the
// policy key named in the new record and the root key. Key rotation is the
// same operation with a different policy key.
inline SignedPolicy publish_semantic_update(const std::optional<PolicyMeta>& old_meta,
                                            Policy new_policy, const KeyPair& policy_key,
                                            const KeyPair& root_key,
                                            std::int64_t now = now_unix(),
                                            std::int64_t validity = kDefaultMetaValiditySeconds) {
    new_policy.validate();
    PolicyMeta m;
    m.version = old_meta ? old_meta->version + 1 : 1;
    m.epoch = 1;
    m.issued_at = now;
    m.expires_at = now + validity;
    m.policy_hash = new_policy.hash();
    m.policy_key = policy_key.public_key;
    Bytes body = canonical_bytes(m.signing_body());
    m.sig_pol = sign(policy_key, body);
    m.sig_root = sign(root_key, body);
    return {m, std::move(new_policy)};
}

// Epoch refresh: same version, same policy hash, fresh validity window,
// policy-key signature only.
inline PolicyMeta publish_epoch_refresh(const PolicyMeta& current, const Policy& policy,
                                        const KeyPair& policy_key, std::int64_t now = now_unix(),
                                        std::int64_t validity = kDefaultMetaValiditySeconds) {
    if (policy_key.public_key != current.policy_key)
        throw Error("epoch refresh requires the current policy key");
    if (policy.hash() != current.policy_hash)
        throw Error("epoch refresh must not change the policy hash");
    PolicyMeta m = current;
    m.epoch += 1;
    m.issued_at = now;
    m.expires_at = now + validity;
    m.sig_pol = sign(policy_key, canonical_bytes(m.signing_body()));
    m.sig_root.reset();
    return m;
}

// Revocation is a semantic version that excludes the revoked element; the
// machinery is identical to any other semantic update.
inline SignedPolicy revoke_via_version(const PolicyMeta& current, Policy new_policy,
                                       const KeyPair& policy_key, const KeyPair& root_key,
                                       std::int64_t now = now_unix(),
                                       std::int64_t validity = kDefaultMetaValiditySeconds) {
    return publish_semantic_update(current, std::move(new_policy), policy_key, root_key, now,
                                   validity);
}

struct AdmitDecision {
    bool accepted = false;
    std::string reason;  // signature | authorization | hash | expired | rollback

    static AdmitDecision accept() { return {true, ""}; }
    static AdmitDecision reject(std::string reason) { return {false, std::move(reason)}; }
};

// Per-policy rollback state: the highest admitted (version, epoch) pair plus
// the policy key and hash in force for that version. The trusted root key is
// provisioned out of band.
class VerifierState {
   public:
    struct Entry {
        std::int64_t version = 0;
        std::int64_t epoch = 0;
        Digest32 policy_hash{};
        Key32 policy_key{};
    };

    VerifierState() = default;
    explicit VerifierState(Key32 trusted_root_key) : trusted_root_key_(trusted_root_key) {}

    VerifierState(VerifierState&& other) noexcept
        : trusted_root_key_(other.trusted_root_key_),
          entries_(std::move(other.entries_)),
          path_(std::move(other.path_)) {}

    VerifierState& operator=(VerifierState&& other) noexcept {
        if (this != &other) {
            std::scoped_lock lock(mu_, other.mu_);
            trusted_root_key_ = other.trusted_root_key_;
            entries_ = std::move(other.entries_);
            path_ = std::move(other.path_);
        }
        return *this;
    }

    const Key32& trusted_root_key() const { return trusted_root_key_; }
    void set_trusted_root_key(const Key32& k) { trusted_root_key_ = k; }

    std::optional<Entry> lookup(const std::string& policy_id) const {
        std::lock_guard lock(mu_);
        auto it = entries_.find(policy_id);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void bind_file(std::filesystem::path path) {
        std::lock_guard lock(mu_);
        path_ = std::move(path);
    }

    // Admission per the rollback rules. Serialized: the check and the state
    // update (including persistence) happen under one lock.
    AdmitDecision verify_and_admit(const std::string& policy_id, const PolicyMeta& meta,
                                   const Policy& policy, std::int64_t now) {
        std::lock_guard lock(mu_);
        auto it = entries_.find(policy_id);
        const Entry* stored = it == entries_.end() ? nullptr : &it->second;

        // Anything below the stored pair is a rollback attempt outright; its
        // signatures may not even be checkable once the policy key rotated.
        if (stored &&
            std::make_pair(meta.version, meta.epoch) <
                std::make_pair(stored->version, stored->epoch))
            return AdmitDecision::reject("rollback");

        bool semantic = stored == nullptr || meta.version != stored->version;
        Bytes body = canonical_bytes(meta.signing_body());
        if (semantic) {
            if (!meta.sig_root) return AdmitDecision::reject("authorization");
            if (!verify(meta.policy_key, body, meta.sig_pol))
                return AdmitDecision::reject("signature");
            if (!verify(trusted_root_key_, body, *meta.sig_root))
                return AdmitDecision::reject("signature");
        } else {
            if (meta.policy_key != stored->policy_key)
                return AdmitDecision::reject("authorization");
            if (!verify(stored->policy_key, body, meta.sig_pol))
                return AdmitDecision::reject("signature");
        }

        if (policy.hash() != meta.policy_hash) return AdmitDecision::reject("hash");
        if (!semantic && meta.policy_hash != stored->policy_hash)
            return AdmitDecision::reject("hash");

        if (now + kMetaIssuedAtSkewSeconds < meta.issued_at || now > meta.expires_at)
            return AdmitDecision::reject("expired");

        if (stored && meta.version == stored->version && meta.epoch == stored->epoch) {
            // Idempotent re-presentation of the admitted record.
            return AdmitDecision::accept();
        }

        Entry e;
        e.version = meta.version;
        e.epoch = meta.epoch;
        e.policy_hash = meta.policy_hash;
        e.policy_key = meta.policy_key;
        entries_[policy_id] = e;
        persist_locked();
        return AdmitDecision::accept();
    }

    Json to_json() const {
        std::lock_guard lock(mu_);
        return to_json_locked();
    }

    static VerifierState from_json(const Json& j) {
        VerifierState s;
        s.trusted_root_key_ = from_hex_array<32>(j.at("trusted_root_key").get<std::string>());
        for (const auto& [id, ej] : j.at("policies").items()) {
            Entry e;
            e.version = ej.at("version").get<std::int64_t>();
            e.epoch = ej.at("epoch").get<std::int64_t>();
            e.policy_hash = from_hex_array<32>(ej.at("policy_hash").get<std::string>());
            e.policy_key = from_hex_array<32>(ej.at("policy_key").get<std::string>());
            s.entries_[id] = e;
        }
        return s;
    }

    static VerifierState load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw NotFoundError("verifier state not found: " + path.string());
        Json j = Json::parse(in);
        VerifierState s = from_json(j);
        s.path_ = path;
        return s;
    }

    void save(const std::filesystem::path& path) {
        std::lock_guard lock(mu_);
        path_ = path;
        persist_locked();
    }

   private:
    Json to_json_locked() const {
        Json policies = Json::object();
        for (const auto& [id, e] : entries_) {
            policies[id] = Json{{"epoch", e.epoch},
                                {"policy_hash", to_hex(e.policy_hash)},
                                {"policy_key", to_hex(e.policy_key)},
                                {"version", e.version}};
        }
        return Json{{"policies", policies}, {"trusted_root_key", to_hex(trusted_root_key_)}};
    }

    // Write-to-temp-then-rename keeps the state file whole across crashes.
    void persist_locked() const {
        if (path_.empty()) return;
        std::filesystem::path tmp = path_;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            if (!out) throw Error("cannot write verifier state: " + tmp.string());
            out << to_json_locked().dump(2) << '\n';
        }
        std::filesystem::rename(tmp, path_);
    }

    mutable std::mutex mu_;
    Key32 trusted_root_key_{};
    std::map<std::string, Entry> entries_;
    std::filesystem::path path_;
};

}  // namespace diverify
