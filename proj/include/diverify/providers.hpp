#pragma once

#include <functional>
#include <memory>
#include <mutex>

#include "diverify/proof.hpp"
#include "httplib.h"

namespace diverify {

// Provider integration classes. VP authenticates natively; SPs are
// authenticated but need event binding; OPs bind nonces but need a broker for
// authentication; UTs need both, so they get the broker plus the nonce-hash
// wrap.
enum class ProviderClass { VP, SP_nonce_hash, SP_commitment, OP, UT };

inline std::string to_string(ProviderClass c) {
    switch (c) {
        case ProviderClass::VP: return "VP";
        case ProviderClass::SP_nonce_hash: return "SP_nonce_hash";
        case ProviderClass::SP_commitment: return "SP_commitment";
        case ProviderClass::OP: return "OP";
        case ProviderClass::UT: return "UT";
    }
    throw EncodingError("unknown provider class");
}

inline ProviderClass provider_class_from_string(std::string_view s) {
    if (s == "VP") return ProviderClass::VP;
    if (s == "SP_nonce_hash") return ProviderClass::SP_nonce_hash;
    if (s == "SP_commitment") return ProviderClass::SP_commitment;
    if (s == "OP") return ProviderClass::OP;
    if (s == "UT") return ProviderClass::UT;
    throw ParseError("unknown provider class: " + std::string(s));
}

struct ProviderDescriptor {
    std::string provider_id;
    std::string scope_type;
    ProviderClass cls = ProviderClass::VP;
    Key32 public_key{};
    std::string endpoint = "inproc";

    Json to_json() const {
        return Json{{"class", to_string(cls)},
                    {"endpoint", endpoint},
                    {"provider_id", provider_id},
                    {"public_key_hex", to_hex(public_key)},
                    {"scope_type", scope_type}};
    }

    static ProviderDescriptor from_json(const Json& j) {
        ProviderDescriptor d;
        d.provider_id = j.at("provider_id").get<std::string>();
        d.scope_type = j.at("scope_type").get<std::string>();
        d.cls = provider_class_from_string(j.at("class").get<std::string>());
        d.public_key = from_hex_array<32>(j.at("public_key_hex").get<std::string>());
        d.endpoint = j.at("endpoint").get<std::string>();
        return d;
    }
};

struct ScopeRequest {
    Nonce nonce;
    std::string claim;  // requested scope type
    std::string session_id;
};

// Message each class signs. VP/OP sign the canonical claim tuple;
// nonce-hash classes sign sha256(nonce || value); the commitment class signs
// the commitment in place of the value so the opening can be checked
// separately.
inline Bytes claim_signing_message(ProviderClass cls, const std::string& provider_id,
                                   const std::string& scope_type, const std::string& value,
                                   const std::array<std::uint8_t, 32>& nonce,
                                   const std::map<std::string, std::string>& extra) {
    switch (cls) {
        case ProviderClass::VP:
        case ProviderClass::OP:
            return canonical_bytes(Json{{"nonce", to_hex(nonce)},
                                        {"provider_id", provider_id},
                                        {"scope_type", scope_type},
                                        {"value", value}});
        case ProviderClass::SP_nonce_hash:
        case ProviderClass::UT: {
            Digest32 d = sha256(concat(nonce, to_bytes(value)));
            return Bytes(d.begin(), d.end());
        }
        case ProviderClass::SP_commitment: {
            auto it = extra.find("commitment");
            if (it == extra.end()) throw ParseError("commitment claim lacks extra.commitment");
            return canonical_bytes(Json{{"commitment", it->second},
                                        {"nonce", to_hex(nonce)},
                                        {"provider_id", provider_id},
                                        {"scope_type", scope_type}});
        }
    }
    throw EncodingError("unknown provider class");
}

inline bool validate_claim(const ScopeClaim& claim, const ProviderDescriptor& provider,
                           const Nonce& expected_nonce) {
    if (claim.provider_id != provider.provider_id) return false;
    if (claim.scope_type != provider.scope_type) return false;
    if (claim.nonce != expected_nonce.value) return false;
    if (provider.cls == ProviderClass::SP_commitment) {
        auto c = claim.extra.find("commitment");
        auto s = claim.extra.find("salt");
        if (c == claim.extra.end() || s == claim.extra.end()) return false;
        Digest32 opened = sha256(concat(to_bytes(claim.value), from_hex(s->second)));
        if (to_hex(opened) != c->second) return false;
    }
    Bytes msg;
    try {
        msg = claim_signing_message(provider.cls, claim.provider_id, claim.scope_type,
                                    claim.value, claim.nonce, claim.extra);
    } catch (const ParseError&) {
        return false;
    }
    return verify(provider.public_key, msg, claim.provider_signature);
}

// Signature-only check used at certificate issuance and by the legacy path,
// where claims carry a CA challenge nonce rather than a daemon session nonce.
inline bool claim_signature_valid(const ScopeClaim& claim, const ProviderDescriptor& provider) {
    if (claim.scope_type != provider.scope_type) return false;
    if (provider.cls == ProviderClass::SP_commitment) {
        auto c = claim.extra.find("commitment");
        auto s = claim.extra.find("salt");
        if (c == claim.extra.end() || s == claim.extra.end()) return false;
        Digest32 opened = sha256(concat(to_bytes(claim.value), from_hex(s->second)));
        if (to_hex(opened) != c->second) return false;
    }
    Bytes msg;
    try {
        msg = claim_signing_message(provider.cls, claim.provider_id, claim.scope_type,
                                    claim.value, claim.nonce, claim.extra);
    } catch (const ParseError&) {
        return false;
    }
    return verify(provider.public_key, msg, claim.provider_signature);
}

class ScopeProvider {
   public:
    virtual ~ScopeProvider() = default;
    virtual const ProviderDescriptor& descriptor() const = 0;
    virtual ScopeClaim issue(const ScopeRequest& req) = 0;
};

namespace detail {
inline ScopeClaim finish_claim(const ProviderDescriptor& d, const KeyPair& key,
                               std::string value, const ScopeRequest& req,
                               std::map<std::string, std::string> extra) {
    ScopeClaim c;
    c.provider_id = d.provider_id;
    c.scope_type = d.scope_type;
    c.value = std::move(value);
    c.nonce = req.nonce.value;
    c.extra = std::move(extra);
    c.provider_signature = sign(
        key, claim_signing_message(d.cls, c.provider_id, c.scope_type, c.value, c.nonce, c.extra));
    return c;
}
}  // namespace detail

// VP: OIDC-like identity provider. Issues a self-signed token with the
// session nonce baked in; the claim carries the token hash, not the token.
class SimulatedOidcProvider : public ScopeProvider {
   public:
    SimulatedOidcProvider(std::string provider_id, std::string subject, std::string issuer,
                          KeyPair key, std::function<std::int64_t()> clock = now_unix)
        : subject_(std::move(subject)),
          issuer_(std::move(issuer)),
          key_(std::move(key)),
          clock_(std::move(clock)) {
        desc_.provider_id = std::move(provider_id);
        desc_.scope_type = "oidc";
        desc_.cls = ProviderClass::VP;
        desc_.public_key = key_.public_key;
    }

    const ProviderDescriptor& descriptor() const override { return desc_; }

    ScopeClaim issue(const ScopeRequest& req) override {
        if (req.claim != desc_.scope_type) throw DenialError("oidc provider: unsupported claim");
        std::int64_t iat = clock_();
        Json payload{{"exp", iat + 300},
                     {"iat", iat},
                     {"iss", issuer_},
                     {"nonce", to_hex(req.nonce.value)},
                     {"sub", subject_}};
        Bytes token_body = canonical_bytes(payload);
        Signature token_sig = sign(key_, token_body);
        Bytes token = concat(token_body, token_sig.bytes);
        std::map<std::string, std::string> extra{{"provider", issuer_},
                                                 {"token_hash", to_hex(sha256(token))}};
        return detail::finish_claim(desc_, key_, subject_, req, std::move(extra));
    }

   private:
    ProviderDescriptor desc_;
    std::string subject_;
    std::string issuer_;
    KeyPair key_;
    std::function<std::int64_t()> clock_;
};

// SP (nonce-hash): stateless fixed-value provider, e.g. a device fingerprint.
// Returns (nonce, measurement, sig(sha256(nonce|measurement))).
class DeviceFingerprintProvider : public ScopeProvider {
   public:
    DeviceFingerprintProvider(std::string provider_id, std::string fingerprint, KeyPair key)
        : fingerprint_(std::move(fingerprint)), key_(std::move(key)) {
        desc_.provider_id = std::move(provider_id);
        desc_.scope_type = "device_fingerprint";
        desc_.cls = ProviderClass::SP_nonce_hash;
        desc_.public_key = key_.public_key;
    }

    const ProviderDescriptor& descriptor() const override { return desc_; }

    ScopeClaim issue(const ScopeRequest& req) override {
        if (req.claim != desc_.scope_type) throw DenialError("fingerprint provider: unsupported claim");
        return detail::finish_claim(desc_, key_, fingerprint_, req, {});
    }

   private:
    ProviderDescriptor desc_;
    std::string fingerprint_;
    KeyPair key_;
};

// SP (nonce-hash): simulated PIV security key. The slot 9a key answers the
// nonce challenge; the slot f9 attestation cert chains it to a device root.
class SecurityKeyProvider : public ScopeProvider {
   public:
    SecurityKeyProvider(std::string provider_id, KeyPair slot_key, const KeyPair& device_root)
        : slot_key_(std::move(slot_key)) {
        desc_.provider_id = std::move(provider_id);
        desc_.scope_type = "security_key";
        desc_.cls = ProviderClass::SP_nonce_hash;
        desc_.public_key = slot_key_.public_key;
        attestation_cert_ =
            make_sim_cert("piv-slot9a", slot_key_.public_key, "piv-device-root", device_root);
    }

    const ProviderDescriptor& descriptor() const override { return desc_; }

    ScopeClaim issue(const ScopeRequest& req) override {
        if (req.claim != desc_.scope_type) throw DenialError("security key: unsupported claim");
        std::map<std::string, std::string> extra{
            {"slot9a_public_key", to_hex(slot_key_.public_key)},
            {"slotf9_attestation_cert", canonical_encode(attestation_cert_.to_json())}};
        return detail::finish_claim(desc_, slot_key_, to_hex(slot_key_.public_key), req,
                                    std::move(extra));
    }

   private:
    ProviderDescriptor desc_;
    KeyPair slot_key_;
    SimCert attestation_cert_;
};

// SP (commitment): hash-commitment stand-in for the zk-based integration.
// The claim opens H(value || salt) under a signed envelope; an honest but
// weaker substitute for a real zero-knowledge proof.
class CommitmentProvider : public ScopeProvider {
   public:
    CommitmentProvider(std::string provider_id, std::string scope_type, std::string value,
                       KeyPair key)
        : value_(std::move(value)), key_(std::move(key)) {
        desc_.provider_id = std::move(provider_id);
        desc_.scope_type = std::move(scope_type);
        desc_.cls = ProviderClass::SP_commitment;
        desc_.public_key = key_.public_key;
    }

    const ProviderDescriptor& descriptor() const override { return desc_; }

    ScopeClaim issue(const ScopeRequest& req) override {
        if (req.claim != desc_.scope_type) throw DenialError("commitment provider: unsupported claim");
        Bytes salt = random_bytes(16);
        Digest32 commitment = sha256(concat(to_bytes(value_), salt));
        std::map<std::string, std::string> extra{{"commitment", to_hex(commitment)},
                                                 {"salt", to_hex(salt)}};
        return detail::finish_claim(desc_, key_, value_, req, std::move(extra));
    }

   private:
    ProviderDescriptor desc_;
    std::string value_;
    KeyPair key_;
};

// OP/UT broker: wraps a bare value-producing procedure behind an
// authenticated signing key. In Core and Trusted-Auth deployments the broker
// runs inside the attested daemon boundary, so its output inherits the
// quote's integrity.
class BrokerProvider : public ScopeProvider {
   public:
    BrokerProvider(ProviderDescriptor desc, KeyPair broker_key,
                   std::function<std::string()> inner)
        : desc_(std::move(desc)), key_(std::move(broker_key)), inner_(std::move(inner)) {
        desc_.public_key = key_.public_key;
    }

    const ProviderDescriptor& descriptor() const override { return desc_; }

    ScopeClaim issue(const ScopeRequest& req) override {
        if (req.claim != desc_.scope_type) throw DenialError("broker: unsupported claim");
        std::string value;
        try {
            value = inner_();
        } catch (const std::exception& e) {
            throw DenialError(std::string("wrapped provider failed: ") + e.what());
        }
        return detail::finish_claim(desc_, key_, std::move(value), req, {});
    }

   private:
    ProviderDescriptor desc_;
    KeyPair key_;
    std::function<std::string()> inner_;
};

inline std::shared_ptr<BrokerProvider> wrap_opaque_provider(std::string provider_id,
                                                            std::string scope_type,
                                                            std::function<std::string()> inner,
                                                            KeyPair broker_key) {
    ProviderDescriptor d;
    d.provider_id = std::move(provider_id);
    d.scope_type = std::move(scope_type);
    d.cls = ProviderClass::OP;
    return std::make_shared<BrokerProvider>(std::move(d), std::move(broker_key), std::move(inner));
}

// UT = OP broker plus the SP nonce-hash wrap, so the result validates like a
// nonce-hash SP.
inline std::shared_ptr<BrokerProvider> wrap_untrusted_provider(std::string provider_id,
                                                               std::string scope_type,
                                                               std::function<std::string()> inner,
                                                               KeyPair broker_key) {
    ProviderDescriptor d;
    d.provider_id = std::move(provider_id);
    d.scope_type = std::move(scope_type);
    d.cls = ProviderClass::UT;
    return std::make_shared<BrokerProvider>(std::move(d), std::move(broker_key), std::move(inner));
}

// Client-side registry of scope providers: descriptors plus a dispatch path
// (in-process handle or loopback HTTP endpoint). An optional session gate
// refuses requests for sessions the daemon no longer considers open.
class ProviderHub {
   public:
    using SessionGate = std::function<bool(const std::string& session_id)>;

    void register_provider(std::shared_ptr<ScopeProvider> provider) {
        std::lock_guard lock(mu_);
        const auto& d = provider->descriptor();
        if (descriptors_.count(d.provider_id))
            throw Error("duplicate provider_id: " + d.provider_id);
        descriptors_[d.provider_id] = d;
        inproc_[d.provider_id] = std::move(provider);
    }

    void register_remote(const ProviderDescriptor& desc) {
        std::lock_guard lock(mu_);
        if (descriptors_.count(desc.provider_id))
            throw Error("duplicate provider_id: " + desc.provider_id);
        if (desc.endpoint == "inproc")
            throw Error("remote provider needs an http endpoint: " + desc.provider_id);
        descriptors_[desc.provider_id] = desc;
    }

    void set_session_gate(SessionGate gate) {
        std::lock_guard lock(mu_);
        gate_ = std::move(gate);
    }

    const ProviderDescriptor& descriptor(const std::string& provider_id) const {
        std::lock_guard lock(mu_);
        auto it = descriptors_.find(provider_id);
        if (it == descriptors_.end()) throw NotFoundError("unknown provider: " + provider_id);
        return it->second;
    }

    std::optional<ProviderDescriptor> find_by_scope_type(const std::string& scope_type) const {
        std::lock_guard lock(mu_);
        for (const auto& [id, d] : descriptors_) {
            if (d.scope_type == scope_type) return d;
        }
        return std::nullopt;
    }

    std::vector<ProviderDescriptor> descriptors() const {
        std::lock_guard lock(mu_);
        std::vector<ProviderDescriptor> out;
        for (const auto& [id, d] : descriptors_) out.push_back(d);
        return out;
    }

    ScopeClaim request_scope(const std::string& provider_id, const ScopeRequest& req) const {
        ProviderDescriptor desc;
        std::shared_ptr<ScopeProvider> handle;
        SessionGate gate;
        {
            std::lock_guard lock(mu_);
            auto it = descriptors_.find(provider_id);
            if (it == descriptors_.end()) throw NotFoundError("unknown provider: " + provider_id);
            desc = it->second;
            auto h = inproc_.find(provider_id);
            if (h != inproc_.end()) handle = h->second;
            gate = gate_;
        }
        if (gate && !req.session_id.empty() && !gate(req.session_id))
            throw DenialError("session is not open: " + req.session_id);
        if (handle) return handle->issue(req);
        return request_remote(desc, req);
    }

    bool validate(const ScopeClaim& claim, const Nonce& expected_nonce) const {
        return validate_claim(claim, descriptor(claim.provider_id), expected_nonce);
    }

    // True iff every claim is authentically signed by its registered
    // provider; nonces are not compared to any session.
    bool claims_authentic(std::span<const ScopeClaim> claims) const {
        for (const auto& c : claims) {
            std::optional<ProviderDescriptor> d;
            {
                std::lock_guard lock(mu_);
                auto it = descriptors_.find(c.provider_id);
                if (it != descriptors_.end()) d = it->second;
            }
            if (!d) return false;
            if (!claim_signature_valid(c, *d)) return false;
        }
        return true;
    }

    Json registry_json() const {
        Json arr = Json::array();
        for (const auto& d : descriptors()) arr.push_back(d.to_json());
        return arr;
    }

    void load_registry_json(const Json& arr) {
        for (const auto& j : arr) {
            ProviderDescriptor d = ProviderDescriptor::from_json(j);
            std::lock_guard lock(mu_);
            descriptors_[d.provider_id] = d;
        }
    }

   private:
    static ScopeClaim request_remote(const ProviderDescriptor& desc, const ScopeRequest& req) {
        auto sep = desc.endpoint.find("://");
        std::string host_port =
            sep == std::string::npos ? desc.endpoint : desc.endpoint.substr(sep + 3);
        httplib::Client client(std::string("http://") + host_port);
        client.set_connection_timeout(2, 0);
        client.set_read_timeout(5, 0);
        Json body{{"claim", req.claim}, {"nonce_hex", to_hex(req.nonce.value)}};
        auto res = client.Post("/scope", body.dump(), "application/json");
        if (!res) throw TransportError("provider unreachable: " + desc.endpoint);
        if (res->status == 403) throw DenialError("provider refused claim: " + desc.provider_id);
        if (res->status != 200)
            throw TransportError("provider error " + std::to_string(res->status));
        return ScopeClaim::from_json(Json::parse(res->body));
    }

    mutable std::mutex mu_;
    std::map<std::string, ProviderDescriptor> descriptors_;
    std::map<std::string, std::shared_ptr<ScopeProvider>> inproc_;
    SessionGate gate_;
};

// Loopback HTTP front for one provider: POST /scope {nonce_hex, claim}
// returns the ScopeClaim JSON.
class ScopeProviderServer {
   public:
    explicit ScopeProviderServer(std::shared_ptr<ScopeProvider> provider)
        : provider_(std::move(provider)) {
        server_.Post("/scope", [this](const httplib::Request& req, httplib::Response& res) {
            try {
                Json body = Json::parse(req.body);
                ScopeRequest sr;
                sr.nonce.value = from_hex_array<32>(body.at("nonce_hex").get<std::string>());
                sr.claim = body.at("claim").get<std::string>();
                res.set_content(provider_->issue(sr).to_json().dump(), "application/json");
            } catch (const DenialError& e) {
                res.status = 403;
                res.set_content(Json{{"error", e.what()}}.dump(), "application/json");
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(Json{{"error", e.what()}}.dump(), "application/json");
            }
        });
    }

    ~ScopeProviderServer() { stop(); }

    int start() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        if (port_ <= 0) throw TransportError("provider server: bind failed");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port_;
    }

    void stop() {
        if (thread_.joinable()) {
            server_.stop();
            thread_.join();
        }
    }

    int port() const { return port_; }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

    ProviderDescriptor remote_descriptor() const {
        ProviderDescriptor d = provider_->descriptor();
        d.endpoint = endpoint();
        return d;
    }

   private:
    std::shared_ptr<ScopeProvider> provider_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

}  // namespace diverify
