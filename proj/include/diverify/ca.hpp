#pragma once

#include <atomic>
#include <variant>

#include "diverify/attestation.hpp"
#include "diverify/providers.hpp"

namespace diverify {

inline constexpr std::int64_t kCertValiditySeconds = 600;

// Canonical-JSON certificate binding an ephemeral signing key to the proof
// the CA checked at issuance. Not X.509: the trust logic is the point, the
// encoding is not.
struct Certificate {
    std::array<std::uint8_t, 16> serial{};
    Key32 subject_key{};
    DiVerifyProof embedded_proof;
    std::int64_t issued_at = 0;
    std::int64_t expires_at = 0;
    Signature ca_signature;

    Json body_json() const {
        return Json{{"expires_at", expires_at},
                    {"issued_at", issued_at},
                    {"proof", embedded_proof.to_json()},
                    {"serial", to_hex(serial)},
                    {"subject_key", to_hex(subject_key)}};
    }

    Json to_json() const {
        return Json{{"body", body_json()}, {"ca_signature", signature_to_json(ca_signature)}};
    }

    static Certificate from_json(const Json& j) {
        const Json& b = j.at("body");
        Certificate c;
        c.serial = from_hex_array<16>(b.at("serial").get<std::string>());
        c.subject_key = from_hex_array<32>(b.at("subject_key").get<std::string>());
        c.embedded_proof = DiVerifyProof::from_json(b.at("proof"));
        c.issued_at = b.at("issued_at").get<std::int64_t>();
        c.expires_at = b.at("expires_at").get<std::int64_t>();
        c.ca_signature = signature_from_json(j.at("ca_signature"));
        return c;
    }

    bool signature_valid(const Key32& ca_key) const {
        return verify(ca_key, canonical_bytes(body_json()), ca_signature);
    }
};

struct CaDenial {
    std::string reason;
};

using IssueResult = std::variant<Certificate, CaDenial>;

// Simulated Fulcio-like certificate authority for the Legacy-Compatible and
// Trusted-Authentication modes. The compromised flag disables all issuance
// checks; it exists for the attack harness and is only honored in test mode.
class CertificateAuthority {
   public:
    CertificateAuthority(KeyPair key, std::shared_ptr<const ProviderHub> hub,
                         TrustedRootStore roots, std::function<std::int64_t()> clock = now_unix)
        : key_(std::move(key)), hub_(std::move(hub)), roots_(std::move(roots)),
          clock_(std::move(clock)) {}

    const Key32& public_key() const { return key_.public_key; }

    void set_compromised(bool value) { compromised_ = value; }
    bool compromised() const { return compromised_; }

    // Challenge nonce for trusted-auth sessions. The daemon binds its scope
    // claims to it, and issuance refuses claims that do not carry an
    // outstanding challenge, so captured proofs cannot be resubmitted for a
    // fresh certificate.
    Nonce challenge() {
        Nonce n = Nonce::fresh(clock_());
        std::lock_guard lock(mu_);
        prune_locked(n.issued_at);
        outstanding_[to_hex(n.value)] = n.issued_at + kChallengeTtlSeconds;
        return n;
    }

    IssueResult issue_certificate(const Key32& subject_key, const DiVerifyProof& proof,
                                  Mode mode) {
        if (!compromised_) {
            if (mode == Mode::core) return CaDenial{"core mode does not use a CA"};
            if (proof.mode != mode) return CaDenial{"proof mode does not match request"};
            if (proof.signing_key != subject_key)
                return CaDenial{"subject key does not match proof signing key"};
            if (proof.scopes.empty()) return CaDenial{"proof carries no scopes"};
            if (!hub_->claims_authentic(proof.scopes)) return CaDenial{"claim-auth"};
            if (mode == Mode::trusted_auth) {
                if (!consume_challenge(proof.scopes)) return CaDenial{"challenge"};
                if (!proof.quote) return CaDenial{"quote"};
                if (!check_quote(*proof.quote, roots_, clock_())) return CaDenial{"quote"};
                Signature binding;
                binding.bytes = proof.quote->custom_data;
                binding.key_id = key_id_of(proof.signing_key);
                if (!verify(proof.signing_key, hash_scopes(proof.scopes), binding))
                    return CaDenial{"scope-binding"};
            }
            if (mode == Mode::legacy && proof.quote)
                return CaDenial{"legacy proof must not carry a quote"};
        }
        Certificate cert;
        cert.serial = next_serial();
        cert.subject_key = subject_key;
        cert.embedded_proof = proof;
        cert.issued_at = clock_();
        cert.expires_at = cert.issued_at + kCertValiditySeconds;
        cert.ca_signature = sign(key_, canonical_bytes(cert.body_json()));
        return cert;
    }

   private:
    static constexpr std::int64_t kChallengeTtlSeconds = 300;

    std::array<std::uint8_t, 16> next_serial() {
        std::uint64_t n = ++serial_counter_;
        auto serial = random_array<16>();
        for (int i = 0; i < 8; ++i) serial[i] = static_cast<std::uint8_t>(n >> (8 * i));
        return serial;
    }

    // All claims must share one outstanding challenge; it is spent on use.
    bool consume_challenge(std::span<const ScopeClaim> claims) {
        std::string nonce_hex = to_hex(claims.front().nonce);
        for (const auto& c : claims)
            if (to_hex(c.nonce) != nonce_hex) return false;
        std::int64_t now = clock_();
        std::lock_guard lock(mu_);
        prune_locked(now);
        auto it = outstanding_.find(nonce_hex);
        if (it == outstanding_.end() || it->second < now) return false;
        outstanding_.erase(it);
        return true;
    }

    void prune_locked(std::int64_t now) {
        for (auto it = outstanding_.begin(); it != outstanding_.end();) {
            if (it->second < now)
                it = outstanding_.erase(it);
            else
                ++it;
        }
    }

    KeyPair key_;
    std::shared_ptr<const ProviderHub> hub_;
    TrustedRootStore roots_;
    std::function<std::int64_t()> clock_;
    std::atomic<bool> compromised_{false};
    std::atomic<std::uint64_t> serial_counter_{0};
    std::mutex mu_;
    std::map<std::string, std::int64_t> outstanding_;
};

// Uniform client-side handle: the daemon talks to the CA the same way
// whether it is in-process or behind a loopback HTTP endpoint. challenge()
// opens an issuance window for a trusted-auth session.
class CaHandle {
   public:
    virtual ~CaHandle() = default;
    virtual Nonce challenge() = 0;
    virtual IssueResult issue(const Key32& subject_key, const DiVerifyProof& proof, Mode mode) = 0;
};

class InProcessCa : public CaHandle {
   public:
    explicit InProcessCa(std::shared_ptr<CertificateAuthority> ca) : ca_(std::move(ca)) {}
    Nonce challenge() override { return ca_->challenge(); }
    IssueResult issue(const Key32& subject_key, const DiVerifyProof& proof, Mode mode) override {
        return ca_->issue_certificate(subject_key, proof, mode);
    }

   private:
    std::shared_ptr<CertificateAuthority> ca_;
};

// Loopback HTTP front: POST /certificate {signing_key_hex, proof, mode},
// GET /challenge.
class CaServer {
   public:
    explicit CaServer(std::shared_ptr<CertificateAuthority> ca) : ca_(std::move(ca)) {
        server_.Get("/challenge", [this](const httplib::Request&, httplib::Response& res) {
            Nonce n = ca_->challenge();
            res.set_content(Json{{"nonce_hex", to_hex(n.value)}}.dump(), "application/json");
        });
        server_.Post("/certificate", [this](const httplib::Request& req, httplib::Response& res) {
            try {
                Json body = Json::parse(req.body);
                Key32 subject = from_hex_array<32>(body.at("signing_key_hex").get<std::string>());
                DiVerifyProof proof = DiVerifyProof::from_json(body.at("proof"));
                Mode mode = mode_from_string(body.at("mode").get<std::string>());
                IssueResult result = ca_->issue_certificate(subject, proof, mode);
                if (const auto* denial = std::get_if<CaDenial>(&result)) {
                    res.status = 403;
                    res.set_content(Json{{"denied", true}, {"reason", denial->reason}}.dump(),
                                    "application/json");
                    return;
                }
                res.set_content(std::get<Certificate>(result).to_json().dump(),
                                "application/json");
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(Json{{"error", e.what()}}.dump(), "application/json");
            }
        });
    }

    ~CaServer() { stop(); }

    int start() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        if (port_ <= 0) throw TransportError("ca server: bind failed");
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
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

   private:
    std::shared_ptr<CertificateAuthority> ca_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

// Holds one keep-alive connection; requests are serialized behind a lock
// since httplib clients are not safe for concurrent use.
class HttpCa : public CaHandle {
   public:
    explicit HttpCa(std::string url) : url_(std::move(url)), client_(url_) {
        client_.set_connection_timeout(2, 0);
        client_.set_read_timeout(10, 0);
        client_.set_keep_alive(true);
    }

    Nonce challenge() override {
        std::lock_guard lock(mu_);
        auto res = client_.Get("/challenge");
        if (!res || res->status != 200) throw TransportError("ca unreachable: " + url_);
        Json j = Json::parse(res->body);
        Nonce n;
        n.value = from_hex_array<32>(j.at("nonce_hex").get<std::string>());
        n.issued_at = now_unix();
        return n;
    }

    IssueResult issue(const Key32& subject_key, const DiVerifyProof& proof, Mode mode) override {
        Json body{{"mode", to_string(mode)},
                  {"proof", proof.to_json()},
                  {"signing_key_hex", to_hex(subject_key)}};
        std::lock_guard lock(mu_);
        auto res = client_.Post("/certificate", body.dump(), "application/json");
        if (!res) throw TransportError("ca unreachable: " + url_);
        if (res->status == 403) {
            Json j = Json::parse(res->body);
            return CaDenial{j.value("reason", "denied")};
        }
        if (res->status != 200) throw TransportError("ca error " + std::to_string(res->status));
        return Certificate::from_json(Json::parse(res->body));
    }

   private:
    std::string url_;
    std::mutex mu_;
    httplib::Client client_;
};

}  // namespace diverify
