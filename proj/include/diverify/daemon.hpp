#pragma once

#include <future>

#include "diverify/attestation.hpp"
#include "diverify/ca.hpp"
#include "diverify/providers.hpp"

namespace diverify {

inline constexpr std::int64_t kSessionTtlSeconds = 300;

// Trust levels name the scope types a signing session must collect.
// The shipped table is cumulative: each level contains the previous one.
struct TrustLevelConfig {
    std::map<int, std::set<std::string>> levels;

    static TrustLevelConfig defaults() {
        TrustLevelConfig c;
        c.levels[1] = {"oidc"};
        c.levels[2] = {"oidc", "security_key"};
        c.levels[3] = {"oidc", "security_key", "device_fingerprint"};
        return c;
    }

    const std::set<std::string>& required(int level) const {
        auto it = levels.find(level);
        if (it == levels.end()) throw Error("unknown trust level: " + std::to_string(level));
        return it->second;
    }

    void validate_monotone() const {
        const std::set<std::string>* prev = nullptr;
        for (const auto& [level, required] : levels) {
            if (prev && !std::includes(required.begin(), required.end(), prev->begin(),
                                       prev->end()))
                throw ParseError("trust level " + std::to_string(level) +
                                 " does not contain the previous level's scopes");
            prev = &required;
        }
    }
};

enum class SessionState { open, scopes_collected, signed_, failed };

struct SigningSession {
    std::string session_id;
    Nonce nonce;
    ArtifactRef artifact;
    std::vector<std::string> required_scopes;
    Mode mode = Mode::core;
    SessionState state = SessionState::open;
    std::int64_t opened_at = 0;
};

struct SignResult {
    Signature artifact_signature;
    DiVerifyProof proof;
    std::optional<Certificate> certificate;
};

// Executes the daemon signing flow per session: collect scopes (in
// parallel), validate them against the session nonce, then and only then
// generate the ephemeral key, sign the artifact digest, bind the scope
// digest into the quote, and assemble the proof.
class SigningDaemon {
   public:
    SigningDaemon(std::shared_ptr<ProviderHub> hub, std::shared_ptr<AttestationBackend> backend,
                  TrustLevelConfig levels, std::string config_version = "1.0",
                  std::function<std::int64_t()> clock = now_unix)
        : hub_(std::move(hub)),
          backend_(std::move(backend)),
          levels_(std::move(levels)),
          config_version_(std::move(config_version)),
          clock_(std::move(clock)) {
        hub_->set_session_gate([this](const std::string& id) { return session_open(id); });
    }

    void set_ca(std::shared_ptr<CaHandle> ca) { ca_ = std::move(ca); }

    SigningSession open_session(const ArtifactRef& artifact, int level, Mode mode) {
        const std::set<std::string>& required = levels_.required(level);
        if (mode != Mode::legacy && !backend_)
            throw Error("no attestation backend configured for mode " + to_string(mode));
        if (mode == Mode::trusted_auth && !ca_)
            throw Error("trusted_auth requires a CA");
        SigningSession s;
        s.session_id = to_hex(random_array<8>());
        s.nonce = fresh_session_nonce(mode);
        s.artifact = artifact;
        s.required_scopes.assign(required.begin(), required.end());
        s.mode = mode;
        s.state = SessionState::open;
        s.opened_at = clock_();
        std::lock_guard lock(mu_);
        sessions_[s.session_id] = s;
        session_levels_[s.session_id] = level;
        return s;
    }

    // Artifact name and digest for out-of-band signer confirmation, guarding
    // against payload substitution by a compromised front-end.
    std::string confirm_payload(const std::string& session_id) const {
        std::lock_guard lock(mu_);
        auto it = sessions_.find(session_id);
        if (it == sessions_.end()) throw NotFoundError("unknown session: " + session_id);
        return it->second.artifact.display();
    }

    SignResult sign_request(const std::string& session_id, std::span<const std::uint8_t> bytes) {
        SigningSession session = checked_open_session(session_id);
        int level = 0;
        {
            std::lock_guard lock(mu_);
            level = session_levels_.at(session_id);
        }

        Digest32 digest = sha256(bytes);
        if (digest != session.artifact.digest) {
            fail_session(session_id);
            throw DenialError("artifact bytes do not match the session artifact digest");
        }

        std::vector<ScopeClaim> scopes;
        try {
            scopes = collect_scopes(session);
        } catch (...) {
            fail_session(session_id);
            throw;
        }

        for (const auto& claim : scopes) {
            if (!hub_->validate(claim, session.nonce)) {
                fail_session(session_id);
                throw DenialError("scope validation failed: " + claim.provider_id);
            }
        }
        set_state(session_id, SessionState::scopes_collected);

        KeyPair ephemeral = KeyPair::generate();
        keys_generated_.fetch_add(1);
        struct Wipe {
            KeyPair* kp;
            ~Wipe() { kp->wipe(); }
        } wipe{&ephemeral};

        SignResult result;
        result.artifact_signature = sign(ephemeral, session.artifact.digest);

        Digest32 scope_digest = hash_scopes(scopes);
        Signature binding = sign(ephemeral, scope_digest);

        DiVerifyProof proof;
        proof.config_version = config_version_;
        proof.trust_level = level;
        proof.scopes = std::move(scopes);
        proof.signing_key = ephemeral.public_key;
        proof.mode = session.mode;
        if (session.mode != Mode::legacy)
            proof.quote = backend_->get_quote(binding.bytes, clock_());
        result.proof = std::move(proof);

        if (session.mode != Mode::core) {
            if (!ca_) {
                fail_session(session_id);
                throw Error("mode " + to_string(session.mode) + " requires a CA");
            }
            IssueResult issued =
                ca_->issue(result.proof.signing_key, result.proof, session.mode);
            if (const auto* denial = std::get_if<CaDenial>(&issued)) {
                fail_session(session_id);
                throw DenialError("certificate denied: " + denial->reason);
            }
            result.certificate = std::get<Certificate>(std::move(issued));
        }

        set_state(session_id, SessionState::signed_);
        return result;
    }

    bool session_open(const std::string& session_id) const {
        std::lock_guard lock(mu_);
        auto it = sessions_.find(session_id);
        if (it == sessions_.end()) return false;
        if (it->second.state != SessionState::open &&
            it->second.state != SessionState::scopes_collected)
            return false;
        return clock_() <= it->second.opened_at + kSessionTtlSeconds;
    }

    std::optional<SigningSession> session(const std::string& session_id) const {
        std::lock_guard lock(mu_);
        auto it = sessions_.find(session_id);
        if (it == sessions_.end()) return std::nullopt;
        return it->second;
    }

    // Observable for the ordering guarantee: a failing provider means no key
    // was generated in that session.
    std::uint64_t keys_generated() const { return keys_generated_.load(); }

    const ProviderHub& hub() const { return *hub_; }

   private:
    // Trusted-auth sessions bind to a CA challenge so the CA can refuse
    // replayed proofs at issuance; other modes use a local nonce.
    Nonce fresh_session_nonce(Mode mode) {
        if (mode == Mode::trusted_auth) {
            for (;;) {
                Nonce n = ca_->challenge();
                std::lock_guard lock(mu_);
                if (used_nonces_.insert(to_hex(n.value)).second) return n;
            }
        }
        for (;;) {
            Nonce n = Nonce::fresh(clock_());
            std::lock_guard lock(mu_);
            if (used_nonces_.insert(to_hex(n.value)).second) return n;
        }
    }

    SigningSession checked_open_session(const std::string& session_id) {
        std::lock_guard lock(mu_);
        auto it = sessions_.find(session_id);
        if (it == sessions_.end()) throw NotFoundError("unknown session: " + session_id);
        SigningSession& s = it->second;
        if (s.state == SessionState::signed_ || s.state == SessionState::failed)
            throw DenialError("session already closed: " + session_id);
        if (clock_() > s.opened_at + kSessionTtlSeconds) {
            s.state = SessionState::failed;
            throw DenialError("session expired: " + session_id);
        }
        return s;
    }

    // Scopes are independent and fetched in parallel; one retry on transport
    // errors, none on denial.
    std::vector<ScopeClaim> collect_scopes(const SigningSession& session) {
        std::vector<std::future<ScopeClaim>> futures;
        for (const auto& scope_type : session.required_scopes) {
            auto provider = hub_->find_by_scope_type(scope_type);
            if (!provider)
                throw DenialError("no provider registered for scope type: " + scope_type);
            std::string provider_id = provider->provider_id;
            futures.push_back(std::async(std::launch::async, [this, provider_id, scope_type,
                                                              &session] {
                ScopeRequest req{session.nonce, scope_type, session.session_id};
                try {
                    return hub_->request_scope(provider_id, req);
                } catch (const TransportError&) {
                    return hub_->request_scope(provider_id, req);
                }
            }));
        }
        std::vector<ScopeClaim> scopes;
        scopes.reserve(futures.size());
        std::exception_ptr first_error;
        for (auto& f : futures) {
            try {
                scopes.push_back(f.get());
            } catch (...) {
                if (!first_error) first_error = std::current_exception();
            }
        }
        if (first_error) std::rethrow_exception(first_error);
        return scopes;
    }

    void set_state(const std::string& session_id, SessionState state) {
        std::lock_guard lock(mu_);
        auto it = sessions_.find(session_id);
        if (it != sessions_.end()) it->second.state = state;
    }

    void fail_session(const std::string& session_id) { set_state(session_id, SessionState::failed); }

    std::shared_ptr<ProviderHub> hub_;
    std::shared_ptr<AttestationBackend> backend_;
    TrustLevelConfig levels_;
    std::string config_version_;
    std::function<std::int64_t()> clock_;
    std::shared_ptr<CaHandle> ca_;

    mutable std::mutex mu_;
    std::map<std::string, SigningSession> sessions_;
    std::map<std::string, int> session_levels_;
    std::set<std::string> used_nonces_;
    std::atomic<std::uint64_t> keys_generated_{0};
};

// Loopback API: POST /session opens a session, POST /session/<id>/sign takes
// the raw artifact bytes and returns the signature, proof, and certificate.
class DaemonServer {
   public:
    explicit DaemonServer(std::shared_ptr<SigningDaemon> daemon) : daemon_(std::move(daemon)) {
        server_.Post("/session", [this](const httplib::Request& req, httplib::Response& res) {
            try {
                Json body = Json::parse(req.body);
                ArtifactRef artifact;
                artifact.name = body.at("artifact_name").get<std::string>();
                artifact.digest = from_hex_array<32>(body.at("digest_hex").get<std::string>());
                artifact.length = body.value("length", std::uint64_t{0});
                SigningSession s =
                    daemon_->open_session(artifact, body.at("level").get<int>(),
                                          mode_from_string(body.at("mode").get<std::string>()));
                res.set_content(Json{{"confirm", daemon_->confirm_payload(s.session_id)},
                                     {"session_id", s.session_id}}
                                    .dump(),
                                "application/json");
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(Json{{"error", e.what()}}.dump(), "application/json");
            }
        });
        server_.Post(R"(/session/([0-9a-f]+)/sign)",
                     [this](const httplib::Request& req, httplib::Response& res) {
                         std::string id = req.matches[1];
                         try {
                             std::span<const std::uint8_t> bytes(
                                 reinterpret_cast<const std::uint8_t*>(req.body.data()),
                                 req.body.size());
                             SignResult r = daemon_->sign_request(id, bytes);
                             Json out{{"proof", r.proof.to_json()},
                                      {"signature", signature_to_json(r.artifact_signature)}};
                             if (r.certificate) out["certificate"] = r.certificate->to_json();
                             res.set_content(out.dump(), "application/json");
                         } catch (const DenialError& e) {
                             res.status = 403;
                             res.set_content(Json{{"error", e.what()}}.dump(), "application/json");
                         } catch (const std::exception& e) {
                             res.status = 400;
                             res.set_content(Json{{"error", e.what()}}.dump(), "application/json");
                         }
                     });
    }

    ~DaemonServer() { stop(); }

    int start() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        if (port_ <= 0) throw TransportError("daemon server: bind failed");
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
    std::shared_ptr<SigningDaemon> daemon_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

// Client side of the daemon API, used by the CLI when a daemon URL is given.
class DaemonClient {
   public:
    explicit DaemonClient(std::string url) : url_(std::move(url)) {}

    struct Opened {
        std::string session_id;
        std::string confirm;
    };

    Opened open_session(const ArtifactRef& artifact, int level, Mode mode) {
        httplib::Client client(url_);
        client.set_connection_timeout(2, 0);
        Json body{{"artifact_name", artifact.name},
                  {"digest_hex", to_hex(artifact.digest)},
                  {"length", artifact.length},
                  {"level", level},
                  {"mode", to_string(mode)}};
        auto res = client.Post("/session", body.dump(), "application/json");
        if (!res) throw TransportError("daemon unreachable: " + url_);
        Json j = Json::parse(res->body);
        if (res->status != 200) throw DenialError(j.value("error", "session refused"));
        return {j.at("session_id").get<std::string>(), j.at("confirm").get<std::string>()};
    }

    SignResult sign(const std::string& session_id, std::span<const std::uint8_t> bytes) {
        httplib::Client client(url_);
        client.set_connection_timeout(2, 0);
        client.set_read_timeout(30, 0);
        auto res = client.Post("/session/" + session_id + "/sign",
                               std::string(bytes.begin(), bytes.end()),
                               "application/octet-stream");
        if (!res) throw TransportError("daemon unreachable: " + url_);
        Json j = Json::parse(res->body);
        if (res->status != 200) throw DenialError(j.value("error", "signing refused"));
        SignResult r;
        r.artifact_signature = signature_from_json(j.at("signature"));
        r.proof = DiVerifyProof::from_json(j.at("proof"));
        if (j.contains("certificate")) r.certificate = Certificate::from_json(j.at("certificate"));
        return r;
    }

   private:
    std::string url_;
};

}  // namespace diverify
