#pragma once

#include "diverify/stack.hpp"

namespace diverify {

enum class CompromiseType { user_credential, client, provider_subset, certificate_authority };
enum class AttackMode { none, legacy, trusted_auth, core };
enum class Outcome { accepted, rejected, not_applicable };

inline std::string to_string(CompromiseType c) {
    switch (c) {
        case CompromiseType::user_credential: return "user_credential";
        case CompromiseType::client: return "client";
        case CompromiseType::provider_subset: return "provider_subset";
        case CompromiseType::certificate_authority: return "certificate_authority";
    }
    throw EncodingError("unknown compromise type");
}

inline CompromiseType compromise_from_string(std::string_view s) {
    if (s == "user_credential") return CompromiseType::user_credential;
    if (s == "client") return CompromiseType::client;
    if (s == "provider_subset") return CompromiseType::provider_subset;
    if (s == "certificate_authority") return CompromiseType::certificate_authority;
    throw ParseError("unknown compromise type: " + std::string(s));
}

inline std::string to_string(AttackMode m) {
    switch (m) {
        case AttackMode::none: return "none";
        case AttackMode::legacy: return "legacy";
        case AttackMode::trusted_auth: return "trusted_auth";
        case AttackMode::core: return "core";
    }
    throw EncodingError("unknown attack mode");
}

inline AttackMode attack_mode_from_string(std::string_view s) {
    if (s == "none") return AttackMode::none;
    if (s == "legacy") return AttackMode::legacy;
    if (s == "trusted_auth" || s == "trusted-auth") return AttackMode::trusted_auth;
    if (s == "core") return AttackMode::core;
    throw ParseError("unknown attack mode: " + std::string(s));
}

inline std::string to_string(Outcome o) {
    switch (o) {
        case Outcome::accepted: return "accepted";
        case Outcome::rejected: return "rejected";
        case Outcome::not_applicable: return "not_applicable";
    }
    throw EncodingError("unknown outcome");
}

inline Outcome outcome_from_string(std::string_view s) {
    if (s == "accepted") return Outcome::accepted;
    if (s == "rejected") return Outcome::rejected;
    if (s == "not_applicable") return Outcome::not_applicable;
    throw ParseError("unknown outcome: " + std::string(s));
}

struct Scenario {
    CompromiseType compromise = CompromiseType::user_credential;
    AttackMode mode = AttackMode::none;
    int level = 2;  // policy level the verifier pins for the row
    Outcome expected = Outcome::accepted;
};

struct ScenarioResult {
    Outcome outcome = Outcome::accepted;
    std::string step;    // verifier step that fired on rejection
    std::string detail;  // extra mechanism notes (e.g. CA denial reason)

    Json to_json() const {
        return Json{{"detail", detail}, {"outcome", to_string(outcome)}, {"step", step}};
    }
};

namespace harness {

class TempDir {
   public:
    TempDir() {
        path_ = std::filesystem::temp_directory_path() /
                ("diverify-" + to_hex(random_array<8>()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

   private:
    std::filesystem::path path_;
};

// Claim with a valid structure but a garbage signature: what a rogue client
// fabricates when it controls no provider key.
inline ScopeClaim spoof_claim(const std::string& provider_id, const std::string& scope_type,
                              const std::string& value, const Nonce& nonce) {
    ScopeClaim c;
    c.provider_id = provider_id;
    c.scope_type = scope_type;
    c.value = value;
    c.nonce = nonce.value;
    c.provider_signature.bytes = random_array<64>();
    c.provider_signature.key_id = random_array<8>();
    return c;
}

// The daemon signing flow stripped of its checks: what an altered daemon
// does with whatever claims it has on hand.
struct RogueSignResult {
    Signature artifact_signature;
    DiVerifyProof proof;
};

inline RogueSignResult rogue_sign(std::span<const std::uint8_t> artifact_bytes,
                                  std::vector<ScopeClaim> scopes, Mode mode, int level,
                                  AttestationBackend* backend, std::int64_t now,
                                  const std::string& config_version = "1.0") {
    KeyPair ephemeral = KeyPair::generate();
    RogueSignResult r;
    r.artifact_signature = sign(ephemeral, sha256(artifact_bytes));
    r.proof.config_version = config_version;
    r.proof.trust_level = level;
    r.proof.scopes = std::move(scopes);
    r.proof.signing_key = ephemeral.public_key;
    r.proof.mode = mode;
    if (mode != Mode::legacy) {
        Signature binding = sign(ephemeral, hash_scopes(r.proof.scopes));
        r.proof.quote = backend->get_quote(binding.bytes, now);
    }
    ephemeral.wipe();
    return r;
}

inline std::vector<ScopeClaim> collect_claims(const LocalStack& stack, const Nonce& nonce,
                                              int level) {
    std::vector<ScopeClaim> claims;
    for (const auto& scope_type : stack.levels.required(level)) {
        auto desc = stack.hub->find_by_scope_type(scope_type);
        if (!desc) throw NotFoundError("no provider for " + scope_type);
        claims.push_back(stack.hub->request_scope(desc->provider_id, {nonce, scope_type, ""}));
    }
    return claims;
}

}  // namespace harness

// Executable reproduction of the security matrix: inject one compromise,
// run sign + verify, and report the verifier's decision and the step that
// fired.
inline ScenarioResult run_scenario(const Scenario& s) {
    using namespace harness;

    if (s.compromise == CompromiseType::certificate_authority && s.mode == AttackMode::core)
        return {Outcome::not_applicable, "", "core mode removes the CA from the trust chain"};

    TempDir td;
    LocalStack stack = LocalStack::create(td.path(), /*persist=*/false);
    Bytes malicious = to_bytes("malicious payload " + to_hex(random_array<8>()));

    // Baseline: single-OIDC signing, no proof checks. Every compromise in
    // the model lets the attacker end up with a valid signature, and the
    // baseline verifier looks no further.
    if (s.mode == AttackMode::none) {
        Nonce nonce = Nonce::fresh(stack.clock());
        ScopeClaim oidc =
            stack.hub->request_scope("oidc-beacon", {nonce, "oidc", ""});
        RogueSignResult r =
            rogue_sign(malicious, {oidc}, Mode::legacy, 1, nullptr, stack.clock());
        VerificationBundle bundle;
        bundle.artifact = ArtifactRef::from_bytes("evil-pkg", malicious);
        bundle.artifact_bytes = malicious;
        bundle.signature = r.artifact_signature;
        bundle.proof = r.proof;
        bool ok = LocalStack::baseline_verify(bundle);
        return {ok ? Outcome::accepted : Outcome::rejected, "", "baseline checks signature only"};
    }

    Mode mode = s.mode == AttackMode::legacy ? Mode::legacy
                : s.mode == AttackMode::core ? Mode::core
                                             : Mode::trusted_auth;
    std::string policy_id = stack.ensure_policy(mode, s.level);
    auto verify_published = [&](const std::string& name) {
        VerificationBundle bundle = stack.registry->fetch(name, "1.0.0", policy_id);
        return stack.verify_bundle(bundle);
    };

    switch (s.compromise) {
        case CompromiseType::user_credential: {
            // The attacker holds the signer's OIDC credential and nothing
            // else, so the strongest session they can complete is L1.
            RegistryEntry e = stack.sign_entry("evil-pkg", "1.0.0", malicious, 1, mode);
            stack.registry->publish(e);
            VerifyReport report = verify_published("evil-pkg");
            return {report.accepted ? Outcome::accepted : Outcome::rejected, report.step,
                    "attacker could satisfy only the oidc scope"};
        }

        case CompromiseType::provider_subset: {
            // One provider key leaks; the attacker mints authentic-looking
            // oidc claims on their own (genuine) machine.
            KeyPair leaked = stack.leak_provider_key("oidc");
            stack.run_oidc_with_key(leaked, stack.profile.subject);
            RegistryEntry e = stack.sign_entry("evil-pkg", "1.0.0", malicious, 1, mode);
            stack.registry->publish(e);
            VerifyReport report = verify_published("evil-pkg");
            return {report.accepted ? Outcome::accepted : Outcome::rejected, report.step,
                    "forged oidc claim signed with the leaked provider key"};
        }

        case CompromiseType::client: {
            if (mode == Mode::legacy) {
                // No attestation: a compromised client replays claims it
                // captured from an earlier legitimate session.
                Bytes benign = to_bytes("benign payload");
                RegistryEntry honest = stack.sign_entry("benign-pkg", "1.0.0", benign, s.level,
                                                        Mode::legacy);
                RogueSignResult r = rogue_sign(malicious, honest.proof.scopes, Mode::legacy,
                                               s.level, nullptr, stack.clock());
                IssueResult issued =
                    stack.ca->issue_certificate(r.proof.signing_key, r.proof, Mode::legacy);
                if (std::holds_alternative<CaDenial>(issued))
                    return {Outcome::rejected, "claim-auth",
                            "ca refused replayed claims: " +
                                std::get<CaDenial>(issued).reason};
                RegistryEntry e{"evil-pkg", "1.0.0", malicious, r.artifact_signature, r.proof,
                                std::get<Certificate>(issued)};
                stack.registry->publish(e);
                VerifyReport report = verify_published("evil-pkg");
                return {report.accepted ? Outcome::accepted : Outcome::rejected, report.step,
                        "replayed genuinely signed stale claims"};
            }
            // Attested modes: the altered daemon's measurement drifts. The
            // signer is present, so claims are live; the payload is not what
            // they approved. The rogue daemon still follows the challenge
            // protocol, it just cannot fake its measurement.
            Nonce nonce = mode == Mode::trusted_auth ? stack.ca->challenge()
                                                     : Nonce::fresh(stack.clock());
            std::vector<ScopeClaim> claims = collect_claims(stack, nonce, s.level);
            stack.compromise_client();
            RogueSignResult r = rogue_sign(malicious, claims, mode, s.level,
                                           stack.backend.get(), stack.clock());
            RegistryEntry e{"evil-pkg", "1.0.0", malicious, r.artifact_signature, r.proof,
                            std::nullopt};
            std::string detail = "daemon manifest altered; measurement drifted";
            if (mode == Mode::trusted_auth) {
                IssueResult issued =
                    stack.ca->issue_certificate(r.proof.signing_key, r.proof, mode);
                if (const auto* denial = std::get_if<CaDenial>(&issued)) {
                    detail += "; ca denied certificate: " + denial->reason;
                } else {
                    e.certificate = std::get<Certificate>(issued);
                }
            }
            stack.registry->publish(e);
            VerifyReport report = verify_published("evil-pkg");
            return {report.accepted ? Outcome::accepted : Outcome::rejected, report.step, detail};
        }

        case CompromiseType::certificate_authority: {
            stack.set_ca_compromised(true);
            Nonce nonce = s.mode == AttackMode::trusted_auth ? stack.ca->challenge()
                                                             : Nonce::fresh(stack.clock());
            RogueSignResult r;
            std::string detail;
            if (mode == Mode::legacy) {
                // Rogue client spoofs claim values outright; the compromised
                // CA certifies them without checking.
                std::vector<ScopeClaim> spoofed{
                    spoof_claim("oidc-beacon", "oidc", stack.profile.subject, nonce),
                    spoof_claim("security-key", "security_key",
                                stack.profile.security_key_value, nonce)};
                r = rogue_sign(malicious, spoofed, Mode::legacy, s.level, nullptr, stack.clock());
                detail = "compromised ca certified spoofed claims";
            } else {
                // Compromised client plus compromised CA: the certificate
                // embeds an attestation that never verified.
                std::vector<ScopeClaim> claims = collect_claims(stack, nonce, s.level);
                stack.compromise_client();
                r = rogue_sign(malicious, claims, mode, s.level, stack.backend.get(),
                               stack.clock());
                detail = "compromised ca certified an invalid attestation";
            }
            IssueResult issued = stack.ca->issue_certificate(r.proof.signing_key, r.proof, mode);
            if (std::holds_alternative<CaDenial>(issued))
                return {Outcome::rejected, "certificate", "compromised ca unexpectedly refused"};
            RegistryEntry e{"evil-pkg", "1.0.0", malicious, r.artifact_signature, r.proof,
                            std::get<Certificate>(issued)};
            stack.registry->publish(e);
            VerifyReport report = verify_published("evil-pkg");
            return {report.accepted ? Outcome::accepted : Outcome::rejected, report.step, detail};
        }
    }
    throw Error("unhandled scenario");
}

struct MatrixCell {
    CompromiseType compromise;
    AttackMode mode;
    Outcome expected;
    Outcome observed;
    std::string step;
    bool pass = false;

    Json to_json() const {
        return Json{{"compromise", to_string(compromise)}, {"expected", to_string(expected)},
                    {"mode", to_string(mode)},             {"observed", to_string(observed)},
                    {"pass", pass},                        {"step", step}};
    }
};

struct MatrixReport {
    std::vector<MatrixCell> cells;
    bool all_pass = true;

    Json to_json() const {
        Json arr = Json::array();
        for (const auto& c : cells) arr.push_back(c.to_json());
        return Json{{"all_pass", all_pass}, {"cells", arr}};
    }
};

// The checked-in expectations mirror the published security matrix.
inline Json builtin_expected_matrix() {
    return Json::parse(R"({
      "rows": [
        {"compromise": "user_credential",
         "outcomes": {"none": "accepted", "legacy": "rejected",
                      "trusted_auth": "rejected", "core": "rejected"}},
        {"compromise": "client",
         "outcomes": {"none": "accepted", "legacy": "accepted",
                      "trusted_auth": "rejected", "core": "rejected"}},
        {"compromise": "provider_subset",
         "outcomes": {"none": "accepted", "legacy": "rejected",
                      "trusted_auth": "rejected", "core": "rejected"}},
        {"compromise": "certificate_authority",
         "outcomes": {"none": "accepted", "legacy": "accepted",
                      "trusted_auth": "rejected", "core": "not_applicable"}}
      ]
    })");
}

inline MatrixReport run_matrix(const Json& expected = builtin_expected_matrix()) {
    static constexpr AttackMode kModes[] = {AttackMode::none, AttackMode::legacy,
                                            AttackMode::trusted_auth, AttackMode::core};
    MatrixReport report;
    for (const auto& row : expected.at("rows")) {
        CompromiseType compromise =
            compromise_from_string(row.at("compromise").get<std::string>());
        for (AttackMode mode : kModes) {
            MatrixCell cell;
            cell.compromise = compromise;
            cell.mode = mode;
            cell.expected =
                outcome_from_string(row.at("outcomes").at(to_string(mode)).get<std::string>());
            ScenarioResult result = run_scenario({compromise, mode, 2, cell.expected});
            cell.observed = result.outcome;
            cell.step = result.step;
            cell.pass = cell.observed == cell.expected;
            report.all_pass = report.all_pass && cell.pass;
            report.cells.push_back(cell);
        }
    }
    return report;
}

}  // namespace diverify
