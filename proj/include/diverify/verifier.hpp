#pragma once

#include "diverify/ca.hpp"
#include "diverify/policy_meta.hpp"

namespace diverify {

struct VerificationBundle {
    ArtifactRef artifact;
    Bytes artifact_bytes;
    Signature signature;
    DiVerifyProof proof;
    std::optional<Certificate> certificate;
    std::string policy_id;
};

struct VerifyReport {
    bool accepted = false;
    std::string step;  // first failing check, empty on accept
    std::vector<std::string> reasons;

    Json to_json() const {
        Json r = Json::array();
        for (const auto& s : reasons) r.push_back(s);
        return Json{{"decision", accepted ? "accept" : "reject"},
                    {"reasons", r},
                    {"step", step}};
    }
};

// Artifact verification across the three modes. Checks run in a fixed order
// and the report names the first step that failed:
//   0  metadata admission (rollback-resistant policy state)
//   1  mode evidence: quote (core) or certificate envelope, plus an
//      independent re-validation of the embedded attestation (trusted_auth)
//   2  scope binding: the quote's custom data verifies as the signature over
//      the scope digest under the proof's signing key
//   3  policy evaluation
//   4  artifact signature
class Verifier {
   public:
    Verifier(TrustedRootStore roots, std::shared_ptr<VerifierState> state,
             std::optional<Key32> ca_public_key = std::nullopt,
             std::shared_ptr<const ProviderHub> hub = nullptr,
             std::function<std::int64_t()> clock = now_unix)
        : roots_(std::move(roots)),
          state_(std::move(state)),
          ca_public_key_(ca_public_key),
          hub_(std::move(hub)),
          clock_(std::move(clock)) {}

    VerifyReport verify_artifact(const VerificationBundle& bundle, const Policy& policy,
                                 const PolicyMeta& meta) const {
        std::int64_t now = clock_();

        AdmitDecision admitted =
            state_->verify_and_admit(bundle.policy_id, meta, policy, now);
        if (!admitted.accepted)
            return reject("metadata-" + admitted.reason, {admitted.reason});

        const DiVerifyProof& proof = bundle.proof;
        Mode mode = proof.mode;

        if (mode == Mode::core) {
            if (bundle.certificate)
                return reject("certificate", {"core bundles do not carry a certificate"});
            if (!proof.quote) return reject("quote", {"missing quote"});
            if (!check_quote(*proof.quote, roots_, now)) return reject("quote", {"invalid quote"});
        } else {
            if (!bundle.certificate)
                return reject("certificate", {"missing certificate for mode " + to_string(mode)});
            const Certificate& cert = *bundle.certificate;
            if (!ca_public_key_)
                return reject("certificate", {"verifier has no trusted CA key"});
            if (!cert.signature_valid(*ca_public_key_))
                return reject("certificate", {"ca signature invalid"});
            if (cert.subject_key != proof.signing_key)
                return reject("certificate", {"subject key mismatch"});
            // The certificate binds the proof it was issued over; a bundle
            // proof that differs from the embedded one (beyond scope order)
            // is tampered.
            if (cert.embedded_proof.fingerprint() != proof.fingerprint())
                return reject("certificate", {"embedded proof mismatch"});
            if (mode == Mode::trusted_auth) {
                // Re-validate the embedded attestation instead of trusting
                // the CA blindly: a compromised CA that skipped its checks
                // is caught here.
                if (!cert.embedded_proof.quote)
                    return reject("cert-attestation", {"certificate embeds no quote"});
                if (!check_quote(*cert.embedded_proof.quote, roots_, now))
                    return reject("cert-attestation", {"embedded quote invalid"});
            }
            if (mode == Mode::legacy && proof.quote)
                return reject("certificate", {"legacy proof must not carry a quote"});
        }

        if (mode != Mode::legacy) {
            if (proof.scopes.empty()) return reject("scope-binding", {"proof carries no scopes"});
            if (!proof.quote) return reject("scope-binding", {"missing quote"});
            Signature binding;
            binding.bytes = proof.quote->custom_data;
            binding.key_id = key_id_of(proof.signing_key);
            if (!verify(proof.signing_key, hash_scopes(proof.scopes), binding))
                return reject("scope-binding", {"custom data does not sign the scope digest"});
        }

        PolicyDecision policy_decision = evaluate_policy(proof, policy, roots_, now);
        if (!policy_decision.accepted) return reject("policy", {policy_decision.reason});

        Digest32 digest = sha256(bundle.artifact_bytes);
        if (digest != bundle.artifact.digest)
            return reject("artifact-signature", {"artifact digest mismatch"});
        if (!verify(proof.signing_key, digest, bundle.signature))
            return reject("artifact-signature", {"signature does not verify"});

        return VerifyReport{true, "", {}};
    }

    // Legacy-mode substitute for attestation, run by a CA (or a verifier
    // that talks to the providers directly): every claim must be
    // authentically signed by its registered provider. Nonces are not
    // checked against any session, so replay of genuinely signed stale
    // claims passes; that exposure is inherent to the legacy model.
    bool verify_claims_against_providers(const DiVerifyProof& proof) const {
        if (!hub_) throw Error("no provider registry configured");
        if (proof.scopes.empty()) return false;
        return hub_->claims_authentic(proof.scopes);
    }

    const TrustedRootStore& roots() const { return roots_; }

   private:
    static VerifyReport reject(std::string step, std::vector<std::string> reasons) {
        return VerifyReport{false, std::move(step), std::move(reasons)};
    }

    TrustedRootStore roots_;
    std::shared_ptr<VerifierState> state_;
    std::optional<Key32> ca_public_key_;
    std::shared_ptr<const ProviderHub> hub_;
    std::function<std::int64_t()> clock_;
};

}  // namespace diverify
