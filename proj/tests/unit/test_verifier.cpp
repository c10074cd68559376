#include <catch2/catch_amalgamated.hpp>

#include "diverify/attack.hpp"
#include "diverify/verifier.hpp"

using namespace diverify;

namespace {

struct Fixture {
    harness::TempDir td;
    LocalStack stack = LocalStack::create(td.path(), false);
    Bytes bytes = to_bytes("verified artifact body");

    VerificationBundle published(int level, Mode mode, const std::string& name = "pkg") {
        return stack.sign_and_publish(name, "1.0.0", bytes, level, mode);
    }
};

}  // namespace

TEST_CASE("honest bundles verify in every mode", "[verifier]") {
    Fixture f;
    for (Mode mode : {Mode::core, Mode::legacy, Mode::trusted_auth}) {
        VerificationBundle b = f.published(2, mode, "pkg-" + to_string(mode));
        VerifyReport r = f.stack.verify_bundle(b);
        INFO(to_string(mode) << " step=" << r.step);
        CHECK(r.accepted);
    }
}

TEST_CASE("artifact mutations reject at the artifact-signature step", "[verifier]") {
    Fixture f;
    VerificationBundle b = f.published(2, Mode::core);

    VerificationBundle flipped = b;
    flipped.artifact_bytes[3] ^= 0x01;
    VerifyReport r = f.stack.verify_bundle(flipped);
    CHECK_FALSE(r.accepted);
    CHECK(r.step == "artifact-signature");

    VerificationBundle bad_sig = b;
    bad_sig.signature.bytes[10] ^= 0x01;
    r = f.stack.verify_bundle(bad_sig);
    CHECK_FALSE(r.accepted);
    CHECK(r.step == "artifact-signature");
}

TEST_CASE("reordered scopes still verify", "[verifier]") {
    Fixture f;
    for (Mode mode : {Mode::core, Mode::trusted_auth}) {
        VerificationBundle b = f.published(3, mode, "pkg-ro-" + to_string(mode));
        REQUIRE(b.proof.scopes.size() == 3);
        std::rotate(b.proof.scopes.begin(), b.proof.scopes.begin() + 1, b.proof.scopes.end());
        VerifyReport r = f.stack.verify_bundle(b);
        INFO(to_string(mode) << " step=" << r.step);
        CHECK(r.accepted);
    }
}

TEST_CASE("claim tampering in core mode rejects at the scope binding", "[verifier]") {
    Fixture f;
    VerificationBundle b = f.published(2, Mode::core);
    b.proof.scopes[0].value = "mallory@evil.sh";
    VerifyReport r = f.stack.verify_bundle(b);
    CHECK_FALSE(r.accepted);
    CHECK(r.step == "scope-binding");
}

TEST_CASE("claim tampering in certificate modes breaks the certificate binding", "[verifier]") {
    Fixture f;
    for (Mode mode : {Mode::legacy, Mode::trusted_auth}) {
        VerificationBundle b = f.published(2, mode, "pkg-ct-" + to_string(mode));
        b.proof.scopes[0].value = "mallory@evil.sh";
        VerifyReport r = f.stack.verify_bundle(b);
        INFO(to_string(mode));
        CHECK_FALSE(r.accepted);
        CHECK(r.step == "certificate");
    }
}

TEST_CASE("the earliest failing step is reported", "[verifier]") {
    Fixture f;
    // Fails both the quote check (measurement) and the policy rule; the
    // quote step must fire.
    std::string policy_id = f.stack.ensure_policy(Mode::core, 2);
    Nonce nonce = Nonce::fresh(f.stack.clock());
    auto claims = harness::collect_claims(f.stack, nonce, 1);  // policy wants L2
    f.stack.compromise_client();
    auto r = harness::rogue_sign(f.bytes, claims, Mode::core, 2, f.stack.backend.get(),
                                 f.stack.clock());
    RegistryEntry e{"pkg-order", "1.0.0", f.bytes, r.artifact_signature, r.proof, std::nullopt};
    f.stack.registry->publish(e);
    VerificationBundle b = f.stack.registry->fetch("pkg-order", "1.0.0", policy_id);
    VerifyReport report = f.stack.verify_bundle(b);
    CHECK_FALSE(report.accepted);
    CHECK(report.step == "quote");
}

TEST_CASE("mode and certificate presence must be consistent", "[verifier]") {
    Fixture f;
    VerificationBundle ta = f.published(1, Mode::trusted_auth, "pkg-ta");
    VerificationBundle no_cert = ta;
    no_cert.certificate.reset();
    VerifyReport r = f.stack.verify_bundle(no_cert);
    CHECK_FALSE(r.accepted);
    CHECK(r.step == "certificate");

    VerificationBundle core = f.published(1, Mode::core, "pkg-core");
    VerificationBundle with_cert = core;
    with_cert.certificate = ta.certificate;
    r = f.stack.verify_bundle(with_cert);
    CHECK_FALSE(r.accepted);
    CHECK(r.step == "certificate");
}

TEST_CASE("policy violations reject at the policy step", "[verifier]") {
    Fixture f;
    // L1 proof against the L2 policy
    RegistryEntry e = f.stack.sign_entry("pkg-weak", "1.0.0", f.bytes, 1, Mode::core);
    f.stack.registry->publish(e);
    std::string l2_policy = f.stack.ensure_policy(Mode::core, 2);
    VerificationBundle b = f.stack.registry->fetch("pkg-weak", "1.0.0", l2_policy);
    VerifyReport r = f.stack.verify_bundle(b);
    CHECK_FALSE(r.accepted);
    CHECK(r.step == "policy");
    REQUIRE_FALSE(r.reasons.empty());
    CHECK(r.reasons.front() == "rule");
}

TEST_CASE("metadata rollback rejects before anything else", "[verifier]") {
    Fixture f;
    VerificationBundle b = f.published(1, Mode::core, "pkg-meta");
    SignedPolicy v1 = f.stack.registry->fetch_policy(b.policy_id);

    // supersede the policy with a v2, then try to verify against stale v1
    SignedPolicy v2 = publish_semantic_update(v1.meta, v1.policy, f.stack.policy_key,
                                              f.stack.policy_root_key, f.stack.clock());
    f.stack.registry->publish_policy(b.policy_id, v2.policy, v2.meta);
    CHECK(f.stack.verify_bundle(b).accepted);  // admits v2

    Verifier verifier = f.stack.make_verifier();
    VerifyReport r = verifier.verify_artifact(b, v1.policy, v1.meta);
    CHECK_FALSE(r.accepted);
    CHECK(r.step == "metadata-rollback");
}

TEST_CASE("verification is deterministic", "[verifier]") {
    Fixture f;
    VerificationBundle b = f.published(3, Mode::core, "pkg-det");
    SignedPolicy sp = f.stack.registry->fetch_policy(b.policy_id);
    Verifier verifier = f.stack.make_verifier();
    VerifyReport first = verifier.verify_artifact(b, sp.policy, sp.meta);
    VerifyReport second = verifier.verify_artifact(b, sp.policy, sp.meta);
    CHECK(first.accepted == second.accepted);
    CHECK(first.step == second.step);
}

TEST_CASE("claim re-validation against providers (legacy substitute)", "[verifier]") {
    Fixture f;
    Verifier verifier = f.stack.make_verifier();

    VerificationBundle good = f.published(2, Mode::legacy, "pkg-claims");
    CHECK(verifier.verify_claims_against_providers(good.proof));

    // unregistered signing key
    DiVerifyProof forged = good.proof;
    KeyPair imposter = KeyPair::generate();
    forged.scopes[0].provider_signature =
        sign(imposter, claim_signing_message(ProviderClass::VP, forged.scopes[0].provider_id,
                                             forged.scopes[0].scope_type, forged.scopes[0].value,
                                             forged.scopes[0].nonce, forged.scopes[0].extra));
    CHECK_FALSE(verifier.verify_claims_against_providers(forged));

    // spoofed claim with a registered-provider value but garbage signature
    DiVerifyProof spoofed = good.proof;
    spoofed.scopes.push_back(harness::spoof_claim("device-fp", "device_fingerprint", "mbp-01",
                                                  Nonce::fresh()));
    CHECK_FALSE(verifier.verify_claims_against_providers(spoofed));

    // replay of a genuinely signed stale claim passes: inherent legacy gap
    VerificationBundle later = f.published(2, Mode::legacy, "pkg-claims-2");
    DiVerifyProof replayed = later.proof;
    replayed.scopes[0] = good.proof.scopes[0];
    CHECK(verifier.verify_claims_against_providers(replayed));

    // unknown provider id
    DiVerifyProof unknown = good.proof;
    unknown.scopes[0].provider_id = "never-registered";
    CHECK_FALSE(verifier.verify_claims_against_providers(unknown));
}

TEST_CASE("acceptance requires every check independently", "[verifier]") {
    Fixture f;
    VerificationBundle b = f.published(2, Mode::core, "pkg-ind");
    REQUIRE(f.stack.verify_bundle(b).accepted);

    SECTION("stale metadata") {
        SignedPolicy v1 = f.stack.registry->fetch_policy(b.policy_id);
        SignedPolicy v2 = publish_semantic_update(v1.meta, v1.policy, f.stack.policy_key,
                                                  f.stack.policy_root_key, f.stack.clock());
        f.stack.registry->publish_policy(b.policy_id, v2.policy, v2.meta);
        REQUIRE(f.stack.verify_bundle(b).accepted);
        Verifier verifier = f.stack.make_verifier();
        CHECK(verifier.verify_artifact(b, v1.policy, v1.meta).step == "metadata-rollback");
    }
    SECTION("unbound scopes") {
        VerificationBundle m = b;
        m.proof.scopes[1].nonce[0] ^= 0x01;
        CHECK(f.stack.verify_bundle(m).step == "scope-binding");
    }
    SECTION("unsatisfied policy") {
        VerificationBundle m = b;
        m.policy_id = f.stack.ensure_policy(Mode::core, 3);
        CHECK(f.stack.verify_bundle(m).step == "policy");
    }
    SECTION("tampered artifact") {
        VerificationBundle m = b;
        m.artifact_bytes.back() ^= 0x01;
        CHECK(f.stack.verify_bundle(m).step == "artifact-signature");
    }
}
