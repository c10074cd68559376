#include <catch2/catch_amalgamated.hpp>

#include <thread>

#include "diverify/providers.hpp"
#include "support/sha256_ref.hpp"

using namespace diverify;

namespace {

struct Fixture {
    KeyPair oidc_key = KeyPair::generate();
    KeyPair device_key = KeyPair::generate();
    KeyPair slot_key = KeyPair::generate();
    KeyPair device_root = KeyPair::generate();
    std::shared_ptr<ProviderHub> hub = std::make_shared<ProviderHub>();

    Fixture() {
        hub->register_provider(std::make_shared<SimulatedOidcProvider>(
            "oidc-beacon", "alice@software.sh", "https://accounts.software.sh", oidc_key));
        hub->register_provider(
            std::make_shared<DeviceFingerprintProvider>("device-fp", "mbp-01", device_key));
        hub->register_provider(
            std::make_shared<SecurityKeyProvider>("security-key", slot_key, device_root));
    }
};

ScopeRequest request_for(const Nonce& nonce, const std::string& claim) {
    return ScopeRequest{nonce, claim, ""};
}

}  // namespace

TEST_CASE("simulated oidc provider issues a nonce-bound identity claim", "[providers]") {
    Fixture f;
    Nonce nonce = Nonce::fresh();
    ScopeClaim c = f.hub->request_scope("oidc-beacon", request_for(nonce, "oidc"));
    CHECK(c.value == "alice@software.sh");
    CHECK(c.extra.count("token_hash") == 1);
    CHECK(c.extra.at("provider") == "https://accounts.software.sh");
    CHECK(c.nonce == nonce.value);
    CHECK(f.hub->validate(c, nonce));
}

TEST_CASE("device fingerprint follows the nonce-hash tuple", "[providers]") {
    Fixture f;
    Nonce nonce = Nonce::fresh();
    ScopeClaim c = f.hub->request_scope("device-fp", request_for(nonce, "device_fingerprint"));
    CHECK(c.value == "mbp-01");
    // signature is over sha256(nonce | measurement), recomputed independently
    auto digest = testsupport::sha256_ref(concat(nonce.value, to_bytes(c.value)));
    CHECK(verify(f.device_key.public_key, digest, c.provider_signature));
    CHECK(f.hub->validate(c, nonce));
}

TEST_CASE("security key claims carry the PIV slot fields and attestation chain", "[providers]") {
    Fixture f;
    Nonce nonce = Nonce::fresh();
    ScopeClaim c = f.hub->request_scope("security-key", request_for(nonce, "security_key"));
    CHECK(c.value == to_hex(f.slot_key.public_key));
    REQUIRE(c.extra.count("slot9a_public_key") == 1);
    REQUIRE(c.extra.count("slotf9_attestation_cert") == 1);
    SimCert att = SimCert::from_json(Json::parse(c.extra.at("slotf9_attestation_cert")));
    CHECK(att.subject_key == f.slot_key.public_key);
    CHECK(verify(f.device_root.public_key, att.body_bytes(), att.signature));
    CHECK(f.hub->validate(c, nonce));
}

TEST_CASE("stale nonces are rejected at validation", "[providers]") {
    Fixture f;
    Nonce session_a = Nonce::fresh();
    Nonce session_b = Nonce::fresh();
    ScopeClaim c = f.hub->request_scope("device-fp", request_for(session_a, "device_fingerprint"));
    CHECK(f.hub->validate(c, session_a));
    CHECK_FALSE(f.hub->validate(c, session_b));
}

TEST_CASE("claims re-signed by a different registered provider fail", "[providers]") {
    Fixture f;
    Nonce nonce = Nonce::fresh();
    ScopeClaim c = f.hub->request_scope("oidc-beacon", request_for(nonce, "oidc"));
    // Cross-sign the same content with another registered provider's key.
    c.provider_signature =
        sign(f.device_key, claim_signing_message(ProviderClass::VP, c.provider_id, c.scope_type,
                                                 c.value, c.nonce, c.extra));
    CHECK_FALSE(f.hub->validate(c, nonce));
}

TEST_CASE("validation only accepts the registered key", "[providers][property]") {
    Fixture f;
    Nonce nonce = Nonce::fresh();
    ScopeClaim genuine = f.hub->request_scope("device-fp", request_for(nonce, "device_fingerprint"));
    for (int i = 0; i < 16; ++i) {
        KeyPair imposter = KeyPair::generate();
        ScopeClaim forged = genuine;
        forged.provider_signature =
            sign(imposter, claim_signing_message(ProviderClass::SP_nonce_hash, forged.provider_id,
                                                 forged.scope_type, forged.value, forged.nonce,
                                                 forged.extra));
        CHECK_FALSE(f.hub->validate(forged, nonce));
    }
}

TEST_CASE("commitment claims open to the committed value", "[providers]") {
    KeyPair key = KeyPair::generate();
    auto provider =
        std::make_shared<CommitmentProvider>("zk-stand-in", "device_fingerprint", "mbp-01", key);
    ProviderHub hub;
    hub.register_provider(provider);
    Nonce nonce = Nonce::fresh();
    ScopeClaim c = hub.request_scope("zk-stand-in", request_for(nonce, "device_fingerprint"));
    REQUIRE(c.extra.count("commitment") == 1);
    REQUIRE(c.extra.count("salt") == 1);
    CHECK(hub.validate(c, nonce));

    ScopeClaim wrong_value = c;
    wrong_value.value = "other-device";
    CHECK_FALSE(hub.validate(wrong_value, nonce));

    ScopeClaim wrong_salt = c;
    wrong_salt.extra["salt"] = to_hex(random_bytes(16));
    CHECK_FALSE(hub.validate(wrong_salt, nonce));
}

TEST_CASE("opaque providers are wrapped behind an authenticated broker", "[providers]") {
    KeyPair broker = KeyPair::generate();
    auto provider = wrap_opaque_provider("tpm-broker", "tpm_pcr",
                                         [] { return std::string("tpm-pcr:abc"); }, broker);
    ProviderHub hub;
    hub.register_provider(provider);

    Nonce n1 = Nonce::fresh();
    Nonce n2 = Nonce::fresh();
    ScopeClaim c1 = hub.request_scope("tpm-broker", request_for(n1, "tpm_pcr"));
    ScopeClaim c2 = hub.request_scope("tpm-broker", request_for(n2, "tpm_pcr"));
    CHECK(c1.value == "tpm-pcr:abc");
    CHECK(c2.value == c1.value);
    CHECK(c1.provider_signature.bytes != c2.provider_signature.bytes);
    CHECK(hub.validate(c1, n1));
    CHECK_FALSE(hub.validate(c1, n2));
}

TEST_CASE("broker surfaces inner failures as denials", "[providers]") {
    KeyPair broker = KeyPair::generate();
    auto provider = wrap_opaque_provider(
        "flaky", "tpm_pcr", []() -> std::string { throw std::runtime_error("sensor offline"); },
        broker);
    ProviderHub hub;
    hub.register_provider(provider);
    CHECK_THROWS_AS(hub.request_scope("flaky", request_for(Nonce::fresh(), "tpm_pcr")),
                    DenialError);
}

TEST_CASE("untrusted providers combine the broker with the nonce-hash wrap", "[providers]") {
    KeyPair broker = KeyPair::generate();
    auto provider = wrap_untrusted_provider("fp-reader", "device_fingerprint",
                                            [] { return std::string("raw-fp-77"); }, broker);
    CHECK(provider->descriptor().cls == ProviderClass::UT);
    ProviderHub hub;
    hub.register_provider(provider);
    Nonce nonce = Nonce::fresh();
    ScopeClaim c = hub.request_scope("fp-reader", request_for(nonce, "device_fingerprint"));
    // validates exactly like a nonce-hash SP
    auto digest = testsupport::sha256_ref(concat(nonce.value, to_bytes(c.value)));
    CHECK(verify(broker.public_key, digest, c.provider_signature));
    CHECK(hub.validate(c, nonce));
}

TEST_CASE("requests for closed sessions are denied", "[providers]") {
    Fixture f;
    f.hub->set_session_gate([](const std::string& id) { return id == "open-session"; });
    Nonce nonce = Nonce::fresh();
    CHECK_NOTHROW(f.hub->request_scope("oidc-beacon", {nonce, "oidc", "open-session"}));
    CHECK_THROWS_AS(f.hub->request_scope("oidc-beacon", {nonce, "oidc", "closed-session"}),
                    DenialError);
}

TEST_CASE("unknown providers are an error, not a false verdict", "[providers]") {
    Fixture f;
    CHECK_THROWS_AS(f.hub->request_scope("nope", request_for(Nonce::fresh(), "oidc")),
                    NotFoundError);
    ScopeClaim c;
    c.provider_id = "nope";
    CHECK_THROWS_AS(f.hub->validate(c, Nonce::fresh()), NotFoundError);
}

TEST_CASE("parallel fetches in one session share the nonce", "[providers][concurrency]") {
    Fixture f;
    Nonce nonce = Nonce::fresh();
    constexpr int kThreads = 12;
    std::vector<ScopeClaim> claims(kThreads);
    std::vector<std::thread> threads;
    const char* types[] = {"oidc", "device_fingerprint", "security_key"};
    const char* ids[] = {"oidc-beacon", "device-fp", "security-key"};
    for (int i = 0; i < kThreads; ++i) {
        threads.emplace_back([&, i] {
            claims[i] = f.hub->request_scope(ids[i % 3], request_for(nonce, types[i % 3]));
        });
    }
    for (auto& t : threads) t.join();
    for (const auto& c : claims) {
        CHECK(c.nonce == nonce.value);
        CHECK(f.hub->validate(c, nonce));
    }
}

TEST_CASE("registry file round trips descriptors", "[providers]") {
    Fixture f;
    Json registry = f.hub->registry_json();
    REQUIRE(registry.size() == 3);
    ProviderHub fresh;
    fresh.load_registry_json(registry);
    CHECK(fresh.descriptor("oidc-beacon").public_key == f.oidc_key.public_key);
    CHECK(fresh.descriptor("device-fp").cls == ProviderClass::SP_nonce_hash);
}

TEST_CASE("provider ids are unique within a registry", "[providers]") {
    Fixture f;
    auto dup = std::make_shared<SimulatedOidcProvider>(
        "oidc-beacon", "bob@software.sh", "https://elsewhere.example", KeyPair::generate());
    CHECK_THROWS_AS(f.hub->register_provider(dup), Error);
}

TEST_CASE("remote VP serves scope requests over loopback http", "[providers][http]") {
    KeyPair key = KeyPair::generate();
    auto provider = std::make_shared<SimulatedOidcProvider>(
        "oidc-remote", "alice@software.sh", "https://accounts.software.sh", key);
    ScopeProviderServer server(provider);
    server.start();

    ProviderHub hub;
    hub.register_remote(server.remote_descriptor());

    Nonce nonce = Nonce::fresh();
    ScopeClaim c = hub.request_scope("oidc-remote", request_for(nonce, "oidc"));
    CHECK(c.value == "alice@software.sh");
    CHECK(hub.validate(c, nonce));

    // provider refuses unsupported claims with a denial
    CHECK_THROWS_AS(hub.request_scope("oidc-remote", request_for(nonce, "device_fingerprint")),
                    DenialError);

    server.stop();
    // unreachable endpoint is a transport error
    CHECK_THROWS_AS(hub.request_scope("oidc-remote", request_for(nonce, "oidc")), TransportError);
}
