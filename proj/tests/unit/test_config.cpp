#include <catch2/catch_amalgamated.hpp>

#include "diverify/attack.hpp"
#include "diverify/config.hpp"

using namespace diverify;

TEST_CASE("the toml-style reader handles sections, strings, ints, and bools", "[config]") {
    TomlishFile f = TomlishFile::parse_text(R"(
# comment
registry = "registry"
retries = 3
[levels.1]
oidc = true
[levels.2]
oidc = true
security_key = false
)");
    CHECK(f.get_string("registry") == "registry");
    CHECK(f.get_int("retries") == 3);
    CHECK(f.get_bool("levels.1.oidc"));
    CHECK_FALSE(f.get_bool("levels.2.security_key"));
    CHECK(f.get_string("missing", "fallback") == "fallback");
    CHECK(f.keys_with_prefix("levels.").size() == 3);
}

TEST_CASE("malformed config lines are parse errors", "[config]") {
    CHECK_THROWS_AS(TomlishFile::parse_text("[unterminated\n"), ParseError);
    CHECK_THROWS_AS(TomlishFile::parse_text("key value\n"), ParseError);
    CHECK_THROWS_AS(TomlishFile::parse_text("key = \"open\n"), ParseError);
    CHECK_THROWS_AS(TomlishFile::parse_text("key = 12x\n"), ParseError);
    CHECK_THROWS_AS(TomlishFile::parse_text("registry = \"a\"\nx = \n"), ParseError);
}

TEST_CASE("type mismatches are errors", "[config]") {
    TomlishFile f = TomlishFile::parse_text("x = 3\n");
    CHECK_THROWS_AS(f.get_string("x"), ParseError);
    CHECK_THROWS_AS(f.get_bool("x"), ParseError);
}

TEST_CASE("a created environment loads back through its config", "[config]") {
    harness::TempDir td;
    LocalStack created = LocalStack::create(td.path());
    created.ensure_policy(Mode::core, 2);

    DiverifyConfig config = DiverifyConfig::load(td.path() / "diverify.toml");
    CHECK(config.levels.required(2) == std::set<std::string>{"oidc", "security_key"});
    CHECK(config.ca_public_key_hex == to_hex(created.ca_key.public_key));

    LocalStack reopened = LocalStack::open(config);
    CHECK(reopened.profile.subject == created.profile.subject);
    CHECK(reopened.identity.measurement == created.identity.measurement);
    CHECK(reopened.ca_key.public_key == created.ca_key.public_key);

    // the reopened stack signs and verifies with the persisted material
    Bytes bytes = to_bytes("cycled artifact");
    VerificationBundle b = reopened.sign_and_publish("cycle", "1.0.0", bytes, 2, Mode::core);
    CHECK(reopened.verify_bundle(b).accepted);
}

TEST_CASE("a registry entry pointing at an http provider works end to end", "[config][http]") {
    harness::TempDir td;
    LocalStack created = LocalStack::create(td.path());

    // serve the oidc provider over loopback and point providers.json at it
    ScopeProviderServer server(std::make_shared<SimulatedOidcProvider>(
        "oidc-beacon", created.profile.subject, created.profile.issuer, created.oidc_key));
    server.start();
    Json providers = Json::parse(Registry::read_text(td.path() / "providers.json"));
    for (auto& d : providers)
        if (d.at("provider_id") == "oidc-beacon") d["endpoint"] = server.endpoint();
    Registry::write_text(td.path() / "providers.json", providers.dump(2));

    LocalStack reopened = LocalStack::open(DiverifyConfig::load(td.path() / "diverify.toml"));
    Bytes bytes = to_bytes("remote provider artifact");
    VerificationBundle b = reopened.sign_and_publish("remote", "1.0.0", bytes, 1, Mode::core);
    CHECK(b.proof.scopes.at(0).provider_id == "oidc-beacon");
    CHECK(reopened.verify_bundle(b).accepted);

    // a dead endpoint surfaces as a transport error after the single retry
    server.stop();
    ArtifactRef ref = ArtifactRef::from_bytes("down", bytes);
    SigningSession s = reopened.daemon->open_session(ref, 1, Mode::core);
    CHECK_THROWS_AS(reopened.daemon->sign_request(s.session_id, bytes), TransportError);
}

TEST_CASE("a non-cumulative level table is refused at load", "[config]") {
    harness::TempDir td;
    LocalStack created = LocalStack::create(td.path());
    std::string toml = Registry::read_text(td.path() / "diverify.toml");
    toml += "\n[levels.4]\ndevice_fingerprint = true\n";
    Registry::write_text(td.path() / "diverify.toml", toml);
    CHECK_THROWS_AS(DiverifyConfig::load(td.path() / "diverify.toml"), ParseError);
}
