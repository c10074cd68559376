#pragma once

#include "diverify/config.hpp"
#include "diverify/registry.hpp"

namespace diverify {

struct SignerProfile {
    std::string signer_id = "alice";
    std::string subject = "alice@software.sh";
    std::string issuer = "https://accounts.software.sh";
    std::string device_fingerprint = "mbp-01";
    std::string security_key_value;  // slot 9a public key hex, filled at creation
};

// A complete simulated deployment: scope providers, attested daemon, CA,
// registry, policy keys, and verifier state, rooted in one directory. This
// is what `diverify setup` writes and what every other command loads.
class LocalStack {
   public:
    std::filesystem::path dir;
    SignerProfile profile;

    std::shared_ptr<ProviderHub> hub;
    std::shared_ptr<SimTeeBackend> backend;
    std::shared_ptr<SigningDaemon> daemon;
    std::shared_ptr<CertificateAuthority> ca;
    std::shared_ptr<Registry> registry;
    std::shared_ptr<VerifierState> state;
    TrustedRootStore roots;
    TrustLevelConfig levels = TrustLevelConfig::defaults();
    std::string config_version = "1.0";

    KeyPair oidc_key, device_key, slot_key, device_root_key, tee_root_key;
    KeyPair ca_key, policy_key, policy_root_key;
    AttestationIdentity identity;
    Json manifest;

    std::function<std::int64_t()> clock = now_unix;

    static LocalStack create(const std::filesystem::path& dir, bool persist = true,
                             std::function<std::int64_t()> clock = now_unix) {
        LocalStack s;
        s.dir = dir;
        s.clock = std::move(clock);
        std::filesystem::create_directories(dir);

        s.oidc_key = KeyPair::generate();
        s.device_key = KeyPair::generate();
        s.slot_key = KeyPair::generate();
        s.device_root_key = KeyPair::generate();
        s.tee_root_key = KeyPair::generate();
        s.ca_key = KeyPair::generate();
        s.policy_key = KeyPair::generate();
        s.policy_root_key = KeyPair::generate();
        s.profile.security_key_value = to_hex(s.slot_key.public_key);

        s.manifest = Json{{"binary_sha256", to_hex(sha256(std::string("diverify-daemon v") +
                                                          s.config_version))},
                          {"config_sha256", to_hex(sha256(std::string("trust-levels v1")))},
                          {"name", "diverify-daemon"}};
        s.identity = AttestationIdentity::create(s.tee_root_key, s.manifest);

        s.roots.roots = {s.identity.cert_chain.back()};
        s.roots.expected_measurements = {to_hex(s.identity.measurement)};

        s.build_components();
        s.registry = std::make_shared<Registry>(dir / "registry");
        s.state = std::make_shared<VerifierState>(s.policy_root_key.public_key);
        if (persist) {
            s.state->save(dir / "verifier_state.json");
            s.persist();
        }
        return s;
    }

    static LocalStack open(const DiverifyConfig& cfg,
                           std::function<std::int64_t()> clock = now_unix) {
        LocalStack s;
        s.dir = cfg.base_dir;
        s.clock = std::move(clock);
        s.levels = cfg.levels;
        s.config_version = cfg.config_version;

        Json secrets = Json::parse(Registry::read_text(cfg.provider_secrets_path));
        s.profile.signer_id = secrets.at("profile").at("signer_id").get<std::string>();
        s.profile.subject = secrets.at("profile").at("subject").get<std::string>();
        s.profile.issuer = secrets.at("profile").at("issuer").get<std::string>();
        s.profile.device_fingerprint =
            secrets.at("profile").at("device_fingerprint").get<std::string>();
        s.oidc_key = key_from_json(secrets.at("oidc_seed_hex"));
        s.device_key = key_from_json(secrets.at("device_seed_hex"));
        s.slot_key = key_from_json(secrets.at("slot_seed_hex"));
        s.device_root_key = key_from_json(secrets.at("device_root_seed_hex"));
        s.tee_root_key = key_from_json(secrets.at("tee_root_seed_hex"));
        s.profile.security_key_value = to_hex(s.slot_key.public_key);

        s.manifest = Json::parse(Registry::read_text(cfg.manifest_path));
        Json id_json = Json::parse(Registry::read_text(cfg.attestation_identity_path));
        s.identity.attestation_key =
            key_from_json(id_json.at("attestation_seed_hex"));
        for (const auto& cj : id_json.at("cert_chain"))
            s.identity.cert_chain.push_back(SimCert::from_json(cj));
        s.identity.measurement = measurement_from_manifest(s.manifest);

        s.roots = TrustedRootStore::from_json(
            Json::parse(Registry::read_text(cfg.attestation_roots_path)));
        s.ca_key = key_from_json(Json::parse(Registry::read_text(cfg.ca_key_path)).at("seed_hex"));
        if (std::filesystem::exists(cfg.base_dir / "policy_key.json"))
            s.policy_key = key_from_json(
                Json::parse(Registry::read_text(cfg.base_dir / "policy_key.json")).at("seed_hex"));
        if (std::filesystem::exists(cfg.base_dir / "policy_root_key.json"))
            s.policy_root_key =
                key_from_json(Json::parse(Registry::read_text(cfg.base_dir / "policy_root_key.json"))
                                  .at("seed_hex"));

        s.build_components(Json::parse(Registry::read_text(cfg.providers_path)));
        s.registry = std::make_shared<Registry>(cfg.registry_path);
        if (std::filesystem::exists(cfg.state_path)) {
            s.state = std::make_shared<VerifierState>(VerifierState::load(cfg.state_path));
        } else {
            s.state = std::make_shared<VerifierState>(s.policy_root_key.public_key);
            s.state->save(cfg.state_path);
        }
        return s;
    }

    Verifier make_verifier() const {
        return Verifier(roots, state, ca_key.public_key, hub, clock);
    }

    // Baseline "without DiVerify": the verifier checks only the artifact
    // signature against the proof's key.
    static bool baseline_verify(const VerificationBundle& bundle) {
        return verify(bundle.proof.signing_key, sha256(bundle.artifact_bytes), bundle.signature);
    }

    Policy make_default_policy(const std::string& policy_id, Mode mode, int level) const {
        Policy p;
        p.policy_id = policy_id;
        ScopeSpec spec;
        spec.scope_map["oidc"] = {profile.subject};
        if (level >= 2) spec.scope_map["security_key"] = {profile.security_key_value};
        if (level >= 3) spec.scope_map["device_fingerprint"] = {profile.device_fingerprint};
        p.signers[profile.signer_id] = spec;

        std::vector<RuleExpr> matches;
        for (const auto& [scope_type, values] : spec.scope_map)
            matches.push_back(RuleExpr::match(profile.signer_id, scope_type, *values.begin()));
        p.rule = matches.size() == 1 ? matches.front() : RuleExpr::all_of(std::move(matches));

        if (mode != Mode::legacy) {
            AttestSpec attest;
            attest.measurement = from_hex_array<32>(*roots.expected_measurements.begin());
            p.attest = attest;
        }
        return p;
    }

    std::string ensure_policy(Mode mode, int level) {
        std::string id = "default-" + to_string(mode) + "-l" + std::to_string(level);
        try {
            registry->fetch_policy(id);
            return id;
        } catch (const NotFoundError&) {
        }
        SignedPolicy sp = publish_semantic_update(std::nullopt, make_default_policy(id, mode, level),
                                                  policy_key, policy_root_key, clock());
        registry->publish_policy(id, sp.policy, sp.meta);
        return id;
    }

    RegistryEntry sign_entry(const std::string& name, const std::string& version,
                             std::span<const std::uint8_t> bytes, int level, Mode mode) {
        ArtifactRef artifact = ArtifactRef::from_bytes(name, bytes);
        SigningSession session = daemon->open_session(artifact, level, mode);
        SignResult r = daemon->sign_request(session.session_id, bytes);
        RegistryEntry e;
        e.name = name;
        e.version = version;
        e.artifact_bytes.assign(bytes.begin(), bytes.end());
        e.signature = r.artifact_signature;
        e.proof = std::move(r.proof);
        e.certificate = std::move(r.certificate);
        return e;
    }

    VerificationBundle sign_and_publish(const std::string& name, const std::string& version,
                                        std::span<const std::uint8_t> bytes, int level, Mode mode) {
        RegistryEntry e = sign_entry(name, version, bytes, level, mode);
        registry->publish(e);
        return registry->fetch(name, version, ensure_policy(mode, level));
    }

    VerifyReport verify_bundle(const VerificationBundle& bundle) const {
        SignedPolicy sp = registry->fetch_policy(bundle.policy_id);
        return make_verifier().verify_artifact(bundle, sp.policy, sp.meta);
    }

    // --- compromise hooks (attack harness only) ---

    // Client compromise: the daemon's manifest no longer matches what the
    // verifier expects, so its measurement drifts while the attestation key
    // and chain stay genuine. The CA and providers are untouched.
    void compromise_client() {
        manifest["injected"] = "trojan-loader";
        identity.measurement = measurement_from_manifest(manifest);
        build_daemon();
    }

    KeyPair leak_provider_key(const std::string& scope_type) const {
        if (scope_type == "oidc") return oidc_key;
        if (scope_type == "device_fingerprint") return device_key;
        if (scope_type == "security_key") return slot_key;
        throw NotFoundError("no provider for scope type: " + scope_type);
    }

    void set_ca_compromised(bool value) { ca->set_compromised(value); }

    // Swap the registered oidc provider instance for one the attacker runs
    // with a leaked provider key. The descriptor (and public key) are
    // unchanged, so issued claims validate.
    void run_oidc_with_key(const KeyPair& key, const std::string& subject) {
        auto replacement = std::make_shared<SimulatedOidcProvider>("oidc-beacon", subject,
                                                                   profile.issuer, key, clock);
        auto fresh = std::make_shared<ProviderHub>();
        fresh->register_provider(replacement);
        hub = std::move(fresh);
        build_daemon();
    }

    void persist() const {
        Json secrets{{"device_root_seed_hex", to_hex(device_root_key.seed())},
                     {"device_seed_hex", to_hex(device_key.seed())},
                     {"oidc_seed_hex", to_hex(oidc_key.seed())},
                     {"profile", Json{{"device_fingerprint", profile.device_fingerprint},
                                      {"issuer", profile.issuer},
                                      {"signer_id", profile.signer_id},
                                      {"subject", profile.subject}}},
                     {"slot_seed_hex", to_hex(slot_key.seed())},
                     {"tee_root_seed_hex", to_hex(tee_root_key.seed())}};
        Registry::write_text(dir / "provider_secrets.json", secrets.dump(2));
        Registry::write_text(dir / "providers.json", hub->registry_json().dump(2));

        Json chain = Json::array();
        for (const auto& c : identity.cert_chain) chain.push_back(c.to_json());
        Registry::write_text(
            dir / "attestation_identity.json",
            Json{{"attestation_seed_hex", to_hex(identity.attestation_key.seed())},
                 {"cert_chain", chain}}
                .dump(2));
        Registry::write_text(dir / "attestation_roots.json", roots.to_json().dump(2));
        Registry::write_text(dir / "manifest.json", manifest.dump(2));
        write_key(dir / "ca_key.json", ca_key);
        write_key(dir / "policy_key.json", policy_key);
        write_key(dir / "policy_root_key.json", policy_root_key);

        std::ostringstream toml;
        toml << "# diverify environment\n"
             << "registry = \"registry\"\n"
             << "providers = \"providers.json\"\n"
             << "provider_secrets = \"provider_secrets.json\"\n"
             << "attestation_roots = \"attestation_roots.json\"\n"
             << "attestation_identity = \"attestation_identity.json\"\n"
             << "manifest = \"manifest.json\"\n"
             << "state = \"verifier_state.json\"\n"
             << "ca_key = \"ca_key.json\"\n"
             << "ca_public_key = \"" << to_hex(ca_key.public_key) << "\"\n"
             << "config_version = \"" << config_version << "\"\n\n";
        for (const auto& [level, required] : levels.levels) {
            toml << "[levels." << level << "]\n";
            for (const auto& scope_type : required) toml << scope_type << " = true\n";
            toml << "\n";
        }
        Registry::write_text(dir / "diverify.toml", toml.str());
    }

   private:
    static KeyPair key_from_json(const Json& seed_hex) {
        return KeyPair::from_seed(from_hex_array<32>(seed_hex.get<std::string>()));
    }

    static void write_key(const std::filesystem::path& path, const KeyPair& key) {
        Registry::write_text(path, Json{{"public_key_hex", to_hex(key.public_key)},
                                        {"seed_hex", to_hex(key.seed())}}
                                       .dump(2));
    }

    void build_components(const std::optional<Json>& providers_file = std::nullopt) {
        hub = std::make_shared<ProviderHub>();
        auto make_instance = [&](const std::string& provider_id) -> std::shared_ptr<ScopeProvider> {
            if (provider_id == "oidc-beacon")
                return std::make_shared<SimulatedOidcProvider>(provider_id, profile.subject,
                                                               profile.issuer, oidc_key, clock);
            if (provider_id == "device-fp")
                return std::make_shared<DeviceFingerprintProvider>(
                    provider_id, profile.device_fingerprint, device_key);
            if (provider_id == "security-key")
                return std::make_shared<SecurityKeyProvider>(provider_id, slot_key,
                                                             device_root_key);
            return nullptr;
        };
        if (providers_file) {
            for (const auto& dj : *providers_file) {
                ProviderDescriptor d = ProviderDescriptor::from_json(dj);
                if (d.endpoint != "inproc") {
                    hub->register_remote(d);
                    continue;
                }
                auto instance = make_instance(d.provider_id);
                if (!instance)
                    throw ParseError("no local instance for provider: " + d.provider_id);
                if (instance->descriptor().public_key != d.public_key)
                    throw ParseError("provider key mismatch for " + d.provider_id);
                hub->register_provider(std::move(instance));
            }
        } else {
            hub->register_provider(make_instance("oidc-beacon"));
            hub->register_provider(make_instance("device-fp"));
            hub->register_provider(make_instance("security-key"));
        }
        ca = std::make_shared<CertificateAuthority>(ca_key, hub, roots, clock);
        build_daemon();
    }

    void build_daemon() {
        backend = std::make_shared<SimTeeBackend>(identity);
        daemon = std::make_shared<SigningDaemon>(hub, backend, levels, config_version, clock);
        daemon->set_ca(std::make_shared<InProcessCa>(ca));
    }
};

}  // namespace diverify
