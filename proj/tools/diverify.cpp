#include <chrono>
#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "diverify/diverify.hpp"

namespace dv = diverify;
using dv::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRejected = 1;
constexpr int kExitError = 2;

bool g_json = false;

void emit(const Json& payload, const std::string& text) {
    if (g_json) {
        Json out = payload;
        out["schema"] = "diverify-cli/v1";
        std::cout << out.dump(2) << std::endl;
    } else {
        std::cout << text << std::flush;
    }
}

bool env_flag(const char* name) {
    const char* v = std::getenv(name);
    return v && std::string(v) == "1";
}

std::filesystem::path resolve_config_path(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("DIVERIFY_CONFIG")) return env;
    return "diverify.toml";
}

bool confirm_payload_ok(const std::string& line, bool yes);

dv::DiverifyConfig load_config(const std::string& flag_value) {
    return dv::DiverifyConfig::load(resolve_config_path(flag_value));
}

dv::KeyPair load_key(const std::filesystem::path& path) {
    Json j = Json::parse(dv::Registry::read_text(path));
    return dv::KeyPair::from_seed(dv::from_hex_array<32>(j.at("seed_hex").get<std::string>()));
}

struct SignArgs {
    std::string config;
    std::string artifact;
    int level = 1;
    std::string mode = "core";
    std::string registry;
    std::string ca_url;
    std::string daemon_url;
    std::string name;
    std::string version = "1.0.0";
    bool yes = false;
};

int cmd_sign(const SignArgs& args) {
    dv::Mode mode = dv::mode_from_string(args.mode);
    if (mode == dv::Mode::trusted_auth && args.ca_url.empty())
        throw CLI::ValidationError("--ca-url is required with --mode trusted-auth");

    dv::DiverifyConfig config = load_config(args.config);
    if (!args.registry.empty()) config.registry_path = args.registry;
    dv::LocalStack stack = dv::LocalStack::open(config);
    if (!args.ca_url.empty()) stack.daemon->set_ca(std::make_shared<dv::HttpCa>(args.ca_url));

    dv::Bytes bytes = dv::Registry::read_file(args.artifact);
    std::string name = args.name.empty()
                           ? std::filesystem::path(args.artifact).filename().string()
                           : args.name;
    dv::ArtifactRef artifact = dv::ArtifactRef::from_bytes(name, bytes);

    auto t0 = std::chrono::steady_clock::now();
    dv::SignResult result;
    std::string confirm_line;
    if (!args.daemon_url.empty()) {
        dv::DaemonClient client(args.daemon_url);
        auto opened = client.open_session(artifact, args.level, mode);
        confirm_line = opened.confirm;
        if (!confirm_payload_ok(confirm_line, args.yes)) return kExitRejected;
        result = client.sign(opened.session_id, bytes);
    } else {
        dv::SigningSession session = stack.daemon->open_session(artifact, args.level, mode);
        confirm_line = stack.daemon->confirm_payload(session.session_id);
        if (!confirm_payload_ok(confirm_line, args.yes)) return kExitRejected;
        result = stack.daemon->sign_request(session.session_id, bytes);
    }
    auto t1 = std::chrono::steady_clock::now();
    double sign_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

    dv::RegistryEntry entry;
    entry.name = name;
    entry.version = args.version;
    entry.artifact_bytes = bytes;
    entry.signature = result.artifact_signature;
    entry.proof = result.proof;
    entry.certificate = result.certificate;
    std::filesystem::path dir = stack.registry->publish(entry);

    std::ostringstream text;
    text << "signed " << artifact.display() << '\n'
         << "proof: " << (dir / "proof.json").string() << '\n'
         << "sign time: " << sign_ms << " ms\n";
    emit(Json{{"artifact", artifact.display()},
              {"mode", dv::to_string(mode)},
              {"level", args.level},
              {"proof_path", (dir / "proof.json").string()},
              {"sign_ms", sign_ms}},
         text.str());
    return kExitOk;
}

bool confirm_payload_ok(const std::string& line, bool yes) {
    if (yes) {
        std::cerr << "signing " << line << '\n';
        return true;
    }
    std::cerr << "about to sign: " << line << "\nproceed? [y/N] " << std::flush;
    std::string answer;
    std::getline(std::cin, answer);
    if (answer == "y" || answer == "Y" || answer == "yes") return true;
    std::cerr << "aborted\n";
    return false;
}

struct VerifyArgs {
    std::string config;
    std::string artifact;
    std::string name;
    std::string version = "1.0.0";
    std::string policy_id;
    std::string registry;
    std::string bundle_dir;
    std::string mode;
};

dv::VerificationBundle read_bundle_dir(const std::filesystem::path& dir,
                                       const std::string& policy_id) {
    dv::VerificationBundle b;
    b.artifact_bytes = dv::Registry::read_file(dir / "artifact.bin");
    b.artifact.name = dir.filename().string();
    b.artifact.digest = dv::sha256(b.artifact_bytes);
    b.artifact.length = b.artifact_bytes.size();
    b.signature = dv::signature_from_json(
        Json::parse(dv::Registry::read_text(dir / "artifact.sig")));
    b.proof =
        dv::DiVerifyProof::from_json(Json::parse(dv::Registry::read_text(dir / "proof.json")));
    if (std::filesystem::exists(dir / "cert.json"))
        b.certificate = dv::Certificate::from_json(
            Json::parse(dv::Registry::read_text(dir / "cert.json")));
    b.policy_id = policy_id;
    return b;
}

int cmd_verify(const VerifyArgs& args) {
    dv::DiverifyConfig config = load_config(args.config);
    if (!args.registry.empty()) config.registry_path = args.registry;
    dv::LocalStack stack = dv::LocalStack::open(config);

    dv::VerificationBundle bundle;
    if (!args.bundle_dir.empty()) {
        bundle = read_bundle_dir(args.bundle_dir, args.policy_id);
    } else {
        std::string name = args.name;
        if (name.empty()) {
            if (args.artifact.empty())
                throw CLI::ValidationError("one of --bundle, --artifact, or --name is required");
            name = std::filesystem::path(args.artifact).filename().string();
        }
        bundle = stack.registry->fetch(name, args.version, args.policy_id);
    }
    if (!args.artifact.empty()) {
        bundle.artifact_bytes = dv::Registry::read_file(args.artifact);
        bundle.artifact.length = bundle.artifact_bytes.size();
    }
    if (!args.mode.empty() && bundle.proof.mode != dv::mode_from_string(args.mode))
        throw CLI::ValidationError("bundle mode is " + dv::to_string(bundle.proof.mode) +
                                   ", not " + args.mode);
    dv::VerifyReport report = stack.verify_bundle(bundle);
    // The JSON report on stdout is the stable contract for CI use.
    std::cout << report.to_json().dump(2) << '\n';
    std::cerr << (report.accepted ? "accept " : "reject ") << bundle.artifact.name;
    if (args.bundle_dir.empty()) std::cerr << '@' << args.version;
    if (!report.accepted) std::cerr << " at step " << report.step;
    std::cerr << '\n';
    return report.accepted ? kExitOk : kExitRejected;
}

struct PolicyArgs {
    std::string config;
    std::string policy_id;
    std::string from;
    std::string policy_key;
    std::string root_key;
    std::string new_key;
    int validity_days = 30;
};

std::filesystem::path default_key_path(const dv::DiverifyConfig& config, const char* name) {
    return config.base_dir / name;
}

int cmd_policy_init(const PolicyArgs& args, bool is_update) {
    dv::DiverifyConfig config = load_config(args.config);
    dv::Registry registry(config.registry_path);

    dv::Policy policy = dv::Policy::from_json(Json::parse(dv::Registry::read_text(args.from)));
    if (!args.policy_id.empty() && policy.policy_id != args.policy_id)
        throw CLI::ValidationError("--policy-id does not match the policy file");
    if (args.root_key.empty())
        throw CLI::ValidationError("semantic updates require --root-key");

    dv::KeyPair policy_key = load_key(args.policy_key.empty()
                                          ? default_key_path(config, "policy_key.json")
                                          : std::filesystem::path(args.policy_key));
    dv::KeyPair root_key = load_key(args.root_key);

    std::optional<dv::PolicyMeta> old_meta;
    if (is_update) old_meta = registry.fetch_policy(policy.policy_id).meta;

    dv::SignedPolicy sp = dv::publish_semantic_update(
        old_meta, policy, policy_key, root_key, dv::now_unix(),
        static_cast<std::int64_t>(args.validity_days) * 24 * 3600);
    registry.publish_policy(policy.policy_id, sp.policy, sp.meta);
    emit(Json{{"epoch", sp.meta.epoch}, {"policy_id", policy.policy_id},
              {"version", sp.meta.version}},
         "policy " + policy.policy_id + " at version " + std::to_string(sp.meta.version) +
             " epoch " + std::to_string(sp.meta.epoch) + "\n");
    return kExitOk;
}

int cmd_policy_refresh(const PolicyArgs& args) {
    dv::DiverifyConfig config = load_config(args.config);
    dv::Registry registry(config.registry_path);
    dv::SignedPolicy current = registry.fetch_policy(args.policy_id);
    dv::KeyPair policy_key = load_key(args.policy_key.empty()
                                          ? default_key_path(config, "policy_key.json")
                                          : std::filesystem::path(args.policy_key));
    dv::PolicyMeta refreshed = dv::publish_epoch_refresh(
        current.meta, current.policy, policy_key, dv::now_unix(),
        static_cast<std::int64_t>(args.validity_days) * 24 * 3600);
    registry.publish_policy(args.policy_id, current.policy, refreshed);
    emit(Json{{"epoch", refreshed.epoch}, {"policy_id", args.policy_id},
              {"version", refreshed.version}},
         "policy " + args.policy_id + " refreshed to epoch " + std::to_string(refreshed.epoch) +
             "\n");
    return kExitOk;
}

int cmd_policy_rotate(const PolicyArgs& args) {
    dv::DiverifyConfig config = load_config(args.config);
    dv::Registry registry(config.registry_path);
    if (args.root_key.empty())
        throw CLI::ValidationError("key rotation is a semantic update and requires --root-key");
    dv::SignedPolicy current = registry.fetch_policy(args.policy_id);
    dv::KeyPair new_key = load_key(args.new_key);
    dv::KeyPair root_key = load_key(args.root_key);
    dv::SignedPolicy sp = dv::publish_semantic_update(current.meta, current.policy, new_key,
                                                      root_key, dv::now_unix());
    registry.publish_policy(args.policy_id, sp.policy, sp.meta);
    emit(Json{{"policy_id", args.policy_id}, {"policy_key", dv::to_hex(new_key.public_key)},
              {"version", sp.meta.version}},
         "policy " + args.policy_id + " rotated to key " + dv::to_hex(new_key.public_key) +
             " at version " + std::to_string(sp.meta.version) + "\n");
    return kExitOk;
}

int cmd_policy_show_state(const std::string& config_flag) {
    dv::DiverifyConfig config = load_config(config_flag);
    dv::VerifierState state = dv::VerifierState::load(config.state_path);
    Json j = state.to_json();
    emit(j, j.dump(2) + "\n");
    return kExitOk;
}

int cmd_bench(const std::string& config_flag, int iterations) {
    (void)config_flag;  // bench always runs on an isolated throwaway stack
    dv::BenchReport report = dv::run_bench(iterations);
    emit(report.to_json(), report.table());
    return kExitOk;
}

int cmd_keygen(const std::string& out) {
    dv::KeyPair key = dv::KeyPair::generate();
    dv::Registry::write_text(out, Json{{"public_key_hex", dv::to_hex(key.public_key)},
                                       {"seed_hex", dv::to_hex(key.seed())}}
                                      .dump(2));
    emit(Json{{"path", out}, {"public_key_hex", dv::to_hex(key.public_key)}},
         "wrote " + out + " (public key " + dv::to_hex(key.public_key) + ")\n");
    return kExitOk;
}

int cmd_setup(const std::string& dir) {
    dv::LocalStack stack = dv::LocalStack::create(dir);
    for (dv::Mode mode : {dv::Mode::core, dv::Mode::legacy, dv::Mode::trusted_auth})
        for (int level = 1; level <= 3; ++level) stack.ensure_policy(mode, level);
    std::string config_path = (stack.dir / "diverify.toml").string();
    emit(Json{{"config", config_path}, {"dir", dir}},
         "environment ready; export DIVERIFY_CONFIG=" + config_path + "\n");
    return kExitOk;
}

int cmd_attack(const std::string& scenario, bool matrix, const std::string& expected_path) {
    if (!env_flag("DIVERIFY_TEST_MODE"))
        throw CLI::ValidationError("attack-sim requires DIVERIFY_TEST_MODE=1");
    if (matrix) {
        Json expected = expected_path.empty()
                            ? dv::builtin_expected_matrix()
                            : Json::parse(dv::Registry::read_text(expected_path));
        dv::MatrixReport report = dv::run_matrix(expected);
        std::ostringstream text;
        for (const auto& cell : report.cells) {
            text << (cell.pass ? "ok  " : "DIFF") << ' ' << std::left << std::setw(24)
                 << dv::to_string(cell.compromise) << std::setw(14) << dv::to_string(cell.mode)
                 << " expected=" << dv::to_string(cell.expected)
                 << " observed=" << dv::to_string(cell.observed);
            if (!cell.step.empty()) text << " step=" << cell.step;
            text << '\n';
        }
        text << (report.all_pass ? "matrix matches expectations\n"
                                 : "matrix DIFFERS from expectations\n");
        emit(report.to_json(), text.str());
        return report.all_pass ? kExitOk : kExitRejected;
    }
    auto colon = scenario.find(':');
    if (colon == std::string::npos)
        throw CLI::ValidationError("--scenario takes <compromise>:<mode>");
    dv::Scenario s;
    s.compromise = dv::compromise_from_string(scenario.substr(0, colon));
    s.mode = dv::attack_mode_from_string(scenario.substr(colon + 1));
    dv::ScenarioResult result = dv::run_scenario(s);
    std::ostringstream text;
    text << "outcome: " << dv::to_string(result.outcome);
    if (!result.step.empty()) text << " (step " << result.step << ")";
    text << '\n' << result.detail << '\n';
    emit(result.to_json(), text.str());
    return kExitOk;
}

struct ServeArgs {
    std::string config;
    int daemon_port = 0;
    int ca_port = 0;
    bool oidc_http = false;
};

int cmd_serve(const ServeArgs& args) {
    if (env_flag("DIVERIFY_CA_COMPROMISED") && !env_flag("DIVERIFY_TEST_MODE"))
        throw CLI::ValidationError("DIVERIFY_CA_COMPROMISED requires DIVERIFY_TEST_MODE=1");
    dv::DiverifyConfig config = load_config(args.config);
    dv::LocalStack stack = dv::LocalStack::open(config);
    if (env_flag("DIVERIFY_CA_COMPROMISED")) stack.ca->set_compromised(true);

    dv::CaServer ca_server(stack.ca);
    dv::DaemonServer daemon_server(stack.daemon);
    std::optional<dv::ScopeProviderServer> oidc_server;
    if (args.oidc_http) {
        oidc_server.emplace(std::make_shared<dv::SimulatedOidcProvider>(
            "oidc-beacon", stack.profile.subject, stack.profile.issuer, stack.oidc_key));
        oidc_server->start();
    }
    ca_server.start();
    daemon_server.start();

    std::ostringstream text;
    text << "ca: " << ca_server.url() << '\n' << "daemon: " << daemon_server.url() << '\n';
    if (oidc_server) text << "oidc provider: " << oidc_server->endpoint() << '\n';
    text << "serving; press Ctrl+C to stop\n";
    Json j{{"ca_url", ca_server.url()}, {"daemon_url", daemon_server.url()}};
    if (oidc_server) j["oidc_url"] = oidc_server->endpoint();
    emit(j, text.str());

    static std::atomic<bool> stop{false};
    std::signal(SIGINT, [](int) { stop = true; });
    std::signal(SIGTERM, [](int) { stop = true; });
    while (!stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    // Accept "policy:init" style spellings as shorthand for "policy init".
    static const std::set<std::string> kPolicyForms{"policy:init", "policy:update",
                                                    "policy:refresh", "policy:rotate-key",
                                                    "policy:show-state"};
    std::vector<std::string> rewritten;
    std::vector<char*> argv2;
    for (int i = 0; i < argc; ++i) {
        std::string arg = argv[i];
        if (kPolicyForms.count(arg)) {
            rewritten.push_back("policy");
            rewritten.push_back(arg.substr(7));
        } else {
            rewritten.push_back(arg);
        }
    }
    for (auto& s : rewritten) argv2.push_back(s.data());
    argc = static_cast<int>(argv2.size());
    argv = argv2.data();

    CLI::App app{"DiVerify: identity-based signing with diverse-context scopes"};
    app.require_subcommand(1);
    app.add_flag("--json", g_json, "emit machine-readable output");

    SignArgs sign_args;
    auto* sign = app.add_subcommand("sign", "sign an artifact and publish the bundle");
    sign->add_option("--config", sign_args.config, "config file");
    sign->add_option("--artifact", sign_args.artifact, "artifact file")->required();
    sign->add_option("--level", sign_args.level, "trust level")->check(CLI::Range(1, 3));
    sign->add_option("--mode", sign_args.mode, "core|legacy|trusted-auth");
    sign->add_option("--registry", sign_args.registry, "registry directory override");
    sign->add_option("--ca-url", sign_args.ca_url, "certificate authority URL");
    sign->add_option("--daemon-url", sign_args.daemon_url, "remote signing daemon URL");
    sign->add_option("--name", sign_args.name, "artifact name (default: file name)");
    sign->add_option("--version", sign_args.version, "artifact version");
    sign->add_flag("--yes", sign_args.yes, "skip the payload confirmation prompt");

    VerifyArgs verify_args;
    auto* verify = app.add_subcommand("verify", "verify a published bundle against a policy");
    verify->add_option("--config", verify_args.config, "config file");
    verify->add_option("--artifact", verify_args.artifact, "local artifact file to check");
    verify->add_option("--name", verify_args.name, "artifact name in the registry");
    verify->add_option("--version", verify_args.version, "artifact version");
    verify->add_option("--policy-id", verify_args.policy_id, "policy identifier")->required();
    verify->add_option("--registry", verify_args.registry, "registry directory override");
    verify->add_option("--bundle", verify_args.bundle_dir,
                       "verify a bundle directory instead of a registry entry");
    verify->add_option("--mode", verify_args.mode, "assert the bundle's mode before verifying");

    PolicyArgs policy_args;
    auto* policy = app.add_subcommand("policy", "manage policies and their metadata");
    policy->require_subcommand(1);
    auto add_policy_common = [&](CLI::App* sub) {
        sub->add_option("--config", policy_args.config, "config file");
        sub->add_option("--policy-id", policy_args.policy_id, "policy identifier");
        sub->add_option("--policy-key", policy_args.policy_key, "policy key file");
        sub->add_option("--root-key", policy_args.root_key, "root key file (semantic updates)");
        sub->add_option("--validity-days", policy_args.validity_days, "metadata validity window");
    };
    auto* p_init = policy->add_subcommand("init", "publish a policy at version 1");
    p_init->add_option("--from", policy_args.from, "policy JSON file")->required();
    add_policy_common(p_init);
    auto* p_update = policy->add_subcommand("update", "publish a semantic update");
    p_update->add_option("--from", policy_args.from, "policy JSON file")->required();
    add_policy_common(p_update);
    auto* p_refresh = policy->add_subcommand("refresh", "publish an epoch refresh");
    add_policy_common(p_refresh);
    auto* p_rotate = policy->add_subcommand("rotate-key", "rotate the policy key");
    p_rotate->add_option("--new-key", policy_args.new_key, "new policy key file")->required();
    add_policy_common(p_rotate);
    auto* p_state = policy->add_subcommand("show-state", "print the verifier's rollback state");
    p_state->add_option("--config", policy_args.config, "config file");

    int iterations = 10;
    std::string bench_config;
    auto* bench = app.add_subcommand("bench", "measure sign/verify times per mode and level");
    bench->add_option("--config", bench_config, "config file (unused; bench is self-contained)");
    bench->add_option("--iterations", iterations, "iterations per cell")->check(CLI::Range(1, 10000));

    std::string scenario;
    bool matrix = false;
    std::string expected_path;
    auto* attack = app.add_subcommand("attack-sim", "run threat-model scenarios");
    auto* attack_run = attack->add_subcommand("run", "run one scenario or the full matrix");
    attack_run->add_option("--scenario", scenario, "<compromise>:<mode>");
    attack_run->add_flag("--matrix", matrix, "run the full security matrix");
    attack_run->add_option("--expected", expected_path, "expectations JSON file");
    attack->require_subcommand(1);

    std::string keygen_out;
    auto* keygen = app.add_subcommand("keygen", "generate an Ed25519 key file");
    keygen->add_option("--out", keygen_out, "output path")->required();

    std::string setup_dir;
    auto* setup = app.add_subcommand("setup", "create a simulated local environment");
    setup->add_option("--dir", setup_dir, "environment directory")->required();

    ServeArgs serve_args;
    auto* serve = app.add_subcommand("serve", "run the daemon and CA over loopback HTTP");
    serve->add_option("--config", serve_args.config, "config file");
    serve->add_option("--daemon-port", serve_args.daemon_port, "daemon port (0 = any)");
    serve->add_option("--ca-port", serve_args.ca_port, "ca port (0 = any)");
    serve->add_flag("--oidc-http", serve_args.oidc_http, "also serve the simulated OIDC provider");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitError;
    }

    try {
        if (sign->parsed()) return cmd_sign(sign_args);
        if (verify->parsed()) return cmd_verify(verify_args);
        if (policy->parsed()) {
            if (p_init->parsed()) return cmd_policy_init(policy_args, false);
            if (p_update->parsed()) return cmd_policy_init(policy_args, true);
            if (p_refresh->parsed()) return cmd_policy_refresh(policy_args);
            if (p_rotate->parsed()) return cmd_policy_rotate(policy_args);
            if (p_state->parsed()) return cmd_policy_show_state(policy_args.config);
        }
        if (bench->parsed()) return cmd_bench(bench_config, iterations);
        if (attack->parsed()) {
            if (!matrix && scenario.empty())
                throw CLI::ValidationError("attack-sim run needs --scenario or --matrix");
            return cmd_attack(scenario, matrix, expected_path);
        }
        if (keygen->parsed()) return cmd_keygen(keygen_out);
        if (setup->parsed()) return cmd_setup(setup_dir);
        if (serve->parsed()) return cmd_serve(serve_args);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitError;
    } catch (const dv::DenialError& e) {
        std::cerr << "denied: " << e.what() << '\n';
        return kExitRejected;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitError;
}
