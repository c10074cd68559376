#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "diverify/attack.hpp"

using namespace diverify;

TEST_CASE("the honest pipeline accepts in every mode (sanity row)", "[attack]") {
    harness::TempDir td;
    LocalStack stack = LocalStack::create(td.path(), false);
    Bytes bytes = to_bytes("honest artifact");
    for (Mode mode : {Mode::core, Mode::legacy, Mode::trusted_auth}) {
        VerificationBundle b =
            stack.sign_and_publish("ok-" + to_string(mode), "1.0.0", bytes, 2, mode);
        CHECK(stack.verify_bundle(b).accepted);
    }
}

TEST_CASE("credential theft alone defeats only the baseline", "[attack]") {
    CHECK(run_scenario({CompromiseType::user_credential, AttackMode::none}).outcome ==
          Outcome::accepted);
    ScenarioResult core = run_scenario({CompromiseType::user_credential, AttackMode::core});
    CHECK(core.outcome == Outcome::rejected);
    CHECK(core.step == "policy");
    ScenarioResult legacy = run_scenario({CompromiseType::user_credential, AttackMode::legacy});
    CHECK(legacy.outcome == Outcome::rejected);
    CHECK(legacy.step == "policy");
}

TEST_CASE("client compromise is caught by attestation, not by legacy mode", "[attack]") {
    CHECK(run_scenario({CompromiseType::client, AttackMode::legacy}).outcome ==
          Outcome::accepted);

    ScenarioResult core = run_scenario({CompromiseType::client, AttackMode::core});
    CHECK(core.outcome == Outcome::rejected);
    CHECK(core.step == "quote");

    ScenarioResult ta = run_scenario({CompromiseType::client, AttackMode::trusted_auth});
    CHECK(ta.outcome == Outcome::rejected);
    CHECK(ta.step == "certificate");
    CHECK(ta.detail.find("ca denied certificate: quote") != std::string::npos);
}

TEST_CASE("a single leaked provider key cannot satisfy a multi-scope policy", "[attack]") {
    for (AttackMode mode : {AttackMode::legacy, AttackMode::trusted_auth, AttackMode::core}) {
        ScenarioResult r = run_scenario({CompromiseType::provider_subset, mode});
        INFO(to_string(mode));
        CHECK(r.outcome == Outcome::rejected);
        CHECK(r.step == "policy");
    }
}

TEST_CASE("ca compromise splits legacy from trusted-auth", "[attack]") {
    CHECK(run_scenario({CompromiseType::certificate_authority, AttackMode::legacy}).outcome ==
          Outcome::accepted);
    ScenarioResult ta =
        run_scenario({CompromiseType::certificate_authority, AttackMode::trusted_auth});
    CHECK(ta.outcome == Outcome::rejected);
    CHECK(ta.step == "cert-attestation");
    CHECK(run_scenario({CompromiseType::certificate_authority, AttackMode::core}).outcome ==
          Outcome::not_applicable);
}

TEST_CASE("the full matrix matches the checked-in expectations", "[attack][matrix]") {
    Json expected = Json::parse(Registry::read_text(DIVERIFY_TABLE2_PATH));
    MatrixReport report = run_matrix(expected);
    for (const auto& cell : report.cells) {
        INFO(to_string(cell.compromise) << "/" << to_string(cell.mode) << " expected "
                                        << to_string(cell.expected) << " observed "
                                        << to_string(cell.observed));
        CHECK(cell.pass);
    }
    CHECK(report.all_pass);
    CHECK(report.cells.size() == 16);
}

TEST_CASE("the harness reports diffs against mutated expectations", "[attack]") {
    Json mutated = builtin_expected_matrix();
    mutated["rows"][0]["outcomes"]["core"] = "accepted";  // user_credential/core is rejected
    MatrixReport report = run_matrix(mutated);
    CHECK_FALSE(report.all_pass);
    int diffs = 0;
    for (const auto& cell : report.cells)
        if (!cell.pass) {
            ++diffs;
            CHECK(cell.compromise == CompromiseType::user_credential);
            CHECK(cell.mode == AttackMode::core);
        }
    CHECK(diffs == 1);
}

TEST_CASE("the builtin expectations equal the checked-in file", "[attack]") {
    Json file = Json::parse(Registry::read_text(DIVERIFY_TABLE2_PATH));
    CHECK(canonical_encode(file) == canonical_encode(builtin_expected_matrix()));
}
