#pragma once

#include <chrono>
#include <iomanip>

#include "diverify/attack.hpp"

namespace diverify {

struct BenchRow {
    Mode mode = Mode::core;
    int level = 1;
    double sign_ms_mean = 0.0;
    double verify_ms_mean = 0.0;
    std::uint64_t proof_bytes = 0;

    Json to_json() const {
        return Json{{"level", level},
                    {"mode", to_string(mode)},
                    {"proof_bytes", proof_bytes},
                    {"sign_ms_mean", sign_ms_mean},
                    {"verify_ms_mean", verify_ms_mean}};
    }
};

struct BenchReport {
    int iterations = 0;
    std::vector<BenchRow> rows;

    Json to_json() const {
        Json arr = Json::array();
        for (const auto& r : rows) arr.push_back(r.to_json());
        return Json{{"iterations", iterations}, {"rows", arr}};
    }

    double sign_mean(Mode mode) const {
        double sum = 0;
        int n = 0;
        for (const auto& r : rows)
            if (r.mode == mode) {
                sum += r.sign_ms_mean;
                ++n;
            }
        return n ? sum / n : 0.0;
    }

    double verify_mean(Mode mode) const {
        double sum = 0;
        int n = 0;
        for (const auto& r : rows)
            if (r.mode == mode) {
                sum += r.verify_ms_mean;
                ++n;
            }
        return n ? sum / n : 0.0;
    }

    std::string table() const {
        std::ostringstream out;
        out << std::left << std::setw(14) << "mode" << std::setw(7) << "level" << std::right
            << std::setw(14) << "sign (ms)" << std::setw(14) << "verify (ms)" << std::setw(14)
            << "proof (B)" << '\n';
        for (const auto& r : rows) {
            out << std::left << std::setw(14) << to_string(r.mode) << std::setw(7) << r.level
                << std::right << std::fixed << std::setprecision(3) << std::setw(14)
                << r.sign_ms_mean << std::setw(14) << r.verify_ms_mean << std::setw(14)
                << r.proof_bytes << '\n';
        }
        return out.str();
    }
};

// Mean sign/verify walltime per (mode, level) on a fresh local stack.
// Providers run in-process; the CA sits behind a loopback HTTP endpoint so
// certificate issuance pays a real round trip, as it would in deployment.
inline BenchReport run_bench(int iterations) {
    using clock = std::chrono::steady_clock;
    harness::TempDir td;
    LocalStack stack = LocalStack::create(td.path(), /*persist=*/false);
    CaServer ca_server(stack.ca);
    ca_server.start();
    stack.daemon->set_ca(std::make_shared<HttpCa>(ca_server.url()));

    Bytes artifact = random_bytes(1024);
    BenchReport report;
    report.iterations = iterations;

    for (Mode mode : {Mode::legacy, Mode::trusted_auth, Mode::core}) {
        for (int level = 1; level <= 3; ++level) {
            BenchRow row;
            row.mode = mode;
            row.level = level;

            std::string name = "bench-" + to_string(mode) + "-l" + std::to_string(level);
            std::string policy_id = stack.ensure_policy(mode, level);

            RegistryEntry last;
            double sign_total = 0;
            for (int i = 0; i < iterations; ++i) {
                auto t0 = clock::now();
                last = stack.sign_entry(name, std::to_string(i), artifact, level, mode);
                auto t1 = clock::now();
                sign_total += std::chrono::duration<double, std::milli>(t1 - t0).count();
            }
            row.sign_ms_mean = sign_total / iterations;

            stack.registry->publish(last);
            VerificationBundle bundle =
                stack.registry->fetch(name, std::to_string(iterations - 1), policy_id);
            SignedPolicy sp = stack.registry->fetch_policy(policy_id);
            Verifier verifier = stack.make_verifier();

            double verify_total = 0;
            for (int i = 0; i < iterations; ++i) {
                auto t0 = clock::now();
                VerifyReport r = verifier.verify_artifact(bundle, sp.policy, sp.meta);
                auto t1 = clock::now();
                if (!r.accepted) throw Error("bench bundle unexpectedly rejected at " + r.step);
                verify_total += std::chrono::duration<double, std::milli>(t1 - t0).count();
            }
            row.verify_ms_mean = verify_total / iterations;
            row.proof_bytes = last.proof.to_json().dump().size();
            report.rows.push_back(row);
        }
    }
    ca_server.stop();
    return report;
}

}  // namespace diverify
