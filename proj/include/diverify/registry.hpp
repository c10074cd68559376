#pragma once

#include <filesystem>
#include <fstream>

#include "diverify/verifier.hpp"

namespace diverify {

namespace fs = std::filesystem;

struct RegistryEntry {
    std::string name;
    std::string version;
    Bytes artifact_bytes;
    Signature signature;
    DiVerifyProof proof;
    std::optional<Certificate> certificate;
};

struct OverheadReport {
    std::uint64_t artifact_bytes = 0;
    std::uint64_t proof_bytes = 0;
    double ratio = 0.0;

    Json to_json() const {
        return Json{{"artifact_bytes", artifact_bytes},
                    {"proof_bytes", proof_bytes},
                    {"ratio", ratio}};
    }
};

// File-based package registry:
//   artifacts/<name>/<version>/{artifact.bin, artifact.sig, proof.json, cert.json?}
//   policies/<policy_id>/{policy.json, meta.json}
// Entry publication stages into a temp directory and renames into place, so
// concurrent publishers of the same name/version leave exactly one winner.
class Registry {
   public:
    explicit Registry(fs::path root) : root_(std::move(root)) {
        fs::create_directories(root_ / "artifacts");
        fs::create_directories(root_ / "policies");
    }

    const fs::path& root() const { return root_; }

    fs::path entry_dir(const std::string& name, const std::string& version) const {
        return root_ / "artifacts" / name / version;
    }

    fs::path publish(const RegistryEntry& entry) {
        Digest32 digest = sha256(entry.artifact_bytes);
        if (!verify(entry.proof.signing_key, digest, entry.signature))
            throw DenialError("refusing to publish: signature does not cover the artifact digest");
        if (entry.certificate &&
            entry.certificate->embedded_proof.fingerprint() != entry.proof.fingerprint())
            throw DenialError("refusing to publish: certificate does not embed this proof");

        fs::path final_dir = entry_dir(entry.name, entry.version);
        if (fs::exists(final_dir))
            throw DenialError("entry already published: " + entry.name + "/" + entry.version);
        fs::create_directories(final_dir.parent_path());

        fs::path staging = root_ / ("." + to_hex(random_array<8>()) + ".staging");
        fs::create_directories(staging);
        write_file(staging / "artifact.bin", entry.artifact_bytes);
        write_text(staging / "artifact.sig", signature_to_json(entry.signature).dump());
        write_text(staging / "proof.json", entry.proof.to_json().dump());
        if (entry.certificate)
            write_text(staging / "cert.json", entry.certificate->to_json().dump());

        std::error_code ec;
        fs::rename(staging, final_dir, ec);
        if (ec) {
            fs::remove_all(staging);
            throw DenialError("publish lost the race for " + entry.name + "/" + entry.version);
        }
        return final_dir;
    }

    VerificationBundle fetch(const std::string& name, const std::string& version,
                             const std::string& policy_id) const {
        fs::path dir = entry_dir(name, version);
        if (!fs::exists(dir / "artifact.bin"))
            throw NotFoundError("no such entry: " + name + "/" + version);
        VerificationBundle b;
        b.artifact_bytes = read_file(dir / "artifact.bin");
        b.artifact.name = name;
        b.artifact.digest = sha256(b.artifact_bytes);
        b.artifact.length = b.artifact_bytes.size();
        b.signature = signature_from_json(Json::parse(read_text(dir / "artifact.sig")));
        b.proof = DiVerifyProof::from_json(Json::parse(read_text(dir / "proof.json")));
        if (fs::exists(dir / "cert.json"))
            b.certificate = Certificate::from_json(Json::parse(read_text(dir / "cert.json")));
        b.policy_id = policy_id;
        return b;
    }

    OverheadReport measure_overhead(const std::string& name, const std::string& version) const {
        fs::path dir = entry_dir(name, version);
        if (!fs::exists(dir / "artifact.bin"))
            throw NotFoundError("no such entry: " + name + "/" + version);
        OverheadReport r;
        r.artifact_bytes = fs::file_size(dir / "artifact.bin");
        r.proof_bytes = fs::file_size(dir / "proof.json");
        r.ratio = r.artifact_bytes == 0
                      ? 0.0
                      : static_cast<double>(r.proof_bytes) / static_cast<double>(r.artifact_bytes);
        return r;
    }

    void publish_policy(const std::string& policy_id, const Policy& policy,
                        const PolicyMeta& meta) {
        fs::path dir = root_ / "policies" / policy_id;
        fs::create_directories(dir);
        write_atomic(dir / "policy.json", policy.to_json().dump(2));
        write_atomic(dir / "meta.json", meta.to_json().dump(2));
    }

    SignedPolicy fetch_policy(const std::string& policy_id) const {
        fs::path dir = root_ / "policies" / policy_id;
        if (!fs::exists(dir / "policy.json"))
            throw NotFoundError("no such policy: " + policy_id);
        SignedPolicy sp;
        sp.policy = Policy::from_json(Json::parse(read_text(dir / "policy.json")));
        sp.meta = PolicyMeta::from_json(Json::parse(read_text(dir / "meta.json")));
        return sp;
    }

    static Bytes read_file(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw NotFoundError("cannot read: " + p.string());
        return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    static std::string read_text(const fs::path& p) {
        Bytes b = read_file(p);
        return std::string(b.begin(), b.end());
    }

    static void write_file(const fs::path& p, std::span<const std::uint8_t> data) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write: " + p.string());
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size()));
    }

    static void write_text(const fs::path& p, std::string_view text) {
        write_file(p, std::span<const std::uint8_t>(
                          reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    }

    static void write_atomic(const fs::path& p, std::string_view text) {
        fs::path tmp = p;
        tmp += "." + to_hex(random_array<4>()) + ".tmp";
        write_text(tmp, text);
        fs::rename(tmp, p);
    }

   private:
    fs::path root_;
};

}  // namespace diverify
