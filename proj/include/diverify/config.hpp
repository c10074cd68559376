#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <variant>

#include "diverify/daemon.hpp"

namespace diverify {

// Minimal TOML-style reader: [section] headers, key = "string" | integer |
// true/false, # comments. Covers exactly what diverify.toml needs.
class TomlishFile {
   public:
    static TomlishFile parse_text(const std::string& text) {
        TomlishFile f;
        std::string section;
        std::size_t line_no = 0;
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            std::string s = strip(line);
            if (s.empty() || s[0] == '#') continue;
            if (s.front() == '[') {
                if (s.back() != ']') throw ParseError(err(line_no, "unterminated section header"));
                section = strip(s.substr(1, s.size() - 2));
                if (section.empty()) throw ParseError(err(line_no, "empty section name"));
                continue;
            }
            auto eq = s.find('=');
            if (eq == std::string::npos) throw ParseError(err(line_no, "expected key = value"));
            std::string key = strip(s.substr(0, eq));
            std::string value = strip(s.substr(eq + 1));
            if (key.empty() || value.empty()) throw ParseError(err(line_no, "empty key or value"));
            std::string full = section.empty() ? key : section + "." + key;
            f.values_[full] = parse_value(value, line_no);
        }
        return f;
    }

    static TomlishFile parse_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw NotFoundError("cannot read config: " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_text(ss.str());
    }

    bool contains(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback = "") const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (!std::holds_alternative<std::string>(it->second))
            throw ParseError("config key is not a string: " + key);
        return std::get<std::string>(it->second);
    }

    std::int64_t get_int(const std::string& key, std::int64_t fallback = 0) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (!std::holds_alternative<std::int64_t>(it->second))
            throw ParseError("config key is not an integer: " + key);
        return std::get<std::int64_t>(it->second);
    }

    bool get_bool(const std::string& key, bool fallback = false) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (!std::holds_alternative<bool>(it->second))
            throw ParseError("config key is not a boolean: " + key);
        return std::get<bool>(it->second);
    }

    std::vector<std::string> keys_with_prefix(const std::string& prefix) const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_)
            if (k.rfind(prefix, 0) == 0) out.push_back(k);
        return out;
    }

   private:
    using Value = std::variant<std::string, std::int64_t, bool>;

    static std::string strip(const std::string& s) {
        auto b = s.find_first_not_of(" \t\r");
        auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? "" : s.substr(b, e - b + 1);
    }

    static std::string err(std::size_t line, const std::string& what) {
        return "config line " + std::to_string(line) + ": " + what;
    }

    static Value parse_value(const std::string& v, std::size_t line) {
        if (v.front() == '"') {
            if (v.size() < 2 || v.back() != '"')
                throw ParseError(err(line, "unterminated string"));
            return v.substr(1, v.size() - 2);
        }
        if (v == "true") return true;
        if (v == "false") return false;
        try {
            std::size_t used = 0;
            std::int64_t n = std::stoll(v, &used);
            if (used != v.size()) throw std::invalid_argument("trailing junk");
            return n;
        } catch (const std::exception&) {
            throw ParseError(err(line, "unparseable value: " + v));
        }
    }

    std::map<std::string, Value> values_;
};

// Resolved environment configuration. Every path is relative to the config
// file's directory unless absolute; flags override file values.
struct DiverifyConfig {
    std::filesystem::path base_dir;
    std::filesystem::path registry_path;
    std::filesystem::path providers_path;
    std::filesystem::path provider_secrets_path;
    std::filesystem::path attestation_roots_path;
    std::filesystem::path attestation_identity_path;
    std::filesystem::path manifest_path;
    std::filesystem::path state_path;
    std::filesystem::path ca_key_path;
    std::string ca_public_key_hex;
    std::string config_version = "1.0";
    TrustLevelConfig levels = TrustLevelConfig::defaults();

    static DiverifyConfig load(const std::filesystem::path& file) {
        TomlishFile t = TomlishFile::parse_file(file);
        DiverifyConfig c;
        c.base_dir = std::filesystem::absolute(file).parent_path();
        auto path_of = [&](const std::string& key, const std::string& fallback) {
            std::filesystem::path p = t.get_string(key, fallback);
            return p.is_absolute() ? p : c.base_dir / p;
        };
        c.registry_path = path_of("registry", "registry");
        c.providers_path = path_of("providers", "providers.json");
        c.provider_secrets_path = path_of("provider_secrets", "provider_secrets.json");
        c.attestation_roots_path = path_of("attestation_roots", "attestation_roots.json");
        c.attestation_identity_path = path_of("attestation_identity", "attestation_identity.json");
        c.manifest_path = path_of("manifest", "manifest.json");
        c.state_path = path_of("state", "verifier_state.json");
        c.ca_key_path = path_of("ca_key", "ca_key.json");
        c.ca_public_key_hex = t.get_string("ca_public_key", "");
        c.config_version = t.get_string("config_version", "1.0");

        TrustLevelConfig levels;
        bool any = false;
        for (const auto& key : t.keys_with_prefix("levels.")) {
            std::string rest = key.substr(7);  // "<n>.<scope_type>"
            auto dot = rest.find('.');
            if (dot == std::string::npos) throw ParseError("bad trust level key: " + key);
            int level = std::stoi(rest.substr(0, dot));
            std::string scope_type = rest.substr(dot + 1);
            if (t.get_bool(key)) {
                levels.levels[level].insert(scope_type);
                any = true;
            }
        }
        if (any) {
            levels.validate_monotone();
            c.levels = levels;
        }
        return c;
    }
};

}  // namespace diverify
