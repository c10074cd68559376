#pragma once

#include <set>

#include "diverify/attestation.hpp"
#include "diverify/proof.hpp"

namespace diverify {

inline constexpr int kMaxRuleDepth = 32;
inline constexpr const char* kBindingDescriptor =
    "prefix64 of signature over scope digest under proof signing key";

struct ScopeSpec {
    std::map<std::string, std::set<std::string>> scope_map;  // type -> acceptable values

    bool allows(const std::string& scope_type, const std::string& value) const {
        auto it = scope_map.find(scope_type);
        return it != scope_map.end() && it->second.count(value) > 0;
    }

    Json to_json() const {
        Json m = Json::object();
        for (const auto& [t, values] : scope_map) {
            Json arr = Json::array();
            for (const auto& v : values) arr.push_back(v);
            m[t] = arr;
        }
        return Json{{"scope_map", m}};
    }

    static ScopeSpec from_json(const Json& j) {
        ScopeSpec s;
        for (const auto& [t, arr] : j.at("scope_map").items()) {
            std::set<std::string>& values = s.scope_map[t];
            for (const auto& v : arr) values.insert(v.get<std::string>());
            if (values.empty()) throw ParseError("scope_map[" + t + "] has no values");
        }
        return s;
    }
};

struct AttestSpec {
    Digest32 measurement{};                   // M
    std::string binding = kBindingDescriptor;  // B, fixed in this artifact
    std::string procedure = kQuoteProcedureId;  // Q

    Json to_json() const {
        return Json{{"measurement_hex", to_hex(measurement)}, {"procedure", procedure}};
    }

    static AttestSpec from_json(const Json& j) {
        AttestSpec a;
        a.measurement = from_hex_array<32>(j.at("measurement_hex").get<std::string>());
        a.procedure = j.at("procedure").get<std::string>();
        if (a.procedure != kQuoteProcedureId)
            throw ParseError("unknown attestation procedure: " + a.procedure);
        return a;
    }
};

// Boolean rule over scope assertions. And/Or are kept n-ary to mirror the
// JSON syntax {"and": [...]}; binary composition is the n=2 case.
struct RuleExpr {
    enum class Kind { match, and_, or_, not_ };

    Kind kind = Kind::match;
    std::string signer;
    std::string scope_type;
    std::string value;
    std::vector<RuleExpr> children;

    static RuleExpr match(std::string signer, std::string scope_type, std::string value) {
        RuleExpr r;
        r.kind = Kind::match;
        r.signer = std::move(signer);
        r.scope_type = std::move(scope_type);
        r.value = std::move(value);
        return r;
    }

    static RuleExpr all_of(std::vector<RuleExpr> children) {
        if (children.empty()) throw ParseError("and requires at least one operand");
        RuleExpr r;
        r.kind = Kind::and_;
        r.children = std::move(children);
        return r;
    }

    static RuleExpr any_of(std::vector<RuleExpr> children) {
        if (children.empty()) throw ParseError("or requires at least one operand");
        RuleExpr r;
        r.kind = Kind::or_;
        r.children = std::move(children);
        return r;
    }

    static RuleExpr negate(RuleExpr inner) {
        RuleExpr r;
        r.kind = Kind::not_;
        r.children.push_back(std::move(inner));
        return r;
    }

    int depth() const {
        int d = 0;
        for (const auto& c : children) d = std::max(d, c.depth());
        return d + 1;
    }

    Json to_json() const {
        switch (kind) {
            case Kind::match:
                return Json{{"match", Json{{"signer", signer}, {"type", scope_type}, {"value", value}}}};
            case Kind::and_:
            case Kind::or_: {
                Json arr = Json::array();
                for (const auto& c : children) arr.push_back(c.to_json());
                return Json{{kind == Kind::and_ ? "and" : "or", arr}};
            }
            case Kind::not_:
                return Json{{"not", children.front().to_json()}};
        }
        throw EncodingError("unknown rule node");
    }

    static RuleExpr from_json(const Json& j, int depth = 1) {
        if (depth > kMaxRuleDepth) throw ParseError("rule exceeds maximum depth");
        if (!j.is_object() || j.size() != 1) throw ParseError("rule node must be a single-key object");
        if (j.contains("match")) {
            const Json& m = j.at("match");
            return match(m.at("signer").get<std::string>(), m.at("type").get<std::string>(),
                         m.at("value").get<std::string>());
        }
        if (j.contains("and") || j.contains("or")) {
            bool is_and = j.contains("and");
            const Json& arr = j.at(is_and ? "and" : "or");
            if (!arr.is_array() || arr.empty())
                throw ParseError("and/or requires a non-empty operand array");
            std::vector<RuleExpr> children;
            for (const auto& c : arr) children.push_back(from_json(c, depth + 1));
            return is_and ? all_of(std::move(children)) : any_of(std::move(children));
        }
        if (j.contains("not")) return negate(from_json(j.at("not"), depth + 1));
        throw ParseError("unknown rule operator");
    }

    bool operator==(const RuleExpr&) const = default;
};

// hasScope(t, x): some claim of type t carries exactly the value x.
inline bool has_scope(std::span<const ScopeClaim> claims, const std::string& scope_type,
                      const std::string& value) {
    for (const auto& c : claims)
        if (c.scope_type == scope_type && c.value == value) return true;
    return false;
}

struct Policy {
    std::string policy_id;
    std::map<std::string, ScopeSpec> signers;
    std::optional<AttestSpec> attest;
    RuleExpr rule;

    Json to_json() const {
        Json signers_json = Json::object();
        for (const auto& [u, spec] : signers) signers_json[u] = spec.to_json();
        Json j{{"policy_id", policy_id}, {"rule", rule.to_json()}, {"signers", signers_json}};
        if (attest) j["attest"] = attest->to_json();
        return j;
    }

    static Policy from_json(const Json& j) {
        Policy p;
        p.policy_id = j.at("policy_id").get<std::string>();
        for (const auto& [u, spec] : j.at("signers").items())
            p.signers[u] = ScopeSpec::from_json(spec);
        if (j.contains("attest")) p.attest = AttestSpec::from_json(j.at("attest"));
        p.rule = RuleExpr::from_json(j.at("rule"));
        p.validate();
        return p;
    }

    // Every (u, t, x) referenced by the rule must exist in Scope(u).
    void validate() const {
        validate_rule_refs(rule);
    }

    Digest32 hash() const { return canonical_digest(to_json()); }

   private:
    void validate_rule_refs(const RuleExpr& r) const {
        if (r.kind == RuleExpr::Kind::match) {
            auto it = signers.find(r.signer);
            if (it == signers.end())
                throw ParseError("rule references unknown signer: " + r.signer);
            if (!it->second.allows(r.scope_type, r.value))
                throw ParseError("rule references value outside Scope(" + r.signer + ")[" +
                                 r.scope_type + "]: " + r.value);
            return;
        }
        for (const auto& c : r.children) validate_rule_refs(c);
    }
};

namespace detail {
inline bool eval_rule_for_signer(const RuleExpr& rule, const std::string& candidate,
                                 std::span<const ScopeClaim> claims,
                                 const std::map<std::string, ScopeSpec>& signers, int depth) {
    if (depth > kMaxRuleDepth) throw Error("rule evaluation exceeds maximum depth");
    switch (rule.kind) {
        case RuleExpr::Kind::match: {
            if (rule.signer != candidate) return false;
            auto it = signers.find(rule.signer);
            if (it == signers.end()) return false;
            return has_scope(claims, rule.scope_type, rule.value) &&
                   it->second.allows(rule.scope_type, rule.value);
        }
        case RuleExpr::Kind::and_:
            for (const auto& c : rule.children)
                if (!eval_rule_for_signer(c, candidate, claims, signers, depth + 1)) return false;
            return true;
        case RuleExpr::Kind::or_:
            for (const auto& c : rule.children)
                if (eval_rule_for_signer(c, candidate, claims, signers, depth + 1)) return true;
            return false;
        case RuleExpr::Kind::not_:
            return !eval_rule_for_signer(rule.children.front(), candidate, claims, signers,
                                         depth + 1);
    }
    throw Error("unknown rule node");
}
}  // namespace detail

// A rule is satisfied only if a single signer u makes the whole expression
// true; match nodes naming other signers evaluate false under that candidate.
inline bool evaluate_rule(const RuleExpr& rule, std::span<const ScopeClaim> claims,
                          const std::map<std::string, ScopeSpec>& signers) {
    for (const auto& [u, spec] : signers) {
        if (detail::eval_rule_for_signer(rule, u, claims, signers, 1)) return true;
    }
    return false;
}

// validAttest(q, Attest): quote verifies under the sim-tee procedure, the
// measurement matches M, and the 64-byte custom data verifies as the
// signature over the scope digest under the proof's signing key.
inline bool valid_attest(const std::optional<Quote>& quote, const Digest32& scope_digest,
                         const Key32& signing_key, const AttestSpec& spec,
                         const TrustedRootStore& roots, std::int64_t now) {
    if (!quote) return false;
    if (!check_quote(*quote, roots, now)) return false;
    if (quote->measurement != spec.measurement) return false;
    Signature binding;
    binding.bytes = quote->custom_data;
    binding.key_id = key_id_of(signing_key);
    return verify(signing_key, scope_digest, binding);
}

struct PolicyDecision {
    bool accepted = false;
    std::string reason;  // first failing predicate: "attest" or "rule"

    static PolicyDecision accept() { return {true, ""}; }
    static PolicyDecision reject(std::string reason) { return {false, std::move(reason)}; }
};

inline PolicyDecision evaluate_policy(const DiVerifyProof& proof, const Policy& policy,
                                      const TrustedRootStore& roots, std::int64_t now = now_unix()) {
    if (policy.attest) {
        if (proof.scopes.empty()) return PolicyDecision::reject("attest");
        Digest32 scope_digest = hash_scopes(proof.scopes);
        if (!valid_attest(proof.quote, scope_digest, proof.signing_key, *policy.attest, roots, now))
            return PolicyDecision::reject("attest");
    }
    if (!evaluate_rule(policy.rule, proof.scopes, policy.signers))
        return PolicyDecision::reject("rule");
    return PolicyDecision::accept();
}

}  // namespace diverify
