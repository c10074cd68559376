#pragma once

// Random policy / claim-set instances for the oracle-equivalence properties:
// up to 4 scope types, up to 3 values per type, rule depth up to 4.

#include <random>

#include "diverify/policy.hpp"

namespace testsupport {

struct PolicyCase {
    diverify::Policy policy;
    std::vector<diverify::ScopeClaim> claims;
};

class PolicyCaseGenerator {
   public:
    explicit PolicyCaseGenerator(std::uint64_t seed) : rng_(seed) {}

    PolicyCase next() {
        using diverify::Policy;
        using diverify::RuleExpr;
        using diverify::ScopeClaim;
        using diverify::ScopeSpec;

        PolicyCase out;
        out.policy.policy_id = "random";
        int n_types = pick(1, 4);
        int n_signers = pick(1, 3);
        for (int s = 0; s < n_signers; ++s) {
            ScopeSpec spec;
            for (int t = 0; t < n_types; ++t) {
                if (chance(0.25)) continue;  // signer may lack a type entirely
                int n_values = pick(1, 3);
                for (int v = 0; v < n_values; ++v)
                    spec.scope_map[type_name(t)].insert(value_name(t, pick(0, 4)));
            }
            out.policy.signers[signer_name(s)] = spec;
        }
        out.policy.rule = random_rule(n_signers, n_types, 1);

        int n_claims = pick(0, 6);
        for (int i = 0; i < n_claims; ++i) {
            ScopeClaim c;
            int t = pick(0, n_types - 1);
            c.provider_id = "gen-" + type_name(t);
            c.scope_type = type_name(t);
            c.value = value_name(t, pick(0, 4));
            out.claims.push_back(c);
        }
        return out;
    }

    std::mt19937_64& rng() { return rng_; }

   private:
    diverify::RuleExpr random_rule(int n_signers, int n_types, int depth) {
        using diverify::RuleExpr;
        int node = depth >= 4 ? 0 : pick(0, 5);
        if (node <= 2) {  // leaf
            int t = pick(0, n_types - 1);
            // Occasionally reference a signer or value outside the policy so
            // the membership branch of match() is exercised.
            std::string signer = chance(0.1) ? "ghost" : signer_name(pick(0, n_signers - 1));
            return RuleExpr::match(signer, type_name(t), value_name(t, pick(0, 4)));
        }
        if (node == 3) {
            std::vector<RuleExpr> children;
            int n = pick(2, 3);
            for (int i = 0; i < n; ++i)
                children.push_back(random_rule(n_signers, n_types, depth + 1));
            return RuleExpr::all_of(std::move(children));
        }
        if (node == 4) {
            std::vector<RuleExpr> children;
            int n = pick(2, 3);
            for (int i = 0; i < n; ++i)
                children.push_back(random_rule(n_signers, n_types, depth + 1));
            return RuleExpr::any_of(std::move(children));
        }
        return RuleExpr::negate(random_rule(n_signers, n_types, depth + 1));
    }

    static std::string type_name(int t) { return "type" + std::to_string(t); }
    static std::string value_name(int t, int v) {
        return "t" + std::to_string(t) + "v" + std::to_string(v);
    }
    static std::string signer_name(int s) { return "signer" + std::to_string(s); }

    int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool chance(double p) { return std::uniform_real_distribution<double>(0, 1)(rng_) < p; }

    std::mt19937_64 rng_;
};

}  // namespace testsupport
