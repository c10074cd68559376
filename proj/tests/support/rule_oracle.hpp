#pragma once

// Exhaustive rule-evaluation oracle. It enumerates every signer binding and
// folds the Boolean tree with an explicit stack machine, with each match
// node's truth computed directly from the claim list and Scope membership.
// It shares no evaluation code with the library.

#include <vector>

#include "diverify/policy.hpp"

namespace testsupport {

inline bool oracle_match_truth(const diverify::RuleExpr& node, const std::string& candidate,
                               std::span<const diverify::ScopeClaim> claims,
                               const std::map<std::string, diverify::ScopeSpec>& signers) {
    if (node.signer != candidate) return false;
    auto it = signers.find(node.signer);
    if (it == signers.end()) return false;
    auto scope_it = it->second.scope_map.find(node.scope_type);
    if (scope_it == it->second.scope_map.end() || scope_it->second.count(node.value) == 0)
        return false;
    for (const auto& c : claims)
        if (c.scope_type == node.scope_type && c.value == node.value) return true;
    return false;
}

inline bool oracle_eval_for_signer(const diverify::RuleExpr& root, const std::string& candidate,
                                   std::span<const diverify::ScopeClaim> claims,
                                   const std::map<std::string, diverify::ScopeSpec>& signers) {
    using diverify::RuleExpr;
    struct Frame {
        const RuleExpr* node;
        std::size_t next_child;
    };
    std::vector<Frame> frames{{&root, 0}};
    std::vector<bool> values;

    while (!frames.empty()) {
        Frame& top = frames.back();
        const RuleExpr* node = top.node;
        if (node->kind == RuleExpr::Kind::match) {
            values.push_back(oracle_match_truth(*node, candidate, claims, signers));
            frames.pop_back();
            continue;
        }
        if (top.next_child < node->children.size()) {
            const RuleExpr* child = &node->children[top.next_child];
            ++top.next_child;
            frames.push_back({child, 0});
            continue;
        }
        std::size_t arity = node->children.size();
        bool result = false;
        switch (node->kind) {
            case RuleExpr::Kind::and_: {
                result = true;
                for (std::size_t i = values.size() - arity; i < values.size(); ++i)
                    result = result && values[i];
                break;
            }
            case RuleExpr::Kind::or_: {
                result = false;
                for (std::size_t i = values.size() - arity; i < values.size(); ++i)
                    result = result || values[i];
                break;
            }
            case RuleExpr::Kind::not_:
                result = !values.back();
                break;
            case RuleExpr::Kind::match:
                break;  // unreachable
        }
        values.resize(values.size() - arity);
        values.push_back(result);
        frames.pop_back();
    }
    return values.back();
}

inline bool oracle_rule_satisfied(const diverify::RuleExpr& rule,
                                  std::span<const diverify::ScopeClaim> claims,
                                  const std::map<std::string, diverify::ScopeSpec>& signers) {
    for (const auto& [u, spec] : signers)
        if (oracle_eval_for_signer(rule, u, claims, signers)) return true;
    return false;
}

}  // namespace testsupport
