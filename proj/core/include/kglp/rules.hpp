#pragma once

#include "kglp/triple_store.hpp"
#include "kglp/types.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace kglp {

// Closed chain rule: head(x,z) <= body[0](x,z) for one-atom bodies, or
// head(x,z) <= body[0](x,y) & body[1](y,z) for two-atom bodies. Inverse
// relations express every other orientation in this normal form.
struct HornRule {
    RelationId head = 0;
    std::vector<RelationId> body;  // 1 or 2 atoms, chain order
    std::int64_t support = 0;      // distinct (x,z) with body and head
    std::int64_t body_count = 0;   // distinct (x,z) with body
    double confidence = 0.0;       // support / body_count

    friend bool operator==(const HornRule&, const HornRule&) = default;
};

struct RuleSet {
    std::vector<HornRule> rules;  // unique by (head, body)
};

// Exhaustive enumeration of one- and two-atom chain bodies over all relation
// pairs, with set-semantics counting. Bodies below min_support are pruned
// before heads are tried (support <= body_count). One-atom rules with
// body == head are skipped as tautologies.
RuleSet mine_rules(const TripleStore& store, std::int64_t min_support, double min_conf);

// Boolean composition of the body minus edges the head relation already has,
// returned in row-major order.
std::vector<Triple> apply_rule(const HornRule& rule, const TripleStore& store);

// Union keyed by (head, body); on collision the entry with the larger
// body_count wins (first seen wins ties). Order of first appearance is kept.
RuleSet merge_rulesets(std::span<const RuleSet> sets);

// Keeps rules with confidence >= threshold, order-stable. threshold must lie
// in [0, 1].
RuleSet filter_by_confidence(const RuleSet& set, double threshold);

struct AugmentResult {
    TripleStore store;
    std::int64_t added = 0;
};

// Applies every rule at or above the confidence threshold against the input
// store (one round, not to fixpoint) and unions the new triples in.
AugmentResult augment(const TripleStore& store, const RuleSet& set, double threshold);

// JSON array of {"head", "body", "support", "body_count", "confidence"}.
void save_rules(const RuleSet& set, const std::filesystem::path& path);
RuleSet load_rules(const std::filesystem::path& path);

}  // namespace kglp
