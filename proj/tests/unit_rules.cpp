#include "kglp/rules.hpp"
#include "kglp/io.hpp"
#include "kglp/util.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace kglp;

TEST_SUITE_BEGIN("rules");

namespace {

TripleStore random_store(Rng& rng, std::int64_t entities, std::int64_t relations,
                         std::int64_t edges) {
    std::vector<Triple> triples;
    for (std::int64_t i = 0; i < edges; ++i)
        triples.push_back(Triple{static_cast<EntityId>(rng.below(entities)),
                                 static_cast<RelationId>(rng.below(relations)),
                                 static_cast<EntityId>(rng.below(entities))});
    return TripleStore(std::move(triples), entities, relations);
}

// Reference rule application: nested-loop join minus existing head edges.
std::set<Triple> brute_force_apply(const HornRule& rule, const TripleStore& store) {
    std::set<Triple> result;
    const auto& triples = store.triples();
    if (rule.body.size() == 1) {
        for (const Triple& a : triples) {
            if (a.rel != rule.body[0]) continue;
            const Triple derived{a.head, rule.head, a.tail};
            if (!store.contains(derived)) result.insert(derived);
        }
        return result;
    }
    for (const Triple& a : triples) {
        if (a.rel != rule.body[0]) continue;
        for (const Triple& b : triples) {
            if (b.rel != rule.body[1] || b.head != a.tail) continue;
            const Triple derived{a.head, rule.head, b.tail};
            if (!store.contains(derived)) result.insert(derived);
        }
    }
    return result;
}

const HornRule& find_rule(const RuleSet& set, RelationId head, std::vector<RelationId> body) {
    for (const HornRule& r : set.rules)
        if (r.head == head && r.body == body) return r;
    REQUIRE(false);
    return set.rules.front();
}

}  // namespace

TEST_CASE("mine_rules finds a chain rule with its counts") {
    const TripleStore store({Triple{0, 0, 1}, Triple{1, 1, 2}, Triple{0, 2, 2}}, 3, 3);
    const auto mined = mine_rules(store, 1, 0.0);
    const auto& rule = find_rule(mined, 2, {0, 1});
    CHECK(rule.body_count == 1);
    CHECK(rule.support == 1);
    CHECK(rule.confidence == doctest::Approx(1.0));
}

TEST_CASE("mine_rules on an empty store yields nothing") {
    CHECK(mine_rules(TripleStore({}, 0, 0), 1, 0.0).rules.empty());
}

TEST_CASE("mine_rules finds equivalence rules between coincident relations") {
    const TripleStore store({Triple{0, 0, 1}, Triple{0, 1, 1}, Triple{1, 0, 0}, Triple{1, 1, 0}},
                            2, 2);
    const auto mined = mine_rules(store, 1, 0.0);
    const auto& rule = find_rule(mined, 1, {0});
    CHECK(rule.confidence == doctest::Approx(1.0));
    // tautology head(x,y) <= head(x,y) must not be emitted
    for (const HornRule& r : mined.rules)
        if (r.body.size() == 1) CHECK(r.body[0] != r.head);
}

TEST_CASE("mine_rules prunes below min_support and min_conf") {
    const TripleStore store({Triple{0, 0, 1}, Triple{1, 1, 2}, Triple{0, 2, 2}}, 3, 3);
    CHECK(mine_rules(store, 2, 0.0).rules.empty());
    for (const HornRule& r : mine_rules(store, 1, 0.9).rules)
        CHECK(r.confidence >= 0.9);
}

TEST_CASE("apply_rule derives the composition edge") {
    const TripleStore store({Triple{0, 0, 1}, Triple{1, 1, 2}}, 3, 3);
    const HornRule rule{2, {0, 1}, 0, 0, 1.0};
    CHECK(apply_rule(rule, store) == std::vector<Triple>{Triple{0, 2, 2}});
}

TEST_CASE("apply_rule subtracts known edges") {
    const TripleStore store({Triple{0, 0, 1}, Triple{1, 1, 2}, Triple{0, 2, 2}}, 3, 3);
    const HornRule rule{2, {0, 1}, 0, 0, 1.0};
    CHECK(apply_rule(rule, store).empty());
}

TEST_CASE("apply_rule saturates over parallel middle paths") {
    const TripleStore store({Triple{0, 0, 1}, Triple{0, 0, 2}, Triple{1, 1, 3}, Triple{2, 1, 3}},
                            4, 3);
    const HornRule rule{2, {0, 1}, 0, 0, 1.0};
    CHECK(apply_rule(rule, store) == std::vector<Triple>{Triple{0, 2, 3}});
}

TEST_CASE("apply_rule validates relation ids") {
    const TripleStore store({Triple{0, 0, 1}}, 2, 1);
    CHECK_THROWS_AS(apply_rule(HornRule{5, {0}, 0, 0, 1.0}, store), ValidationError);
    CHECK_THROWS_AS(apply_rule(HornRule{0, {0, 9}, 0, 0, 1.0}, store), ValidationError);
}

TEST_CASE("apply_rule matches the brute-force join on random stores") {
    Rng rng(404);
    for (int trial = 0; trial < 60; ++trial) {
        const std::int64_t entities = 2 + static_cast<std::int64_t>(rng.below(48));
        const std::int64_t relations = 1 + static_cast<std::int64_t>(rng.below(5));
        const auto store = random_store(rng, entities, relations, 4 * entities);
        HornRule rule;
        rule.head = static_cast<RelationId>(rng.below(relations));
        rule.body.push_back(static_cast<RelationId>(rng.below(relations)));
        if (rng.below(2) == 0) rule.body.push_back(static_cast<RelationId>(rng.below(relations)));

        const auto got = apply_rule(rule, store);
        const std::set<Triple> got_set(got.begin(), got.end());
        CHECK(got_set.size() == got.size());
        CHECK(got_set == brute_force_apply(rule, store));
    }
}

TEST_CASE("merged rule sets unify by head and body") {
    RuleSet a{{HornRule{0, {1}, 5, 10, 0.5}, HornRule{1, {2, 0}, 3, 3, 1.0}}};
    RuleSet b{{HornRule{0, {1}, 20, 40, 0.5}, HornRule{2, {1}, 2, 4, 0.5}}};

    const RuleSet sets[] = {a, b};
    const auto merged = merge_rulesets(sets);
    CHECK(merged.rules.size() == 3);
    CHECK(find_rule(merged, 0, {1}).body_count == 40);  // larger body_count wins
    CHECK(find_rule(merged, 1, {2, 0}).support == 3);

    const RuleSet disjoint[] = {RuleSet{{HornRule{0, {1}, 1, 1, 1.0}}},
                                RuleSet{{HornRule{1, {0}, 1, 1, 1.0}}}};
    CHECK(merge_rulesets(disjoint).rules.size() == 2);
}

TEST_CASE("merging subgraph rule sets never exceeds the raw sum") {
    Rng rng(31337);
    const auto store = random_store(rng, 40, 6, 500);
    const auto slices = sample_subgraphs(store, 5, store.size() / 3);
    std::vector<RuleSet> mined;
    std::size_t raw_total = 0;
    for (const auto& slice : slices) {
        mined.push_back(mine_rules(slice, 2, 0.1));
        raw_total += mined.back().rules.size();
    }
    const auto merged = merge_rulesets(mined);
    CHECK(merged.rules.size() <= raw_total);
}

TEST_CASE("filter_by_confidence keeps high-confidence rules in order") {
    RuleSet set{{HornRule{0, {1}, 10, 10, 1.0}, HornRule{1, {0}, 1, 2, 0.5}}};
    CHECK(filter_by_confidence(set, 0.0).rules == set.rules);

    const auto strict = filter_by_confidence(set, 1.0);
    REQUIRE(strict.rules.size() == 1);
    CHECK(strict.rules[0].head == 0);

    CHECK_THROWS_AS(filter_by_confidence(set, -0.1), ValidationError);
    CHECK_THROWS_AS(filter_by_confidence(set, 1.5), ValidationError);
}

TEST_CASE("confidence filters nest") {
    Rng rng(808);
    const auto store = random_store(rng, 30, 5, 300);
    const auto mined = mine_rules(store, 1, 0.0);
    const auto at95 = filter_by_confidence(mined, 0.95);
    const auto at99 = filter_by_confidence(mined, 0.99);
    for (const HornRule& r : at99.rules)
        CHECK(std::find(at95.rules.begin(), at95.rules.end(), r) != at95.rules.end());
}

TEST_CASE("mined counts satisfy support <= body_count and confidence in [0,1]") {
    Rng rng(909);
    for (int trial = 0; trial < 10; ++trial) {
        const auto store = random_store(rng, 25, 4, 250);
        for (const HornRule& r : mine_rules(store, 1, 0.0).rules) {
            CHECK(r.support <= r.body_count);
            CHECK(r.confidence >= 0.0);
            CHECK(r.confidence <= 1.0);
            CHECK(r.confidence == doctest::Approx(static_cast<double>(r.support) /
                                                  static_cast<double>(r.body_count)));
        }
    }
}

TEST_CASE("augment with no rules returns the store unchanged") {
    const TripleStore store({Triple{0, 0, 1}}, 2, 1);
    const auto out = augment(store, RuleSet{}, 0.95);
    CHECK(out.added == 0);
    CHECK(out.store.triples() == store.triples());
}

TEST_CASE("rules mined at confidence 1.0 add nothing back to their source") {
    Rng rng(515);
    for (int trial = 0; trial < 8; ++trial) {
        const auto store = random_store(rng, 20, 4, 150);
        const auto perfect = filter_by_confidence(mine_rules(store, 1, 0.0), 1.0);
        for (const HornRule& r : perfect.rules) CHECK(apply_rule(r, store).empty());
        const auto out = augment(store, perfect, 1.0);
        CHECK(out.added == 0);
    }
}

TEST_CASE("augment adds the chain conclusion") {
    const TripleStore store({Triple{0, 0, 1}, Triple{1, 1, 2}}, 3, 3);
    const RuleSet set{{HornRule{2, {0, 1}, 1, 1, 1.0}}};
    const auto out = augment(store, set, 0.5);
    CHECK(out.added == 1);
    CHECK(out.store.contains(Triple{0, 2, 2}));
    CHECK(out.store.size() == 3);
}

TEST_CASE("iterated augmentation reaches a fixed point") {
    Rng rng(616);
    for (int trial = 0; trial < 5; ++trial) {
        const auto store = random_store(rng, 12, 3, 40);
        const auto rules = filter_by_confidence(mine_rules(store, 1, 0.0), 0.8);
        TripleStore current = store;
        const std::int64_t bound = store.num_entities() * store.num_entities();
        bool settled = false;
        for (std::int64_t i = 0; i < bound && !settled; ++i) {
            auto out = augment(current, rules, 0.8);
            settled = out.added == 0;
            current = std::move(out.store);
        }
        CHECK(settled);
        CHECK(augment(current, rules, 0.8).added == 0);
    }
}

TEST_CASE("rule sets round-trip through JSON") {
    TempDir tmp;
    RuleSet set{{HornRule{0, {1}, 10, 20, 0.5}, HornRule{2, {1, 0}, 3, 4, 0.75}}};
    const auto path = tmp.path / "rules.json";
    save_rules(set, path);
    const auto loaded = load_rules(path);
    CHECK(loaded.rules == set.rules);
}

TEST_SUITE_END();
