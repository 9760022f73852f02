#include "kglp/rules.hpp"
#include "kglp/synthetic.hpp"
#include "kglp/util.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace kglp;

TEST_SUITE_BEGIN("synthetic");

TEST_CASE("noise-free generation plants rules mineable at confidence 1.0") {
    SyntheticSpec spec;
    spec.num_entities = 60;
    spec.num_relations = 5;
    spec.num_rule_relations = 2;
    spec.noise_fraction = 0.0;
    spec.splits = {1.0, 0.0, 0.0};
    spec.seed = 4;

    const auto data = generate_synthetic(spec);
    REQUIRE(data.planted.size() == 2);
    const auto augmented = add_inverse_relations(data.train);
    const auto mined = mine_rules(augmented, 1, 0.0);

    for (const auto& t : data.planted) {
        const auto it = std::find_if(mined.rules.begin(), mined.rules.end(), [&](const HornRule& r) {
            return r.head == t[0] && r.body == std::vector<RelationId>{t[1], t[2]};
        });
        REQUIRE(it != mined.rules.end());
        CHECK(it->confidence == doctest::Approx(1.0));
        CHECK(it->support == it->body_count);
    }
}

TEST_CASE("split fractions are honored up to rounding") {
    SyntheticSpec spec;
    spec.num_entities = 150;
    spec.num_relations = 6;
    spec.num_rule_relations = 1;
    spec.splits = {0.8, 0.1, 0.1};
    spec.seed = 9;

    const auto data = generate_synthetic(spec);
    const auto total = data.total_triples;
    const auto n_valid = static_cast<std::int64_t>(data.valid.size());
    const auto n_test = static_cast<std::int64_t>(data.test.size());
    CHECK(n_valid == std::llround(0.1 * static_cast<double>(total)));
    CHECK(n_test == std::llround(0.1 * static_cast<double>(total)));
    CHECK(data.train.size() == total - n_valid - n_test);
}

TEST_CASE("candidate lists carry the truth exactly once") {
    SyntheticSpec spec;
    spec.num_entities = 100;
    spec.num_relations = 4;
    spec.num_rule_relations = 1;
    spec.num_candidates = 15;
    spec.seed = 21;

    const auto data = generate_synthetic(spec);
    REQUIRE_FALSE(data.valid.empty());
    for (const auto& q : data.valid) {
        CHECK(q.candidates.size() == 15);
        REQUIRE(q.truth_index.has_value());
        const EntityId truth = q.candidates[static_cast<std::size_t>(*q.truth_index)];
        CHECK(std::count(q.candidates.begin(), q.candidates.end(), truth) == 1);
    }
}

TEST_CASE("generation is deterministic and writes byte-identical directories") {
    TempDir tmp;
    SyntheticSpec spec;
    spec.num_entities = 50;
    spec.num_relations = 4;
    spec.num_rule_relations = 1;
    spec.noise_fraction = 0.1;
    spec.seed = 33;

    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    CHECK(a.train.triples() == b.train.triples());
    CHECK(a.entity_features == b.entity_features);

    write_synthetic(a, spec, tmp.path / "one");
    write_synthetic(b, spec, tmp.path / "two");
    for (const auto& entry : std::filesystem::directory_iterator(tmp.path / "one")) {
        const auto name = entry.path().filename();
        CHECK(read_text_file(entry.path()) == read_text_file(tmp.path / "two" / name));
    }
}

TEST_CASE("feature matrices align with the graph") {
    SyntheticSpec spec;
    spec.num_entities = 40;
    spec.num_relations = 5;
    spec.num_rule_relations = 2;
    spec.feature_dim = 12;
    spec.seed = 55;

    const auto data = generate_synthetic(spec);
    CHECK(data.entity_features.rows == 40);
    CHECK(data.entity_features.cols == 12);
    CHECK(data.relation_features.rows == 5);
    for (float v : data.entity_features.data) CHECK(std::isfinite(v));
}

TEST_CASE("infeasible specs are rejected") {
    SyntheticSpec spec;
    spec.num_relations = 2;
    spec.num_rule_relations = 2;  // no base relation left
    CHECK_THROWS_AS(generate_synthetic(spec), ValidationError);

    SyntheticSpec bad_splits;
    bad_splits.splits = {0.9, 0.2, 0.1};
    CHECK_THROWS_AS(generate_synthetic(bad_splits), ValidationError);

    CHECK_THROWS_AS(synthetic_spec_from_json("{\"bogus\": 1}"), ValidationError);
}

TEST_CASE("spec JSON round-trips") {
    SyntheticSpec spec;
    spec.num_entities = 123;
    spec.rule_templates.push_back({7, 0, 1});
    spec.num_relations = 8;
    spec.num_rule_relations = 1;
    spec.seed = 77;
    const auto parsed = synthetic_spec_from_json(synthetic_spec_to_json(spec));
    CHECK(parsed.num_entities == 123);
    CHECK(parsed.rule_templates == spec.rule_templates);
    CHECK(parsed.seed == 77);
}

TEST_SUITE_END();
