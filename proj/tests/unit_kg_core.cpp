#include "kglp/io.hpp"
#include "kglp/triple_store.hpp"
#include "kglp/util.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace kglp;

TEST_SUITE_BEGIN("kg_core");

TEST_CASE("load_triples reads tab-separated ids") {
    TempDir tmp;
    const auto path = tmp.path / "g.tsv";
    write_text_file(path, "0\t0\t1\n1\t1\t2\n");
    const auto store = load_triples(path);
    CHECK(store.size() == 2);
    CHECK(store.num_entities() == 3);
    CHECK(store.num_relations() == 2);
    CHECK(store.triples()[0] == Triple{0, 0, 1});
    CHECK(store.triples()[1] == Triple{1, 1, 2});
}

TEST_CASE("load_triples accepts an empty file") {
    TempDir tmp;
    const auto path = tmp.path / "g.tsv";
    write_text_file(path, "");
    const auto store = load_triples(path);
    CHECK(store.size() == 0);
    CHECK(store.num_entities() == 0);
    CHECK(store.num_relations() == 0);
}

TEST_CASE("load_triples drops duplicate lines") {
    TempDir tmp;
    const auto path = tmp.path / "g.tsv";
    write_text_file(path, "0\t0\t1\n0\t0\t1\n");
    CHECK(load_triples(path).size() == 1);
}

TEST_CASE("load_triples reports malformed lines with their number") {
    TempDir tmp;
    const auto path = tmp.path / "g.tsv";
    write_text_file(path, "0\t0\t1\n0\tx\t1\n");
    CHECK_THROWS_WITH_AS(load_triples(path), doctest::Contains(":2"), ValidationError);

    write_text_file(path, "0\t0\n");
    CHECK_THROWS_AS(load_triples(path), ValidationError);

    write_text_file(path, "0\t0\t99999999999999999999999\n");
    CHECK_THROWS_WITH_AS(load_triples(path), doctest::Contains("overflow"), ValidationError);
}

TEST_CASE("load_triples takes counts from the sidecar") {
    TempDir tmp;
    const auto path = tmp.path / "g.tsv";
    write_text_file(path, "0\t0\t1\n");
    write_text_file(tmp.path / "g.tsv.meta.json", "{\"num_entities\": 7, \"num_relations\": 3}\n");
    const auto store = load_triples(path);
    CHECK(store.num_entities() == 7);
    CHECK(store.num_relations() == 3);

    write_text_file(tmp.path / "g.tsv.meta.json", "{\"num_entities\": 1, \"num_relations\": 3}\n");
    CHECK_THROWS_AS(load_triples(path), ValidationError);
}

TEST_CASE("triples round-trip through save and load") {
    TempDir tmp;
    Rng rng(11);
    std::vector<Triple> triples;
    for (int i = 0; i < 200; ++i)
        triples.push_back(Triple{static_cast<EntityId>(rng.below(40)),
                                 static_cast<RelationId>(rng.below(5)),
                                 static_cast<EntityId>(rng.below(40))});
    const TripleStore store(std::move(triples), 64, 9);
    const auto path = tmp.path / "g.tsv";
    save_triples(store, path);
    const auto loaded = load_triples(path);
    CHECK(loaded.triples() == store.triples());
    CHECK(loaded.num_entities() == 64);
    CHECK(loaded.num_relations() == 9);
}

TEST_CASE("add_inverse_relations mirrors every triple") {
    const TripleStore store({Triple{0, 0, 1}}, 2, 1);
    const auto aug = add_inverse_relations(store);
    CHECK(aug.num_relations() == 2);
    CHECK(aug.triples() == std::vector<Triple>{Triple{0, 0, 1}, Triple{1, 1, 0}});
}

TEST_CASE("add_inverse_relations keeps an empty store empty") {
    const auto aug = add_inverse_relations(TripleStore({}, 0, 0));
    CHECK(aug.size() == 0);
    CHECK(aug.num_relations() == 0);
}

TEST_CASE("add_inverse_relations handles symmetric pairs") {
    const TripleStore store({Triple{0, 0, 1}, Triple{1, 0, 0}}, 2, 1);
    const auto aug = add_inverse_relations(store);
    CHECK(aug.size() == 4);
    CHECK(aug.contains(Triple{1, 1, 0}));
    CHECK(aug.contains(Triple{0, 1, 1}));
}

TEST_CASE("inverse augmentation doubles the count and pairs triples") {
    Rng rng(5);
    std::vector<Triple> triples;
    for (int i = 0; i < 300; ++i)
        triples.push_back(Triple{static_cast<EntityId>(rng.below(30)),
                                 static_cast<RelationId>(rng.below(4)),
                                 static_cast<EntityId>(rng.below(30))});
    const TripleStore store(std::move(triples), 30, 4);
    const auto aug = add_inverse_relations(store);
    CHECK(aug.size() == 2 * store.size());
    for (const Triple& t : store.triples()) {
        CHECK(aug.contains(t));
        CHECK(aug.contains(Triple{t.tail, t.rel + 4, t.head}));
    }
}

TEST_CASE("relation_matrix holds exactly the relation's edges") {
    const TripleStore store({Triple{0, 0, 1}}, 2, 2);
    const auto& m = store.relation_matrix(0);
    CHECK(m.nnz() == 1);
    CHECK(m.contains(0, 1));
    CHECK(store.relation_matrix(1).nnz() == 0);
    CHECK_THROWS_AS(store.relation_matrix(2), ValidationError);
    CHECK_THROWS_AS(store.relation_matrix(-1), ValidationError);

    const TripleStore multi({Triple{0, 0, 1}, Triple{0, 0, 0}}, 2, 1);
    const auto& m2 = multi.relation_matrix(0);
    CHECK(m2.nnz() == 2);
    CHECK(m2.contains(0, 0));
    CHECK(m2.contains(0, 1));
}

TEST_CASE("relation_matrix nnz matches the per-relation triple count") {
    Rng rng(17);
    std::vector<Triple> triples;
    for (int i = 0; i < 400; ++i)
        triples.push_back(Triple{static_cast<EntityId>(rng.below(25)),
                                 static_cast<RelationId>(rng.below(6)),
                                 static_cast<EntityId>(rng.below(25))});
    const TripleStore store(std::move(triples), 25, 6);
    for (RelationId r = 0; r < 6; ++r) {
        const auto count = std::count_if(store.triples().begin(), store.triples().end(),
                                         [&](const Triple& t) { return t.rel == r; });
        CHECK(store.relation_matrix(r).nnz() == count);
    }
}

namespace {

TripleStore numbered_store(std::int64_t n) {
    std::vector<Triple> triples;
    for (std::int64_t i = 0; i < n; ++i) triples.push_back(Triple{i, 0, (i + 1) % n});
    return TripleStore(std::move(triples), n, 1);
}

}  // namespace

TEST_CASE("sample_subgraphs slices evenly") {
    const auto store = numbered_store(10);

    const auto halves = sample_subgraphs(store, 2, 5);
    REQUIRE(halves.size() == 2);
    CHECK(halves[0].triples() ==
          std::vector<Triple>(store.triples().begin(), store.triples().begin() + 5));
    CHECK(halves[1].triples() ==
          std::vector<Triple>(store.triples().begin() + 5, store.triples().end()));
    CHECK(halves[0].num_entities() == store.num_entities());
    CHECK(halves[0].num_relations() == store.num_relations());

    const auto full = sample_subgraphs(store, 1, 10);
    CHECK(full[0].triples() == store.triples());
}

TEST_CASE("sample_subgraphs wraps past the end") {
    const auto store = numbered_store(10);
    const auto slices = sample_subgraphs(store, 3, 5);
    REQUIRE(slices.size() == 3);
    // starts at floor(i * 10 / 3) = {0, 3, 6}; the last slice wraps to index 0
    std::vector<Triple> expected;
    for (std::int64_t idx : {6, 7, 8, 9, 0}) expected.push_back(store.triples()[idx]);
    CHECK(slices[2].triples() == expected);
}

TEST_CASE("sample_subgraphs rejects bad arguments") {
    const auto store = numbered_store(10);
    CHECK_THROWS_AS(sample_subgraphs(store, 2, 0), ValidationError);
    CHECK_THROWS_AS(sample_subgraphs(store, 0, 5), ValidationError);
    CHECK_THROWS_AS(sample_subgraphs(store, 2, 11), ValidationError);
}

TEST_CASE("subgraph slices cover every triple when k * slice_len >= n") {
    const auto store = numbered_store(23);
    const auto slices = sample_subgraphs(store, 4, 7);
    std::set<Triple> seen;
    for (const auto& s : slices) seen.insert(s.triples().begin(), s.triples().end());
    CHECK(seen.size() == store.triples().size());
}

TEST_CASE("load_features reads the raw matrix") {
    TempDir tmp;
    const auto path = tmp.path / "f.f32";
    FeatureMatrix m(2, 3);
    for (int i = 0; i < 6; ++i) m.data[i] = static_cast<float>(i);
    save_features(m, path);
    const auto loaded = load_features(path);
    CHECK(loaded == m);
}

TEST_CASE("load_features validates the sidecar") {
    TempDir tmp;
    const auto path = tmp.path / "f.f32";
    const float values[] = {0, 1, 2, 3, 4, 5};
    write_f32_file(path, values, 6);

    CHECK_THROWS_AS(load_features(path), ValidationError);  // missing sidecar

    write_text_file(tmp.path / "f.f32.meta.json", "{\"rows\": 3, \"cols\": 3, \"dtype\": \"f32le\"}\n");
    CHECK_THROWS_WITH_AS(load_features(path), doctest::Contains("size mismatch"), ValidationError);

    write_text_file(tmp.path / "f.f32.meta.json", "{\"rows\": 2, \"cols\": 3, \"dtype\": \"f64le\"}\n");
    CHECK_THROWS_AS(load_features(path), ValidationError);
}

TEST_CASE("load_features rejects non-finite values") {
    TempDir tmp;
    const auto path = tmp.path / "f.f32";
    const float values[] = {0.0f, std::numeric_limits<float>::infinity()};
    write_f32_file(path, values, 2);
    write_text_file(tmp.path / "f.f32.meta.json", "{\"rows\": 1, \"cols\": 2, \"dtype\": \"f32le\"}\n");
    CHECK_THROWS_WITH_AS(load_features(path), doctest::Contains("non-finite"), ValidationError);
}

TEST_CASE("candidate files parse and round-trip") {
    TempDir tmp;
    const auto path = tmp.path / "q.cands";
    write_text_file(path, "0\t0\t5,2,9\t1\n3\t1\t4\t-\n");
    const auto cands = load_candidates(path);
    REQUIRE(cands.size() == 2);
    CHECK(cands[0].head == 0);
    CHECK(cands[0].rel == 0);
    CHECK(cands[0].candidates == std::vector<EntityId>{5, 2, 9});
    CHECK(cands[0].truth_index == 1);
    CHECK_FALSE(cands[1].truth_index.has_value());

    const auto copy = tmp.path / "copy.cands";
    save_candidates(cands, copy);
    CHECK(load_candidates(copy) == cands);
    CHECK(read_text_file(copy) == read_text_file(path));
}

TEST_CASE("candidate files reject bad truth indexes") {
    TempDir tmp;
    const auto path = tmp.path / "q.cands";
    write_text_file(path, "0\t0\t5,2\t2\n");
    CHECK_THROWS_WITH_AS(load_candidates(path), doctest::Contains("truth_index"), ValidationError);
}

TEST_CASE("validate_candidates checks id ranges") {
    CandidateList cands{{0, 0, {1, 2}, 0}};
    CHECK_NOTHROW(validate_candidates(cands, 3, 1));
    CHECK_THROWS_AS(validate_candidates(cands, 2, 1), ValidationError);
    CHECK_THROWS_AS(validate_candidates(cands, 3, 0), ValidationError);
}

TEST_SUITE_END();
