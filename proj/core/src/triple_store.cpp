#include "kglp/triple_store.hpp"

#include <algorithm>
#include <set>
#include <string>

namespace kglp {

TripleStore::TripleStore(std::vector<Triple> triples, std::int64_t num_entities,
                         std::int64_t num_relations)
    : num_entities_(num_entities), num_relations_(num_relations) {
    if (num_entities < 0 || num_relations < 0)
        throw ValidationError("TripleStore: negative entity or relation count");

    triples_.reserve(triples.size());
    std::set<Triple> seen;
    for (const Triple& t : triples) {
        if (t.head < 0 || t.head >= num_entities_ || t.tail < 0 || t.tail >= num_entities_)
            throw ValidationError("TripleStore: entity id out of range: (" +
                                  std::to_string(t.head) + ", " + std::to_string(t.rel) + ", " +
                                  std::to_string(t.tail) + ")");
        if (t.rel < 0 || t.rel >= num_relations_)
            throw ValidationError("TripleStore: relation id out of range: " +
                                  std::to_string(t.rel));
        if (seen.insert(t).second) triples_.push_back(t);
    }

    std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> pairs(
        static_cast<std::size_t>(num_relations_));
    for (const Triple& t : triples_)
        pairs[static_cast<std::size_t>(t.rel)].emplace_back(t.head, t.tail);
    per_relation_.reserve(pairs.size());
    for (auto& p : pairs)
        per_relation_.push_back(
            SparseBoolMatrix::from_pairs(num_entities_, num_entities_, std::move(p)));
}

bool TripleStore::contains(const Triple& t) const {
    if (t.rel < 0 || t.rel >= num_relations_) return false;
    return per_relation_[static_cast<std::size_t>(t.rel)].contains(t.head, t.tail);
}

const SparseBoolMatrix& TripleStore::relation_matrix(RelationId rel) const {
    if (rel < 0 || rel >= num_relations_)
        throw ValidationError("relation_matrix: invalid relation id " + std::to_string(rel));
    return per_relation_[static_cast<std::size_t>(rel)];
}

TripleStore add_inverse_relations(const TripleStore& store) {
    const std::int64_t r_count = store.num_relations();
    std::vector<Triple> out;
    out.reserve(store.triples().size() * 2);
    out.insert(out.end(), store.triples().begin(), store.triples().end());
    for (const Triple& t : store.triples())
        out.push_back(Triple{t.tail, t.rel + r_count, t.head});
    return TripleStore(std::move(out), store.num_entities(), r_count * 2);
}

std::vector<TripleStore> sample_subgraphs(const TripleStore& store, std::int64_t k,
                                          std::int64_t slice_len) {
    const std::int64_t n = store.size();
    if (k < 1) throw ValidationError("sample_subgraphs: k must be >= 1");
    if (slice_len < 1) throw ValidationError("sample_subgraphs: slice_len must be >= 1");
    if (slice_len > n) throw ValidationError("sample_subgraphs: slice_len exceeds triple count");

    std::vector<TripleStore> out;
    out.reserve(static_cast<std::size_t>(k));
    for (std::int64_t i = 0; i < k; ++i) {
        const std::int64_t start = (i * n) / k;
        std::vector<Triple> slice;
        slice.reserve(static_cast<std::size_t>(slice_len));
        for (std::int64_t j = 0; j < slice_len; ++j)
            slice.push_back(store.triples()[static_cast<std::size_t>((start + j) % n)]);
        out.emplace_back(std::move(slice), store.num_entities(), store.num_relations());
    }
    return out;
}

}  // namespace kglp
