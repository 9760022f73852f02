#pragma once

#include "kglp/sparse.hpp"
#include "kglp/types.hpp"

#include <vector>

namespace kglp {

// Deduplicated edge list with one adjacency matrix per relation
// (row = head, col = tail). Immutable after construction; reads are safe
// from any number of threads.
class TripleStore {
public:
    TripleStore() = default;

    // Keeps the first occurrence of each duplicate. Every id must lie below
    // the given counts.
    TripleStore(std::vector<Triple> triples, std::int64_t num_entities,
                std::int64_t num_relations);

    const std::vector<Triple>& triples() const { return triples_; }
    std::int64_t size() const { return static_cast<std::int64_t>(triples_.size()); }
    std::int64_t num_entities() const { return num_entities_; }
    std::int64_t num_relations() const { return num_relations_; }

    bool contains(const Triple& t) const;

    const SparseBoolMatrix& relation_matrix(RelationId rel) const;

private:
    std::vector<Triple> triples_;
    std::int64_t num_entities_ = 0;
    std::int64_t num_relations_ = 0;
    std::vector<SparseBoolMatrix> per_relation_;
};

// For every (h, r, t) the result also holds (t, r + R, h); the relation
// count doubles and the inverse of relation r has id r + R.
TripleStore add_inverse_relations(const TripleStore& store);

// k contiguous slices of length slice_len with start offsets floor(i*N/k),
// wrapping past the end of the list. Each slice is an independent store with
// the parent's entity and relation counts.
std::vector<TripleStore> sample_subgraphs(const TripleStore& store, std::int64_t k,
                                          std::int64_t slice_len);

}  // namespace kglp
