#pragma once

#include "kglp/tensor.hpp"
#include "kglp/triple_store.hpp"
#include "kglp/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace kglp {

// One tail-prediction query with its ranked candidate list. truth_index is
// the position of the true tail within candidates, absent for blind sets.
struct CandidateQuery {
    EntityId head = 0;
    RelationId rel = 0;
    std::vector<EntityId> candidates;
    std::optional<std::int64_t> truth_index;

    friend bool operator==(const CandidateQuery&, const CandidateQuery&) = default;
};

using CandidateList = std::vector<CandidateQuery>;

// Text triples, one per line: "head\trel\ttail" in base-10 with LF endings.
// Entity/relation counts come from "<path>.meta.json" when present
// ({"num_entities": E, "num_relations": R}); otherwise max id + 1 is used.
// Duplicate lines are dropped, keeping the first occurrence.
TripleStore load_triples(const std::filesystem::path& path);

// Writes the triple file plus its count sidecar.
void save_triples(const TripleStore& store, const std::filesystem::path& path);

// Raw little-endian float32, row-major, described by a required
// "<path>.meta.json" sidecar {"rows": R, "cols": C, "dtype": "f32le"}.
// Values must all be finite.
FeatureMatrix load_features(const std::filesystem::path& path);
void save_features(const FeatureMatrix& m, const std::filesystem::path& path);

// Candidate lines: "head\trel\tc1,c2,...,cK\ttruth_index", truth "-" when
// unknown. Candidate lists must be non-empty and truth in range.
CandidateList load_candidates(const std::filesystem::path& path);
void save_candidates(const CandidateList& queries, const std::filesystem::path& path);

// Checks every id against the owning store's counts.
void validate_candidates(const CandidateList& queries, std::int64_t num_entities,
                         std::int64_t num_relations);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

std::vector<float> read_f32_file(const std::filesystem::path& path);
void write_f32_file(const std::filesystem::path& path, const float* data, std::size_t count);

}  // namespace kglp
