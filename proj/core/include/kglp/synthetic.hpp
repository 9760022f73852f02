#pragma once

#include "kglp/io.hpp"
#include "kglp/triple_store.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace kglp {

// Generator spec for a rule-governed benchmark graph. The last
// num_rule_relations relation ids are exact compositions of two base
// relations, so a sound miner recovers them at confidence 1.0 when
// noise_fraction is 0. Entity features are noisy linear images of the latent
// vectors that place the edges, so feature-aware encoders have real signal.
struct SyntheticSpec {
    std::int64_t num_entities = 500;
    std::int64_t num_relations = 8;       // total, including rule relations
    std::int64_t num_rule_relations = 2;  // composition relations at the top ids
    std::vector<std::array<RelationId, 3>> rule_templates;  // {head, body1, body2}; empty = auto
    double noise_fraction = 0.0;          // uniform random extra edges
    std::int64_t feature_dim = 16;
    std::array<double, 3> splits = {0.8, 0.1, 0.1};  // train/valid/test
    std::int64_t num_candidates = 101;    // true tail + distractors
    std::int64_t latent_dim = 8;          // even; complex latents of size latent_dim/2
    double feature_noise = 0.05;
    double head_fraction = 1.0;           // fraction of entities emitting each base relation
    std::int64_t edges_per_head = 1;      // nearest tails kept per (head, base relation)
    // "none": edges use the latents directly, so linear feature readout
    // suffices. "square": edges use the per-coordinate complex square of the
    // latents, so exploiting features requires a nonlinear encoder.
    std::string latent_warp = "none";
    std::uint64_t seed = 1;
};

SyntheticSpec synthetic_spec_from_json(const std::string& json_text);
std::string synthetic_spec_to_json(const SyntheticSpec& spec);

struct SyntheticDataset {
    TripleStore train;
    CandidateList valid;
    CandidateList test;
    FeatureMatrix entity_features;
    FeatureMatrix relation_features;
    std::vector<std::array<RelationId, 3>> planted;  // resolved rule templates
    std::int64_t total_triples = 0;
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

// Writes train.tsv (+ sidecar), valid.cands, test.cands, entity_feat.f32 and
// rel_feat.f32 (+ sidecars), and spec.json into dir.
void write_synthetic(const SyntheticDataset& data, const SyntheticSpec& spec,
                     const std::filesystem::path& dir);

}  // namespace kglp
