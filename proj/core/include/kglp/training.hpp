#pragma once

#include "kglp/io.hpp"
#include "kglp/model.hpp"
#include "kglp/triple_store.hpp"
#include "kglp/util.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kglp {

struct TrainConfig {
    std::int64_t dim = 300;
    std::int64_t mlp_hidden = 3000;
    double lr_shallow = 1e-1;
    double lr_dense = 1e-4;
    std::int64_t batch_size = 800;
    std::int64_t neg_samples = 100;
    int workers = 4;
    std::int64_t epochs = 10;
    std::uint64_t seed = 0;
    EncoderVariant variant = EncoderVariant::kConcatMlpResidual;
    DecoderKind decoder = DecoderKind::kComplEx;
    std::int64_t eval_every = 200;
    bool add_inverses = true;
    bool deterministic = true;  // single-writer updates; false enables hogwild workers
};

// Strict parse: unknown keys are rejected.
TrainConfig train_config_from_json(const std::string& json_text);
std::string train_config_to_json(const TrainConfig& c);

// Adagrad accumulators for the shallow tables, Adam moments for every dense
// tensor, and a shared step counter.
struct OptimizerState {
    Matrix<float> entity_accum;
    Matrix<float> relation_accum;
    std::vector<std::vector<float>> adam_m;
    std::vector<std::vector<float>> adam_v;
    std::int64_t step = 0;
};

OptimizerState make_optimizer_state(const ModelParams& m);

inline constexpr double kAdagradEps = 1e-10;
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// n tails per positive, uniform over [0, num_entities) with replacement.
// False negatives are not filtered out.
std::vector<EntityId> sample_negatives(Rng& rng, std::span<const Triple> positives,
                                       std::int64_t n, std::int64_t num_entities);

struct LossGrads {
    double loss = 0.0;
    ModelGrads grads;
};

// Mean softmax cross-entropy where each positive's class set is its true tail
// plus its n sampled negatives.
LossGrads loss_and_grads(const ModelParams& m, const FeatureMatrix& ent_feat,
                         const FeatureMatrix& rel_feat, std::span<const Triple> positives,
                         std::span<const EntityId> negatives, std::int64_t n);

// Shallow rows step by Adagrad at lr_shallow, dense tensors by Adam at
// lr_dense. Rows without gradient entries stay bit-identical. Throws
// RuntimeError on non-finite gradients.
void apply_update(OptimizerState& state, ModelParams& m, const ModelGrads& grads,
                  double lr_shallow, double lr_dense);

struct MetricPoint {
    std::int64_t step = 0;
    double loss = 0.0;
    double valid_mrr = 0.0;
};

struct TrainResult {
    ModelParams best_model;
    double best_mrr = 0.0;
    std::vector<MetricPoint> metrics;
    std::vector<double> epoch_loss;  // mean batch loss per epoch
    bool inverses_added = false;
};

// Full training run: optional inverse augmentation, shuffled mini-batches,
// periodic validation, best-checkpoint retention. Deterministic for a fixed
// seed when config.deterministic is true. When out_dir is given, writes the
// best checkpoint plus metrics.jsonl there.
TrainResult train(const TripleStore& store, const FeatureMatrix& ent_feat,
                  const FeatureMatrix& rel_feat, const TrainConfig& config,
                  const CandidateList& valid,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt);

}  // namespace kglp
