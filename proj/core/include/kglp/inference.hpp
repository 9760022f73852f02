#pragma once

#include "kglp/io.hpp"
#include "kglp/model.hpp"
#include "kglp/rules.hpp"
#include "kglp/training.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace kglp {

// Per-query score rows aligned with a CandidateList (ragged rows allowed).
struct ScoreMatrix {
    std::vector<std::vector<float>> rows;

    std::int64_t num_queries() const { return static_cast<std::int64_t>(rows.size()); }
    friend bool operator==(const ScoreMatrix&, const ScoreMatrix&) = default;
};

// Raw f32 values with a "<path>.meta.json" sidecar carrying the ragged row
// lengths.
void save_scores(const ScoreMatrix& scores, const std::filesystem::path& path);
ScoreMatrix load_scores(const std::filesystem::path& path);

// One row of decoder scores per query; rows computed independently, so the
// result is identical for any worker count.
ScoreMatrix predict(const ModelParams& m, const FeatureMatrix& ent_feat,
                    const FeatureMatrix& rel_feat, const CandidateList& candidates,
                    int workers = 1);

// Elementwise mean with a fixed pairwise summation tree.
ScoreMatrix ensemble_average(std::span<const ScoreMatrix> inputs);

enum class TieBreak { kOptimistic, kAverage };

// Mean reciprocal rank of the truth candidate. kOptimistic resolves score
// ties in favor of the truth; kAverage assigns tied entries their mean rank.
double mrr(const ScoreMatrix& scores, const CandidateList& candidates,
           TieBreak tie = TieBreak::kOptimistic);

struct DistillConfig {
    double temperature = 1.0;
    std::int64_t steps = 100;
    double lr_shallow = 1e-1;
    double lr_dense = 1e-4;
    std::int64_t stages = 3;
    std::int64_t batch_size = 256;
    std::uint64_t seed = 0;
};

DistillConfig distill_config_from_json(const std::string& json_text);
std::string distill_config_to_json(const DistillConfig& c);

struct DistillResult {
    ModelParams model;
    std::vector<double> step_loss;  // mean KL per step
};

// Optimizer steps on KL(softmax(teacher/T) || softmax(student/T)) averaged
// over the queries of each mini-batch. Truth labels are not used.
DistillResult distill(const ModelParams& student, const ScoreMatrix& teacher,
                      const CandidateList& candidates, const FeatureMatrix& ent_feat,
                      const FeatureMatrix& rel_feat, const DistillConfig& config);

struct FinetuneConfig {
    std::int64_t epochs = 1;
    std::int64_t batch_size = 256;
    std::int64_t neg_samples = 16;
    double lr_shallow = 1e-1;
    double lr_dense = 1e-4;
};

struct PipelineConfig {
    FinetuneConfig finetune;
    DistillConfig distill;
    double rule_threshold = 0.95;
    std::int64_t stages = 3;
    std::uint64_t seed = 0;
    int workers = 4;
};

struct StageReport {
    std::int64_t stage = 0;
    std::vector<double> single_mrr;
    double single_mrr_mean = 0.0;
    double single_mrr_best = 0.0;
    double ensemble_mrr = 0.0;
};

struct PipelineResult {
    std::vector<StageReport> stages;  // stages.size() == config.stages + 1
    std::int64_t added_triples = 0;
    ScoreMatrix final_scores;  // last-stage ensemble on the test set (valid if empty)
    std::vector<ModelParams> models;
};

// Stage 0: rule-augment the training graph, briefly finetune every model on
// the new triples, predict and ensemble. Stages 1..K: distill the previous
// ensemble into each model on the valid+test queries, predict, ensemble.
// Reported MRR always comes from the valid set.
PipelineResult run_pipeline(const std::vector<ModelParams>& models, const RuleSet& rules,
                            const TripleStore& store, const FeatureMatrix& ent_feat,
                            const FeatureMatrix& rel_feat, const CandidateList& valid,
                            const CandidateList& test, const PipelineConfig& config);

std::string report_to_json(const PipelineResult& result);

}  // namespace kglp
