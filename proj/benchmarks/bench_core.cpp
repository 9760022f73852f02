#include "kglp/inference.hpp"
#include "kglp/model.hpp"
#include "kglp/rules.hpp"
#include "kglp/sparse.hpp"
#include "kglp/synthetic.hpp"
#include "kglp/training.hpp"
#include "kglp/util.hpp"

#include <benchmark/benchmark.h>

using namespace kglp;

namespace {

SyntheticDataset bench_dataset() {
    SyntheticSpec spec;
    spec.num_entities = 500;
    spec.num_relations = 6;
    spec.num_rule_relations = 1;
    spec.feature_dim = 16;
    spec.num_candidates = 101;
    spec.latent_dim = 4;
    spec.seed = 99;
    return generate_synthetic(spec);
}

ModelParams bench_model(const SyntheticDataset& data) {
    ModelInit init;
    init.dim = 32;
    init.hidden_dim = 64;
    init.num_entities = 500;
    init.num_relations = 12;  // with inverses
    init.entity_feature_dim = 16;
    init.relation_feature_dim = 16;
    (void)data;
    return init_model(init, 7);
}

void BM_ScoreCandidates(benchmark::State& state) {
    const auto data = bench_dataset();
    const auto model = bench_model(data);
    const auto& q = data.valid.front();
    for (auto _ : state) {
        auto scores = score_candidates<float>(model, data.entity_features,
                                              data.relation_features, Query{q.head, q.rel},
                                              q.candidates);
        benchmark::DoNotOptimize(scores);
    }
    state.SetItemsProcessed(state.iterations() *
                            static_cast<std::int64_t>(q.candidates.size()));
}
BENCHMARK(BM_ScoreCandidates);

void BM_LossAndGrads(benchmark::State& state) {
    const auto data = bench_dataset();
    const auto model = bench_model(data);
    const auto working = add_inverse_relations(data.train);
    const std::int64_t batch = state.range(0);
    const std::span<const Triple> positives(working.triples().data(),
                                            static_cast<std::size_t>(batch));
    Rng rng(3);
    const auto negs = sample_negatives(rng, positives, 16, working.num_entities());
    for (auto _ : state) {
        auto out = loss_and_grads(model, data.entity_features, data.relation_features, positives,
                                  negs, 16);
        benchmark::DoNotOptimize(out.loss);
    }
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_LossAndGrads)->Arg(64)->Arg(256);

void BM_BoolMultiply(benchmark::State& state) {
    Rng rng(17);
    const std::int64_t n = state.range(0);
    std::vector<std::pair<std::int64_t, std::int64_t>> pa, pb;
    for (std::int64_t i = 0; i < 6 * n; ++i) {
        pa.emplace_back(rng.below(n), rng.below(n));
        pb.emplace_back(rng.below(n), rng.below(n));
    }
    const auto a = SparseBoolMatrix::from_pairs(n, n, pa);
    const auto b = SparseBoolMatrix::from_pairs(n, n, pb);
    for (auto _ : state) {
        auto c = bool_multiply(a, b);
        benchmark::DoNotOptimize(c.nnz());
    }
}
BENCHMARK(BM_BoolMultiply)->Arg(500)->Arg(2000);

void BM_MineRules(benchmark::State& state) {
    const auto data = bench_dataset();
    const auto augmented = add_inverse_relations(data.train);
    for (auto _ : state) {
        auto rules = mine_rules(augmented, 2, 0.1);
        benchmark::DoNotOptimize(rules.rules.size());
    }
}
BENCHMARK(BM_MineRules);

void BM_Mrr(benchmark::State& state) {
    Rng rng(23);
    ScoreMatrix scores;
    CandidateList cands;
    for (int q = 0; q < 1000; ++q) {
        std::vector<float> row(101);
        for (auto& v : row) v = static_cast<float>(rng.uniform(-1, 1));
        CandidateQuery query;
        query.head = 0;
        query.rel = 0;
        for (EntityId c = 0; c < 101; ++c) query.candidates.push_back(c);
        query.truth_index = static_cast<std::int64_t>(rng.below(101));
        scores.rows.push_back(std::move(row));
        cands.push_back(std::move(query));
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(mrr(scores, cands));
    }
    state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_Mrr);

void BM_EnsembleAverage(benchmark::State& state) {
    Rng rng(29);
    std::vector<ScoreMatrix> inputs(4);
    for (auto& m : inputs)
        for (int q = 0; q < 500; ++q) {
            std::vector<float> row(101);
            for (auto& v : row) v = static_cast<float>(rng.uniform(-1, 1));
            m.rows.push_back(std::move(row));
        }
    for (auto _ : state) {
        auto mean = ensemble_average(inputs);
        benchmark::DoNotOptimize(mean.rows.front().front());
    }
}
BENCHMARK(BM_EnsembleAverage);

}  // namespace

BENCHMARK_MAIN();
