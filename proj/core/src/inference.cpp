#include "kglp/inference.hpp"

#include "kglp/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace kglp {

namespace {

using nlohmann::json;

void require_keys(const json& j, std::initializer_list<const char*> allowed,
                  const std::string& context) {
    for (const auto& [key, value] : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* k) { return key == k; }) == allowed.end())
            throw ValidationError(context + ": unknown key '" + key + "'");
    }
}

std::vector<double> softmax_scaled(std::span<const float> logits, double temperature) {
    double mx = -1e300;
    for (float v : logits) mx = std::max(mx, static_cast<double>(v) / temperature);
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(static_cast<double>(logits[i]) / temperature - mx);
        z += p[i];
    }
    for (auto& v : p) v /= z;
    return p;
}

}  // namespace

void save_scores(const ScoreMatrix& scores, const std::filesystem::path& path) {
    std::vector<float> flat;
    json lengths = json::array();
    for (const auto& row : scores.rows) {
        flat.insert(flat.end(), row.begin(), row.end());
        lengths.push_back(row.size());
    }
    write_f32_file(path, flat.data(), flat.size());
    json meta{{"rows", scores.rows.size()}, {"row_lengths", lengths}, {"dtype", "f32le"}};
    write_text_file(std::filesystem::path(path.string() + ".meta.json"), meta.dump() + "\n");
}

ScoreMatrix load_scores(const std::filesystem::path& path) {
    const auto meta_path = std::filesystem::path(path.string() + ".meta.json");
    if (!std::filesystem::exists(meta_path))
        throw ValidationError("missing sidecar " + meta_path.string());
    const json meta = json::parse(read_text_file(meta_path), nullptr, false);
    if (meta.is_discarded()) throw ValidationError("invalid JSON in " + meta_path.string());
    const auto lengths = meta.at("row_lengths").get<std::vector<std::int64_t>>();

    const auto flat = read_f32_file(path);
    std::int64_t total = 0;
    for (auto len : lengths) total += len;
    if (total != static_cast<std::int64_t>(flat.size()))
        throw ValidationError(path.string() + ": row lengths do not match file size");

    ScoreMatrix out;
    std::size_t pos = 0;
    for (auto len : lengths) {
        out.rows.emplace_back(flat.begin() + pos, flat.begin() + pos + len);
        pos += static_cast<std::size_t>(len);
    }
    return out;
}

ScoreMatrix predict(const ModelParams& m, const FeatureMatrix& ent_feat,
                    const FeatureMatrix& rel_feat, const CandidateList& candidates,
                    int workers) {
    check_model_features(m, ent_feat, rel_feat);
    ScoreMatrix out;
    out.rows.resize(candidates.size());
    parallel_for(static_cast<std::int64_t>(candidates.size()), workers, [&](std::int64_t i) {
        const auto& q = candidates[static_cast<std::size_t>(i)];
        out.rows[static_cast<std::size_t>(i)] = score_candidates<float>(
            m, ent_feat, rel_feat, Query{q.head, q.rel}, q.candidates);
    });
    return out;
}

namespace {

void add_rows(ScoreMatrix& acc, const ScoreMatrix& other) {
    for (std::size_t i = 0; i < acc.rows.size(); ++i)
        for (std::size_t j = 0; j < acc.rows[i].size(); ++j)
            acc.rows[i][j] += other.rows[i][j];
}

ScoreMatrix tree_sum(std::span<const ScoreMatrix> inputs) {
    if (inputs.size() == 1) return inputs[0];
    const std::size_t mid = inputs.size() / 2;
    ScoreMatrix left = tree_sum(inputs.subspan(0, mid));
    const ScoreMatrix right = tree_sum(inputs.subspan(mid));
    add_rows(left, right);
    return left;
}

}  // namespace

ScoreMatrix ensemble_average(std::span<const ScoreMatrix> inputs) {
    if (inputs.empty()) throw ValidationError("ensemble_average: no inputs");
    for (const auto& s : inputs) {
        if (s.rows.size() != inputs[0].rows.size())
            throw ValidationError("ensemble_average: query counts differ");
        for (std::size_t i = 0; i < s.rows.size(); ++i)
            if (s.rows[i].size() != inputs[0].rows[i].size())
                throw ValidationError("ensemble_average: row lengths differ");
    }
    ScoreMatrix sum = tree_sum(inputs);
    const float n = static_cast<float>(inputs.size());
    for (auto& row : sum.rows)
        for (auto& v : row) v /= n;
    return sum;
}

double mrr(const ScoreMatrix& scores, const CandidateList& candidates, TieBreak tie) {
    if (scores.rows.size() != candidates.size())
        throw ValidationError("mrr: score rows do not match candidate queries");
    if (candidates.empty()) throw ValidationError("mrr: empty candidate set");

    double total = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& q = candidates[i];
        const auto& row = scores.rows[i];
        if (!q.truth_index) throw ValidationError("mrr: query " + std::to_string(i) + " lacks truth");
        if (row.size() != q.candidates.size())
            throw ValidationError("mrr: row length mismatch at query " + std::to_string(i));
        const float truth_score = row[static_cast<std::size_t>(*q.truth_index)];
        std::int64_t above = 0;
        std::int64_t tied = 0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j == static_cast<std::size_t>(*q.truth_index)) continue;
            if (row[j] > truth_score) ++above;
            else if (row[j] == truth_score) ++tied;
        }
        const double rank = tie == TieBreak::kOptimistic
                                ? static_cast<double>(1 + above)
                                : 1.0 + static_cast<double>(above) + static_cast<double>(tied) / 2.0;
        total += 1.0 / rank;
    }
    return total / static_cast<double>(candidates.size());
}

DistillConfig distill_config_from_json(const std::string& json_text) {
    const json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw ValidationError("distill config: expected a JSON object");
    require_keys(j, {"temperature", "steps", "lr_shallow", "lr_dense", "stages", "batch_size",
                     "seed"},
                 "distill config");
    DistillConfig c;
    c.temperature = j.value("temperature", c.temperature);
    c.steps = j.value("steps", c.steps);
    c.lr_shallow = j.value("lr_shallow", c.lr_shallow);
    c.lr_dense = j.value("lr_dense", c.lr_dense);
    c.stages = j.value("stages", c.stages);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    if (c.temperature <= 0.0) throw ValidationError("distill config: temperature must be > 0");
    if (c.stages < 0) throw ValidationError("distill config: stages must be >= 0");
    if (c.steps < 0) throw ValidationError("distill config: steps must be >= 0");
    if (c.batch_size < 1) throw ValidationError("distill config: batch_size must be >= 1");
    return c;
}

std::string distill_config_to_json(const DistillConfig& c) {
    json j{{"temperature", c.temperature}, {"steps", c.steps},   {"lr_shallow", c.lr_shallow},
           {"lr_dense", c.lr_dense},       {"stages", c.stages}, {"batch_size", c.batch_size},
           {"seed", c.seed}};
    return j.dump();
}

DistillResult distill(const ModelParams& student, const ScoreMatrix& teacher,
                      const CandidateList& candidates, const FeatureMatrix& ent_feat,
                      const FeatureMatrix& rel_feat, const DistillConfig& config) {
    if (config.temperature <= 0.0) throw ValidationError("distill: temperature must be > 0");
    if (teacher.rows.size() != candidates.size())
        throw ValidationError("distill: teacher rows do not match candidates");
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (teacher.rows[i].size() != candidates[i].candidates.size())
            throw ValidationError("distill: teacher row length mismatch");

    DistillResult result;
    result.model = student;
    if (candidates.empty() || config.steps == 0) return result;

    // Teacher distributions are fixed across steps.
    std::vector<std::vector<double>> teacher_p(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i)
        teacher_p[i] = softmax_scaled(teacher.rows[i], config.temperature);

    OptimizerState state = make_optimizer_state(result.model);
    Rng order_rng(mix_seed(config.seed, 0x64697374ULL));
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order);

    const std::int64_t batch = std::min<std::int64_t>(config.batch_size,
                                                      static_cast<std::int64_t>(order.size()));
    std::size_t cursor = 0;
    for (std::int64_t step = 0; step < config.steps; ++step) {
        std::vector<Query> queries;
        std::vector<std::vector<EntityId>> cands;
        std::vector<std::vector<float>> grads;
        queries.reserve(static_cast<std::size_t>(batch));
        double loss = 0.0;

        for (std::int64_t b = 0; b < batch; ++b) {
            const std::size_t qi = order[cursor];
            cursor = (cursor + 1) % order.size();
            const auto& q = candidates[qi];
            const auto student_scores = score_candidates<float>(
                result.model, ent_feat, rel_feat, Query{q.head, q.rel}, q.candidates);
            const auto student_p = softmax_scaled(student_scores, config.temperature);
            const auto& p = teacher_p[qi];

            double kl = 0.0;
            std::vector<float> g(student_scores.size());
            for (std::size_t j = 0; j < g.size(); ++j) {
                if (p[j] > 0.0) kl += p[j] * (std::log(p[j]) - std::log(student_p[j]));
                g[j] = static_cast<float>((student_p[j] - p[j]) /
                                          (config.temperature * static_cast<double>(batch)));
            }
            loss += kl;
            queries.push_back(Query{q.head, q.rel});
            cands.push_back(q.candidates);
            grads.push_back(std::move(g));
        }
        loss /= static_cast<double>(batch);
        if (!std::isfinite(loss))
            throw RuntimeError("distill: non-finite loss at step " + std::to_string(step));
        result.step_loss.push_back(loss);

        const auto model_grads =
            backward<float>(result.model, ent_feat, rel_feat, queries, cands, grads);
        apply_update(state, result.model, model_grads, config.lr_shallow, config.lr_dense);
    }
    return result;
}

namespace {

// New triples implied by the rules, closed under the inverse pairing so the
// finetune stage trains both directions of every derived edge.
std::vector<Triple> rule_delta(const TripleStore& augmented_base, const RuleSet& rules,
                               double threshold) {
    const std::int64_t half = augmented_base.num_relations() / 2;
    std::set<Triple> fresh;
    for (const HornRule& rule : rules.rules) {
        if (rule.confidence < threshold) continue;
        for (const Triple& t : apply_rule(rule, augmented_base)) {
            fresh.insert(t);
            const RelationId inv = t.rel < half ? t.rel + half : t.rel - half;
            const Triple mirror{t.tail, inv, t.head};
            if (!augmented_base.contains(mirror)) fresh.insert(mirror);
        }
    }
    return {fresh.begin(), fresh.end()};
}

}  // namespace

PipelineResult run_pipeline(const std::vector<ModelParams>& models, const RuleSet& rules,
                            const TripleStore& store, const FeatureMatrix& ent_feat,
                            const FeatureMatrix& rel_feat, const CandidateList& valid,
                            const CandidateList& test, const PipelineConfig& config) {
    if (models.empty()) throw ValidationError("run_pipeline: need at least one model");
    if (valid.empty()) throw ValidationError("run_pipeline: valid set must be non-empty");
    validate_candidates(valid, store.num_entities(), store.num_relations());
    validate_candidates(test, store.num_entities(), store.num_relations());

    // Models trained with inverse relations carry 2R shallow rows; the
    // augmented graph must match what each model saw in training.
    const bool with_inverses = models[0].num_relations() == 2 * store.num_relations();
    for (const auto& m : models) {
        const bool mi = m.num_relations() == 2 * store.num_relations();
        const bool plain = m.num_relations() == store.num_relations();
        if (!mi && !plain) throw ValidationError("run_pipeline: model relation count mismatch");
        if (mi != with_inverses)
            throw ValidationError("run_pipeline: models disagree on inverse augmentation");
    }

    PipelineResult result;
    result.models = models;

    // Stage 0: rule augmentation + finetune on the delta.
    const TripleStore working = with_inverses ? add_inverse_relations(store) : store;
    std::vector<Triple> delta;
    if (!rules.rules.empty()) {
        if (with_inverses) {
            delta = rule_delta(working, rules, config.rule_threshold);
        } else {
            const AugmentResult aug = augment(working, rules, config.rule_threshold);
            std::set<Triple> base(working.triples().begin(), working.triples().end());
            for (const Triple& t : aug.store.triples())
                if (!base.contains(t)) delta.push_back(t);
        }
    }
    result.added_triples = static_cast<std::int64_t>(delta.size());

    const int model_workers = std::min<int>(config.workers, static_cast<int>(models.size()));
    std::vector<ScoreMatrix> valid_scores(models.size());
    std::vector<ScoreMatrix> test_scores(models.size());

    parallel_for(static_cast<std::int64_t>(models.size()), model_workers, [&](std::int64_t i) {
        auto& model = result.models[static_cast<std::size_t>(i)];
        if (!delta.empty() && config.finetune.epochs > 0) {
            OptimizerState state = make_optimizer_state(model);
            Rng rng(mix_seed(config.seed, 0xf17e, static_cast<std::uint64_t>(i)));
            std::vector<Triple> batch_pool = delta;
            for (std::int64_t epoch = 0; epoch < config.finetune.epochs; ++epoch) {
                rng.shuffle(batch_pool);
                for (std::size_t start = 0; start < batch_pool.size();
                     start += static_cast<std::size_t>(config.finetune.batch_size)) {
                    const std::size_t len = std::min<std::size_t>(
                        static_cast<std::size_t>(config.finetune.batch_size),
                        batch_pool.size() - start);
                    const std::span<const Triple> batch(batch_pool.data() + start, len);
                    const auto negs = sample_negatives(rng, batch, config.finetune.neg_samples,
                                                       working.num_entities());
                    const auto lg = loss_and_grads(model, ent_feat, rel_feat, batch, negs,
                                                   config.finetune.neg_samples);
                    if (!std::isfinite(lg.loss)) throw RuntimeError("finetune diverged");
                    apply_update(state, model, lg.grads, config.finetune.lr_shallow,
                                 config.finetune.lr_dense);
                }
            }
        }
        valid_scores[static_cast<std::size_t>(i)] = predict(model, ent_feat, rel_feat, valid, 1);
        test_scores[static_cast<std::size_t>(i)] = predict(model, ent_feat, rel_feat, test, 1);
    });

    ScoreMatrix valid_ensemble = ensemble_average(valid_scores);
    ScoreMatrix test_ensemble =
        test.empty() ? ScoreMatrix{} : ensemble_average(test_scores);

    const auto record_stage = [&](std::int64_t stage,
                                  const std::vector<ScoreMatrix>& singles,
                                  const ScoreMatrix& ensemble) {
        StageReport report;
        report.stage = stage;
        double sum = 0.0;
        double best = 0.0;
        for (const auto& s : singles) {
            const double v = mrr(s, valid);
            report.single_mrr.push_back(v);
            sum += v;
            best = std::max(best, v);
        }
        report.single_mrr_mean = sum / static_cast<double>(singles.size());
        report.single_mrr_best = best;
        report.ensemble_mrr = mrr(ensemble, valid);
        result.stages.push_back(std::move(report));
    };
    record_stage(0, valid_scores, valid_ensemble);

    // Distillation queries cover everything scored at inference time.
    CandidateList distill_set = valid;
    distill_set.insert(distill_set.end(), test.begin(), test.end());

    for (std::int64_t stage = 1; stage <= config.stages; ++stage) {
        ScoreMatrix teacher = valid_ensemble;
        teacher.rows.insert(teacher.rows.end(), test_ensemble.rows.begin(),
                            test_ensemble.rows.end());

        parallel_for(static_cast<std::int64_t>(models.size()), model_workers,
                     [&](std::int64_t i) {
                         DistillConfig dc = config.distill;
                         dc.seed = mix_seed(config.seed, 0xd157 + static_cast<std::uint64_t>(stage),
                                            static_cast<std::uint64_t>(i));
                         auto out = distill(result.models[static_cast<std::size_t>(i)], teacher,
                                            distill_set, ent_feat, rel_feat, dc);
                         result.models[static_cast<std::size_t>(i)] = std::move(out.model);
                         valid_scores[static_cast<std::size_t>(i)] =
                             predict(result.models[static_cast<std::size_t>(i)], ent_feat,
                                     rel_feat, valid, 1);
                         test_scores[static_cast<std::size_t>(i)] =
                             predict(result.models[static_cast<std::size_t>(i)], ent_feat,
                                     rel_feat, test, 1);
                     });

        valid_ensemble = ensemble_average(valid_scores);
        if (!test.empty()) test_ensemble = ensemble_average(test_scores);
        record_stage(stage, valid_scores, valid_ensemble);
    }

    result.final_scores = test.empty() ? valid_ensemble : test_ensemble;
    return result;
}

std::string report_to_json(const PipelineResult& result) {
    json stages = json::array();
    for (const auto& s : result.stages) {
        stages.push_back(json{{"stage", s.stage},
                              {"single_mrr", s.single_mrr},
                              {"single_mrr_mean", s.single_mrr_mean},
                              {"single_mrr_best", s.single_mrr_best},
                              {"ensemble_mrr", s.ensemble_mrr}});
    }
    json j{{"added_triples", result.added_triples}, {"stages", stages}};
    return j.dump(2) + "\n";
}

}  // namespace kglp
