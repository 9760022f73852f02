#include "kglp/training.hpp"

#include "kglp/inference.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>

namespace kglp {

namespace {

using nlohmann::json;

struct TensorRef {
    float* data;
    std::size_t len;
    const char* name;
};

struct ConstTensorRef {
    const float* data;
    std::size_t len;
    const char* name;
};

// Fixed walk order shared by the optimizer state and the update loop.
std::vector<TensorRef> dense_refs(ModelParams& m) {
    return {
        {m.entity_encoder.proj.w.data.data(), m.entity_encoder.proj.w.data.size(), "ent_proj_w"},
        {m.entity_encoder.proj.b.data(), m.entity_encoder.proj.b.size(), "ent_proj_b"},
        {m.entity_encoder.mlp.hidden.w.data.data(), m.entity_encoder.mlp.hidden.w.data.size(),
         "ent_mlp_hidden_w"},
        {m.entity_encoder.mlp.hidden.b.data(), m.entity_encoder.mlp.hidden.b.size(),
         "ent_mlp_hidden_b"},
        {m.entity_encoder.mlp.out.w.data.data(), m.entity_encoder.mlp.out.w.data.size(),
         "ent_mlp_out_w"},
        {m.entity_encoder.mlp.out.b.data(), m.entity_encoder.mlp.out.b.size(), "ent_mlp_out_b"},
        {&m.entity_encoder.alpha, 1, "ent_alpha"},
        {m.relation_encoder.proj.w.data.data(), m.relation_encoder.proj.w.data.size(),
         "rel_proj_w"},
        {m.relation_encoder.proj.b.data(), m.relation_encoder.proj.b.size(), "rel_proj_b"},
        {m.relation_encoder.mlp.hidden.w.data.data(), m.relation_encoder.mlp.hidden.w.data.size(),
         "rel_mlp_hidden_w"},
        {m.relation_encoder.mlp.hidden.b.data(), m.relation_encoder.mlp.hidden.b.size(),
         "rel_mlp_hidden_b"},
        {m.relation_encoder.mlp.out.w.data.data(), m.relation_encoder.mlp.out.w.data.size(),
         "rel_mlp_out_w"},
        {m.relation_encoder.mlp.out.b.data(), m.relation_encoder.mlp.out.b.size(),
         "rel_mlp_out_b"},
        {&m.relation_encoder.alpha, 1, "rel_alpha"},
    };
}

std::vector<ConstTensorRef> dense_refs(const ModelGrads& g) {
    return {
        {g.entity.proj.w.data.data(), g.entity.proj.w.data.size(), "ent_proj_w"},
        {g.entity.proj.b.data(), g.entity.proj.b.size(), "ent_proj_b"},
        {g.entity.mlp.hidden.w.data.data(), g.entity.mlp.hidden.w.data.size(),
         "ent_mlp_hidden_w"},
        {g.entity.mlp.hidden.b.data(), g.entity.mlp.hidden.b.size(), "ent_mlp_hidden_b"},
        {g.entity.mlp.out.w.data.data(), g.entity.mlp.out.w.data.size(), "ent_mlp_out_w"},
        {g.entity.mlp.out.b.data(), g.entity.mlp.out.b.size(), "ent_mlp_out_b"},
        {&g.entity.alpha, 1, "ent_alpha"},
        {g.relation.proj.w.data.data(), g.relation.proj.w.data.size(), "rel_proj_w"},
        {g.relation.proj.b.data(), g.relation.proj.b.size(), "rel_proj_b"},
        {g.relation.mlp.hidden.w.data.data(), g.relation.mlp.hidden.w.data.size(),
         "rel_mlp_hidden_w"},
        {g.relation.mlp.hidden.b.data(), g.relation.mlp.hidden.b.size(), "rel_mlp_hidden_b"},
        {g.relation.mlp.out.w.data.data(), g.relation.mlp.out.w.data.size(), "rel_mlp_out_w"},
        {g.relation.mlp.out.b.data(), g.relation.mlp.out.b.size(), "rel_mlp_out_b"},
        {&g.relation.alpha, 1, "rel_alpha"},
    };
}

}  // namespace

TrainConfig train_config_from_json(const std::string& json_text) {
    const json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw ValidationError("train config: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        static const char* allowed[] = {"dim",        "mlp_hidden", "lr_shallow", "lr_dense",
                                        "batch_size", "neg_samples", "workers",   "epochs",
                                        "seed",       "variant",     "decoder",   "eval_every",
                                        "add_inverses", "deterministic"};
        if (std::find_if(std::begin(allowed), std::end(allowed),
                         [&](const char* k) { return key == k; }) == std::end(allowed))
            throw ValidationError("train config: unknown key '" + key + "'");
    }
    TrainConfig c;
    c.dim = j.value("dim", c.dim);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    c.lr_shallow = j.value("lr_shallow", c.lr_shallow);
    c.lr_dense = j.value("lr_dense", c.lr_dense);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.neg_samples = j.value("neg_samples", c.neg_samples);
    c.workers = j.value("workers", c.workers);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    if (j.contains("variant"))
        c.variant = encoder_variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("decoder"))
        c.decoder = decoder_kind_from_string(j.at("decoder").get<std::string>());
    c.eval_every = j.value("eval_every", c.eval_every);
    c.add_inverses = j.value("add_inverses", c.add_inverses);
    c.deterministic = j.value("deterministic", c.deterministic);

    if (c.dim <= 0 || c.dim % 2 != 0) throw ValidationError("train config: dim must be even and > 0");
    if (c.batch_size < 1) throw ValidationError("train config: batch_size must be >= 1");
    if (c.neg_samples < 1) throw ValidationError("train config: neg_samples must be >= 1");
    if (c.epochs < 0) throw ValidationError("train config: epochs must be >= 0");
    if (c.eval_every < 1) throw ValidationError("train config: eval_every must be >= 1");
    if (c.mlp_hidden < 1) throw ValidationError("train config: mlp_hidden must be >= 1");
    return c;
}

std::string train_config_to_json(const TrainConfig& c) {
    json j{{"dim", c.dim},
           {"mlp_hidden", c.mlp_hidden},
           {"lr_shallow", c.lr_shallow},
           {"lr_dense", c.lr_dense},
           {"batch_size", c.batch_size},
           {"neg_samples", c.neg_samples},
           {"workers", c.workers},
           {"epochs", c.epochs},
           {"seed", c.seed},
           {"variant", to_string(c.variant)},
           {"decoder", to_string(c.decoder)},
           {"eval_every", c.eval_every},
           {"add_inverses", c.add_inverses},
           {"deterministic", c.deterministic}};
    return j.dump();
}

OptimizerState make_optimizer_state(const ModelParams& m) {
    OptimizerState s;
    s.entity_accum = Matrix<float>(m.entity_shallow.rows, m.entity_shallow.cols);
    s.relation_accum = Matrix<float>(m.relation_shallow.rows, m.relation_shallow.cols);
    auto refs = dense_refs(const_cast<ModelParams&>(m));
    s.adam_m.resize(refs.size());
    s.adam_v.resize(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
        s.adam_m[i].assign(refs[i].len, 0.0f);
        s.adam_v[i].assign(refs[i].len, 0.0f);
    }
    return s;
}

std::vector<EntityId> sample_negatives(Rng& rng, std::span<const Triple> positives,
                                       std::int64_t n, std::int64_t num_entities) {
    if (n < 1) throw ValidationError("sample_negatives: n must be >= 1");
    if (num_entities <= 0) throw ValidationError("sample_negatives: no entities to sample from");
    std::vector<EntityId> out;
    out.reserve(positives.size() * static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < positives.size(); ++i)
        for (std::int64_t k = 0; k < n; ++k)
            out.push_back(static_cast<EntityId>(rng.below(static_cast<std::uint64_t>(num_entities))));
    return out;
}

LossGrads loss_and_grads(const ModelParams& m, const FeatureMatrix& ent_feat,
                         const FeatureMatrix& rel_feat, std::span<const Triple> positives,
                         std::span<const EntityId> negatives, std::int64_t n) {
    const std::int64_t batch = static_cast<std::int64_t>(positives.size());
    if (negatives.size() != static_cast<std::size_t>(batch * n))
        throw ValidationError("loss_and_grads: negatives length must be batch * n");

    LossGrads result;
    if (batch == 0) {
        result.grads = make_zero_grads(m);
        return result;
    }

    std::vector<Query> queries(static_cast<std::size_t>(batch));
    std::vector<std::vector<EntityId>> cands(static_cast<std::size_t>(batch));
    std::vector<std::vector<float>> score_grads(static_cast<std::size_t>(batch));
    double total_loss = 0.0;

    for (std::int64_t i = 0; i < batch; ++i) {
        const Triple& pos = positives[static_cast<std::size_t>(i)];
        queries[static_cast<std::size_t>(i)] = Query{pos.head, pos.rel};
        auto& c = cands[static_cast<std::size_t>(i)];
        c.reserve(static_cast<std::size_t>(n + 1));
        c.push_back(pos.tail);
        for (std::int64_t k = 0; k < n; ++k)
            c.push_back(negatives[static_cast<std::size_t>(i * n + k)]);

        const auto scores =
            score_candidates<float>(m, ent_feat, rel_feat, queries[static_cast<std::size_t>(i)], c);

        // softmax cross-entropy against class 0 (the true tail), in float64
        double mx = -1e300;
        for (float s : scores) mx = std::max(mx, static_cast<double>(s));
        double z = 0.0;
        for (float s : scores) z += std::exp(static_cast<double>(s) - mx);
        total_loss += std::log(z) - (static_cast<double>(scores[0]) - mx);

        auto& g = score_grads[static_cast<std::size_t>(i)];
        g.resize(scores.size());
        for (std::size_t jj = 0; jj < scores.size(); ++jj) {
            const double p = std::exp(static_cast<double>(scores[jj]) - mx) / z;
            g[jj] = static_cast<float>((p - (jj == 0 ? 1.0 : 0.0)) / static_cast<double>(batch));
        }
    }

    result.loss = total_loss / static_cast<double>(batch);
    result.grads = backward<float>(m, ent_feat, rel_feat, queries, cands, score_grads);
    return result;
}

void apply_update(OptimizerState& state, ModelParams& m, const ModelGrads& grads,
                  double lr_shallow, double lr_dense) {
    state.step += 1;

    const auto adagrad_table = [&](Matrix<float>& table, Matrix<float>& accum,
                                   const std::map<std::int64_t, std::vector<float>>& rows,
                                   const char* name) {
        for (const auto& [id, grad_row] : rows) {
            if (id < 0 || id >= table.rows)
                throw ValidationError(std::string("apply_update: row id out of range in ") + name);
            float* theta = table.row(id);
            float* acc = accum.row(id);
            for (std::int64_t c = 0; c < table.cols; ++c) {
                const float g = grad_row[static_cast<std::size_t>(c)];
                if (!std::isfinite(g))
                    throw RuntimeError(std::string("apply_update: non-finite gradient in ") + name +
                                       " row " + std::to_string(id));
                acc[c] += g * g;
                theta[c] -= static_cast<float>(
                    lr_shallow * static_cast<double>(g) /
                    (std::sqrt(static_cast<double>(acc[c])) + kAdagradEps));
            }
        }
    };
    adagrad_table(m.entity_shallow, state.entity_accum, grads.entity_rows, "entity_shallow");
    adagrad_table(m.relation_shallow, state.relation_accum, grads.relation_rows,
                  "relation_shallow");

    const double bias1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
    auto params = dense_refs(m);
    const auto grad_tensors = dense_refs(grads);
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto& mo = state.adam_m[t];
        auto& vo = state.adam_v[t];
        for (std::size_t i = 0; i < params[t].len; ++i) {
            const float g = grad_tensors[t].data[i];
            if (!std::isfinite(g))
                throw RuntimeError(std::string("apply_update: non-finite gradient in ") +
                                   params[t].name);
            mo[i] = static_cast<float>(kAdamBeta1 * mo[i] + (1.0 - kAdamBeta1) * g);
            vo[i] = static_cast<float>(kAdamBeta2 * vo[i] + (1.0 - kAdamBeta2) * g * g);
            const double mhat = static_cast<double>(mo[i]) / bias1;
            const double vhat = static_cast<double>(vo[i]) / bias2;
            params[t].data[i] -= static_cast<float>(lr_dense * mhat / (std::sqrt(vhat) + kAdamEps));
        }
    }
}

namespace {

double eval_mrr(const ModelParams& m, const FeatureMatrix& ent_feat,
                const FeatureMatrix& rel_feat, const CandidateList& valid, int workers) {
    if (valid.empty()) return 0.0;
    return mrr(predict(m, ent_feat, rel_feat, valid, workers), valid);
}

}  // namespace

TrainResult train(const TripleStore& store, const FeatureMatrix& ent_feat,
                  const FeatureMatrix& rel_feat, const TrainConfig& config,
                  const CandidateList& valid,
                  const std::optional<std::filesystem::path>& out_dir) {
    if (ent_feat.rows != store.num_entities())
        throw ValidationError("train: entity feature rows do not match entity count");
    if (rel_feat.rows != store.num_relations())
        throw ValidationError("train: relation feature rows do not match relation count");
    validate_candidates(valid, store.num_entities(), store.num_relations());

    const TripleStore working = config.add_inverses ? add_inverse_relations(store) : store;

    ModelInit mi;
    mi.variant = config.variant;
    mi.decoder = config.decoder;
    mi.dim = config.dim;
    mi.hidden_dim = config.mlp_hidden;
    mi.num_entities = working.num_entities();
    mi.num_relations = working.num_relations();
    mi.entity_feature_dim = ent_feat.cols;
    mi.relation_feature_dim = rel_feat.cols;

    TrainResult result;
    result.inverses_added = config.add_inverses;
    ModelParams model = init_model(mi, config.seed);
    check_model_features(model, ent_feat, rel_feat);
    OptimizerState state = make_optimizer_state(model);

    const auto& triples = working.triples();
    const std::int64_t n_triples = static_cast<std::int64_t>(triples.size());
    const int eval_workers = std::max(1, config.workers);

    double first_loss = 0.0;
    if (n_triples > 0) {
        const std::int64_t bs = std::min(config.batch_size, n_triples);
        Rng rng0(mix_seed(config.seed, 0x696e69746cULL));
        const std::span<const Triple> batch(triples.data(), static_cast<std::size_t>(bs));
        const auto negs =
            sample_negatives(rng0, batch, config.neg_samples, working.num_entities());
        first_loss = loss_and_grads(model, ent_feat, rel_feat, batch, negs, config.neg_samples).loss;
    }
    double current_mrr = eval_mrr(model, ent_feat, rel_feat, valid, eval_workers);
    result.metrics.push_back(MetricPoint{0, first_loss, current_mrr});
    result.best_model = model;
    result.best_mrr = current_mrr;

    const bool hogwild = !config.deterministic && config.workers > 1;

    std::vector<std::int64_t> order(static_cast<std::size_t>(n_triples));
    std::iota(order.begin(), order.end(), 0);

    std::int64_t step = 0;
    double window_sum = 0.0;
    std::int64_t window_count = 0;

    const auto maybe_keep_best = [&](double mrr_value) {
        if (mrr_value > result.best_mrr) {
            result.best_mrr = mrr_value;
            result.best_model = model;
        }
    };

    std::mutex dense_mutex;

    for (std::int64_t epoch = 0; epoch < config.epochs && n_triples > 0; ++epoch) {
        Rng shuffle_rng(mix_seed(config.seed, 0x73687566ULL, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        std::vector<Triple> shuffled(order.size());
        for (std::size_t i = 0; i < order.size(); ++i)
            shuffled[i] = triples[static_cast<std::size_t>(order[i])];

        const std::int64_t n_batches = (n_triples + config.batch_size - 1) / config.batch_size;
        double epoch_sum = 0.0;

        if (!hogwild) {
            for (std::int64_t b = 0; b < n_batches; ++b) {
                const std::int64_t start = b * config.batch_size;
                const std::int64_t len = std::min(config.batch_size, n_triples - start);
                const std::span<const Triple> batch(shuffled.data() + start,
                                                    static_cast<std::size_t>(len));
                Rng neg_rng(mix_seed(config.seed, 0x6e656773ULL,
                                     static_cast<std::uint64_t>(epoch) * 0x10000ULL +
                                         static_cast<std::uint64_t>(b)));
                const auto negs =
                    sample_negatives(neg_rng, batch, config.neg_samples, working.num_entities());
                const auto lg =
                    loss_and_grads(model, ent_feat, rel_feat, batch, negs, config.neg_samples);
                if (!std::isfinite(lg.loss))
                    throw RuntimeError("train: loss diverged at step " + std::to_string(step + 1));
                apply_update(state, model, lg.grads, config.lr_shallow, config.lr_dense);
                ++step;
                epoch_sum += lg.loss;
                window_sum += lg.loss;
                ++window_count;

                if (step % config.eval_every == 0) {
                    current_mrr = eval_mrr(model, ent_feat, rel_feat, valid, eval_workers);
                    result.metrics.push_back(
                        MetricPoint{step, window_sum / static_cast<double>(window_count),
                                    current_mrr});
                    maybe_keep_best(current_mrr);
                    window_sum = 0.0;
                    window_count = 0;
                }
            }
        } else {
            // Hogwild: batches run concurrently. Shallow rows are updated
            // lock-free (last writer wins per coordinate); dense tensors and
            // the Adam step counter stay behind a mutex.
            std::atomic<bool> failed{false};
            std::vector<double> batch_loss(static_cast<std::size_t>(n_batches), 0.0);
            parallel_for(n_batches, config.workers, [&](std::int64_t b) {
                if (failed.load(std::memory_order_relaxed)) return;
                const std::int64_t start = b * config.batch_size;
                const std::int64_t len = std::min(config.batch_size, n_triples - start);
                const std::span<const Triple> batch(shuffled.data() + start,
                                                    static_cast<std::size_t>(len));
                Rng neg_rng(mix_seed(config.seed, 0x6e656773ULL,
                                     static_cast<std::uint64_t>(epoch) * 0x10000ULL +
                                         static_cast<std::uint64_t>(b)));
                const auto negs =
                    sample_negatives(neg_rng, batch, config.neg_samples, working.num_entities());
                const auto lg =
                    loss_and_grads(model, ent_feat, rel_feat, batch, negs, config.neg_samples);
                if (!std::isfinite(lg.loss)) {
                    failed.store(true, std::memory_order_relaxed);
                    return;
                }
                batch_loss[static_cast<std::size_t>(b)] = lg.loss;

                const auto hogwild_rows = [&](Matrix<float>& table, Matrix<float>& accum,
                                              const std::map<std::int64_t, std::vector<float>>&
                                                  rows) {
                    for (const auto& [id, grad_row] : rows) {
                        float* theta = table.row(id);
                        float* acc = accum.row(id);
                        for (std::int64_t c = 0; c < table.cols; ++c) {
                            const float g = grad_row[static_cast<std::size_t>(c)];
                            std::atomic_ref<float> acc_ref(acc[c]);
                            const float acc_new =
                                acc_ref.fetch_add(g * g, std::memory_order_relaxed) + g * g;
                            const float delta = static_cast<float>(
                                config.lr_shallow * static_cast<double>(g) /
                                (std::sqrt(static_cast<double>(acc_new)) + kAdagradEps));
                            std::atomic_ref<float> theta_ref(theta[c]);
                            theta_ref.fetch_sub(delta, std::memory_order_relaxed);
                        }
                    }
                };
                hogwild_rows(model.entity_shallow, state.entity_accum, lg.grads.entity_rows);
                hogwild_rows(model.relation_shallow, state.relation_accum,
                             lg.grads.relation_rows);

                {
                    std::lock_guard<std::mutex> lock(dense_mutex);
                    state.step += 1;
                    const double bias1 =
                        1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
                    const double bias2 =
                        1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
                    auto params = dense_refs(model);
                    const auto grad_tensors = dense_refs(lg.grads);
                    for (std::size_t t = 0; t < params.size(); ++t) {
                        auto& mo = state.adam_m[t];
                        auto& vo = state.adam_v[t];
                        for (std::size_t i = 0; i < params[t].len; ++i) {
                            const float g = grad_tensors[t].data[i];
                            mo[i] = static_cast<float>(kAdamBeta1 * mo[i] + (1.0 - kAdamBeta1) * g);
                            vo[i] = static_cast<float>(kAdamBeta2 * vo[i] +
                                                       (1.0 - kAdamBeta2) * g * g);
                            const double mhat = static_cast<double>(mo[i]) / bias1;
                            const double vhat = static_cast<double>(vo[i]) / bias2;
                            params[t].data[i] -= static_cast<float>(
                                config.lr_dense * mhat / (std::sqrt(vhat) + kAdamEps));
                        }
                    }
                }
            });
            if (failed.load()) throw RuntimeError("train: loss diverged in hogwild epoch");
            for (double l : batch_loss) epoch_sum += l;
            step += n_batches;
            window_sum += epoch_sum;
            window_count += n_batches;
            current_mrr = eval_mrr(model, ent_feat, rel_feat, valid, eval_workers);
            result.metrics.push_back(MetricPoint{
                step, window_sum / static_cast<double>(window_count), current_mrr});
            maybe_keep_best(current_mrr);
            window_sum = 0.0;
            window_count = 0;
        }

        result.epoch_loss.push_back(
            epoch_sum / static_cast<double>(std::max<std::int64_t>(1, n_batches)));
    }

    if (!hogwild && window_count > 0) {
        current_mrr = eval_mrr(model, ent_feat, rel_feat, valid, eval_workers);
        result.metrics.push_back(
            MetricPoint{step, window_sum / static_cast<double>(window_count), current_mrr});
        maybe_keep_best(current_mrr);
    }

    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        save_checkpoint(result.best_model, train_config_to_json(config), *out_dir);
        std::string lines;
        for (const auto& p : result.metrics) {
            json j{{"step", p.step}, {"loss", p.loss}, {"valid_mrr", p.valid_mrr}};
            lines += j.dump() + "\n";
        }
        write_text_file(*out_dir / "metrics.jsonl", lines);
    }
    return result;
}

}  // namespace kglp
