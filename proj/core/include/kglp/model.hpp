#pragma once

#include "kglp/tensor.hpp"
#include "kglp/types.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace kglp {

// The four fusion encoders. All combine a fixed feature vector with a
// trainable shallow embedding; they differ in how the two are mixed.
enum class EncoderVariant {
    kConcat,                      // e = Linear([feat; shallow])
    kConcatMlp,                   // e = MLP([Linear(feat); shallow])
    kConcatMlpResidualUnweighted, // e = MLP([Linear(feat); shallow]) + shallow
    kConcatMlpResidual,           // e = MLP([Linear(feat); shallow]) + alpha * shallow
};

enum class DecoderKind { kComplEx, kDistMult };

std::string to_string(EncoderVariant v);
std::string to_string(DecoderKind d);
EncoderVariant encoder_variant_from_string(const std::string& s);
DecoderKind decoder_kind_from_string(const std::string& s);

template <typename T>
struct LinearT {
    Matrix<T> w;       // out x in
    std::vector<T> b;  // out
};

// One hidden layer with ReLU, linear output.
template <typename T>
struct MlpT {
    LinearT<T> hidden;  // 2d -> hidden
    LinearT<T> out;     // hidden -> d
};

template <typename T>
struct EncoderParamsT {
    LinearT<T> proj;  // feature projection; for kConcat it maps [feat; shallow] directly to d
    MlpT<T> mlp;      // unused by kConcat
    T alpha = T(1);   // residual weight, trained only by kConcatMlpResidual
};

// Full scoring model: independent encoder parameter sets for entities and
// relations, one shallow row per entity/relation, and a decoder choice.
// Inverse relations own fresh shallow rows but share the base relation's
// feature row (see relation_feature_row).
template <typename T>
struct ModelParamsT {
    EncoderVariant variant = EncoderVariant::kConcatMlpResidual;
    DecoderKind decoder = DecoderKind::kComplEx;
    std::int64_t dim = 0;  // embedding size d, even
    std::int64_t hidden_dim = 0;
    std::int64_t entity_feature_dim = 0;
    std::int64_t relation_feature_dim = 0;
    EncoderParamsT<T> entity_encoder;
    EncoderParamsT<T> relation_encoder;
    Matrix<T> entity_shallow;    // num_entities x d
    Matrix<T> relation_shallow;  // num_relations x d

    std::int64_t num_entities() const { return entity_shallow.rows; }
    std::int64_t num_relations() const { return relation_shallow.rows; }
};

using ModelParams = ModelParamsT<float>;

struct Query {
    EntityId head = 0;
    RelationId rel = 0;
};

template <typename T>
struct EncoderGradT {
    LinearT<T> proj;
    MlpT<T> mlp;
    T alpha = T(0);
};

// Dense gradients plus sparse per-row shallow gradients. Maps are ordered so
// update application walks rows in a fixed order.
template <typename T>
struct ModelGradT {
    EncoderGradT<T> entity;
    EncoderGradT<T> relation;
    std::map<EntityId, std::vector<T>> entity_rows;
    std::map<RelationId, std::vector<T>> relation_rows;
};

using ModelGrads = ModelGradT<float>;

struct ModelInit {
    EncoderVariant variant = EncoderVariant::kConcatMlpResidual;
    DecoderKind decoder = DecoderKind::kComplEx;
    std::int64_t dim = 32;
    std::int64_t hidden_dim = 64;
    std::int64_t num_entities = 0;
    std::int64_t num_relations = 0;
    std::int64_t entity_feature_dim = 0;
    std::int64_t relation_feature_dim = 0;
};

// Shallow rows uniform in (-1/sqrt(d), 1/sqrt(d)); weights Glorot-uniform;
// biases zero; alpha = 1.
ModelParams init_model(const ModelInit& init, std::uint64_t seed);

template <typename To, typename From>
ModelParamsT<To> cast_model(const ModelParamsT<From>& m);

// Intermediate activations kept for the backward pass.
template <typename T>
struct EncodeCache {
    std::vector<T> concat;      // [Linear(feat); shallow], or [feat; shallow] for kConcat
    std::vector<T> hidden_pre;  // MLP hidden pre-activation
    std::vector<T> hidden_act;  // ReLU output
};

template <typename T>
void encode(const EncoderParamsT<T>& p, EncoderVariant variant, std::span<const T> feat,
            std::span<const T> shallow, std::vector<T>& out, EncodeCache<T>* cache = nullptr);

// Accumulates parameter gradients and the gradient on the shallow row for one
// encoded vector, given the gradient on the encoder output.
template <typename T>
void encode_backward(const EncoderParamsT<T>& p, EncoderVariant variant, std::span<const T> feat,
                     std::span<const T> shallow, const EncodeCache<T>& cache,
                     std::span<const T> grad_out, EncoderGradT<T>& grads, T* shallow_grad);

// Treats each vector as d/2 complex numbers (first half real, second half
// imaginary) and returns Re<h, r, conj(t)>.
template <typename T>
T score_complex(std::span<const T> h, std::span<const T> r, std::span<const T> t);

// Plain trilinear product sum_k h_k r_k t_k.
template <typename T>
T score_distmult(std::span<const T> h, std::span<const T> r, std::span<const T> t);

template <typename T>
T decoder_score(DecoderKind kind, std::span<const T> h, std::span<const T> r,
                std::span<const T> t);

// Accumulates g * d(score)/d(h|r|t) into the three gradient buffers.
template <typename T>
void decoder_backward(DecoderKind kind, std::span<const T> h, std::span<const T> r,
                      std::span<const T> t, T g, T* gh, T* gr, T* gt);

// Feature row for a relation id. When the table holds only base relations
// (model num_relations == 2 * rows), inverse ids map onto their base row.
template <typename T>
const T* relation_feature_row(const Matrix<T>& rel_feat, RelationId r);

// Shape compatibility between a model and a feature pair.
template <typename T>
void check_model_features(const ModelParamsT<T>& m, const Matrix<T>& ent_feat,
                          const Matrix<T>& rel_feat);

// Decoder scores for each candidate tail; the head and relation are encoded
// once and the result is bit-identical to encode+score per candidate.
template <typename T>
std::vector<T> score_candidates(const ModelParamsT<T>& m, const Matrix<T>& ent_feat,
                                const Matrix<T>& rel_feat, Query q,
                                std::span<const EntityId> candidates);

// Gradients of sum_q <scores_q, score_grads_q> for every parameter reached in
// the forward pass; untouched shallow rows are absent from the maps.
template <typename T>
ModelGradT<T> backward(const ModelParamsT<T>& m, const Matrix<T>& ent_feat,
                       const Matrix<T>& rel_feat, std::span<const Query> queries,
                       const std::vector<std::vector<EntityId>>& candidates,
                       const std::vector<std::vector<T>>& score_grads);

template <typename T>
ModelGradT<T> make_zero_grads(const ModelParamsT<T>& m);

// Central finite differences on a float64 shadow of the model against the
// analytic backward pass. Perturbs every parameter coordinate, or a random
// subsample of max_coords (>= 200 enforced) when max_coords > 0. Returns the
// max of |analytic - numeric| / max(1, |analytic|, |numeric|).
double grad_check(const ModelParams& m, const FeatureMatrix& ent_feat,
                  const FeatureMatrix& rel_feat, std::span<const Query> queries,
                  const std::vector<std::vector<EntityId>>& candidates, double epsilon,
                  std::int64_t max_coords, std::uint64_t seed);

// Checkpoint directory: one raw f32 tensor per parameter plus model.json.
// train_config_json must be a serialized JSON object (may be "{}").
void save_checkpoint(const ModelParams& m, const std::string& train_config_json,
                     const std::filesystem::path& dir);

struct Checkpoint {
    ModelParams model;
    std::string train_config_json;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

// ---- template definitions ----

template <typename T>
void encode(const EncoderParamsT<T>& p, EncoderVariant variant, std::span<const T> feat,
            std::span<const T> shallow, std::vector<T>& out, EncodeCache<T>* cache) {
    const std::int64_t d = static_cast<std::int64_t>(shallow.size());

    if (variant == EncoderVariant::kConcat) {
        if (p.proj.w.cols != static_cast<std::int64_t>(feat.size()) + d ||
            p.proj.w.rows != d)
            throw ValidationError("encode: projection shape does not match [feat; shallow]");
        std::vector<T> concat;
        concat.reserve(feat.size() + shallow.size());
        concat.insert(concat.end(), feat.begin(), feat.end());
        concat.insert(concat.end(), shallow.begin(), shallow.end());
        out.assign(static_cast<std::size_t>(d), T(0));
        affine(p.proj.w, p.proj.b, concat.data(), out.data());
        if (cache) cache->concat = std::move(concat);
        return;
    }

    if (p.proj.w.cols != static_cast<std::int64_t>(feat.size()) || p.proj.w.rows != d)
        throw ValidationError("encode: projection shape does not match feature dim");
    if (p.mlp.hidden.w.cols != 2 * d || p.mlp.out.w.rows != d)
        throw ValidationError("encode: MLP shape does not match embedding dim");

    std::vector<T> concat(static_cast<std::size_t>(2 * d));
    affine(p.proj.w, p.proj.b, feat.data(), concat.data());
    for (std::int64_t i = 0; i < d; ++i) concat[static_cast<std::size_t>(d + i)] = shallow[i];

    const std::int64_t hidden = p.mlp.hidden.w.rows;
    std::vector<T> hidden_pre(static_cast<std::size_t>(hidden));
    affine(p.mlp.hidden.w, p.mlp.hidden.b, concat.data(), hidden_pre.data());
    std::vector<T> hidden_act(hidden_pre);
    for (auto& v : hidden_act)
        if (v < T(0)) v = T(0);

    out.assign(static_cast<std::size_t>(d), T(0));
    affine(p.mlp.out.w, p.mlp.out.b, hidden_act.data(), out.data());

    if (variant == EncoderVariant::kConcatMlpResidualUnweighted) {
        for (std::int64_t i = 0; i < d; ++i) out[static_cast<std::size_t>(i)] += shallow[i];
    } else if (variant == EncoderVariant::kConcatMlpResidual) {
        for (std::int64_t i = 0; i < d; ++i)
            out[static_cast<std::size_t>(i)] += p.alpha * shallow[i];
    }

    if (cache) {
        cache->concat = std::move(concat);
        cache->hidden_pre = std::move(hidden_pre);
        cache->hidden_act = std::move(hidden_act);
    }
}

template <typename T>
void encode_backward(const EncoderParamsT<T>& p, EncoderVariant variant, std::span<const T> feat,
                     std::span<const T> shallow, const EncodeCache<T>& cache,
                     std::span<const T> grad_out, EncoderGradT<T>& grads, T* shallow_grad) {
    const std::int64_t d = static_cast<std::int64_t>(shallow.size());

    if (variant == EncoderVariant::kConcat) {
        add_outer(grads.proj.w, grad_out.data(), cache.concat.data());
        for (std::int64_t i = 0; i < d; ++i) grads.proj.b[static_cast<std::size_t>(i)] += grad_out[i];
        std::vector<T> g_in(cache.concat.size(), T(0));
        add_matvec_transposed(p.proj.w, grad_out.data(), g_in.data());
        const std::size_t f = feat.size();
        for (std::int64_t i = 0; i < d; ++i) shallow_grad[i] += g_in[f + static_cast<std::size_t>(i)];
        return;
    }

    if (variant == EncoderVariant::kConcatMlpResidual) {
        grads.alpha += dot(grad_out.data(), shallow.data(), d);
        axpy(p.alpha, grad_out.data(), shallow_grad, d);
    } else if (variant == EncoderVariant::kConcatMlpResidualUnweighted) {
        axpy(T(1), grad_out.data(), shallow_grad, d);
    }

    // output layer
    add_outer(grads.mlp.out.w, grad_out.data(), cache.hidden_act.data());
    for (std::int64_t i = 0; i < d; ++i) grads.mlp.out.b[static_cast<std::size_t>(i)] += grad_out[i];

    const std::int64_t hidden = p.mlp.hidden.w.rows;
    std::vector<T> g_hidden(static_cast<std::size_t>(hidden), T(0));
    add_matvec_transposed(p.mlp.out.w, grad_out.data(), g_hidden.data());
    for (std::int64_t i = 0; i < hidden; ++i)
        if (cache.hidden_pre[static_cast<std::size_t>(i)] <= T(0))
            g_hidden[static_cast<std::size_t>(i)] = T(0);

    // hidden layer
    add_outer(grads.mlp.hidden.w, g_hidden.data(), cache.concat.data());
    for (std::int64_t i = 0; i < hidden; ++i)
        grads.mlp.hidden.b[static_cast<std::size_t>(i)] += g_hidden[static_cast<std::size_t>(i)];

    std::vector<T> g_concat(static_cast<std::size_t>(2 * d), T(0));
    add_matvec_transposed(p.mlp.hidden.w, g_hidden.data(), g_concat.data());

    // first half feeds the projection, second half is the shallow row
    add_outer(grads.proj.w, g_concat.data(), feat.data());
    for (std::int64_t i = 0; i < d; ++i) grads.proj.b[static_cast<std::size_t>(i)] += g_concat[static_cast<std::size_t>(i)];
    for (std::int64_t i = 0; i < d; ++i) shallow_grad[i] += g_concat[static_cast<std::size_t>(d + i)];
}

template <typename T>
T score_complex(std::span<const T> h, std::span<const T> r, std::span<const T> t) {
    if (h.size() != r.size() || h.size() != t.size() || h.size() % 2 != 0)
        throw ValidationError("score_complex: dims must be equal and even");
    const std::int64_t half = static_cast<std::int64_t>(h.size() / 2);
    const T* hr = h.data();
    const T* hi = h.data() + half;
    const T* rr = r.data();
    const T* ri = r.data() + half;
    const T* tr = t.data();
    const T* ti = t.data() + half;
    T acc = T(0);
    for (std::int64_t k = 0; k < half; ++k)
        acc += hr[k] * rr[k] * tr[k] + hi[k] * rr[k] * ti[k] + hr[k] * ri[k] * ti[k] -
               hi[k] * ri[k] * tr[k];
    return acc;
}

template <typename T>
T score_distmult(std::span<const T> h, std::span<const T> r, std::span<const T> t) {
    if (h.size() != r.size() || h.size() != t.size())
        throw ValidationError("score_distmult: dims must be equal");
    T acc = T(0);
    for (std::size_t k = 0; k < h.size(); ++k) acc += h[k] * r[k] * t[k];
    return acc;
}

template <typename T>
T decoder_score(DecoderKind kind, std::span<const T> h, std::span<const T> r,
                std::span<const T> t) {
    return kind == DecoderKind::kComplEx ? score_complex(h, r, t) : score_distmult(h, r, t);
}

template <typename T>
void decoder_backward(DecoderKind kind, std::span<const T> h, std::span<const T> r,
                      std::span<const T> t, T g, T* gh, T* gr, T* gt) {
    const std::int64_t d = static_cast<std::int64_t>(h.size());
    if (kind == DecoderKind::kDistMult) {
        for (std::int64_t k = 0; k < d; ++k) {
            gh[k] += g * r[k] * t[k];
            gr[k] += g * h[k] * t[k];
            gt[k] += g * h[k] * r[k];
        }
        return;
    }
    const std::int64_t half = d / 2;
    const T* hr = h.data();
    const T* hi = h.data() + half;
    const T* rr = r.data();
    const T* ri = r.data() + half;
    const T* tr = t.data();
    const T* ti = t.data() + half;
    for (std::int64_t k = 0; k < half; ++k) {
        gh[k] += g * (rr[k] * tr[k] + ri[k] * ti[k]);
        gh[half + k] += g * (rr[k] * ti[k] - ri[k] * tr[k]);
        gr[k] += g * (hr[k] * tr[k] + hi[k] * ti[k]);
        gr[half + k] += g * (hr[k] * ti[k] - hi[k] * tr[k]);
        gt[k] += g * (hr[k] * rr[k] - hi[k] * ri[k]);
        gt[half + k] += g * (hi[k] * rr[k] + hr[k] * ri[k]);
    }
}

template <typename T>
const T* relation_feature_row(const Matrix<T>& rel_feat, RelationId r) {
    return r < rel_feat.rows ? rel_feat.row(r) : rel_feat.row(r - rel_feat.rows);
}

template <typename T>
void check_model_features(const ModelParamsT<T>& m, const Matrix<T>& ent_feat,
                          const Matrix<T>& rel_feat) {
    if (ent_feat.rows != m.num_entities())
        throw ValidationError("feature rows (" + std::to_string(ent_feat.rows) +
                              ") do not match entity count (" + std::to_string(m.num_entities()) +
                              ")");
    if (ent_feat.cols != m.entity_feature_dim)
        throw ValidationError("entity feature dim mismatch");
    if (rel_feat.rows != m.num_relations() && rel_feat.rows * 2 != m.num_relations())
        throw ValidationError("relation feature rows (" + std::to_string(rel_feat.rows) +
                              ") match neither R nor R/2 of the model (" +
                              std::to_string(m.num_relations()) + ")");
    if (rel_feat.cols != m.relation_feature_dim)
        throw ValidationError("relation feature dim mismatch");
}

template <typename T>
std::vector<T> score_candidates(const ModelParamsT<T>& m, const Matrix<T>& ent_feat,
                                const Matrix<T>& rel_feat, Query q,
                                std::span<const EntityId> candidates) {
    if (q.head < 0 || q.head >= m.num_entities())
        throw ValidationError("score_candidates: head id out of range");
    if (q.rel < 0 || q.rel >= m.num_relations())
        throw ValidationError("score_candidates: relation id out of range");

    const std::int64_t d = m.dim;
    std::vector<T> e_h, e_r, e_t;
    encode<T>(m.entity_encoder, m.variant,
              std::span<const T>(ent_feat.row(q.head), static_cast<std::size_t>(ent_feat.cols)),
              std::span<const T>(m.entity_shallow.row(q.head), static_cast<std::size_t>(d)), e_h);
    encode<T>(m.relation_encoder, m.variant,
              std::span<const T>(relation_feature_row(rel_feat, q.rel),
                                 static_cast<std::size_t>(rel_feat.cols)),
              std::span<const T>(m.relation_shallow.row(q.rel), static_cast<std::size_t>(d)), e_r);

    std::vector<T> scores;
    scores.reserve(candidates.size());
    for (EntityId c : candidates) {
        if (c < 0 || c >= m.num_entities())
            throw ValidationError("score_candidates: candidate id out of range");
        encode<T>(m.entity_encoder, m.variant,
                  std::span<const T>(ent_feat.row(c), static_cast<std::size_t>(ent_feat.cols)),
                  std::span<const T>(m.entity_shallow.row(c), static_cast<std::size_t>(d)), e_t);
        scores.push_back(decoder_score<T>(m.decoder, e_h, e_r, e_t));
    }
    return scores;
}

template <typename T>
ModelGradT<T> make_zero_grads(const ModelParamsT<T>& m) {
    ModelGradT<T> g;
    auto zero_encoder = [](const EncoderParamsT<T>& p) {
        EncoderGradT<T> eg;
        eg.proj.w = Matrix<T>(p.proj.w.rows, p.proj.w.cols);
        eg.proj.b.assign(p.proj.b.size(), T(0));
        eg.mlp.hidden.w = Matrix<T>(p.mlp.hidden.w.rows, p.mlp.hidden.w.cols);
        eg.mlp.hidden.b.assign(p.mlp.hidden.b.size(), T(0));
        eg.mlp.out.w = Matrix<T>(p.mlp.out.w.rows, p.mlp.out.w.cols);
        eg.mlp.out.b.assign(p.mlp.out.b.size(), T(0));
        eg.alpha = T(0);
        return eg;
    };
    g.entity = zero_encoder(m.entity_encoder);
    g.relation = zero_encoder(m.relation_encoder);
    return g;
}

template <typename T>
ModelGradT<T> backward(const ModelParamsT<T>& m, const Matrix<T>& ent_feat,
                       const Matrix<T>& rel_feat, std::span<const Query> queries,
                       const std::vector<std::vector<EntityId>>& candidates,
                       const std::vector<std::vector<T>>& score_grads) {
    if (queries.size() != candidates.size() || queries.size() != score_grads.size())
        throw ValidationError("backward: batch arrays must have equal length");

    ModelGradT<T> grads = make_zero_grads(m);
    const std::int64_t d = m.dim;

    auto entity_row_grad = [&](EntityId id) -> T* {
        auto it = grads.entity_rows.try_emplace(id, std::vector<T>(static_cast<std::size_t>(d), T(0))).first;
        return it->second.data();
    };
    auto relation_row_grad = [&](RelationId id) -> T* {
        auto it = grads.relation_rows.try_emplace(id, std::vector<T>(static_cast<std::size_t>(d), T(0))).first;
        return it->second.data();
    };

    std::vector<T> e_h, e_r, e_t;
    EncodeCache<T> cache_h, cache_r, cache_t;
    std::vector<T> ge_h(static_cast<std::size_t>(d));
    std::vector<T> ge_r(static_cast<std::size_t>(d));
    std::vector<T> ge_t(static_cast<std::size_t>(d));

    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        const Query q = queries[qi];
        const auto& cands = candidates[qi];
        const auto& g_row = score_grads[qi];
        if (cands.size() != g_row.size())
            throw ValidationError("backward: score gradient row length mismatch");

        const std::span<const T> h_feat(ent_feat.row(q.head),
                                        static_cast<std::size_t>(ent_feat.cols));
        const std::span<const T> h_shallow(m.entity_shallow.row(q.head),
                                           static_cast<std::size_t>(d));
        const std::span<const T> r_feat(relation_feature_row(rel_feat, q.rel),
                                        static_cast<std::size_t>(rel_feat.cols));
        const std::span<const T> r_shallow(m.relation_shallow.row(q.rel),
                                           static_cast<std::size_t>(d));

        encode<T>(m.entity_encoder, m.variant, h_feat, h_shallow, e_h, &cache_h);
        encode<T>(m.relation_encoder, m.variant, r_feat, r_shallow, e_r, &cache_r);

        std::fill(ge_h.begin(), ge_h.end(), T(0));
        std::fill(ge_r.begin(), ge_r.end(), T(0));

        for (std::size_t ci = 0; ci < cands.size(); ++ci) {
            const EntityId c = cands[ci];
            const std::span<const T> t_feat(ent_feat.row(c),
                                            static_cast<std::size_t>(ent_feat.cols));
            const std::span<const T> t_shallow(m.entity_shallow.row(c),
                                               static_cast<std::size_t>(d));
            encode<T>(m.entity_encoder, m.variant, t_feat, t_shallow, e_t, &cache_t);

            std::fill(ge_t.begin(), ge_t.end(), T(0));
            decoder_backward<T>(m.decoder, e_h, e_r, e_t, g_row[ci], ge_h.data(), ge_r.data(),
                                ge_t.data());
            encode_backward<T>(m.entity_encoder, m.variant, t_feat, t_shallow, cache_t, ge_t,
                               grads.entity, entity_row_grad(c));
        }

        encode_backward<T>(m.entity_encoder, m.variant, h_feat, h_shallow, cache_h, ge_h,
                           grads.entity, entity_row_grad(q.head));
        encode_backward<T>(m.relation_encoder, m.variant, r_feat, r_shallow, cache_r, ge_r,
                           grads.relation, relation_row_grad(q.rel));
    }
    return grads;
}

template <typename To, typename From>
ModelParamsT<To> cast_model(const ModelParamsT<From>& m) {
    ModelParamsT<To> out;
    out.variant = m.variant;
    out.decoder = m.decoder;
    out.dim = m.dim;
    out.hidden_dim = m.hidden_dim;
    out.entity_feature_dim = m.entity_feature_dim;
    out.relation_feature_dim = m.relation_feature_dim;
    auto cast_linear = [](const LinearT<From>& l) {
        LinearT<To> o;
        o.w = cast_matrix<To>(l.w);
        o.b.assign(l.b.begin(), l.b.end());
        return o;
    };
    auto cast_encoder = [&](const EncoderParamsT<From>& e) {
        EncoderParamsT<To> o;
        o.proj = cast_linear(e.proj);
        o.mlp.hidden = cast_linear(e.mlp.hidden);
        o.mlp.out = cast_linear(e.mlp.out);
        o.alpha = static_cast<To>(e.alpha);
        return o;
    };
    out.entity_encoder = cast_encoder(m.entity_encoder);
    out.relation_encoder = cast_encoder(m.relation_encoder);
    out.entity_shallow = cast_matrix<To>(m.entity_shallow);
    out.relation_shallow = cast_matrix<To>(m.relation_shallow);
    return out;
}

}  // namespace kglp
