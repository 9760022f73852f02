#include "kglp/model.hpp"

#include "kglp/io.hpp"
#include "kglp/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace kglp {

namespace {

using nlohmann::json;

constexpr const char* kVariantNames[] = {"concat", "concat_mlp", "concat_mlp_residual_unweighted",
                                         "concat_mlp_residual"};

void fill_uniform(Rng& rng, std::vector<float>& v, double lo, double hi) {
    for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
}

void init_glorot(Rng& rng, Matrix<float>& w) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
    fill_uniform(rng, w.data, -limit, limit);
}

}  // namespace

std::string to_string(EncoderVariant v) { return kVariantNames[static_cast<int>(v)]; }

std::string to_string(DecoderKind d) {
    return d == DecoderKind::kComplEx ? "complex" : "distmult";
}

EncoderVariant encoder_variant_from_string(const std::string& s) {
    for (int i = 0; i < 4; ++i)
        if (s == kVariantNames[i]) return static_cast<EncoderVariant>(i);
    throw ValidationError("unknown encoder variant '" + s + "'");
}

DecoderKind decoder_kind_from_string(const std::string& s) {
    if (s == "complex") return DecoderKind::kComplEx;
    if (s == "distmult") return DecoderKind::kDistMult;
    throw ValidationError("unknown decoder '" + s + "'");
}

ModelParams init_model(const ModelInit& init, std::uint64_t seed) {
    if (init.dim <= 0 || init.dim % 2 != 0)
        throw ValidationError("init_model: dim must be positive and even");
    if (init.hidden_dim < 1) throw ValidationError("init_model: hidden_dim must be >= 1");
    if (init.entity_feature_dim < 1 || init.relation_feature_dim < 1)
        throw ValidationError("init_model: feature dims must be >= 1");
    if (init.num_entities < 0 || init.num_relations < 0)
        throw ValidationError("init_model: negative counts");

    ModelParams m;
    m.variant = init.variant;
    m.decoder = init.decoder;
    m.dim = init.dim;
    m.hidden_dim = init.hidden_dim;
    m.entity_feature_dim = init.entity_feature_dim;
    m.relation_feature_dim = init.relation_feature_dim;

    Rng rng(mix_seed(seed, 0x6d6f64656cULL));

    const double shallow_limit = 1.0 / std::sqrt(static_cast<double>(init.dim));
    m.entity_shallow = Matrix<float>(init.num_entities, init.dim);
    fill_uniform(rng, m.entity_shallow.data, -shallow_limit, shallow_limit);
    m.relation_shallow = Matrix<float>(init.num_relations, init.dim);
    fill_uniform(rng, m.relation_shallow.data, -shallow_limit, shallow_limit);

    auto init_encoder = [&](EncoderParamsT<float>& e, std::int64_t feature_dim) {
        const std::int64_t proj_in = init.variant == EncoderVariant::kConcat
                                         ? feature_dim + init.dim
                                         : feature_dim;
        e.proj.w = Matrix<float>(init.dim, proj_in);
        init_glorot(rng, e.proj.w);
        e.proj.b.assign(static_cast<std::size_t>(init.dim), 0.0f);
        e.mlp.hidden.w = Matrix<float>(init.hidden_dim, 2 * init.dim);
        init_glorot(rng, e.mlp.hidden.w);
        e.mlp.hidden.b.assign(static_cast<std::size_t>(init.hidden_dim), 0.0f);
        e.mlp.out.w = Matrix<float>(init.dim, init.hidden_dim);
        init_glorot(rng, e.mlp.out.w);
        e.mlp.out.b.assign(static_cast<std::size_t>(init.dim), 0.0f);
        e.alpha = 1.0f;
    };
    init_encoder(m.entity_encoder, init.entity_feature_dim);
    init_encoder(m.relation_encoder, init.relation_feature_dim);
    return m;
}

namespace {

// Flat view over every trainable coordinate of a float64 model, paired with
// the analytic gradient for the same coordinate.
struct CoordView {
    std::vector<double*> values;
    std::vector<double> analytic;
};

void push_dense(CoordView& view, std::vector<double>& vals, const std::vector<double>& grads) {
    for (std::size_t i = 0; i < vals.size(); ++i) {
        view.values.push_back(&vals[i]);
        view.analytic.push_back(grads[i]);
    }
}

CoordView coord_view(ModelParamsT<double>& m, const ModelGradT<double>& g) {
    CoordView view;
    auto push_encoder = [&](EncoderParamsT<double>& e, const EncoderGradT<double>& eg) {
        push_dense(view, e.proj.w.data, eg.proj.w.data);
        push_dense(view, e.proj.b, eg.proj.b);
        push_dense(view, e.mlp.hidden.w.data, eg.mlp.hidden.w.data);
        push_dense(view, e.mlp.hidden.b, eg.mlp.hidden.b);
        push_dense(view, e.mlp.out.w.data, eg.mlp.out.w.data);
        push_dense(view, e.mlp.out.b, eg.mlp.out.b);
        view.values.push_back(&e.alpha);
        view.analytic.push_back(eg.alpha);
    };
    push_encoder(m.entity_encoder, g.entity);
    push_encoder(m.relation_encoder, g.relation);

    auto push_table = [&](Matrix<double>& table, const std::map<std::int64_t, std::vector<double>>& rows) {
        for (std::int64_t r = 0; r < table.rows; ++r) {
            const auto it = rows.find(r);
            for (std::int64_t c = 0; c < table.cols; ++c) {
                view.values.push_back(&table.at(r, c));
                view.analytic.push_back(it == rows.end() ? 0.0
                                                         : it->second[static_cast<std::size_t>(c)]);
            }
        }
    };
    push_table(m.entity_shallow, g.entity_rows);
    push_table(m.relation_shallow, g.relation_rows);
    return view;
}

}  // namespace

double grad_check(const ModelParams& m, const FeatureMatrix& ent_feat,
                  const FeatureMatrix& rel_feat, std::span<const Query> queries,
                  const std::vector<std::vector<EntityId>>& candidates, double epsilon,
                  std::int64_t max_coords, std::uint64_t seed) {
    if (epsilon <= 0.0) throw ValidationError("grad_check: epsilon must be > 0");

    auto model64 = cast_model<double>(m);
    const auto ent64 = cast_matrix<double>(ent_feat);
    const auto rel64 = cast_matrix<double>(rel_feat);

    Rng rng(mix_seed(seed, 0x67636865636bULL));
    std::vector<std::vector<double>> score_grads(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        score_grads[i].resize(candidates[i].size());
        for (auto& g : score_grads[i]) g = rng.uniform(-1.0, 1.0);
    }

    const auto objective = [&]() {
        double total = 0.0;
        for (std::size_t i = 0; i < queries.size(); ++i) {
            const auto scores =
                score_candidates<double>(model64, ent64, rel64, queries[i], candidates[i]);
            for (std::size_t c = 0; c < scores.size(); ++c) total += scores[c] * score_grads[i][c];
        }
        return total;
    };

    const auto grads = backward<double>(model64, ent64, rel64, queries, candidates, score_grads);
    CoordView view = coord_view(model64, grads);

    std::vector<std::size_t> coords(view.values.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (max_coords > 0 && static_cast<std::int64_t>(coords.size()) > max_coords) {
        const std::size_t want = static_cast<std::size_t>(std::max<std::int64_t>(max_coords, 200));
        rng.shuffle(coords);
        coords.resize(std::min(want, coords.size()));
    }

    double worst = 0.0;
    for (std::size_t idx : coords) {
        double* p = view.values[idx];
        const double saved = *p;
        *p = saved + epsilon;
        const double up = objective();
        *p = saved - epsilon;
        const double down = objective();
        *p = saved;
        const double numeric = (up - down) / (2.0 * epsilon);
        const double analytic = view.analytic[idx];
        const double err =
            std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
        worst = std::max(worst, err);
    }
    return worst;
}

namespace {

void save_tensor(const std::filesystem::path& dir, const std::string& name,
                 const Matrix<float>& m) {
    save_features(m, dir / (name + ".f32"));
}

void save_vector(const std::filesystem::path& dir, const std::string& name,
                 const std::vector<float>& v) {
    Matrix<float> m(1, static_cast<std::int64_t>(v.size()));
    m.data = v;
    save_tensor(dir, name, m);
}

Matrix<float> load_tensor(const std::filesystem::path& dir, const std::string& name,
                          std::int64_t rows, std::int64_t cols) {
    auto m = load_features(dir / (name + ".f32"));
    if (m.rows != rows || m.cols != cols)
        throw ValidationError("checkpoint tensor " + name + " has shape " + std::to_string(m.rows) +
                              "x" + std::to_string(m.cols) + ", expected " + std::to_string(rows) +
                              "x" + std::to_string(cols));
    return m;
}

std::vector<float> load_vector(const std::filesystem::path& dir, const std::string& name,
                               std::int64_t len) {
    return load_tensor(dir, name, 1, len).data;
}

}  // namespace

void save_checkpoint(const ModelParams& m, const std::string& train_config_json,
                     const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    json config = json::parse(train_config_json, nullptr, false);
    if (config.is_discarded())
        throw ValidationError("save_checkpoint: train_config_json is not valid JSON");

    json meta{
        {"dim", m.dim},
        {"hidden_dim", m.hidden_dim},
        {"entity_feature_dim", m.entity_feature_dim},
        {"relation_feature_dim", m.relation_feature_dim},
        {"num_entities", m.num_entities()},
        {"num_relations", m.num_relations()},
        {"variant", to_string(m.variant)},
        {"decoder", to_string(m.decoder)},
        {"entity_alpha", m.entity_encoder.alpha},
        {"relation_alpha", m.relation_encoder.alpha},
        {"train_config", config},
    };
    write_text_file(dir / "model.json", meta.dump(2) + "\n");

    auto save_encoder = [&](const std::string& prefix, const EncoderParamsT<float>& e) {
        save_tensor(dir, prefix + "_proj_w", e.proj.w);
        save_vector(dir, prefix + "_proj_b", e.proj.b);
        save_tensor(dir, prefix + "_mlp_hidden_w", e.mlp.hidden.w);
        save_vector(dir, prefix + "_mlp_hidden_b", e.mlp.hidden.b);
        save_tensor(dir, prefix + "_mlp_out_w", e.mlp.out.w);
        save_vector(dir, prefix + "_mlp_out_b", e.mlp.out.b);
    };
    save_encoder("ent", m.entity_encoder);
    save_encoder("rel", m.relation_encoder);
    save_tensor(dir, "ent_shallow", m.entity_shallow);
    save_tensor(dir, "rel_shallow", m.relation_shallow);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    const json meta = json::parse(read_text_file(dir / "model.json"), nullptr, false);
    if (meta.is_discarded()) throw ValidationError("invalid model.json in " + dir.string());

    ModelParams m;
    m.dim = meta.at("dim").get<std::int64_t>();
    m.hidden_dim = meta.at("hidden_dim").get<std::int64_t>();
    m.entity_feature_dim = meta.at("entity_feature_dim").get<std::int64_t>();
    m.relation_feature_dim = meta.at("relation_feature_dim").get<std::int64_t>();
    m.variant = encoder_variant_from_string(meta.at("variant").get<std::string>());
    m.decoder = decoder_kind_from_string(meta.at("decoder").get<std::string>());
    const auto num_entities = meta.at("num_entities").get<std::int64_t>();
    const auto num_relations = meta.at("num_relations").get<std::int64_t>();
    if (m.dim <= 0 || m.dim % 2 != 0) throw ValidationError("checkpoint: bad dim");

    const std::int64_t ent_proj_in = m.variant == EncoderVariant::kConcat
                                         ? m.entity_feature_dim + m.dim
                                         : m.entity_feature_dim;
    const std::int64_t rel_proj_in = m.variant == EncoderVariant::kConcat
                                         ? m.relation_feature_dim + m.dim
                                         : m.relation_feature_dim;

    auto load_encoder = [&](const std::string& prefix, std::int64_t proj_in,
                            EncoderParamsT<float>& e) {
        e.proj.w = load_tensor(dir, prefix + "_proj_w", m.dim, proj_in);
        e.proj.b = load_vector(dir, prefix + "_proj_b", m.dim);
        e.mlp.hidden.w = load_tensor(dir, prefix + "_mlp_hidden_w", m.hidden_dim, 2 * m.dim);
        e.mlp.hidden.b = load_vector(dir, prefix + "_mlp_hidden_b", m.hidden_dim);
        e.mlp.out.w = load_tensor(dir, prefix + "_mlp_out_w", m.dim, m.hidden_dim);
        e.mlp.out.b = load_vector(dir, prefix + "_mlp_out_b", m.dim);
    };
    load_encoder("ent", ent_proj_in, m.entity_encoder);
    load_encoder("rel", rel_proj_in, m.relation_encoder);
    m.entity_encoder.alpha = meta.at("entity_alpha").get<float>();
    m.relation_encoder.alpha = meta.at("relation_alpha").get<float>();
    m.entity_shallow = load_tensor(dir, "ent_shallow", num_entities, m.dim);
    m.relation_shallow = load_tensor(dir, "rel_shallow", num_relations, m.dim);

    Checkpoint ck;
    ck.model = std::move(m);
    ck.train_config_json = meta.at("train_config").dump();
    return ck;
}

}  // namespace kglp
