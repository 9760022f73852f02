#include "kglp/synthetic.hpp"

#include "kglp/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace kglp {

namespace {

using nlohmann::json;

void validate_spec(const SyntheticSpec& s) {
    if (s.num_entities < 1) throw ValidationError("infeasible spec: num_entities must be >= 1");
    if (s.num_relations < 1) throw ValidationError("infeasible spec: num_relations must be >= 1");
    if (s.num_rule_relations < 0 || s.num_rule_relations >= s.num_relations)
        throw ValidationError("infeasible spec: need at least one base relation");
    const std::int64_t base = s.num_relations - s.num_rule_relations;
    if (s.num_rule_relations > base * base)
        throw ValidationError("infeasible spec: more rule relations than distinct body pairs");
    for (double f : s.splits)
        if (f < 0.0 || f > 1.0) throw ValidationError("infeasible spec: split fraction outside [0,1]");
    if (s.splits[0] + s.splits[1] + s.splits[2] > 1.0 + 1e-12)
        throw ValidationError("infeasible spec: split fractions sum above 1");
    if (s.noise_fraction < 0.0) throw ValidationError("infeasible spec: negative noise fraction");
    if (s.feature_dim < 1) throw ValidationError("infeasible spec: feature_dim must be >= 1");
    if (s.latent_dim < 2 || s.latent_dim % 2 != 0)
        throw ValidationError("infeasible spec: latent_dim must be even and >= 2");
    if (s.num_candidates < 1) throw ValidationError("infeasible spec: num_candidates must be >= 1");
    if (s.head_fraction <= 0.0 || s.head_fraction > 1.0)
        throw ValidationError("infeasible spec: head_fraction must lie in (0, 1]");
    if (s.edges_per_head < 1 || s.edges_per_head > s.num_entities)
        throw ValidationError("infeasible spec: edges_per_head must lie in [1, num_entities]");
    if (s.latent_warp != "none" && s.latent_warp != "square")
        throw ValidationError("infeasible spec: latent_warp must be 'none' or 'square'");
    for (const auto& t : s.rule_templates) {
        if (t[0] < base || t[0] >= s.num_relations)
            throw ValidationError("infeasible spec: template head must be a rule relation");
        if (t[1] < 0 || t[1] >= base || t[2] < 0 || t[2] >= base)
            throw ValidationError("infeasible spec: template bodies must be base relations");
    }
}

}  // namespace

SyntheticSpec synthetic_spec_from_json(const std::string& json_text) {
    const json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw ValidationError("synthetic spec: expected a JSON object");
    static const char* allowed[] = {"num_entities",  "num_relations", "num_rule_relations",
                                    "rule_templates", "noise_fraction", "feature_dim",
                                    "splits",         "num_candidates", "latent_dim",
                                    "feature_noise",  "head_fraction",  "latent_warp",
                                    "edges_per_head", "seed"};
    for (const auto& [key, value] : j.items())
        if (std::find_if(std::begin(allowed), std::end(allowed),
                         [&](const char* k) { return key == k; }) == std::end(allowed))
            throw ValidationError("synthetic spec: unknown key '" + key + "'");

    SyntheticSpec s;
    s.num_entities = j.value("num_entities", s.num_entities);
    s.num_relations = j.value("num_relations", s.num_relations);
    s.num_rule_relations = j.value("num_rule_relations", s.num_rule_relations);
    if (j.contains("rule_templates"))
        for (const auto& t : j.at("rule_templates"))
            s.rule_templates.push_back({t.at(0).get<RelationId>(), t.at(1).get<RelationId>(),
                                        t.at(2).get<RelationId>()});
    s.noise_fraction = j.value("noise_fraction", s.noise_fraction);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    if (j.contains("splits")) {
        const auto v = j.at("splits").get<std::vector<double>>();
        if (v.size() != 3) throw ValidationError("synthetic spec: splits needs 3 fractions");
        s.splits = {v[0], v[1], v[2]};
    }
    s.num_candidates = j.value("num_candidates", s.num_candidates);
    s.latent_dim = j.value("latent_dim", s.latent_dim);
    s.feature_noise = j.value("feature_noise", s.feature_noise);
    s.head_fraction = j.value("head_fraction", s.head_fraction);
    s.latent_warp = j.value("latent_warp", s.latent_warp);
    s.edges_per_head = j.value("edges_per_head", s.edges_per_head);
    s.seed = j.value("seed", s.seed);
    validate_spec(s);
    return s;
}

std::string synthetic_spec_to_json(const SyntheticSpec& s) {
    json templates = json::array();
    for (const auto& t : s.rule_templates) templates.push_back({t[0], t[1], t[2]});
    json j{{"num_entities", s.num_entities},
           {"num_relations", s.num_relations},
           {"num_rule_relations", s.num_rule_relations},
           {"rule_templates", templates},
           {"noise_fraction", s.noise_fraction},
           {"feature_dim", s.feature_dim},
           {"splits", {s.splits[0], s.splits[1], s.splits[2]}},
           {"num_candidates", s.num_candidates},
           {"latent_dim", s.latent_dim},
           {"feature_noise", s.feature_noise},
           {"head_fraction", s.head_fraction},
           {"latent_warp", s.latent_warp},
           {"edges_per_head", s.edges_per_head},
           {"seed", s.seed}};
    return j.dump(2) + "\n";
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
    validate_spec(spec);
    Rng rng(mix_seed(spec.seed, 0x73796e7468ULL));

    const std::int64_t entities = spec.num_entities;
    const std::int64_t relations = spec.num_relations;
    const std::int64_t base = relations - spec.num_rule_relations;
    const std::int64_t half = spec.latent_dim / 2;

    // Unit-norm complex latent per entity, stored as [re..., im...].
    Matrix<double> latents(entities, spec.latent_dim);
    for (std::int64_t e = 0; e < entities; ++e) {
        double norm = 0.0;
        for (std::int64_t k = 0; k < spec.latent_dim; ++k) {
            latents.at(e, k) = rng.normal();
            norm += latents.at(e, k) * latents.at(e, k);
        }
        norm = std::sqrt(std::max(norm, 1e-12));
        for (std::int64_t k = 0; k < spec.latent_dim; ++k) latents.at(e, k) /= norm;
    }

    // Edge placement works on the (optionally warped) latents; features stay
    // linear in the raw latents.
    Matrix<double> edge_latents = latents;
    if (spec.latent_warp == "square") {
        for (std::int64_t e = 0; e < entities; ++e) {
            double norm = 0.0;
            for (std::int64_t k = 0; k < half; ++k) {
                const double re = latents.at(e, k), im = latents.at(e, half + k);
                edge_latents.at(e, k) = re * re - im * im;
                edge_latents.at(e, half + k) = 2.0 * re * im;
                norm += edge_latents.at(e, k) * edge_latents.at(e, k) +
                        edge_latents.at(e, half + k) * edge_latents.at(e, half + k);
            }
            norm = std::sqrt(std::max(norm, 1e-12));
            for (std::int64_t k = 0; k < spec.latent_dim; ++k) edge_latents.at(e, k) /= norm;
        }
    }

    // Unit-modulus rotation per relation; rule relations compose their bodies'.
    Matrix<double> rotations(relations, spec.latent_dim);
    for (RelationId r = 0; r < base; ++r) {
        for (std::int64_t k = 0; k < half; ++k) {
            const double theta = rng.uniform(0.0, 6.283185307179586);
            rotations.at(r, k) = std::cos(theta);
            rotations.at(r, half + k) = std::sin(theta);
        }
    }

    std::vector<std::array<RelationId, 3>> planted = spec.rule_templates;
    if (planted.empty() && spec.num_rule_relations > 0) {
        std::vector<std::pair<RelationId, RelationId>> pairs;
        for (RelationId a = 0; a < base; ++a)
            for (RelationId b = 0; b < base; ++b) pairs.emplace_back(a, b);
        rng.shuffle(pairs);
        for (std::int64_t i = 0; i < spec.num_rule_relations; ++i)
            planted.push_back({base + i, pairs[static_cast<std::size_t>(i)].first,
                               pairs[static_cast<std::size_t>(i)].second});
    }
    std::sort(planted.begin(), planted.end());
    for (const auto& t : planted) {
        const auto [rc, ra, rb] = t;
        for (std::int64_t k = 0; k < half; ++k) {
            const double are = rotations.at(ra, k), aim = rotations.at(ra, half + k);
            const double bre = rotations.at(rb, k), bim = rotations.at(rb, half + k);
            rotations.at(rc, k) = are * bre - aim * bim;
            rotations.at(rc, half + k) = are * bim + aim * bre;
        }
    }

    // Base edges: each sampled head links to its nearest rotated latents.
    std::set<Triple> edges;
    std::vector<std::vector<std::vector<EntityId>>> tails_of(
        static_cast<std::size_t>(base),
        std::vector<std::vector<EntityId>>(static_cast<std::size_t>(entities)));
    std::vector<double> rotated(static_cast<std::size_t>(spec.latent_dim));
    std::vector<std::pair<double, EntityId>> ranked(static_cast<std::size_t>(entities));
    for (RelationId r = 0; r < base; ++r) {
        for (EntityId h = 0; h < entities; ++h) {
            if (spec.head_fraction < 1.0 && rng.uniform() >= spec.head_fraction) continue;
            for (std::int64_t k = 0; k < half; ++k) {
                const double zre = edge_latents.at(h, k), zim = edge_latents.at(h, half + k);
                const double wre = rotations.at(r, k), wim = rotations.at(r, half + k);
                rotated[static_cast<std::size_t>(k)] = zre * wre - zim * wim;
                rotated[static_cast<std::size_t>(half + k)] = zre * wim + zim * wre;
            }
            for (EntityId t = 0; t < entities; ++t)
                ranked[static_cast<std::size_t>(t)] = {
                    -dot(rotated.data(), edge_latents.row(t), spec.latent_dim), t};
            const std::size_t keep = static_cast<std::size_t>(spec.edges_per_head);
            std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep),
                              ranked.end());
            auto& tails = tails_of[static_cast<std::size_t>(r)][static_cast<std::size_t>(h)];
            for (std::size_t i = 0; i < keep; ++i) {
                edges.insert(Triple{h, r, ranked[i].second});
                tails.push_back(ranked[i].second);
            }
        }
    }

    // Rule relations hold the exact composition of their body edge sets.
    for (const auto& t : planted) {
        const auto [rc, ra, rb] = t;
        for (EntityId x = 0; x < entities; ++x)
            for (EntityId y : tails_of[static_cast<std::size_t>(ra)][static_cast<std::size_t>(x)])
                for (EntityId z :
                     tails_of[static_cast<std::size_t>(rb)][static_cast<std::size_t>(y)])
                    edges.insert(Triple{x, rc, z});
    }

    const std::int64_t structural = static_cast<std::int64_t>(edges.size());
    const std::int64_t noise_count =
        static_cast<std::int64_t>(std::llround(spec.noise_fraction * static_cast<double>(structural)));
    std::int64_t attempts = 0;
    for (std::int64_t added = 0; added < noise_count;) {
        if (++attempts > noise_count * 100 + 1000)
            throw ValidationError("infeasible spec: cannot place requested noise edges");
        Triple t{static_cast<EntityId>(rng.below(static_cast<std::uint64_t>(entities))),
                 static_cast<RelationId>(rng.below(static_cast<std::uint64_t>(relations))),
                 static_cast<EntityId>(rng.below(static_cast<std::uint64_t>(entities)))};
        if (edges.insert(t).second) ++added;
    }

    std::vector<Triple> all(edges.begin(), edges.end());
    rng.shuffle(all);
    const std::int64_t total = static_cast<std::int64_t>(all.size());
    const std::int64_t n_valid = std::llround(spec.splits[1] * static_cast<double>(total));
    const std::int64_t n_test = std::llround(spec.splits[2] * static_cast<double>(total));
    const double split_sum = spec.splits[0] + spec.splits[1] + spec.splits[2];
    const std::int64_t n_train =
        split_sum >= 1.0 - 1e-12
            ? total - n_valid - n_test
            : std::llround(spec.splits[0] * static_cast<double>(total));

    SyntheticDataset out;
    out.planted = planted;
    out.total_triples = total;

    std::vector<Triple> train_triples;
    CandidateList valid_q, test_q;
    const auto make_query = [&](const Triple& t) {
        CandidateQuery q;
        q.head = t.head;
        q.rel = t.rel;
        const std::int64_t k = std::min<std::int64_t>(spec.num_candidates, entities);
        q.candidates.push_back(t.tail);
        for (std::int64_t i = 1; i < k; ++i) {
            EntityId c = t.tail;
            while (c == t.tail && entities > 1)
                c = static_cast<EntityId>(rng.below(static_cast<std::uint64_t>(entities)));
            q.candidates.push_back(c);
        }
        rng.shuffle(q.candidates);
        for (std::size_t i = 0; i < q.candidates.size(); ++i)
            if (q.candidates[i] == t.tail) {
                q.truth_index = static_cast<std::int64_t>(i);
                break;
            }
        return q;
    };

    for (std::int64_t i = 0; i < total; ++i) {
        const Triple& t = all[static_cast<std::size_t>(i)];
        if (i < n_valid) {
            valid_q.push_back(make_query(t));
        } else if (i < n_valid + n_test) {
            test_q.push_back(make_query(t));
        } else if (i < n_valid + n_test + n_train) {
            train_triples.push_back(t);
        }
    }

    out.train = TripleStore(std::move(train_triples), entities, relations);
    out.valid = std::move(valid_q);
    out.test = std::move(test_q);

    // Features: random linear image of the latent plus Gaussian noise.
    const auto make_features = [&](const Matrix<double>& source) {
        Matrix<double> mix(spec.feature_dim, spec.latent_dim);
        const double scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
        for (auto& v : mix.data) v = rng.normal() * scale;
        FeatureMatrix feats(source.rows, spec.feature_dim);
        for (std::int64_t r = 0; r < source.rows; ++r)
            for (std::int64_t f = 0; f < spec.feature_dim; ++f)
                feats.at(r, f) = static_cast<float>(
                    dot(mix.row(f), source.row(r), spec.latent_dim) +
                    spec.feature_noise * rng.normal());
        return feats;
    };
    out.entity_features = make_features(latents);
    out.relation_features = make_features(rotations);
    return out;
}

void write_synthetic(const SyntheticDataset& data, const SyntheticSpec& spec,
                     const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_triples(data.train, dir / "train.tsv");
    save_candidates(data.valid, dir / "valid.cands");
    save_candidates(data.test, dir / "test.cands");
    save_features(data.entity_features, dir / "entity_feat.f32");
    save_features(data.relation_features, dir / "rel_feat.f32");
    write_text_file(dir / "spec.json", synthetic_spec_to_json(spec));
}

}  // namespace kglp
