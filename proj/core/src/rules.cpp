#include "kglp/rules.hpp"

#include "kglp/io.hpp"
#include "kglp/sparse.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <set>

namespace kglp {

namespace {

using nlohmann::json;

void check_rule(const HornRule& rule, const TripleStore& store) {
    if (rule.body.size() != 1 && rule.body.size() != 2)
        throw ValidationError("rule body must have 1 or 2 atoms");
    if (rule.head < 0 || rule.head >= store.num_relations())
        throw ValidationError("rule head relation out of range");
    for (RelationId r : rule.body)
        if (r < 0 || r >= store.num_relations())
            throw ValidationError("rule body relation out of range");
}

}  // namespace

RuleSet mine_rules(const TripleStore& store, std::int64_t min_support, double min_conf) {
    const std::int64_t r_count = store.num_relations();
    RuleSet out;

    const auto try_heads = [&](const SparseBoolMatrix& body_matrix,
                               std::vector<RelationId> body) {
        const std::int64_t body_count = body_matrix.nnz();
        if (body_count < min_support || body_count == 0) return;
        for (RelationId head = 0; head < r_count; ++head) {
            if (body.size() == 1 && body[0] == head) continue;
            const std::int64_t support =
                intersection_count(body_matrix, store.relation_matrix(head));
            if (support < min_support) continue;
            const double confidence =
                static_cast<double>(support) / static_cast<double>(body_count);
            if (confidence < min_conf) continue;
            out.rules.push_back(HornRule{head, body, support, body_count, confidence});
        }
    };

    for (RelationId b = 0; b < r_count; ++b) try_heads(store.relation_matrix(b), {b});

    for (RelationId a = 0; a < r_count; ++a) {
        const auto& ma = store.relation_matrix(a);
        if (ma.nnz() == 0) continue;
        for (RelationId b = 0; b < r_count; ++b) {
            const auto& mb = store.relation_matrix(b);
            if (mb.nnz() == 0) continue;
            try_heads(bool_multiply(ma, mb), {a, b});
        }
    }
    return out;
}

std::vector<Triple> apply_rule(const HornRule& rule, const TripleStore& store) {
    check_rule(rule, store);

    const SparseBoolMatrix* body = &store.relation_matrix(rule.body[0]);
    SparseBoolMatrix composed;
    if (rule.body.size() == 2) {
        composed = bool_multiply(*body, store.relation_matrix(rule.body[1]));
        body = &composed;
    }

    std::vector<Triple> out;
    for (const auto& [h, t] : difference_pairs(*body, store.relation_matrix(rule.head)))
        out.push_back(Triple{h, rule.head, t});
    return out;
}

RuleSet merge_rulesets(std::span<const RuleSet> sets) {
    RuleSet out;
    std::map<std::pair<RelationId, std::vector<RelationId>>, std::size_t> index;
    for (const RuleSet& set : sets) {
        for (const HornRule& rule : set.rules) {
            const auto key = std::make_pair(rule.head, rule.body);
            const auto it = index.find(key);
            if (it == index.end()) {
                index.emplace(key, out.rules.size());
                out.rules.push_back(rule);
            } else if (rule.body_count > out.rules[it->second].body_count) {
                out.rules[it->second] = rule;
            }
        }
    }
    return out;
}

RuleSet filter_by_confidence(const RuleSet& set, double threshold) {
    if (threshold < 0.0 || threshold > 1.0)
        throw ValidationError("confidence threshold must lie in [0, 1]");
    RuleSet out;
    for (const HornRule& rule : set.rules)
        if (rule.confidence >= threshold) out.rules.push_back(rule);
    return out;
}

AugmentResult augment(const TripleStore& store, const RuleSet& set, double threshold) {
    std::set<Triple> fresh;
    for (const HornRule& rule : set.rules) {
        if (rule.confidence < threshold) continue;
        for (const Triple& t : apply_rule(rule, store)) fresh.insert(t);
    }

    std::vector<Triple> triples = store.triples();
    triples.insert(triples.end(), fresh.begin(), fresh.end());
    AugmentResult result{TripleStore(std::move(triples), store.num_entities(),
                                     store.num_relations()),
                         static_cast<std::int64_t>(fresh.size())};
    return result;
}

void save_rules(const RuleSet& set, const std::filesystem::path& path) {
    json arr = json::array();
    for (const HornRule& rule : set.rules) {
        arr.push_back(json{{"head", rule.head},
                           {"body", rule.body},
                           {"support", rule.support},
                           {"body_count", rule.body_count},
                           {"confidence", rule.confidence}});
    }
    write_text_file(path, arr.dump(2) + "\n");
}

RuleSet load_rules(const std::filesystem::path& path) {
    const json arr = json::parse(read_text_file(path), nullptr, false);
    if (arr.is_discarded() || !arr.is_array())
        throw ValidationError(path.string() + ": expected a JSON array of rules");
    RuleSet out;
    for (const auto& j : arr) {
        HornRule rule;
        rule.head = j.at("head").get<RelationId>();
        rule.body = j.at("body").get<std::vector<RelationId>>();
        rule.support = j.at("support").get<std::int64_t>();
        rule.body_count = j.at("body_count").get<std::int64_t>();
        rule.confidence = j.at("confidence").get<double>();
        if (rule.body.empty() || rule.body.size() > 2)
            throw ValidationError(path.string() + ": rule body must have 1 or 2 atoms");
        out.rules.push_back(std::move(rule));
    }
    return out;
}

}  // namespace kglp
