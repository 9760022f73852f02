// kglp: knowledge-graph link prediction toolkit.
//
// Subcommands cover the full pipeline: synthetic benchmark generation,
// inverse-relation preparation, embedding training, rule mining and
// application, scoring, ensembling, distillation, and the staged
// inference pipeline.

#include "kglp/inference.hpp"
#include "kglp/io.hpp"
#include "kglp/model.hpp"
#include "kglp/rules.hpp"
#include "kglp/synthetic.hpp"
#include "kglp/training.hpp"
#include "kglp/triple_store.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <set>
#include <string>

namespace {

using nlohmann::json;
using namespace kglp;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitRuntime = 4;

void print_error(const std::string& kind, const std::string& message) {
    json j{{"error", message}, {"kind", kind}};
    std::cerr << j.dump() << "\n";
}

int env_workers(int requested) {
    if (const char* env = std::getenv("KGLP_THREADS")) {
        const int parsed = std::atoi(env);
        if (parsed >= 1) return parsed;
    }
    return requested;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == ',') {
            if (i > start) out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

std::string read_config_or_default(const std::string& path) {
    if (path.empty()) return "{}";
    return read_text_file(path);
}

// Rules can conclude inverse relations; written back out, those edges are
// re-expressed over the base relation ids.
Triple canonical_triple(const Triple& t, std::int64_t base_relations) {
    if (t.rel < base_relations) return t;
    return Triple{t.tail, t.rel - base_relations, t.head};
}

PipelineConfig parse_pipeline_config(const std::string& text) {
    const json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw ValidationError("pipeline config: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        static const char* allowed[] = {"seed", "workers", "rule_threshold", "finetune",
                                        "distill"};
        if (std::find_if(std::begin(allowed), std::end(allowed),
                         [&](const char* k) { return key == k; }) == std::end(allowed))
            throw ValidationError("pipeline config: unknown key '" + key + "'");
    }
    PipelineConfig out;
    out.seed = j.value("seed", out.seed);
    out.workers = j.value("workers", out.workers);
    out.rule_threshold = j.value("rule_threshold", out.rule_threshold);
    if (j.contains("finetune")) {
        const json& f = j.at("finetune");
        for (const auto& [key, value] : f.items()) {
            static const char* allowed[] = {"epochs", "batch_size", "neg_samples", "lr_shallow",
                                            "lr_dense"};
            if (std::find_if(std::begin(allowed), std::end(allowed),
                             [&](const char* k) { return key == k; }) == std::end(allowed))
                throw ValidationError("pipeline config: unknown finetune key '" + key + "'");
        }
        auto& ft = out.finetune;
        ft.epochs = f.value("epochs", ft.epochs);
        ft.batch_size = f.value("batch_size", ft.batch_size);
        ft.neg_samples = f.value("neg_samples", ft.neg_samples);
        ft.lr_shallow = f.value("lr_shallow", ft.lr_shallow);
        ft.lr_dense = f.value("lr_dense", ft.lr_dense);
        if (ft.epochs < 0 || ft.batch_size < 1 || ft.neg_samples < 1)
            throw ValidationError("pipeline config: bad finetune values");
    }
    if (j.contains("distill")) out.distill = distill_config_from_json(j.at("distill").dump());
    if (out.rule_threshold < 0.0 || out.rule_threshold > 1.0)
        throw ValidationError("pipeline config: rule_threshold outside [0, 1]");
    return out;
}

int cmd_prepare(const std::string& train_path, const std::string& out_path) {
    const auto store = load_triples(train_path);
    const auto augmented = add_inverse_relations(store);
    save_triples(augmented, out_path);
    json j{{"triples", augmented.size()}, {"num_relations", augmented.num_relations()}};
    std::cout << j.dump() << "\n";
    return kExitOk;
}

int cmd_train(const std::string& train_path, const std::string& ent_feat_path,
              const std::string& rel_feat_path, const std::string& valid_path,
              const std::string& config_path, const std::string& out_dir, bool deterministic,
              std::int64_t seed_override) {
    TrainConfig config = train_config_from_json(read_config_or_default(config_path));
    if (deterministic) config.deterministic = true;
    if (seed_override >= 0) config.seed = static_cast<std::uint64_t>(seed_override);
    config.workers = env_workers(config.workers);

    const auto store = load_triples(train_path);
    const auto ent_feat = load_features(ent_feat_path);
    const auto rel_feat = load_features(rel_feat_path);
    const CandidateList valid = valid_path.empty() ? CandidateList{} : load_candidates(valid_path);

    const auto result = train(store, ent_feat, rel_feat, config, valid,
                              std::filesystem::path(out_dir));
    json j{{"best_mrr", result.best_mrr},
           {"evaluations", result.metrics.size()},
           {"checkpoint", out_dir}};
    std::cout << j.dump() << "\n";
    return kExitOk;
}

int cmd_mine(const std::string& train_path, std::int64_t subgraphs, std::int64_t slice_len,
             std::int64_t min_support, double min_conf, const std::string& out_path) {
    if (subgraphs < 1) throw ValidationError("mine: --subgraphs must be >= 1");
    const auto store = load_triples(train_path);
    if (store.size() == 0) {
        save_rules(RuleSet{}, out_path);
        std::cout << json{{"rules", 0}, {"subgraphs", subgraphs}}.dump() << "\n";
        return kExitOk;
    }
    if (slice_len == 0) slice_len = (store.size() + subgraphs - 1) / subgraphs;

    const auto slices = sample_subgraphs(store, subgraphs, slice_len);
    std::vector<RuleSet> mined;
    mined.reserve(slices.size());
    for (const auto& slice : slices)
        mined.push_back(mine_rules(add_inverse_relations(slice), min_support, min_conf));
    const auto merged = merge_rulesets(mined);
    save_rules(merged, out_path);

    json per_subgraph = json::array();
    for (const auto& m : mined) per_subgraph.push_back(m.rules.size());
    json j{{"rules", merged.rules.size()},
           {"subgraphs", subgraphs},
           {"rules_per_subgraph", per_subgraph}};
    std::cout << j.dump() << "\n";
    return kExitOk;
}

int cmd_apply_rules(const std::string& train_path, const std::string& rules_path,
                    double threshold, const std::string& out_path) {
    if (threshold < 0.0 || threshold > 1.0)
        throw ValidationError("apply-rules: --threshold outside [0, 1]");
    const auto store = load_triples(train_path);
    const auto rules = load_rules(rules_path);
    const auto augmented_base = add_inverse_relations(store);

    std::set<Triple> fresh;
    for (const HornRule& rule : rules.rules) {
        if (rule.confidence < threshold) continue;
        for (const Triple& t : apply_rule(rule, augmented_base)) {
            const Triple canonical = canonical_triple(t, store.num_relations());
            if (!store.contains(canonical)) fresh.insert(canonical);
        }
    }

    std::vector<Triple> out = store.triples();
    out.insert(out.end(), fresh.begin(), fresh.end());
    save_triples(TripleStore(std::move(out), store.num_entities(), store.num_relations()),
                 out_path);
    std::cout << json{{"added", fresh.size()}}.dump() << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& scores_path, const std::string& model_dir,
             const std::string& ent_feat_path, const std::string& rel_feat_path,
             const std::string& cands_path, const std::string& tie_break,
             const std::string& scores_out, int workers) {
    const auto cands = load_candidates(cands_path);
    const TieBreak tie = tie_break == "average" ? TieBreak::kAverage : TieBreak::kOptimistic;

    ScoreMatrix scores;
    if (!scores_path.empty()) {
        scores = load_scores(scores_path);
    } else {
        const auto ckpt = load_checkpoint(model_dir);
        const auto ent_feat = load_features(ent_feat_path);
        const auto rel_feat = load_features(rel_feat_path);
        scores = predict(ckpt.model, ent_feat, rel_feat, cands, env_workers(workers));
    }
    if (!scores_out.empty()) save_scores(scores, scores_out);
    std::cout << json{{"mrr", mrr(scores, cands, tie)}}.dump() << "\n";
    return kExitOk;
}

int cmd_ensemble(const std::string& inputs, const std::string& out_path) {
    const auto paths = split_list(inputs);
    if (paths.empty()) throw ValidationError("ensemble: --inputs is empty");
    std::vector<ScoreMatrix> matrices;
    matrices.reserve(paths.size());
    for (const auto& p : paths) matrices.push_back(load_scores(p));
    save_scores(ensemble_average(matrices), out_path);
    std::cout << json{{"inputs", paths.size()}, {"out", out_path}}.dump() << "\n";
    return kExitOk;
}

int cmd_distill(const std::string& model_dir, const std::string& teacher_path,
                const std::string& cands_path, const std::string& ent_feat_path,
                const std::string& rel_feat_path, const std::string& config_path,
                const std::string& out_dir) {
    const auto ckpt = load_checkpoint(model_dir);
    const auto teacher = load_scores(teacher_path);
    const auto cands = load_candidates(cands_path);
    const auto ent_feat = load_features(ent_feat_path);
    const auto rel_feat = load_features(rel_feat_path);
    const DistillConfig config = distill_config_from_json(read_config_or_default(config_path));

    const auto result = distill(ckpt.model, teacher, cands, ent_feat, rel_feat, config);
    save_checkpoint(result.model, ckpt.train_config_json, out_dir);
    json j{{"steps", result.step_loss.size()},
           {"final_loss", result.step_loss.empty() ? 0.0 : result.step_loss.back()},
           {"checkpoint", out_dir}};
    std::cout << j.dump() << "\n";
    return kExitOk;
}

int cmd_pipeline(const std::string& train_path, const std::string& ent_feat_path,
                 const std::string& rel_feat_path, const std::string& valid_path,
                 const std::string& test_path, const std::string& models_list,
                 const std::string& rules_path, std::int64_t stages,
                 const std::string& config_path, const std::string& out_dir,
                 bool deterministic) {
    (void)deterministic;  // every pipeline path is single-writer and seeded
    if (stages < 0) throw ValidationError("pipeline: --stages must be >= 0");

    PipelineConfig config = parse_pipeline_config(read_config_or_default(config_path));
    config.stages = stages;
    config.workers = env_workers(config.workers);

    const auto store = load_triples(train_path);
    const auto ent_feat = load_features(ent_feat_path);
    const auto rel_feat = load_features(rel_feat_path);
    const auto valid = load_candidates(valid_path);
    const CandidateList test = test_path.empty() ? CandidateList{} : load_candidates(test_path);
    const RuleSet rules = rules_path.empty() ? RuleSet{} : load_rules(rules_path);

    std::vector<ModelParams> models;
    std::vector<std::string> train_configs;
    for (const auto& dir : split_list(models_list)) {
        auto ckpt = load_checkpoint(dir);
        models.push_back(std::move(ckpt.model));
        train_configs.push_back(std::move(ckpt.train_config_json));
    }
    if (models.empty()) throw ValidationError("pipeline: --models is empty");

    const auto result =
        run_pipeline(models, rules, store, ent_feat, rel_feat, valid, test, config);

    std::filesystem::create_directories(out_dir);
    const std::filesystem::path out(out_dir);
    write_text_file(out / "report.json", report_to_json(result));
    save_scores(result.final_scores, out / "final_scores.f32");
    for (std::size_t i = 0; i < result.models.size(); ++i)
        save_checkpoint(result.models[i], train_configs[i],
                        out / ("model_" + std::to_string(i)));

    json j{{"stages", result.stages.size()},
           {"added_triples", result.added_triples},
           {"final_ensemble_mrr", result.stages.back().ensemble_mrr},
           {"report", (out / "report.json").string()}};
    std::cout << j.dump() << "\n";
    return kExitOk;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
    const SyntheticSpec spec = synthetic_spec_from_json(read_text_file(spec_path));
    const auto data = generate_synthetic(spec);
    write_synthetic(data, spec, out_dir);
    json j{{"triples", data.total_triples},
           {"train", data.train.size()},
           {"valid", data.valid.size()},
           {"test", data.test.size()},
           {"out", out_dir}};
    std::cout << j.dump() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowledge-graph link prediction toolkit"};
    app.require_subcommand(1);

    // prepare
    std::string prep_train, prep_out;
    auto* prepare = app.add_subcommand("prepare", "add inverse relations to a triple file");
    prepare->add_option("--train", prep_train, "input triples (tsv)")->required();
    prepare->add_option("--out", prep_out, "output triples (tsv)")->required();

    // train
    std::string tr_train, tr_ent, tr_rel, tr_valid, tr_config, tr_out;
    bool tr_det = false;
    std::int64_t tr_seed = -1;
    auto* train_cmd = app.add_subcommand("train", "train one embedding model");
    train_cmd->add_option("--train", tr_train, "training triples (tsv)")->required();
    train_cmd->add_option("--entity-feat", tr_ent, "entity feature matrix (f32)")->required();
    train_cmd->add_option("--rel-feat", tr_rel, "relation feature matrix (f32)")->required();
    train_cmd->add_option("--valid", tr_valid, "validation candidates");
    train_cmd->add_option("--config", tr_config, "train config (json)");
    train_cmd->add_option("--out", tr_out, "checkpoint output directory")->required();
    train_cmd->add_option("--seed", tr_seed, "override the config seed");
    train_cmd->add_flag("--deterministic", tr_det, "force single-writer updates");

    // mine
    std::string mi_train, mi_out;
    std::int64_t mi_subgraphs = 1, mi_slice = 0, mi_support = 2;
    double mi_conf = 0.0;
    auto* mine_cmd = app.add_subcommand("mine", "mine chain rules from subgraph samples");
    mine_cmd->add_option("--train", mi_train, "training triples (tsv)")->required();
    mine_cmd->add_option("--subgraphs", mi_subgraphs, "number of subgraph slices");
    mine_cmd->add_option("--slice-len", mi_slice, "slice length (0 = ceil(n/k))");
    mine_cmd->add_option("--min-support", mi_support, "minimum rule support");
    mine_cmd->add_option("--min-conf", mi_conf, "minimum rule confidence");
    mine_cmd->add_option("--out", mi_out, "output rules (json)")->required();

    // apply-rules
    std::string ar_train, ar_rules, ar_out;
    double ar_threshold = 0.95;
    auto* apply_cmd = app.add_subcommand("apply-rules", "augment a graph with rule conclusions");
    apply_cmd->add_option("--train", ar_train, "training triples (tsv)")->required();
    apply_cmd->add_option("--rules", ar_rules, "rules file (json)")->required();
    apply_cmd->add_option("--threshold", ar_threshold, "confidence threshold");
    apply_cmd->add_option("--out", ar_out, "augmented triples (tsv)")->required();

    // eval
    std::string ev_scores, ev_model, ev_ent, ev_rel, ev_cands, ev_tie = "optimistic", ev_out;
    int ev_workers = 4;
    auto* eval_cmd = app.add_subcommand("eval", "compute MRR from scores or a model");
    eval_cmd->add_option("--scores", ev_scores, "precomputed score matrix (f32)");
    eval_cmd->add_option("--model", ev_model, "model checkpoint directory");
    eval_cmd->add_option("--entity-feat", ev_ent, "entity features (with --model)");
    eval_cmd->add_option("--rel-feat", ev_rel, "relation features (with --model)");
    eval_cmd->add_option("--candidates", ev_cands, "candidate file")->required();
    eval_cmd->add_option("--tie-break", ev_tie, "optimistic|average")
        ->check(CLI::IsMember({"optimistic", "average"}));
    eval_cmd->add_option("--scores-out", ev_out, "write the score matrix here");
    eval_cmd->add_option("--workers", ev_workers, "prediction workers");

    // ensemble
    std::string en_inputs, en_out;
    auto* ens_cmd = app.add_subcommand("ensemble", "average score matrices");
    ens_cmd->add_option("--inputs", en_inputs, "comma-separated score files")->required();
    ens_cmd->add_option("--out", en_out, "output score file")->required();

    // distill
    std::string di_model, di_teacher, di_cands, di_ent, di_rel, di_config, di_out;
    auto* dist_cmd = app.add_subcommand("distill", "distill teacher scores into a model");
    dist_cmd->add_option("--model", di_model, "student checkpoint directory")->required();
    dist_cmd->add_option("--teacher", di_teacher, "teacher score matrix (f32)")->required();
    dist_cmd->add_option("--candidates", di_cands, "candidate file")->required();
    dist_cmd->add_option("--entity-feat", di_ent, "entity features")->required();
    dist_cmd->add_option("--rel-feat", di_rel, "relation features")->required();
    dist_cmd->add_option("--config", di_config, "distill config (json)");
    dist_cmd->add_option("--out", di_out, "output checkpoint directory")->required();

    // pipeline
    std::string pi_train, pi_ent, pi_rel, pi_valid, pi_test, pi_models, pi_rules, pi_config,
        pi_out;
    std::int64_t pi_stages = 3;
    bool pi_det = false;
    auto* pipe_cmd = app.add_subcommand("pipeline", "staged ensemble + distillation inference");
    pipe_cmd->add_option("--train", pi_train, "training triples (tsv)")->required();
    pipe_cmd->add_option("--entity-feat", pi_ent, "entity features")->required();
    pipe_cmd->add_option("--rel-feat", pi_rel, "relation features")->required();
    pipe_cmd->add_option("--valid", pi_valid, "validation candidates (with truth)")->required();
    pipe_cmd->add_option("--test", pi_test, "test candidates");
    pipe_cmd->add_option("--models", pi_models, "comma-separated checkpoint dirs")->required();
    pipe_cmd->add_option("--rules", pi_rules, "rules file (json)");
    pipe_cmd->add_option("--stages", pi_stages, "distillation stages");
    pipe_cmd->add_option("--config", pi_config, "pipeline config (json)");
    pipe_cmd->add_option("--out", pi_out, "output directory")->required();
    pipe_cmd->add_flag("--deterministic", pi_det, "force single-writer updates");

    // synth
    std::string sy_spec, sy_out;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic benchmark dataset");
    synth_cmd->add_option("--spec", sy_spec, "generator spec (json)")->required();
    synth_cmd->add_option("--out", sy_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage", e.what());
        return kExitUsage;
    }

    try {
        if (prepare->parsed()) return cmd_prepare(prep_train, prep_out);
        if (train_cmd->parsed())
            return cmd_train(tr_train, tr_ent, tr_rel, tr_valid, tr_config, tr_out, tr_det,
                             tr_seed);
        if (mine_cmd->parsed())
            return cmd_mine(mi_train, mi_subgraphs, mi_slice, mi_support, mi_conf, mi_out);
        if (apply_cmd->parsed()) return cmd_apply_rules(ar_train, ar_rules, ar_threshold, ar_out);
        if (eval_cmd->parsed()) {
            if (ev_scores.empty() == ev_model.empty())
                throw ValidationError("eval: pass exactly one of --scores or --model");
            if (!ev_model.empty() && (ev_ent.empty() || ev_rel.empty()))
                throw ValidationError("eval: --model needs --entity-feat and --rel-feat");
            return cmd_eval(ev_scores, ev_model, ev_ent, ev_rel, ev_cands, ev_tie, ev_out,
                            ev_workers);
        }
        if (ens_cmd->parsed()) return cmd_ensemble(en_inputs, en_out);
        if (dist_cmd->parsed())
            return cmd_distill(di_model, di_teacher, di_cands, di_ent, di_rel, di_config, di_out);
        if (pipe_cmd->parsed())
            return cmd_pipeline(pi_train, pi_ent, pi_rel, pi_valid, pi_test, pi_models, pi_rules,
                                pi_stages, pi_config, pi_out, pi_det);
        if (synth_cmd->parsed()) return cmd_synth(sy_spec, sy_out);
        print_error("usage", "no subcommand given");
        return kExitUsage;
    } catch (const ValidationError& e) {
        print_error("validation", e.what());
        return kExitValidation;
    } catch (const RuntimeError& e) {
        print_error("runtime", e.what());
        return kExitRuntime;
    } catch (const std::exception& e) {
        print_error("runtime", e.what());
        return kExitRuntime;
    }
}
