#include "aces/stages.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "aces/errors.hpp"
#include "aces/metrics.hpp"
#include "aces/parallel.hpp"
#include "aces/rng.hpp"
#include "aces/version.hpp"

namespace fs = std::filesystem;

namespace aces::stages {

namespace {

std::string fmt(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
}

void require_file(const fs::path& p, const std::string& producer) {
    if (!fs::exists(p)) {
        throw DependencyError("missing " + p.string() + "; run `aces " + producer + "` first");
    }
}

std::ofstream open_out(const fs::path& p) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + p.string() + " for writing");
    return out;
}

struct SplitView {
    std::vector<corpus::Utterance> train, validation, eval;
};

SplitView split_corpus(std::vector<corpus::Utterance> all) {
    SplitView v;
    for (auto& u : all) {
        if (u.split == "train") v.train.push_back(std::move(u));
        else if (u.split == "validation") v.validation.push_back(std::move(u));
        else v.eval.push_back(std::move(u));
    }
    return v;
}

// first n eval utterances per accent, in manifest order
std::vector<corpus::Utterance> balanced_subset(const std::vector<corpus::Utterance>& eval_set,
                                               int per_accent) {
    if (per_accent <= 0) return eval_set;
    std::map<std::string, int> taken;
    std::vector<corpus::Utterance> subset;
    for (const auto& u : eval_set) {
        if (taken[u.accent] < per_accent) {
            subset.push_back(u);
            taken[u.accent]++;
        }
    }
    return subset;
}

attack::AttackConfig to_attack_config(const AuditConfig& cfg, int layer) {
    attack::AttackConfig a;
    a.epsilon = cfg.attack.epsilon;
    a.steps = cfg.attack.steps;
    a.step_size = cfg.attack.step_size;
    a.beta = cfg.attack.beta;
    a.layer = layer;
    a.per_frame_h = cfg.attack.per_frame_h;
    a.seed = hash_combine(cfg.global_seed, hash_string("attack"));
    return a;
}

}  // namespace

Paths Paths::at(const std::string& output_dir) {
    Paths p;
    p.root = output_dir;
    p.corpus_dir = p.root / "corpus";
    p.manifest = p.corpus_dir / "manifest.csv";
    p.corpus_meta = p.corpus_dir / "corpus_meta.json";
    p.model_dir = p.root / "model";
    p.checkpoint = p.model_dir / "checkpoint.json";
    p.train_history = p.model_dir / "train_history.csv";
    p.subspace_dir = p.root / "subspace";
    p.sweep_csv = p.subspace_dir / "sweep.csv";
    p.three_track_csv = p.subspace_dir / "three_track.csv";
    p.selected_subspace = p.subspace_dir / "selected.json";
    p.random_subspace = p.subspace_dir / "random.json";
    p.permuted_subspace = p.subspace_dir / "permuted.json";
    p.attack_dir = p.root / "attack";
    p.table2_csv = p.attack_dir / "table2.csv";
    p.attack_summary = p.attack_dir / "summary.json";
    p.sweep_dir = p.root / "sweep";
    p.eps_sweep_csv = p.sweep_dir / "eps_sweep.csv";
    p.intervene_dir = p.root / "intervene";
    p.table3_csv = p.intervene_dir / "table3.csv";
    p.ood_json = p.intervene_dir / "ood.json";
    p.report_json = p.root / "report.json";
    return p;
}

fs::path Paths::outcomes_jsonl(const std::string& condition) const {
    return attack_dir / ("outcomes_" + condition + ".jsonl");
}

fs::path Paths::coupling_csv(const std::string& condition) const {
    return attack_dir / ("coupling_" + condition + ".csv");
}

fs::path Paths::perturbed_dir(const std::string& condition) const {
    return attack_dir / "perturbed" / condition;
}

std::string meta_comment(const AuditConfig& cfg, const std::string& stage) {
    return "aces stage=" + stage + " config_hash=" + config_hash(cfg) +
           " seed=" + std::to_string(cfg.global_seed) + " version=" + kToolVersion;
}

GenResult run_gen(const AuditConfig& cfg, int jobs) {
    const Paths paths = Paths::at(cfg.output_dir);
    std::vector<corpus::Utterance> utts = corpus::generate_corpus(cfg.corpus, jobs);
    corpus::save_corpus(utts, paths.corpus_dir.string(), meta_comment(cfg, "gen"));

    nlohmann::json meta;
    meta["stage"] = "gen";
    meta["config_hash"] = config_hash(cfg);
    meta["global_seed"] = cfg.global_seed;
    meta["tool_version"] = kToolVersion;
    nlohmann::json transforms = nlohmann::json::array();
    for (int a = 0; a < cfg.corpus.n_accents; ++a) {
        corpus::AccentTransform t = corpus::accent_transform(a, cfg.corpus);
        transforms.push_back(nlohmann::json{{"accent", t.accent},
                                            {"pitch_scale", t.pitch_scale},
                                            {"spectral_tilt", t.spectral_tilt},
                                            {"duration_scale", t.duration_scale},
                                            {"noise_floor", t.noise_floor}});
    }
    meta["accent_transforms"] = transforms;
    GenResult res;
    std::map<std::string, std::map<std::string, int>> counts;
    for (const auto& u : utts) {
        counts[u.split][u.accent]++;
        if (u.split == "train") res.n_train++;
        else if (u.split == "validation") res.n_val++;
        else res.n_eval++;
    }
    meta["counts"] = counts;
    auto out = open_out(paths.corpus_meta);
    out << meta.dump(1) << "\n";
    return res;
}

model::TrainResult run_train(const AuditConfig& cfg, int jobs) {
    const Paths paths = Paths::at(cfg.output_dir);
    require_file(paths.manifest, "gen");
    std::vector<corpus::Utterance> utts = corpus::load_corpus(paths.manifest.string());

    model::TrainOptions topts = cfg.train;
    topts.jobs = jobs;
    model::TrainResult result = model::train(utts, cfg.model, topts);

    model::Checkpoint ckpt;
    ckpt.config = cfg.model;
    ckpt.params = result.params;
    ckpt.meta["stage"] = "train";
    ckpt.meta["config_hash"] = config_hash(cfg);
    ckpt.meta["global_seed"] = std::to_string(cfg.global_seed);
    ckpt.meta["stopped_epoch"] = std::to_string(result.stopped_epoch);
    fs::create_directories(paths.model_dir);
    model::save_checkpoint(ckpt, paths.checkpoint.string());

    auto out = open_out(paths.train_history);
    out << "# " << meta_comment(cfg, "train") << "\n";
    out << "epoch,train_loss,val_mean_wer";
    for (int a = 0; a < cfg.corpus.n_accents; ++a) out << ",val_wer_" << corpus::accent_label(a);
    out << "\n";
    for (const auto& row : result.history) {
        out << row.epoch << ',' << fmt(row.train_loss) << ',' << fmt(row.val_mean_wer);
        for (int a = 0; a < cfg.corpus.n_accents; ++a) {
            auto it = row.val_accent_wer.find(corpus::accent_label(a));
            out << ',' << (it == row.val_accent_wer.end() ? "" : fmt(it->second));
        }
        out << "\n";
    }
    return result;
}

namespace {

struct EmbeddingTable {
    // per layer (1-based index - 1): N x d pooled embeddings
    std::vector<Eigen::MatrixXd> by_layer;
    std::vector<int> labels;
    std::vector<double> clean_wers;
};

EmbeddingTable embed_split(const std::vector<corpus::Utterance>& split,
                           const model::Params& params, const model::ModelConfig& mcfg,
                           int n_accents, int jobs) {
    EmbeddingTable table;
    table.by_layer.assign(static_cast<std::size_t>(mcfg.n_layers),
                          Eigen::MatrixXd(split.size(), mcfg.hidden_dim));
    table.labels.resize(split.size());
    table.clean_wers.resize(split.size());
    parallel_for(split.size(), jobs, [&](std::size_t i) {
        const corpus::Utterance& u = split[i];
        model::HiddenStates hs = model::forward(u.waveform, params, mcfg);
        for (int l = 1; l <= mcfg.n_layers; ++l) {
            table.by_layer[static_cast<std::size_t>(l - 1)].row(static_cast<Eigen::Index>(i)) =
                model::pooled_embedding(hs, l).transpose();
        }
        table.labels[i] = corpus::accent_index(u.accent, n_accents);
        table.clean_wers[i] = metrics::wer(model::ctc_greedy_decode(hs.logits), u.text);
    });
    return table;
}

subspace::LabeledEmbeddings at_layer(const EmbeddingTable& table, int layer, int n_classes) {
    subspace::LabeledEmbeddings d;
    d.x = table.by_layer[static_cast<std::size_t>(layer - 1)];
    d.labels = table.labels;
    d.n_classes = n_classes;
    return d;
}

}  // namespace

ExtractResult run_extract(const AuditConfig& cfg, int jobs) {
    const Paths paths = Paths::at(cfg.output_dir);
    require_file(paths.manifest, "gen");
    require_file(paths.checkpoint, "train");
    model::Checkpoint ckpt = model::load_checkpoint(paths.checkpoint.string());
    SplitView splits = split_corpus(corpus::load_corpus(paths.manifest.string()));
    if (splits.train.empty() || splits.validation.empty() || splits.eval.empty()) {
        throw DependencyError("extract: corpus is missing a split; rerun `aces gen`");
    }

    const int n_acc = cfg.corpus.n_accents;
    EmbeddingTable fit_table = embed_split(splits.train, ckpt.params, ckpt.config, n_acc, jobs);
    EmbeddingTable val_table =
        embed_split(splits.validation, ckpt.params, ckpt.config, n_acc, jobs);
    EmbeddingTable eval_table = embed_split(splits.eval, ckpt.params, ckpt.config, n_acc, jobs);

    subspace::FitOptions fopts;
    fopts.ridge_lambda = cfg.subspace.ridge_lambda;
    fopts.lda_gamma_scale = cfg.subspace.lda_gamma_scale;
    fopts.probe_steps = cfg.subspace.probe_steps;
    fopts.probe_lr = cfg.subspace.probe_lr;
    fopts.seed = hash_combine(cfg.global_seed, hash_string("subspace-fit"));

    std::vector<int> layers = cfg.subspace.layers;
    if (layers.empty()) {
        for (int l = 1; l <= cfg.model.n_layers; ++l) layers.push_back(l);
    }

    ExtractResult result;
    std::vector<std::string> skipped;
    for (const std::string& mname : cfg.subspace.methods) {
        const subspace::Method method = subspace::method_from_name(mname);
        for (int layer : layers) {
            subspace::LabeledEmbeddings fit_data = at_layer(fit_table, layer, n_acc);
            subspace::LabeledEmbeddings val_data = at_layer(val_table, layer, n_acc);
            for (int k : cfg.subspace.k_values) {
                subspace::SweepCell cell;
                cell.layer = layer;
                cell.k = k;
                cell.method = method;
                try {
                    subspace::Subspace sub = subspace::fit(method, fit_data, k, fopts);
                    sub.layer = layer;
                    cell.probe_accuracy = subspace::probe_accuracy(sub, val_data);
                    cell.split_half_angle_deg = subspace::split_half_stability(
                        fit_data, method, k, fopts,
                        hash_combine(fopts.seed, static_cast<std::uint64_t>(layer * 100 + k)));
                    cell.wer_projection_r = subspace::wer_projection_correlation(
                        sub, val_data.x, val_table.clean_wers);
                } catch (const std::exception& e) {
                    skipped.push_back(mname + "/layer" + std::to_string(layer) + "/k" +
                                      std::to_string(k) + ": " + e.what());
                    continue;
                }
                result.sweep.push_back(cell);
            }
        }
    }
    if (result.sweep.empty()) {
        throw NumericalError("extract: every sweep cell failed (first: " +
                             (skipped.empty() ? std::string("?") : skipped.front()) + ")");
    }
    result.selection =
        subspace::select_layer_k(result.sweep, cfg.subspace.stability_threshold_deg);
    const subspace::SweepCell& chosen = result.selection.chosen;
    if (result.selection.stability_warning) {
        std::cerr << "extract: warning: no sweep cell met the stability threshold of "
                  << cfg.subspace.stability_threshold_deg << " deg; using best accuracy\n";
    }

    subspace::LabeledEmbeddings fit_data = at_layer(fit_table, chosen.layer, n_acc);
    subspace::LabeledEmbeddings eval_data = at_layer(eval_table, chosen.layer, n_acc);

    result.accent = subspace::fit(chosen.method, fit_data, chosen.k, fopts);
    result.accent.layer = chosen.layer;
    result.accent.fit_seed = fopts.seed;
    result.accent.diagnostics.probe_accuracy = subspace::probe_accuracy(result.accent, eval_data);
    result.accent.diagnostics.split_half_angle_deg = chosen.split_half_angle_deg;
    result.accent.diagnostics.wer_projection_r =
        subspace::wer_projection_correlation(result.accent, eval_data.x, eval_table.clean_wers);

    result.random = subspace::random_subspace(
        cfg.model.hidden_dim, chosen.k, hash_combine(cfg.global_seed, hash_string("subspace-random")));
    result.random.layer = chosen.layer;

    result.permuted = subspace::permuted_label_subspace(
        fit_data, chosen.method, chosen.k, fopts,
        hash_combine(cfg.global_seed, hash_string("subspace-permute")));
    result.permuted.layer = chosen.layer;
    result.permuted_probe_accuracy_eval = subspace::probe_accuracy(result.permuted, eval_data);
    result.permuted.diagnostics.probe_accuracy = result.permuted_probe_accuracy_eval;

    // sweep.csv carries all cells, three tracks each
    {
        auto out = open_out(paths.sweep_csv);
        out << "# " << meta_comment(cfg, "extract") << "\n";
        out << "layer,k,method,probe_accuracy,split_half_angle_deg,wer_projection_r\n";
        for (const auto& cell : result.sweep) {
            out << cell.layer << ',' << cell.k << ',' << subspace::method_name(cell.method) << ','
                << fmt(cell.probe_accuracy) << ',' << fmt(cell.split_half_angle_deg) << ','
                << fmt(cell.wer_projection_r) << "\n";
        }
    }
    {
        auto out = open_out(paths.three_track_csv);
        out << "# " << meta_comment(cfg, "extract") << "\n";
        out << "layer,probe_accuracy,wer_projection_r,split_half_angle_deg\n";
        for (const auto& cell : result.sweep) {
            if (cell.method == chosen.method && cell.k == chosen.k) {
                out << cell.layer << ',' << fmt(cell.probe_accuracy) << ','
                    << fmt(cell.wer_projection_r) << ',' << fmt(cell.split_half_angle_deg)
                    << "\n";
            }
        }
    }
    fs::create_directories(paths.subspace_dir);
    subspace::save_subspace(result.accent, paths.selected_subspace.string(),
                            meta_comment(cfg, "extract"));
    subspace::save_subspace(result.random, paths.random_subspace.string(),
                            meta_comment(cfg, "extract"));
    subspace::save_subspace(result.permuted, paths.permuted_subspace.string(),
                            meta_comment(cfg, "extract"));
    return result;
}

namespace {

void write_table2(const Paths& paths, const AuditConfig& cfg,
                  const std::vector<std::string>& conditions,
                  const std::map<std::string, std::map<std::string, double>>& per_accent,
                  const std::map<std::string, double>& disparity_pp) {
    auto out = open_out(paths.table2_csv);
    out << "# " << meta_comment(cfg, "attack") << "\n";
    out << "accent";
    for (const auto& c : conditions) out << ',' << c;
    out << "\n";
    for (int a = 0; a < cfg.corpus.n_accents; ++a) {
        const std::string accent = corpus::accent_label(a);
        out << accent;
        for (const auto& c : conditions) {
            out << ',' << fmt(per_accent.at(c).at(accent) * 100.0, 4);
        }
        out << "\n";
    }
    out << "disparity";
    for (const auto& c : conditions) out << ',' << fmt(disparity_pp.at(c), 4);
    out << "\n";
}

}  // namespace

AttackStageResult run_attack(const AuditConfig& cfg, int jobs) {
    const Paths paths = Paths::at(cfg.output_dir);
    require_file(paths.manifest, "gen");
    require_file(paths.checkpoint, "train");
    require_file(paths.selected_subspace, "extract");
    model::Checkpoint ckpt = model::load_checkpoint(paths.checkpoint.string());
    SplitView splits = split_corpus(corpus::load_corpus(paths.manifest.string()));

    subspace::Subspace accent_sub = subspace::load_subspace(paths.selected_subspace.string());
    subspace::Subspace random_sub = subspace::load_subspace(paths.random_subspace.string());
    subspace::Subspace permuted_sub = subspace::load_subspace(paths.permuted_subspace.string());
    attack::SubspaceSet subs;
    subs.accent = &accent_sub;
    subs.random = &random_sub;
    subs.permuted = &permuted_sub;

    attack::AttackConfig acfg = to_attack_config(cfg, accent_sub.layer);
    const std::uint64_t matched = acfg.matched_hash();
    fs::create_directories(paths.attack_dir);

    AttackStageResult result;
    for (const std::string& cname : cfg.attack.conditions) {
        const attack::Condition cond = attack::condition_from_name(cname);
        if (acfg.matched_hash() != matched) {
            throw NumericalError("attack: matched-control hash drifted across conditions");
        }
        const auto started = std::chrono::steady_clock::now();
        attack::ConditionResult res =
            attack::run_condition(splits.eval, cond, acfg, subs, ckpt.params, ckpt.config, jobs);
        result.seconds[cname] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        if (!res.failures.empty()) {
            std::cerr << "attack: " << res.failures.size() << " utterances failed under "
                      << cname << " (first: " << res.failures.front().second << ")\n";
        }
        attack::save_outcomes_jsonl(res.outcomes, paths.outcomes_jsonl(cname).string(),
                                    meta_comment(cfg, "attack"));
        {
            auto out = open_out(paths.coupling_csv(cname));
            out << "# " << meta_comment(cfg, "attack") << "\n";
            out << "id,accent,coupling,delta_wer\n";
            for (const auto& o : res.outcomes) {
                out << o.id << ',' << o.accent << ',' << fmt(o.coupling) << ','
                    << fmt(o.delta_wer) << "\n";
            }
        }
        if (cond == attack::Condition::accent_subspace) {
            const fs::path dir = paths.perturbed_dir(cname);
            fs::create_directories(dir);
            for (std::size_t i = 0; i < res.outcomes.size(); ++i) {
                const attack::AttackOutcome& o = res.outcomes[i];
                const corpus::Utterance* utt = nullptr;
                for (const auto& u : splits.eval) {
                    if (u.id == o.id) {
                        utt = &u;
                        break;
                    }
                }
                if (!utt) continue;
                std::vector<double> adv(utt->waveform.size());
                for (std::size_t n = 0; n < adv.size(); ++n) {
                    adv[n] = utt->waveform[n] + o.delta[n];
                }
                corpus::save_audio_f32(adv, (dir / (o.id + ".f32")).string());
            }
        }

        std::vector<double> wers;
        std::vector<std::string> accents;
        double m_sum = 0.0;
        for (const auto& o : res.outcomes) {
            wers.push_back(o.attacked_wer);
            accents.push_back(o.accent);
            m_sum += o.coupling;
        }
        metrics::DisparityRow drow = metrics::disparity_row(wers, accents);
        result.mean_coupling[cname] =
            res.outcomes.empty() ? 0.0 : m_sum / static_cast<double>(res.outcomes.size());
        result.disparity_pp[cname] = drow.disparity_pp;
        result.mean_wer[cname] = drow.mean_wer;
        result.per_accent_wer[cname] = drow.per_accent_mean_wer;
        result.by_condition[cname] = std::move(res);
    }

    write_table2(paths, cfg, cfg.attack.conditions, result.per_accent_wer, result.disparity_pp);
    {
        nlohmann::json summary;
        summary["stage"] = "attack";
        summary["config_hash"] = config_hash(cfg);
        summary["global_seed"] = cfg.global_seed;
        summary["tool_version"] = kToolVersion;
        summary["matched_hash"] = matched;
        summary["layer"] = accent_sub.layer;
        summary["k"] = accent_sub.k;
        for (const auto& [cname, res] : result.by_condition) {
            summary["conditions"][cname] = {
                {"mean_wer", result.mean_wer.at(cname)},
                {"disparity_pp", result.disparity_pp.at(cname)},
                {"mean_coupling", result.mean_coupling.at(cname)},
                {"failures", res.failures.size()},
                {"n", res.outcomes.size()}};
        }
        auto out = open_out(paths.attack_summary);
        out << summary.dump(1) << "\n";
    }
    return result;
}

std::vector<attack::EpsilonSweepRow> run_sweep_eps(const AuditConfig& cfg, int jobs) {
    const Paths paths = Paths::at(cfg.output_dir);
    require_file(paths.manifest, "gen");
    require_file(paths.checkpoint, "train");
    require_file(paths.selected_subspace, "extract");
    model::Checkpoint ckpt = model::load_checkpoint(paths.checkpoint.string());
    SplitView splits = split_corpus(corpus::load_corpus(paths.manifest.string()));

    subspace::Subspace accent_sub = subspace::load_subspace(paths.selected_subspace.string());
    subspace::Subspace random_sub = subspace::load_subspace(paths.random_subspace.string());
    subspace::Subspace permuted_sub = subspace::load_subspace(paths.permuted_subspace.string());
    attack::SubspaceSet subs;
    subs.accent = &accent_sub;
    subs.random = &random_sub;
    subs.permuted = &permuted_sub;

    std::vector<corpus::Utterance> subset =
        balanced_subset(splits.eval, cfg.attack.sweep_subset_per_accent);
    std::vector<attack::Condition> conditions;
    for (const auto& cname : cfg.attack.sweep_conditions) {
        conditions.push_back(attack::condition_from_name(cname));
    }
    attack::AttackConfig acfg = to_attack_config(cfg, accent_sub.layer);
    std::vector<attack::EpsilonSweepRow> rows = attack::epsilon_sweep(
        subset, cfg.attack.epsilon_sweep, conditions, acfg, subs, ckpt.params, ckpt.config, jobs);

    auto out = open_out(paths.eps_sweep_csv);
    out << "# " << meta_comment(cfg, "sweep-eps") << "\n";
    out << "epsilon,condition,mean_wer_pct,disparity_pp,mean_coupling\n";
    for (const auto& row : rows) {
        out << fmt(row.epsilon) << ',' << attack::condition_name(row.condition) << ','
            << fmt(row.mean_wer * 100.0, 4) << ',' << fmt(row.disparity_pp, 4) << ','
            << fmt(row.mean_coupling) << "\n";
    }
    return rows;
}

intervention::InterventionReport run_intervene(const AuditConfig& cfg, int jobs) {
    const Paths paths = Paths::at(cfg.output_dir);
    require_file(paths.manifest, "gen");
    require_file(paths.checkpoint, "train");
    require_file(paths.selected_subspace, "extract");
    model::Checkpoint ckpt = model::load_checkpoint(paths.checkpoint.string());
    SplitView splits = split_corpus(corpus::load_corpus(paths.manifest.string()));
    subspace::Subspace accent_sub = subspace::load_subspace(paths.selected_subspace.string());

    const fs::path attacked_dir =
        paths.perturbed_dir(attack::condition_name(attack::Condition::accent_subspace));
    if (!fs::exists(attacked_dir)) {
        throw DependencyError("missing attacked audio at " + attacked_dir.string() +
                              "; run `aces attack` first");
    }
    std::map<std::string, std::vector<double>> attacked;
    for (const auto& u : splits.eval) {
        const fs::path p = attacked_dir / (u.id + ".f32");
        if (!fs::exists(p)) {
            throw DependencyError("missing attacked audio for '" + u.id +
                                  "'; rerun `aces attack`");
        }
        attacked[u.id] = corpus::load_audio_f32(p.string());
    }

    intervention::InterventionConfig icfg;
    icfg.alpha = cfg.intervention.alpha;
    icfg.layer = accent_sub.layer;
    icfg.apply_to = cfg.intervention.pooled_equivalent
                        ? intervention::ApplyTo::pooled_equivalent
                        : intervention::ApplyTo::per_frame;
    intervention::InterventionReport report = intervention::evaluate_intervention(
        splits.eval, attacked, ckpt.params, ckpt.config, accent_sub, icfg, jobs);

    {
        auto out = open_out(paths.table3_csv);
        out << "# " << meta_comment(cfg, "intervene") << "\n";
        out << "accent,clean_base,clean_int,att_base,att_int\n";
        for (const auto& row : report.rows) {
            out << row.accent << ',' << fmt(row.clean_base * 100.0, 4) << ','
                << fmt(row.clean_int * 100.0, 4) << ',' << fmt(row.att_base * 100.0, 4) << ','
                << fmt(row.att_int * 100.0, 4) << "\n";
        }
        out << "mean," << fmt(report.mean.clean_base * 100.0, 4) << ','
            << fmt(report.mean.clean_int * 100.0, 4) << ',' << fmt(report.mean.att_base * 100.0, 4)
            << ',' << fmt(report.mean.att_int * 100.0, 4) << "\n";
        out << "disparity," << fmt(report.disparity_pp.clean_base, 4) << ','
            << fmt(report.disparity_pp.clean_int, 4) << ',' << fmt(report.disparity_pp.att_base, 4)
            << ',' << fmt(report.disparity_pp.att_int, 4) << "\n";
    }
    {
        nlohmann::json j;
        j["stage"] = "intervene";
        j["config_hash"] = config_hash(cfg);
        j["global_seed"] = cfg.global_seed;
        j["tool_version"] = kToolVersion;
        j["alpha"] = cfg.intervention.alpha;
        if (report.ood_mahalanobis.has_value()) {
            j["ood_mahalanobis_next_layer"] = *report.ood_mahalanobis;
        } else {
            j["ood_mahalanobis_next_layer"] = nullptr;
        }
        auto out = open_out(paths.ood_json);
        out << j.dump(1) << "\n";
    }
    return report;
}

std::map<std::string, std::map<std::string, double>> read_table2(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DependencyError("read_table2: cannot open " + path.string());
    std::string line;
    std::vector<std::string> conditions;
    std::map<std::string, std::map<std::string, double>> table;  // condition -> accent -> pct
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cols;
        std::istringstream iss(line);
        std::string field;
        while (std::getline(iss, field, ',')) cols.push_back(field);
        if (!header_seen) {
            if (cols.empty() || cols[0] != "accent") {
                throw ConfigError("read_table2: bad header in " + path.string());
            }
            conditions.assign(cols.begin() + 1, cols.end());
            header_seen = true;
            continue;
        }
        if (cols.size() != conditions.size() + 1) {
            throw ConfigError("read_table2: ragged row in " + path.string());
        }
        if (cols[0] == "disparity") continue;  // derived, recomputed by callers
        for (std::size_t c = 0; c < conditions.size(); ++c) {
            table[conditions[c]][cols[0]] = std::stod(cols[c + 1]);
        }
    }
    if (!header_seen) throw ConfigError("read_table2: empty file " + path.string());
    return table;
}

std::map<std::string, double> table2_disparities(
    const std::map<std::string, std::map<std::string, double>>& table) {
    std::map<std::string, double> out;
    for (const auto& [condition, accents] : table) {
        std::map<std::string, double> fractions;
        for (const auto& [accent, pct] : accents) fractions[accent] = pct / 100.0;
        out[condition] = metrics::disparity(fractions);
    }
    return out;
}

namespace {

nlohmann::json csv_as_json_rows(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DependencyError("cannot open " + path.string());
    std::string line;
    std::vector<std::string> header;
    nlohmann::json rows = nlohmann::json::array();
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cols;
        std::istringstream iss(line);
        std::string field;
        while (std::getline(iss, field, ',')) cols.push_back(field);
        if (header.empty()) {
            header = cols;
            continue;
        }
        nlohmann::json row;
        for (std::size_t i = 0; i < header.size() && i < cols.size(); ++i) {
            row[header[i]] = cols[i];
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

nlohmann::json run_report(const AuditConfig& cfg) {
    const Paths paths = Paths::at(cfg.output_dir);
    require_file(paths.table2_csv, "attack");
    require_file(paths.selected_subspace, "extract");
    require_file(paths.eps_sweep_csv, "sweep-eps");
    require_file(paths.table3_csv, "intervene");

    nlohmann::json report;
    report["stage"] = "report";
    report["config_hash"] = config_hash(cfg);
    report["global_seed"] = cfg.global_seed;
    report["tool_version"] = kToolVersion;
    report["config"] = config_to_json(cfg);

    // Table 2 analog
    auto table2 = read_table2(paths.table2_csv);
    auto disparities = table2_disparities(table2);
    report["tables"]["table2_pct"] = table2;
    report["headline"]["disparity_by_condition_pp"] = disparities;
    if (disparities.count("clean")) {
        report["headline"]["clean_disparity_pp"] = disparities.at("clean");
    }

    // coupling & per-accent gaps from the raw outcomes
    auto mean_coupling_of = [&](const std::string& cname) {
        std::vector<attack::AttackOutcome> outs =
            attack::load_outcomes_jsonl(paths.outcomes_jsonl(cname).string());
        double sum = 0.0;
        for (const auto& o : outs) sum += o.coupling;
        return outs.empty() ? 0.0 : sum / static_cast<double>(outs.size());
    };
    nlohmann::json couplings;
    for (const auto& cname : cfg.attack.conditions) {
        if (fs::exists(paths.outcomes_jsonl(cname))) {
            couplings[cname] = mean_coupling_of(cname);
        }
    }
    report["headline"]["mean_coupling_by_condition"] = couplings;
    if (couplings.contains("accent") && couplings.contains("random") &&
        couplings["random"].get<double>() > 0.0) {
        report["headline"]["coupling_ratio_accent_over_random"] =
            couplings["accent"].get<double>() / couplings["random"].get<double>();
    }

    auto gap_stats = [&](const std::string& a, const std::string& b) -> nlohmann::json {
        if (!table2.count(a) || !table2.count(b)) return nullptr;
        double sum = 0.0;
        int positive = 0, n = 0;
        nlohmann::json per_accent;
        for (const auto& [accent, pct] : table2.at(a)) {
            const double gap = pct - table2.at(b).at(accent);
            per_accent[accent] = gap;
            sum += gap;
            if (gap > 0) ++positive;
            ++n;
        }
        return nlohmann::json{{"mean_pp", sum / std::max(1, n)},
                              {"positive_accents", positive},
                              {"n_accents", n},
                              {"per_accent_pp", per_accent}};
    };
    report["headline"]["gap_accent_minus_random"] = gap_stats("accent", "random");
    report["headline"]["gap_permuted_minus_random"] = gap_stats("permuted", "random");

    // epsilon sweep trend
    report["tables"]["eps_sweep"] = csv_as_json_rows(paths.eps_sweep_csv);
    {
        std::map<double, std::map<std::string, double>> disp;  // eps -> condition -> pp
        for (const auto& row : report["tables"]["eps_sweep"]) {
            disp[std::stod(row.at("epsilon").get<std::string>())]
                [row.at("condition").get<std::string>()] =
                    std::stod(row.at("disparity_pp").get<std::string>());
        }
        if (!disp.empty()) {
            const auto& lo = *disp.begin();
            const auto& hi = *disp.rbegin();
            if (lo.second.count("accent") && lo.second.count("random") &&
                hi.second.count("accent") && hi.second.count("random")) {
                report["headline"]["eps_gap_accent_minus_random_pp"] = {
                    {"smallest_eps", lo.first},
                    {"smallest", lo.second.at("accent") - lo.second.at("random")},
                    {"largest_eps", hi.first},
                    {"largest", hi.second.at("accent") - hi.second.at("random")}};
            }
        }
    }

    // intervention (Table 3 analog)
    report["tables"]["table3_pct"] = csv_as_json_rows(paths.table3_csv);
    {
        nlohmann::json intv;
        for (const auto& row : report["tables"]["table3_pct"]) {
            if (row.at("accent").get<std::string>() == "disparity") {
                intv["clean_disparity_base_pp"] = std::stod(row.at("clean_base").get<std::string>());
                intv["clean_disparity_int_pp"] = std::stod(row.at("clean_int").get<std::string>());
                intv["attacked_disparity_base_pp"] =
                    std::stod(row.at("att_base").get<std::string>());
                intv["attacked_disparity_int_pp"] = std::stod(row.at("att_int").get<std::string>());
            }
            if (row.at("accent").get<std::string>() == "mean") {
                intv["clean_mean_base_pct"] = std::stod(row.at("clean_base").get<std::string>());
                intv["clean_mean_int_pct"] = std::stod(row.at("clean_int").get<std::string>());
                intv["attacked_mean_base_pct"] = std::stod(row.at("att_base").get<std::string>());
                intv["attacked_mean_int_pct"] = std::stod(row.at("att_int").get<std::string>());
            }
        }
        report["headline"]["intervention"] = intv;
    }

    // chosen subspace
    {
        subspace::Subspace sel = subspace::load_subspace(paths.selected_subspace.string());
        report["headline"]["selected_subspace"] = {
            {"layer", sel.layer},
            {"k", sel.k},
            {"method", subspace::method_name(sel.method)},
            {"probe_accuracy_eval", sel.diagnostics.probe_accuracy},
            {"split_half_angle_deg", sel.diagnostics.split_half_angle_deg},
            {"wer_projection_r", sel.diagnostics.wer_projection_r}};
        if (fs::exists(paths.permuted_subspace)) {
            subspace::Subspace perm = subspace::load_subspace(paths.permuted_subspace.string());
            report["headline"]["permuted_probe_accuracy_eval"] =
                perm.diagnostics.probe_accuracy;
        }
    }
    report["tables"]["sweep"] = csv_as_json_rows(paths.sweep_csv);
    report["tables"]["three_track"] = csv_as_json_rows(paths.three_track_csv);

    auto out = open_out(paths.report_json);
    out << report.dump(1) << "\n";
    return report;
}

nlohmann::json run_full_audit(const AuditConfig& cfg, int jobs) {
    run_gen(cfg, jobs);
    run_train(cfg, jobs);
    run_extract(cfg, jobs);
    run_attack(cfg, jobs);
    run_sweep_eps(cfg, jobs);
    run_intervene(cfg, jobs);
    return run_report(cfg);
}

}  // namespace aces::stages
