#include "aces/audit_config.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "aces/errors.hpp"
#include "aces/rng.hpp"

namespace aces {

void finalize(AuditConfig& cfg) {
    cfg.corpus.seed = hash_combine(cfg.global_seed, hash_string("corpus"));
    cfg.model.seed = hash_combine(cfg.global_seed, hash_string("model-init"));
    cfg.train.seed = hash_combine(cfg.global_seed, hash_string("train"));
    cfg.model.vocab = cfg.corpus.vocab_size;
    cfg.model.sample_rate = cfg.corpus.sample_rate;
    cfg.train.reference_accent = corpus::accent_label(0);
    corpus::validate(cfg.corpus);
    model::validate(cfg.model);
    if (cfg.intervention.alpha <= 0.0 || cfg.intervention.alpha > 1.0) {
        throw ConfigError("config: intervention.alpha must lie in (0, 1]");
    }
    if (cfg.subspace.k_values.empty()) throw ConfigError("config: subspace.k_values empty");
    for (int k : cfg.subspace.k_values) {
        if (k < 1 || k >= cfg.model.hidden_dim) {
            throw ConfigError("config: subspace k must lie in [1, hidden_dim)");
        }
    }
    for (int l : cfg.subspace.layers) {
        if (l < 1 || l > cfg.model.n_layers) {
            throw ConfigError("config: subspace layer out of range");
        }
    }
}

AuditConfig default_config() {
    AuditConfig cfg;
    finalize(cfg);
    return cfg;
}

namespace {

nlohmann::json corpus_json(const corpus::CorpusConfig& c) {
    return nlohmann::json{{"n_accents", c.n_accents},
                          {"utterances_per_accent_eval", c.utterances_per_accent_eval},
                          {"utterances_per_accent_val", c.utterances_per_accent_val},
                          {"train_size", c.train_size},
                          {"train_skew", c.train_skew},
                          {"vocab_size", c.vocab_size},
                          {"sample_rate", c.sample_rate},
                          {"min_text_len", c.min_text_len},
                          {"max_text_len", c.max_text_len},
                          {"token_duration_s", c.token_duration_s},
                          {"token_gap_s", c.token_gap_s},
                          {"edge_pad_s", c.edge_pad_s}};
}

void corpus_from(const nlohmann::json& j, corpus::CorpusConfig& c) {
    c.n_accents = j.value("n_accents", c.n_accents);
    c.utterances_per_accent_eval =
        j.value("utterances_per_accent_eval", c.utterances_per_accent_eval);
    c.utterances_per_accent_val =
        j.value("utterances_per_accent_val", c.utterances_per_accent_val);
    c.train_size = j.value("train_size", c.train_size);
    c.train_skew = j.value("train_skew", c.train_skew);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.sample_rate = j.value("sample_rate", c.sample_rate);
    c.min_text_len = j.value("min_text_len", c.min_text_len);
    c.max_text_len = j.value("max_text_len", c.max_text_len);
    c.token_duration_s = j.value("token_duration_s", c.token_duration_s);
    c.token_gap_s = j.value("token_gap_s", c.token_gap_s);
    c.edge_pad_s = j.value("edge_pad_s", c.edge_pad_s);
}

nlohmann::json model_json(const model::ModelConfig& m) {
    return nlohmann::json{{"n_layers", m.n_layers},
                          {"hidden_dim", m.hidden_dim},
                          {"frame_size", m.frame_size},
                          {"hop", m.hop},
                          {"n_filters", m.n_filters},
                          {"conv_radius", m.conv_radius},
                          {"eps_log", m.eps_log},
                          {"filter_min_hz", m.filter_min_hz},
                          {"filter_max_hz", m.filter_max_hz}};
}

void model_from(const nlohmann::json& j, model::ModelConfig& m) {
    m.n_layers = j.value("n_layers", m.n_layers);
    m.hidden_dim = j.value("hidden_dim", m.hidden_dim);
    m.frame_size = j.value("frame_size", m.frame_size);
    m.hop = j.value("hop", m.hop);
    m.n_filters = j.value("n_filters", m.n_filters);
    m.conv_radius = j.value("conv_radius", m.conv_radius);
    m.eps_log = j.value("eps_log", m.eps_log);
    m.filter_min_hz = j.value("filter_min_hz", m.filter_min_hz);
    m.filter_max_hz = j.value("filter_max_hz", m.filter_max_hz);
}

nlohmann::json train_json(const model::TrainOptions& t) {
    return nlohmann::json{{"max_epochs", t.max_epochs},
                          {"min_epochs", t.min_epochs},
                          {"batch_size", t.batch_size},
                          {"lr", t.lr},
                          {"momentum", t.momentum},
                          {"lr_decay", t.lr_decay},
                          {"grad_clip", t.grad_clip},
                          {"target_val_wer", t.target_val_wer},
                          {"require_reference_lowest", t.require_reference_lowest}};
}

void train_from(const nlohmann::json& j, model::TrainOptions& t) {
    t.max_epochs = j.value("max_epochs", t.max_epochs);
    t.min_epochs = j.value("min_epochs", t.min_epochs);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.lr = j.value("lr", t.lr);
    t.momentum = j.value("momentum", t.momentum);
    t.lr_decay = j.value("lr_decay", t.lr_decay);
    t.grad_clip = j.value("grad_clip", t.grad_clip);
    t.target_val_wer = j.value("target_val_wer", t.target_val_wer);
    t.require_reference_lowest = j.value("require_reference_lowest", t.require_reference_lowest);
}

nlohmann::json subspace_json(const SubspaceStageConfig& s) {
    return nlohmann::json{{"methods", s.methods},
                          {"layers", s.layers},
                          {"k_values", s.k_values},
                          {"ridge_lambda", s.ridge_lambda},
                          {"lda_gamma_scale", s.lda_gamma_scale},
                          {"probe_steps", s.probe_steps},
                          {"probe_lr", s.probe_lr},
                          {"stability_threshold_deg", s.stability_threshold_deg}};
}

void subspace_from(const nlohmann::json& j, SubspaceStageConfig& s) {
    s.methods = j.value("methods", s.methods);
    s.layers = j.value("layers", s.layers);
    s.k_values = j.value("k_values", s.k_values);
    s.ridge_lambda = j.value("ridge_lambda", s.ridge_lambda);
    s.lda_gamma_scale = j.value("lda_gamma_scale", s.lda_gamma_scale);
    s.probe_steps = j.value("probe_steps", s.probe_steps);
    s.probe_lr = j.value("probe_lr", s.probe_lr);
    s.stability_threshold_deg = j.value("stability_threshold_deg", s.stability_threshold_deg);
}

nlohmann::json attack_json(const AttackStageConfig& a) {
    return nlohmann::json{{"epsilon", a.epsilon},
                          {"steps", a.steps},
                          {"step_size", a.step_size},
                          {"beta", a.beta},
                          {"per_frame_h", a.per_frame_h},
                          {"conditions", a.conditions},
                          {"epsilon_sweep", a.epsilon_sweep},
                          {"sweep_conditions", a.sweep_conditions},
                          {"sweep_subset_per_accent", a.sweep_subset_per_accent}};
}

void attack_from(const nlohmann::json& j, AttackStageConfig& a) {
    a.epsilon = j.value("epsilon", a.epsilon);
    a.steps = j.value("steps", a.steps);
    a.step_size = j.value("step_size", a.step_size);
    a.beta = j.value("beta", a.beta);
    a.per_frame_h = j.value("per_frame_h", a.per_frame_h);
    a.conditions = j.value("conditions", a.conditions);
    a.epsilon_sweep = j.value("epsilon_sweep", a.epsilon_sweep);
    a.sweep_conditions = j.value("sweep_conditions", a.sweep_conditions);
    a.sweep_subset_per_accent = j.value("sweep_subset_per_accent", a.sweep_subset_per_accent);
}

}  // namespace

nlohmann::json config_to_json(const AuditConfig& cfg) {
    return nlohmann::json{{"global_seed", cfg.global_seed},
                          {"output_dir", cfg.output_dir},
                          {"corpus", corpus_json(cfg.corpus)},
                          {"model", model_json(cfg.model)},
                          {"train", train_json(cfg.train)},
                          {"subspace", subspace_json(cfg.subspace)},
                          {"attack", attack_json(cfg.attack)},
                          {"intervention",
                           nlohmann::json{{"alpha", cfg.intervention.alpha},
                                          {"pooled_equivalent", cfg.intervention.pooled_equivalent}}}};
}

AuditConfig config_from_json(const nlohmann::json& j) {
    AuditConfig cfg;
    cfg.global_seed = j.value("global_seed", cfg.global_seed);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    if (j.contains("corpus")) corpus_from(j.at("corpus"), cfg.corpus);
    if (j.contains("model")) model_from(j.at("model"), cfg.model);
    if (j.contains("train")) train_from(j.at("train"), cfg.train);
    if (j.contains("subspace")) subspace_from(j.at("subspace"), cfg.subspace);
    if (j.contains("attack")) attack_from(j.at("attack"), cfg.attack);
    if (j.contains("intervention")) {
        cfg.intervention.alpha = j.at("intervention").value("alpha", cfg.intervention.alpha);
        cfg.intervention.pooled_equivalent =
            j.at("intervention").value("pooled_equivalent", cfg.intervention.pooled_equivalent);
    }
    finalize(cfg);
    return cfg;
}

AuditConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("load_config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("load_config: bad JSON in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

void save_config(const AuditConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("save_config: cannot open " + path);
    out << config_to_json(cfg).dump(2) << "\n";
    if (!out.good()) throw ConfigError("save_config: write failed for " + path);
}

std::string config_hash(const AuditConfig& cfg) {
    const std::string dump = config_to_json(cfg).dump();
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << hash_string(dump);
    return os.str();
}

}  // namespace aces
