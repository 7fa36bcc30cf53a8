#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "aces/corpus.hpp"
#include "aces/model.hpp"

namespace aces {

struct SubspaceStageConfig {
    std::vector<std::string> methods = {"ridge", "lda", "centroid_diff", "linear_probe"};
    std::vector<int> layers;  // empty = all encoder layers
    std::vector<int> k_values = {4, 8, 16};
    double ridge_lambda = 1e-2;
    double lda_gamma_scale = 1e-3;
    int probe_steps = 300;
    double probe_lr = 0.5;
    double stability_threshold_deg = 60.0;
};

struct AttackStageConfig {
    double epsilon = 0.01;
    int steps = 80;
    double step_size = 0.0;  // <= 0: 2.5 * epsilon / steps
    double beta = 2.0;
    bool per_frame_h = false;
    std::vector<std::string> conditions = {"clean", "unconstrained", "random", "accent",
                                           "permuted"};
    std::vector<double> epsilon_sweep = {0.005, 0.01, 0.05};
    std::vector<std::string> sweep_conditions = {"unconstrained", "random", "accent"};
    // epsilon sweeps run on an accent-balanced eval subset to bound runtime
    int sweep_subset_per_accent = 40;
};

struct InterventionStageConfig {
    double alpha = 0.5;
    bool pooled_equivalent = false;
};

struct AuditConfig {
    corpus::CorpusConfig corpus;
    model::ModelConfig model;
    model::TrainOptions train;
    SubspaceStageConfig subspace;
    AttackStageConfig attack;
    InterventionStageConfig intervention;
    std::string output_dir = "out";
    std::uint64_t global_seed = 42;
};

// Derives every stage seed from global_seed and syncs the fields the corpus
// dictates (vocab, sample rate). Called by load_config and the CLI.
void finalize(AuditConfig& config);

AuditConfig default_config();

nlohmann::json config_to_json(const AuditConfig& config);
AuditConfig config_from_json(const nlohmann::json& j);

AuditConfig load_config(const std::string& path);  // missing keys take defaults
void save_config(const AuditConfig& config, const std::string& path);

// FNV-1a hex digest of the canonical JSON dump; embedded in every artifact.
std::string config_hash(const AuditConfig& config);

}  // namespace aces
