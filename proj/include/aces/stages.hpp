#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "aces/attack.hpp"
#include "aces/audit_config.hpp"
#include "aces/intervention.hpp"
#include "aces/subspace.hpp"

namespace aces::stages {

struct Paths {
    std::filesystem::path root;
    std::filesystem::path corpus_dir, manifest, corpus_meta;
    std::filesystem::path model_dir, checkpoint, train_history;
    std::filesystem::path subspace_dir, sweep_csv, three_track_csv;
    std::filesystem::path selected_subspace, random_subspace, permuted_subspace;
    std::filesystem::path attack_dir, table2_csv, attack_summary;
    std::filesystem::path sweep_dir, eps_sweep_csv;
    std::filesystem::path intervene_dir, table3_csv, ood_json;
    std::filesystem::path report_json;

    static Paths at(const std::string& output_dir);
    std::filesystem::path outcomes_jsonl(const std::string& condition) const;
    std::filesystem::path coupling_csv(const std::string& condition) const;
    std::filesystem::path perturbed_dir(const std::string& condition) const;
};

// provenance line embedded in every artifact
std::string meta_comment(const AuditConfig& config, const std::string& stage);

struct GenResult {
    std::size_t n_train = 0, n_val = 0, n_eval = 0;
};
GenResult run_gen(const AuditConfig& config, int jobs);

model::TrainResult run_train(const AuditConfig& config, int jobs);

struct ExtractResult {
    subspace::Selection selection;
    subspace::Subspace accent;    // refit at the chosen cell, eval diagnostics
    subspace::Subspace random;    // seeded control at the same (layer, k)
    subspace::Subspace permuted;  // shuffled-label control at the same cell
    std::vector<subspace::SweepCell> sweep;
    double permuted_probe_accuracy_eval = 0.0;
};
ExtractResult run_extract(const AuditConfig& config, int jobs);

struct AttackStageResult {
    std::map<std::string, attack::ConditionResult> by_condition;
    std::map<std::string, double> mean_coupling;
    std::map<std::string, double> disparity_pp;
    std::map<std::string, double> mean_wer;
    std::map<std::string, std::map<std::string, double>> per_accent_wer;
    std::map<std::string, double> seconds;  // wall time per condition
};
AttackStageResult run_attack(const AuditConfig& config, int jobs);

std::vector<attack::EpsilonSweepRow> run_sweep_eps(const AuditConfig& config, int jobs);

intervention::InterventionReport run_intervene(const AuditConfig& config, int jobs);

nlohmann::json run_report(const AuditConfig& config);

nlohmann::json run_full_audit(const AuditConfig& config, int jobs);

// table2.csv readers, shared with the report stage (values are percents)
std::map<std::string, std::map<std::string, double>> read_table2(
    const std::filesystem::path& path);
// max - min per condition, percentage points
std::map<std::string, double> table2_disparities(
    const std::map<std::string, std::map<std::string, double>>& table);

}  // namespace aces::stages
