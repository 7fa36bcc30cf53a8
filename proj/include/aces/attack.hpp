#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aces/corpus.hpp"
#include "aces/model.hpp"
#include "aces/subspace.hpp"

namespace aces::attack {

enum class Condition { clean, unconstrained, random_subspace, accent_subspace, permuted_subspace };

std::string condition_name(Condition c);
Condition condition_from_name(const std::string& name);

struct AttackConfig {
    double epsilon = 0.01;  // L2 bound on delta in waveform space
    int steps = 80;
    double step_size = 0.0;  // <= 0 means the 2.5 * epsilon / steps default
    double beta = 2.0;       // subspace-constraint strength; unconstrained => 0
    int layer = 0;           // ell*, 1-based; set from the selected subspace
    bool per_frame_h = false;
    bool random_init = false;  // delta starts at 0 unless set
    std::uint64_t seed = 99;

    double effective_step() const {
        return step_size > 0.0 ? step_size : 2.5 * epsilon / static_cast<double>(steps);
    }
    // Matched-control identity: everything but the subspace.
    std::uint64_t matched_hash() const;
};

void validate(const AttackConfig& config);

struct AttackOutcome {
    std::string id;
    std::string accent;
    Condition condition = Condition::clean;
    double epsilon = 0.0;
    double delta_l2 = 0.0;
    double snr_db = 0.0;  // +inf for zero delta
    double coupling = 0.0;
    double clean_wer = 0.0;
    double attacked_wer = 0.0;
    double delta_wer = 0.0;
    std::vector<int> clean_transcript;
    std::vector<int> attacked_transcript;
    std::vector<double> delta;  // effective perturbation after clamping
    bool objective_monotone = true;
};

// Eq.-1 style objective value, forward only:
//   L = ctc(x + delta) + beta * || Pi_U (h(x+delta) - h(x)) ||^2
// with h the pooled embedding at `layer` (or the per-frame mean variant).
double attack_objective(const std::vector<double>& x, const std::vector<double>& delta,
                        const std::vector<int>& target, const model::Params& params,
                        const model::ModelConfig& mcfg, const AttackConfig& acfg,
                        const subspace::Subspace* sub);

// m(x) = || Pi_U (h(x+delta) - h(x)) ||, pooled embedding at the subspace's
// layer (root-mean-square over frames in the per-frame variant).
double coupling(const std::vector<double>& x, const std::vector<double>& delta,
                const model::Params& params, const model::ModelConfig& mcfg,
                const subspace::Subspace& sub, bool per_frame = false);

// Normalized-gradient ascent on the objective; after every step delta is
// projected back onto the epsilon ball and x+delta clamped to [-1, 1] (the
// reported delta absorbs the clamp). Exactly `steps` iterations.
AttackOutcome pgd_attack(const corpus::Utterance& utterance, Condition condition,
                         const AttackConfig& acfg, const model::Params& params,
                         const model::ModelConfig& mcfg, const subspace::Subspace* sub);

struct ConditionResult {
    Condition condition = Condition::clean;
    std::vector<AttackOutcome> outcomes;
    std::vector<std::pair<std::string, std::string>> failures;  // (utterance id, what)
};

struct SubspaceSet {
    const subspace::Subspace* accent = nullptr;
    const subspace::Subspace* random = nullptr;
    const subspace::Subspace* permuted = nullptr;

    const subspace::Subspace* for_condition(Condition c) const;
};

// Attacks every utterance at matched (epsilon, steps, step size, beta); only
// the subspace differs between conditions. Per-utterance failures are
// collected, not fatal. Results are independent of `jobs`.
ConditionResult run_condition(const std::vector<corpus::Utterance>& eval_set,
                              Condition condition, const AttackConfig& acfg,
                              const SubspaceSet& subspaces, const model::Params& params,
                              const model::ModelConfig& mcfg, int jobs = 1);

struct EpsilonSweepRow {
    double epsilon = 0.0;
    Condition condition = Condition::clean;
    double mean_wer = 0.0;      // macro over accents
    double disparity_pp = 0.0;  // max - min, percentage points
    double mean_coupling = 0.0;
    std::map<std::string, double> per_accent_wer;
};

// Full (epsilon x condition) grid; epsilon == 0 rows reproduce clean metrics.
std::vector<EpsilonSweepRow> epsilon_sweep(const std::vector<corpus::Utterance>& eval_set,
                                           const std::vector<double>& epsilons,
                                           const std::vector<Condition>& conditions,
                                           const AttackConfig& acfg, const SubspaceSet& subspaces,
                                           const model::Params& params,
                                           const model::ModelConfig& mcfg, int jobs = 1);

void save_outcomes_jsonl(const std::vector<AttackOutcome>& outcomes, const std::string& path,
                         const std::string& meta_comment = "");
std::vector<AttackOutcome> load_outcomes_jsonl(const std::string& path);

}  // namespace aces::attack
