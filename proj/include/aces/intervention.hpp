#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aces/corpus.hpp"
#include "aces/model.hpp"
#include "aces/subspace.hpp"

namespace aces::intervention {

enum class ApplyTo { per_frame, pooled_equivalent };

struct InterventionConfig {
    double alpha = 0.5;  // (0, 1]
    int layer = 0;       // ell*, 1-based; 0 means take it from the subspace
    ApplyTo apply_to = ApplyTo::per_frame;
};

void validate(const InterventionConfig& config);

// h_t <- h_t - alpha * U U^T h_t for every frame (columns of `states`).
// pooled_equivalent subtracts the pooled projection from every frame
// instead; both induce the same pooled embedding by linearity.
Eigen::MatrixXd project_out(const Eigen::MatrixXd& states, const Eigen::MatrixXd& u,
                            double alpha, ApplyTo apply_to = ApplyTo::per_frame);

model::HookSpec make_hook(const subspace::Subspace& sub, double alpha);

// Everything below layer ell* is untouched; the layer's states are replaced
// by project_out and downstream layers plus logits recomputed.
model::HiddenStates forward_with_hook(const std::vector<double>& waveform,
                                      const model::Params& params,
                                      const model::ModelConfig& mcfg,
                                      const subspace::Subspace& sub,
                                      const InterventionConfig& config);

struct AccentRow {
    std::string accent;
    double clean_base = 0.0;
    double clean_int = 0.0;
    double att_base = 0.0;
    double att_int = 0.0;
};

struct InterventionReport {
    std::vector<AccentRow> rows;  // one per accent, sorted by label
    AccentRow mean;               // column means (accent field = "mean")
    AccentRow disparity_pp;       // per-column max-min in pp ("disparity")
    // distance of hooked ell*+1 pooled activations from the clean
    // distribution (mean Mahalanobis, diagonal covariance); absent when
    // ell* is the last layer
    std::optional<double> ood_mahalanobis;
};

// Attacked audio is the attack stage's accent-subspace output (perturbations
// crafted WITHOUT the hook); both base and intervened transcripts are
// computed here from it.
InterventionReport evaluate_intervention(
    const std::vector<corpus::Utterance>& eval_set,
    const std::map<std::string, std::vector<double>>& attacked_waveforms,
    const model::Params& params, const model::ModelConfig& mcfg, const subspace::Subspace& sub,
    const InterventionConfig& config, int jobs = 1);

}  // namespace aces::intervention
