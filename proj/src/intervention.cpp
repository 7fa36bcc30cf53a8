#include "aces/intervention.hpp"

#include <algorithm>
#include <cmath>

#include "aces/errors.hpp"
#include "aces/metrics.hpp"
#include "aces/parallel.hpp"

namespace aces::intervention {

void validate(const InterventionConfig& cfg) {
    if (cfg.alpha <= 0.0 || cfg.alpha > 1.0) {
        throw ConfigError("intervention: alpha must lie in (0, 1]");
    }
}

Eigen::MatrixXd project_out(const Eigen::MatrixXd& states, const Eigen::MatrixXd& u,
                            double alpha, ApplyTo apply_to) {
    if (u.rows() != states.rows()) {
        throw ConfigError("project_out: dimension mismatch (states " +
                          std::to_string(states.rows()) + ", U " + std::to_string(u.rows()) + ")");
    }
    if (u.cols() == 0 || alpha == 0.0) return states;
    if (apply_to == ApplyTo::per_frame) {
        return states - alpha * (u * (u.transpose() * states));
    }
    // subtract the pooled projection uniformly; pooled output matches the
    // per-frame variant exactly by linearity
    Eigen::VectorXd pooled = states.rowwise().mean();
    Eigen::VectorXd shift = alpha * (u * (u.transpose() * pooled));
    return states.colwise() - shift;
}

model::HookSpec make_hook(const subspace::Subspace& sub, double alpha) {
    model::HookSpec hook;
    hook.layer = sub.layer;
    hook.alpha = alpha;
    hook.u = sub.u;
    return hook;
}

model::HiddenStates forward_with_hook(const std::vector<double>& waveform,
                                      const model::Params& params,
                                      const model::ModelConfig& mcfg,
                                      const subspace::Subspace& sub,
                                      const InterventionConfig& cfg) {
    validate(cfg);
    const int layer = cfg.layer > 0 ? cfg.layer : sub.layer;
    if (layer != sub.layer) {
        throw ConfigError("forward_with_hook: config layer " + std::to_string(cfg.layer) +
                          " does not match subspace layer " + std::to_string(sub.layer));
    }
    model::HookSpec hook = make_hook(sub, cfg.alpha);
    hook.pooled_shift = cfg.apply_to == ApplyTo::pooled_equivalent;
    return model::forward(waveform, params, mcfg, &hook);
}

InterventionReport evaluate_intervention(
    const std::vector<corpus::Utterance>& eval_set,
    const std::map<std::string, std::vector<double>>& attacked_waveforms,
    const model::Params& params, const model::ModelConfig& mcfg, const subspace::Subspace& sub,
    const InterventionConfig& cfg, int jobs) {
    validate(cfg);
    if (eval_set.empty()) throw ConfigError("evaluate_intervention: empty eval set");
    for (const auto& u : eval_set) {
        if (!attacked_waveforms.count(u.id)) {
            throw DependencyError(
                "evaluate_intervention: no attacked audio for utterance '" + u.id +
                "'; run the attack stage (accent-subspace condition) first");
        }
    }

    model::HookSpec hook = make_hook(sub, cfg.alpha);
    const int diag_layer = sub.layer < mcfg.n_layers ? sub.layer + 1 : 0;

    struct Cell {
        double clean_base, clean_int, att_base, att_int;
        Eigen::VectorXd clean_next, hooked_next;  // pooled ell*+1 activations
    };
    std::vector<Cell> cells(eval_set.size());
    parallel_for(eval_set.size(), jobs, [&](std::size_t i) {
        const corpus::Utterance& u = eval_set[i];
        const std::vector<double>& attacked = attacked_waveforms.at(u.id);
        model::HiddenStates clean_plain = model::forward(u.waveform, params, mcfg);
        model::HiddenStates clean_hooked = model::forward(u.waveform, params, mcfg, &hook);
        Cell& c = cells[i];
        c.clean_base = metrics::wer(model::ctc_greedy_decode(clean_plain.logits), u.text);
        c.clean_int = metrics::wer(model::ctc_greedy_decode(clean_hooked.logits), u.text);
        c.att_base = metrics::wer(model::transcribe(attacked, params, mcfg), u.text);
        c.att_int = metrics::wer(model::transcribe(attacked, params, mcfg, &hook), u.text);
        if (diag_layer > 0) {
            c.clean_next = model::pooled_embedding(clean_plain, diag_layer);
            c.hooked_next = model::pooled_embedding(clean_hooked, diag_layer);
        }
    });

    std::vector<std::string> accents;
    std::vector<double> cb, ci, ab, ai;
    accents.reserve(eval_set.size());
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        accents.push_back(eval_set[i].accent);
        cb.push_back(cells[i].clean_base);
        ci.push_back(cells[i].clean_int);
        ab.push_back(cells[i].att_base);
        ai.push_back(cells[i].att_int);
    }
    auto m_cb = metrics::per_accent_mean(cb, accents);
    auto m_ci = metrics::per_accent_mean(ci, accents);
    auto m_ab = metrics::per_accent_mean(ab, accents);
    auto m_ai = metrics::per_accent_mean(ai, accents);

    InterventionReport report;
    for (const auto& [accent, wv] : m_cb) {
        AccentRow row;
        row.accent = accent;
        row.clean_base = wv;
        row.clean_int = m_ci.at(accent);
        row.att_base = m_ab.at(accent);
        row.att_int = m_ai.at(accent);
        report.rows.push_back(std::move(row));
    }
    const double n_acc = static_cast<double>(report.rows.size());
    report.mean.accent = "mean";
    report.disparity_pp.accent = "disparity";
    for (const auto& row : report.rows) {
        report.mean.clean_base += row.clean_base / n_acc;
        report.mean.clean_int += row.clean_int / n_acc;
        report.mean.att_base += row.att_base / n_acc;
        report.mean.att_int += row.att_int / n_acc;
    }
    report.disparity_pp.clean_base = metrics::disparity(m_cb);
    report.disparity_pp.clean_int = metrics::disparity(m_ci);
    report.disparity_pp.att_base = metrics::disparity(m_ab);
    report.disparity_pp.att_int = metrics::disparity(m_ai);

    if (diag_layer > 0) {
        // diagonal-covariance Mahalanobis of hooked pooled states against the
        // clean pooled distribution at ell*+1
        const Eigen::Index d = cells.front().clean_next.size();
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
        for (const auto& c : cells) mean += c.clean_next;
        mean /= static_cast<double>(cells.size());
        Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
        for (const auto& c : cells) var += (c.clean_next - mean).cwiseAbs2();
        var /= static_cast<double>(cells.size());
        var = var.cwiseMax(1e-12);
        double dist_sum = 0.0;
        for (const auto& c : cells) {
            dist_sum += std::sqrt(((c.hooked_next - mean).cwiseAbs2().array() /
                                   var.array()).sum());
        }
        report.ood_mahalanobis = dist_sum / static_cast<double>(cells.size());
    }
    return report;
}

}  // namespace aces::intervention
