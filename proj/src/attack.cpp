#include "aces/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "aces/errors.hpp"
#include "aces/metrics.hpp"
#include "aces/parallel.hpp"
#include "aces/rng.hpp"
#include "aces/version.hpp"

namespace aces::attack {

namespace {

const subspace::Subspace* required_subspace(Condition c, const SubspaceSet& subs) {
    const subspace::Subspace* s = subs.for_condition(c);
    if ((c == Condition::random_subspace || c == Condition::accent_subspace ||
         c == Condition::permuted_subspace) &&
        s == nullptr) {
        throw ConfigError("attack: condition " + condition_name(c) + " needs a subspace");
    }
    return s;
}

void clamp_delta(const std::vector<double>& x, std::vector<double>& delta) {
    for (std::size_t i = 0; i < delta.size(); ++i) {
        const double adv = std::clamp(x[i] + delta[i], -1.0, 1.0);
        delta[i] = adv - x[i];
    }
}

double l2_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double a : v) s += a * a;
    return std::sqrt(s);
}

}  // namespace

std::string condition_name(Condition c) {
    switch (c) {
        case Condition::clean: return "clean";
        case Condition::unconstrained: return "unconstrained";
        case Condition::random_subspace: return "random";
        case Condition::accent_subspace: return "accent";
        case Condition::permuted_subspace: return "permuted";
    }
    return "unknown";
}

Condition condition_from_name(const std::string& name) {
    if (name == "clean") return Condition::clean;
    if (name == "unconstrained") return Condition::unconstrained;
    if (name == "random") return Condition::random_subspace;
    if (name == "accent") return Condition::accent_subspace;
    if (name == "permuted") return Condition::permuted_subspace;
    throw ConfigError("unknown attack condition: " + name);
}

std::uint64_t AttackConfig::matched_hash() const {
    std::ostringstream os;
    os << epsilon << '/' << steps << '/' << effective_step() << '/' << beta << '/' << layer
       << '/' << per_frame_h << '/' << random_init;
    return hash_string(os.str());
}

void validate(const AttackConfig& cfg) {
    if (cfg.epsilon < 0.0) throw ConfigError("attack: epsilon must be >= 0");
    if (cfg.steps < 1) throw ConfigError("attack: steps must be >= 1");
    if (cfg.beta < 0.0) throw ConfigError("attack: beta must be >= 0");
}

const subspace::Subspace* SubspaceSet::for_condition(Condition c) const {
    switch (c) {
        case Condition::accent_subspace: return accent;
        case Condition::random_subspace: return random;
        case Condition::permuted_subspace: return permuted;
        // coupling for clean/unconstrained is reported against the audit's
        // accent subspace when one is available
        case Condition::clean:
        case Condition::unconstrained: return accent;
    }
    return nullptr;
}

double coupling(const std::vector<double>& x, const std::vector<double>& delta,
                const model::Params& params, const model::ModelConfig& mcfg,
                const subspace::Subspace& sub, bool per_frame) {
    std::vector<double> adv(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) adv[i] = x[i] + delta[i];
    model::HiddenStates clean = model::forward(x, params, mcfg);
    model::HiddenStates attacked = model::forward(adv, params, mcfg);
    const Eigen::MatrixXd& hc = clean.layers.at(static_cast<std::size_t>(sub.layer - 1));
    const Eigen::MatrixXd& ha = attacked.layers.at(static_cast<std::size_t>(sub.layer - 1));
    if (per_frame) {
        Eigen::MatrixXd diff = ha - hc;
        Eigen::MatrixXd proj = sub.u.transpose() * diff;  // k x T
        return std::sqrt(proj.squaredNorm() / static_cast<double>(diff.cols()));
    }
    Eigen::VectorXd diff = ha.rowwise().mean() - hc.rowwise().mean();
    return (sub.u.transpose() * diff).norm();
}

double attack_objective(const std::vector<double>& x, const std::vector<double>& delta,
                        const std::vector<int>& target, const model::Params& params,
                        const model::ModelConfig& mcfg, const AttackConfig& acfg,
                        const subspace::Subspace* sub) {
    std::vector<double> adv(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) adv[i] = x[i] + delta[i];
    model::HiddenStates attacked = model::forward(adv, params, mcfg);
    double obj = model::ctc_loss(attacked.logits, target);
    if (acfg.beta != 0.0 && sub != nullptr) {
        if (acfg.layer != 0 && acfg.layer != sub->layer) {
            throw ConfigError("attack_objective: subspace layer does not match config layer");
        }
        const double m = coupling(x, delta, params, mcfg, *sub, acfg.per_frame_h);
        obj += acfg.beta * m * m;
    }
    return obj;
}

AttackOutcome pgd_attack(const corpus::Utterance& utterance, Condition condition,
                         const AttackConfig& acfg, const model::Params& params,
                         const model::ModelConfig& mcfg, const subspace::Subspace* sub) {
    validate(acfg);
    for (double v : utterance.waveform) {
        if (v < -1.0 - 1e-9 || v > 1.0 + 1e-9) {
            throw ConfigError("pgd_attack: waveform sample outside [-1, 1] in " + utterance.id);
        }
    }
    const bool needs_sub = condition == Condition::random_subspace ||
                           condition == Condition::accent_subspace ||
                           condition == Condition::permuted_subspace;
    if (needs_sub && sub == nullptr) {
        throw ConfigError("pgd_attack: condition " + condition_name(condition) +
                          " requires a subspace");
    }
    if (needs_sub && acfg.layer != 0 && sub->layer != acfg.layer) {
        throw ConfigError("pgd_attack: subspace layer " + std::to_string(sub->layer) +
                          " does not match configured layer " + std::to_string(acfg.layer));
    }

    AttackOutcome out;
    out.id = utterance.id;
    out.accent = utterance.accent;
    out.condition = condition;
    out.epsilon = acfg.epsilon;

    const std::vector<double>& x = utterance.waveform;
    out.clean_transcript = model::transcribe(x, params, mcfg);
    out.clean_wer = metrics::wer(out.clean_transcript, utterance.text);

    if (condition == Condition::clean || acfg.epsilon == 0.0) {
        out.delta.assign(x.size(), 0.0);
        out.delta_l2 = 0.0;
        out.snr_db = std::numeric_limits<double>::infinity();
        out.coupling = 0.0;
        out.attacked_transcript = out.clean_transcript;
        out.attacked_wer = out.clean_wer;
        out.delta_wer = 0.0;
        return out;
    }

    // beta applies only where the objective carries a subspace term
    const double beta = needs_sub ? acfg.beta : 0.0;
    model::ObjectiveSpec spec;
    spec.beta = beta;
    if (needs_sub) {
        spec.layer = sub->layer;
        spec.u = &sub->u;
        spec.per_frame = acfg.per_frame_h;
        model::HiddenStates clean_states = model::forward(x, params, mcfg);
        const Eigen::MatrixXd& hc = clean_states.layers[static_cast<std::size_t>(sub->layer - 1)];
        if (acfg.per_frame_h) spec.clean_frames = hc;
        else spec.clean_pooled = hc.rowwise().mean();
    }

    std::vector<double> delta(x.size(), 0.0);
    if (acfg.random_init) {
        Rng rng(hash_combine(hash_combine(acfg.seed, hash_string(utterance.id)),
                             hash_string("pgd-init")));
        for (double& d : delta) d = rng.gaussian();
        const double norm = l2_norm(delta);
        if (norm > 0.0) {
            const double radius = acfg.epsilon * std::pow(rng.uniform(), 1.0 / 3.0);
            for (double& d : delta) d *= radius / norm;
        }
        clamp_delta(x, delta);
    }

    const double step = acfg.effective_step();
    std::vector<double> adv(x.size());
    double prev_obj = -std::numeric_limits<double>::infinity();
    out.objective_monotone = true;

    for (int it = 0; it < acfg.steps; ++it) {
        for (std::size_t i = 0; i < x.size(); ++i) adv[i] = x[i] + delta[i];
        model::InputGrad g = model::objective_grad_wrt_input(adv, utterance.text, params, mcfg, spec);
        if (!g.grad.allFinite() || !std::isfinite(g.objective)) {
            throw NumericalError("pgd_attack: non-finite gradient for " + utterance.id +
                                 " at step " + std::to_string(it));
        }
        if (g.objective < prev_obj - 1e-9) out.objective_monotone = false;
        prev_obj = g.objective;

        const double gnorm = g.grad.norm();
        if (gnorm > 0.0) {
            const double scale = step / gnorm;
            for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += scale * g.grad(static_cast<Eigen::Index>(i));
        }
        const double dnorm = l2_norm(delta);
        if (dnorm > acfg.epsilon) {
            const double shrink = acfg.epsilon / dnorm;
            for (double& d : delta) d *= shrink;
        }
        clamp_delta(x, delta);
    }

    // final objective closes the ascent monitor
    {
        AttackConfig eff = acfg;
        eff.beta = beta;
        const double final_obj = attack_objective(x, delta, utterance.text, params, mcfg, eff,
                                                  needs_sub ? sub : nullptr);
        if (final_obj < prev_obj - 1e-9) out.objective_monotone = false;
    }

    for (std::size_t i = 0; i < x.size(); ++i) adv[i] = x[i] + delta[i];
    out.delta = delta;
    out.delta_l2 = l2_norm(delta);
    out.snr_db = metrics::snr_db(x, delta);
    // subspace conditions report the shift along their own subspace; the
    // unconstrained condition reports it along the audit's accent subspace
    out.coupling = sub ? coupling(x, delta, params, mcfg, *sub, acfg.per_frame_h) : 0.0;
    out.attacked_transcript = model::transcribe(adv, params, mcfg);
    out.attacked_wer = metrics::wer(out.attacked_transcript, utterance.text);
    out.delta_wer = out.attacked_wer - out.clean_wer;
    return out;
}

ConditionResult run_condition(const std::vector<corpus::Utterance>& eval_set,
                              Condition condition, const AttackConfig& acfg,
                              const SubspaceSet& subspaces, const model::Params& params,
                              const model::ModelConfig& mcfg, int jobs) {
    validate(acfg);
    const subspace::Subspace* sub = required_subspace(condition, subspaces);
    ConditionResult result;
    result.condition = condition;
    std::vector<std::optional<AttackOutcome>> slots(eval_set.size());
    std::vector<std::string> errors(eval_set.size());
    parallel_for(eval_set.size(), jobs, [&](std::size_t i) {
        try {
            slots[i] = pgd_attack(eval_set[i], condition, acfg, params, mcfg, sub);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].has_value()) {
            result.outcomes.push_back(std::move(*slots[i]));
        } else {
            result.failures.emplace_back(eval_set[i].id, errors[i]);
        }
    }
    return result;
}

std::vector<EpsilonSweepRow> epsilon_sweep(const std::vector<corpus::Utterance>& eval_set,
                                           const std::vector<double>& epsilons,
                                           const std::vector<Condition>& conditions,
                                           const AttackConfig& acfg, const SubspaceSet& subspaces,
                                           const model::Params& params,
                                           const model::ModelConfig& mcfg, int jobs) {
    if (epsilons.empty()) throw ConfigError("epsilon_sweep: empty epsilon list");
    if (!std::is_sorted(epsilons.begin(), epsilons.end())) {
        throw ConfigError("epsilon_sweep: epsilons must be ascending");
    }
    std::vector<EpsilonSweepRow> rows;
    for (double eps : epsilons) {
        AttackConfig cfg = acfg;
        cfg.epsilon = eps;
        for (Condition cond : conditions) {
            ConditionResult res = run_condition(eval_set, cond, cfg, subspaces, params, mcfg, jobs);
            if (!res.failures.empty()) {
                throw NumericalError("epsilon_sweep: " + std::to_string(res.failures.size()) +
                                     " utterances failed under " + condition_name(cond) +
                                     " at epsilon " + std::to_string(eps) + " (first: " +
                                     res.failures.front().second + ")");
            }
            EpsilonSweepRow row;
            row.epsilon = eps;
            row.condition = cond;
            std::vector<double> wers;
            std::vector<std::string> accents;
            double m_sum = 0.0;
            for (const auto& o : res.outcomes) {
                wers.push_back(o.attacked_wer);
                accents.push_back(o.accent);
                m_sum += o.coupling;
            }
            metrics::DisparityRow drow = metrics::disparity_row(wers, accents);
            row.per_accent_wer = drow.per_accent_mean_wer;
            row.mean_wer = drow.mean_wer;
            row.disparity_pp = drow.disparity_pp;
            row.mean_coupling = res.outcomes.empty()
                                    ? 0.0
                                    : m_sum / static_cast<double>(res.outcomes.size());
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

namespace {

nlohmann::json outcome_to_json(const AttackOutcome& o) {
    return nlohmann::json{{"id", o.id},
                          {"accent", o.accent},
                          {"condition", condition_name(o.condition)},
                          {"epsilon", o.epsilon},
                          {"delta_l2", o.delta_l2},
                          {"snr_db", std::isfinite(o.snr_db) ? nlohmann::json(o.snr_db)
                                                             : nlohmann::json()},
                          {"coupling", o.coupling},
                          {"clean_wer", o.clean_wer},
                          {"attacked_wer", o.attacked_wer},
                          {"delta_wer", o.delta_wer},
                          {"clean_transcript", o.clean_transcript},
                          {"attacked_transcript", o.attacked_transcript},
                          {"objective_monotone", o.objective_monotone}};
}

AttackOutcome outcome_from_json(const nlohmann::json& j) {
    AttackOutcome o;
    o.id = j.at("id").get<std::string>();
    o.accent = j.at("accent").get<std::string>();
    o.condition = condition_from_name(j.at("condition").get<std::string>());
    o.epsilon = j.at("epsilon").get<double>();
    o.delta_l2 = j.at("delta_l2").get<double>();
    o.snr_db = j.at("snr_db").is_null() ? std::numeric_limits<double>::infinity()
                                        : j.at("snr_db").get<double>();
    o.coupling = j.at("coupling").get<double>();
    o.clean_wer = j.at("clean_wer").get<double>();
    o.attacked_wer = j.at("attacked_wer").get<double>();
    o.delta_wer = j.at("delta_wer").get<double>();
    o.clean_transcript = j.at("clean_transcript").get<std::vector<int>>();
    o.attacked_transcript = j.at("attacked_transcript").get<std::vector<int>>();
    o.objective_monotone = j.value("objective_monotone", true);
    return o;
}

}  // namespace

void save_outcomes_jsonl(const std::vector<AttackOutcome>& outcomes, const std::string& path,
                         const std::string& meta_comment) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("save_outcomes_jsonl: cannot open " + path);
    if (!meta_comment.empty()) {
        out << nlohmann::json{{"meta", meta_comment}}.dump() << "\n";
    }
    for (const auto& o : outcomes) out << outcome_to_json(o).dump() << "\n";
    if (!out.good()) throw ConfigError("save_outcomes_jsonl: write failed for " + path);
}

std::vector<AttackOutcome> load_outcomes_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DependencyError("load_outcomes_jsonl: cannot open " + path);
    std::vector<AttackOutcome> outcomes;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("load_outcomes_jsonl: bad JSON at line " +
                              std::to_string(line_no) + ": " + e.what());
        }
        if (j.contains("meta")) continue;
        outcomes.push_back(outcome_from_json(j));
    }
    return outcomes;
}

}  // namespace aces::attack
