// Acceptance suite: runs every audit-level criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit code 0 iff all pass.
//
// Layout:
//   criteria 1-4   self-contained oracle checks
//   criteria 5,6,9,12  one default-config pipeline (run twice for the
//                      byte-determinism check; stage wall times are the
//                      runtime receipts)
//   criteria 7,8,10,11 three reduced-size training seeds (same model and
//                      attack hyperparameters, smaller corpus so three
//                      full train+attack cycles stay tractable)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "aces/attack.hpp"
#include "aces/errors.hpp"
#include "aces/intervention.hpp"
#include "aces/metrics.hpp"
#include "aces/model.hpp"
#include "aces/parallel.hpp"
#include "aces/rng.hpp"
#include "aces/stages.hpp"
#include "aces/subspace.hpp"
#include "oracles.hpp"

using namespace aces;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, what.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 3) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

// ---------------------------------------------------------------------------
// criterion 1: fixture replication through the metrics pipeline
// ---------------------------------------------------------------------------
void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::vector<double>> columns = {
        {27.1, 30.9, 40.7, 39.8, 31.9, 19.4, 39.4},  // clean
        {38.0, 46.4, 56.7, 58.1, 43.6, 28.4, 52.9},  // unconstrained
        {34.3, 42.6, 54.1, 51.1, 40.8, 23.2, 46.1},  // random
        {34.2, 44.9, 56.3, 52.6, 42.2, 24.5, 46.8},  // accent
    };
    const std::vector<double> expected_disparity = {21.3, 29.7, 30.9, 31.8};
    bool pass = true;
    std::ostringstream detail;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        std::vector<double> wers;
        std::vector<std::string> accents;
        for (std::size_t a = 0; a < columns[c].size(); ++a) {
            wers.push_back(columns[c][a] / 100.0);
            accents.push_back("acc" + std::to_string(a));
        }
        metrics::DisparityRow row = metrics::disparity_row(wers, accents);
        if (std::abs(row.disparity_pp - expected_disparity[c]) > 0.05) pass = false;
        if (c == 0) {
            // Table 3 clean column: mean 32.7, disparity 21.3
            if (std::abs(row.mean_wer * 100.0 - 32.7) > 0.05) pass = false;
            detail << "clean mean " << fmt(row.mean_wer * 100.0, 2) << ", disparities";
        }
        detail << ' ' << fmt(row.disparity_pp, 2);
    }
    const double secs = seconds_since(t0);
    if (secs >= 1.0) pass = false;
    detail << "; " << fmt(secs) << "s";
    report(1, pass, "fixture replication", detail.str());
}

// ---------------------------------------------------------------------------
// criterion 2: CTC enumeration oracle + waveform finite differences
// ---------------------------------------------------------------------------
void criterion_2() {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    double worst_loss_err = 0.0;
    int cases = 0;
    Rng rng(1234);
    for (int v = 2; v <= 3; ++v) {
        for (int t = 1; t <= 4; ++t) {
            std::vector<std::vector<int>> targets = {{}};
            for (int a = 0; a < v - 1; ++a) {
                targets.push_back({a});
                for (int b = 0; b < v - 1; ++b) targets.push_back({a, b});
            }
            for (const auto& target : targets) {
                if (t < model::ctc_min_frames(target)) continue;
                for (int draw = 0; draw < 3; ++draw) {
                    Eigen::MatrixXd logits(v, t);
                    for (int r = 0; r < v; ++r) {
                        for (int c = 0; c < t; ++c) logits(r, c) = rng.gaussian();
                    }
                    const double ours = model::ctc_loss(logits, target);
                    const double oracle = oracles::ctc_loss_enumeration(logits, target);
                    worst_loss_err = std::max(worst_loss_err, std::abs(ours - oracle));
                    if (std::abs(ours - oracle) > 1e-6) pass = false;
                    ++cases;
                }
            }
        }
    }

    // finite differences through the full default-size model
    model::ModelConfig mcfg;  // defaults: 4 x 64
    model::Params params = model::init_params(mcfg);
    corpus::CorpusConfig ccfg;
    auto wave = corpus::synthesize_waveform({0, 3, 7}, "a2", 99, 98, ccfg);
    const std::vector<int> target = {0, 3, 7};
    model::ObjectiveSpec spec;
    model::InputGrad g = model::objective_grad_wrt_input(wave, target, params, mcfg, spec);
    double worst_rel = 0.0;
    const double h = 1e-4;
    int checked = 0;
    for (int probe = 0; probe < 40 && checked < 20; ++probe) {
        const std::size_t i = rng.uniform_index(wave.size());
        auto wp = wave, wm = wave;
        wp[i] += h;
        wm[i] -= h;
        const double fp = model::ctc_loss(model::forward(wp, params, mcfg).logits, target);
        const double fm = model::ctc_loss(model::forward(wm, params, mcfg).logits, target);
        const double fd = (fp - fm) / (2 * h);
        const double an = g.grad(static_cast<Eigen::Index>(i));
        if (std::abs(fd) < 1e-9 && std::abs(an) < 1e-9) continue;
        const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-12});
        worst_rel = std::max(worst_rel, rel);
        if (rel >= 1e-4) pass = false;
        ++checked;
    }
    if (checked < 20) pass = false;
    const double secs = seconds_since(t0);
    if (secs >= 30.0) pass = false;
    report(2, pass, "ctc oracle + finite differences",
           std::to_string(cases) + " enumerations, max err " + fmt(worst_loss_err, 9) +
               "; fd rel err " + fmt(worst_rel, 7) + " over " + std::to_string(checked) +
               " coords; " + fmt(secs) + "s");
}

// ---------------------------------------------------------------------------
// criterion 3: WER brute-force oracle on 200 random pairs
// ---------------------------------------------------------------------------
void criterion_3() {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<int> hyp(rng.uniform_index(7)), ref(1 + rng.uniform_index(6));
        for (int& v : hyp) v = static_cast<int>(rng.uniform_index(4));
        for (int& v : ref) v = static_cast<int>(rng.uniform_index(4));
        const double expected = static_cast<double>(oracles::edit_distance_bruteforce(hyp, ref)) /
                                static_cast<double>(ref.size());
        if (metrics::wer(hyp, ref) != expected) pass = false;
    }
    const double secs = seconds_since(t0);
    if (secs >= 10.0) pass = false;
    report(3, pass, "wer oracle", "200 pairs exact; " + fmt(secs) + "s");
}

// ---------------------------------------------------------------------------
// criterion 4: subspace algebra
// ---------------------------------------------------------------------------
void criterion_4() {
    bool pass = true;
    std::ostringstream detail;

    Rng rng(42);
    subspace::LabeledEmbeddings data;
    data.n_classes = 5;
    data.x.resize(200, 32);
    for (Eigen::Index i = 0; i < 200; ++i) {
        const int label = static_cast<int>(i % 5);
        data.labels.push_back(label);
        for (int j = 0; j < 32; ++j) {
            data.x(i, j) = rng.gaussian() + (j < 5 && j == label ? 3.0 : 0.0);
        }
    }
    subspace::FitOptions opts;
    std::vector<subspace::Subspace> fitted;
    fitted.push_back(subspace::fit(subspace::Method::ridge, data, 4, opts));
    fitted.push_back(subspace::fit(subspace::Method::lda, data, 4, opts));
    fitted.push_back(subspace::fit(subspace::Method::centroid_diff, data, 4, opts));
    fitted.push_back(subspace::fit(subspace::Method::linear_probe, data, 4, opts));
    fitted.push_back(subspace::random_subspace(32, 4, 7));
    fitted.push_back(
        subspace::permuted_label_subspace(data, subspace::Method::ridge, 4, opts, std::uint64_t{9}));

    double worst_orth = 0.0, worst_proj = 0.0;
    for (const auto& s : fitted) {
        Eigen::MatrixXd gram = s.u.transpose() * s.u;
        gram -= Eigen::MatrixXd::Identity(s.k, s.k);
        worst_orth = std::max(worst_orth, gram.norm());
        Eigen::MatrixXd p = subspace::projector(s);
        worst_proj = std::max(worst_proj, (p * p - p).norm());
    }
    if (worst_orth >= 1e-8 || worst_proj >= 1e-8) pass = false;
    detail << "||U^T U - I|| max " << fmt(worst_orth, 12) << ", ||P^2-P|| max "
           << fmt(worst_proj, 12);

    auto self_angles = subspace::principal_angles(fitted[0].u, fitted[0].u);
    for (double a : self_angles) {
        if (std::abs(a) >= 1e-6) pass = false;
    }
    Eigen::MatrixXd e1(2, 1), e2(2, 1);
    e1 << 1, 0;
    e2 << 0, 1;
    const double right_angle = subspace::principal_angles(e1, e2)[0];
    if (std::abs(right_angle - 90.0) >= 1e-6) pass = false;
    detail << "; self-angle 0, orthogonal " << fmt(right_angle, 9) << " deg";
    report(4, pass, "subspace algebra", detail.str());
}

// ---------------------------------------------------------------------------
// default-config pipeline (criteria 5, 6, 9, 12)
// ---------------------------------------------------------------------------
struct DefaultRun {
    AuditConfig cfg;
    double gen_s = 0, train_s = 0, extract_s = 0, attack_s = 0, sweep_s = 0, intervene_s = 0,
           report_s = 0;
    bool train_ok = false;
    std::string train_error;
    metrics::DisparityRow clean_row;
    stages::AttackStageResult attack;
    std::string report_bytes;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

DefaultRun run_default_pipeline(const fs::path& out_dir, int jobs) {
    DefaultRun run;
    run.cfg = default_config();
    run.cfg.output_dir = out_dir.string();
    finalize(run.cfg);

    auto timed = [&](double& slot, auto&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        slot = seconds_since(t0);
    };
    timed(run.gen_s, [&] { stages::run_gen(run.cfg, jobs); });
    try {
        timed(run.train_s, [&] { stages::run_train(run.cfg, jobs); });
        run.train_ok = true;
    } catch (const std::exception& e) {
        run.train_error = e.what();
        return run;
    }
    timed(run.extract_s, [&] { stages::run_extract(run.cfg, jobs); });
    timed(run.attack_s, [&] { run.attack = stages::run_attack(run.cfg, jobs); });
    timed(run.sweep_s, [&] { stages::run_sweep_eps(run.cfg, jobs); });
    timed(run.intervene_s, [&] { stages::run_intervene(run.cfg, jobs); });
    timed(run.report_s, [&] { stages::run_report(run.cfg); });
    run.report_bytes = slurp(stages::Paths::at(run.cfg.output_dir).report_json);

    const auto& clean = run.attack.by_condition.at("clean");
    std::vector<double> wers;
    std::vector<std::string> accents;
    for (const auto& o : clean.outcomes) {
        wers.push_back(o.clean_wer);
        accents.push_back(o.accent);
    }
    run.clean_row = metrics::disparity_row(wers, accents);
    return run;
}

void criterion_5(const DefaultRun& run) {
    bool pass = run.train_ok;
    std::ostringstream detail;
    if (!run.train_ok) {
        detail << "training failed: " << run.train_error;
    } else {
        const double disparity = run.clean_row.disparity_pp;
        const std::string reference = corpus::accent_label(0);
        double ref_wer = run.clean_row.per_accent_mean_wer.at(reference);
        bool ref_lowest = true;
        for (const auto& [accent, wer] : run.clean_row.per_accent_mean_wer) {
            if (accent != reference && wer <= ref_wer) ref_lowest = false;
        }
        if (disparity <= 5.0 || !ref_lowest) pass = false;
        const double secs = run.gen_s + run.train_s;
        if (secs >= 300.0) pass = false;
        detail << "clean disparity " << fmt(disparity, 2) << " pp, reference "
               << (ref_lowest ? "strictly lowest" : "NOT lowest") << ", gen+train "
               << fmt(secs, 1) << "s";
    }
    report(5, pass, "induced-disparity baseline", detail.str());
}

void criterion_6(const DefaultRun& run) {
    bool pass = run.train_ok;
    std::ostringstream detail;
    if (!run.train_ok) {
        detail << "no trained model";
    } else {
        const double m_accent = run.attack.mean_coupling.at("accent");
        const double m_random = run.attack.mean_coupling.at("random");
        const double ratio = m_random > 0 ? m_accent / m_random : 0.0;
        const double secs = run.attack.seconds.at("accent") + run.attack.seconds.at("random");
        if (!(ratio >= 1.5)) pass = false;
        if (secs >= 180.0) pass = false;
        detail << "mean m(accent) " << fmt(m_accent, 4) << ", m(random) " << fmt(m_random, 4)
               << ", ratio " << fmt(ratio, 2) << "; " << fmt(secs, 1) << "s";
    }
    report(6, pass, "coupling separation", detail.str());
}

void criterion_9(const DefaultRun& run, const std::vector<attack::AttackOutcome>& held_outcomes) {
    bool pass = true;
    std::ostringstream detail;
    std::size_t checked = 0;

    if (run.train_ok) {
        for (const auto& [cname, res] : run.attack.by_condition) {
            for (const auto& o : res.outcomes) {
                if (o.delta_l2 > o.epsilon + 1e-6) pass = false;
                ++checked;
            }
        }
        // sample-range check on the persisted accent-condition audio
        const stages::Paths paths = stages::Paths::at(run.cfg.output_dir);
        int files = 0;
        for (const auto& entry : fs::directory_iterator(paths.perturbed_dir("accent"))) {
            auto wave = corpus::load_audio_f32(entry.path().string());
            for (double v : wave) {
                if (v < -1.0 - 1e-9 || v > 1.0 + 1e-9) pass = false;
            }
            ++files;
        }
        detail << checked << " outcomes, " << files << " audio files in range";
    } else {
        pass = false;
        detail << "no trained model";
    }

    // in-memory checks with full delta vectors, all conditions
    std::size_t with_delta = 0;
    for (const auto& o : held_outcomes) {
        if (o.delta_l2 > o.epsilon + 1e-6) pass = false;
        ++with_delta;
    }
    detail << "; " << with_delta << " reduced-run outcomes";

    // epsilon = 0 exactness on a couple of fresh utterances
    {
        corpus::CorpusConfig ccfg;
        ccfg.n_accents = 3;
        model::ModelConfig mcfg;
        mcfg.n_layers = 2;
        mcfg.hidden_dim = 16;
        mcfg.n_filters = 8;
        mcfg.vocab = ccfg.vocab_size;
        model::Params params = model::init_params(mcfg);
        attack::AttackConfig acfg;
        acfg.epsilon = 0.0;
        acfg.steps = 4;
        acfg.layer = 1;
        subspace::Subspace sub = subspace::random_subspace(16, 2, 3);
        sub.layer = 1;
        for (int i = 0; i < 3; ++i) {
            corpus::Utterance u = corpus::synthesize_utterance(
                {0, 2, 4}, "a1", 100 + static_cast<std::uint64_t>(i), 7, ccfg);
            u.id = "eps0-" + std::to_string(i);
            attack::AttackOutcome o = attack::pgd_attack(
                u, attack::Condition::accent_subspace, acfg, params, mcfg, &sub);
            if (o.attacked_wer != o.clean_wer || o.delta_l2 != 0.0) pass = false;
        }
        detail << "; eps=0 exact";
    }
    report(9, pass, "pgd constraints", detail.str());
}

// ---------------------------------------------------------------------------
// reduced-size seeds (criteria 7, 8, 10, 11)
// ---------------------------------------------------------------------------
struct SeedRun {
    std::uint64_t seed;
    AuditConfig cfg;
    stages::AttackStageResult attack;
    std::vector<attack::EpsilonSweepRow> sweep;
    intervention::InterventionReport intervention;
    double perm_probe_eval = 0.0;
    bool annihilation_ok = false;
    std::vector<attack::AttackOutcome> all_outcomes;  // with delta vectors
};

AuditConfig reduced_config(const fs::path& out_dir, std::uint64_t seed) {
    AuditConfig cfg;
    cfg.global_seed = seed;
    cfg.output_dir = out_dir.string();
    cfg.corpus.utterances_per_accent_eval = 30;
    cfg.corpus.utterances_per_accent_val = 15;
    cfg.corpus.train_size = 900;
    cfg.attack.conditions = {"clean", "random", "accent", "permuted"};
    cfg.attack.epsilon_sweep = {0.005, 0.05};
    cfg.attack.sweep_conditions = {"random", "accent"};
    cfg.attack.sweep_subset_per_accent = 15;
    finalize(cfg);
    return cfg;
}

SeedRun run_seed(const fs::path& out_dir, std::uint64_t seed, int jobs) {
    SeedRun run;
    run.seed = seed;
    run.cfg = reduced_config(out_dir, seed);
    stages::run_gen(run.cfg, jobs);
    stages::run_train(run.cfg, jobs);
    stages::ExtractResult extract = stages::run_extract(run.cfg, jobs);
    run.perm_probe_eval = extract.permuted_probe_accuracy_eval;
    run.attack = stages::run_attack(run.cfg, jobs);
    run.sweep = stages::run_sweep_eps(run.cfg, jobs);
    run.intervention = stages::run_intervene(run.cfg, jobs);

    for (const auto& [cname, res] : run.attack.by_condition) {
        for (const auto& o : res.outcomes) run.all_outcomes.push_back(o);
    }

    // alpha = 1 annihilation on the first few eval utterances
    {
        const stages::Paths paths = stages::Paths::at(run.cfg.output_dir);
        model::Checkpoint ckpt = model::load_checkpoint(paths.checkpoint.string());
        subspace::Subspace sub = subspace::load_subspace(paths.selected_subspace.string());
        auto all = corpus::load_corpus(paths.manifest.string());
        intervention::InterventionConfig icfg;
        icfg.alpha = 1.0;
        icfg.layer = sub.layer;
        run.annihilation_ok = true;
        int tested = 0;
        for (const auto& u : all) {
            if (u.split != "eval") continue;
            model::HiddenStates hs =
                intervention::forward_with_hook(u.waveform, ckpt.params, ckpt.config, sub, icfg);
            Eigen::VectorXd pooled = model::pooled_embedding(hs, sub.layer);
            if ((sub.u.transpose() * pooled).norm() > 1e-6 * std::max(pooled.norm(), 1e-300)) {
                run.annihilation_ok = false;
            }
            if (++tested >= 10) break;
        }
    }
    return run;
}

double median3(double a, double b, double c) {
    return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

void criterion_7(const std::vector<SeedRun>& seeds) {
    bool pass = true;
    std::ostringstream detail;
    std::vector<double> clean_d, accent_d, random_d, gaps;
    for (const auto& s : seeds) {
        clean_d.push_back(s.attack.disparity_pp.at("clean"));
        accent_d.push_back(s.attack.disparity_pp.at("accent"));
        random_d.push_back(s.attack.disparity_pp.at("random"));
        const auto& acc = s.attack.per_accent_wer.at("accent");
        const auto& rnd = s.attack.per_accent_wer.at("random");
        double gap = 0.0;
        for (const auto& [a, w] : acc) gap += (w - rnd.at(a)) * 100.0;
        gaps.push_back(gap / static_cast<double>(acc.size()));
    }
    const double med_clean = median3(clean_d[0], clean_d[1], clean_d[2]);
    const double med_accent = median3(accent_d[0], accent_d[1], accent_d[2]);
    const double med_random = median3(random_d[0], random_d[1], random_d[2]);
    const double mean_gap = (gaps[0] + gaps[1] + gaps[2]) / 3.0;
    if (!(med_clean < med_accent)) pass = false;
    if (!(med_accent >= med_random)) pass = false;
    if (!(mean_gap > 0.0)) pass = false;
    detail << "median disparity clean " << fmt(med_clean, 2) << " < accent " << fmt(med_accent, 2)
           << ", accent >= random " << fmt(med_random, 2) << "; mean per-accent gap "
           << fmt(mean_gap, 2) << " pp";
    report(7, pass, "disparity amplification ordering", detail.str());
}

void criterion_8(const std::vector<SeedRun>& seeds) {
    bool pass = true;
    std::ostringstream detail;
    std::map<std::string, double> pooled_perm_gap;
    int n_accents = 0;
    for (const auto& s : seeds) {
        const auto& acc = s.attack.per_accent_wer.at("accent");
        const auto& rnd = s.attack.per_accent_wer.at("random");
        const auto& perm = s.attack.per_accent_wer.at("permuted");
        double gap_acc = 0.0, gap_perm = 0.0;
        for (const auto& [a, w] : acc) {
            gap_acc += (w - rnd.at(a)) * 100.0;
            gap_perm += (perm.at(a) - rnd.at(a)) * 100.0;
            pooled_perm_gap[a] += (perm.at(a) - rnd.at(a)) * 100.0 / 3.0;
        }
        n_accents = static_cast<int>(acc.size());
        gap_acc /= n_accents;
        gap_perm /= n_accents;
        if (!(gap_perm < gap_acc)) pass = false;
        detail << "seed " << s.seed << ": perm " << fmt(gap_perm, 2) << " vs accent "
               << fmt(gap_acc, 2) << " pp; ";
        // probe accuracy of U_perm on true labels near chance
        const double chance = 1.0 / 7.0;
        if (std::abs(s.perm_probe_eval - chance) > 0.1) pass = false;
    }
    int positive = 0;
    for (const auto& [a, g] : pooled_perm_gap) {
        if (g > 0) ++positive;
    }
    const bool inconsistent = positive > 0 && positive < n_accents;
    if (!inconsistent) pass = false;
    detail << "perm-gap signs " << positive << "/" << n_accents << " positive; perm probe acc "
           << fmt(seeds[0].perm_probe_eval, 3) << "," << fmt(seeds[1].perm_probe_eval, 3) << ","
           << fmt(seeds[2].perm_probe_eval, 3) << " vs chance " << fmt(1.0 / 7.0, 3);
    report(8, pass, "permuted-label specificity", detail.str());
}

void criterion_10(const std::vector<SeedRun>& seeds) {
    bool pass = true;
    int hold = 0;
    std::ostringstream detail;
    for (const auto& s : seeds) {
        std::map<double, std::map<std::string, double>> disp;
        for (const auto& row : s.sweep) {
            disp[row.epsilon][attack::condition_name(row.condition)] = row.disparity_pp;
        }
        const auto& lo = *disp.begin();
        const auto& hi = *disp.rbegin();
        const double gap_lo = lo.second.at("accent") - lo.second.at("random");
        const double gap_hi = hi.second.at("accent") - hi.second.at("random");
        if (gap_hi >= gap_lo) ++hold;
        detail << "seed " << s.seed << ": gap " << fmt(gap_lo, 2) << " -> " << fmt(gap_hi, 2)
               << " pp; ";
    }
    if (hold < 2) pass = false;
    detail << hold << "/3 non-decreasing";
    report(10, pass, "epsilon-sweep direction", detail.str());
}

void criterion_11(const std::vector<SeedRun>& seeds) {
    bool pass = true;
    std::ostringstream detail;
    for (const auto& s : seeds) {
        const double base = s.intervention.disparity_pp.clean_base;
        const double hooked = s.intervention.disparity_pp.clean_int;
        // the hook must not reduce clean disparity by more than 0.5 pp
        if (base - hooked > 0.5) pass = false;
        if (!s.annihilation_ok) pass = false;
        detail << "seed " << s.seed << ": clean disparity " << fmt(base, 2) << " -> "
               << fmt(hooked, 2) << " pp, alpha=1 annihilation "
               << (s.annihilation_ok ? "exact" : "FAILED") << "; ";
    }
    report(11, pass, "intervention negative result", detail.str());
}

void criterion_12(const DefaultRun& first, const fs::path& tmp_root, int jobs) {
    bool pass = first.train_ok;
    std::ostringstream detail;
    const double total = first.gen_s + first.train_s + first.extract_s + first.attack_s +
                         first.sweep_s + first.intervene_s + first.report_s;
    if (total >= 600.0) pass = false;
    detail << "pipeline " << fmt(total, 1) << "s (gen " << fmt(first.gen_s, 1) << ", train "
           << fmt(first.train_s, 1) << ", extract " << fmt(first.extract_s, 1) << ", attack "
           << fmt(first.attack_s, 1) << ", sweep " << fmt(first.sweep_s, 1) << ", intervene "
           << fmt(first.intervene_s, 1) << ", report " << fmt(first.report_s, 1) << ")";

    if (first.train_ok) {
        DefaultRun second = run_default_pipeline(tmp_root / "default_rerun", jobs);
        const bool identical = second.train_ok && !first.report_bytes.empty() &&
                               first.report_bytes == second.report_bytes;
        if (!identical) pass = false;
        detail << "; reports " << (identical ? "byte-identical" : "DIFFER");
    } else {
        detail << "; no trained model";
    }
    report(12, pass, "determinism + runtime", detail.str());
}

}  // namespace

int main() {
    const int jobs = default_jobs();
    const fs::path tmp_root =
        fs::temp_directory_path() / ("aces_acceptance_" + std::to_string(::time(nullptr)));
    fs::create_directories(tmp_root);
    std::printf("acceptance: scratch dir %s, %d jobs\n", tmp_root.c_str(), jobs);

    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();

    DefaultRun def = run_default_pipeline(tmp_root / "default", jobs);

    criterion_5(def);
    criterion_6(def);

    std::vector<SeedRun> seeds;
    std::vector<attack::AttackOutcome> held;
    for (std::uint64_t seed : {101ull, 202ull, 303ull}) {
        seeds.push_back(run_seed(tmp_root / ("seed_" + std::to_string(seed)), seed, jobs));
        for (const auto& o : seeds.back().all_outcomes) held.push_back(o);
    }

    criterion_7(seeds);
    criterion_8(seeds);
    criterion_9(def, held);
    criterion_10(seeds);
    criterion_11(seeds);
    criterion_12(def, tmp_root, jobs);

    std::error_code ec;
    fs::remove_all(tmp_root, ec);

    if (g_failures == 0) {
        std::printf("acceptance: all criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criterion(s) failed\n", g_failures);
    return 1;
}
