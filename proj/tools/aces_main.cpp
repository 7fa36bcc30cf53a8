#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "aces/audit_config.hpp"
#include "aces/errors.hpp"
#include "aces/parallel.hpp"
#include "aces/stages.hpp"
#include "aces/version.hpp"

namespace {

struct CliOptions {
    std::string config_path;
    std::string output_dir;
    long long seed = -1;
    int jobs = 0;
    bool print_config = false;
};

aces::AuditConfig make_config(const CliOptions& opts) {
    aces::AuditConfig cfg =
        opts.config_path.empty() ? aces::default_config() : aces::load_config(opts.config_path);
    if (!opts.output_dir.empty()) cfg.output_dir = opts.output_dir;
    if (opts.seed >= 0) cfg.global_seed = static_cast<std::uint64_t>(opts.seed);
    aces::finalize(cfg);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"aces: accent-subspace stress-test audit for a small CTC recognizer"};
    app.set_version_flag("--version", std::string(aces::kToolVersion));
    app.require_subcommand(0, 1);

    CliOptions opts;
    app.add_option("--config", opts.config_path, "JSON config file (defaults when omitted)");
    app.add_option("--output-dir", opts.output_dir, "override config output_dir");
    app.add_option("--seed", opts.seed, "override global seed");
    app.add_option("--jobs", opts.jobs, "worker threads (default: hardware)");
    app.add_flag("--print-config", opts.print_config,
                 "print the effective config as JSON and exit");

    auto* gen = app.add_subcommand("gen", "synthesize the corpus");
    auto* train = app.add_subcommand("train", "train the CTC recognizer");
    auto* extract = app.add_subcommand("extract", "fit, validate and select accent subspaces");
    auto* atk = app.add_subcommand("attack", "run the PGD attack conditions");
    auto* sweep = app.add_subcommand("sweep-eps", "epsilon ablation grid");
    auto* intervene = app.add_subcommand("intervene", "project-out intervention evaluation");
    auto* report = app.add_subcommand("report", "assemble the summary report");
    auto* full = app.add_subcommand("full-audit", "run every stage in order");

    CLI11_PARSE(app, argc, argv);

    try {
        aces::AuditConfig cfg = make_config(opts);
        const int jobs = opts.jobs > 0 ? opts.jobs : aces::default_jobs();
        if (opts.print_config) {
            std::cout << aces::config_to_json(cfg).dump(2) << "\n";
            return 0;
        }
        if (app.get_subcommands().empty()) {
            std::cerr << "error: no command given (try --help)\n";
            return 1;
        }
        if (gen->parsed()) {
            aces::stages::GenResult r = aces::stages::run_gen(cfg, jobs);
            std::cout << "gen: train=" << r.n_train << " validation=" << r.n_val
                      << " eval=" << r.n_eval << " -> " << cfg.output_dir << "/corpus\n";
        } else if (train->parsed()) {
            aces::model::TrainResult r = aces::stages::run_train(cfg, jobs);
            const auto& last = r.history.back();
            std::cout << "train: stopped at epoch " << r.stopped_epoch << ", val mean WER "
                      << last.val_mean_wer << "\n";
        } else if (extract->parsed()) {
            aces::stages::ExtractResult r = aces::stages::run_extract(cfg, jobs);
            std::cout << "extract: selected layer " << r.selection.chosen.layer << ", k "
                      << r.selection.chosen.k << ", method "
                      << aces::subspace::method_name(r.selection.chosen.method)
                      << " (probe acc " << r.accent.diagnostics.probe_accuracy << ")\n";
        } else if (atk->parsed()) {
            aces::stages::AttackStageResult r = aces::stages::run_attack(cfg, jobs);
            for (const auto& [cname, disparity] : r.disparity_pp) {
                std::cout << "attack: " << cname << " mean WER "
                          << r.mean_wer.at(cname) * 100.0 << "%, disparity " << disparity
                          << " pp, mean coupling " << r.mean_coupling.at(cname) << "\n";
            }
        } else if (sweep->parsed()) {
            auto rows = aces::stages::run_sweep_eps(cfg, jobs);
            std::cout << "sweep-eps: " << rows.size() << " (epsilon, condition) cells\n";
        } else if (intervene->parsed()) {
            aces::intervention::InterventionReport r = aces::stages::run_intervene(cfg, jobs);
            std::cout << "intervene: clean disparity " << r.disparity_pp.clean_base << " -> "
                      << r.disparity_pp.clean_int << " pp, attacked "
                      << r.disparity_pp.att_base << " -> " << r.disparity_pp.att_int << " pp\n";
        } else if (report->parsed()) {
            aces::stages::run_report(cfg);
            std::cout << "report: wrote " << cfg.output_dir << "/report.json\n";
        } else if (full->parsed()) {
            aces::stages::run_full_audit(cfg, jobs);
            std::cout << "full-audit: wrote " << cfg.output_dir << "/report.json\n";
        }
        return 0;
    } catch (const aces::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const aces::DependencyError& e) {
        std::cerr << "dependency error: " << e.what() << "\n";
        return 2;
    } catch (const aces::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
