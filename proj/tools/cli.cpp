#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "cosinor/eval.hpp"
#include "cosinor/io.hpp"
#include "cosinor/phase_adjust.hpp"
#include "cosinor/simgen.hpp"

namespace cosinor::cli {

namespace {

struct FitOptions {
    std::string psi = "full";
    int max_iter = 500;
    double tol = 1e-8;
    unsigned threads = 1;

    EmConfig em() const {
        EmConfig c;
        c.max_iterations = max_iter;
        c.loglik_tol = tol;
        c.param_tol = tol;
        c.psi_structure = psi == "diagonal" ? PsiStructure::kDiagonal : PsiStructure::kFull;
        return c;
    }
};

struct AdjustOptions {
    std::string step6 = "circular";
    std::string phase_variance = "displayed";
    bool realign = false;

    AdjustConfig config(const FitOptions& fit) const {
        AdjustConfig c;
        c.em = fit.em();
        c.step6 = step6 == "phase" ? Step6Weights::kIndividualVariance : Step6Weights::kCircularVariance;
        c.phase_variance = phase_variance == "delta" ? PhaseVarianceForm::kDelta : PhaseVarianceForm::kDisplayed;
        c.realign = realign;
        return c;
    }
};

void add_fit_options(CLI::App* cmd, FitOptions& o) {
    cmd->add_option("--psi", o.psi, "Random-effect covariance structure")
        ->check(CLI::IsMember({"full", "diagonal"}))
        ->capture_default_str();
    cmd->add_option("--max-iter", o.max_iter, "Maximum EM iterations")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    cmd->add_option("--tol", o.tol, "EM tolerance on log-likelihood and relative parameter change")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--threads", o.threads, "Worker threads (0: all cores)")->capture_default_str();
}

void add_adjust_options(CLI::App* cmd, AdjustOptions& o) {
    cmd->add_option("--step6-weights", o.step6,
                    "Gene weights when pooling offsets: circular = 1/(1-resultant length), phase = 1/Var(phase)")
        ->check(CLI::IsMember({"circular", "phase"}))
        ->capture_default_str();
    cmd->add_option("--phase-variance", o.phase_variance,
                    "Phase variance in the shrinkage weights: displayed = amplitude^2 x delta method, delta")
        ->check(CLI::IsMember({"displayed", "delta"}))
        ->capture_default_str();
    cmd->add_flag("--realign", o.realign, "Rotate refits back to the original population phase");
}

// Write through `fn` to `path`, or to `fallback` when the path is empty or "-".
void emit(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& fn) {
    if (path.empty() || path == "-") {
        fn(fallback);
        return;
    }
    std::ofstream file(path);
    if (!file) throw Error(Errc::kDataFormat, "cannot write '" + path + "'");
    fn(file);
    if (!file) throw Error(Errc::kDataFormat, "write to '" + path + "' failed");
}

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    sink->set_pattern("[%l] %v");
    auto logger = std::make_shared<spdlog::logger>("cosinor", sink);
    logger->set_level(spdlog::level::warn);
    if (const char* env = std::getenv("COSINOR_LOG")) {
        logger->set_level(spdlog::level::from_str(env));
    }
    return logger;
}

void report_ingestion(spdlog::logger& log, const io::ExpressionData& d) {
    log.info("{} genes x {} individuals", d.data.n_genes(), d.data.n_individuals());
    if (d.dropped_missing > 0) log.warn("dropped {} rows with missing expression", d.dropped_missing);
    for (const auto& e : d.excluded_genes) log.warn("gene '{}' excluded: {}", e.gene_id, e.reason);
    for (const auto& w : d.warnings) log.warn("{}", w);
    if (d.data.n_genes() == 0) throw Error(Errc::kDataFormat, "no gene has complete data");
}

void restrict_genes(GeneMatrix& data, const std::unordered_set<std::string>& keep) {
    GeneMatrix filtered = data;
    filtered.gene_ids.clear();
    filtered.values.clear();
    for (std::size_t g = 0; g < data.n_genes(); ++g) {
        if (!keep.contains(data.gene_ids[g])) continue;
        filtered.gene_ids.push_back(data.gene_ids[g]);
        filtered.values.push_back(data.values[g]);
    }
    if (filtered.gene_ids.empty()) throw Error(Errc::kEmptyAfterFilter, "no listed gene is present");
    data = std::move(filtered);
}

int count_ok(const std::vector<GeneRecord>& records) {
    return static_cast<int>(std::count_if(records.begin(), records.end(), [](const GeneRecord& r) { return r.ok; }));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Mixed-effects cosinor fitting, phase adjustment and simulation campaigns"};
    app.set_config("--config", "", "TOML or INI file with option defaults (flags take precedence)");
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    auto log = make_logger(err);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run simulation campaigns or write synthetic expression files");
    std::vector<int> settings{1};
    int trials = 2000;
    std::uint64_t seed = 7;
    std::string amplitude = "common";
    std::string sim_out, export_trial;
    int panel_genes = 0;
    FitOptions sim_fit;
    AdjustOptions sim_adjust;
    sim->add_option("--setting", settings, "Simulation settings to run (1-6)")
        ->check(CLI::Range(1, 6))
        ->capture_default_str();
    sim->add_option("--trials", trials, "Trials per setting")->check(CLI::PositiveNumber)->capture_default_str();
    sim->add_option("--seed", seed, "Campaign seed")->capture_default_str();
    sim->add_option("--amplitude", amplitude, "Population amplitude: common = 0.3 everywhere, listed = per setting")
        ->check(CLI::IsMember({"common", "listed"}))
        ->capture_default_str();
    sim->add_option("--export-trial", export_trial,
                    "Write the first trial of the first setting as an expression file (with internal-time offsets)");
    sim->add_option("--panel", panel_genes,
                    "Write a multi-gene synthetic study with this many genes to --out instead of running a campaign")
        ->check(CLI::NonNegativeNumber);
    sim->add_option("--out", sim_out, "Output file (default: stdout)");
    add_fit_options(sim, sim_fit);
    add_adjust_options(sim, sim_adjust);

    // fit
    auto* fit = app.add_subcommand("fit", "Mixed cosinor fit of every gene in an expression file");
    std::string fit_input, fit_out, fit_genes_path;
    bool use_ict = false;
    FitOptions fit_opts;
    fit->add_option("input", fit_input, "Expression file")->required()->check(CLI::ExistingFile);
    fit->add_flag("--ict", use_ict, "Shift each individual's times by its ict_offset_hours before fitting");
    fit->add_option("--genes", fit_genes_path, "Only fit genes listed in this file")->check(CLI::ExistingFile);
    fit->add_option("--out", fit_out, "Fit report (default: stdout)");
    add_fit_options(fit, fit_opts);

    // adjust
    auto* adj = app.add_subcommand("adjust", "Estimate per-individual time translations and refit every gene");
    std::string adj_input, adj_out, adj_translations, adj_offsets, adj_original, adj_genes_path;
    FitOptions adj_fit;
    AdjustOptions adj_opts;
    adj->add_option("input", adj_input, "Expression file")->required()->check(CLI::ExistingFile);
    adj->add_option("--genes", adj_genes_path, "Only use genes listed in this file")->check(CLI::ExistingFile);
    adj->add_option("--out", adj_out, "Refit report on translated times (default: stdout)");
    adj->add_option("--translations", adj_translations, "Per-individual translation table (hours)");
    adj->add_option("--offsets", adj_offsets, "Per-gene, per-individual phase offsets (radians)");
    adj->add_option("--original", adj_original, "Fit report on the recorded times");
    add_fit_options(adj, adj_fit);
    add_adjust_options(adj, adj_opts);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Regress reference estimates on candidate estimates through the origin");
    std::string ev_estimate, ev_reference, ev_genes, ev_out, ev_scatter;
    std::string r2 = "uncentered";
    ev->add_option("estimate", ev_estimate, "Fit report supplying the covariate")->required()->check(CLI::ExistingFile);
    ev->add_option("reference", ev_reference, "Fit report supplying the response")->required()->check(CLI::ExistingFile);
    ev->add_option("--genes", ev_genes, "Restrict to genes listed in this file")->check(CLI::ExistingFile);
    ev->add_option("--r2", r2, "R-squared denominator")
        ->check(CLI::IsMember({"uncentered", "centered"}))
        ->capture_default_str();
    ev->add_option("--scatter", ev_scatter, "Per-gene pairs with the fitted slope, for plotting");
    ev->add_option("--out", ev_out, "Result table (default: stdout)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*sim) {
            if (panel_genes > 0) {
                PanelConfig pc;
                pc.n_genes = panel_genes;
                const PanelOutput panel = generate_panel(pc, seed);
                emit(sim_out, out, [&](std::ostream& os) { io::write_expression(os, panel.data, panel.offset_hours); });
                return kOk;
            }
            const auto conv = amplitude == "listed" ? AmplitudeConvention::kListed : AmplitudeConvention::kCommon;
            if (!export_trial.empty()) {
                const SimSetting s = SimSetting::preset(settings.front(), conv);
                const TrialOutput trial = generate_trial(s, trial_seed(seed, 0));
                std::vector<double> offsets;
                for (double c2 : trial.truth.c2) offsets.push_back(radians_to_hours(c2));
                emit(export_trial, out, [&](std::ostream& os) { io::write_expression(os, trial.data_offset, offsets); });
            }
            CampaignOptions options;
            options.adjust = sim_adjust.config(sim_fit);
            options.threads = sim_fit.threads;
            const Framework frameworks[] = {Framework::kAdjusted, Framework::kNaive, Framework::kAligned};
            std::vector<CampaignTable> tables;
            for (int id : settings) {
                log->info("setting {}: {} trials", id, trials);
                tables.push_back(run_campaign(SimSetting::preset(id, conv), trials, frameworks, seed, options));
                for (const auto& row : tables.back().rows) {
                    if (row.n_failed > 0) {
                        log->warn("setting {} framework {}: {} failed trials", id, static_cast<int>(row.framework),
                                  row.n_failed);
                    }
                }
            }
            emit(sim_out, out, [&](std::ostream& os) { io::write_campaign(os, tables); });
            return kOk;
        }

        if (*fit) {
            io::ExpressionData data = io::read_expression_file(fit_input);
            if (!fit_genes_path.empty()) restrict_genes(data.data, io::read_gene_list_file(fit_genes_path));
            report_ingestion(*log, data);
            std::vector<double> shift;
            if (use_ict) {
                if (!data.ict_offset_hours) throw Error(Errc::kDataFormat, "--ict needs an ict_offset_hours column");
                shift = *data.ict_offset_hours;
            }
            const GeneFits fits = fit_genes(data.data, fit_opts.em(), shift, fit_opts.threads);
            auto records = io::fit_records(data.data.gene_ids, fits.fits, fits.failures);
            for (const auto& e : data.excluded_genes) {
                GeneRecord r;
                r.gene_id = e.gene_id;
                r.note = "excluded: " + e.reason;
                records.push_back(std::move(r));
            }
            emit(fit_out, out, [&](std::ostream& os) { io::write_fit_report(os, records); });
            if (count_ok(records) == 0) {
                log->error("no gene was fitted");
                return kNumericalFailure;
            }
            return kOk;
        }

        if (*adj) {
            io::ExpressionData data = io::read_expression_file(adj_input);
            if (!adj_genes_path.empty()) restrict_genes(data.data, io::read_gene_list_file(adj_genes_path));
            report_ingestion(*log, data);
            const AdjustmentResult res = run_adjustment(data.data, adj_opts.config(adj_fit));
            for (const auto& e : res.adjustment.excluded_genes) log->warn("gene '{}' excluded: {}", e.gene_id, e.reason);
            for (const auto& w : res.adjustment.warnings) log->warn("{}", w);

            const auto refit = io::fit_records(data.data.gene_ids, res.refit, res.adjustment.excluded_genes);
            emit(adj_out, out, [&](std::ostream& os) { io::write_fit_report(os, refit); });
            if (!adj_translations.empty()) {
                emit(adj_translations, out, [&](std::ostream& os) {
                    io::write_translations(os, data.data.individual_ids, res.adjustment.d_tilde);
                });
            }
            if (!adj_offsets.empty()) {
                emit(adj_offsets, out, [&](std::ostream& os) { io::write_offsets(os, data.data, res.adjustment); });
            }
            if (!adj_original.empty()) {
                const auto original = io::fit_records(data.data.gene_ids, res.original, res.adjustment.excluded_genes);
                emit(adj_original, out, [&](std::ostream& os) { io::write_fit_report(os, original); });
            }
            return kOk;
        }

        if (*ev) {
            auto estimate = io::read_fit_report_file(ev_estimate);
            auto reference = io::read_fit_report_file(ev_reference);
            if (!ev_genes.empty()) {
                const auto keep = io::read_gene_list_file(ev_genes);
                try {
                    estimate = gene_filter(estimate, keep);
                    reference = gene_filter(reference, keep);
                } catch (const Error& e) {
                    log->warn("{}", e.what());
                    return kDataError;
                }
            }
            const auto convention = r2 == "centered" ? R2Convention::kCentered : R2Convention::kUncentered;
            std::vector<io::EvaluationRow> rows;
            std::vector<std::pair<Quantity, PairedQuantities>> scatter;
            for (Quantity q : {Quantity::kAmplitude, Quantity::kWald}) {
                PairingResult paired = pair_reports(estimate, reference, q);
                if (!paired.only_in_x.empty() || !paired.only_in_y.empty()) {
                    log->warn("{}: {} genes only in the estimate report, {} only in the reference; using the "
                              "intersection",
                              quantity_name(q), paired.only_in_x.size(), paired.only_in_y.size());
                }
                rows.push_back({q, gamma_fit(paired.pairs, convention)});
                scatter.emplace_back(q, std::move(paired.pairs));
            }
            emit(ev_out, out, [&](std::ostream& os) { io::write_evaluation(os, rows); });
            if (!ev_scatter.empty()) {
                emit(ev_scatter, out, [&](std::ostream& os) {
                    for (std::size_t k = 0; k < scatter.size(); ++k) {
                        io::write_scatter(os, scatter[k].first, scatter[k].second, rows[k].fit.gamma, k == 0);
                    }
                });
            }
            return kOk;
        }
    } catch (const Error& e) {
        log->error("{}", e.what());
        return is_numerical(e.code()) ? kNumericalFailure : kDataError;
    } catch (const std::exception& e) {
        log->error("{}", e.what());
        return kDataError;
    }
    return kUsage;
}

}  // namespace cosinor::cli
