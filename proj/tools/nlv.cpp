// nlv: nested logit with a latent construct, command-line front end.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "nlv/cfa.hpp"
#include "nlv/error.hpp"
#include "nlv/estimator.hpp"
#include "nlv/pipeline.hpp"
#include "nlv/report.hpp"
#include "nlv/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string out;
};

struct Inputs {
    std::string data, schema, indicators, scores, spec;
    std::vector<std::string> names;
};

nlv::ChoiceSchema load_schema(const std::string& path) {
    return path.empty() ? nlv::ChoiceSchema{} : nlv::schema_from_json(nlv::read_json_file(path));
}

// Scores for the model: an explicit scores CSV, or a CFA on the indicator file.
std::vector<double> latent_scores(const Inputs& in, const nlv::ChoiceDataset& data, const nlv::ModelSpec& spec,
                                  std::optional<nlv::cfa::CfaResult>* fitted = nullptr) {
    if (!spec.binds_latent()) return {};
    if (!in.scores.empty()) return nlv::read_scores_csv(in.scores, data);
    if (in.indicators.empty()) {
        throw nlv::ValidationError("the model binds the latent construct: pass --indicators or --scores");
    }
    const auto panel = nlv::align_panel(nlv::load_indicator_csv(in.indicators), data);
    nlv::cfa::CfaSpec cs;
    cs.indicator_names = in.names;
    auto fit = nlv::cfa::fit_cfa(panel, cs);
    auto scores = fit.scores;
    if (fitted) *fitted = std::move(fit);
    return scores;
}

nlv::ParameterVector theta_from_results(const json& results, const nlv::Model& model) {
    if (!results.contains("estimation")) throw nlv::RenderError("results file has no estimation section");
    auto theta = model.start_parameters();
    for (const auto& p : results.at("estimation").at("parameters")) {
        const auto name = p.at("name").get<std::string>();
        if (!theta.find(name)) throw nlv::SpecError("results parameter '" + name + "' is not in the model spec");
        if (p.at("fixed").get<bool>() || p.at("value").is_null()) continue;
        theta.set(name, p.at("value").get<double>());
    }
    return theta;
}

int fail(int code, const std::exception& e) {
    std::fprintf(stderr, "nlv: error: %s\n", e.what());
    return code;
}

// Input and spec problems map to 2 regardless of the stage that hit them.
int stage_error(int stage_code, const std::exception& e) {
    if (dynamic_cast<const nlv::ValidationError*>(&e) || dynamic_cast<const nlv::SchemaError*>(&e) ||
        dynamic_cast<const nlv::SpecError*>(&e)) {
        return fail(nlv::kExitValidation, e);
    }
    return fail(stage_code, e);
}

void add_data_options(CLI::App* app, Inputs& in, bool need_spec) {
    app->add_option("--data", in.data, "long-format choice CSV")->required()->check(CLI::ExistingFile);
    app->add_option("--schema", in.schema, "choice schema JSON (column names, categoricals)")->check(CLI::ExistingFile);
    auto* spec = app->add_option("--spec", in.spec, "model specification")->check(CLI::ExistingFile);
    if (need_spec) spec->required();
    app->add_option("--indicators", in.indicators, "indicator CSV; a CFA supplies the scores")
        ->check(CLI::ExistingFile);
    app->add_option("--scores", in.scores, "precomputed resp_id,score CSV")->check(CLI::ExistingFile);
    app->add_option("--indicator-names", in.names, "indicator subset for the CFA")->delimiter(',');
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nested logit estimation with a CFA-scored latent construct"};
    app.require_subcommand(1);
    app.set_version_flag("--version", nlv::kToolVersion);

    Common common;
    auto add_common = [&](CLI::App* sub, bool seed = true) {
        if (seed) sub->add_option("--seed", common.seed, "random seed");
        sub->add_option("--threads", common.threads, "worker threads (default: NLV_THREADS, then 1)");
        sub->add_option("--out", common.out, "output directory");
    };

    // run
    std::string config_path;
    std::optional<std::size_t> max_iterations;
    auto* run = app.add_subcommand("run", "ingest, CFA, estimation and simulation from one config file");
    run->add_option("config", config_path, "pipeline config JSON")->required();
    run->add_option("--max-iterations", max_iterations, "override the estimation iteration limit");
    add_common(run);

    // cfa fit
    auto* cfa = app.add_subcommand("cfa", "confirmatory factor analysis");
    cfa->require_subcommand(1);
    auto* cfa_fit = cfa->add_subcommand("fit", "fit a single-factor CFA and score respondents");
    std::string cfa_indicators;
    std::vector<std::string> cfa_names;
    bool raw = false;
    cfa_fit->add_option("--indicators", cfa_indicators, "indicator CSV")->required()->check(CLI::ExistingFile);
    cfa_fit->add_option("--names", cfa_names, "indicator subset")->delimiter(',');
    cfa_fit->add_flag("--raw", raw, "fit the covariance instead of the correlation matrix");
    add_common(cfa_fit, false);

    // estimate
    Inputs est_in;
    nlv::EstimationOptions est_opts;
    auto* est = app.add_subcommand("estimate", "maximum likelihood estimation of the nested logit");
    add_data_options(est, est_in, true);
    est->add_option("--starts", est_opts.starts, "multistart count");
    est->add_option("--max-iterations", est_opts.max_iterations, "iteration limit per start");
    est->add_option("--tolerance", est_opts.gradient_tolerance, "gradient-norm tolerance (mean log-likelihood)");
    add_common(est);

    // simulate
    auto* sim = app.add_subcommand("simulate", "share enumeration, latent sweeps, synthetic data");
    sim->require_subcommand(1);
    Inputs sim_in;
    std::string results_path;
    double delta = 1.0;
    auto* shares = sim->add_subcommand("shares", "observed vs simulated shares by sample enumeration");
    add_data_options(shares, sim_in, true);
    shares->add_option("--results", results_path, "results.json from estimate")->required()->check(CLI::ExistingFile);
    add_common(shares, false);
    auto* sweep = sim->add_subcommand("sweep", "shares before and after shifting every latent score");
    add_data_options(sweep, sim_in, true);
    sweep->add_option("--results", results_path, "results.json from estimate")->required()->check(CLI::ExistingFile);
    sweep->add_option("--delta", delta, "score shift");
    add_common(sweep, false);
    auto* gen = sim->add_subcommand("generate", "write a synthetic dataset");
    std::string gen_config;
    bool california = false;
    gen->add_option("--config", gen_config, "synthetic config JSON")->check(CLI::ExistingFile);
    gen->add_flag("--california", california, "use the built-in California analog config");
    add_common(gen);

    // report
    auto* rep = app.add_subcommand("report", "render results.json as text");
    std::string rep_results;
    rep->add_option("results", rep_results, "results.json")->required()->check(CLI::ExistingFile);
    rep->add_option("--out", common.out, "write the report to this file instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        if (code == 0) return nlv::kExitOk;
        // A missing or unreadable input file is a validation failure, not a usage error.
        return dynamic_cast<const CLI::ValidationError*>(&e) ? nlv::kExitValidation : nlv::kExitUsage;
    }

    const unsigned threads = nlv::resolve_threads(common.threads);
    const nlv::Execution exec{threads};
    const fs::path out = common.out.empty() ? fs::path("out") : fs::path(common.out);

    if (run->parsed()) {
        nlv::PipelineOverrides ov;
        ov.seed = common.seed;
        ov.threads = common.threads;
        if (!common.out.empty()) ov.output = common.out;
        ov.max_iterations = max_iterations;
        const auto outcome = nlv::run_pipeline(config_path, ov);
        if (outcome.exit_code != nlv::kExitOk) {
            std::fprintf(stderr, "nlv: stage '%s' failed (exit %d): %s\n", outcome.failed_stage.value_or("?").c_str(),
                         outcome.exit_code, outcome.message.c_str());
        } else {
            std::printf("wrote %s\n", (outcome.output / "report.txt").string().c_str());
        }
        return outcome.exit_code;
    }

    if (cfa_fit->parsed()) {
        try {
            const auto panel = nlv::load_indicator_csv(cfa_indicators);
            nlv::cfa::CfaSpec cs;
            cs.indicator_names = cfa_names;
            cs.standardize = !raw;
            const auto fit = nlv::cfa::fit_cfa(panel, cs);
            nlv::ResultSections sections;
            sections.cfa = nlv::cfa_to_json(fit);
            const auto results = nlv::make_results(sections);
            nlv::write_json_file(out / "cfa.json", results);
            nlv::cfa_scores_table(fit).write(out / "cfa_scores.csv");
            const auto text = nlv::render_report(results);
            nlv::write_text_file(out / "report.txt", text);
            std::fputs(text.c_str(), stdout);
            return nlv::kExitOk;
        } catch (const std::exception& e) {
            return stage_error(nlv::kExitCfa, e);
        }
    }

    if (est->parsed()) {
        int stage = nlv::kExitValidation;
        try {
            const auto data = nlv::load_choice_csv(est_in.data, load_schema(est_in.schema));
            const auto spec = nlv::parse_model_spec(est_in.spec, data.covariate_names);
            stage = nlv::kExitCfa;
            std::optional<nlv::cfa::CfaResult> fitted;
            const auto scores = latent_scores(est_in, data, spec, &fitted);
            stage = nlv::kExitEstimation;
            est_opts.threads = threads;
            if (common.seed) est_opts.seed = *common.seed;
            nlv::EstimationResult result;
            try {
                result = nlv::estimate(data, scores, spec, est_opts);
            } catch (const nlv::EstimationError& e) {
                nlv::write_text_file(out / "estimation_log.txt", e.what());
                throw;
            }
            nlv::ResultSections sections;
            if (fitted) {
                sections.cfa = nlv::cfa_to_json(*fitted);
                nlv::cfa_scores_table(*fitted).write(out / "cfa_scores.csv");
            }
            sections.estimation = nlv::estimation_to_json(result, spec);
            const auto results = nlv::make_results(sections);
            nlv::write_json_file(out / "results.json", results);
            nlv::write_text_file(out / "estimation_log.txt", nlv::format_start_traces(result.starts));
            const auto text = nlv::render_report(results);
            nlv::write_text_file(out / "report.txt", text);
            std::fputs(text.c_str(), stdout);
            return nlv::kExitOk;
        } catch (const std::exception& e) {
            return stage_error(stage, e);
        }
    }

    if (shares->parsed() || sweep->parsed()) {
        try {
            const auto data = nlv::load_choice_csv(sim_in.data, load_schema(sim_in.schema));
            const auto spec = nlv::parse_model_spec(sim_in.spec, data.covariate_names);
            const auto scores = latent_scores(sim_in, data, spec);
            const auto model = nlv::Model::bind(spec, data);
            const auto theta = theta_from_results(nlv::read_json_file(results_path), model);
            if (shares->parsed()) {
                const auto report = nlv::enumerate_shares(data, scores, theta, model, exec);
                nlv::share_table(report).write(out / "shares.csv");
                std::fputs(nlv::render_share_block(nlv::shares_to_json(report)).c_str(), stdout);
            } else {
                const auto [before, after] = nlv::latent_sweep(data, scores, theta, model, delta, exec);
                nlv::csv::Table t({"alternative", "before", "after"});
                for (std::size_t i = 0; i < before.alternatives.size(); ++i) {
                    t.add_row({before.alternatives[i], nlv::csv::format_double(before.simulated[i]),
                               nlv::csv::format_double(after.simulated[i])});
                    std::printf("%-24s %10.4f%% -> %10.4f%%\n", before.alternatives[i].c_str(),
                                100.0 * before.simulated[i], 100.0 * after.simulated[i]);
                }
                t.write(out / "sweep.csv");
            }
            return nlv::kExitOk;
        } catch (const std::exception& e) {
            return stage_error(nlv::kExitSimulation, e);
        }
    }

    if (gen->parsed()) {
        try {
            if (california == !gen_config.empty()) {
                throw nlv::ValidationError("pass exactly one of --config and --california");
            }
            auto config = california ? nlv::california_analog() : nlv::read_synthetic_config(gen_config);
            if (common.seed) config.seed = *common.seed;
            const auto data = nlv::generate_synthetic(config, exec);
            nlv::write_synthetic(data, out);
            std::printf("wrote %zu observations for %zu respondents to %s\n", data.data.observations.size(),
                        data.data.respondents.size(), out.string().c_str());
            return nlv::kExitOk;
        } catch (const std::exception& e) {
            return stage_error(nlv::kExitSimulation, e);
        }
    }

    if (rep->parsed()) {
        try {
            const auto text = nlv::render_report(nlv::read_json_file(rep_results));
            if (common.out.empty()) {
                std::fputs(text.c_str(), stdout);
            } else {
                nlv::write_text_file(common.out, text);
            }
            return nlv::kExitOk;
        } catch (const std::exception& e) {
            return fail(nlv::kExitValidation, e);
        }
    }
    return nlv::kExitUsage;
}
