#include "nlv/pipeline.hpp"

#include <fstream>
#include <unordered_map>

#include "nlv/cfa.hpp"
#include "nlv/error.hpp"
#include "nlv/report.hpp"
#include "nlv/simulate.hpp"

namespace nlv {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("pipeline config: bad value for '") + key + "': " + e.what());
    }
}

void require_file(const std::filesystem::path& p, const std::string& role) {
    if (!std::filesystem::is_regular_file(p)) {
        throw ValidationError(role + " file not found: " + p.string());
    }
}

}  // namespace

PipelineConfig read_pipeline_config(const std::filesystem::path& path, const PipelineOverrides& overrides) {
    require_file(path, "pipeline config");
    const json j = read_json_file(path);
    if (!j.is_object()) throw SchemaError(path.string() + ": pipeline config must be a JSON object");
    const auto base = path.parent_path();

    PipelineConfig c;
    c.config_path = path;
    if (j.contains("data")) c.data = resolve(base, get_or<std::string>(j, "data", ""));
    if (j.contains("synthetic")) c.synthetic = resolve(base, get_or<std::string>(j, "synthetic", ""));
    if (c.data.has_value() == c.synthetic.has_value()) {
        throw SchemaError(path.string() + ": exactly one of 'data' and 'synthetic' is required");
    }
    if (j.contains("schema")) {
        if (j.at("schema").is_string()) {
            c.schema_file = resolve(base, j.at("schema").get<std::string>());
        } else {
            c.schema = schema_from_json(j.at("schema"));
        }
    }
    if (j.contains("indicators")) c.indicators = resolve(base, get_or<std::string>(j, "indicators", ""));
    if (!j.contains("spec")) throw SchemaError(path.string() + ": missing key 'spec'");
    c.spec = resolve(base, get_or<std::string>(j, "spec", ""));

    const json cfa = get_or<json>(j, "cfa", json::object());
    c.cfa_indicators = get_or<std::vector<std::string>>(cfa, "indicators", {});
    c.cfa_standardize = get_or<bool>(cfa, "standardize", true);

    const json est = get_or<json>(j, "estimation", json::object());
    c.estimation.starts = get_or<std::size_t>(est, "starts", c.estimation.starts);
    c.estimation.max_iterations = get_or<std::size_t>(est, "max_iterations", c.estimation.max_iterations);
    c.estimation.gradient_tolerance = get_or<double>(est, "gradient_tolerance", c.estimation.gradient_tolerance);
    c.estimation.jitter = get_or<double>(est, "jitter", c.estimation.jitter);
    c.estimation.iv_start = get_or<double>(est, "iv_start", c.estimation.iv_start);

    const json sim = get_or<json>(j, "simulation", json::object());
    c.simulate = get_or<bool>(sim, "enabled", true);
    if (sim.contains("sweep_delta")) c.sweep_delta = get_or<double>(sim, "sweep_delta", 0.0);

    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.threads = get_or<unsigned>(j, "threads", 0);
    c.output = resolve(base, get_or<std::string>(j, "output", "out"));

    if (overrides.seed) c.seed = *overrides.seed;
    if (overrides.output) c.output = *overrides.output;
    if (overrides.max_iterations) c.estimation.max_iterations = *overrides.max_iterations;
    c.threads = resolve_threads(overrides.threads ? overrides.threads : (c.threads ? std::optional(c.threads)
                                                                                  : std::nullopt));
    c.estimation.seed = c.seed;
    c.estimation.threads = c.threads;
    return c;
}

std::vector<double> read_scores_csv(const std::filesystem::path& path, const ChoiceDataset& data) {
    const auto table = csv::Table::read(path);
    const std::size_t c_resp = table.column("resp_id");
    const std::size_t c_score = table.column("score");
    std::unordered_map<std::string, double> by_id;
    for (std::size_t r = 0; r < table.rows(); ++r) {
        by_id[table.row(r)[c_resp]] = csv::parse_double(
            table.row(r)[c_score], table.source() + ":" + std::to_string(table.line_of(r)) + ": score");
    }
    std::vector<double> scores;
    std::vector<std::string> missing;
    for (const auto& id : data.respondents) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) {
            missing.push_back(id);
            continue;
        }
        scores.push_back(it->second);
    }
    if (!missing.empty()) {
        std::string msg = path.string() + ": no score for respondent(s)";
        for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += " '" + missing[i] + "'";
        if (missing.size() > 10) msg += " and " + std::to_string(missing.size() - 10) + " more";
        throw ValidationError(msg);
    }
    return scores;
}

PipelineOutcome run_pipeline(const std::filesystem::path& config_path, const PipelineOverrides& overrides) {
    PipelineOutcome outcome;
    RunManifest& manifest = outcome.manifest;
    manifest.tool_version = kToolVersion;
    manifest.started_at = utc_timestamp();

    std::optional<PipelineConfig> config;
    if (overrides.output) outcome.output = *overrides.output;
    std::string stage = "ingest";
    int stage_code = kExitValidation;

    auto record_output = [&](const std::filesystem::path& rel) { manifest.outputs.push_back(rel.generic_string()); };
    auto finish = [&](int code, const std::string& message) {
        manifest.finished_at = utc_timestamp();
        manifest.exit_code = code;
        manifest.message = message;
        outcome.exit_code = code;
        outcome.message = message;
        if (code == kExitOk) {
            manifest.status = "success";
        } else {
            manifest.status = "failed";
            manifest.failed_stage = stage;
            outcome.failed_stage = stage;
        }
        if (!outcome.output.empty()) {
            try {
                std::filesystem::create_directories(outcome.output);
                manifest.outputs.push_back("manifest.json");
                manifest.write(outcome.output / "manifest.json");
            } catch (const std::exception&) {
                // The outcome still reports the failure.
            }
        }
        return outcome;
    };

    try {
        // --- ingest ---
        config = read_pipeline_config(config_path, overrides);
        outcome.output = config->output;
        manifest.seed = config->seed;
        manifest.threads = config->threads;
        std::filesystem::create_directories(outcome.output);
        const Execution exec{config->threads};

        manifest.add_input("config", config_path);
        require_file(config->spec, "model spec");
        manifest.add_input("spec", config->spec);
        if (config->schema_file) {
            require_file(*config->schema_file, "schema");
            manifest.add_input("schema", *config->schema_file);
            config->schema = schema_from_json(read_json_file(*config->schema_file));
        }

        ChoiceDataset data;
        std::optional<IndicatorPanel> panel;
        if (config->synthetic) {
            require_file(*config->synthetic, "synthetic config");
            manifest.add_input("synthetic", *config->synthetic);
            auto sc = read_synthetic_config(*config->synthetic);
            sc.seed = config->seed;
            const auto generated = generate_synthetic(sc, exec);
            write_synthetic(generated, outcome.output / "data");
            for (const char* f : {"data/choices.csv", "data/indicators.csv", "data/schema.json", "data/truth.json"}) {
                record_output(f);
            }
            data = generated.data;
            if (!generated.panel.indicator_names.empty()) panel = generated.panel;
        } else {
            require_file(*config->data, "choice data");
            manifest.add_input("choices", *config->data);
            data = load_choice_csv(*config->data, config->schema);
        }
        if (config->indicators) {
            require_file(*config->indicators, "indicator");
            manifest.add_input("indicators", *config->indicators);
            panel = align_panel(load_indicator_csv(*config->indicators), data);
        }
        const ModelSpec spec = parse_model_spec(config->spec, data.covariate_names);
        if (spec.binds_latent() && !panel) {
            throw ValidationError("model binds the latent construct but no indicator file is configured");
        }
        manifest.stages_completed.push_back(stage);

        // --- cfa ---
        ResultSections sections;
        std::vector<double> scores;
        if (panel) {
            stage = "cfa";
            stage_code = kExitCfa;
            cfa::CfaSpec cs;
            cs.indicator_names = config->cfa_indicators;
            cs.standardize = config->cfa_standardize;
            const auto fit = cfa::fit_cfa(*panel, cs);
            cfa_scores_table(fit).write(outcome.output / "cfa_scores.csv");
            record_output("cfa_scores.csv");
            sections.cfa = cfa_to_json(fit);
            if (spec.binds_latent()) scores = fit.scores;
            manifest.stages_completed.push_back(stage);
        }

        // --- estimate ---
        stage = "estimate";
        stage_code = kExitEstimation;
        EstimationResult est;
        try {
            est = estimate(data, scores, spec, config->estimation);
        } catch (const EstimationError& e) {
            write_text_file(outcome.output / "estimation_log.txt", e.what());
            record_output("estimation_log.txt");
            throw;
        }
        write_text_file(outcome.output / "estimation_log.txt", format_start_traces(est.starts));
        record_output("estimation_log.txt");
        sections.estimation = estimation_to_json(est, spec);
        manifest.stages_completed.push_back(stage);

        // --- simulate ---
        if (config->simulate) {
            stage = "simulate";
            stage_code = kExitSimulation;
            const Model model = Model::bind(spec, data);
            const auto shares = enumerate_shares(data, scores, est.theta_hat, model, exec);
            share_table(shares).write(outcome.output / "shares.csv");
            record_output("shares.csv");
            sections.shares = shares_to_json(shares);
            if (config->sweep_delta) {
                const auto [before, after] = latent_sweep(data, scores, est.theta_hat, model, *config->sweep_delta, exec);
                csv::Table t({"alternative", "before", "after"});
                for (std::size_t i = 0; i < before.alternatives.size(); ++i) {
                    t.add_row({before.alternatives[i], csv::format_double(before.simulated[i]),
                               csv::format_double(after.simulated[i])});
                }
                t.write(outcome.output / "sweep.csv");
                record_output("sweep.csv");
            }
            manifest.stages_completed.push_back(stage);
        }

        stage = "report";
        const json results = make_results(sections);
        write_json_file(outcome.output / "results.json", results);
        record_output("results.json");
        write_text_file(outcome.output / "report.txt", render_report(results));
        record_output("report.txt");
        return finish(kExitOk, "");
    } catch (const std::exception& e) {
        if (stage == "report") stage_code = kExitSimulation;
        return finish(stage_code, e.what());
    }
}

}  // namespace nlv
