#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlv/data.hpp"
#include "nlv/estimator.hpp"
#include "nlv/manifest.hpp"

namespace nlv {

/// Exit codes of `nlv run` and the stage subcommands.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitValidation = 2,
    kExitCfa = 3,
    kExitEstimation = 4,
    kExitSimulation = 5,
};

/// One JSON file describing a full run. Relative paths resolve against the
/// config file's directory.
///
///     {
///       "data": "choices.csv",          // or "synthetic": "synthetic.json"
///       "schema": "schema.json",        // file or inline object; optional
///       "indicators": "indicators.csv", // required when the spec binds the latent term
///       "spec": "california.spec",
///       "cfa": {"indicators": [...], "standardize": true},
///       "estimation": {"starts": 5, "max_iterations": 500, "gradient_tolerance": 1e-6},
///       "simulation": {"enabled": true, "sweep_delta": 1.0},
///       "seed": 20190101, "threads": 1, "output": "out"
///     }
struct PipelineConfig {
    std::filesystem::path config_path;
    std::optional<std::filesystem::path> data;
    std::optional<std::filesystem::path> synthetic;
    std::optional<std::filesystem::path> schema_file;
    ChoiceSchema schema;
    std::optional<std::filesystem::path> indicators;
    std::filesystem::path spec;
    std::vector<std::string> cfa_indicators;
    bool cfa_standardize = true;
    EstimationOptions estimation;
    bool simulate = true;
    std::optional<double> sweep_delta;
    std::uint64_t seed = 20190101;
    unsigned threads = 1;
    std::filesystem::path output = "out";
};

struct PipelineOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::filesystem::path> output;
    std::optional<std::size_t> max_iterations;
};

/// Throws ValidationError/SchemaError for unreadable or malformed configs.
PipelineConfig read_pipeline_config(const std::filesystem::path& path, const PipelineOverrides& overrides = {});

struct PipelineOutcome {
    int exit_code = kExitOk;
    std::optional<std::string> failed_stage;
    std::string message;
    std::filesystem::path output;
    RunManifest manifest;
};

/// ingest -> cfa -> estimate -> simulate. Never throws for stage failures:
/// the outcome carries the exit code and a partial manifest is written.
PipelineOutcome run_pipeline(const std::filesystem::path& config_path, const PipelineOverrides& overrides = {});

/// Scores aligned to the dataset's respondents from a `resp_id,score` CSV.
std::vector<double> read_scores_csv(const std::filesystem::path& path, const ChoiceDataset& data);

}  // namespace nlv
