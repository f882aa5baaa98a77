#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nlv/csv.hpp"
#include "nlv/data.hpp"
#include "nlv/model_spec.hpp"
#include "nlv/nl_engine.hpp"

namespace nlv {

struct ShareReport {
    std::vector<std::string> alternatives;
    std::vector<double> observed;   ///< chosen count / Q
    std::vector<double> simulated;  ///< mean P_iq over the sample
    double max_abs_gap = 0.0;
};

/// Sample enumeration: simulated share of i = (1/Q) sum_q P_iq.
ShareReport enumerate_shares(const ChoiceDataset& data, std::span<const double> scores, const ParameterVector& theta,
                             const Model& model, const Execution& exec = {});

/// Shares before and after shifting every respondent's score by `delta`.
/// Throws ValidationError when the model binds no latent term.
std::pair<ShareReport, ShareReport> latent_sweep(const ChoiceDataset& data, std::span<const double> scores,
                                                 const ParameterVector& theta, const Model& model, double delta,
                                                 const Execution& exec = {});

/// Two-column (observed, simulated) CSV, one row per alternative.
csv::Table share_table(const ShareReport& report);

// --- synthetic data ---------------------------------------------------------

/// Marginal distribution of one respondent-level covariate.
struct CovariateGenerator {
    enum class Kind { discrete, bernoulli, categorical, normal, log1p_gamma };
    std::string name;
    Kind kind = Kind::bernoulli;
    std::vector<double> values;              ///< discrete support
    std::vector<double> probabilities;       ///< discrete / categorical weights
    std::vector<std::string> levels;         ///< categorical; first is the reference
    double p = 0.5;                          ///< bernoulli
    double mean = 0.0, sd = 1.0;             ///< normal
    double shape = 1.0, scale = 1.0;         ///< log1p_gamma: ln(1 + Gamma(shape, scale))
    std::vector<std::string> alternatives;   ///< rows that carry the value; empty: all (others hold 0)
};

struct IndicatorGenerator {
    std::string name;
    double loading = 0.5;  ///< on the standardized latent index
    double mean = 0.5;     ///< target share of ones in binary mode
};

enum class IndicatorMode { binary, continuous };

struct SyntheticConfig {
    std::size_t observations = 0;  ///< Q
    std::size_t respondents = 0;   ///< N; each respondent gets floor(Q/N) or one more
    std::uint64_t seed = 1;
    ModelSpec spec;
    std::map<std::string, double> theta;  ///< free parameter values; fixed come from the spec
    std::vector<CovariateGenerator> covariates;
    std::vector<IndicatorGenerator> indicators;
    IndicatorMode indicator_mode = IndicatorMode::binary;
};

/// Everything known about the generating process.
struct SyntheticTruth {
    ParameterVector theta;
    std::vector<std::string> indicator_names;
    std::vector<double> loadings;
    std::vector<std::string> respondents;
    std::vector<double> latent;           ///< true x* per respondent
    double log_likelihood = 0.0;          ///< at theta with the true x*
    std::vector<double> expected_shares;  ///< mean P at theta
};

struct SyntheticData {
    csv::Table choices;
    csv::Table indicators;
    ChoiceSchema schema;
    ChoiceDataset data;  ///< parsed back from `choices` with `schema`
    IndicatorPanel panel;
    SyntheticTruth truth;
};

/// Deterministic given the config: covariates, x* and indicators use one
/// counter-seeded stream per respondent, choices one per observation.
/// Throws ValidationError for non-finite or inconsistent configuration.
SyntheticData generate_synthetic(const SyntheticConfig& config, const Execution& exec = {});

/// Choice schema matching the generator's CSV (categoricals expanded).
ChoiceSchema synthetic_schema(const SyntheticConfig& config);

/// Text of the bundled ten-alternative transaction/fuel-type model.
std::string_view california_spec_text();

/// Q = 3,536 / N = 1,230 analog of the California survey sample.
SyntheticConfig california_analog();

/// Same structure with Q observations and latent/IV values overridable, for recovery runs.
SyntheticConfig california_recovery(std::size_t observations, std::size_t respondents, double iv_trade,
                                    double iv_add);

void to_json(nlohmann::json& j, const SyntheticConfig& config);
/// `base` resolves a relative "spec" path.
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
SyntheticConfig read_synthetic_config(const std::filesystem::path& path);

nlohmann::json truth_to_json(const SyntheticTruth& truth);
void write_synthetic(const SyntheticData& data, const std::filesystem::path& directory);

/// Counter-based seeding: an independent stream per (seed, stream, index).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// Inverse-CDF draw of one alternative from `probabilities` using the
/// generator's choice stream for observation `index`.
std::size_t draw_choice(std::span<const double> probabilities, std::uint64_t seed, std::uint64_t index);

}  // namespace nlv
