#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "nlv/cfa.hpp"
#include "nlv/csv.hpp"
#include "nlv/data.hpp"
#include "nlv/estimator.hpp"
#include "nlv/simulate.hpp"

namespace nlv {

/// Version stamped into every machine-readable result file.
inline constexpr int kResultSchemaVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";

nlohmann::json schema_to_json(const ChoiceSchema& schema);
ChoiceSchema schema_from_json(const nlohmann::json& j);

nlohmann::json cfa_to_json(const cfa::CfaResult& result);
/// Respondent id and regression-method score, one row per respondent.
csv::Table cfa_scores_table(const cfa::CfaResult& result);

nlohmann::json estimation_to_json(const EstimationResult& result, const ModelSpec& spec);
nlohmann::json shares_to_json(const ShareReport& report);

/// The combined result document rendered by `render_report`. Sections that
/// were not run are omitted.
struct ResultSections {
    std::optional<nlohmann::json> cfa;
    std::optional<nlohmann::json> estimation;
    std::optional<nlohmann::json> shares;
};
nlohmann::json make_results(const ResultSections& sections);

/// Deterministic text report; throws RenderError on a schema version mismatch
/// or a malformed document.
std::string render_report(const nlohmann::json& results);

std::string render_fit_block(const FitStatistics& fit);
std::string render_cfa_block(const nlohmann::json& cfa);
std::string render_estimation_block(const nlohmann::json& estimation);
std::string render_share_block(const nlohmann::json& shares);

/// Pretty-printed (2-space indent), trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace nlv
