#include "nlv/report.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "nlv/error.hpp"

namespace nlv {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// NaN and infinities are written as null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double num(const json& j, const char* key) {
    if (!j.contains(key)) throw RenderError(std::string("result document lacks '") + key + "'");
    const auto& v = j.at(key);
    if (v.is_null()) return kNaN;
    if (!v.is_number()) throw RenderError(std::string("'") + key + "' is not a number");
    return v.get<double>();
}

std::string str(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string()) throw RenderError(std::string("result document lacks '") + key + "'");
    return j.at(key).get<std::string>();
}

const json& member(const json& j, const char* key) {
    if (!j.contains(key)) throw RenderError(std::string("result document lacks '") + key + "'");
    return j.at(key);
}

std::string fixed3(double v) { return std::isfinite(v) ? fmt::format("{:.3f}", v) : "n/a"; }
std::string fixed2(double v) { return std::isfinite(v) ? fmt::format("{:.2f}", v) : "n/a"; }

const char* kind_name(ParameterKind k) {
    switch (k) {
        case ParameterKind::alpha: return "alpha";
        case ParameterKind::beta: return "beta";
        case ParameterKind::inclusive_value: return "inclusive_value";
    }
    return "";
}

std::string rule(std::size_t n, char c = '-') { return std::string(n, c) + "\n"; }

}  // namespace

// --- schema ------------------------------------------------------------------

json schema_to_json(const ChoiceSchema& s) {
    json cats = json::array();
    for (const auto& c : s.categoricals) cats.push_back({{"column", c.column}, {"levels", c.levels}});
    return {{"respondent_column", s.respondent_column},
            {"observation_column", s.observation_column},
            {"alternative_column", s.alternative_column},
            {"available_column", s.available_column},
            {"chosen_column", s.chosen_column},
            {"covariates", s.covariates},
            {"categoricals", cats},
            {"alternatives", s.alternatives}};
}

ChoiceSchema schema_from_json(const json& j) {
    ChoiceSchema s;
    try {
        s.respondent_column = j.value("respondent_column", s.respondent_column);
        s.observation_column = j.value("observation_column", s.observation_column);
        s.alternative_column = j.value("alternative_column", s.alternative_column);
        s.available_column = j.value("available_column", s.available_column);
        s.chosen_column = j.value("chosen_column", s.chosen_column);
        s.covariates = j.value("covariates", std::vector<std::string>{});
        s.alternatives = j.value("alternatives", std::vector<std::string>{});
        for (const auto& c : j.value("categoricals", json::array())) {
            s.categoricals.push_back({c.at("column").get<std::string>(),
                                      c.value("levels", std::vector<std::string>{})});
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed choice schema: ") + e.what());
    }
    return s;
}

// --- serialization -----------------------------------------------------------

json cfa_to_json(const cfa::CfaResult& r) {
    json indicators = json::array();
    for (std::size_t g = 0; g < r.indicator_names.size(); ++g) {
        indicators.push_back({{"name", r.indicator_names[g]},
                              {"loading", number(r.loadings[g])},
                              {"std_error", number(r.loading_std_errors[g])},
                              {"t_stat", number(r.loading_t_stats[g])},
                              {"error_variance", number(r.error_variances[g])},
                              {"raw_loading", number(r.raw_loadings[g])},
                              {"raw_error_variance", number(r.raw_error_variances[g])},
                              {"mean", number(r.means[g])},
                              {"scale", number(r.scales[g])},
                              {"score_weight", number(r.score_weights[g])}});
    }
    json fit = nullptr;
    if (r.fit) {
        const auto a = cfa::assess_fit(*r.fit);
        fit = {{"chi_square", number(r.fit->chi_square)},
               {"degrees_of_freedom", r.fit->degrees_of_freedom},
               {"p_value", number(r.fit->p_value)},
               {"gfi", number(r.fit->gfi)},
               {"agfi", number(r.fit->agfi)},
               {"srmr", number(r.fit->srmr)},
               {"rmsea", number(r.fit->rmsea)},
               {"passes", {{"gfi", a.gfi}, {"agfi", a.agfi}, {"srmr", a.srmr}, {"rmsea", a.rmsea}}}};
    }
    return {{"sample_size", r.sample_size},
            {"standardized", r.standardized},
            {"indicators", indicators},
            {"degrees_of_freedom", r.degrees_of_freedom},
            {"chi_square", number(r.chi_square)},
            {"srmr", number(r.srmr)},
            {"fit", fit},
            {"std_error_method", "delta method, inverse observed information"},
            {"score_method", "regression"},
            {"iterations", r.iterations},
            {"warnings", r.warnings}};
}

csv::Table cfa_scores_table(const cfa::CfaResult& r) {
    csv::Table t({"resp_id", "score"});
    for (std::size_t n = 0; n < r.respondents.size(); ++n) {
        t.add_row({r.respondents[n], csv::format_double(r.scores[n])});
    }
    return t;
}

json estimation_to_json(const EstimationResult& r, const ModelSpec& spec) {
    json params = json::array();
    for (std::size_t i = 0; i < r.theta_hat.size(); ++i) {
        const auto& p = r.theta_hat[i];
        params.push_back({{"name", p.name},
                          {"kind", kind_name(p.kind)},
                          {"value", number(p.value)},
                          {"fixed", p.fixed},
                          {"std_error", number(r.std_errors[i])},
                          {"t_stat", number(r.t_stats[i])}});
    }
    json fit = nullptr;
    if (r.has_benchmarks) {
        fit = {{"ll_beta", number(r.fit.ll_beta)},
               {"ll_zero", number(r.fit.ll_zero)},
               {"ll_const", number(r.fit.ll_const)},
               {"rho2", number(r.fit.rho2)},
               {"pseudo_rho2", number(r.fit.pseudo_rho2)}};
    }
    json starts = json::array();
    for (const auto& s : r.starts) {
        starts.push_back({{"status", optim::to_string(s.status)},
                          {"iterations", s.iterations},
                          {"log_likelihood", number(s.log_likelihood)},
                          {"gradient_norm", number(s.gradient_norm)}});
    }
    json ivs = json::array();
    for (const auto& c : r.iv_checks) {
        ivs.push_back({{"parameter", c.parameter},
                       {"estimate", number(c.estimate)},
                       {"std_error", number(c.std_error)},
                       {"z_zero", number(c.z_zero)},
                       {"z_one", number(c.z_one)},
                       {"in_unit_interval", c.in_unit_interval},
                       {"consistent", c.consistent}});
    }
    return {{"model", r.model_name},
            {"spec_text", serialize(spec)},
            {"base_alternative", spec.base_alternative},
            {"utility_form", "non-normalized"},
            {"observations", r.observations},
            {"respondents", r.respondents},
            {"log_likelihood", number(r.fit.ll_beta)},
            {"parameters", params},
            {"std_error_method", to_string(r.se_method)},
            {"fit", fit},
            {"convergence",
             {{"status", optim::to_string(r.convergence.status)},
              {"iterations", r.convergence.iterations},
              {"evaluations", r.convergence.evaluations},
              {"gradient_norm", number(r.convergence.gradient_norm)},
              {"best_start", r.convergence.best_start + 1},
              {"starts", starts}}},
            {"iv_checks", ivs},
            {"warnings", r.warnings}};
}

json shares_to_json(const ShareReport& s) {
    json rows = json::array();
    for (std::size_t i = 0; i < s.alternatives.size(); ++i) {
        rows.push_back({{"alternative", s.alternatives[i]},
                        {"observed", number(s.observed[i])},
                        {"simulated", number(s.simulated[i])}});
    }
    return {{"alternatives", rows}, {"max_abs_gap", number(s.max_abs_gap)}};
}

json make_results(const ResultSections& sections) {
    json j = {{"schema_version", kResultSchemaVersion}, {"tool_version", kToolVersion}};
    if (sections.cfa) j["cfa"] = *sections.cfa;
    if (sections.estimation) j["estimation"] = *sections.estimation;
    if (sections.shares) j["simulation"] = *sections.shares;
    return j;
}

// --- rendering ---------------------------------------------------------------

std::string render_fit_block(const FitStatistics& f) {
    std::string out;
    out += fmt::format("{:<46}{:>14}\n", "Log-likelihood at convergence, LL(beta)", fixed3(f.ll_beta));
    out += fmt::format("{:<46}{:>14}\n", "Log-likelihood at zero, LL(0)", fixed3(f.ll_zero));
    out += fmt::format("{:<46}{:>14}\n", "Log-likelihood at constants, LL(c)", fixed3(f.ll_const));
    out += fmt::format("{:<46}{:>14}\n", "rho-squared, 1 - LL(beta)/LL(0)", fixed3(f.rho2));
    out += fmt::format("{:<46}{:>14}\n", "pseudo rho-squared, 1 - LL(beta)/LL(c)", fixed3(f.pseudo_rho2));
    return out;
}

std::string render_cfa_block(const json& c) {
    std::string out;
    out += "Measurement model: single-factor confirmatory factor analysis\n";
    out += rule(72, '=');
    out += fmt::format("{:<32}{:>12}{:>12}{:>16}\n", "Indicator", "Loading", "t-stat", "Error variance");
    out += rule(72);
    for (const auto& ind : member(c, "indicators")) {
        out += fmt::format("{:<32}{:>12}{:>12}{:>16}\n", str(ind, "name"), fixed3(num(ind, "loading")),
                           fixed2(num(ind, "t_stat")), fixed3(num(ind, "error_variance")));
    }
    out += rule(72);
    const auto n = member(c, "sample_size").get<std::size_t>();
    const auto& fit = member(c, "fit");
    if (fit.is_null()) {
        out += fmt::format("Number of observations = {}; fit indices undefined (df = {}).\n", n,
                           member(c, "degrees_of_freedom").get<int>());
    } else {
        out += fmt::format("Number of observations = {}; GFI = {}; AGFI = {}; SRMR = {}; RMSEA = {}\n", n,
                           fixed3(num(fit, "gfi")), fixed3(num(fit, "agfi")), fixed3(num(fit, "srmr")),
                           fixed3(num(fit, "rmsea")));
        out += fmt::format("Chi-square = {} (df = {}, p = {})\n", fixed3(num(fit, "chi_square")),
                           member(fit, "degrees_of_freedom").get<int>(), fixed3(num(fit, "p_value")));
        const auto& pass = member(fit, "passes");
        auto verdict = [&](const char* k) { return member(pass, k).get<bool>() ? "pass" : "fail"; };
        out += fmt::format("Thresholds: GFI > 0.9 {}; AGFI > 0.9 {}; SRMR < 0.05 {}; RMSEA < 0.05 {}\n",
                           verdict("gfi"), verdict("agfi"), verdict("srmr"), verdict("rmsea"));
    }
    out += "Loadings are standardized (factor variance 1); t-statistics use " + str(c, "std_error_method") + ".\n";
    for (const auto& w : member(c, "warnings")) out += "Warning: " + w.get<std::string>() + "\n";
    return out;
}

std::string render_estimation_block(const json& e) {
    ModelSpec spec;
    try {
        spec = parse_model_spec_text(str(e, "spec_text"), "result spec");
    } catch (const SpecError& err) {
        throw RenderError(std::string("embedded model specification is invalid: ") + err.what());
    }
    struct Row {
        double value, t;
        bool fixed;
    };
    std::map<std::string, Row> rows;
    for (const auto& p : member(e, "parameters")) {
        rows[str(p, "name")] = {num(p, "value"), num(p, "t_stat"), member(p, "fixed").get<bool>()};
    }
    auto lookup = [&](const std::string& name) {
        const auto it = rows.find(name);
        if (it == rows.end()) throw RenderError("parameter '" + name + "' missing from the result document");
        return it->second;
    };
    auto line = [](const std::string& label, const std::string& coef, const std::string& t) {
        return fmt::format("  {:<44}{:>12}{:>12}\n", label, coef, t);
    };

    std::string out;
    out += fmt::format("Choice model: {} (two-level nested logit)\n", str(e, "model"));
    out += rule(72, '=');
    out += fmt::format("  {:<44}{:>12}{:>12}\n", "Nest / alternative / variable", "Coef.", "t-stat");
    out += rule(72);
    for (const auto& nest : spec.nests) {
        out += fmt::format("[{}]\n", nest.name);
        for (const auto& alt : nest.members) {
            const auto it = spec.utility.find(alt);
            if (it == spec.utility.end() || it->second.empty()) {
                out += fmt::format(" {}{}\n", alt, alt == spec.base_alternative ? " (base, no terms)" : " (no terms)");
                continue;
            }
            out += fmt::format(" {}\n", alt);
            for (const auto& term : it->second) {
                std::string label = term.kind == TermKind::constant ? "Constant"
                                    : term.kind == TermKind::latent ? "Latent construct"
                                                                    : term.covariate;
                const Row r = lookup(term.parameter);
                out += line("  " + label, fixed3(r.value), r.fixed ? "fixed" : fixed2(r.t));
            }
        }
        const Row iv = lookup(nest.iv_parameter);
        out += line("Inclusive value parameter", fixed3(iv.value), iv.fixed ? "—" : fixed2(iv.t));
    }
    out += rule(72);
    out += fmt::format("Number of observations = {}; respondents = {}; base alternative = {}\n",
                       member(e, "observations").get<std::size_t>(), member(e, "respondents").get<std::size_t>(),
                       str(e, "base_alternative"));
    const auto& fit = member(e, "fit");
    if (!fit.is_null()) {
        FitStatistics f;
        f.ll_beta = num(fit, "ll_beta");
        f.ll_zero = num(fit, "ll_zero");
        f.ll_const = num(fit, "ll_const");
        f.rho2 = num(fit, "rho2");
        f.pseudo_rho2 = num(fit, "pseudo_rho2");
        out += "\n" + render_fit_block(f);
    } else {
        out += fmt::format("\nLog-likelihood at convergence, LL(beta) = {}\n", fixed3(num(e, "log_likelihood")));
    }

    const auto& ivs = member(e, "iv_checks");
    if (!ivs.empty()) {
        out += "\nInclusive value checks (free IV parameters, 95% two-sided):\n";
        for (const auto& c : ivs) {
            out += fmt::format("  {:<20} {:>7}  z(0) = {:>7}  z(1) = {:>7}  in (0,1]: {:<3}  consistent: {}\n",
                               str(c, "parameter"), fixed3(num(c, "estimate")), fixed2(num(c, "z_zero")),
                               fixed2(num(c, "z_one")), member(c, "in_unit_interval").get<bool>() ? "yes" : "no",
                               member(c, "consistent").get<bool>() ? "yes" : "no");
        }
    }
    const auto& conv = member(e, "convergence");
    out += fmt::format("\nConvergence: {} after {} iterations (start {} of {}), final gradient norm {:.3e}\n",
                       str(conv, "status"), member(conv, "iterations").get<std::size_t>(),
                       member(conv, "best_start").get<std::size_t>(), member(conv, "starts").size(),
                       num(conv, "gradient_norm"));
    out += "Standard errors: " + str(e, "std_error_method") + ".\n";
    for (const auto& w : member(e, "warnings")) out += "Warning: " + w.get<std::string>() + "\n";
    return out;
}

std::string render_share_block(const json& s) {
    std::string out;
    out += "Sample enumeration: observed and simulated shares\n";
    out += rule(72, '=');
    out += fmt::format("{:<24}{:>16}{:>16}{:>16}\n", "Alternative", "Observed (%)", "Simulated (%)", "Gap (pp)");
    out += rule(72);
    for (const auto& row : member(s, "alternatives")) {
        const double o = num(row, "observed"), m = num(row, "simulated");
        out += fmt::format("{:<24}{:>16}{:>16}{:>16}\n", str(row, "alternative"), fixed2(100.0 * o),
                           fixed2(100.0 * m), fixed2(100.0 * (m - o)));
    }
    out += rule(72);
    out += fmt::format("Largest absolute gap = {} percentage points\n", fixed2(100.0 * num(s, "max_abs_gap")));
    return out;
}

std::string render_report(const json& results) {
    if (!results.is_object() || !results.contains("schema_version")) {
        throw RenderError("result document has no schema_version");
    }
    const auto& v = results.at("schema_version");
    if (!v.is_number_integer() || v.get<int>() != kResultSchemaVersion) {
        throw RenderError(fmt::format("result schema version {} is not supported (expected {})", v.dump(),
                                      kResultSchemaVersion));
    }
    std::string out = "Nested logit estimation report\n\n";
    try {
        if (results.contains("cfa")) out += render_cfa_block(results.at("cfa")) + "\n";
        if (results.contains("estimation")) out += render_estimation_block(results.at("estimation")) + "\n";
        if (results.contains("simulation")) out += render_share_block(results.at("simulation")) + "\n";
    } catch (const json::exception& e) {
        throw RenderError(std::string("malformed result document: ") + e.what());
    }
    if (results.contains("estimation")) {
        out += "Notes\n";
        out += "- Within-nest utilities are not divided by the nest's inclusive value parameter\n"
               "  (non-normalized nested logit), so coefficients are not on the normalized scale.\n";
        if (results.contains("cfa")) {
            out += "- Factor scores enter the choice model as observed regressors; the reported\n"
                   "  standard errors ignore their estimation error and are understated.\n";
        }
        out += "- Inclusive value parameters of single-alternative nests are fixed at 1.\n";
    }
    return out;
}

// --- files -------------------------------------------------------------------

void write_json_file(const std::filesystem::path& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

}  // namespace nlv
