#include "nlv/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include "nlv/error.hpp"
#include "nlv/report.hpp"
#include "parallel.hpp"

namespace nlv {

using nlohmann::json;

// --- enumeration -------------------------------------------------------------

ShareReport enumerate_shares(const ChoiceDataset& data, std::span<const double> scores, const ParameterVector& theta,
                             const Model& model, const Execution& exec) {
    ShareReport r;
    r.alternatives = data.alternative_labels;
    r.simulated = mean_probabilities(data, scores, theta, model, exec);
    const auto counts = data.chosen_counts();
    const double q = static_cast<double>(data.observations.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        r.observed.push_back(static_cast<double>(counts[i]) / q);
        r.max_abs_gap = std::max(r.max_abs_gap, std::abs(r.observed[i] - r.simulated[i]));
    }
    return r;
}

std::pair<ShareReport, ShareReport> latent_sweep(const ChoiceDataset& data, std::span<const double> scores,
                                                 const ParameterVector& theta, const Model& model, double delta,
                                                 const Execution& exec) {
    if (!model.binds_latent()) throw ValidationError("latent sweep needs a model that binds the latent construct");
    if (!std::isfinite(delta)) throw ValidationError("latent sweep: shift must be finite");
    std::vector<double> shifted(scores.begin(), scores.end());
    for (auto& s : shifted) s += delta;
    return {enumerate_shares(data, scores, theta, model, exec), enumerate_shares(data, shifted, theta, model, exec)};
}

csv::Table share_table(const ShareReport& report) {
    csv::Table t({"alternative", "observed", "simulated"});
    for (std::size_t i = 0; i < report.alternatives.size(); ++i) {
        t.add_row({report.alternatives[i], csv::format_double(report.observed[i]),
                   csv::format_double(report.simulated[i])});
    }
    return t;
}

// --- seeding -----------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

enum Stream : std::uint64_t { kCovariates = 1, kLatent = 2, kChoices = 3, kLayout = 4 };

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    return splitmix64(splitmix64(splitmix64(seed) ^ stream) + index);
}

std::size_t draw_choice(std::span<const double> probabilities, std::uint64_t seed, std::uint64_t index) {
    if (probabilities.empty()) throw ValidationError("draw_choice: no alternatives");
    std::mt19937_64 rng(stream_seed(seed, kChoices, index));
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double cum = 0.0;
    std::size_t chosen = probabilities.size() - 1;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        cum += probabilities[i];
        if (u < cum) {
            chosen = i;
            break;
        }
    }
    // Guard the top of the cumulative sum against rounding.
    while (probabilities[chosen] == 0.0 && chosen > 0) --chosen;
    return chosen;
}

// --- generator ---------------------------------------------------------------

namespace {

using Kind = CovariateGenerator::Kind;

void check_finite(double v, const std::string& what) {
    if (!std::isfinite(v)) throw ValidationError("synthetic config: " + what + " is not finite");
}

void check_weights(const std::vector<double>& w, std::size_t n, const std::string& what) {
    if (w.size() != n || n == 0) throw ValidationError("synthetic config: " + what + " has mismatched weights");
    for (double p : w) {
        check_finite(p, what);
        if (p < 0.0) throw ValidationError("synthetic config: " + what + " has a negative weight");
    }
    if (!(std::accumulate(w.begin(), w.end(), 0.0) > 0.0)) {
        throw ValidationError("synthetic config: " + what + " weights sum to zero");
    }
}

void validate_config(const SyntheticConfig& c) {
    if (c.observations == 0 || c.respondents == 0) throw ValidationError("synthetic config: Q and N must be positive");
    if (c.observations < c.respondents) {
        throw ValidationError("synthetic config: fewer observations than respondents");
    }
    for (const auto& [name, v] : c.theta) check_finite(v, "theta '" + name + "'");
    for (const auto& g : c.covariates) {
        switch (g.kind) {
            case Kind::discrete: check_weights(g.probabilities, g.values.size(), g.name); break;
            case Kind::categorical:
                check_weights(g.probabilities, g.levels.size(), g.name);
                if (g.levels.size() < 2) throw ValidationError("synthetic config: '" + g.name + "' needs 2 levels");
                break;
            case Kind::bernoulli:
                check_finite(g.p, g.name);
                if (g.p < 0.0 || g.p > 1.0) throw ValidationError("synthetic config: '" + g.name + "' p outside [0,1]");
                break;
            case Kind::normal:
                check_finite(g.mean, g.name);
                check_finite(g.sd, g.name);
                break;
            case Kind::log1p_gamma:
                check_finite(g.shape, g.name);
                check_finite(g.scale, g.name);
                if (!(g.shape > 0.0 && g.scale > 0.0)) {
                    throw ValidationError("synthetic config: '" + g.name + "' gamma parameters must be positive");
                }
                break;
        }
    }
    for (const auto& ind : c.indicators) {
        check_finite(ind.loading, ind.name);
        check_finite(ind.mean, ind.name);
        if (std::abs(ind.loading) > 1.0) throw ValidationError("synthetic config: loading of '" + ind.name + "' exceeds 1");
        if (c.indicator_mode == IndicatorMode::binary && !(ind.mean > 0.0 && ind.mean < 1.0)) {
            throw ValidationError("synthetic config: mean of '" + ind.name + "' must lie in (0,1)");
        }
    }
}

struct Draw {
    double value = 0.0;
    std::size_t level = 0;  // categorical
};

Draw draw_covariate(const CovariateGenerator& g, std::mt19937_64& rng) {
    Draw d;
    switch (g.kind) {
        case Kind::discrete: {
            std::discrete_distribution<std::size_t> dist(g.probabilities.begin(), g.probabilities.end());
            d.value = g.values[dist(rng)];
            break;
        }
        case Kind::categorical: {
            std::discrete_distribution<std::size_t> dist(g.probabilities.begin(), g.probabilities.end());
            d.level = dist(rng);
            break;
        }
        case Kind::bernoulli: d.value = std::bernoulli_distribution(g.p)(rng) ? 1.0 : 0.0; break;
        case Kind::normal: d.value = std::normal_distribution<double>(g.mean, g.sd)(rng); break;
        case Kind::log1p_gamma: d.value = std::log1p(std::gamma_distribution<double>(g.shape, g.scale)(rng)); break;
    }
    return d;
}

bool applies(const CovariateGenerator& g, const std::string& alternative) {
    return g.alternatives.empty() ||
           std::find(g.alternatives.begin(), g.alternatives.end(), alternative) != g.alternatives.end();
}

std::string padded(const std::string& prefix, std::size_t i, std::size_t n) {
    std::string digits = std::to_string(i);
    const std::size_t width = std::to_string(n).size();
    return prefix + std::string(width - std::min(width, digits.size()), '0') + digits;
}

}  // namespace

ChoiceSchema synthetic_schema(const SyntheticConfig& config) {
    ChoiceSchema schema;
    schema.alternatives = config.spec.alternatives();
    for (const auto& g : config.covariates) {
        if (g.kind == Kind::categorical) schema.categoricals.push_back({g.name, g.levels});
    }
    return schema;
}

SyntheticData generate_synthetic(const SyntheticConfig& config, const Execution& exec) {
    validate_config(config);
    validate_model_spec(config.spec);
    const auto alternatives = config.spec.alternatives();
    const std::size_t n_alt = alternatives.size();

    // Covariate layout as the loader will produce it: numeric columns first, then dummies.
    std::vector<std::string> numeric_names, covariate_names;
    for (const auto& g : config.covariates) {
        if (g.kind != Kind::categorical) numeric_names.push_back(g.name);
    }
    covariate_names = numeric_names;
    for (const auto& g : config.covariates) {
        if (g.kind != Kind::categorical) continue;
        for (std::size_t l = 1; l < g.levels.size(); ++l) covariate_names.push_back(g.name + "_" + g.levels[l]);
    }
    check_covariates(config.spec, covariate_names);
    const Model model = Model::bind(config.spec, alternatives, covariate_names);
    const std::size_t n_cov = covariate_names.size();

    ParameterVector theta = model.start_parameters();
    for (const auto& [name, value] : config.theta) {
        if (!theta.find(name)) throw ValidationError("synthetic config: unknown parameter '" + name + "'");
        if (!theta[theta.index_of(name)].fixed) theta.set(name, value);
    }
    for (const std::size_t i : theta.free_indices()) {
        if (!config.theta.count(theta[i].name)) {
            throw ValidationError("synthetic config: no value for parameter '" + theta[i].name + "'");
        }
    }

    const std::size_t n_resp = config.respondents;
    const std::size_t n_obs = config.observations;
    const std::size_t n_ind = config.indicators.size();

    // Observations per respondent: floor(Q/N), with a seeded subset getting one more.
    std::vector<std::size_t> per_resp(n_resp, n_obs / n_resp);
    {
        std::vector<std::size_t> order(n_resp);
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(stream_seed(config.seed, kLayout, 0));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t k = 0; k < n_obs % n_resp; ++k) ++per_resp[order[k]];
    }

    // Respondent-level draws.
    std::vector<std::vector<Draw>> draws(n_resp);
    std::vector<double> latent(n_resp);
    Eigen::MatrixXd indicators(static_cast<Eigen::Index>(n_resp), static_cast<Eigen::Index>(n_ind));
    std::vector<double> thresholds(n_ind);
    for (std::size_t g = 0; g < n_ind; ++g) {
        thresholds[g] = boost::math::quantile(boost::math::normal(), 1.0 - config.indicators[g].mean);
    }
    for (std::size_t n = 0; n < n_resp; ++n) {
        std::mt19937_64 rng(stream_seed(config.seed, kCovariates, n));
        for (const auto& g : config.covariates) draws[n].push_back(draw_covariate(g, rng));
        std::mt19937_64 lrng(stream_seed(config.seed, kLatent, n));
        std::normal_distribution<double> z(0.0, 1.0);
        latent[n] = z(lrng);
        for (std::size_t g = 0; g < n_ind; ++g) {
            const double lambda = config.indicators[g].loading;
            const double index = lambda * latent[n] + std::sqrt(1.0 - lambda * lambda) * z(lrng);
            indicators(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(g)) =
                config.indicator_mode == IndicatorMode::binary ? (index > thresholds[g] ? 1.0 : 0.0) : index;
        }
    }

    // Observations.
    std::vector<ChoiceObservation> observations;
    observations.reserve(n_obs);
    for (std::size_t n = 0; n < n_resp; ++n) {
        for (std::size_t k = 0; k < per_resp[n]; ++k) {
            ChoiceObservation obs;
            obs.respondent = n;
            obs.observation_id = std::to_string(k + 1);
            obs.available.assign(n_alt, 1);
            obs.covariates.assign(n_alt * n_cov, 0.0);
            for (std::size_t i = 0; i < n_alt; ++i) {
                std::size_t numeric = 0, dummy = numeric_names.size();
                for (std::size_t c = 0; c < config.covariates.size(); ++c) {
                    const auto& g = config.covariates[c];
                    const bool on = applies(g, alternatives[i]);
                    if (g.kind == Kind::categorical) {
                        for (std::size_t l = 1; l < g.levels.size(); ++l, ++dummy) {
                            obs.covariates[i * n_cov + dummy] = (on && draws[n][c].level == l) ? 1.0 : 0.0;
                        }
                    } else {
                        obs.covariates[i * n_cov + numeric++] = on ? draws[n][c].value : 0.0;
                    }
                }
            }
            observations.push_back(std::move(obs));
        }
    }
    detail::for_each_block(detail::block_count(n_obs), exec.threads, [&](std::size_t b) {
        const std::size_t end = std::min(n_obs, (b + 1) * detail::kBlockSize);
        for (std::size_t q = b * detail::kBlockSize; q < end; ++q) {
            auto& obs = observations[q];
            const auto v = systematic_utility(obs, latent[obs.respondent], theta, model);
            const auto p = choice_probabilities(v, theta, model);
            obs.chosen = draw_choice(p, config.seed, q);
        }
    });

    SyntheticData out;
    std::vector<std::string> respondents(n_resp);
    for (std::size_t n = 0; n < n_resp; ++n) respondents[n] = padded("R", n + 1, n_resp);

    std::vector<std::string> header{"resp_id", "obs_id", "alt", "avail", "chosen"};
    for (const auto& g : config.covariates) header.push_back(g.name);
    out.choices = csv::Table(header);
    for (const auto& obs : observations) {
        for (std::size_t i = 0; i < n_alt; ++i) {
            std::vector<std::string> row{respondents[obs.respondent], obs.observation_id, alternatives[i],
                                         obs.available[i] ? "1" : "0", obs.chosen == i ? "1" : "0"};
            for (std::size_t c = 0; c < config.covariates.size(); ++c) {
                const auto& g = config.covariates[c];
                const bool on = applies(g, alternatives[i]);
                if (g.kind == Kind::categorical) {
                    row.push_back(g.levels[on ? draws[obs.respondent][c].level : 0]);
                } else {
                    row.push_back(csv::format_double(on ? draws[obs.respondent][c].value : 0.0));
                }
            }
            out.choices.add_row(std::move(row));
        }
    }

    std::vector<std::string> ind_header{"resp_id"};
    for (const auto& ind : config.indicators) ind_header.push_back(ind.name);
    out.indicators = csv::Table(ind_header);
    for (std::size_t n = 0; n < n_resp; ++n) {
        std::vector<std::string> row{respondents[n]};
        for (std::size_t g = 0; g < n_ind; ++g) {
            row.push_back(csv::format_double(indicators(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(g))));
        }
        out.indicators.add_row(std::move(row));
    }

    out.schema = synthetic_schema(config);
    out.data = load_choice_table(out.choices, out.schema);
    if (n_ind > 0) out.panel = align_panel(load_indicator_table(out.indicators), out.data);

    const Model bound = Model::bind(config.spec, out.data);
    auto& truth = out.truth;
    truth.theta = theta;
    for (const auto& ind : config.indicators) {
        truth.indicator_names.push_back(ind.name);
        truth.loadings.push_back(ind.loading);
    }
    truth.respondents = out.data.respondents;
    truth.latent.resize(out.data.respondents.size());
    for (std::size_t n = 0; n < out.data.respondents.size(); ++n) {
        // Respondent ids are written in generation order, so positions coincide.
        truth.latent[n] = latent[n];
    }
    const std::span<const double> scores =
        bound.binds_latent() ? std::span<const double>(truth.latent) : std::span<const double>();
    truth.log_likelihood = log_likelihood(out.data, scores, theta, bound, exec);
    truth.expected_shares = mean_probabilities(out.data, scores, theta, bound, exec);
    return out;
}

// --- bundled configuration ---------------------------------------------------

std::string_view california_spec_text() {
    return R"(# Vehicle transaction and fuel type choice: two-level nested logit.
name = california
base = no_transaction

[nests]
transaction_none = no_transaction
transaction_sell = sell
trade = trade_cv, trade_hev, trade_phev, trade_bev
add = add_cv, add_hev, add_phev, add_bev

[utility.sell]
constant = asc_sell
log_vehicle_age = b_lage_sell

[utility.trade_cv]
constant = asc_trade_cv
hispanic = b_hispanic_trade_cv
log_vehicle_age = b_lage_trade_cv
leased = b_leased_trade_cv

[utility.trade_hev]
constant = asc_trade_hev
income_high = b_high_trade_hev
hispanic = b_hispanic_trade_hev
residence_apartment = b_apartment_trade_hev
rideshare = b_rideshare_trade_hev
log_vehicle_age = b_lage_trade_hev
leased = b_leased_trade_hev

[utility.trade_phev]
constant = asc_trade_phev
adults = b_adults_trade_phev
income_high = b_high_trade_phev
hispanic = b_hispanic_trade_phev
log_vehicle_age = b_lage_trade_phev
leased = b_leased_trade_phev

[utility.trade_bev]
constant = asc_trade_bev
adults = b_adults_trade_bev
child = b_child_trade_bev
income_high = b_high_trade_bev
log_vehicle_age = b_lage_trade_bev
leased = b_leased_trade_bev

[utility.add_cv]
constant = asc_add_cv

[utility.add_hev]
constant = asc_add_hev
residence_apartment = b_apartment_add_hev
rideshare = b_rideshare_add_hev

[utility.add_phev]
constant = asc_add_phev
adults = b_adults_add_phev
income_high = b_high_add_phev

[utility.add_bev]
constant = asc_add_bev
adults = b_adults_add_bev
child = b_child_add_bev
income_high = b_high_add_bev

[latent]
trade_bev = b_latent_trade_bev
add_bev = b_latent_add_bev
)";
}

namespace {

std::map<std::string, double> california_theta() {
    return {
        {"asc_sell", -2.119},          {"b_lage_sell", 0.888},
        {"asc_trade_cv", 0.875},       {"b_hispanic_trade_cv", 1.473},
        {"b_lage_trade_cv", 0.717},    {"b_leased_trade_cv", 2.749},
        {"asc_trade_hev", -0.370},     {"b_high_trade_hev", 0.480},
        {"b_hispanic_trade_hev", 1.495}, {"b_apartment_trade_hev", 0.457},
        {"b_rideshare_trade_hev", 0.521}, {"b_lage_trade_hev", 0.648},
        {"b_leased_trade_hev", 3.185}, {"asc_trade_phev", 0.780},
        {"b_adults_trade_phev", -1.010}, {"b_high_trade_phev", 0.451},
        {"b_hispanic_trade_phev", 1.093}, {"b_lage_trade_phev", 0.412},
        {"b_leased_trade_phev", 3.698}, {"asc_trade_bev", 0.882},
        {"b_adults_trade_bev", -1.473}, {"b_child_trade_bev", -0.283},
        {"b_high_trade_bev", 1.151},   {"b_lage_trade_bev", 0.299},
        {"b_leased_trade_bev", 3.454}, {"b_latent_trade_bev", -1.054},
        {"asc_add_cv", 1.291},         {"asc_add_hev", 0.025},
        {"b_apartment_add_hev", 0.621}, {"b_rideshare_add_hev", 0.548},
        {"asc_add_phev", 1.549},       {"b_adults_add_phev", -1.461},
        {"b_high_add_phev", 0.612},    {"asc_add_bev", 0.823},
        {"b_adults_add_bev", -1.436},  {"b_child_add_bev", -0.457},
        {"b_high_add_bev", 0.815},     {"b_latent_add_bev", -1.302},
        {"iv_trade", 0.943},           {"iv_add", 0.926},
    };
}

std::vector<CovariateGenerator> california_covariates() {
    const std::vector<std::string> owned{"sell", "trade_cv", "trade_hev", "trade_phev", "trade_bev"};
    std::vector<CovariateGenerator> g;
    CovariateGenerator c;
    c.name = "adults";
    c.kind = Kind::discrete;
    c.values = {1, 2, 3, 4, 5};
    c.probabilities = {0.227, 0.438, 0.275, 0.056, 0.004};
    g.push_back(c);

    auto bern = [](std::string name, double p, std::vector<std::string> alts = {}) {
        CovariateGenerator b;
        b.name = std::move(name);
        b.kind = Kind::bernoulli;
        b.p = p;
        b.alternatives = std::move(alts);
        return b;
    };
    g.push_back(bern("child", 0.4057));
    g.push_back(bern("hispanic", 0.1358));
    g.push_back(bern("rideshare", 0.2431));

    c = {};
    c.name = "log_vehicle_age";
    c.kind = Kind::log1p_gamma;
    c.shape = 0.3217;
    c.scale = 8.396;
    c.alternatives = owned;
    g.push_back(c);
    g.push_back(bern("leased", 0.0755, owned));

    c = {};
    c.name = "income";
    c.kind = Kind::categorical;
    c.levels = {"low", "medium", "high"};
    c.probabilities = {0.3943, 0.3902, 0.2155};
    g.push_back(c);

    c = {};
    c.name = "residence";
    c.kind = Kind::categorical;
    c.levels = {"detached", "attached", "apartment", "other"};
    c.probabilities = {0.7016, 0.1008, 0.1805, 0.0171};
    g.push_back(c);
    return g;
}

}  // namespace

SyntheticConfig california_analog() {
    SyntheticConfig c;
    c.observations = 3536;
    c.respondents = 1230;
    c.seed = 20190101;
    c.spec = parse_model_spec_text(california_spec_text(), "california.spec");
    c.theta = california_theta();
    c.covariates = california_covariates();
    c.indicators = {
        {"range_phev", 0.64, 0.45},    {"range_bev", 0.60, 0.50},  {"charging_phev", 0.54, 0.47},
        {"charging_bev", 0.53, 0.52}, {"stranded_bev", 0.30, 0.382},
    };
    return c;
}

SyntheticConfig california_recovery(std::size_t observations, std::size_t respondents, double iv_trade,
                                    double iv_add) {
    SyntheticConfig c = california_analog();
    c.observations = observations;
    c.respondents = respondents;
    c.theta["iv_trade"] = iv_trade;
    c.theta["iv_add"] = iv_add;
    c.indicator_mode = IndicatorMode::continuous;
    return c;
}

// --- JSON --------------------------------------------------------------------

namespace {

const char* kind_name(Kind k) {
    switch (k) {
        case Kind::discrete: return "discrete";
        case Kind::bernoulli: return "bernoulli";
        case Kind::categorical: return "categorical";
        case Kind::normal: return "normal";
        case Kind::log1p_gamma: return "log1p_gamma";
    }
    return "";
}

Kind kind_from(const std::string& s) {
    for (const Kind k : {Kind::discrete, Kind::bernoulli, Kind::categorical, Kind::normal, Kind::log1p_gamma}) {
        if (s == kind_name(k)) return k;
    }
    throw SchemaError("synthetic config: unknown covariate type '" + s + "'");
}

template <class T>
T required(const json& j, const char* key) {
    if (!j.contains(key)) throw SchemaError(std::string("synthetic config: missing key '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("synthetic config: bad value for '") + key + "': " + e.what());
    }
}

}  // namespace

void to_json(json& j, const SyntheticConfig& c) {
    j = json::object();
    j["observations"] = c.observations;
    j["respondents"] = c.respondents;
    j["seed"] = c.seed;
    j["spec_text"] = serialize(c.spec);
    j["theta"] = c.theta;
    j["indicator_mode"] = c.indicator_mode == IndicatorMode::binary ? "binary" : "continuous";
    json covs = json::array();
    for (const auto& g : c.covariates) {
        json e{{"name", g.name}, {"type", kind_name(g.kind)}};
        switch (g.kind) {
            case Kind::discrete: e["values"] = g.values; e["probabilities"] = g.probabilities; break;
            case Kind::categorical: e["levels"] = g.levels; e["probabilities"] = g.probabilities; break;
            case Kind::bernoulli: e["p"] = g.p; break;
            case Kind::normal: e["mean"] = g.mean; e["sd"] = g.sd; break;
            case Kind::log1p_gamma: e["shape"] = g.shape; e["scale"] = g.scale; break;
        }
        if (!g.alternatives.empty()) e["alternatives"] = g.alternatives;
        covs.push_back(e);
    }
    j["covariates"] = covs;
    json inds = json::array();
    for (const auto& ind : c.indicators) inds.push_back({{"name", ind.name}, {"loading", ind.loading}, {"mean", ind.mean}});
    j["indicators"] = inds;
}

SyntheticConfig synthetic_config_from_json(const json& j, const std::filesystem::path& base) {
    SyntheticConfig c;
    c.observations = required<std::size_t>(j, "observations");
    c.respondents = required<std::size_t>(j, "respondents");
    c.seed = j.value("seed", std::uint64_t{1});
    if (j.contains("spec_text")) {
        c.spec = parse_model_spec_text(required<std::string>(j, "spec_text"), "spec_text");
    } else {
        const std::filesystem::path p = required<std::string>(j, "spec");
        c.spec = parse_model_spec(p.is_absolute() ? p : base / p);
    }
    c.theta = required<std::map<std::string, double>>(j, "theta");
    const auto mode = j.value("indicator_mode", std::string("binary"));
    if (mode != "binary" && mode != "continuous") throw SchemaError("synthetic config: bad indicator_mode '" + mode + "'");
    c.indicator_mode = mode == "binary" ? IndicatorMode::binary : IndicatorMode::continuous;
    for (const auto& e : j.value("covariates", json::array())) {
        CovariateGenerator g;
        g.name = required<std::string>(e, "name");
        g.kind = kind_from(required<std::string>(e, "type"));
        switch (g.kind) {
            case Kind::discrete:
                g.values = required<std::vector<double>>(e, "values");
                g.probabilities = required<std::vector<double>>(e, "probabilities");
                break;
            case Kind::categorical:
                g.levels = required<std::vector<std::string>>(e, "levels");
                g.probabilities = required<std::vector<double>>(e, "probabilities");
                break;
            case Kind::bernoulli: g.p = required<double>(e, "p"); break;
            case Kind::normal:
                g.mean = required<double>(e, "mean");
                g.sd = required<double>(e, "sd");
                break;
            case Kind::log1p_gamma:
                g.shape = required<double>(e, "shape");
                g.scale = required<double>(e, "scale");
                break;
        }
        g.alternatives = e.value("alternatives", std::vector<std::string>{});
        c.covariates.push_back(std::move(g));
    }
    for (const auto& e : j.value("indicators", json::array())) {
        c.indicators.push_back(
            {required<std::string>(e, "name"), required<double>(e, "loading"), required<double>(e, "mean")});
    }
    return c;
}

SyntheticConfig read_synthetic_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open synthetic config '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
    return synthetic_config_from_json(j, path.parent_path());
}

json truth_to_json(const SyntheticTruth& t) {
    json theta = json::object();
    for (const auto& p : t.theta.entries()) theta[p.name] = {{"value", p.value}, {"fixed", p.fixed}};
    json latent = json::object();
    for (std::size_t n = 0; n < t.respondents.size(); ++n) latent[t.respondents[n]] = t.latent[n];
    return {{"theta", theta},
            {"indicator_names", t.indicator_names},
            {"loadings", t.loadings},
            {"log_likelihood", t.log_likelihood},
            {"expected_shares", t.expected_shares},
            {"latent", latent}};
}

void write_synthetic(const SyntheticData& d, const std::filesystem::path& directory) {
    std::filesystem::create_directories(directory);
    d.choices.write(directory / "choices.csv");
    d.indicators.write(directory / "indicators.csv");
    write_json_file(directory / "schema.json", schema_to_json(d.schema));
    write_json_file(directory / "truth.json", truth_to_json(d.truth));
}

}  // namespace nlv
