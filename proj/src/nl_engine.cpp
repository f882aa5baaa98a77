#include "nlv/nl_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>

#include "nlv/error.hpp"
#include "parallel.hpp"

namespace nlv {

// --- ParameterVector -------------------------------------------------------

std::optional<std::size_t> ParameterVector::find(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name == name) return i;
    }
    return std::nullopt;
}

std::size_t ParameterVector::index_of(const std::string& name) const {
    if (auto i = find(name)) return *i;
    throw SpecError("unknown parameter '" + name + "'");
}

void ParameterVector::set(const std::string& name, double value) {
    auto& p = entries_[index_of(name)];
    if (p.fixed && p.value != value) throw SpecError("parameter '" + name + "' is fixed");
    p.value = value;
}

std::vector<double> ParameterVector::values() const {
    std::vector<double> out;
    out.reserve(entries_.size());
    for (const auto& p : entries_) out.push_back(p.value);
    return out;
}

std::vector<std::size_t> ParameterVector::free_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (!entries_[i].fixed) out.push_back(i);
    }
    return out;
}

std::size_t ParameterVector::free_count() const {
    return static_cast<std::size_t>(
        std::count_if(entries_.begin(), entries_.end(), [](const Parameter& p) { return !p.fixed; }));
}

std::vector<double> ParameterVector::free_values() const {
    std::vector<double> out;
    for (const auto& p : entries_) {
        if (!p.fixed) out.push_back(p.value);
    }
    return out;
}

void ParameterVector::set_free_values(std::span<const double> values) {
    std::size_t k = 0;
    for (auto& p : entries_) {
        if (p.fixed) continue;
        if (k >= values.size()) throw SpecError("too few free parameter values");
        p.value = values[k++];
    }
    if (k != values.size()) throw SpecError("too many free parameter values");
}

// --- Model -----------------------------------------------------------------

Model Model::bind(const ModelSpec& spec, const ChoiceDataset& data) {
    return bind(spec, data.alternative_labels, data.covariate_names);
}

Model Model::bind(const ModelSpec& spec, const std::vector<std::string>& alternatives,
                  const std::vector<std::string>& covariates) {
    validate_model_spec(spec);
    check_covariates(spec, covariates);

    const auto spec_alts = spec.alternatives();
    {
        const std::set<std::string> a(spec_alts.begin(), spec_alts.end());
        const std::set<std::string> b(alternatives.begin(), alternatives.end());
        if (a != b || b.size() != alternatives.size()) {
            std::string msg = "model alternatives do not match the data:";
            for (const auto& x : a) {
                if (!b.count(x)) msg += " '" + x + "' missing from data;";
            }
            for (const auto& x : b) {
                if (!a.count(x)) msg += " '" + x + "' missing from spec;";
            }
            throw BindingError(msg);
        }
    }

    Model m;
    m.spec_ = spec;
    m.alternative_labels_ = alternatives;
    m.n_covariates_ = covariates.size();

    std::map<std::string, std::size_t> param_index;
    for (const auto& name : spec.parameter_names()) {
        Parameter p;
        p.name = name;
        if (const auto f = spec.fixed.find(name); f != spec.fixed.end()) {
            p.fixed = true;
            p.value = f->second;
        }
        param_index[name] = m.parameters_.size();
        m.parameters_.push_back(p);
    }
    auto alt_pos = [&](const std::string& label) {
        return static_cast<std::size_t>(std::find(alternatives.begin(), alternatives.end(), label) -
                                        alternatives.begin());
    };
    auto cov_pos = [&](const std::string& name) {
        return static_cast<std::size_t>(std::find(covariates.begin(), covariates.end(), name) - covariates.begin());
    };

    m.terms_.assign(alternatives.size(), {});
    for (const auto& [alt, terms] : spec.utility) {
        const std::size_t i = alt_pos(alt);
        for (const auto& t : terms) {
            BoundTerm bt;
            bt.kind = t.kind;
            bt.parameter = param_index.at(t.parameter);
            if (t.kind == TermKind::covariate) bt.covariate = cov_pos(t.covariate);
            if (t.kind == TermKind::latent) {
                m.parameters_[bt.parameter].kind = ParameterKind::beta;
                m.binds_latent_ = true;
            }
            m.terms_[i].push_back(bt);
        }
    }
    m.nest_of_.assign(alternatives.size(), 0);
    for (std::size_t j = 0; j < spec.nests.size(); ++j) {
        std::vector<std::size_t> members;
        for (const auto& label : spec.nests[j].members) {
            members.push_back(alt_pos(label));
            m.nest_of_[members.back()] = j;
        }
        m.nest_members_.push_back(std::move(members));
        const std::size_t p = param_index.at(spec.nests[j].iv_parameter);
        m.parameters_[p].kind = ParameterKind::inclusive_value;
        m.nest_iv_.push_back(p);
    }
    return m;
}

ParameterVector Model::start_parameters(double iv_start) const {
    auto params = parameters_;
    for (auto& p : params) {
        if (p.fixed) continue;
        p.value = (p.kind == ParameterKind::inclusive_value) ? iv_start : 0.0;
    }
    return ParameterVector(std::move(params));
}

unsigned resolve_threads(std::optional<unsigned> requested) {
    if (requested && *requested > 0) return *requested;
    if (const char* env = std::getenv("NLV_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    }
    return 1;
}

// --- per-observation kernel ------------------------------------------------

namespace {

double log_sum_exp(std::span<const double> v, std::span<const std::size_t> members) {
    double mx = kUnavailable;
    for (auto i : members) mx = std::max(mx, v[i]);
    if (mx == kUnavailable) return kUnavailable;
    double s = 0.0;
    for (auto i : members) {
        if (v[i] != kUnavailable) s += std::exp(v[i] - mx);
    }
    return mx + std::log(s);
}

struct Scratch {
    std::vector<double> v, cond, iv, scaled, pnest;
    explicit Scratch(const Model& m)
        : v(m.alternatives()), cond(m.alternatives()), iv(m.nests()), scaled(m.nests()), pnest(m.nests()) {}
};

void compute_utilities(const Model& m, const ChoiceObservation& obs, double score, std::span<const double> theta,
                       std::span<double> v) {
    const std::size_t k_cov = m.covariates();
    for (std::size_t i = 0; i < m.alternatives(); ++i) {
        if (!obs.available[i]) {
            v[i] = kUnavailable;
            continue;
        }
        double u = 0.0;
        for (const auto& t : m.terms(i)) {
            switch (t.kind) {
                case TermKind::constant: u += theta[t.parameter]; break;
                case TermKind::covariate: u += obs.covariates[i * k_cov + t.covariate] * theta[t.parameter]; break;
                case TermKind::latent: u += score * theta[t.parameter]; break;
            }
        }
        v[i] = u;
    }
}

/// Fills iv/scaled/pnest/cond from s.v; returns the log of the nest-level denominator.
double compute_probabilities(const Model& m, std::span<const double> theta, Scratch& s) {
    for (double x : s.v) {
        if (std::isnan(x)) throw NumericalError("NaN utility in choice probability evaluation");
    }
    const std::size_t n_nests = m.nests();
    double mx = kUnavailable;
    for (std::size_t j = 0; j < n_nests; ++j) {
        s.iv[j] = log_sum_exp(s.v, m.nest_members(j));
        const double gamma = theta[m.iv_parameter(j)];
        if (std::isnan(gamma)) throw NumericalError("NaN inclusive-value parameter");
        s.scaled[j] = (s.iv[j] == kUnavailable) ? kUnavailable : gamma * s.iv[j];
        if (std::isnan(s.scaled[j])) throw NumericalError("NaN scaled inclusive value");
        mx = std::max(mx, s.scaled[j]);
    }
    if (mx == kUnavailable) throw NumericalError("no nest has an available alternative");
    double denom = 0.0;
    for (std::size_t j = 0; j < n_nests; ++j) {
        if (s.scaled[j] != kUnavailable) denom += std::exp(s.scaled[j] - mx);
    }
    const double log_denom = mx + std::log(denom);
    for (std::size_t j = 0; j < n_nests; ++j) {
        s.pnest[j] = (s.scaled[j] == kUnavailable) ? 0.0 : std::exp(s.scaled[j] - log_denom);
    }
    for (std::size_t i = 0; i < m.alternatives(); ++i) {
        const double ivj = s.iv[m.nest_of(i)];
        s.cond[i] = (s.v[i] == kUnavailable) ? 0.0 : std::exp(s.v[i] - ivj);
    }
    return log_denom;
}

double chosen_log_probability(const Model& m, const ChoiceObservation& obs, const Scratch& s, double log_denom) {
    const std::size_t c = obs.chosen;
    const std::size_t nest = m.nest_of(c);
    return (s.v[c] - s.iv[nest]) + (s.scaled[nest] - log_denom);
}

double score_of(std::span<const double> scores, const ChoiceObservation& obs) {
    return scores.empty() ? 0.0 : scores[obs.respondent];
}

void check_scores(const ChoiceDataset& data, std::span<const double> scores, const Model& model) {
    if (scores.empty()) {
        if (model.binds_latent()) throw ValidationError("model binds a latent term but no scores were supplied");
        return;
    }
    if (scores.size() != data.respondents.size()) {
        throw ValidationError("score vector has " + std::to_string(scores.size()) + " entries for " +
                              std::to_string(data.respondents.size()) + " respondents");
    }
}

void check_model(const ChoiceDataset& data, const Model& model, const ParameterVector& theta) {
    if (model.alternatives() != data.alternatives() || model.covariates() != data.covariates()) {
        throw BindingError("model was bound to a different dataset layout");
    }
    if (theta.size() != model.parameter_count()) throw SpecError("parameter vector does not match model");
}

}  // namespace

double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 8) {
        double s = 0.0;
        for (double x : values) s += x;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

std::vector<double> systematic_utility(const ChoiceObservation& obs, double score, const ParameterVector& theta,
                                       const Model& model) {
    if (obs.available.size() != model.alternatives() ||
        obs.covariates.size() != model.alternatives() * model.covariates()) {
        throw BindingError("observation layout does not match the model");
    }
    const auto values = theta.values();
    std::vector<double> v(model.alternatives());
    compute_utilities(model, obs, score, values, v);
    return v;
}

double inclusive_value(std::span<const double> v, std::span<const std::size_t> members) {
    for (auto i : members) {
        if (std::isnan(v[i])) throw NumericalError("NaN utility in inclusive value");
    }
    return log_sum_exp(v, members);
}

NestedProbabilities nested_probabilities(std::span<const double> v, const ParameterVector& theta, const Model& model) {
    if (v.size() != model.alternatives()) throw BindingError("utility vector length does not match the model");
    Scratch s(model);
    std::copy(v.begin(), v.end(), s.v.begin());
    const auto values = theta.values();
    compute_probabilities(model, values, s);
    NestedProbabilities out;
    out.conditional = s.cond;
    out.nest = s.pnest;
    out.iv = s.iv;
    out.joint.resize(model.alternatives());
    for (std::size_t i = 0; i < model.alternatives(); ++i) out.joint[i] = s.cond[i] * s.pnest[model.nest_of(i)];
    return out;
}

std::vector<double> choice_probabilities(std::span<const double> v, const ParameterVector& theta, const Model& model) {
    return nested_probabilities(v, theta, model).joint;
}

double log_likelihood(const ChoiceDataset& data, std::span<const double> scores, const ParameterVector& theta,
                      const Model& model, const Execution& exec, std::optional<std::size_t>* underflow) {
    check_model(data, model, theta);
    check_scores(data, scores, model);
    const auto values = theta.values();
    const std::size_t n = data.observations.size();
    const std::size_t n_blocks = detail::block_count(n);
    std::vector<double> block_ll(n_blocks, 0.0);
    std::vector<std::size_t> block_underflow(n_blocks, n);
    detail::for_each_block(n_blocks, exec.threads, [&](std::size_t b) {
        Scratch s(model);
        double acc = 0.0;
        const std::size_t end = std::min(n, (b + 1) * detail::kBlockSize);
        for (std::size_t q = b * detail::kBlockSize; q < end; ++q) {
            const auto& obs = data.observations[q];
            compute_utilities(model, obs, score_of(scores, obs), values, s.v);
            const double log_denom = compute_probabilities(model, values, s);
            const double lp = chosen_log_probability(model, obs, s, log_denom);
            if (!(lp > kUnavailable) && block_underflow[b] == n) block_underflow[b] = q;
            acc += lp;
        }
        block_ll[b] = acc;
    });
    for (std::size_t b = 0; b < n_blocks; ++b) {
        if (block_underflow[b] != n) {
            if (underflow) *underflow = block_underflow[b];
            return kUnavailable;
        }
    }
    if (underflow) underflow->reset();
    return pairwise_sum(block_ll);
}

LikelihoodValue log_likelihood_gradient(const ChoiceDataset& data, std::span<const double> scores,
                                        const ParameterVector& theta, const Model& model, const Execution& exec) {
    check_model(data, model, theta);
    check_scores(data, scores, model);
    const auto values = theta.values();
    for (double x : values) {
        if (!std::isfinite(x)) throw NumericalError("non-finite parameter value in gradient evaluation");
    }
    constexpr std::size_t kNotFree = static_cast<std::size_t>(-1);
    std::vector<std::size_t> free_pos(values.size(), kNotFree);
    const auto free_idx = theta.free_indices();
    for (std::size_t k = 0; k < free_idx.size(); ++k) free_pos[free_idx[k]] = k;
    const std::size_t n_free = free_idx.size();

    const std::size_t n = data.observations.size();
    const std::size_t n_blocks = detail::block_count(n);
    // Block-major: [ll, grad_0, ..., grad_{P-1}] per block.
    const std::size_t stride = n_free + 1;
    std::vector<double> block_sums(n_blocks * stride, 0.0);
    detail::for_each_block(n_blocks, exec.threads, [&](std::size_t b) {
        Scratch s(model);
        std::vector<double> weight(model.alternatives());
        double* acc = block_sums.data() + b * stride;
        const std::size_t end = std::min(n, (b + 1) * detail::kBlockSize);
        for (std::size_t q = b * detail::kBlockSize; q < end; ++q) {
            const auto& obs = data.observations[q];
            const double score = score_of(scores, obs);
            compute_utilities(model, obs, score, values, s.v);
            const double log_denom = compute_probabilities(model, values, s);
            const double lp = chosen_log_probability(model, obs, s, log_denom);
            if (!(lp > kUnavailable)) {
                throw NumericalError("chosen probability underflows to 0 at observation " + std::to_string(q) +
                                     " ('" + obs.observation_id + "')");
            }
            acc[0] += lp;

            const std::size_t chosen_nest = model.nest_of(obs.chosen);
            // d lnP / dV_i for available i in nest j:
            //   [i == c] + [j == m](gamma_m - 1) P_{i|j} - P_j gamma_j P_{i|j}
            for (std::size_t i = 0; i < model.alternatives(); ++i) {
                if (!obs.available[i]) {
                    weight[i] = 0.0;
                    continue;
                }
                const std::size_t j = model.nest_of(i);
                const double gamma = values[model.iv_parameter(j)];
                double w = -s.pnest[j] * gamma * s.cond[i];
                if (j == chosen_nest) w += (gamma - 1.0) * s.cond[i];
                if (i == obs.chosen) w += 1.0;
                weight[i] = w;
            }
            for (std::size_t i = 0; i < model.alternatives(); ++i) {
                if (weight[i] == 0.0) continue;
                for (const auto& t : model.terms(i)) {
                    const std::size_t k = free_pos[t.parameter];
                    if (k == kNotFree) continue;
                    double x = 1.0;
                    if (t.kind == TermKind::covariate) x = obs.covariates[i * model.covariates() + t.covariate];
                    if (t.kind == TermKind::latent) x = score;
                    acc[1 + k] += weight[i] * x;
                }
            }
            // d lnP / d gamma_j = [j == m] IV_m - P_j IV_j
            for (std::size_t j = 0; j < model.nests(); ++j) {
                const std::size_t k = free_pos[model.iv_parameter(j)];
                if (k == kNotFree || s.iv[j] == kUnavailable) continue;
                double g = -s.pnest[j] * s.iv[j];
                if (j == chosen_nest) g += s.iv[j];
                acc[1 + k] += g;
            }
        }
    });

    LikelihoodValue out;
    std::vector<double> column(n_blocks);
    auto reduce = [&](std::size_t c) {
        for (std::size_t b = 0; b < n_blocks; ++b) column[b] = block_sums[b * stride + c];
        return pairwise_sum(column);
    };
    out.log_likelihood = reduce(0);
    out.gradient.resize(n_free);
    for (std::size_t k = 0; k < n_free; ++k) out.gradient[k] = reduce(1 + k);
    return out;
}

std::vector<double> ll_gradient(const ChoiceDataset& data, std::span<const double> scores,
                                const ParameterVector& theta, const Model& model, const Execution& exec) {
    return log_likelihood_gradient(data, scores, theta, model, exec).gradient;
}

std::vector<double> mean_probabilities(const ChoiceDataset& data, std::span<const double> scores,
                                       const ParameterVector& theta, const Model& model, const Execution& exec) {
    check_model(data, model, theta);
    check_scores(data, scores, model);
    const auto values = theta.values();
    const std::size_t n = data.observations.size();
    const std::size_t n_alt = model.alternatives();
    const std::size_t n_blocks = detail::block_count(n);
    std::vector<double> block_sums(n_blocks * n_alt, 0.0);
    detail::for_each_block(n_blocks, exec.threads, [&](std::size_t b) {
        Scratch s(model);
        double* acc = block_sums.data() + b * n_alt;
        const std::size_t end = std::min(n, (b + 1) * detail::kBlockSize);
        for (std::size_t q = b * detail::kBlockSize; q < end; ++q) {
            const auto& obs = data.observations[q];
            compute_utilities(model, obs, score_of(scores, obs), values, s.v);
            compute_probabilities(model, values, s);
            for (std::size_t i = 0; i < n_alt; ++i) acc[i] += s.cond[i] * s.pnest[model.nest_of(i)];
        }
    });
    std::vector<double> out(n_alt);
    std::vector<double> column(n_blocks);
    for (std::size_t i = 0; i < n_alt; ++i) {
        for (std::size_t b = 0; b < n_blocks; ++b) column[b] = block_sums[b * n_alt + i];
        out[i] = pairwise_sum(column) / static_cast<double>(n);
    }
    return out;
}

}  // namespace nlv
