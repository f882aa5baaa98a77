#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlv/data.hpp"
#include "nlv/model_spec.hpp"

namespace nlv {

/// Sentinel utility for an unavailable alternative (and IV of an empty nest).
inline constexpr double kUnavailable = -std::numeric_limits<double>::infinity();

enum class ParameterKind { alpha, beta, inclusive_value };

struct Parameter {
    std::string name;
    ParameterKind kind = ParameterKind::alpha;
    double value = 0.0;
    bool fixed = false;
};

/// Full parameter vector (free and fixed entries) in model order.
class ParameterVector {
public:
    ParameterVector() = default;
    explicit ParameterVector(std::vector<Parameter> entries) : entries_(std::move(entries)) {}

    std::size_t size() const { return entries_.size(); }
    const Parameter& operator[](std::size_t i) const { return entries_[i]; }
    const std::vector<Parameter>& entries() const { return entries_; }

    std::size_t index_of(const std::string& name) const;
    std::optional<std::size_t> find(const std::string& name) const;
    double value(const std::string& name) const { return entries_[index_of(name)].value; }
    /// Sets a value by name; throws for unknown names and for fixed entries.
    void set(const std::string& name, double value);

    std::vector<double> values() const;
    std::vector<std::size_t> free_indices() const;
    std::size_t free_count() const;
    std::vector<double> free_values() const;
    void set_free_values(std::span<const double> values);

private:
    std::vector<Parameter> entries_;
};

struct BoundTerm {
    TermKind kind = TermKind::constant;
    std::size_t covariate = 0;  ///< column in ChoiceDataset::covariate_names
    std::size_t parameter = 0;  ///< index into ParameterVector
};

/// A ModelSpec resolved against a dataset's alternative and covariate order.
class Model {
public:
    static Model bind(const ModelSpec& spec, const ChoiceDataset& data);
    static Model bind(const ModelSpec& spec, const std::vector<std::string>& alternatives,
                      const std::vector<std::string>& covariates);

    const ModelSpec& spec() const { return spec_; }
    std::size_t alternatives() const { return terms_.size(); }
    std::size_t covariates() const { return n_covariates_; }
    std::size_t nests() const { return nest_members_.size(); }
    const std::vector<std::string>& alternative_labels() const { return alternative_labels_; }
    const std::vector<BoundTerm>& terms(std::size_t alternative) const { return terms_[alternative]; }
    const std::vector<std::size_t>& nest_members(std::size_t nest) const { return nest_members_[nest]; }
    std::size_t nest_of(std::size_t alternative) const { return nest_of_[alternative]; }
    std::size_t iv_parameter(std::size_t nest) const { return nest_iv_[nest]; }
    bool binds_latent() const { return binds_latent_; }
    std::size_t parameter_count() const { return parameters_.size(); }

    /// Documented start: free coefficients 0, free IV parameters `iv_start`,
    /// fixed entries at their fixed values.
    ParameterVector start_parameters(double iv_start = 0.8) const;

private:
    ModelSpec spec_;
    std::vector<std::string> alternative_labels_;
    std::size_t n_covariates_ = 0;
    std::vector<std::vector<BoundTerm>> terms_;
    std::vector<std::vector<std::size_t>> nest_members_;
    std::vector<std::size_t> nest_of_;
    std::vector<std::size_t> nest_iv_;
    std::vector<Parameter> parameters_;
    bool binds_latent_ = false;
};

/// Worker count for per-observation evaluation. Results do not depend on it:
/// observations are reduced in fixed-size blocks with pairwise summation.
struct Execution {
    unsigned threads = 1;
};

/// Resolves `--threads`, falling back to NLV_THREADS, then 1.
unsigned resolve_threads(std::optional<unsigned> requested);

/// V_i = sum_k x_ik * alpha_ik + score * beta_i; unavailable alternatives carry kUnavailable.
std::vector<double> systematic_utility(const ChoiceObservation& obs, double score, const ParameterVector& theta,
                                       const Model& model);

/// IV = ln sum_{i in nest} exp(V_i), max-shifted; kUnavailable when no member is available.
double inclusive_value(std::span<const double> v, std::span<const std::size_t> members);

/// Nested probabilities of one choice situation.
struct NestedProbabilities {
    std::vector<double> joint;        ///< P_ij, length I
    std::vector<double> conditional;  ///< P_{i|j}, length I
    std::vector<double> nest;         ///< P_j, length J
    std::vector<double> iv;           ///< IV_j, length J
};

NestedProbabilities nested_probabilities(std::span<const double> v, const ParameterVector& theta, const Model& model);

/// P_ij = P_{i|j} * P_j with P_{i|j} = exp(V_i)/sum_{l in j} exp(V_l) and
/// P_j = exp(gamma_j IV_j)/sum_k exp(gamma_k IV_k). Within-nest utilities are
/// not divided by gamma_j (the non-normalized form). NaN input throws.
std::vector<double> choice_probabilities(std::span<const double> v, const ParameterVector& theta, const Model& model);

/// Scores aligned to ChoiceDataset::respondents; may be empty when the model binds no latent term.
using ScoreVector = std::vector<double>;

/// Sum over observations of ln P(chosen). Returns -inf if any chosen
/// probability underflows; `underflow` then receives the observation index.
double log_likelihood(const ChoiceDataset& data, std::span<const double> scores, const ParameterVector& theta,
                      const Model& model, const Execution& exec = {},
                      std::optional<std::size_t>* underflow = nullptr);

struct LikelihoodValue {
    double log_likelihood = 0.0;
    std::vector<double> gradient;  ///< over free parameters, ParameterVector::free_indices() order
};

/// Analytic gradient of the log-likelihood with respect to the free parameters.
/// Throws NumericalError naming the observation when a chosen probability underflows.
LikelihoodValue log_likelihood_gradient(const ChoiceDataset& data, std::span<const double> scores,
                                        const ParameterVector& theta, const Model& model,
                                        const Execution& exec = {});

std::vector<double> ll_gradient(const ChoiceDataset& data, std::span<const double> scores,
                                const ParameterVector& theta, const Model& model, const Execution& exec = {});

/// Mean joint probability per alternative over all observations.
std::vector<double> mean_probabilities(const ChoiceDataset& data, std::span<const double> scores,
                                       const ParameterVector& theta, const Model& model,
                                       const Execution& exec = {});

/// Deterministic pairwise (cascade) summation.
double pairwise_sum(std::span<const double> values);

}  // namespace nlv
