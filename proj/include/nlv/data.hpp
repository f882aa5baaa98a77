#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nlv/csv.hpp"

namespace nlv {

/// One choice situation: a respondent facing I alternatives.
///
/// Covariates are stored per alternative, row-major (I x K), because
/// alternative-specific attributes are row-sparse in long format: a cell that
/// does not apply to an alternative holds 0 and is simply not bound in the
/// model specification.
struct ChoiceObservation {
    std::size_t respondent = 0;  ///< index into ChoiceDataset::respondents
    std::string observation_id;
    std::size_t chosen = 0;
    std::vector<std::uint8_t> available;
    std::vector<double> covariates;

    double covariate(std::size_t alternative, std::size_t k, std::size_t n_covariates) const {
        return covariates[alternative * n_covariates + k];
    }
    std::size_t available_count() const;
};

struct ChoiceDataset {
    std::vector<std::string> respondents;
    std::vector<std::string> alternative_labels;
    std::vector<std::string> covariate_names;
    std::vector<ChoiceObservation> observations;

    std::size_t alternatives() const { return alternative_labels.size(); }
    std::size_t covariates() const { return covariate_names.size(); }
    std::size_t alternative_index(const std::string& label) const;
    const std::string& respondent_id(const ChoiceObservation& obs) const {
        return respondents[obs.respondent];
    }

    /// Observed choice count per alternative; sums to the observation count.
    std::vector<std::size_t> chosen_counts() const;

    /// Throws ValidationError on the first violated invariant.
    void validate() const;
};

/// A categorical column expanded into k-1 dummies `<column>_<level>`; the
/// first level is the reference and gets no column.
struct CategoricalColumn {
    std::string column;
    std::vector<std::string> levels;  ///< empty: sorted distinct values from the data
};

/// Column mapping for the long-format choice CSV.
struct ChoiceSchema {
    std::string respondent_column = "resp_id";
    std::string observation_column = "obs_id";
    std::string alternative_column = "alt";
    std::string available_column = "avail";  ///< column may be absent: rows count as available
    std::string chosen_column = "chosen";
    std::vector<std::string> covariates;     ///< empty: every remaining non-categorical column
    std::vector<CategoricalColumn> categoricals;
    std::vector<std::string> alternatives;   ///< fixed ordering; empty: first-appearance order
};

ChoiceDataset load_choice_csv(const std::filesystem::path& path, const ChoiceSchema& schema = {});
ChoiceDataset load_choice_table(const csv::Table& table, const ChoiceSchema& schema = {});

/// Per-respondent measurement indicators, one row per respondent.
struct IndicatorPanel {
    std::vector<std::string> indicator_names;
    std::vector<std::string> respondents;
    Eigen::MatrixXd values;  ///< N x G
    std::vector<std::string> warnings;

    std::size_t size() const { return respondents.size(); }
    std::vector<double> column_means() const;
    std::size_t indicator_index(const std::string& name) const;
    /// Column subset in the requested order; throws SchemaError for unknown names.
    IndicatorPanel select(const std::vector<std::string>& names) const;
};

IndicatorPanel load_indicator_csv(const std::filesystem::path& path,
                                  const std::string& respondent_column = "resp_id");
IndicatorPanel load_indicator_table(const csv::Table& table,
                                    const std::string& respondent_column = "resp_id");

/// Reorders the panel to the dataset's respondent order. A respondent with
/// choices but no indicator row is a ValidationError naming that respondent.
IndicatorPanel align_panel(const IndicatorPanel& panel, const ChoiceDataset& data);

}  // namespace nlv
