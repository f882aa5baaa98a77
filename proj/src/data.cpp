#include "nlv/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "nlv/error.hpp"

namespace nlv {

std::size_t ChoiceObservation::available_count() const {
    return static_cast<std::size_t>(std::count(available.begin(), available.end(), std::uint8_t{1}));
}

std::size_t ChoiceDataset::alternative_index(const std::string& label) const {
    const auto it = std::find(alternative_labels.begin(), alternative_labels.end(), label);
    if (it == alternative_labels.end()) throw ValidationError("unknown alternative '" + label + "'");
    return static_cast<std::size_t>(it - alternative_labels.begin());
}

std::vector<std::size_t> ChoiceDataset::chosen_counts() const {
    std::vector<std::size_t> counts(alternatives(), 0);
    for (const auto& obs : observations) ++counts[obs.chosen];
    return counts;
}

void ChoiceDataset::validate() const {
    const std::size_t n_alt = alternatives();
    const std::size_t n_cov = covariates();
    if (observations.empty()) throw ValidationError("choice dataset has no observations");
    if (respondents.empty()) throw ValidationError("choice dataset has no respondents");
    if (n_alt < 2) throw ValidationError("choice dataset needs at least 2 alternatives");
    for (std::size_t q = 0; q < observations.size(); ++q) {
        const auto& obs = observations[q];
        const std::string where = "observation " + std::to_string(q) + " ('" + obs.observation_id + "')";
        if (obs.respondent >= respondents.size()) throw ValidationError(where + ": unknown respondent");
        if (obs.available.size() != n_alt || obs.covariates.size() != n_alt * n_cov) {
            throw ValidationError(where + ": inconsistent alternative/covariate dimensions");
        }
        if (obs.available_count() < 2) throw ValidationError(where + ": fewer than 2 available alternatives");
        if (obs.chosen >= n_alt || !obs.available[obs.chosen]) {
            throw ValidationError(where + ": chosen alternative is not available");
        }
        for (double x : obs.covariates) {
            if (!std::isfinite(x)) throw ValidationError(where + ": non-finite covariate");
        }
    }
}

namespace {

bool parse_flag(const std::string& text, const csv::Table& table, std::size_t r, const std::string& column) {
    if (text == "1" || text == "true" || text == "TRUE" || text == "1.0") return true;
    if (text == "0" || text == "false" || text == "FALSE" || text == "0.0") return false;
    throw ValidationError(table.source() + ":" + std::to_string(table.line_of(r)) + ": column '" + column +
                          "' must be 0/1, found '" + text + "'");
}

struct PendingRow {
    std::size_t row;
    std::size_t alternative;
    bool available;
    bool chosen;
};

std::string join_lines(const csv::Table& table, const std::vector<PendingRow>& rows) {
    std::ostringstream os;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i) os << ", ";
        os << table.line_of(rows[i].row);
    }
    return os.str();
}

}  // namespace

ChoiceDataset load_choice_csv(const std::filesystem::path& path, const ChoiceSchema& schema) {
    if (!std::filesystem::exists(path)) throw ValidationError("choice file not found: " + path.string());
    return load_choice_table(csv::Table::read(path), schema);
}

ChoiceDataset load_choice_table(const csv::Table& table, const ChoiceSchema& schema) {
    const std::size_t c_resp = table.column(schema.respondent_column);
    const std::size_t c_obs = table.column(schema.observation_column);
    const std::size_t c_alt = table.column(schema.alternative_column);
    const std::size_t c_chosen = table.column(schema.chosen_column);
    const auto c_avail = schema.available_column.empty() ? std::nullopt
                                                         : table.find_column(schema.available_column);

    std::set<std::string> key_columns{schema.respondent_column, schema.observation_column,
                                      schema.alternative_column, schema.chosen_column};
    if (!schema.available_column.empty()) key_columns.insert(schema.available_column);

    // Categorical expansion.
    struct Dummy {
        std::size_t source_column;
        std::string level;
    };
    std::vector<CategoricalColumn> categoricals = schema.categoricals;
    std::set<std::string> categorical_names;
    for (auto& cat : categoricals) {
        const std::size_t col = table.column(cat.column);
        categorical_names.insert(cat.column);
        if (cat.levels.empty()) {
            std::set<std::string> seen;
            for (std::size_t r = 0; r < table.rows(); ++r) seen.insert(table.row(r)[col]);
            cat.levels.assign(seen.begin(), seen.end());
        }
        if (cat.levels.size() < 2) {
            throw SchemaError("categorical column '" + cat.column + "' needs at least 2 levels");
        }
    }

    ChoiceDataset data;
    std::vector<std::size_t> numeric_columns;
    if (schema.covariates.empty()) {
        for (std::size_t c = 0; c < table.header().size(); ++c) {
            const auto& name = table.header()[c];
            if (key_columns.count(name) || categorical_names.count(name)) continue;
            numeric_columns.push_back(c);
            data.covariate_names.push_back(name);
        }
    } else {
        for (const auto& name : schema.covariates) {
            numeric_columns.push_back(table.column(name));
            data.covariate_names.push_back(name);
        }
    }
    std::vector<Dummy> dummies;
    for (const auto& cat : categoricals) {
        const std::size_t col = table.column(cat.column);
        for (std::size_t l = 1; l < cat.levels.size(); ++l) {
            dummies.push_back({col, cat.levels[l]});
            data.covariate_names.push_back(cat.column + "_" + cat.levels[l]);
        }
    }
    {
        std::set<std::string> unique(data.covariate_names.begin(), data.covariate_names.end());
        if (unique.size() != data.covariate_names.size()) {
            throw SchemaError(table.source() + ": duplicate covariate names after dummy encoding");
        }
    }

    // Alternatives.
    std::unordered_map<std::string, std::size_t> alt_index;
    if (!schema.alternatives.empty()) {
        data.alternative_labels = schema.alternatives;
    } else {
        for (std::size_t r = 0; r < table.rows(); ++r) {
            const auto& label = table.row(r)[c_alt];
            if (std::find(data.alternative_labels.begin(), data.alternative_labels.end(), label) ==
                data.alternative_labels.end()) {
                data.alternative_labels.push_back(label);
            }
        }
    }
    for (std::size_t i = 0; i < data.alternative_labels.size(); ++i) alt_index[data.alternative_labels[i]] = i;
    const std::size_t n_alt = data.alternative_labels.size();
    const std::size_t n_cov = data.covariate_names.size();

    // Group rows into observations keyed by (respondent, observation id).
    std::unordered_map<std::string, std::size_t> resp_index;
    std::map<std::pair<std::string, std::string>, std::size_t> obs_index;
    std::vector<std::vector<PendingRow>> grouped;
    for (std::size_t r = 0; r < table.rows(); ++r) {
        const auto& row = table.row(r);
        const std::string where = table.source() + ":" + std::to_string(table.line_of(r));
        const auto a = alt_index.find(row[c_alt]);
        if (a == alt_index.end()) throw ValidationError(where + ": unknown alternative '" + row[c_alt] + "'");
        if (row[c_resp].empty()) throw ValidationError(where + ": empty respondent id");
        auto [rit, new_resp] = resp_index.try_emplace(row[c_resp], data.respondents.size());
        if (new_resp) data.respondents.push_back(row[c_resp]);
        auto [oit, new_obs] = obs_index.try_emplace({row[c_resp], row[c_obs]}, data.observations.size());
        if (new_obs) {
            ChoiceObservation obs;
            obs.respondent = rit->second;
            obs.observation_id = row[c_obs];
            obs.available.assign(n_alt, 0);
            obs.covariates.assign(n_alt * n_cov, 0.0);
            data.observations.push_back(std::move(obs));
            grouped.emplace_back();
        }
        const std::size_t q = oit->second;
        auto& obs = data.observations[q];
        for (const auto& prev : grouped[q]) {
            if (prev.alternative == a->second) {
                throw ValidationError(where + ": alternative '" + row[c_alt] + "' repeated in observation '" +
                                      obs.observation_id + "' (first at line " +
                                      std::to_string(table.line_of(prev.row)) + ")");
            }
        }
        const bool avail = c_avail ? parse_flag(row[*c_avail], table, r, schema.available_column) : true;
        const bool chosen = parse_flag(row[c_chosen], table, r, schema.chosen_column);
        grouped[q].push_back({r, a->second, avail, chosen});
        obs.available[a->second] = avail ? 1 : 0;
        double* cov = obs.covariates.data() + a->second * n_cov;
        for (std::size_t k = 0; k < numeric_columns.size(); ++k) {
            cov[k] = csv::parse_double(row[numeric_columns[k]],
                                       where + ": column '" + table.header()[numeric_columns[k]] + "'");
        }
        for (std::size_t d = 0; d < dummies.size(); ++d) {
            const auto& value = row[dummies[d].source_column];
            cov[numeric_columns.size() + d] = (value == dummies[d].level) ? 1.0 : 0.0;
        }
        for (const auto& cat : categoricals) {
            const auto& value = row[table.column(cat.column)];
            if (std::find(cat.levels.begin(), cat.levels.end(), value) == cat.levels.end()) {
                throw ValidationError(where + ": unknown level '" + value + "' for categorical '" +
                                      cat.column + "'");
            }
        }
    }
    if (data.observations.empty()) throw ValidationError(table.source() + ": no data rows");

    std::vector<std::string> problems;
    for (std::size_t q = 0; q < data.observations.size(); ++q) {
        auto& obs = data.observations[q];
        const auto& rows = grouped[q];
        const std::string label = "observation '" + obs.observation_id + "' of respondent '" +
                                  data.respondents[obs.respondent] + "' (lines " + join_lines(table, rows) + ")";
        const auto n_avail = obs.available_count();
        if (n_avail == 0) {
            problems.push_back(label + ": no available alternatives");
            continue;
        }
        if (n_avail < 2) {
            problems.push_back(label + ": only one available alternative");
            continue;
        }
        std::vector<const PendingRow*> chosen_rows;
        for (const auto& pr : rows) {
            if (pr.chosen) chosen_rows.push_back(&pr);
        }
        if (chosen_rows.size() != 1) {
            problems.push_back(label + ": expected exactly one chosen row, found " +
                               std::to_string(chosen_rows.size()));
            continue;
        }
        if (!chosen_rows.front()->available) {
            problems.push_back(label + ": chosen alternative '" +
                               data.alternative_labels[chosen_rows.front()->alternative] + "' is unavailable");
            continue;
        }
        obs.chosen = chosen_rows.front()->alternative;
    }
    if (!problems.empty()) {
        std::ostringstream os;
        os << table.source() << ": " << problems.size() << " invalid observation(s):";
        for (const auto& p : problems) os << "\n  " << p;
        throw ValidationError(os.str());
    }
    data.validate();
    return data;
}

std::vector<double> IndicatorPanel::column_means() const {
    std::vector<double> means(static_cast<std::size_t>(values.cols()), 0.0);
    for (Eigen::Index g = 0; g < values.cols(); ++g) means[static_cast<std::size_t>(g)] = values.col(g).mean();
    return means;
}

std::size_t IndicatorPanel::indicator_index(const std::string& name) const {
    const auto it = std::find(indicator_names.begin(), indicator_names.end(), name);
    if (it == indicator_names.end()) throw SchemaError("unknown indicator '" + name + "'");
    return static_cast<std::size_t>(it - indicator_names.begin());
}

IndicatorPanel IndicatorPanel::select(const std::vector<std::string>& names) const {
    IndicatorPanel out;
    out.indicator_names = names;
    out.respondents = respondents;
    out.values.resize(values.rows(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t g = 0; g < names.size(); ++g) {
        out.values.col(static_cast<Eigen::Index>(g)) = values.col(static_cast<Eigen::Index>(indicator_index(names[g])));
    }
    out.warnings = warnings;
    return out;
}

IndicatorPanel load_indicator_csv(const std::filesystem::path& path, const std::string& respondent_column) {
    if (!std::filesystem::exists(path)) throw ValidationError("indicator file not found: " + path.string());
    return load_indicator_table(csv::Table::read(path), respondent_column);
}

IndicatorPanel load_indicator_table(const csv::Table& table, const std::string& respondent_column) {
    const std::size_t c_resp = table.column(respondent_column);
    IndicatorPanel panel;
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < table.header().size(); ++c) {
        if (c == c_resp) continue;
        cols.push_back(c);
        panel.indicator_names.push_back(table.header()[c]);
    }
    if (cols.empty()) throw SchemaError(table.source() + ": no indicator columns");
    panel.values.resize(static_cast<Eigen::Index>(table.rows()), static_cast<Eigen::Index>(cols.size()));
    std::set<std::string> seen;
    for (std::size_t r = 0; r < table.rows(); ++r) {
        const auto& row = table.row(r);
        const std::string where = table.source() + ":" + std::to_string(table.line_of(r));
        if (!seen.insert(row[c_resp]).second) {
            throw ValidationError(where + ": duplicate respondent '" + row[c_resp] + "'");
        }
        panel.respondents.push_back(row[c_resp]);
        for (std::size_t g = 0; g < cols.size(); ++g) {
            panel.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(g)) =
                csv::parse_double(row[cols[g]], where + ": indicator '" + panel.indicator_names[g] + "'");
        }
    }
    if (panel.respondents.empty()) throw ValidationError(table.source() + ": no indicator rows");
    for (Eigen::Index g = 0; g < panel.values.cols(); ++g) {
        const auto col = panel.values.col(g);
        const auto& name = panel.indicator_names[static_cast<std::size_t>(g)];
        if (col.maxCoeff() - col.minCoeff() == 0.0) {
            panel.warnings.push_back("indicator '" + name + "' has zero variance");
        }
        if (col.minCoeff() < 0.0 || col.maxCoeff() > 1.0) {
            panel.warnings.push_back("indicator '" + name + "' has values outside [0, 1]");
        }
    }
    return panel;
}

IndicatorPanel align_panel(const IndicatorPanel& panel, const ChoiceDataset& data) {
    std::unordered_map<std::string, Eigen::Index> row_of;
    for (std::size_t r = 0; r < panel.respondents.size(); ++r) {
        row_of.emplace(panel.respondents[r], static_cast<Eigen::Index>(r));
    }
    IndicatorPanel out;
    out.indicator_names = panel.indicator_names;
    out.warnings = panel.warnings;
    out.respondents = data.respondents;
    out.values.resize(static_cast<Eigen::Index>(data.respondents.size()), panel.values.cols());
    std::vector<std::string> missing;
    for (std::size_t n = 0; n < data.respondents.size(); ++n) {
        const auto it = row_of.find(data.respondents[n]);
        if (it == row_of.end()) {
            missing.push_back(data.respondents[n]);
            continue;
        }
        out.values.row(static_cast<Eigen::Index>(n)) = panel.values.row(it->second);
    }
    if (!missing.empty()) {
        std::string msg = "indicator panel is missing " + std::to_string(missing.size()) + " respondent(s): ";
        for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += (i ? ", '" : "'") + missing[i] + "'";
        if (missing.size() > 10) msg += ", ...";
        throw ValidationError(msg);
    }
    return out;
}

}  // namespace nlv
