#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "nlv/data.hpp"
#include "nlv/model_spec.hpp"
#include "nlv/nl_engine.hpp"

namespace nlv::test {

inline ChoiceObservation observation(std::size_t respondent, std::size_t chosen, std::vector<std::uint8_t> avail,
                                     std::vector<double> covariates) {
    ChoiceObservation o;
    o.respondent = respondent;
    o.observation_id = std::to_string(respondent) + "_" + std::to_string(chosen);
    o.chosen = chosen;
    o.available = std::move(avail);
    o.covariates = std::move(covariates);
    return o;
}

// Three nests: A = {a1, a2}, B = {b1, b2}, C = {c1}; covariates x and z;
// latent term on a1 and b2.
inline ModelSpec toy_spec() {
    return parse_model_spec_text(R"(
name = toy
base = c1
[nests]
A = a1, a2
B = b1, b2
C = c1
[utility.a1]
constant = asc_a1
x = bx_a1
[utility.a2]
constant = asc_a2
z = bz_a2
[utility.b1]
constant = asc_b1
x = bx_shared
[utility.b2]
constant = asc_b2
x = bx_shared
z = bz_b2
[latent]
a1 = lat_a1
b2 = lat_b2
)");
}

// Random dataset on the toy alternatives with partial availability.
inline ChoiceDataset random_toy_data(std::mt19937_64& rng, std::size_t q, std::size_t respondents,
                                     bool partial = true) {
    ChoiceDataset d;
    d.alternative_labels = {"a1", "a2", "b1", "b2", "c1"};
    d.covariate_names = {"x", "z"};
    for (std::size_t n = 0; n < respondents; ++n) d.respondents.push_back("r" + std::to_string(n));
    std::normal_distribution<double> nd(0.0, 1.0);
    std::bernoulli_distribution drop(partial ? 0.25 : 0.0);
    for (std::size_t k = 0; k < q; ++k) {
        std::vector<std::uint8_t> avail(5, 1);
        for (auto& a : avail) a = drop(rng) ? 0 : 1;
        avail[4] = 1;
        if (std::count(avail.begin(), avail.end(), 1) < 2) avail[0] = 1;
        std::vector<std::size_t> open;
        for (std::size_t i = 0; i < 5; ++i)
            if (avail[i]) open.push_back(i);
        const std::size_t chosen = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
        std::vector<double> cov(10);
        for (auto& c : cov) c = nd(rng);
        auto o = observation(k % respondents, chosen, avail, cov);
        o.observation_id = std::to_string(k);
        d.observations.push_back(std::move(o));
    }
    return d;
}

inline std::vector<double> random_scores(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> s(n);
    for (auto& v : s) v = nd(rng);
    return s;
}

// All-available dataset with the given chosen alternatives and no covariates.
inline ChoiceDataset shares_data(std::vector<std::string> alts, const std::vector<std::size_t>& counts) {
    ChoiceDataset d;
    d.alternative_labels = std::move(alts);
    std::size_t id = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        for (std::size_t k = 0; k < counts[i]; ++k, ++id) {
            d.respondents.push_back("r" + std::to_string(id));
            auto o = observation(id, i, std::vector<std::uint8_t>(counts.size(), 1), {});
            o.observation_id = "1";
            d.observations.push_back(std::move(o));
        }
    }
    return d;
}

}  // namespace nlv::test
