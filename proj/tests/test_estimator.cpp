#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <random>

#include "helpers.hpp"
#include "nlv/error.hpp"
#include "nlv/estimator.hpp"
#include "nlv/simulate.hpp"

using namespace nlv;

namespace {

// Toy-model data with choices drawn from the model at `truth`.
ChoiceDataset simulate_toy(const std::map<std::string, double>& truth, std::size_t q, std::size_t n,
                           std::uint64_t seed, std::vector<double>& scores) {
    std::mt19937_64 rng(seed);
    auto data = test::random_toy_data(rng, q, n, true);
    scores = test::random_scores(rng, n);
    const auto m = Model::bind(test::toy_spec(), data);
    auto theta = m.start_parameters();
    for (const auto& [k, v] : truth) theta.set(k, v);
    for (std::size_t i = 0; i < q; ++i) {
        auto& obs = data.observations[i];
        const auto v = systematic_utility(obs, scores[obs.respondent], theta, m);
        obs.chosen = draw_choice(choice_probabilities(v, theta, m), seed, i);
    }
    return data;
}

const std::map<std::string, double> kTruth{
    {"asc_a1", 0.3}, {"asc_a2", -0.2}, {"asc_b1", 0.1}, {"asc_b2", -0.4}, {"bx_a1", 0.6},    {"bz_a2", -0.5},
    {"bx_shared", 0.4}, {"bz_b2", 0.3}, {"lat_a1", 0.5}, {"lat_b2", -0.7}, {"iv_A", 0.6}, {"iv_B", 0.85}};

ChoiceDataset shares_with(const std::vector<std::size_t>& counts) {
    std::vector<std::string> alts;
    for (std::size_t i = 0; i < counts.size(); ++i) alts.push_back("alt" + std::to_string(i));
    return test::shares_data(alts, counts);
}

}  // namespace

TEST(Benchmarks, LLZeroFullAvailability) {
    std::vector<std::size_t> counts{245, 66, 1247, 499, 146, 103, 784, 292, 83, 71};
    const auto data = shares_with(counts);
    ASSERT_EQ(data.observations.size(), 3536u);
    const auto t0 = std::chrono::steady_clock::now();
    const auto b = benchmark_lls(data, "alt0");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_NEAR(b.ll_zero, -8141.941, 0.01);
    EXPECT_LT(secs, 1.0);
    EXPECT_LT(b.ll_zero, b.ll_const);
}

TEST(Benchmarks, LLZeroCountsAvailability) {
    auto data = shares_with({2, 2, 2});
    data.observations[0].available = {1, 1, 0};
    const auto b = benchmark_lls(data, "alt0");
    EXPECT_NEAR(b.ll_zero, std::log(0.5) + 5 * std::log(1.0 / 3.0), 1e-12);
}

TEST(Benchmarks, EqualSharesGiveLLZero) {
    const auto data = shares_with({40, 40, 40, 40, 40});
    const auto b = benchmark_lls(data, "alt2");
    EXPECT_NEAR(b.ll_const, b.ll_zero, 1e-9);
}

TEST(Benchmarks, ConstantsReproduceShares) {
    const std::vector<std::size_t> counts{245, 66, 1247, 499, 146, 103, 784, 292, 83, 71};
    const auto data = shares_with(counts);
    const auto b = benchmark_lls(data, "alt0");
    const auto m = Model::bind(constants_only_spec(data.alternative_labels, "alt0"), data);
    const auto p = mean_probabilities(data, {}, b.constants, m);
    double closed = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double share = static_cast<double>(counts[i]) / 3536.0;
        EXPECT_NEAR(p[i], share, 1e-6);
        closed += static_cast<double>(counts[i]) * std::log(share);
    }
    EXPECT_NEAR(b.ll_const, closed, 1e-6);
}

TEST(Benchmarks, ConstantsOnlyThroughEstimate) {
    const auto data = shares_with({30, 10, 60});
    const auto spec = constants_only_spec(data.alternative_labels, "alt1");
    const auto r = estimate(data, {}, spec);
    const auto m = Model::bind(spec, data);
    const auto p = mean_probabilities(data, {}, r.theta_hat, m);
    EXPECT_NEAR(p[0], 0.3, 1e-6);
    EXPECT_NEAR(p[1], 0.1, 1e-6);
    EXPECT_NEAR(p[2], 0.6, 1e-6);
    EXPECT_NEAR(r.fit.ll_beta, r.fit.ll_const, 1e-6);
    EXPECT_NEAR(r.fit.pseudo_rho2, 0.0, 1e-9);
}

TEST(FitStats, Arithmetic) {
    const auto f = fit_statistics(-6246.551, -8141.941, -7484.911);
    EXPECT_NEAR(f.rho2, 0.233, 0.0005);
    EXPECT_NEAR(f.pseudo_rho2, 0.165, 0.0005);
    EXPECT_EQ(f.ll_beta, -6246.551);
}

class ToyEstimation : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        data_ = new ChoiceDataset(simulate_toy(kTruth, 6000, 1500, 77, scores_));
        result_ = new EstimationResult(estimate(*data_, scores_, test::toy_spec()));
    }
    static void TearDownTestSuite() {
        delete data_;
        delete result_;
    }
    static inline ChoiceDataset* data_ = nullptr;
    static inline std::vector<double> scores_;
    static inline EstimationResult* result_ = nullptr;
};

TEST_F(ToyEstimation, Converges) {
    const auto& r = *result_;
    EXPECT_TRUE(optim::Status::converged == r.convergence.status);
    EXPECT_EQ(r.starts.size(), 5u);
    EXPECT_EQ(r.se_method, StdErrorMethod::inverse_hessian);
    EXPECT_EQ(r.observations, 6000u);
    EXPECT_EQ(r.respondents, 1500u);
}

TEST_F(ToyEstimation, RecoversTruth) {
    const auto& r = *result_;
    for (const auto& [name, value] : kTruth) {
        const auto i = r.theta_hat.index_of(name);
        EXPECT_LT(std::abs(r.theta_hat[i].value - value), 3.5 * r.std_errors[i]) << name;
    }
}

TEST_F(ToyEstimation, FixedIvHasNoStdError) {
    const auto& r = *result_;
    const auto i = r.theta_hat.index_of("iv_C");
    EXPECT_TRUE(r.theta_hat[i].fixed);
    EXPECT_EQ(r.theta_hat[i].value, 1.0);
    EXPECT_TRUE(std::isnan(r.std_errors[i]));
    EXPECT_TRUE(std::isnan(r.t_stats[i]));
}

TEST_F(ToyEstimation, TStatSignMatchesCoefficient) {
    const auto& r = *result_;
    for (std::size_t i : r.theta_hat.free_indices()) {
        const double v = r.theta_hat[i].value;
        if (v != 0.0) EXPECT_EQ(std::signbit(v), std::signbit(r.t_stats[i])) << r.theta_hat[i].name;
        EXPECT_GT(r.std_errors[i], 0.0);
    }
}

TEST_F(ToyEstimation, LikelihoodOrdering) {
    const auto& f = result_->fit;
    EXPECT_TRUE(result_->has_benchmarks);
    EXPECT_LE(f.ll_zero, f.ll_const);
    EXPECT_LE(f.ll_const, f.ll_beta);
    EXPECT_NEAR(f.rho2, 1.0 - f.ll_beta / f.ll_zero, 1e-10);
    EXPECT_NEAR(f.pseudo_rho2, 1.0 - f.ll_beta / f.ll_const, 1e-10);
}

TEST_F(ToyEstimation, IvChecks) {
    const auto& r = *result_;
    ASSERT_EQ(r.iv_checks.size(), 2u);
    for (const auto& c : r.iv_checks) {
        EXPECT_NEAR(c.z_zero, c.estimate / c.std_error, 1e-12);
        EXPECT_NEAR(c.z_one, (c.estimate - 1.0) / c.std_error, 1e-12);
        EXPECT_TRUE(c.in_unit_interval);
        EXPECT_TRUE(c.consistent);
    }
}

TEST_F(ToyEstimation, MonotoneTraces) {
    for (const auto& s : result_->starts) {
        ASSERT_FALSE(s.trace.empty());
        for (std::size_t i = 1; i < s.trace.size(); ++i) EXPECT_LE(s.trace[i].value, s.trace[i - 1].value);
    }
}

TEST_F(ToyEstimation, BestStartWins) {
    const auto& r = *result_;
    for (const auto& s : r.starts) {
        if (s.status == optim::Status::converged) EXPECT_LE(s.log_likelihood, r.fit.ll_beta + 1e-9);
    }
}

TEST_F(ToyEstimation, SameSeedSameBits) {
    const auto again = estimate(*data_, scores_, test::toy_spec());
    EXPECT_EQ(again.theta_hat.values(), result_->theta_hat.values());
    // NaN for the fixed IV, so compare bits
    ASSERT_EQ(again.std_errors.size(), result_->std_errors.size());
    EXPECT_EQ(std::memcmp(again.std_errors.data(), result_->std_errors.data(),
                          again.std_errors.size() * sizeof(double)),
              0);
    EXPECT_EQ(again.fit.ll_beta, result_->fit.ll_beta);
}

TEST_F(ToyEstimation, ThreadsSameBits) {
    EstimationOptions o;
    o.threads = 3;
    const auto r = estimate(*data_, scores_, test::toy_spec(), o);
    EXPECT_EQ(r.theta_hat.values(), result_->theta_hat.values());
}

TEST_F(ToyEstimation, RescaledCovariate) {
    const double k = 2.5;
    auto scaled = *data_;
    for (auto& obs : scaled.observations) {
        for (std::size_t i = 0; i < 5; ++i) obs.covariates[i * 2 + 0] *= k;
    }
    EstimationOptions o;
    o.benchmarks = false;
    const auto r = estimate(scaled, scores_, test::toy_spec(), o);
    EXPECT_NEAR(r.fit.ll_beta, result_->fit.ll_beta, 1e-6);
    for (std::size_t i = 0; i < r.theta_hat.size(); ++i) {
        const auto& name = r.theta_hat[i].name;
        const double expected = result_->theta_hat[i].value / (name.rfind("bx_", 0) == 0 ? k : 1.0);
        EXPECT_NEAR(r.theta_hat[i].value, expected, 1e-4) << name;
    }
}

TEST(Estimation, UnitIvSanity) {
    auto truth = kTruth;
    truth["iv_A"] = 1.0;
    truth["iv_B"] = 1.0;
    std::vector<double> scores;
    const auto data = simulate_toy(truth, 6000, 1500, 78, scores);
    EstimationOptions o;
    o.benchmarks = false;
    o.starts = 2;
    const auto r = estimate(data, scores, test::toy_spec(), o);
    for (const auto& c : r.iv_checks) EXPECT_LT(std::abs(c.estimate - 1.0), 3 * c.std_error) << c.parameter;
}

TEST(Estimation, ForcedIterationCap) {
    std::vector<double> scores;
    const auto data = simulate_toy(kTruth, 500, 100, 79, scores);
    EstimationOptions o;
    o.max_iterations = 1;
    try {
        estimate(data, scores, test::toy_spec(), o);
        FAIL();
    } catch (const EstimationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("no start converged"), std::string::npos);
        EXPECT_NE(msg.find("start 5"), std::string::npos) << msg;
    }
}

TEST(Estimation, ScoresPrecondition) {
    std::vector<double> scores;
    const auto data = simulate_toy(kTruth, 200, 50, 80, scores);
    EXPECT_THROW(estimate(data, {}, test::toy_spec()), ValidationError);
    const auto mnl = constants_only_spec(data.alternative_labels, "c1");
    EXPECT_THROW(estimate(data, scores, mnl), ValidationError);
}

TEST(Estimation, UnknownCovariate) {
    const auto data = shares_with({5, 5});
    const auto spec = parse_model_spec_text("base = alt0\n[nests]\nall = alt0, alt1\n[utility.alt1]\nage = b\n");
    EXPECT_THROW(estimate(data, {}, spec), BindingError);
}

TEST(Estimation, UnidentifiedParameterUsesRidge) {
    std::vector<double> scores;
    auto data = simulate_toy(kTruth, 2000, 400, 81, scores);
    for (auto& obs : data.observations) {
        for (std::size_t i = 0; i < 5; ++i) obs.covariates[i * 2 + 1] = 0.0;  // z carries nothing
    }
    EstimationOptions o;
    o.benchmarks = false;
    o.starts = 1;
    const auto r = estimate(data, scores, test::toy_spec(), o);
    EXPECT_NE(r.se_method, StdErrorMethod::inverse_hessian);
    EXPECT_FALSE(r.warnings.empty());
}

TEST(StandardErrors, MatchInverseHessianDiagonal) {
    std::vector<double> scores;
    const auto data = simulate_toy(kTruth, 1000, 250, 82, scores);
    const auto m = Model::bind(test::toy_spec(), data);
    auto theta = m.start_parameters();
    for (const auto& [k, v] : kTruth) theta.set(k, v);
    const auto se = standard_errors(theta, data, scores, m);
    ASSERT_EQ(se.values.size(), theta.free_count());
    for (std::size_t k = 0; k < se.values.size(); ++k) {
        EXPECT_NEAR(se.values[k], std::sqrt(se.covariance(k, k)), 1e-12);
    }
    EXPECT_LT((se.covariance - se.covariance.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}
