#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "hhflow/distributions.hpp"
#include "hhflow/rng.hpp"
#include "support/checks.hpp"

using namespace hhflow;

namespace {

double scalar(Tape& t, Var v) { return t.value(v).item(); }

DiagGaussian gaussian(Tape& t, std::vector<double> mu, std::vector<double> log_var) {
    return {t.constant(Tensor::vector(std::move(mu))), t.constant(Tensor::vector(std::move(log_var)))};
}

}  // namespace

TEST(SampleReparam, Examples) {
    Tape t;
    const Var z1 = sample_reparam(t, gaussian(t, {0, 0}, {0, 0}), t.constant(Tensor::vector({1.5, -0.5})));
    EXPECT_EQ(t.value(z1), Tensor::vector({1.5, -0.5}));
    const Var z2 = sample_reparam(t, gaussian(t, {2, 2}, {0, 0}), t.constant(Tensor::vector({0, 0})));
    EXPECT_EQ(t.value(z2), Tensor::vector({2, 2}));
    const Var z3 = sample_reparam(t, gaussian(t, {1}, {std::log(4.0)}), t.constant(Tensor::vector({1})));
    EXPECT_NEAR(t.value(z3)[0], 3.0, 1e-15);
    EXPECT_THROW(sample_reparam(t, gaussian(t, {1}, {0}), t.constant(Tensor::vector({1, 2}))), ShapeError);
}

TEST(SampleReparam, EmpiricalMomentsMatch) {
    const std::vector<double> mu = {0.5, -1.0, 2.0};
    const std::vector<double> lv = {0.0, std::log(0.25), std::log(3.0)};
    const std::size_t n = 1000000;
    Rng rng = make_stream(1, "eps");
    const Tensor eps = standard_normal(rng, n, 3);
    for (std::size_t j = 0; j < 3; ++j) {
        const double sd = std::exp(0.5 * lv[j]);
        double s = 0, s2 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = mu[j] + sd * eps.at(i, j);
            s += z;
            s2 += z * z;
        }
        const double mean = s / n, var = s2 / n - mean * mean;
        const double var_se = sd * sd * std::sqrt(2.0 / n);
        EXPECT_LT(std::abs(mean - mu[j]), 4 * sd / std::sqrt(double(n)));
        EXPECT_LT(std::abs(var - sd * sd), 4 * var_se);
    }
}

TEST(LogProbDiagGaussian, Examples) {
    Tape t;
    EXPECT_NEAR(scalar(t, log_prob_diag_gaussian(t, t.constant(Tensor::vector({0})), gaussian(t, {0}, {0}))),
                -0.9189385332, 1e-10);
    EXPECT_NEAR(scalar(t, log_prob_diag_gaussian(t, t.constant(Tensor::vector({1})), gaussian(t, {1}, {0}))),
                -0.9189385332, 1e-10);
    EXPECT_NEAR(
        scalar(t, log_prob_diag_gaussian(t, t.constant(Tensor::vector({0, 0})), gaussian(t, {1, -1}, {0, 0}))),
        -2.8378770664, 1e-10);
}

TEST(LogProbDiagGaussian, IntegratesToOneOnAGrid) {
    const double mu = 0.7, lv = std::log(0.3);
    const double h = 1e-3;
    double total = 0.0;
    for (double z = mu - 12.0; z <= mu + 12.0; z += h) {
        Tape t;
        total += std::exp(scalar(t, log_prob_diag_gaussian(t, t.constant(Tensor::vector({z})), gaussian(t, {mu}, {lv})))) * h;
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(LogProbStdNormal, Examples) {
    Tape t;
    EXPECT_NEAR(scalar(t, log_prob_std_normal(t, t.constant(Tensor::vector({0, 0})))), -1.8378770664, 1e-10);
    EXPECT_NEAR(scalar(t, log_prob_std_normal(t, t.constant(Tensor::vector({1, 1})))), -2.8378770664, 1e-10);
}

TEST(LogProbStdNormal, DependsOnlyOnSquaredNorm) {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const Tensor a = support::uniform_tensor(Shape{5}, rng);
        double r2 = 0;
        for (double x : a.data()) r2 += x * x;
        Tensor b(Shape{5}, 0.0);
        b[trial % 5] = std::sqrt(r2);
        Tape t;
        EXPECT_NEAR(scalar(t, log_prob_std_normal(t, t.constant(a))), scalar(t, log_prob_std_normal(t, t.constant(b))),
                    1e-12);
    }
}

TEST(KlDiagVsStd, Examples) {
    Tape t;
    EXPECT_EQ(scalar(t, kl_diag_vs_std(t, gaussian(t, {0, 0}, {0, 0}))), 0.0);
    EXPECT_NEAR(scalar(t, kl_diag_vs_std(t, gaussian(t, {1}, {0}))), 0.5, 1e-15);
}

TEST(KlDiagVsStd, MatchesMonteCarlo) {
    const std::vector<double> mu = {0.3, -0.7}, lv = {0.2, -0.4};
    Tape t;
    const double analytic = scalar(t, kl_diag_vs_std(t, gaussian(t, mu, lv)));
    const std::size_t n = 1000000;
    Rng rng = make_stream(2, "eps");
    const Tensor eps = standard_normal(rng, n, 2);
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double v = 0;
        for (std::size_t j = 0; j < 2; ++j) {
            const double e = eps.at(i, j);
            const double z = mu[j] + std::exp(0.5 * lv[j]) * e;
            v += (-0.5 * lv[j] - 0.5 * e * e) - (-0.5 * z * z);
        }
        s += v;
        s2 += v * v;
    }
    const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
    EXPECT_LT(std::abs(mean - analytic), 3 * se) << mean << " vs " << analytic;
}

TEST(KlDiagVsStd, NonNegativeAndZeroOnlyAtPrior) {
    Rng rng(9);
    for (int trial = 0; trial < 500; ++trial) {
        Tape t;
        const DiagGaussian q{t.constant(support::uniform_tensor(Shape{4}, rng)),
                             t.constant(support::uniform_tensor(Shape{4}, rng))};
        EXPECT_GT(scalar(t, kl_diag_vs_std(t, q)), 0.0);
    }
    Tape t;
    EXPECT_LE(std::abs(scalar(t, kl_diag_vs_std(t, gaussian(t, {0, 0, 0}, {0, 0, 0})))), 1e-12);
}

TEST(Bernoulli, Examples) {
    Tape t;
    EXPECT_NEAR(scalar(t, bernoulli_log_prob(t, t.constant(Tensor::vector({1})), t.constant(Tensor::vector({0.5})))),
                std::log(0.5), 1e-15);
    const double perfect = scalar(t, bernoulli_log_prob(t, t.constant(Tensor::vector({0, 1})),
                                                        t.constant(Tensor::vector({kProbEps, 1 - kProbEps}))));
    EXPECT_NEAR(perfect, 2 * std::log1p(-kProbEps), 1e-15);
    EXPECT_NEAR(scalar(t, bernoulli_log_prob(t, t.constant(Tensor::vector({1, 0, 1})),
                                             t.constant(Tensor::vector({0.9, 0.2, 0.7})))),
                -0.6851790109, 1e-10);
}

TEST(Bernoulli, RejectsNonBinaryObservations) {
    Tape t;
    EXPECT_THROW(bernoulli_log_prob(t, t.constant(Tensor::vector({0.5})), t.constant(Tensor::vector({0.5}))), Error);
}

TEST(Bernoulli, OutcomesSumToOne) {
    Rng rng(12);
    for (std::size_t d = 1; d <= 10; ++d) {
        const Tensor mean = support::uniform_tensor(Shape{d}, rng, 0.01, 0.99);
        double total = 0.0;
        for (std::size_t mask = 0; mask < (1u << d); ++mask) {
            Tensor x(Shape{d});
            for (std::size_t i = 0; i < d; ++i) x[i] = (mask >> i) & 1u ? 1.0 : 0.0;
            Tape t;
            total += std::exp(scalar(t, bernoulli_log_prob(t, t.constant(x), t.constant(mean))));
        }
        EXPECT_NEAR(total, 1.0, 1e-10) << "D = " << d;
    }
}

TEST(BoundedGaussian, Examples) {
    Tape t;
    const Var x = t.constant(Tensor::vector({0.3, 0.8}));
    const double lv_unit_density = std::log(1.0 / (2.0 * std::numbers::pi));
    EXPECT_NEAR(scalar(t, bounded_gaussian_log_prob(t, x, x, t.constant(Tensor(Shape{2}, lv_unit_density)))), 0.0,
                1e-14);
    EXPECT_NEAR(scalar(t, bounded_gaussian_log_prob(t, x, x, t.constant(Tensor(Shape{2}, 0.0)))), -2 * 0.9189385332,
                1e-10);

    const Var big = t.constant(Tensor(Shape{784}, 0.5));
    const double v = scalar(t, bounded_gaussian_log_prob(t, big, big, t.constant(Tensor(Shape{784}, std::log(0.01)))));
    EXPECT_NEAR(v, 784 * (-kHalfLog2Pi - 0.5 * std::log(0.01)), 1e-9);
    EXPECT_NEAR(v, 1084.8, 0.1);
}

TEST(BoundedGaussian, RejectsOutOfRange) {
    Tape t;
    const Var m = t.constant(Tensor::vector({0.5}));
    EXPECT_THROW(bounded_gaussian_log_prob(t, t.constant(Tensor::vector({1.2})), m, t.constant(Tensor::vector({0}))),
                 Error);
}

TEST(Likelihood, NamesRoundTrip) {
    for (auto k : {LikelihoodKind::bernoulli, LikelihoodKind::bounded_gaussian})
        EXPECT_EQ(parse_likelihood(likelihood_name(k)), k);
    EXPECT_THROW(parse_likelihood("poisson"), Error);
}
