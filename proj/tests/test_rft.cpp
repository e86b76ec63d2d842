#include <cmath>
#include <random>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <gtest/gtest.h>

#include "hk/rft.hpp"

using namespace hk;

namespace {

Eigen::MatrixXd random_group(Eigen::Index n, Eigen::Index subjects, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.5);
    Eigen::MatrixXd g(n, subjects);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = nd(rng);
    return g;
}

/// The rho2 closed form in 50-digit arithmetic.
double rho2_oracle(double h, int alpha, int beta, double sigma) {
    using R = boost::multiprecision::cpp_bin_float_50;
    const R a = alpha, b = beta, hh = h, s = sigma;
    const R pi = boost::math::constants::pi<R>();
    const R x = a * hh / b;
    const R g = boost::multiprecision::tgamma((a + b - 2) / 2) /
                (boost::multiprecision::tgamma(a / 2) * boost::multiprecision::tgamma(b / 2));
    const R v = g / (4 * pi * s * s) * pow(x, (a - 2) / 2) * pow(1 + x, -(a + b - 2) / 2) * ((b - 1) * x - (a - 1));
    return static_cast<double>(v);
}

const FieldGeometry kGeom{4000.0, 2, 20.0};

}  // namespace

// --- group statistic -------------------------------------------------------

TEST(GroupFStat, IdenticalGroupsGiveZero) {
    const auto g = random_group(50, 6, 1);
    const auto s = group_f_stat(g, g);
    EXPECT_EQ(s.values.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(s.n_infinite, 0);
}

TEST(GroupFStat, DegreesOfFreedom) {
    const auto s = group_f_stat(random_group(5, 26, 2), random_group(5, 20, 3));
    EXPECT_EQ(s.df.alpha, 1);
    EXPECT_EQ(s.df.beta, 44);
}

TEST(GroupFStat, HandComputedValue) {
    // Vertex 0: means 1 and 3, pooled variance (2 + 12) / 7 = 2, t = 2 / sqrt(2 (1/3 + 1/6)) = 2.
    Eigen::MatrixXd g1(2, 3), g2(2, 6);
    g1 << 0, 1, 2, 10, 11, 12;
    g2 << 1, 2, 2, 4, 4, 5, 7, 8, 8, 10, 10, 11;
    const auto s = group_f_stat(g1, g2);
    EXPECT_NEAR(s.t[0], 2.0, 1e-14);
    EXPECT_NEAR(s.values[0], 4.0, 1e-13);
    EXPECT_NEAR(s.t[1], -2.0, 1e-14);
    EXPECT_NEAR(s.values[1], 4.0, 1e-13);
    EXPECT_EQ(s.df.beta, 7);
}

TEST(GroupFStat, ZeroVarianceIsInfinite) {
    Eigen::MatrixXd g1 = Eigen::MatrixXd::Zero(3, 4), g2 = Eigen::MatrixXd::Ones(3, 4);
    g1(2, 0) = 0.5;
    const auto s = group_f_stat(g1, g2);
    EXPECT_TRUE(std::isinf(s.values[0]));
    EXPECT_TRUE(std::isinf(s.values[1]));
    EXPECT_TRUE(std::isfinite(s.values[2]));
    EXPECT_EQ(s.n_infinite, 2);
}

TEST(GroupFStat, ConstantShiftInvariance) {
    const auto g1 = random_group(40, 5, 4), g2 = random_group(40, 7, 5);
    const Eigen::VectorXd shift = random_group(40, 1, 6).col(0) * 10.0;
    const auto a = group_f_stat(g1, g2);
    const auto b = group_f_stat(g1.colwise() + shift, g2.colwise() + shift);
    EXPECT_LT((a.values - b.values).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(GroupFStat, SymmetricInGroupOrder) {
    const auto g1 = random_group(40, 5, 7), g2 = random_group(40, 9, 8);
    EXPECT_LT((group_f_stat(g1, g2).values - group_f_stat(g2, g1).values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GroupFStat, RejectsTinyGroups) {
    EXPECT_THROW(group_f_stat(random_group(3, 1, 9), random_group(3, 4, 10)), ArgumentError);
}

TEST(GroupFStat, FieldListsMustShareMesh) {
    std::vector<ScalarField> a{ScalarField(Eigen::VectorXd::Ones(3), 1), ScalarField(Eigen::VectorXd::Zero(3), 1)};
    std::vector<ScalarField> b{ScalarField(Eigen::VectorXd::Ones(3), 1), ScalarField(Eigen::VectorXd::Zero(3), 2)};
    EXPECT_THROW(group_f_stat(a, b), ValidationError);
}

// --- distributions ---------------------------------------------------------

TEST(IncompleteBeta, MatchesBoost) {
    for (double a : {0.5, 1.0, 3.5, 22.0})
        for (double b : {0.5, 2.0, 24.5})
            for (double x : {1e-6, 0.01, 0.3, 0.5, 0.77, 0.999})
                EXPECT_NEAR(incomplete_beta(a, b, x), boost::math::ibeta(a, b, x), 1e-13) << a << ' ' << b << ' ' << x;
}

TEST(FDistribution, CdfMatchesBoost) {
    for (auto df : {DegreesOfFreedom{1, 44}, {1, 49}, {2, 10}, {5, 3}}) {
        const boost::math::fisher_f_distribution<double> ref(df.alpha, df.beta);
        for (double h : {0.01, 0.5, 1.0, 4.0, 10.0, 30.0}) {
            EXPECT_NEAR(f_cdf(h, df), boost::math::cdf(ref, h), 1e-12);
            const double tail = boost::math::cdf(boost::math::complement(ref, h));
            EXPECT_NEAR(f_survival(h, df), tail, 1e-12 * std::max(tail, 1e-300) + 1e-300);
        }
    }
}

TEST(FDistribution, FarTailKeepsRelativeAccuracy) {
    const boost::math::fisher_f_distribution<double> ref(1, 44);
    const double tail = boost::math::cdf(boost::math::complement(ref, 400.0));
    EXPECT_NEAR(f_survival(400.0, {1, 44}) / tail, 1.0, 1e-10);
}

// --- EC densities ----------------------------------------------------------

TEST(EcDensity, Rho0AtZero) { EXPECT_EQ(ec_density_f(0.0, {1, 44}, 20.0).rho0, 1.0); }

TEST(EcDensity, Rho2ZeroCrossing) {
    EXPECT_NEAR(rho2_zero_crossing({2, 10}), 10.0 / 18.0, 1e-15);
    EXPECT_NEAR(ec_density_f(10.0 / 18.0, {2, 10}, 1.0).rho2, 0.0, 1e-15);
    EXPECT_LT(ec_density_f(0.5, {2, 10}, 1.0).rho2, 0.0);
    EXPECT_GT(ec_density_f(0.6, {2, 10}, 1.0).rho2, 0.0);
}

TEST(EcDensity, Rho2MatchesHighPrecisionOracle) {
    const double got = ec_density_f(10.0, {1, 44}, 20.0).rho2;
    const double ref = rho2_oracle(10.0, 1, 44, 20.0);
    EXPECT_NEAR(got / ref, 1.0, 1e-10);
    for (auto df : {DegreesOfFreedom{1, 49}, {2, 10}, {3, 30}, {7, 12}})
        for (double h : {0.2, 1.5, 6.0, 25.0}) {
            const double r = rho2_oracle(h, df.alpha, df.beta, 3.0);
            EXPECT_NEAR(ec_density_f(h, df, 3.0).rho2, r, 1e-10 * std::abs(r)) << df.alpha << ' ' << df.beta << ' ' << h;
        }
}

TEST(EcDensity, Rho2ScalesWithInverseSquareBandwidth) {
    for (double h : {0.3, 2.0, 9.0}) {
        const double a = ec_density_f(h, {1, 44}, 5.0).rho2, b = ec_density_f(h, {1, 44}, 10.0).rho2;
        EXPECT_NEAR(b, a / 4.0, 1e-15 * std::abs(a));
    }
}

TEST(EcDensity, Rho0IsSurvivalFunction) {
    double prev = 1.0;
    for (double h = 0.0; h < 200.0; h += 0.37) {
        const double r = ec_density_f(h, {1, 44}, 1.0).rho0;
        EXPECT_LE(r, prev);
        EXPECT_GE(r, 0.0);
        prev = r;
    }
    EXPECT_LT(ec_density_f(1e4, {1, 44}, 1.0).rho0, 1e-30);
}

TEST(EcDensity, RejectsBadInputs) {
    EXPECT_THROW(ec_density_f(-1.0, {1, 44}, 1.0), ArgumentError);
    EXPECT_THROW(ec_density_f(1.0, {0, 44}, 1.0), ArgumentError);
    EXPECT_THROW(ec_density_f(1.0, {1, 44}, 0.0), ArgumentError);
}

// --- corrected p-values and thresholds -------------------------------------

TEST(CorrectedPValue, VanishesForHugeThreshold) { EXPECT_LT(corrected_pvalue(1e4, kGeom, {1, 44}), 1e-6); }

TEST(CorrectedPValue, ClampedAtZeroThreshold) { EXPECT_EQ(corrected_pvalue(0.0, kGeom, {1, 44}), 1.0); }

TEST(CorrectedPValue, MonotoneTail) {
    const double start = rho2_zero_crossing({1, 44});
    // Past the peak of the expansion the p-value must decrease.
    double peak_h = start, peak_p = 0.0;
    for (double h = start; h < 50.0; h += 0.01) {
        const double p = ec_expansion(h, kGeom, {1, 44});
        if (p > peak_p) {
            peak_p = p;
            peak_h = h;
        }
    }
    double prev = 2.0;
    for (double h = peak_h; h < 200.0; h += 0.05) {
        const double p = corrected_pvalue(h, kGeom, {1, 44});
        EXPECT_LE(p, prev + 1e-15);
        prev = p;
    }
}

TEST(RftThreshold, RoundTrip) {
    for (auto df : {DegreesOfFreedom{1, 44}, {1, 49}, {1, 58}})
        for (double alpha : {0.05, 0.01})
            for (double area : {500.0, 4000.0, 60000.0}) {
                const FieldGeometry g{area, 2, 20.0};
                const double h = rft_threshold(alpha, g, df);
                const double p = corrected_pvalue(h, g, df);
                EXPECT_LE(p, alpha);
                EXPECT_GE(p, alpha - 1e-3);
            }
}

TEST(RftThreshold, SmallerAlphaGivesHigherThreshold) {
    EXPECT_GT(rft_threshold(0.01, kGeom, {1, 44}), rft_threshold(0.05, kGeom, {1, 44}));
}

TEST(RftThreshold, RejectsBadAlpha) {
    EXPECT_THROW(rft_threshold(0.0, kGeom, {1, 44}), ArgumentError);
    EXPECT_THROW(rft_threshold(1.0, kGeom, {1, 44}), ArgumentError);
}

TEST(Inference, SummaryExcludesInfiniteVertices) {
    StatField s;
    s.values.resize(5);
    s.values << 0.5, 100.0, std::numeric_limits<double>::infinity(), 2.0, 60.0;
    s.df = {1, 44};
    s.n_infinite = 1;
    const auto r = summarize_inference(s, 0.05, kGeom);
    EXPECT_EQ(r.n_exceeding, 2);
    EXPECT_DOUBLE_EQ(r.fraction_exceeding, 0.5);
    EXPECT_EQ(r.n_infinite, 1);
    EXPECT_DOUBLE_EQ(r.p_at_max, corrected_pvalue(100.0, kGeom, {1, 44}));
}
