#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ruot/density.hpp"
#include "ruot/rng.hpp"

using namespace ruot;

namespace {

double direct_sum(const Eigen::MatrixXd& c, double h, const Eigen::VectorXd& x) {
    const double d = static_cast<double>(c.rows());
    double s = 0.0;
    for (Eigen::Index i = 0; i < c.cols(); ++i)
        s += std::exp(-(c.col(i) - x).squaredNorm() / (2 * h * h)) / std::pow(2 * std::numbers::pi * h * h, d / 2);
    return s / static_cast<double>(c.cols());
}

}  // namespace

TEST(Kde, SingleCenterNormalizer) {
    Density den = fit_kde(Eigen::MatrixXd::Zero(1, 1), 0.3);
    EXPECT_NEAR(density_log_eval(den, Eigen::VectorXd::Zero(1)), -0.5 * std::log(2 * std::numbers::pi * 0.09), 1e-14);
}

TEST(Kde, Symmetric) {
    Eigen::MatrixXd c(2, 2);
    c << 1.0, -1.0, 0.5, -0.5;
    Density den = fit_kde(c, 0.7);
    Rng rng(1);
    for (int k = 0; k < 20; ++k) {
        Eigen::VectorXd x = rng.normal_matrix(2, 1).col(0);
        EXPECT_NEAR(density_log_eval(den, x), density_log_eval(den, -x), 1e-12);
    }
}

TEST(Kde, MatchesDirectSum) {
    Rng rng(4);
    Eigen::MatrixXd c = rng.normal_matrix(3, 50);
    Density den = fit_kde(c, 0.8);
    for (int k = 0; k < 100; ++k) {
        Eigen::VectorXd x = 1.5 * rng.normal_matrix(3, 1).col(0);
        double oracle = direct_sum(c, 0.8, x);
        DensityValue v = density_eval(den, x);
        EXPECT_NEAR(v.pdf, oracle, 1e-12 * std::max(1.0, oracle));
        EXPECT_NEAR(v.log_pdf, std::log(oracle), 1e-10 * std::abs(std::log(oracle)));
    }
}

TEST(Kde, UnnormalizedSumScalesByCount) {
    Rng rng(4);
    Eigen::MatrixXd c = rng.normal_matrix(2, 12);
    Eigen::VectorXd x = rng.normal_matrix(2, 1).col(0);
    double avg = density_log_eval(fit_kde(c, 0.5), x);
    double sum = density_log_eval(fit_kde(c, 0.5, DensityNormalization::unnormalized_sum), x);
    EXPECT_NEAR(sum - avg, std::log(12.0), 1e-12);
}

TEST(Kde, FarQueryStaysFinite) {
    Density den = fit_kde(Eigen::MatrixXd::Zero(2, 3), 0.1);
    DensityValue v = density_eval(den, Eigen::VectorXd::Constant(2, 5.0));
    EXPECT_TRUE(std::isfinite(v.log_pdf));
    EXPECT_GE(v.pdf, 0.0);
    EXPECT_LT(v.log_pdf, -1000.0);
}

TEST(Kde, MaximumAtTheCenter) {
    Eigen::MatrixXd c(1, 1);
    c << 0.4;
    Density den = fit_kde(c, 0.2);
    double peak = density_eval(den, c.col(0)).pdf;
    for (double dx : {-0.1, -0.01, 0.01, 0.1}) EXPECT_LT(density_eval(den, c.col(0).array() + dx).pdf, peak);
}

TEST(Kde, IntegratesToOne) {
    Rng rng(6);
    Eigen::MatrixXd c1 = rng.normal_matrix(1, 10);
    Density d1 = fit_kde(c1, 0.4);
    const double h = 0.01;
    double s = 0.0;
    for (double x = -10; x <= 10; x += h) s += density_eval(d1, Eigen::VectorXd::Constant(1, x)).pdf * h;
    EXPECT_NEAR(s, 1.0, 1e-3);

    Eigen::MatrixXd c2 = rng.normal_matrix(2, 5);
    Density d2 = fit_kde(c2, 0.5);
    const double h2 = 0.05;
    double s2 = 0.0;
    Eigen::VectorXd q(2);
    for (q(0) = -7; q(0) <= 7; q(0) += h2)
        for (q(1) = -7; q(1) <= 7; q(1) += h2) s2 += density_eval(d2, q).pdf * h2 * h2;
    EXPECT_NEAR(s2, 1.0, 1e-3);
}

TEST(Kde, LogPdfIsLocallyLipschitz) {
    Rng rng(2);
    Density den = fit_kde(rng.normal_matrix(2, 20), 0.5);
    for (int k = 0; k < 50; ++k) {
        Eigen::VectorXd x = rng.normal_matrix(2, 1).col(0);
        Eigen::VectorXd dir = rng.normal_matrix(2, 1).col(0).normalized();
        double l0 = density_log_eval(den, x);
        double slope = std::abs(density_log_eval(den, x + 1e-4 * dir) - l0) / 1e-4;
        double small = std::abs(density_log_eval(den, x + 1e-6 * dir) - l0);
        EXPECT_LE(small, 2.0 * slope * 1e-6 + 1e-12);
    }
}

TEST(Kde, Errors) {
    EXPECT_THROW(fit_kde(Eigen::MatrixXd::Zero(1, 2), 0.0), ConfigError);
    EXPECT_THROW(fit_kde(Eigen::MatrixXd::Zero(1, 2), -1.0), ConfigError);
    EXPECT_THROW(fit_kde(Eigen::MatrixXd(1, 0), 1.0), UsageError);
    Density den = fit_kde(Eigen::MatrixXd::Zero(2, 2), 1.0);
    EXPECT_THROW(density_log_eval(den, Eigen::VectorXd::Zero(3)), ShapeError);
    EXPECT_EQ(density_normalization_from_string("unnormalized_sum"), DensityNormalization::unnormalized_sum);
    EXPECT_THROW(density_normalization_from_string("other"), ConfigError);
}
