#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "ruot/error.hpp"

namespace ruot {

enum class DensityNormalization { per_point_average, unnormalized_sum };

inline std::string to_string(DensityNormalization n) {
    return n == DensityNormalization::per_point_average ? "per_point_average" : "unnormalized_sum";
}

inline DensityNormalization density_normalization_from_string(std::string_view name) {
    if (name == "per_point_average") return DensityNormalization::per_point_average;
    if (name == "unnormalized_sum") return DensityNormalization::unnormalized_sum;
    throw ConfigError("unknown density normalization '" + std::string(name) + "'");
}

/// Isotropic Gaussian kernel estimate: one component N(c_i, bandwidth^2 I) per center.
struct Density {
    Eigen::MatrixXd centers;  // d x N
    double bandwidth = 1.0;
    DensityNormalization normalization = DensityNormalization::per_point_average;

    Eigen::Index dim() const { return centers.rows(); }
};

struct DensityValue {
    double pdf = 0.0;
    double log_pdf = 0.0;
};

inline Density fit_kde(const Eigen::MatrixXd& points, double bandwidth,
                       DensityNormalization norm = DensityNormalization::per_point_average) {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw ConfigError("KDE bandwidth must be positive");
    if (points.cols() == 0 || points.rows() == 0) throw UsageError("KDE needs at least one point");
    return {points, bandwidth, norm};
}

inline double density_log_eval(const Density& den, const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (x.size() != den.dim()) throw ShapeError("density query dimension does not match the centers");
    const Eigen::Index n = den.centers.cols();
    const double inv = 1.0 / (2.0 * den.bandwidth * den.bandwidth);
    double m = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd e(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        e(i) = -(den.centers.col(i) - x).squaredNorm() * inv;
        m = std::max(m, e(i));
    }
    double acc = (e.array() - m).exp().sum();
    double log_norm = -0.5 * static_cast<double>(den.dim()) *
                      std::log(2.0 * std::numbers::pi * den.bandwidth * den.bandwidth);
    double lp = m + std::log(acc) + log_norm;
    if (den.normalization == DensityNormalization::per_point_average) lp -= std::log(static_cast<double>(n));
    return lp;
}

inline DensityValue density_eval(const Density& den, const Eigen::Ref<const Eigen::VectorXd>& x) {
    double lp = density_log_eval(den, x);
    return {std::exp(lp), lp};
}

/// log p at each column of `xs`.
inline Eigen::VectorXd density_log_batch(const Density& den, const Eigen::MatrixXd& xs) {
    Eigen::VectorXd out(xs.cols());
    for (Eigen::Index j = 0; j < xs.cols(); ++j) out(j) = density_log_eval(den, xs.col(j));
    return out;
}

}  // namespace ruot
