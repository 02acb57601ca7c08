#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "ruot/dataset.hpp"
#include "ruot/error.hpp"
#include "ruot/rng.hpp"

namespace ruot {

/// Three-gene toggle switch with an inhibitor gene and X2-driven cell division.
struct GrnParams {
    double alpha1 = 0.5, alpha2 = 1.0, alpha3 = 1.0;
    double gamma1 = 0.5, gamma2 = 1.0, gamma3 = 10.0;
    double delta1 = 0.4, delta2 = 0.4, delta3 = 0.4;
    double eta1 = 0.05, eta2 = 0.05, eta3 = 0.01;
    double eta_d = 0.014;
    double beta = 1.0;
    double alpha_g = 2.0;  // division probability scale, in percent per step
    double dt = 1.0;
    std::vector<double> record_times{0.0, 8.0, 16.0, 24.0, 32.0};
    /// Initial cluster means and per-coordinate standard deviation.
    Eigen::Vector3d cluster_a{2.0, 0.2, 0.0};
    Eigen::Vector3d cluster_b{0.0, 0.0, 2.0};
    double init_std = 0.1;

    void validate() const {
        if (!(dt > 0.0)) throw ConfigError("GRN dt must be positive");
        if (alpha_g < 0.0) throw ConfigError("GRN alpha_g must be nonnegative");
        if (init_std < 0.0) throw ConfigError("GRN init_std must be nonnegative");
        if (record_times.empty()) throw ConfigError("GRN needs at least one record time");
        for (std::size_t k = 0; k < record_times.size(); ++k) {
            if (record_times[k] < 0.0) throw ConfigError("GRN record times must be nonnegative");
            if (k > 0 && !(record_times[k] > record_times[k - 1]))
                throw ConfigError("GRN record times must be increasing");
        }
    }
};

/// Deterministic part of the GRN vector field.
inline Eigen::Vector3d grn_drift(const GrnParams& p, const Eigen::Vector3d& x) {
    const double x1 = x(0) * x(0), x2 = x(1) * x(1), x3 = x(2) * x(2);
    Eigen::Vector3d f;
    f(0) = (p.alpha1 * x1 + p.beta) / (1.0 + p.alpha1 * x1 + p.gamma2 * x2 + p.gamma3 * x3 + p.beta) - p.delta1 * x(0);
    f(1) = (p.alpha2 * x2 + p.beta) / (1.0 + p.gamma1 * x1 + p.alpha2 * x2 + p.gamma3 * x3 + p.beta) - p.delta2 * x(1);
    f(2) = p.alpha3 * x3 / (1.0 + p.alpha3 * x3) - p.delta3 * x(2);
    return f;
}

/// Per-step division probability alpha_g X2^2/(1+X2^2) percent.
inline double grn_division_probability(const GrnParams& p, double x2) {
    return p.alpha_g * (x2 * x2) / (1.0 + x2 * x2) / 100.0;
}

struct GrnResult {
    SnapshotDataset data;  // 3-D, times re-indexed to 0..K-1
    /// [k][cell]: the cell's lineage divided since the previous record time.
    std::vector<std::vector<char>> divided;
};

/**
 * Euler-Maruyama simulation of the GRN with division. Negative expression is reset to 0
 * after every step and after every division perturbation.
 */
inline GrnResult simulate_grn(const GrnParams& p, std::size_t n0_per_cluster, std::uint64_t seed) {
    p.validate();
    if (n0_per_cluster == 0) throw UsageError("GRN needs at least one cell per cluster");
    Rng rng(seed);
    auto clip = [](Eigen::Vector3d& x) { x = x.cwiseMax(0.0); };

    std::vector<Eigen::Vector3d> cells;
    std::vector<char> flag;
    for (const Eigen::Vector3d& mean : {p.cluster_a, p.cluster_b}) {
        for (std::size_t i = 0; i < n0_per_cluster; ++i) {
            Eigen::Vector3d x;
            for (int j = 0; j < 3; ++j) x(j) = mean(j) + p.init_std * rng.normal();
            clip(x);
            cells.push_back(x);
            flag.push_back(0);
        }
    }

    GrnResult out;
    out.data.dim = 3;
    const Eigen::Vector3d eta{p.eta1, p.eta2, p.eta3};
    const double sqdt = std::sqrt(p.dt);
    const auto total_steps = static_cast<std::size_t>(std::llround(p.record_times.back() / p.dt));
    std::size_t next_record = 0;

    auto record = [&](std::size_t k) {
        Eigen::MatrixXd c(3, static_cast<Eigen::Index>(cells.size()));
        for (std::size_t i = 0; i < cells.size(); ++i) c.col(static_cast<Eigen::Index>(i)) = cells[i];
        out.data.times.push_back(static_cast<double>(k));
        out.data.clouds.push_back(std::move(c));
        out.divided.push_back(flag);
        std::fill(flag.begin(), flag.end(), 0);
    };

    for (std::size_t step = 0; step <= total_steps; ++step) {
        const double t = static_cast<double>(step) * p.dt;
        while (next_record < p.record_times.size() && std::abs(p.record_times[next_record] - t) <= 1e-9 * (1.0 + t)) {
            record(next_record);
            ++next_record;
        }
        if (step == total_steps) break;

        const std::size_t n = cells.size();
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::Vector3d f = grn_drift(p, cells[i]);
            for (int j = 0; j < 3; ++j) cells[i](j) += f(j) * p.dt + eta(j) * sqdt * rng.normal();
            clip(cells[i]);
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (rng.uniform() >= grn_division_probability(p, cells[i](1))) continue;
            Eigen::Vector3d parent = cells[i];
            Eigen::Vector3d a = parent, b = parent;
            for (int j = 0; j < 3; ++j) a(j) += p.eta_d * rng.normal();
            for (int j = 0; j < 3; ++j) b(j) += p.eta_d * rng.normal();
            clip(a);
            clip(b);
            cells[i] = a;
            flag[i] = 1;
            cells.push_back(b);
            flag.push_back(1);
        }
    }
    if (next_record != p.record_times.size())
        throw ConfigError("GRN record times are not multiples of dt");
    return out;
}

/// Component layout for the Gaussian-mixture benchmark, in the (x0, x1) plane.
struct GaussMixtureParams {
    std::vector<Eigen::Vector2d> initial_centers{{0.0, 0.0}, {0.0, 3.0}};
    std::vector<std::size_t> initial_counts{400, 100};
    std::vector<Eigen::Vector2d> final_centers{{0.0, 3.0}, {-2.0, -1.0}, {2.0, -1.0}};
    std::vector<std::size_t> final_counts{1000, 200, 200};
    double component_std = 0.3;
    double extra_std = 0.1;  // noise in coordinates beyond the first two

    void validate() const {
        if (initial_centers.size() != initial_counts.size() || final_centers.size() != final_counts.size())
            throw ConfigError("Gaussian mixture centers and counts differ in length");
        if (!(component_std > 0.0) || extra_std < 0.0) throw ConfigError("Gaussian mixture scales must be positive");
    }
};

/// Two snapshots: initial mixture (lower + upper) and final mixture (upper + two lower).
inline SnapshotDataset simulate_gaussian_mixture(std::size_t dim, std::uint64_t seed,
                                                 const GaussMixtureParams& p = {}) {
    if (dim < 2) throw UsageError("Gaussian mixture benchmark needs dim >= 2");
    p.validate();
    Rng rng(seed);
    auto draw = [&](const std::vector<Eigen::Vector2d>& centers, const std::vector<std::size_t>& counts) {
        std::size_t total = 0;
        for (auto c : counts) total += c;
        Eigen::MatrixXd m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(total));
        Eigen::Index col = 0;
        for (std::size_t c = 0; c < centers.size(); ++c) {
            for (std::size_t i = 0; i < counts[c]; ++i, ++col) {
                m(0, col) = centers[c](0) + p.component_std * rng.normal();
                m(1, col) = centers[c](1) + p.component_std * rng.normal();
                for (std::size_t j = 2; j < dim; ++j) m(static_cast<Eigen::Index>(j), col) = p.extra_std * rng.normal();
            }
        }
        return m;
    };
    SnapshotDataset data;
    data.dim = dim;
    data.times = {0.0, 1.0};
    data.clouds.push_back(draw(p.initial_centers, p.initial_counts));
    data.clouds.push_back(draw(p.final_centers, p.final_counts));
    return data;
}

}  // namespace ruot
