#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ruot/config.hpp"
#include "ruot/dataset.hpp"
#include "ruot/dynamics.hpp"
#include "ruot/error.hpp"
#include "ruot/io.hpp"
#include "ruot/nets.hpp"
#include "ruot/rng.hpp"
#include "ruot/transport.hpp"

namespace ruot {

enum class EvalMode {
    all,      // predicted cloud against every real point at that time
    matched,  // real cloud subsampled to the predicted particle count, redrawn per repeat
};

inline EvalMode eval_mode_from_string(const std::string& s) {
    if (s == "all") return EvalMode::all;
    if (s == "matched") return EvalMode::matched;
    throw ConfigError("unknown evaluation mode '" + s + "'");
}

inline std::string to_string(EvalMode m) { return m == EvalMode::all ? "all" : "matched"; }

struct MetricRow {
    double time = 0.0;
    std::vector<double> w1, w2;  // one entry per repeat
    double w1_mean = 0.0, w1_std = 0.0, w2_mean = 0.0, w2_std = 0.0;
};

struct MetricsTable {
    std::vector<MetricRow> rows;  // snapshot times k >= 1
    std::size_t repeats = 0;
    std::uint64_t seed = 0;
    EvalMode mode = EvalMode::all;
};

/// A predicted cloud per snapshot time (index 0 included), weights normalized on use.
using Prediction = std::vector<WeightedCloud>;

namespace detail {

inline void mean_std(const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
}

}  // namespace detail

/// W1 and W2 between each predicted cloud and the real snapshot, for k >= 1.
inline MetricsTable evaluate_prediction(const Prediction& pred, const SnapshotDataset& data, EvalMode mode,
                                        std::size_t repeats, std::uint64_t seed) {
    data.validate();
    if (data.num_times() < 2) throw UsageError("evaluation needs at least two snapshot times");
    if (pred.size() != data.num_times()) throw ShapeError("prediction does not cover every snapshot time");
    if (repeats == 0) throw UsageError("evaluation needs at least one repeat");
    MetricsTable table;
    table.repeats = repeats;
    table.seed = seed;
    table.mode = mode;
    for (std::size_t k = 1; k < data.num_times(); ++k) {
        MetricRow row;
        row.time = data.times[k];
        for (std::size_t r = 0; r < repeats; ++r) {
            Rng rng(derive_seed(seed, seed_tag::eval, k * 1000003ULL + r));
            Eigen::MatrixXd real = mode == EvalMode::matched ? subsample_columns(data.clouds[k], pred[k].size(), rng)
                                                             : data.clouds[k];
            WeightedCloud rc = WeightedCloud::uniform(real);
            row.w1.push_back(wasserstein(pred[k], rc, 1).distance);
            row.w2.push_back(wasserstein(pred[k], rc, 2).distance);
        }
        detail::mean_std(row.w1, row.w1_mean, row.w1_std);
        detail::mean_std(row.w2, row.w2_mean, row.w2_std);
        table.rows.push_back(std::move(row));
    }
    return table;
}

/**
 * Pushes every initial point forward with the learned ODE and compares against the data.
 * Weights come from the growth ODE; `weighted = false` scores positions with uniform weights.
 */
inline Prediction predict(const RuotNets& nets, const SnapshotDataset& data, std::size_t steps_per_unit,
                          bool weighted = true) {
    nets.check();
    if (nets.state_dim() != data.dim) throw ShapeError("network state dimension does not match the data");
    if (steps_per_unit == 0) throw ConfigError("steps_per_unit_time must be positive");
    TimeGrid grid{0.0, static_cast<double>(data.num_times() - 1), steps_per_unit * (data.num_times() - 1)};
    Trajectory traj = integrate(nets.velocity, nets.growth, uniform_particles(data.clouds[0]), grid);
    Prediction pred;
    for (std::size_t k = 0; k < data.num_times(); ++k) {
        std::size_t node = traj.node_at(static_cast<double>(k));
        if (weighted)
            pred.push_back({traj.positions[node], traj.normalized_weights(node)});
        else
            pred.push_back(WeightedCloud::uniform(traj.positions[node]));
    }
    return pred;
}

inline MetricsTable evaluate_model(const RuotNets& nets, const SnapshotDataset& data, const TrainConfig& cfg,
                                   std::size_t repeats, bool weighted = true) {
    return evaluate_prediction(predict(nets, data, cfg.steps_per_unit_time, weighted), data,
                               eval_mode_from_string(cfg.eval_mode), repeats, cfg.seed);
}

/// The data itself as the prediction; every distance is zero in mode `all`.
inline Prediction identity_prediction(const SnapshotDataset& data) {
    Prediction pred;
    for (const auto& c : data.clouds) pred.push_back(WeightedCloud::uniform(c));
    return pred;
}

inline std::string metrics_to_csv(const MetricsTable& t) {
    std::string out = "time,metric,mean,std\n";
    for (const auto& r : t.rows) {
        for (int which = 1; which <= 2; ++which) {
            detail::append_double(out, r.time);
            out += which == 1 ? ",W1," : ",W2,";
            detail::append_double(out, which == 1 ? r.w1_mean : r.w2_mean);
            out += ',';
            detail::append_double(out, which == 1 ? r.w1_std : r.w2_std);
            out += '\n';
        }
    }
    return out;
}

inline std::string metrics_to_text(const MetricsTable& t) {
    std::ostringstream os;
    os << "mode " << to_string(t.mode) << ", " << t.repeats << " repeat(s)\n";
    os << std::setw(8) << "time" << std::setw(22) << "W1" << std::setw(22) << "W2" << "\n";
    os << std::fixed << std::setprecision(4);
    for (const auto& r : t.rows) {
        std::ostringstream w1, w2;
        w1 << std::fixed << std::setprecision(4) << r.w1_mean << " +- " << r.w1_std;
        w2 << std::fixed << std::setprecision(4) << r.w2_mean << " +- " << r.w2_std;
        os << std::setw(8) << std::setprecision(1) << r.time << std::setw(22) << w1.str() << std::setw(22) << w2.str()
           << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------------------------
// Potential landscape

/// U = -s on a tensor grid over one or two state coordinates; the others are held at `base`.
struct LandscapeGrid {
    std::vector<std::size_t> axes;
    std::vector<double> lower, upper;
    std::vector<std::size_t> resolution;
    double t = 0.0;
    Eigen::VectorXd base;
    std::vector<double> values;  // flat index i0 + resolution[0] * i1

    std::size_t size() const { return values.size(); }

    double coordinate(std::size_t axis, std::size_t i) const {
        return lower[axis] + (upper[axis] - lower[axis]) * static_cast<double>(i) / static_cast<double>(resolution[axis] - 1);
    }

    /// Full state vector of grid node (i0, i1).
    Eigen::VectorXd node(std::size_t i0, std::size_t i1 = 0) const {
        Eigen::VectorXd x = base;
        x(static_cast<Eigen::Index>(axes[0])) = coordinate(0, i0);
        if (axes.size() == 2) x(static_cast<Eigen::Index>(axes[1])) = coordinate(1, i1);
        return x;
    }

    double value(std::size_t i0, std::size_t i1 = 0) const { return values[i0 + resolution[0] * i1]; }
};

inline LandscapeGrid landscape_grid(const Mlp& s_net, const std::vector<double>& lower, const std::vector<double>& upper,
                                    const std::vector<std::size_t>& resolution, double t,
                                    std::vector<std::size_t> axes = {}, Eigen::VectorXd base = {}) {
    const std::size_t d = s_net.state_dim();
    if (s_net.output_dim() != 1) throw ShapeError("landscape needs a scalar score network");
    const std::size_t n = lower.size();
    if (n == 0 || n > 2 || upper.size() != n || resolution.size() != n)
        throw UsageError("landscape needs matching bounds and resolution for one or two axes");
    if (axes.empty())
        for (std::size_t a = 0; a < n; ++a) axes.push_back(a);
    if (axes.size() != n) throw UsageError("landscape axes do not match the bounds");
    for (std::size_t a = 0; a < n; ++a) {
        if (axes[a] >= d) throw UsageError("landscape axis " + std::to_string(axes[a]) + " out of range");
        if (!(upper[a] > lower[a])) throw UsageError("landscape bounds are inverted on axis " + std::to_string(a));
        if (resolution[a] < 2) throw UsageError("landscape resolution must be at least 2 per axis");
    }
    if (n == 2 && axes[0] == axes[1]) throw UsageError("landscape axes must differ");
    if (base.size() == 0) base = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    if (static_cast<std::size_t>(base.size()) != d) throw ShapeError("landscape base point has the wrong dimension");

    LandscapeGrid g{axes, lower, upper, resolution, t, base, {}};
    const std::size_t r0 = resolution[0], r1 = n == 2 ? resolution[1] : 1;
    g.values.resize(r0 * r1);
    for (std::size_t i1 = 0; i1 < r1; ++i1)
        for (std::size_t i0 = 0; i0 < r0; ++i0) g.values[i0 + r0 * i1] = -mlp_forward(s_net, g.node(i0, i1), t)(0);
    return g;
}

/// CSV with columns x0[,x1],U named after the grid axes; rows in flat-index order.
inline std::string landscape_to_csv(const LandscapeGrid& g) {
    std::string out;
    for (std::size_t a = 0; a < g.axes.size(); ++a) out += "x" + std::to_string(g.axes[a]) + ",";
    out += "U\n";
    const std::size_t r0 = g.resolution[0], r1 = g.axes.size() == 2 ? g.resolution[1] : 1;
    for (std::size_t i1 = 0; i1 < r1; ++i1)
        for (std::size_t i0 = 0; i0 < r0; ++i0) {
            detail::append_double(out, g.coordinate(0, i0));
            out += ',';
            if (g.axes.size() == 2) {
                detail::append_double(out, g.coordinate(1, i1));
                out += ',';
            }
            detail::append_double(out, g.value(i0, i1));
            out += '\n';
        }
    return out;
}

inline nlohmann::json landscape_meta(const LandscapeGrid& g, double sigma) {
    return {{"axes", g.axes},
            {"lower", g.lower},
            {"upper", g.upper},
            {"resolution", g.resolution},
            {"t", g.t},
            {"sigma", sigma},
            {"base", std::vector<double>(g.base.data(), g.base.data() + g.base.size())}};
}

/// Flat index of the smallest U value.
inline std::size_t landscape_argmin(const LandscapeGrid& g) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < g.values.size(); ++i)
        if (g.values[i] < g.values[best]) best = i;
    return best;
}

}  // namespace ruot
