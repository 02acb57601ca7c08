#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ruot/error.hpp"
#include "ruot/mlp.hpp"
#include "ruot/nets.hpp"
#include "ruot/penalty.hpp"
#include "ruot/rng.hpp"

namespace ruot {

struct TimeGrid {
    double t_start = 0.0;
    double t_end = 1.0;
    std::size_t steps = 1;

    void validate() const {
        if (!(t_end > t_start)) throw ConfigError("time grid requires t_end > t_start");
        if (steps == 0) throw ConfigError("time grid requires at least one step");
    }

    double step() const { return (t_end - t_start) / static_cast<double>(steps); }
    double time(std::size_t n) const { return t_start + step() * static_cast<double>(n); }
    std::size_t num_nodes() const { return steps + 1; }
};

/// Constant diffusion coefficient sigma.
struct SigmaSchedule {
    double value = 0.0;

    double at(double) const { return value; }
    /// (d sigma^2 / dt) / sigma^2; identically zero for a constant schedule.
    double log_sq_rate(double) const { return 0.0; }
};

/// Initial particles: positions (d x N) and log-weights (N).
struct ParticleSet {
    Eigen::MatrixXd positions;
    Eigen::VectorXd log_weights;

    Eigen::Index size() const { return positions.cols(); }
};

/// Particles with equal initial mass 1/N.
inline ParticleSet uniform_particles(const Eigen::MatrixXd& positions) {
    auto n = positions.cols();
    if (n == 0) throw UsageError("particle set is empty");
    return {positions, Eigen::VectorXd::Constant(n, -std::log(static_cast<double>(n)))};
}

struct Trajectory {
    std::vector<double> times;
    std::vector<Eigen::MatrixXd> positions;    // [node]: d x N
    std::vector<Eigen::VectorXd> log_weights;  // [node]: N; empty for position-only paths
    Eigen::VectorXd action;                    // per particle; filled by accumulate_action

    std::size_t num_nodes() const { return times.size(); }
    Eigen::Index num_particles() const { return positions.empty() ? 0 : positions.front().cols(); }
    Eigen::Index dim() const { return positions.empty() ? 0 : positions.front().rows(); }

    /// Index of the node at time t (tolerance 1e-9).
    std::size_t node_at(double t) const {
        for (std::size_t n = 0; n < times.size(); ++n)
            if (std::abs(times[n] - t) <= 1e-9) return n;
        throw UsageError("trajectory has no node at time " + std::to_string(t));
    }

    /// Normalized particle weights at a node.
    Eigen::VectorXd normalized_weights(std::size_t node) const {
        const auto& lw = log_weights.at(node);
        double m = lw.maxCoeff();
        Eigen::VectorXd w = (lw.array() - m).exp().matrix();
        return w / w.sum();
    }
};

/// Adjoints of a trajectory's recorded states, one entry per node.
struct TrajectoryAdjoint {
    std::vector<Eigen::MatrixXd> positions;
    std::vector<Eigen::VectorXd> log_weights;

    static TrajectoryAdjoint zeros(const Trajectory& traj) {
        TrajectoryAdjoint a;
        for (std::size_t n = 0; n < traj.num_nodes(); ++n) {
            a.positions.push_back(Eigen::MatrixXd::Zero(traj.dim(), traj.num_particles()));
            a.log_weights.push_back(Eigen::VectorXd::Zero(traj.num_particles()));
        }
        return a;
    }
};

namespace detail {

inline void check_finite_state(const Eigen::MatrixXd& x, const Eigen::VectorXd* lw, std::size_t step, double t) {
    if (!x.allFinite() || (lw && !lw->allFinite()))
        throw NumericError("non-finite state during integration at step " + std::to_string(step) +
                           " (t=" + std::to_string(t) + ")");
}

inline void check_dims(const Mlp& v, const Mlp& g, Eigen::Index d) {
    if (static_cast<Eigen::Index>(v.state_dim()) != d || static_cast<Eigen::Index>(v.output_dim()) != d)
        throw ShapeError("velocity network does not match particle dimension " + std::to_string(d));
    if (static_cast<Eigen::Index>(g.state_dim()) != d || g.output_dim() != 1)
        throw ShapeError("growth network must map the particle dimension to a scalar");
}

}  // namespace detail

/**
 * Classical RK4 on dx/dt = v(x,t), d(log w)/dt = g(x,t), recording every grid node.
 */
inline Trajectory integrate(const Mlp& v, const Mlp& g, const ParticleSet& x0, const TimeGrid& grid) {
    grid.validate();
    const Eigen::Index d = x0.positions.rows();
    detail::check_dims(v, g, d);
    if (x0.log_weights.size() != x0.positions.cols()) throw ShapeError("log-weight count does not match particles");

    const double h = grid.step();
    Trajectory traj;
    traj.times.reserve(grid.num_nodes());
    traj.positions.reserve(grid.num_nodes());
    traj.log_weights.reserve(grid.num_nodes());
    traj.times.push_back(grid.t_start);
    traj.positions.push_back(x0.positions);
    traj.log_weights.push_back(x0.log_weights);
    detail::check_finite_state(x0.positions, &x0.log_weights, 0, grid.t_start);

    Eigen::MatrixXd x = x0.positions;
    Eigen::VectorXd lw = x0.log_weights;
    for (std::size_t n = 0; n < grid.steps; ++n) {
        const double t = grid.time(n);
        auto in1 = mlp_input(x, t);
        Eigen::MatrixXd k1 = mlp_apply(v, in1);
        Eigen::VectorXd q1 = mlp_apply(g, in1).row(0).transpose();
        auto in2 = mlp_input(x + 0.5 * h * k1, t + 0.5 * h);
        Eigen::MatrixXd k2 = mlp_apply(v, in2);
        Eigen::VectorXd q2 = mlp_apply(g, in2).row(0).transpose();
        auto in3 = mlp_input(x + 0.5 * h * k2, t + 0.5 * h);
        Eigen::MatrixXd k3 = mlp_apply(v, in3);
        Eigen::VectorXd q3 = mlp_apply(g, in3).row(0).transpose();
        auto in4 = mlp_input(x + h * k3, t + h);
        Eigen::MatrixXd k4 = mlp_apply(v, in4);
        Eigen::VectorXd q4 = mlp_apply(g, in4).row(0).transpose();
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        lw += (h / 6.0) * (q1 + 2.0 * q2 + 2.0 * q3 + q4);
        const double t_next = (n + 1 == grid.steps) ? grid.t_end : grid.time(n + 1);
        detail::check_finite_state(x, &lw, n + 1, t_next);
        traj.times.push_back(t_next);
        traj.positions.push_back(x);
        traj.log_weights.push_back(lw);
    }
    return traj;
}

/**
 * Reverse sweep through the RK4 steps of `integrate` (discretize-then-optimize).
 *
 * Stage activations are recomputed one step at a time, so memory is proportional to the
 * number of recorded nodes. `adj` holds the direct loss sensitivities at each node and is
 * consumed. Parameter gradients are accumulated into `grad_v` / `grad_g`.
 */
inline void integrate_backward(const Mlp& v, const Mlp& g, const Trajectory& traj, TrajectoryAdjoint adj,
                               ParamGradient& grad_v, ParamGradient& grad_g, Eigen::MatrixXd* x0_adj = nullptr) {
    const std::size_t nodes = traj.num_nodes();
    if (adj.positions.size() != nodes || adj.log_weights.size() != nodes)
        throw ShapeError("trajectory adjoint does not match trajectory length");
    const Eigen::Index d = traj.dim();
    const std::vector<std::size_t> none;
    MlpTape tv[4], tg[4];
    Eigen::MatrixXd in_adj_v, in_adj_g;

    for (std::size_t n = nodes - 1; n-- > 0;) {
        const double t = traj.times[n];
        const double h = traj.times[n + 1] - t;
        const Eigen::MatrixXd& x = traj.positions[n];

        // Recompute the stage inputs of step n.
        const double stage_t[4] = {t, t + 0.5 * h, t + 0.5 * h, t + h};
        const double stage_c[4] = {0.0, 0.5 * h, 0.5 * h, h};
        Eigen::MatrixXd k_prev;
        for (int s = 0; s < 4; ++s) {
            Eigen::MatrixXd y = s == 0 ? x : Eigen::MatrixXd(x + stage_c[s] * k_prev);
            auto in = mlp_input(y, stage_t[s]);
            mlp_forward_tape(v, in, none, tv[s]);
            mlp_forward_tape(g, in, none, tg[s]);
            k_prev = tv[s].output;
        }

        const Eigen::MatrixXd xbar_next = adj.positions[n + 1];
        const Eigen::VectorXd lbar_next = adj.log_weights[n + 1];
        const double b[4] = {h / 6.0, h / 3.0, h / 3.0, h / 6.0};
        Eigen::MatrixXd ybar_later;  // adjoint of the next stage's input state
        Eigen::MatrixXd xbar_total = xbar_next;
        for (int s = 3; s >= 0; --s) {
            Eigen::MatrixXd kbar = b[s] * xbar_next;
            if (s < 3) kbar += stage_c[s + 1] * ybar_later;
            Eigen::MatrixXd qbar = (b[s] * lbar_next).transpose();
            mlp_backward(v, tv[s], &kbar, nullptr, grad_v, &in_adj_v);
            mlp_backward(g, tg[s], &qbar, nullptr, grad_g, &in_adj_g);
            ybar_later = in_adj_v.topRows(d) + in_adj_g.topRows(d);
            xbar_total += ybar_later;
        }
        adj.positions[n] += xbar_total;
        adj.log_weights[n] += lbar_next;
    }
    if (x0_adj) *x0_adj = adj.positions[0];
}

/// Trapezoidal quadrature weights on the trajectory's node times.
inline Eigen::VectorXd trapezoid_weights(const std::vector<double>& times) {
    const auto n = static_cast<Eigen::Index>(times.size());
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        double h = times[static_cast<std::size_t>(i + 1)] - times[static_cast<std::size_t>(i)];
        c(i) += 0.5 * h;
        c(i + 1) += 0.5 * h;
    }
    return c;
}

namespace detail {

/// Action integrand per particle at one node (before the w(t) weight); optionally backpropagates.
inline Eigen::VectorXd action_integrand(const RuotNets& nets, const Eigen::MatrixXd& x, double t,
                                        const SigmaSchedule& sigma, const GrowthPenalty& penalty,
                                        const Eigen::VectorXd* weight_scale, NetGrads* grads, Eigen::MatrixXd* x_adj) {
    const Eigen::Index N = x.cols();
    const Eigen::Index d = x.rows();
    auto in = mlp_input(x, t);
    auto dirs = state_directions(nets.score);
    const std::vector<std::size_t> none;
    MlpTape tv, tg, ts;
    mlp_forward_tape(nets.velocity, in, none, tv);
    mlp_forward_tape(nets.growth, in, none, tg);
    mlp_forward_tape(nets.score, in, dirs, ts);

    const double sig2 = sigma.at(t) * sigma.at(t);
    const double rate = sigma.log_sq_rate(t);
    Eigen::VectorXd f(N);
    Eigen::VectorXd dpsi(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        double gi = tg.output(0, i);
        double si = ts.output(0, i);
        double grad_s_sq = 0.0;
        for (Eigen::Index k = 0; k < d; ++k) grad_s_sq += ts.output_tangents[static_cast<std::size_t>(k)](0, i) *
                                                          ts.output_tangents[static_cast<std::size_t>(k)](0, i);
        double psi = growth_penalty_eval(penalty.kind, gi);
        if (grads) dpsi(i) = growth_penalty_derivative(penalty.kind, gi);
        f(i) = 0.5 * tv.output.col(i).squaredNorm() + 0.5 * grad_s_sq - (0.5 * sig2 + si) * gi - rate * si +
               penalty.alpha * psi;
    }
    if (!grads) return f;

    // q_i = d(loss)/d(f_i); the caller's scale includes quadrature weight, w(t) and 1/N.
    const Eigen::VectorXd& q = *weight_scale;
    Eigen::MatrixXd v_adj = tv.output * q.asDiagonal();
    Eigen::MatrixXd g_adj(1, N), s_adj(1, N);
    std::vector<Eigen::MatrixXd> s_tan_adj(static_cast<std::size_t>(d));
    for (Eigen::Index i = 0; i < N; ++i) {
        double gi = tg.output(0, i);
        double si = ts.output(0, i);
        g_adj(0, i) = q(i) * (-(0.5 * sig2 + si) + penalty.alpha * dpsi(i));
        s_adj(0, i) = q(i) * (-gi - rate);
    }
    for (Eigen::Index k = 0; k < d; ++k)
        s_tan_adj[static_cast<std::size_t>(k)] = ts.output_tangents[static_cast<std::size_t>(k)] * q.asDiagonal();

    Eigen::MatrixXd av, ag, as;
    mlp_backward(nets.velocity, tv, &v_adj, nullptr, grads->velocity, &av);
    mlp_backward(nets.growth, tg, &g_adj, nullptr, grads->growth, &ag);
    mlp_backward(nets.score, ts, &s_adj, &s_tan_adj, grads->score, &as);
    if (x_adj) *x_adj = av.topRows(d) + ag.topRows(d) + as.topRows(d);
    return f;
}

}  // namespace detail

/**
 * Monte-Carlo estimate of the weighted action
 *   mean_i  int [ |v|^2/2 + |grad s|^2/2 - (sigma^2/2 + s) g - ((sigma^2)'/sigma^2) s + alpha Psi(g) ] w_i(t) dt
 * with w_i(t) = exp(log w_i(t) - log w_i(t_start)), trapezoidal in time.
 * Per-particle values are stored in `traj.action`.
 */
inline double accumulate_action(Trajectory& traj, const RuotNets& nets, const SigmaSchedule& sigma,
                                const GrowthPenalty& penalty) {
    if (traj.log_weights.size() != traj.num_nodes()) throw UsageError("trajectory lacks log-weights");
    if (static_cast<Eigen::Index>(nets.velocity.state_dim()) != traj.dim())
        throw UsageError("trajectory dimension does not match the networks");
    const Eigen::VectorXd c = trapezoid_weights(traj.times);
    const Eigen::Index N = traj.num_particles();
    Eigen::VectorXd per_particle = Eigen::VectorXd::Zero(N);
    for (std::size_t n = 0; n < traj.num_nodes(); ++n) {
        Eigen::VectorXd f = detail::action_integrand(nets, traj.positions[n], traj.times[n], sigma, penalty, nullptr,
                                                     nullptr, nullptr);
        Eigen::VectorXd w = (traj.log_weights[n] - traj.log_weights[0]).array().exp().matrix();
        per_particle += c(static_cast<Eigen::Index>(n)) * f.cwiseProduct(w);
    }
    traj.action = per_particle;
    double mean = per_particle.mean();
    if (!std::isfinite(mean)) throw NumericError("action is not finite");
    return mean;
}

inline double accumulate_action(const Trajectory& traj, const RuotNets& nets, const SigmaSchedule& sigma,
                                const GrowthPenalty& penalty) {
    Trajectory copy = traj;
    return accumulate_action(copy, nets, sigma, penalty);
}

/**
 * Action value plus its sensitivities: direct parameter gradients go to `grads`, state
 * sensitivities (scaled by `scale`) are added to `adj` for the trajectory reverse sweep.
 */
inline double accumulate_action_grad(const Trajectory& traj, const RuotNets& nets, const SigmaSchedule& sigma,
                                     const GrowthPenalty& penalty, double scale, NetGrads& grads,
                                     TrajectoryAdjoint& adj) {
    if (traj.log_weights.size() != traj.num_nodes()) throw UsageError("trajectory lacks log-weights");
    const Eigen::VectorXd c = trapezoid_weights(traj.times);
    const Eigen::Index N = traj.num_particles();
    double total = 0.0;
    Eigen::MatrixXd x_adj;
    for (std::size_t n = 0; n < traj.num_nodes(); ++n) {
        Eigen::VectorXd w = (traj.log_weights[n] - traj.log_weights[0]).array().exp().matrix();
        Eigen::VectorXd q = (scale * c(static_cast<Eigen::Index>(n)) / static_cast<double>(N)) * w;
        Eigen::VectorXd f = detail::action_integrand(nets, traj.positions[n], traj.times[n], sigma, penalty, &q,
                                                     &grads, &x_adj);
        total += c(static_cast<Eigen::Index>(n)) * f.dot(w);
        adj.positions[n] += x_adj;
        // d(f w)/d(log w_n) = f w for nodes after the first (log w_0 is fixed data).
        if (n > 0) adj.log_weights[n] += q.cwiseProduct(f);
    }
    total /= static_cast<double>(N);
    if (!std::isfinite(total)) throw NumericError("action is not finite");
    return total;
}

/**
 * Euler-Maruyama sampling of dX = (v + grad s) dt + sigma dW, i.e. the SDE drift
 * b = v + (sigma^2/2) grad log p with s = (sigma^2/2) log p.
 */
inline Trajectory sample_sde(const Mlp& v, const Mlp& s, const SigmaSchedule& sigma, const Eigen::MatrixXd& x0,
                             const TimeGrid& grid, std::uint64_t seed) {
    grid.validate();
    if (sigma.value < 0.0) throw ConfigError("sigma must be nonnegative");
    const Eigen::Index d = x0.rows();
    if (static_cast<Eigen::Index>(v.state_dim()) != d || static_cast<Eigen::Index>(s.state_dim()) != d)
        throw ShapeError("network state dimension does not match particles");
    const double h = grid.step();
    Rng rng(seed);
    Trajectory traj;
    traj.times.push_back(grid.t_start);
    traj.positions.push_back(x0);
    Eigen::MatrixXd x = x0;
    for (std::size_t n = 0; n < grid.steps; ++n) {
        const double t = grid.time(n);
        Eigen::MatrixXd drift = mlp_forward_batch(v, x, t) + mlp_state_gradient(s, x, t);
        x += h * drift;
        if (sigma.at(t) > 0.0) x += (sigma.at(t) * std::sqrt(h)) * rng.normal_matrix(d, x.cols());
        const double t_next = (n + 1 == grid.steps) ? grid.t_end : grid.time(n + 1);
        detail::check_finite_state(x, nullptr, n + 1, t_next);
        traj.times.push_back(t_next);
        traj.positions.push_back(x);
    }
    return traj;
}

}  // namespace ruot
