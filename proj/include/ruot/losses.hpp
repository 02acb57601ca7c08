#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ruot/dataset.hpp"
#include "ruot/density.hpp"
#include "ruot/dynamics.hpp"
#include "ruot/error.hpp"
#include "ruot/mlp.hpp"
#include "ruot/nets.hpp"
#include "ruot/penalty.hpp"
#include "ruot/rng.hpp"
#include "ruot/transport.hpp"

namespace ruot {

// ---------------------------------------------------------------------------------------------
// Local mass matching

/// h_k: index of the nearest predicted particle for every real point, and the per-particle counts.
struct MassAssignment {
    std::vector<Eigen::Index> nearest;
    Eigen::VectorXd counts;
};

/// Exact nearest neighbour under squared Euclidean distance; ties go to the lowest particle index.
inline MassAssignment nearest_assignment(const Eigen::MatrixXd& real, const Eigen::MatrixXd& predicted) {
    if (real.cols() == 0 || predicted.cols() == 0) throw UsageError("mass matching needs nonempty clouds");
    if (real.rows() != predicted.rows()) throw ShapeError("mass matching: clouds have different dimensions");
    MassAssignment a;
    a.nearest.resize(static_cast<std::size_t>(real.cols()));
    a.counts = Eigen::VectorXd::Zero(predicted.cols());
    for (Eigen::Index r = 0; r < real.cols(); ++r) {
        double best = std::numeric_limits<double>::infinity();
        Eigen::Index arg = 0;
        for (Eigen::Index i = 0; i < predicted.cols(); ++i) {
            double d = (predicted.col(i) - real.col(r)).squaredNorm();
            if (d < best) {
                best = d;
                arg = i;
            }
        }
        a.nearest[static_cast<std::size_t>(r)] = arg;
        a.counts(arg) += 1.0;
    }
    return a;
}

/**
 * M_k = sum_i (w_i - card(h^-1(i)) / n0)^2 with unnormalized particle weights w_i.
 * If `grad_log_weights` is given it receives dM/d(log w_i).
 */
inline double mass_matching_loss(const Eigen::MatrixXd& real, const Eigen::MatrixXd& predicted,
                                 const Eigen::VectorXd& weights, double n0,
                                 Eigen::VectorXd* grad_log_weights = nullptr) {
    if (weights.size() != predicted.cols()) throw ShapeError("mass matching: weight count does not match particles");
    if (!(n0 > 0.0)) throw UsageError("mass matching: reference count must be positive");
    MassAssignment a = nearest_assignment(real, predicted);
    Eigen::VectorXd dev = weights - a.counts / n0;
    if (grad_log_weights) *grad_log_weights = 2.0 * dev.cwiseProduct(weights);
    return dev.squaredNorm();
}

/// Reference count n0 defaults to the number of predicted particles.
inline double mass_matching_loss(const Eigen::MatrixXd& real, const Eigen::MatrixXd& predicted,
                                 const Eigen::VectorXd& weights) {
    return mass_matching_loss(real, predicted, weights, static_cast<double>(predicted.cols()));
}

// ---------------------------------------------------------------------------------------------
// Weighted OT term

/**
 * W2 between the real cloud (uniform) and the predicted cloud with weights softmax(log_weights).
 * Gradients use the optimal plan and target potentials held fixed.
 */
inline double weighted_w2_term(const Eigen::MatrixXd& real, const Eigen::MatrixXd& predicted,
                               const Eigen::VectorXd& log_weights, Eigen::MatrixXd* grad_positions = nullptr,
                               Eigen::VectorXd* grad_log_weights = nullptr) {
    if (log_weights.size() != predicted.cols()) throw ShapeError("OT term: weight count does not match particles");
    const double m = log_weights.maxCoeff();
    Eigen::VectorXd w = (log_weights.array() - m).exp().matrix();
    w /= w.sum();
    WeightedCloud src = WeightedCloud::uniform(real);
    WeightedCloud tgt{predicted, w};
    WassersteinResult r = wasserstein(src, tgt, 2);
    if (!grad_positions && !grad_log_weights) return r.distance;

    // d sqrt(C) = dC / (2 sqrt C); at C = 0 the distance is not differentiable, use zero.
    const double outer = r.distance > 1e-150 ? 0.5 / r.distance : 0.0;
    if (grad_positions) {
        const auto& pi = r.plan.coupling;
        Eigen::VectorXd col_mass = pi.colwise().sum().transpose();
        Eigen::MatrixXd pulled = real * pi;  // d x m: sum_i pi_ij y_i
        *grad_positions = (2.0 * outer) * (predicted * col_mass.asDiagonal() - pulled);
    }
    if (grad_log_weights) {
        const Eigen::VectorXd& beta = r.plan.target_potential;
        double mean_beta = w.dot(beta);
        *grad_log_weights = outer * w.cwiseProduct((beta.array() - mean_beta).matrix());
    }
    return r.distance;
}

// ---------------------------------------------------------------------------------------------
// Reconstruction loss

struct ReconTerms {
    double mass = 0.0;   // sum_k M_k
    double ot = 0.0;     // sum_k W2_k
    double value = 0.0;  // lambda_m * mass + lambda_d * ot
    std::vector<double> mass_k, w2_k;
};

/**
 * lambda_m sum_k M_k + lambda_d sum_k W2_k over snapshots k >= 1. Snapshot k is compared with
 * the trajectory node at time k. The mass reference count is the size of the first snapshot.
 * With `adj`, sensitivities multiplied by `scale` are added to the trajectory adjoint.
 * `ot_targets`, if nonempty, replaces snapshot k in the OT term by `ot_targets[k]`.
 */
inline ReconTerms recon_loss(const SnapshotDataset& data, const Trajectory& traj, double lambda_m, double lambda_d,
                             TrajectoryAdjoint* adj = nullptr, double scale = 1.0,
                             const std::vector<Eigen::MatrixXd>& ot_targets = {}) {
    if (data.num_times() < 2) throw UsageError("reconstruction needs at least two snapshots");
    if (!ot_targets.empty() && ot_targets.size() != data.num_times())
        throw ShapeError("OT targets do not cover every snapshot time");
    if (traj.log_weights.size() != traj.num_nodes()) throw UsageError("trajectory lacks log-weights");
    const double n0 = static_cast<double>(data.count(0));
    ReconTerms out;
    for (std::size_t k = 1; k < data.num_times(); ++k) {
        const std::size_t node = traj.node_at(static_cast<double>(k));
        const Eigen::MatrixXd& x = traj.positions[node];
        const Eigen::VectorXd& lw = traj.log_weights[node];
        double mk = 0.0, wk = 0.0;
        if (lambda_m != 0.0) {
            Eigen::VectorXd w = lw.array().exp().matrix();
            Eigen::VectorXd g;
            mk = mass_matching_loss(data.clouds[k], x, w, n0, adj ? &g : nullptr);
            if (adj) adj->log_weights[node] += (scale * lambda_m) * g;
        }
        if (lambda_d != 0.0) {
            Eigen::MatrixXd gx;
            Eigen::VectorXd gl;
            const Eigen::MatrixXd& target = ot_targets.empty() ? data.clouds[k] : ot_targets[k];
            wk = weighted_w2_term(target, x, lw, adj ? &gx : nullptr, adj ? &gl : nullptr);
            if (adj) {
                adj->positions[node] += (scale * lambda_d) * gx;
                adj->log_weights[node] += (scale * lambda_d) * gl;
            }
        }
        out.mass_k.push_back(mk);
        out.w2_k.push_back(wk);
        out.mass += mk;
        out.ot += wk;
    }
    out.value = lambda_m * out.mass + lambda_d * out.ot;
    if (!std::isfinite(out.value)) throw NumericError("reconstruction loss is not finite");
    return out;
}

/// Integrates the batch and evaluates the reconstruction loss; gradients flow into v and g only.
inline ReconTerms recon_objective(const Mlp& v, const Mlp& g, const SnapshotDataset& data, const ParticleSet& batch,
                                  const TimeGrid& grid, double lambda_m, double lambda_d,
                                  ParamGradient* grad_v = nullptr, ParamGradient* grad_g = nullptr,
                                  const std::vector<Eigen::MatrixXd>& ot_targets = {}) {
    Trajectory traj = integrate(v, g, batch, grid);
    if (!grad_v || !grad_g) return recon_loss(data, traj, lambda_m, lambda_d, nullptr, 1.0, ot_targets);
    TrajectoryAdjoint adj = TrajectoryAdjoint::zeros(traj);
    ReconTerms r = recon_loss(data, traj, lambda_m, lambda_d, &adj, 1.0, ot_targets);
    integrate_backward(v, g, traj, std::move(adj), *grad_v, *grad_g);
    return r;
}

// ---------------------------------------------------------------------------------------------
// Fokker-Planck residual

/// Collocation points; `source[m]` is the (node, particle) trajectory state behind column m.
struct Collocation {
    Eigen::MatrixXd points;
    Eigen::VectorXd times;
    std::vector<std::pair<std::size_t, Eigen::Index>> source;
};

/**
 * Trajectory states at their node times plus the same states at uniform random times on the
 * trajectory's span. `max_states` > 0 keeps a random subset of that many states.
 */
inline Collocation make_collocation(const Trajectory& traj, std::size_t max_states, std::uint64_t seed) {
    const std::size_t nodes = traj.num_nodes();
    const auto N = static_cast<std::size_t>(traj.num_particles());
    if (nodes == 0 || N == 0) throw UsageError("collocation needs a nonempty trajectory");
    std::vector<std::size_t> ids(nodes * N);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    Rng rng(seed);
    std::size_t keep = ids.size();
    if (max_states > 0 && max_states < ids.size()) {
        for (std::size_t i = 0; i < max_states; ++i) std::swap(ids[i], ids[i + rng.index(ids.size() - i)]);
        keep = max_states;
        std::sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep));
    }
    const double t0 = traj.times.front(), t1 = traj.times.back();
    Collocation c;
    const auto M = static_cast<Eigen::Index>(2 * keep);
    c.points.resize(traj.dim(), M);
    c.times.resize(M);
    c.source.resize(2 * keep);
    for (std::size_t m = 0; m < keep; ++m) {
        std::size_t node = ids[m] / N;
        auto particle = static_cast<Eigen::Index>(ids[m] % N);
        auto a = static_cast<Eigen::Index>(m), b = static_cast<Eigen::Index>(keep + m);
        c.points.col(a) = traj.positions[node].col(particle);
        c.points.col(b) = c.points.col(a);
        c.times(a) = traj.times[node];
        c.times(b) = rng.uniform(t0, t1);
        c.source[m] = {node, particle};
        c.source[keep + m] = {node, particle};
    }
    return c;
}

namespace detail {

struct FpEval {
    MlpTape tv, tg, ts;
    Eigen::VectorXd p, E, R;
};

inline FpEval fp_evaluate(const RuotNets& nets, const SigmaSchedule& sigma, const Eigen::MatrixXd& points,
                          const Eigen::VectorXd& times) {
    const double s = sigma.value;
    if (!(s > 0.0)) throw ConfigError("Fokker-Planck residual requires sigma > 0");
    const Eigen::Index d = points.rows(), M = points.cols();
    if (static_cast<Eigen::Index>(nets.state_dim()) != d) throw ShapeError("collocation dimension does not match networks");
    const double a = 2.0 / (s * s);
    auto in = mlp_input(points, times);
    std::vector<std::size_t> sdirs(static_cast<std::size_t>(d + 1));
    std::iota(sdirs.begin(), sdirs.end(), std::size_t{0});
    auto vdirs = state_directions(nets.velocity);
    const std::vector<std::size_t> none;
    FpEval e;
    mlp_forward_tape(nets.velocity, in, vdirs, e.tv);
    mlp_forward_tape(nets.growth, in, none, e.tg);
    mlp_forward_tape(nets.score, in, sdirs, e.ts);
    e.p.resize(M);
    e.E.resize(M);
    e.R.resize(M);
    for (Eigen::Index m = 0; m < M; ++m) {
        double sval = e.ts.output(0, m);
        double st = e.ts.output_tangents[static_cast<std::size_t>(d)](0, m);
        double div = 0.0, adv = 0.0;
        for (Eigen::Index k = 0; k < d; ++k) {
            div += e.tv.output_tangents[static_cast<std::size_t>(k)](k, m);
            adv += e.ts.output_tangents[static_cast<std::size_t>(k)](0, m) * e.tv.output(k, m);
        }
        e.p(m) = std::exp(a * sval);
        e.E(m) = a * st + div + a * adv - e.tg.output(0, m);
        e.R(m) = e.p(m) * e.E(m);
    }
    if (!e.R.allFinite()) throw NumericError("Fokker-Planck residual overflowed (p = exp(2 s / sigma^2))");
    return e;
}

}  // namespace detail

/// Pointwise d_t p + div(p v) - g p with p = exp(2 s / sigma^2).
inline Eigen::VectorXd fp_pde_residual(const RuotNets& nets, const SigmaSchedule& sigma, const Eigen::MatrixXd& points,
                                       const Eigen::VectorXd& times) {
    return detail::fp_evaluate(nets, sigma, points, times).R;
}

struct FpTerms {
    double residual = 0.0;  // mean squared PDE residual
    double initial = 0.0;   // mean squared p(x, t0) - p0(x)
    double value = 0.0;     // residual + lambda_w * initial
};

/**
 * Physics-informed loss. Gradients (times `scale`) are accumulated into `grads`; the adjoint of
 * the collocation points is written to `points_adj` when given.
 */
inline FpTerms fp_residual_loss(const RuotNets& nets, const SigmaSchedule& sigma, const Eigen::MatrixXd& points,
                                const Eigen::VectorXd& times, const Density& p0, const Eigen::MatrixXd& initial_points,
                                double t0, double lambda_w, NetGrads* grads = nullptr,
                                Eigen::MatrixXd* points_adj = nullptr, double scale = 1.0) {
    if (points.cols() == 0) throw UsageError("Fokker-Planck loss needs collocation points");
    detail::FpEval e = detail::fp_evaluate(nets, sigma, points, times);
    const double a = 2.0 / (sigma.value * sigma.value);
    const Eigen::Index d = points.rows(), M = points.cols();

    FpTerms out;
    out.residual = e.R.squaredNorm() / static_cast<double>(M);

    MlpTape ti;
    Eigen::VectorXd pi, diff;
    const std::vector<std::size_t> none;
    if (lambda_w != 0.0) {
        if (initial_points.cols() == 0) throw UsageError("Fokker-Planck loss needs initial points");
        mlp_forward_tape(nets.score, mlp_input(initial_points, t0), none, ti);
        pi = (a * ti.output.row(0).transpose()).array().exp().matrix();
        if (!pi.allFinite()) throw NumericError("initial density exp(2 s / sigma^2) overflowed");
        Eigen::VectorXd p0v = density_log_batch(p0, initial_points).array().exp().matrix();
        diff = pi - p0v;
        out.initial = diff.squaredNorm() / static_cast<double>(initial_points.cols());
    }
    out.value = out.residual + lambda_w * out.initial;
    if (!grads) return out;

    Eigen::VectorXd rbar = (scale * 2.0 / static_cast<double>(M)) * e.R;
    Eigen::MatrixXd s_adj(1, M), g_adj(1, M), v_adj(d, M);
    std::vector<Eigen::MatrixXd> s_tan(static_cast<std::size_t>(d + 1), Eigen::MatrixXd(1, M));
    std::vector<Eigen::MatrixXd> v_tan(static_cast<std::size_t>(d), Eigen::MatrixXd::Zero(d, M));
    for (Eigen::Index m = 0; m < M; ++m) {
        const double rp = rbar(m) * e.p(m);
        s_adj(0, m) = rbar(m) * a * e.R(m);
        s_tan[static_cast<std::size_t>(d)](0, m) = rp * a;
        for (Eigen::Index k = 0; k < d; ++k) {
            s_tan[static_cast<std::size_t>(k)](0, m) = rp * a * e.tv.output(k, m);
            v_adj(k, m) = rp * a * e.ts.output_tangents[static_cast<std::size_t>(k)](0, m);
            v_tan[static_cast<std::size_t>(k)](k, m) = rp;
        }
        g_adj(0, m) = -rp;
    }
    Eigen::MatrixXd av, ag, as;
    mlp_backward(nets.velocity, e.tv, &v_adj, &v_tan, grads->velocity, points_adj ? &av : nullptr);
    mlp_backward(nets.growth, e.tg, &g_adj, nullptr, grads->growth, points_adj ? &ag : nullptr);
    mlp_backward(nets.score, e.ts, &s_adj, &s_tan, grads->score, points_adj ? &as : nullptr);
    if (points_adj) *points_adj = av.topRows(d) + ag.topRows(d) + as.topRows(d);

    if (lambda_w != 0.0) {
        const auto B = static_cast<double>(initial_points.cols());
        Eigen::MatrixXd si_adj = ((scale * lambda_w * 2.0 * a / B) * diff.cwiseProduct(pi)).transpose();
        mlp_backward(nets.score, ti, &si_adj, nullptr, grads->score, nullptr);
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Conditional flow matching for the score

/// Endpoint pairs for Brownian bridges on [t_offset, t_offset + 1].
struct BridgePairs {
    Eigen::MatrixXd x0, x1;   // d x P
    Eigen::VectorXd t_offset; // P

    Eigen::Index size() const { return x0.cols(); }
};

/// Bridge times are drawn from U(eps, 1 - eps).
inline constexpr double kBridgeTimeClip = 1e-3;

struct CfmTerms {
    double score = 0.0;    // mean |lambda_s grad s + eps1|^2
    double penalty = 0.0;  // mean max(s, 0)
    double value = 0.0;    // score + stability_alpha * penalty
};

/// Bridge samples used by cfm_score_loss, exposed for tests.
struct BridgeSamples {
    Eigen::MatrixXd x;      // d x M
    Eigen::VectorXd t;      // bridge time in (0, 1)
    Eigen::VectorXd time;   // network time t_offset + t
    Eigen::MatrixXd noise;  // eps1, d x M
};

inline BridgeSamples sample_bridges(const BridgePairs& pairs, double sigma, std::size_t n_t, std::uint64_t seed) {
    const Eigen::Index P = pairs.size(), d = pairs.x0.rows();
    if (pairs.x1.cols() != P || pairs.x1.rows() != d || pairs.t_offset.size() != P)
        throw ShapeError("bridge pair arrays disagree in shape");
    if (P == 0 || n_t == 0) throw UsageError("score matching needs at least one bridge sample");
    const auto M = static_cast<Eigen::Index>(static_cast<std::size_t>(P) * n_t);
    BridgeSamples b;
    b.x.resize(d, M);
    b.t.resize(M);
    b.time.resize(M);
    b.noise.resize(d, M);
    Rng rng(seed);
    Eigen::Index m = 0;
    for (Eigen::Index p = 0; p < P; ++p) {
        for (std::size_t r = 0; r < n_t; ++r, ++m) {
            double t = rng.uniform(kBridgeTimeClip, 1.0 - kBridgeTimeClip);
            b.t(m) = t;
            b.time(m) = pairs.t_offset(p) + t;
            const double sd = sigma * std::sqrt(t * (1.0 - t));
            for (Eigen::Index k = 0; k < d; ++k) {
                double eps = rng.normal();
                b.noise(k, m) = eps;
                b.x(k, m) = t * pairs.x1(k, p) + (1.0 - t) * pairs.x0(k, p) + sd * eps;
            }
        }
    }
    return b;
}

/**
 * Score regression on Brownian bridges with weighting lambda_s(t) = 2 sqrt(t(1-t)) / sigma,
 * plus the optional positivity penalty on s. Gradient goes to `grad` when given.
 */
inline CfmTerms cfm_score_loss(const Mlp& s_net, const BridgePairs& pairs, const SigmaSchedule& sigma, std::size_t n_t,
                               std::uint64_t seed, double stability_alpha, ParamGradient* grad = nullptr) {
    if (!(sigma.value > 0.0)) throw ConfigError("score matching requires sigma > 0");
    if (stability_alpha < 0.0) throw ConfigError("stability penalty weight must be nonnegative");
    if (s_net.output_dim() != 1) throw ShapeError("score network must be scalar");
    if (static_cast<Eigen::Index>(s_net.state_dim()) != pairs.x0.rows())
        throw ShapeError("bridge dimension does not match the score network");
    BridgeSamples b = sample_bridges(pairs, sigma.value, n_t, seed);
    const Eigen::Index d = b.x.rows(), M = b.x.cols();
    auto dirs = state_directions(s_net);
    MlpTape tape;
    mlp_forward_tape(s_net, mlp_input(b.x, b.time), dirs, tape);

    CfmTerms out;
    Eigen::MatrixXd u(d, M);
    Eigen::VectorXd lam(M);
    for (Eigen::Index m = 0; m < M; ++m) {
        lam(m) = 2.0 * std::sqrt(b.t(m) * (1.0 - b.t(m))) / sigma.value;
        for (Eigen::Index k = 0; k < d; ++k)
            u(k, m) = lam(m) * tape.output_tangents[static_cast<std::size_t>(k)](0, m) + b.noise(k, m);
        out.penalty += std::max(tape.output(0, m), 0.0);
    }
    out.score = u.squaredNorm() / static_cast<double>(M);
    out.penalty /= static_cast<double>(M);
    out.value = out.score + stability_alpha * out.penalty;
    if (!std::isfinite(out.value)) throw NumericError("score matching loss is not finite");
    if (!grad) return out;

    const double inv = 1.0 / static_cast<double>(M);
    std::vector<Eigen::MatrixXd> tan_adj(static_cast<std::size_t>(d), Eigen::MatrixXd(1, M));
    Eigen::MatrixXd out_adj(1, M);
    for (Eigen::Index m = 0; m < M; ++m) {
        for (Eigen::Index k = 0; k < d; ++k) tan_adj[static_cast<std::size_t>(k)](0, m) = 2.0 * inv * lam(m) * u(k, m);
        out_adj(0, m) = tape.output(0, m) > 0.0 ? stability_alpha * inv : 0.0;
    }
    mlp_backward(s_net, tape, &out_adj, &tan_adj, *grad, nullptr);
    return out;
}

// ---------------------------------------------------------------------------------------------
// Total loss

struct LossWeights {
    double lambda_m = 1e3;
    double lambda_d = 1.0;
    double lambda_r = 1.0;
    double lambda_f = 1.0;
    double lambda_w = 0.1;
};

struct TotalLossOptions {
    TimeGrid grid;
    SigmaSchedule sigma;
    GrowthPenalty penalty;
    LossWeights weights;
    std::size_t collocation_states = 0;  // 0 = every trajectory state
    std::uint64_t collocation_seed = 0;
    std::vector<Eigen::MatrixXd> ot_targets;  // empty = every real point
};

struct LossTerms {
    double energy = 0.0;
    ReconTerms recon;
    FpTerms fp;
    double total = 0.0;
};

/**
 * L = energy + lambda_r * recon + lambda_f * fp on one integration of `batch`.
 * With `grads`, the exact gradient of the discretized loss is accumulated for all three nets.
 */
inline LossTerms total_loss(const RuotNets& nets, const SnapshotDataset& data, const ParticleSet& batch,
                            const Density* p0, const TotalLossOptions& opt, NetGrads* grads = nullptr) {
    nets.check();
    const LossWeights& lw = opt.weights;
    Trajectory traj = integrate(nets.velocity, nets.growth, batch, opt.grid);
    LossTerms out;
    TrajectoryAdjoint adj;
    if (grads) {
        adj = TrajectoryAdjoint::zeros(traj);
        out.energy = accumulate_action_grad(traj, nets, opt.sigma, opt.penalty, 1.0, *grads, adj);
    } else {
        out.energy = accumulate_action(traj, nets, opt.sigma, opt.penalty);
    }
    if (lw.lambda_r != 0.0)
        out.recon = recon_loss(data, traj, lw.lambda_m, lw.lambda_d, grads ? &adj : nullptr, lw.lambda_r, opt.ot_targets);
    if (lw.lambda_f != 0.0) {
        if (!p0) throw UsageError("Fokker-Planck term needs an initial density");
        Collocation col = make_collocation(traj, opt.collocation_states, opt.collocation_seed);
        Eigen::MatrixXd padj;
        out.fp = fp_residual_loss(nets, opt.sigma, col.points, col.times, *p0, batch.positions, opt.grid.t_start,
                                  lw.lambda_w, grads, grads ? &padj : nullptr, lw.lambda_f);
        if (grads)
            for (std::size_t m = 0; m < col.source.size(); ++m) {
                auto [node, particle] = col.source[m];
                adj.positions[node].col(particle) += padj.col(static_cast<Eigen::Index>(m));
            }
    }
    out.total = out.energy + lw.lambda_r * out.recon.value + lw.lambda_f * out.fp.value;
    if (!std::isfinite(out.total)) throw NumericError("total loss is not finite");
    if (grads) integrate_backward(nets.velocity, nets.growth, traj, std::move(adj), grads->velocity, grads->growth);
    return out;
}

}  // namespace ruot
