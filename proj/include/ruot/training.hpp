#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ruot/config.hpp"
#include "ruot/dataset.hpp"
#include "ruot/density.hpp"
#include "ruot/dynamics.hpp"
#include "ruot/error.hpp"
#include "ruot/io.hpp"
#include "ruot/losses.hpp"
#include "ruot/nets.hpp"
#include "ruot/optim.hpp"
#include "ruot/rng.hpp"
#include "ruot/transport.hpp"

namespace ruot {

/// Called once per finished epoch (or score-matching block) with the mean loss.
using ProgressFn = std::function<void(const std::string& stage, std::size_t epoch, double loss)>;

/// Coordinates the learner sees: the configured projection, or the data unchanged.
inline SnapshotDataset learning_view(const SnapshotDataset& data, const TrainConfig& cfg) {
    data.validate();
    return cfg.dims.empty() ? data : project(data, cfg.dims);
}

/// Network time runs over snapshot indices 0..T-1.
inline TimeGrid training_grid(const SnapshotDataset& data, const TrainConfig& cfg) {
    if (data.num_times() < 2) throw UsageError("training needs at least two snapshot times");
    const double span = static_cast<double>(data.num_times() - 1);
    return TimeGrid{0.0, span, cfg.steps_per_unit_time * (data.num_times() - 1)};
}

inline RuotNets init_nets(std::size_t state_dim, const TrainConfig& cfg) {
    return make_nets(state_dim, cfg.hidden, cfg.activation, cfg.seed);
}

/// All initial points when batch_size is 0 or at least |A0|, otherwise batch_size distinct points.
inline ParticleSet initial_batch(const SnapshotDataset& data, std::size_t batch_size, std::uint64_t seed) {
    const Eigen::MatrixXd& a0 = data.clouds.at(0);
    if (batch_size == 0) return uniform_particles(a0);
    Rng rng(seed);
    return uniform_particles(subsample_columns(a0, static_cast<Eigen::Index>(batch_size), rng));
}

/// Per-snapshot subsamples of size `n` for the OT term; empty when n is 0 (every real point).
inline std::vector<Eigen::MatrixXd> ot_targets(const SnapshotDataset& data, std::size_t n, std::uint64_t seed) {
    if (n == 0) return {};
    Rng rng(seed);
    std::vector<Eigen::MatrixXd> out;
    for (const auto& c : data.clouds) out.push_back(subsample_columns(c, static_cast<Eigen::Index>(n), rng));
    return out;
}

namespace detail {

inline Adam make_adam(const Mlp& net, const OptimizerConfig& o, double lr) {
    return Adam(net.spec(), lr, o.beta1, o.beta2, o.epsilon);
}

inline void check_training_data(const SnapshotDataset& data, const RuotNets& nets) {
    data.validate();
    nets.check();
    if (data.num_times() < 2) throw UsageError("training needs at least two snapshot times");
    if (nets.state_dim() != data.dim) throw ShapeError("network state dimension does not match the data");
}

}  // namespace detail

/**
 * Reconstruction pre-training of v and g through the schedule phases. Returns the mean loss
 * of every epoch.
 */
inline std::vector<double> pretrain_recon(const SnapshotDataset& data, RuotNets& nets, const TrainConfig& cfg,
                                          const ProgressFn& progress = {}) {
    cfg.validate();
    detail::check_training_data(data, nets);
    const TimeGrid grid = training_grid(data, cfg);
    Adam opt_v = detail::make_adam(nets.velocity, cfg.optimizer, cfg.optimizer.step_size);
    Adam opt_g = detail::make_adam(nets.growth, cfg.optimizer, cfg.optimizer.step_size);
    std::vector<double> history;
    std::uint64_t iter = 0;
    for (const SchedulePhase& phase : cfg.schedule) {
        for (std::size_t e = 0; e < phase.epochs; ++e) {
            double acc = 0.0;
            for (std::size_t it = 0; it < cfg.recon_iters_per_epoch; ++it, ++iter) {
                ParticleSet batch = initial_batch(data, cfg.batch_size, derive_seed(cfg.seed, seed_tag::batch, iter));
                ParamGradient gv = ParamSet::zeros(nets.velocity.spec()), gg = ParamSet::zeros(nets.growth.spec());
                auto targets = ot_targets(data, cfg.ot_batch_size, derive_seed(cfg.seed, seed_tag::ot_targets, iter));
                ReconTerms r = recon_objective(nets.velocity, nets.growth, data, batch, grid, phase.lambda_m,
                                               phase.lambda_d, &gv, &gg, targets);
                opt_v.step(nets.velocity.params(), gv, cfg.grad_clip);
                opt_g.step(nets.growth.params(), gg, cfg.grad_clip);
                acc += r.value;
            }
            history.push_back(acc / static_cast<double>(cfg.recon_iters_per_epoch));
            if (progress) progress("pretrain_recon", history.size(), history.back());
        }
    }
    return history;
}

/// Snapshots generated from A0 by the current v and g, with OT plans between consecutive ones.
struct GeneratedCouplings {
    std::vector<WeightedCloud> clouds;
    std::vector<TransportPlan> plans;
};

inline GeneratedCouplings generate_couplings(const SnapshotDataset& data, const RuotNets& nets, const TimeGrid& grid) {
    Trajectory traj = integrate(nets.velocity, nets.growth, uniform_particles(data.clouds[0]), grid);
    GeneratedCouplings out;
    for (std::size_t k = 0; k < data.num_times(); ++k) {
        std::size_t node = traj.node_at(static_cast<double>(k));
        out.clouds.push_back({traj.positions[node], traj.normalized_weights(node)});
    }
    for (std::size_t k = 0; k + 1 < out.clouds.size(); ++k) {
        const auto& a = out.clouds[k];
        const auto& b = out.clouds[k + 1];
        out.plans.push_back(solve_transport(a.weights, b.weights, cost_matrix(a.points, b.points, 2)));
    }
    return out;
}

/// Bridge endpoints for one score-matching step: `per_interval` pairs from every plan.
inline BridgePairs draw_bridge_pairs(const GeneratedCouplings& gen, std::size_t per_interval, std::uint64_t seed) {
    const std::size_t K = gen.plans.size();
    const auto n = static_cast<Eigen::Index>(per_interval);
    const Eigen::Index d = gen.clouds[0].dim();
    BridgePairs pairs{Eigen::MatrixXd(d, n * static_cast<Eigen::Index>(K)), Eigen::MatrixXd(d, n * static_cast<Eigen::Index>(K)),
                      Eigen::VectorXd(n * static_cast<Eigen::Index>(K))};
    Rng rng(seed);
    for (std::size_t k = 0; k < K; ++k) {
        PairBatch b = sample_pairs(gen.plans[k], gen.clouds[k], gen.clouds[k + 1], per_interval, rng);
        const Eigen::Index off = static_cast<Eigen::Index>(k) * n;
        pairs.x0.middleCols(off, n) = b.x0;
        pairs.x1.middleCols(off, n) = b.x1;
        pairs.t_offset.segment(off, n).setConstant(static_cast<double>(k));
    }
    return pairs;
}

/**
 * Score matching for s with v and g fixed: stability_iters steps with the positivity penalty,
 * then pretrain_score_iters score-matching steps, penalized too when stability_in_score is set.
 * Returns the mean loss of each block of 100 steps.
 */
inline std::vector<double> pretrain_score(const SnapshotDataset& data, RuotNets& nets, const TrainConfig& cfg,
                                          const ProgressFn& progress = {}) {
    cfg.validate();
    detail::check_training_data(data, nets);
    std::vector<double> history;
    const std::size_t total = cfg.stability_iters + cfg.pretrain_score_iters;
    if (total == 0) return history;
    if (!(cfg.sigma > 0.0)) throw ConfigError("score matching requires sigma > 0");
    const GeneratedCouplings gen = generate_couplings(data, nets, training_grid(data, cfg));
    Adam opt = detail::make_adam(nets.score, cfg.optimizer, cfg.optimizer.step_size);
    const SigmaSchedule sigma{cfg.sigma};
    double acc = 0.0;
    std::size_t in_block = 0;
    for (std::size_t it = 0; it < total; ++it) {
        const bool stability = it < cfg.stability_iters;
        BridgePairs pairs = draw_bridge_pairs(gen, cfg.score_pairs, derive_seed(cfg.seed, seed_tag::score_pairs, it));
        ParamGradient grad = ParamSet::zeros(nets.score.spec());
        CfmTerms c = cfm_score_loss(nets.score, pairs, sigma, cfg.bridge_samples,
                                    derive_seed(cfg.seed, seed_tag::score_bridge, it),
                                    stability || cfg.stability_in_score ? cfg.stability_alpha : 0.0, &grad);
        opt.step(nets.score.params(), grad, cfg.grad_clip);
        acc += c.value;
        ++in_block;
        if (in_block == 100 || it + 1 == total || it + 1 == cfg.stability_iters) {
            history.push_back(acc / static_cast<double>(in_block));
            if (progress) progress(stability ? "pretrain_score_stability" : "pretrain_score", it + 1, history.back());
            acc = 0.0;
            in_block = 0;
        }
    }
    return history;
}

inline TotalLossOptions total_loss_options(const SnapshotDataset& data, const TrainConfig& cfg, std::uint64_t iter) {
    TotalLossOptions opt;
    opt.grid = training_grid(data, cfg);
    opt.sigma = {cfg.sigma};
    opt.penalty = {cfg.penalty, cfg.alpha};
    opt.weights = {cfg.lambda_m, cfg.lambda_d, cfg.lambda_r, cfg.lambda_f, cfg.lambda_w};
    opt.collocation_states = cfg.collocation_states;
    opt.collocation_seed = derive_seed(cfg.seed, seed_tag::collocation, iter);
    opt.ot_targets = ot_targets(data, cfg.ot_batch_size, derive_seed(cfg.seed, seed_tag::ot_targets, iter));
    return opt;
}

/// Joint training of v, g and s on the total loss. Returns the mean loss of every epoch.
inline std::vector<double> train_full(const SnapshotDataset& data, RuotNets& nets, const TrainConfig& cfg,
                                      const ProgressFn& progress = {}) {
    cfg.validate();
    detail::check_training_data(data, nets);
    const double lr = cfg.optimizer.train_step_size;
    Adam opt_v = detail::make_adam(nets.velocity, cfg.optimizer, lr);
    Adam opt_g = detail::make_adam(nets.growth, cfg.optimizer, lr);
    Adam opt_s = detail::make_adam(nets.score, cfg.optimizer, lr);
    std::vector<double> history;
    // Batch seeds continue after the pre-training stream so the two stages draw different batches.
    std::uint64_t iter = 1ULL << 32;
    for (std::size_t e = 0; e < cfg.train_epochs; ++e) {
        const bool need_p0 = cfg.lambda_f > 0.0;
        Density p0;
        if (need_p0) p0 = fit_kde(data.clouds[0], cfg.density_bandwidth(), cfg.kde_normalization);
        double acc = 0.0;
        for (std::size_t it = 0; it < cfg.train_iters_per_epoch; ++it, ++iter) {
            ParticleSet batch = initial_batch(data, cfg.batch_size, derive_seed(cfg.seed, seed_tag::batch, iter));
            NetGrads grads = NetGrads::zeros(nets);
            LossTerms l = total_loss(nets, data, batch, need_p0 ? &p0 : nullptr, total_loss_options(data, cfg, iter), &grads);
            opt_v.step(nets.velocity.params(), grads.velocity, cfg.grad_clip);
            opt_g.step(nets.growth.params(), grads.growth, cfg.grad_clip);
            opt_s.step(nets.score.params(), grads.score, cfg.grad_clip);
            acc += l.total;
        }
        history.push_back(acc / static_cast<double>(cfg.train_iters_per_epoch));
        if (progress) progress("train", e + 1, history.back());
    }
    return history;
}

// ---------------------------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    RuotNets nets;
    TrainConfig config;
    std::string stage = "init";
    std::size_t epoch = 0;
    int version = kCheckpointVersion;
};

namespace detail {

inline nlohmann::json net_to_json(const Mlp& net) {
    const MlpSpec& s = net.spec();
    std::vector<double> flat = net.params().flatten();
    for (double v : flat)
        if (!std::isfinite(v)) throw NumericError("cannot save a network with non-finite parameters");
    return {{"spec",
             {{"input_dim", s.input_dim},
              {"hidden", s.hidden_layers},
              {"output_dim", s.output_dim},
              {"activation", to_string(s.activation)}}},
            {"params", flat}};
}

inline Mlp net_from_json(const nlohmann::json& j) {
    MlpSpec s;
    const auto& js = j.at("spec");
    s.input_dim = js.at("input_dim").get<std::size_t>();
    s.hidden_layers = js.at("hidden").get<std::vector<std::size_t>>();
    s.output_dim = js.at("output_dim").get<std::size_t>();
    s.activation = activation_from_string(js.at("activation").get<std::string>());
    Mlp net(s);
    std::vector<double> flat = j.at("params").get<std::vector<double>>();
    net.params().assign(flat);
    return net;
}

}  // namespace detail

inline std::string checkpoint_to_string(const Checkpoint& c) {
    nlohmann::json j{{"format", "ruot-checkpoint"},
                     {"version", c.version},
                     {"stage", c.stage},
                     {"epoch", c.epoch},
                     {"config", to_json(c.config)},
                     {"nets",
                      {{"velocity", detail::net_to_json(c.nets.velocity)},
                       {"growth", detail::net_to_json(c.nets.growth)},
                       {"score", detail::net_to_json(c.nets.score)}}}};
    return j.dump(1) + "\n";
}

/// Parses a checkpoint; any structural problem raises FormatError.
inline Checkpoint checkpoint_from_string(const std::string& text) {
    try {
        nlohmann::json j = nlohmann::json::parse(text);
        if (!j.is_object() || j.value("format", "") != "ruot-checkpoint") throw FormatError("not a checkpoint file");
        int version = j.at("version").get<int>();
        if (version != kCheckpointVersion)
            throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                              std::to_string(kCheckpointVersion) + ")");
        Checkpoint c;
        c.version = version;
        c.stage = j.at("stage").get<std::string>();
        c.epoch = j.at("epoch").get<std::size_t>();
        c.config = config_from_json(j.at("config"));
        const auto& n = j.at("nets");
        c.nets = {detail::net_from_json(n.at("velocity")), detail::net_from_json(n.at("growth")),
                  detail::net_from_json(n.at("score"))};
        c.nets.check();
        return c;
    } catch (const FormatError&) {
        throw;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("corrupt checkpoint: ") + e.what());
    } catch (const Error& e) {
        throw FormatError(std::string("invalid checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
    write_file_atomic(path, checkpoint_to_string(c));
}

inline Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_string(read_file(path)); }

// ---------------------------------------------------------------------------------------------
// Full pipeline

/// Called after each stage with a checkpoint of the current networks.
using StageFn = std::function<void(const Checkpoint&)>;

/// Runs pre-training (reconstruction, score) and the training stage on `data` (already projected).
inline RuotNets train_pipeline(const SnapshotDataset& data, const TrainConfig& cfg, const StageFn& on_stage = {},
                               const ProgressFn& progress = {}) {
    cfg.validate();
    RuotNets nets = init_nets(data.dim, cfg);
    auto emit = [&](const std::string& stage, std::size_t epoch) {
        if (on_stage) on_stage(Checkpoint{nets, cfg, stage, epoch});
    };
    emit("init", 0);
    std::size_t recon_epochs = 0;
    for (const auto& p : cfg.schedule) recon_epochs += p.epochs;
    pretrain_recon(data, nets, cfg, progress);
    emit("pretrain_recon", recon_epochs);
    pretrain_score(data, nets, cfg, progress);
    emit("pretrain_score", cfg.stability_iters + cfg.pretrain_score_iters);
    train_full(data, nets, cfg, progress);
    emit("train", cfg.train_epochs);
    return nets;
}

}  // namespace ruot
