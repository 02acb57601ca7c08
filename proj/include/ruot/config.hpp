#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ruot/density.hpp"
#include "ruot/error.hpp"
#include "ruot/io.hpp"
#include "ruot/mlp.hpp"
#include "ruot/penalty.hpp"

namespace ruot {

/// One pre-training phase: reconstruction weights held for `epochs` epochs.
struct SchedulePhase {
    double lambda_m = 1.0;
    double lambda_d = 0.1;
    std::size_t epochs = 0;

    friend bool operator==(const SchedulePhase&, const SchedulePhase&) = default;
};

struct OptimizerConfig {
    double step_size = 1e-3;        // pre-training stages
    double train_step_size = 1e-4;  // training stage
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct TrainConfig {
    double sigma = 0.25;
    double alpha = 1.0;
    PenaltyKind penalty = PenaltyKind::quadratic;
    double lambda_m = 1e3;
    double lambda_d = 1.0;
    double lambda_r = 1.0;
    double lambda_f = 1.0;
    double lambda_w = 0.1;
    std::vector<SchedulePhase> schedule{{1.0, 0.1, 30}, {0.0, 0.1, 30}};
    std::size_t pretrain_score_iters = 2000;
    std::size_t train_epochs = 10;
    OptimizerConfig optimizer;
    std::size_t steps_per_unit_time = 10;
    std::size_t batch_size = 0;     // 0 = every initial point, no resampling
    std::size_t ot_batch_size = 0;  // real points per snapshot in the OT term, 0 = all
    std::uint64_t seed = 0;
    double stability_alpha = 1.0;
    std::size_t stability_iters = 500;
    bool stability_in_score = true;  // keep the penalty on during the plain score-matching steps

    std::vector<std::size_t> hidden{64, 64, 64};
    Activation activation = Activation::tanh;
    std::size_t recon_iters_per_epoch = 20;
    std::size_t train_iters_per_epoch = 20;
    std::size_t score_pairs = 256;       // bridge endpoint pairs per snapshot interval and step
    std::size_t bridge_samples = 1;      // bridge times per pair
    std::size_t collocation_states = 512;  // 0 = every trajectory state
    double kde_bandwidth = 0.0;          // 0 = use sigma
    DensityNormalization kde_normalization = DensityNormalization::per_point_average;
    double grad_clip = 0.0;              // global gradient norm cap per net, 0 = off
    std::vector<std::size_t> dims;       // coordinates used for learning, empty = all
    std::size_t eval_repeats = 5;
    std::string eval_mode = "all";       // all | matched

    void validate() const {
        auto nonneg = [](double v, const char* name) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be a nonnegative number");
        };
        nonneg(sigma, "sigma");
        nonneg(lambda_m, "lambda_m");
        nonneg(lambda_d, "lambda_d");
        nonneg(lambda_r, "lambda_r");
        nonneg(lambda_f, "lambda_f");
        nonneg(lambda_w, "lambda_w");
        nonneg(stability_alpha, "stability_alpha");
        nonneg(kde_bandwidth, "kde_bandwidth");
        nonneg(grad_clip, "grad_clip");
        if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
        for (const auto& p : schedule) {
            nonneg(p.lambda_m, "schedule lambda_m");
            nonneg(p.lambda_d, "schedule lambda_d");
        }
        if (!(optimizer.step_size > 0.0) || !(optimizer.train_step_size > 0.0))
            throw ConfigError("optimizer step sizes must be positive");
        if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
            throw ConfigError("optimizer betas must lie in [0, 1)");
        if (!(optimizer.epsilon > 0.0)) throw ConfigError("optimizer epsilon must be positive");
        if (steps_per_unit_time == 0) throw ConfigError("steps_per_unit_time must be positive");
        if (recon_iters_per_epoch == 0 || train_iters_per_epoch == 0)
            throw ConfigError("iterations per epoch must be positive");
        if (score_pairs == 0 || bridge_samples == 0) throw ConfigError("score_pairs and bridge_samples must be positive");
        if (hidden.empty()) throw ConfigError("hidden must list at least one layer width");
        for (auto h : hidden)
            if (h == 0) throw ConfigError("hidden layer widths must be positive");
        bool needs_sigma = (lambda_f > 0.0 && train_epochs > 0) || pretrain_score_iters > 0 || stability_iters > 0;
        if (needs_sigma && !(sigma > 0.0))
            throw ConfigError("sigma must be positive when the Fokker-Planck term or score matching is enabled");
        if (eval_repeats == 0) throw ConfigError("eval_repeats must be positive");
        if (eval_mode != "all" && eval_mode != "matched") throw ConfigError("eval_mode must be 'all' or 'matched'");
    }

    double density_bandwidth() const { return kde_bandwidth > 0.0 ? kde_bandwidth : sigma; }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Built-in parameter sets; unknown names raise ConfigError.
inline TrainConfig preset_config(const std::string& name) {
    TrainConfig c;
    if (name == "hematopoiesis") return c;
    if (name == "grn") {
        c.schedule = {{1.0, 0.1, 20}, {0.0, 0.1, 10}};
        c.dims = {0, 1};
        c.stability_alpha = 10.0;
        return c;
    }
    if (name == "gauss10d") {
        c.sigma = 0.1;
        c.schedule = {{1.0, 0.1, 35}, {0.0, 0.1, 80}};
        return c;
    }
    throw ConfigError("unknown preset '" + name + "' (expected grn, hematopoiesis or gauss10d)");
}

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"grn", "hematopoiesis", "gauss10d"};
    return names;
}

// ---------------------------------------------------------------------------------------------
// JSON mapping

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <class T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

}  // namespace detail

inline nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json sched = nlohmann::json::array();
    for (const auto& p : c.schedule) sched.push_back({{"lambda_m", p.lambda_m}, {"lambda_d", p.lambda_d}, {"epochs", p.epochs}});
    return {
        {"sigma", c.sigma},
        {"alpha", c.alpha},
        {"penalty", to_string(c.penalty)},
        {"lambda_m", c.lambda_m},
        {"lambda_d", c.lambda_d},
        {"lambda_r", c.lambda_r},
        {"lambda_f", c.lambda_f},
        {"lambda_w", c.lambda_w},
        {"schedule", sched},
        {"pretrain_score_iters", c.pretrain_score_iters},
        {"train_epochs", c.train_epochs},
        {"optimizer",
         {{"step_size", c.optimizer.step_size},
          {"train_step_size", c.optimizer.train_step_size},
          {"beta1", c.optimizer.beta1},
          {"beta2", c.optimizer.beta2},
          {"epsilon", c.optimizer.epsilon}}},
        {"steps_per_unit_time", c.steps_per_unit_time},
        {"batch_size", c.batch_size},
        {"ot_batch_size", c.ot_batch_size},
        {"seed", c.seed},
        {"stability_alpha", c.stability_alpha},
        {"stability_iters", c.stability_iters},
        {"stability_in_score", c.stability_in_score},
        {"hidden", c.hidden},
        {"activation", to_string(c.activation)},
        {"recon_iters_per_epoch", c.recon_iters_per_epoch},
        {"train_iters_per_epoch", c.train_iters_per_epoch},
        {"score_pairs", c.score_pairs},
        {"bridge_samples", c.bridge_samples},
        {"collocation_states", c.collocation_states},
        {"kde_bandwidth", c.kde_bandwidth},
        {"kde_normalization", to_string(c.kde_normalization)},
        {"grad_clip", c.grad_clip},
        {"dims", c.dims},
        {"eval_repeats", c.eval_repeats},
        {"eval_mode", c.eval_mode},
    };
}

/// Overlays the keys present in `j` onto `base`; unknown keys are rejected.
inline TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
    static const std::set<std::string> known{
        "sigma", "alpha", "penalty", "lambda_m", "lambda_d", "lambda_r", "lambda_f", "lambda_w", "schedule",
        "pretrain_score_iters", "train_epochs", "optimizer", "steps_per_unit_time", "batch_size", "ot_batch_size", "seed",
        "stability_alpha", "stability_iters", "stability_in_score", "hidden", "activation", "recon_iters_per_epoch",
        "train_iters_per_epoch", "score_pairs", "bridge_samples", "collocation_states", "kde_bandwidth",
        "kde_normalization", "grad_clip", "dims", "eval_repeats", "eval_mode", "preset"};
    detail::reject_unknown(j, known, "config");
    TrainConfig& c = base;
    using detail::read_key;
    read_key(j, "sigma", c.sigma);
    read_key(j, "alpha", c.alpha);
    read_key(j, "lambda_m", c.lambda_m);
    read_key(j, "lambda_d", c.lambda_d);
    read_key(j, "lambda_r", c.lambda_r);
    read_key(j, "lambda_f", c.lambda_f);
    read_key(j, "lambda_w", c.lambda_w);
    read_key(j, "pretrain_score_iters", c.pretrain_score_iters);
    read_key(j, "train_epochs", c.train_epochs);
    read_key(j, "steps_per_unit_time", c.steps_per_unit_time);
    read_key(j, "batch_size", c.batch_size);
    read_key(j, "ot_batch_size", c.ot_batch_size);
    read_key(j, "seed", c.seed);
    read_key(j, "stability_alpha", c.stability_alpha);
    read_key(j, "stability_iters", c.stability_iters);
    read_key(j, "stability_in_score", c.stability_in_score);
    read_key(j, "hidden", c.hidden);
    read_key(j, "recon_iters_per_epoch", c.recon_iters_per_epoch);
    read_key(j, "train_iters_per_epoch", c.train_iters_per_epoch);
    read_key(j, "score_pairs", c.score_pairs);
    read_key(j, "bridge_samples", c.bridge_samples);
    read_key(j, "collocation_states", c.collocation_states);
    read_key(j, "kde_bandwidth", c.kde_bandwidth);
    read_key(j, "grad_clip", c.grad_clip);
    read_key(j, "dims", c.dims);
    read_key(j, "eval_repeats", c.eval_repeats);
    read_key(j, "eval_mode", c.eval_mode);
    std::string name;
    if (j.contains("penalty")) {
        read_key(j, "penalty", name);
        c.penalty = penalty_from_string(name);
    }
    if (j.contains("activation")) {
        read_key(j, "activation", name);
        c.activation = activation_from_string(name);
    }
    if (j.contains("kde_normalization")) {
        read_key(j, "kde_normalization", name);
        c.kde_normalization = density_normalization_from_string(name);
    }
    if (j.contains("schedule")) {
        const auto& s = j["schedule"];
        if (!s.is_array()) throw ConfigError("schedule must be an array of phases");
        c.schedule.clear();
        for (const auto& p : s) {
            detail::reject_unknown(p, {"lambda_m", "lambda_d", "epochs"}, "schedule phase");
            SchedulePhase ph{0.0, 0.0, 0};
            read_key(p, "lambda_m", ph.lambda_m);
            read_key(p, "lambda_d", ph.lambda_d);
            read_key(p, "epochs", ph.epochs);
            c.schedule.push_back(ph);
        }
    }
    if (j.contains("optimizer")) {
        const auto& o = j["optimizer"];
        detail::reject_unknown(o, {"step_size", "train_step_size", "beta1", "beta2", "epsilon"}, "optimizer");
        read_key(o, "step_size", c.optimizer.step_size);
        read_key(o, "train_step_size", c.optimizer.train_step_size);
        read_key(o, "beta1", c.optimizer.beta1);
        read_key(o, "beta2", c.optimizer.beta2);
        read_key(o, "epsilon", c.optimizer.epsilon);
    }
    return c;
}

/**
 * Reads a JSON config file. A top-level "preset" key selects the base values, otherwise the
 * given base is used.
 */
inline TrainConfig load_config(const std::string& path, const TrainConfig& base = {}) {
    std::string text = read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    TrainConfig start = base;
    if (j.is_object() && j.contains("preset")) {
        if (!j["preset"].is_string()) throw ConfigError("preset must be a string");
        start = preset_config(j["preset"].get<std::string>());
    }
    return config_from_json(j, start);
}

}  // namespace ruot
