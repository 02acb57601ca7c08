#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ruot/config.hpp"
#include "ruot/dataset.hpp"
#include "ruot/dynamics.hpp"
#include "ruot/error.hpp"
#include "ruot/evaluation.hpp"
#include "ruot/io.hpp"
#include "ruot/synthdata.hpp"
#include "ruot/training.hpp"

namespace ruot::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kIo = 3,
    kFormat = 4,
    kConfig = 5,
    kNumeric = 6,
};

struct Command {
    std::string name;  // simulate | train | eval | sample | landscape
    bool help = false;
    std::string help_text;

    // global
    std::string config_path;
    std::string preset;
    std::string output_dir;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;  // key=value with JSON values
    int verbosity = 1;

    std::string out;
    std::string data;
    std::string checkpoint;

    // simulate
    std::string generator = "grn";
    std::size_t cells_per_cluster = 250;
    std::optional<double> alpha_g;
    std::size_t dim = 10;

    // eval
    bool identity = false;
    bool unweighted = false;
    std::optional<std::size_t> repeats;
    std::string mode;

    // sample
    std::string dynamics = "ode";
    bool all_nodes = false;

    // landscape
    std::vector<double> lower{-1.0, -1.0}, upper{3.0, 3.0};
    std::vector<std::size_t> resolution{50, 50};
    std::vector<std::size_t> axes;
    double time = 0.0;
};

namespace detail {

inline void add_globals(CLI::App& app, Command& c) {
    app.add_option("--config", c.config_path, "JSON config file (overrides the preset)");
    app.add_option("--preset", c.preset, "built-in parameters: grn, hematopoiesis, gauss10d");
    app.add_option("--output-dir", c.output_dir, "directory for default output paths (env RUOT_OUTPUT_DIR)");
    app.add_option("--seed", c.seed, "master seed");
    app.add_option("--set", c.overrides, "config override key=value, value in JSON syntax (repeatable)");
    app.add_flag("-v,--verbose", [&c](std::int64_t n) { c.verbosity = 1 + static_cast<int>(n); }, "more progress output");
    app.add_flag("-q,--quiet", [&c](std::int64_t) { c.verbosity = 0; }, "no progress output");
}

}  // namespace detail

/// Parses argv (without the program name). Throws UsageError naming the offending token.
inline Command parse_args(const std::vector<std::string>& args) {
    Command c;
    CLI::App app{"Unbalanced stochastic dynamics from snapshot data", "ruot"};
    app.require_subcommand(1);

    auto* sim = app.add_subcommand("simulate", "generate a synthetic snapshot dataset");
    detail::add_globals(*sim, c);
    sim->add_option("--generator", c.generator, "grn or gauss")->check(CLI::IsMember({"grn", "gauss"}));
    sim->add_option("--cells", c.cells_per_cluster, "GRN initial cells per cluster");
    sim->add_option("--alpha-g", c.alpha_g, "GRN division-rate scale in percent");
    sim->add_option("--dim", c.dim, "Gaussian-mixture dimension");
    sim->add_option("--out", c.out, "output CSV");

    auto* train = app.add_subcommand("train", "run pre-training and training, writing a checkpoint per stage");
    detail::add_globals(*train, c);
    train->add_option("--data", c.data, "snapshot CSV")->required();
    train->add_option("--out", c.out, "checkpoint directory");

    auto* ev = app.add_subcommand("eval", "W1/W2 between pushed-forward initial data and each snapshot");
    detail::add_globals(*ev, c);
    ev->add_option("--data", c.data, "snapshot CSV")->required();
    ev->add_option("--checkpoint", c.checkpoint, "checkpoint JSON");
    ev->add_flag("--identity", c.identity, "score the data against itself instead of a model");
    ev->add_flag("--unweighted", c.unweighted, "ignore learned weights");
    ev->add_option("--repeats", c.repeats, "evaluation repeats");
    ev->add_option("--mode", c.mode, "all or matched")->check(CLI::IsMember({"all", "matched"}));
    ev->add_option("--out", c.out, "metrics CSV");

    auto* sample = app.add_subcommand("sample", "trajectories from a checkpoint, started at the initial snapshot");
    detail::add_globals(*sample, c);
    sample->add_option("--checkpoint", c.checkpoint, "checkpoint JSON")->required();
    sample->add_option("--data", c.data, "snapshot CSV providing the initial points")->required();
    sample->add_option("--dynamics", c.dynamics, "ode or sde")->check(CLI::IsMember({"ode", "sde"}));
    sample->add_flag("--all-nodes", c.all_nodes, "write every integration node, not only snapshot times");
    sample->add_option("--out", c.out, "trajectory CSV");

    auto* land = app.add_subcommand("landscape", "export U = -s on a grid");
    detail::add_globals(*land, c);
    land->add_option("--checkpoint", c.checkpoint, "checkpoint JSON")->required();
    land->add_option("--lower", c.lower, "lower bound per axis")->expected(1, 2);
    land->add_option("--upper", c.upper, "upper bound per axis")->expected(1, 2);
    land->add_option("--resolution", c.resolution, "grid nodes per axis")->expected(1, 2);
    land->add_option("--axes", c.axes, "state coordinates spanned by the grid")->expected(1, 2);
    land->add_option("--time", c.time, "network time");
    land->add_option("--out", c.out, "landscape CSV");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        c.help = true;
        for (auto* sub : app.get_subcommands()) c.help_text = sub->help();
        if (c.help_text.empty()) c.help_text = app.help();
        c.name = app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name();
        return c;
    } catch (const CLI::CallForAllHelp&) {
        c.help = true;
        c.help_text = app.help("", CLI::AppFormatMode::All);
        return c;
    } catch (const CLI::ParseError& e) {
        std::string msg = e.what();
        if (app.get_subcommands().empty() && !args.empty() && msg.find(args.front()) == std::string::npos)
            msg = "unknown subcommand '" + args.front() + "': " + msg;
        throw UsageError(msg);
    }
    c.name = app.get_subcommands().front()->get_name();
    return c;
}

// ---------------------------------------------------------------------------------------------

namespace detail {

inline std::string default_path(const Command& c, const std::string& file) {
    std::string dir = c.output_dir;
    if (dir.empty())
        if (const char* env = std::getenv("RUOT_OUTPUT_DIR")) dir = env;
    if (dir.empty()) return file;
    return (std::filesystem::path(dir) / file).string();
}

inline std::string output_path(const Command& c, const std::string& file) {
    return c.out.empty() ? default_path(c, file) : c.out;
}

inline void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& overrides) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& o : overrides) {
        auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + o + "'");
        std::string key = o.substr(0, eq), value = o.substr(eq + 1);
        nlohmann::json v;
        try {
            v = nlohmann::json::parse(value);
        } catch (const nlohmann::json::parse_error&) {
            v = value;  // bare strings
        }
        j[key] = v;
    }
    if (!j.empty()) cfg = config_from_json(j, cfg);
}

/// preset < config file < flags.
inline TrainConfig resolve_config(const Command& c, std::optional<TrainConfig> base = std::nullopt) {
    TrainConfig cfg = base ? *base : TrainConfig{};
    if (!c.preset.empty()) cfg = preset_config(c.preset);
    if (!c.config_path.empty()) cfg = load_config(c.config_path, cfg);
    apply_overrides(cfg, c.overrides);
    if (c.seed) cfg.seed = *c.seed;
    cfg.validate();
    return cfg;
}

inline ProgressFn progress_printer(const Command& c, std::ostream& err) {
    if (c.verbosity <= 0) return {};
    return [&err, v = c.verbosity](const std::string& stage, std::size_t epoch, double loss) {
        if (v >= 2 || stage == "train" || epoch % 5 == 0 || stage.rfind("pretrain_score", 0) == 0)
            err << stage << " " << epoch << " loss " << loss << "\n";
    };
}

inline int run_simulate(const Command& c, std::ostream& out) {
    const std::uint64_t seed = c.seed.value_or(0);
    SnapshotDataset data;
    std::string file;
    if (c.generator == "grn") {
        GrnParams p;
        if (c.alpha_g) p.alpha_g = *c.alpha_g;
        data = simulate_grn(p, c.cells_per_cluster, seed).data;
        file = "grn.csv";
    } else {
        data = simulate_gaussian_mixture(c.dim, seed);
        file = "gauss.csv";
    }
    std::string path = output_path(c, file);
    save_csv(data, path);
    out << "wrote " << path << " (";
    for (std::size_t k = 0; k < data.num_times(); ++k) out << (k ? " " : "") << data.count(k);
    out << " points)\n";
    return kOk;
}

inline int run_train(const Command& c, std::ostream& out, std::ostream& err) {
    TrainConfig cfg = resolve_config(c);
    SnapshotDataset data = learning_view(load_csv(c.data), cfg);
    std::filesystem::path dir = output_path(c, "checkpoints");
    write_file_atomic((dir / "config.json").string(), to_json(cfg).dump(1) + "\n");
    train_pipeline(
        data, cfg,
        [&](const Checkpoint& ck) {
            std::string path = (dir / (ck.stage + ".json")).string();
            save_checkpoint(path, ck);
            out << "wrote " << path << "\n";
        },
        progress_printer(c, err));
    return kOk;
}

inline int run_eval(const Command& c, std::ostream& out) {
    std::optional<Checkpoint> ck;
    if (!c.identity) {
        if (c.checkpoint.empty()) throw UsageError("eval needs --checkpoint or --identity");
        ck = load_checkpoint(c.checkpoint);
    }
    TrainConfig cfg = resolve_config(c, ck ? std::optional<TrainConfig>(ck->config) : std::nullopt);
    if (!c.mode.empty()) cfg.eval_mode = c.mode;
    const std::size_t repeats = c.repeats.value_or(cfg.eval_repeats);
    SnapshotDataset data = learning_view(load_csv(c.data), cfg);
    MetricsTable table =
        c.identity ? evaluate_prediction(identity_prediction(data), data, eval_mode_from_string(cfg.eval_mode), repeats, cfg.seed)
                   : evaluate_model(ck->nets, data, cfg, repeats, !c.unweighted);
    std::string path = output_path(c, "metrics.csv");
    write_file_atomic(path, metrics_to_csv(table));
    out << metrics_to_text(table) << "wrote " << path << "\n";
    return kOk;
}

inline int run_sample(const Command& c, std::ostream& out) {
    Checkpoint ck = load_checkpoint(c.checkpoint);
    TrainConfig cfg = resolve_config(c, ck.config);
    SnapshotDataset data = learning_view(load_csv(c.data), cfg);
    if (ck.nets.state_dim() != data.dim) throw ShapeError("checkpoint dimension does not match the data");
    TimeGrid grid = training_grid(data, cfg);
    const Eigen::MatrixXd& x0 = data.clouds[0];
    Trajectory ode = integrate(ck.nets.velocity, ck.nets.growth, uniform_particles(x0), grid);
    Trajectory path = c.dynamics == "sde"
                          ? sample_sde(ck.nets.velocity, ck.nets.score, {cfg.sigma}, x0, grid,
                                       derive_seed(cfg.seed, seed_tag::sde))
                          : ode;
    std::string text = "time,particle,log_weight";
    for (std::size_t j = 0; j < data.dim; ++j) text += ",x" + std::to_string(j);
    text += '\n';
    for (std::size_t n = 0; n < path.num_nodes(); ++n) {
        const double t = path.times[n];
        if (!c.all_nodes && std::abs(t - std::round(t)) > 1e-9) continue;
        const Eigen::MatrixXd& x = path.positions[n];
        for (Eigen::Index i = 0; i < x.cols(); ++i) {
            ruot::detail::append_double(text, t);
            text += ',' + std::to_string(i) + ',';
            ruot::detail::append_double(text, ode.log_weights[n](i));
            for (Eigen::Index j = 0; j < x.rows(); ++j) {
                text += ',';
                ruot::detail::append_double(text, x(j, i));
            }
            text += '\n';
        }
    }
    std::string file = output_path(c, "samples.csv");
    write_file_atomic(file, text);
    out << "wrote " << file << "\n";
    return kOk;
}

inline int run_landscape(const Command& c, std::ostream& out) {
    Checkpoint ck = load_checkpoint(c.checkpoint);
    TrainConfig cfg = resolve_config(c, ck.config);
    std::size_t n = c.lower.size();
    auto widen = [n](auto v) {
        if (v.size() == 1 && n == 2) v.push_back(v[0]);
        return v;
    };
    LandscapeGrid g = landscape_grid(ck.nets.score, c.lower, widen(c.upper), widen(c.resolution), c.time, c.axes);
    std::string path = output_path(c, "landscape.csv");
    write_file_atomic(path, landscape_to_csv(g));
    write_file_atomic(path + ".meta.json", landscape_meta(g, cfg.sigma).dump(1) + "\n");
    out << "wrote " << path << " (" << g.size() << " values)\n";
    return kOk;
}

}  // namespace detail

/// Executes a parsed command; errors map to distinct exit codes.
inline int run(const Command& c, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    if (c.help) {
        out << c.help_text;
        return kOk;
    }
    try {
        if (c.name == "simulate") return detail::run_simulate(c, out);
        if (c.name == "train") return detail::run_train(c, out, err);
        if (c.name == "eval") return detail::run_eval(c, out);
        if (c.name == "sample") return detail::run_sample(c, out);
        if (c.name == "landscape") return detail::run_landscape(c, out);
        err << "error: unknown subcommand '" << c.name << "'\n";
        return kUsage;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const ShapeError& e) {
        err << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return kIo;
    } catch (const FormatError& e) {
        err << "format error: " << e.what() << "\n";
        return kFormat;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << "\n";
        return kFormat;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return kNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
}

/// Parse and run; the process entry point.
inline int main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<std::string> args(argv + 1, argv + argc);
    Command c;
    try {
        c = parse_args(args);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\nrun 'ruot --help' for usage\n";
        return kUsage;
    }
    return run(c, out, err);
}

}  // namespace ruot::cli
