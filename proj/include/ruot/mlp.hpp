#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ruot/error.hpp"
#include "ruot/rng.hpp"

/**
 * @file mlp.hpp
 *
 * @brief Small fully connected networks with exact input and parameter derivatives.
 *
 * A network maps the concatenated input `(x, t)` to an output vector. Besides the plain
 * forward pass, the forward sweep can carry tangents along selected input coordinates
 * (forward-mode derivatives), which yields input gradients, Jacobians, divergences and time
 * derivatives. The reverse sweep accepts adjoints for the outputs *and* for those tangents,
 * so any loss built from network values and their first input derivatives can be
 * differentiated exactly with respect to parameters and inputs.
 *
 * Batched data is stored column-wise: a batch of `B` inputs is an `input_dim x B` matrix.
 */

namespace ruot {

/// `square` (z^2) lets closed-form quadratic fields be written exactly as networks.
enum class Activation { tanh, softplus, silu, square };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::softplus: return "softplus";
        case Activation::silu: return "silu";
        case Activation::square: return "square";
    }
    return "unknown";
}

inline Activation activation_from_string(std::string_view name) {
    if (name == "tanh") return Activation::tanh;
    if (name == "softplus") return Activation::softplus;
    if (name == "silu") return Activation::silu;
    if (name == "square") return Activation::square;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

struct MlpSpec {
    /// State dimension plus one (time is the last input coordinate).
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_layers;
    std::size_t output_dim = 0;
    Activation activation = Activation::tanh;

    std::size_t num_layers() const { return hidden_layers.size() + 1; }

    std::size_t layer_inputs(std::size_t j) const { return j == 0 ? input_dim : hidden_layers[j - 1]; }

    std::size_t layer_outputs(std::size_t j) const {
        return j == hidden_layers.size() ? output_dim : hidden_layers[j];
    }

    std::size_t num_params() const {
        std::size_t n = 0;
        for (std::size_t j = 0; j < num_layers(); ++j) n += layer_inputs(j) * layer_outputs(j) + layer_outputs(j);
        return n;
    }

    void validate() const {
        if (input_dim < 2) throw ConfigError("mlp input_dim must be at least 2 (state plus time)");
        if (output_dim == 0) throw ConfigError("mlp output_dim must be positive");
        for (auto h : hidden_layers)
            if (h == 0) throw ConfigError("mlp hidden layer widths must be positive");
    }

    friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// Default architecture: three hidden tanh layers of width 64.
inline MlpSpec default_spec(std::size_t state_dim, std::size_t output_dim, std::size_t width = 64,
                            std::size_t depth = 3) {
    return MlpSpec{state_dim + 1, std::vector<std::size_t>(depth, width), output_dim, Activation::tanh};
}

struct DenseLayer {
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;
};

/**
 * Parameter-shaped storage. Holds either the parameters of a network or a gradient with
 * respect to them. The flat layout is layer by layer, weights in row-major order followed
 * by the bias.
 */
struct ParamSet {
    std::vector<DenseLayer> layers;

    static ParamSet zeros(const MlpSpec& spec) {
        ParamSet p;
        p.layers.reserve(spec.num_layers());
        for (std::size_t j = 0; j < spec.num_layers(); ++j) {
            auto out = static_cast<Eigen::Index>(spec.layer_outputs(j));
            auto in = static_cast<Eigen::Index>(spec.layer_inputs(j));
            p.layers.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
        }
        return p;
    }

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
        return n;
    }

    ParamSet& operator+=(const ParamSet& o) {
        for (std::size_t j = 0; j < layers.size(); ++j) {
            layers[j].weight += o.layers[j].weight;
            layers[j].bias += o.layers[j].bias;
        }
        return *this;
    }

    ParamSet& operator*=(double c) {
        for (auto& l : layers) {
            l.weight *= c;
            l.bias *= c;
        }
        return *this;
    }

    void set_zero() {
        for (auto& l : layers) {
            l.weight.setZero();
            l.bias.setZero();
        }
    }

    std::vector<double> flatten() const {
        std::vector<double> flat;
        flat.reserve(size());
        for (const auto& l : layers) {
            for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
                for (Eigen::Index c = 0; c < l.weight.cols(); ++c) flat.push_back(l.weight(r, c));
            for (Eigen::Index r = 0; r < l.bias.size(); ++r) flat.push_back(l.bias(r));
        }
        return flat;
    }

    void assign(std::span<const double> flat) {
        if (flat.size() != size())
            throw ShapeError("parameter vector has " + std::to_string(flat.size()) + " entries, expected " +
                             std::to_string(size()));
        std::size_t k = 0;
        for (auto& l : layers) {
            for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
                for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat[k++];
            for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = flat[k++];
        }
    }

    double squared_norm() const {
        double s = 0.0;
        for (const auto& l : layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
        return s;
    }

    bool all_finite() const {
        for (const auto& l : layers)
            if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
        return true;
    }
};

using ParamGradient = ParamSet;

class Mlp {
public:
    Mlp() = default;

    /// Network with all parameters zero.
    explicit Mlp(MlpSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        params_ = ParamSet::zeros(spec_);
    }

    Mlp(MlpSpec spec, ParamSet params) : spec_(std::move(spec)), params_(std::move(params)) {
        spec_.validate();
        check_shapes();
    }

    const MlpSpec& spec() const { return spec_; }
    const ParamSet& params() const { return params_; }
    ParamSet& params() { return params_; }

    std::size_t state_dim() const { return spec_.input_dim - 1; }
    std::size_t output_dim() const { return spec_.output_dim; }
    std::size_t num_params() const { return spec_.num_params(); }

    const DenseLayer& layer(std::size_t j) const { return params_.layers[j]; }

    void check_shapes() const {
        if (params_.layers.size() != spec_.num_layers()) throw ShapeError("mlp layer count does not match spec");
        for (std::size_t j = 0; j < spec_.num_layers(); ++j) {
            const auto& l = params_.layers[j];
            if (static_cast<std::size_t>(l.weight.rows()) != spec_.layer_outputs(j) ||
                static_cast<std::size_t>(l.weight.cols()) != spec_.layer_inputs(j) ||
                static_cast<std::size_t>(l.bias.size()) != spec_.layer_outputs(j))
                throw ShapeError("mlp layer " + std::to_string(j) + " has inconsistent shape");
        }
    }

private:
    MlpSpec spec_;
    ParamSet params_;
};

/// Uniform weights in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; hidden biases likewise, output bias zero.
inline Mlp mlp_init(const MlpSpec& spec, std::uint64_t seed) {
    Mlp net(spec);
    Rng rng(seed);
    auto& layers = net.params().layers;
    for (std::size_t j = 0; j < layers.size(); ++j) {
        double bound = 1.0 / std::sqrt(static_cast<double>(spec.layer_inputs(j)));
        auto& l = layers[j];
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = rng.uniform(-bound, bound);
        bool output_layer = j + 1 == layers.size();
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = output_layer ? 0.0 : rng.uniform(-bound, bound);
    }
    return net;
}

namespace detail {

inline Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& z) { return 1.0 / (1.0 + (-z).exp()); }

/// Applies the activation; optionally returns its first and second derivatives.
inline void activate(Activation act, const Eigen::MatrixXd& pre, Eigen::MatrixXd& out, Eigen::MatrixXd* d1,
                     Eigen::MatrixXd* d2) {
    auto z = pre.array();
    switch (act) {
        case Activation::tanh: {
            // 1 - 2 / (e^{2z} + 1) vectorizes through exp; Eigen's double tanh is scalar.
            out = (1.0 - 2.0 / ((2.0 * z).exp() + 1.0)).matrix();
            if (d1 || d2) {
                Eigen::ArrayXXd a = out.array();
                Eigen::ArrayXXd da = 1.0 - a.square();
                if (d2) *d2 = (-2.0 * a * da).matrix();
                if (d1) *d1 = da.matrix();
            }
            break;
        }
        case Activation::softplus: {
            out = (z.max(0.0) + (-z.abs()).exp().log1p()).matrix();
            if (d1 || d2) {
                Eigen::ArrayXXd s = sigmoid(z);
                if (d2) *d2 = (s * (1.0 - s)).matrix();
                if (d1) *d1 = s.matrix();
            }
            break;
        }
        case Activation::silu: {
            Eigen::ArrayXXd s = sigmoid(z);
            out = (z * s).matrix();
            if (d1) *d1 = (s + z * s * (1.0 - s)).matrix();
            if (d2) *d2 = (s * (1.0 - s) * (2.0 + z * (1.0 - 2.0 * s))).matrix();
            break;
        }
        case Activation::square: {
            out = z.square().matrix();
            if (d1) *d1 = (2.0 * z).matrix();
            if (d2) *d2 = Eigen::MatrixXd::Constant(pre.rows(), pre.cols(), 2.0);
            break;
        }
    }
}

}  // namespace detail

/// Stacks states (d x B) and a shared time into a network input ((d+1) x B).
inline Eigen::MatrixXd mlp_input(const Eigen::MatrixXd& states, double t) {
    Eigen::MatrixXd in(states.rows() + 1, states.cols());
    in.topRows(states.rows()) = states;
    in.row(states.rows()).setConstant(t);
    return in;
}

/// Stacks states (d x B) and per-column times into a network input.
inline Eigen::MatrixXd mlp_input(const Eigen::MatrixXd& states, const Eigen::VectorXd& times) {
    if (times.size() != states.cols()) throw ShapeError("time vector length does not match batch size");
    Eigen::MatrixXd in(states.rows() + 1, states.cols());
    in.topRows(states.rows()) = states;
    in.row(states.rows()) = times.transpose();
    return in;
}

/// Forward pass on a prepared input matrix ((d+1) x B).
inline Eigen::MatrixXd mlp_apply(const Mlp& net, const Eigen::MatrixXd& input) {
    if (static_cast<std::size_t>(input.rows()) != net.spec().input_dim)
        throw ShapeError("mlp input has " + std::to_string(input.rows()) + " rows, expected " +
                         std::to_string(net.spec().input_dim));
    const std::size_t L = net.spec().num_layers();
    Eigen::MatrixXd a = input;
    for (std::size_t j = 0; j < L; ++j) {
        const auto& l = net.layer(j);
        Eigen::MatrixXd pre = l.weight * a;
        pre.colwise() += l.bias;
        if (j + 1 == L)
            a = std::move(pre);
        else
            detail::activate(net.spec().activation, pre, a, nullptr, nullptr);
    }
    return a;
}

inline Eigen::MatrixXd mlp_forward_batch(const Mlp& net, const Eigen::MatrixXd& states, double t) {
    return mlp_apply(net, mlp_input(states, t));
}

inline Eigen::MatrixXd mlp_forward_batch(const Mlp& net, const Eigen::MatrixXd& states, const Eigen::VectorXd& times) {
    return mlp_apply(net, mlp_input(states, times));
}

inline Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& x, double t) {
    if (static_cast<std::size_t>(x.size()) + 1 != net.spec().input_dim)
        throw ShapeError("state has dimension " + std::to_string(x.size()) + ", network expects " +
                         std::to_string(net.state_dim()));
    return mlp_forward_batch(net, Eigen::MatrixXd(x), t).col(0);
}

/**
 * Cached forward sweep with tangents along unit input directions.
 *
 * `directions[k]` is an input coordinate index; `output_tangents[k]` holds the derivative of
 * the output with respect to that coordinate, per batch column.
 */
struct MlpTape {
    std::vector<std::size_t> directions;
    std::vector<Eigen::MatrixXd> layer_inputs;                // [j]: input to layer j; [0] is the network input
    std::vector<Eigen::MatrixXd> d1, d2;                      // [j]: activation derivatives at hidden layer j
    std::vector<std::vector<Eigen::MatrixXd>> tangent_inputs; // [k][j]: tangent of layer_inputs[j], j >= 1
    std::vector<std::vector<Eigen::MatrixXd>> tangent_pre;    // [k][j]: W_j * tangent of layer_inputs[j]
    Eigen::MatrixXd output;
    std::vector<Eigen::MatrixXd> output_tangents;

    Eigen::Index batch() const { return output.cols(); }
};

inline void mlp_forward_tape(const Mlp& net, const Eigen::MatrixXd& input, std::span<const std::size_t> directions,
                             MlpTape& tape) {
    const auto& spec = net.spec();
    if (static_cast<std::size_t>(input.rows()) != spec.input_dim) throw ShapeError("mlp input row count mismatch");
    for (auto dir : directions)
        if (dir >= spec.input_dim) throw ShapeError("tangent direction out of range");

    const std::size_t L = spec.num_layers();
    const std::size_t K = directions.size();
    const Eigen::Index B = input.cols();
    tape.directions.assign(directions.begin(), directions.end());
    tape.layer_inputs.assign(L, {});
    tape.d1.assign(L - 1, {});
    tape.d2.assign(L - 1, {});
    tape.tangent_inputs.assign(K, std::vector<Eigen::MatrixXd>(L));
    tape.tangent_pre.assign(K, std::vector<Eigen::MatrixXd>(L));
    tape.layer_inputs[0] = input;

    for (std::size_t j = 0; j < L; ++j) {
        const auto& l = net.layer(j);
        Eigen::MatrixXd pre = l.weight * tape.layer_inputs[j];
        pre.colwise() += l.bias;
        for (std::size_t k = 0; k < K; ++k) {
            if (j == 0)
                tape.tangent_pre[k][0] = l.weight.col(static_cast<Eigen::Index>(directions[k])).replicate(1, B);
            else
                tape.tangent_pre[k][j].noalias() = l.weight * tape.tangent_inputs[k][j];
        }
        if (j + 1 == L) {
            tape.output = std::move(pre);
            tape.output_tangents.assign(K, {});
            for (std::size_t k = 0; k < K; ++k) tape.output_tangents[k] = tape.tangent_pre[k][j];
        } else {
            detail::activate(spec.activation, pre, tape.layer_inputs[j + 1], &tape.d1[j], K > 0 ? &tape.d2[j] : nullptr);
            for (std::size_t k = 0; k < K; ++k)
                tape.tangent_inputs[k][j + 1] = tape.d1[j].cwiseProduct(tape.tangent_pre[k][j]);
        }
    }
}

/**
 * Reverse sweep through a taped forward pass.
 *
 * @param output_adj   adjoint of the output (output_dim x B), or nullptr for zero.
 * @param tangent_adj  adjoints of the output tangents, one per tape direction, or nullptr.
 * @param grad         parameter gradient, accumulated in place.
 * @param input_adj    if non-null, receives the adjoint of the network input ((d+1) x B).
 */
inline void mlp_backward(const Mlp& net, const MlpTape& tape, const Eigen::MatrixXd* output_adj,
                         const std::vector<Eigen::MatrixXd>* tangent_adj, ParamGradient& grad,
                         Eigen::MatrixXd* input_adj) {
    const auto& spec = net.spec();
    const std::size_t L = spec.num_layers();
    const std::size_t K = tape.directions.size();
    const Eigen::Index B = tape.batch();
    if (tangent_adj && tangent_adj->size() != K) throw ShapeError("tangent adjoint count does not match tape");

    Eigen::MatrixXd a_bar =
        output_adj ? *output_adj : Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(spec.output_dim), B);
    std::vector<Eigen::MatrixXd> t_bar(K);
    for (std::size_t k = 0; k < K; ++k)
        t_bar[k] = tangent_adj ? (*tangent_adj)[k]
                               : Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(spec.output_dim), B);

    Eigen::MatrixXd p_bar;
    std::vector<Eigen::MatrixXd> tp_bar(K);
    for (std::size_t jj = L; jj-- > 0;) {
        const auto& l = net.layer(jj);
        if (jj + 1 == L) {
            p_bar = a_bar;
            for (std::size_t k = 0; k < K; ++k) tp_bar[k] = t_bar[k];
        } else {
            p_bar = tape.d1[jj].cwiseProduct(a_bar);
            for (std::size_t k = 0; k < K; ++k) {
                p_bar.array() += tape.d2[jj].array() * tape.tangent_pre[k][jj].array() * t_bar[k].array();
                tp_bar[k] = tape.d1[jj].cwiseProduct(t_bar[k]);
            }
        }
        auto& g = grad.layers[jj];
        g.weight.noalias() += p_bar * tape.layer_inputs[jj].transpose();
        g.bias += p_bar.rowwise().sum();
        for (std::size_t k = 0; k < K; ++k) {
            if (jj == 0)
                g.weight.col(static_cast<Eigen::Index>(tape.directions[k])) += tp_bar[k].rowwise().sum();
            else
                g.weight.noalias() += tp_bar[k] * tape.tangent_inputs[k][jj].transpose();
        }
        if (jj > 0 || input_adj) a_bar.noalias() = l.weight.transpose() * p_bar;
        if (jj > 0)
            for (std::size_t k = 0; k < K; ++k) t_bar[k].noalias() = l.weight.transpose() * tp_bar[k];
    }
    if (input_adj) *input_adj = std::move(a_bar);
}

/// Indices 0..d-1 of the state coordinates of a network input.
inline std::vector<std::size_t> state_directions(const Mlp& net) {
    std::vector<std::size_t> dirs(net.state_dim());
    for (std::size_t i = 0; i < dirs.size(); ++i) dirs[i] = i;
    return dirs;
}

/// Jacobian of the output with respect to the state (rows = outputs, cols = state dims).
inline Eigen::MatrixXd mlp_grad_input(const Mlp& net, const Eigen::VectorXd& x, double t) {
    if (static_cast<std::size_t>(x.size()) != net.state_dim()) throw ShapeError("state dimension mismatch");
    MlpTape tape;
    auto dirs = state_directions(net);
    mlp_forward_tape(net, mlp_input(Eigen::MatrixXd(x), t), dirs, tape);
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(net.output_dim()), static_cast<Eigen::Index>(dirs.size()));
    for (std::size_t k = 0; k < dirs.size(); ++k) jac.col(static_cast<Eigen::Index>(k)) = tape.output_tangents[k].col(0);
    return jac;
}

/// Gradient of a scalar network with respect to the state, batched (d x B).
inline Eigen::MatrixXd mlp_state_gradient(const Mlp& net, const Eigen::MatrixXd& states, double t) {
    if (net.output_dim() != 1) throw ShapeError("state gradient requires a scalar network");
    MlpTape tape;
    auto dirs = state_directions(net);
    mlp_forward_tape(net, mlp_input(states, t), dirs, tape);
    Eigen::MatrixXd g(states.rows(), states.cols());
    for (std::size_t k = 0; k < dirs.size(); ++k) g.row(static_cast<Eigen::Index>(k)) = tape.output_tangents[k].row(0);
    return g;
}

}  // namespace ruot
