#pragma once

#include <cmath>

#include "ruot/error.hpp"
#include "ruot/mlp.hpp"

namespace ruot {

/// Adam with bias correction; one instance per network.
class Adam {
public:
    Adam(const MlpSpec& spec, double step_size, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
        : m_(ParamSet::zeros(spec)), v_(ParamSet::zeros(spec)), lr_(step_size), b1_(beta1), b2_(beta2), eps_(epsilon) {}

    std::size_t steps() const { return t_; }
    void set_step_size(double lr) { lr_ = lr; }

    /// Descends along `grad`. If `clip` > 0 the gradient is rescaled to norm at most `clip` first.
    void step(ParamSet& params, const ParamGradient& grad, double clip = 0.0) {
        if (!grad.all_finite()) throw NumericError("non-finite gradient at optimizer step " + std::to_string(t_ + 1));
        double scale = 1.0;
        if (clip > 0.0) {
            double norm = std::sqrt(grad.squared_norm());
            if (norm > clip) scale = clip / norm;
        }
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        for (std::size_t j = 0; j < params.layers.size(); ++j) {
            update(params.layers[j].weight, grad.layers[j].weight, m_.layers[j].weight, v_.layers[j].weight, scale, c1, c2);
            update(params.layers[j].bias, grad.layers[j].bias, m_.layers[j].bias, v_.layers[j].bias, scale, c1, c2);
        }
    }

private:
    template <class P, class G>
    void update(P& p, const G& g, P& m, P& v, double scale, double c1, double c2) const {
        m = b1_ * m + (1.0 - b1_) * scale * g;
        v = b2_ * v + (1.0 - b2_) * (scale * g).cwiseAbs2();
        p.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    }

    ParamSet m_, v_;
    double lr_, b1_, b2_, eps_;
    std::size_t t_ = 0;
};

}  // namespace ruot
