#pragma once

#include <cstdint>

#include "ruot/mlp.hpp"
#include "ruot/rng.hpp"

namespace ruot {

/// The three learned fields: probability-flow velocity v, growth rate g, and scaled log density s.
struct RuotNets {
    Mlp velocity;
    Mlp growth;
    Mlp score;

    std::size_t state_dim() const { return velocity.state_dim(); }

    void check() const {
        if (velocity.output_dim() != velocity.state_dim())
            throw ShapeError("velocity network output must match the state dimension");
        if (growth.output_dim() != 1 || score.output_dim() != 1)
            throw ShapeError("growth and score networks must be scalar");
        if (growth.state_dim() != velocity.state_dim() || score.state_dim() != velocity.state_dim())
            throw ShapeError("networks disagree on the state dimension");
    }
};

struct NetGrads {
    ParamGradient velocity;
    ParamGradient growth;
    ParamGradient score;

    static NetGrads zeros(const RuotNets& nets) {
        return {ParamSet::zeros(nets.velocity.spec()), ParamSet::zeros(nets.growth.spec()),
                ParamSet::zeros(nets.score.spec())};
    }

    NetGrads& operator+=(const NetGrads& o) {
        velocity += o.velocity;
        growth += o.growth;
        score += o.score;
        return *this;
    }

    NetGrads& operator*=(double c) {
        velocity *= c;
        growth *= c;
        score *= c;
        return *this;
    }

    bool all_finite() const { return velocity.all_finite() && growth.all_finite() && score.all_finite(); }
};

inline RuotNets make_nets(std::size_t state_dim, const std::vector<std::size_t>& hidden, Activation act,
                          std::uint64_t seed) {
    MlpSpec vs{state_dim + 1, hidden, state_dim, act};
    MlpSpec ss{state_dim + 1, hidden, 1, act};
    return {mlp_init(vs, derive_seed(seed, seed_tag::init_velocity)),
            mlp_init(ss, derive_seed(seed, seed_tag::init_growth)),
            mlp_init(ss, derive_seed(seed, seed_tag::init_score))};
}

}  // namespace ruot
