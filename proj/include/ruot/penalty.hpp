#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <string_view>

#include "ruot/error.hpp"

namespace ruot {

enum class PenaltyKind { quadratic, death_only, birth_only, symmetric_branching };

inline std::string to_string(PenaltyKind k) {
    switch (k) {
        case PenaltyKind::quadratic: return "quadratic";
        case PenaltyKind::death_only: return "death_only";
        case PenaltyKind::birth_only: return "birth_only";
        case PenaltyKind::symmetric_branching: return "symmetric_branching";
    }
    return "unknown";
}

inline PenaltyKind penalty_from_string(std::string_view name) {
    if (name == "quadratic") return PenaltyKind::quadratic;
    if (name == "death_only") return PenaltyKind::death_only;
    if (name == "birth_only") return PenaltyKind::birth_only;
    if (name == "symmetric_branching") return PenaltyKind::symmetric_branching;
    throw ConfigError("unknown growth penalty '" + std::string(name) + "'");
}

/**
 * Convex cost Psi(g) on the growth rate, weighted by `alpha` in the action.
 *
 * The three branching kinds are Legendre transforms of branching-mechanism generators with
 * unit diffusivity and unit branching rate:
 *   death_only:          Psi*(s) = exp(-s) - 1          =>  Psi(g) = 1 + g - g log(-g),  g <= 0
 *   birth_only:          Psi*(s) = exp(s) - 1           =>  Psi(g) = 1 - g + g log(g),   g >= 0
 *   symmetric_branching: Psi*(s) = cosh(s) - 1          =>  Psi(g) = sup_s g s - Psi*(s)
 */
struct GrowthPenalty {
    PenaltyKind kind = PenaltyKind::quadratic;
    double alpha = 1.0;
};

namespace detail {

inline void check_penalty_domain(PenaltyKind kind, double g) {
    if (!std::isfinite(g)) throw DomainError(to_string(kind) + " penalty: growth rate is not finite");
    if (kind == PenaltyKind::death_only && g > 0.0)
        throw DomainError("death_only penalty is defined for g <= 0, got " + std::to_string(g));
    if (kind == PenaltyKind::birth_only && g < 0.0)
        throw DomainError("birth_only penalty is defined for g >= 0, got " + std::to_string(g));
}

/// Maximizer s of g s - (cosh s - 1), i.e. the root of sinh(s) = g, by Newton iteration.
inline double branching_conjugate_argmax(double g) {
    double s = std::copysign(std::log1p(2.0 * std::abs(g)), g);
    for (int it = 0; it < 100; ++it) {
        double step = (std::sinh(s) - g) / std::cosh(s);
        s -= step;
        if (std::abs(step) <= 1e-15 * (1.0 + std::abs(s))) break;
    }
    return s;
}

}  // namespace detail

/// Psi(g) for the penalty kind (without the alpha weight).
inline double growth_penalty_eval(PenaltyKind kind, double g) {
    detail::check_penalty_domain(kind, g);
    switch (kind) {
        case PenaltyKind::quadratic: return g * g;
        case PenaltyKind::death_only: return g == 0.0 ? 1.0 : 1.0 + g - g * std::log(-g);
        case PenaltyKind::birth_only: return g == 0.0 ? 1.0 : 1.0 - g + g * std::log(g);
        case PenaltyKind::symmetric_branching: {
            double s = detail::branching_conjugate_argmax(g);
            double half = std::sinh(0.5 * s);
            return g * s - 2.0 * half * half;
        }
    }
    return 0.0;
}

inline double growth_penalty_eval(const GrowthPenalty& pen, double g) { return growth_penalty_eval(pen.kind, g); }

/// dPsi/dg.
inline double growth_penalty_derivative(PenaltyKind kind, double g) {
    detail::check_penalty_domain(kind, g);
    switch (kind) {
        case PenaltyKind::quadratic: return 2.0 * g;
        case PenaltyKind::death_only:
            return g == 0.0 ? std::numeric_limits<double>::infinity() : -std::log(-g);
        case PenaltyKind::birth_only:
            return g == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(g);
        case PenaltyKind::symmetric_branching: return detail::branching_conjugate_argmax(g);
    }
    return 0.0;
}

inline double growth_penalty_derivative(const GrowthPenalty& pen, double g) {
    return growth_penalty_derivative(pen.kind, g);
}

}  // namespace ruot
