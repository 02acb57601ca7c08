#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace ruot {

/// SplitMix64 finalizer; used to expand one master seed into independent streams.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Deterministic child seed for (master, stream tag, index).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag, std::uint64_t index = 0) {
    return mix_seed(mix_seed(mix_seed(master) ^ tag) ^ index);
}

/// Stream tags for derive_seed. Values are part of the reproducibility contract.
namespace seed_tag {
inline constexpr std::uint64_t init_velocity = 0x11;
inline constexpr std::uint64_t init_growth = 0x12;
inline constexpr std::uint64_t init_score = 0x13;
inline constexpr std::uint64_t batch = 0x21;
inline constexpr std::uint64_t score_pairs = 0x22;
inline constexpr std::uint64_t score_bridge = 0x23;
inline constexpr std::uint64_t collocation = 0x24;
inline constexpr std::uint64_t ot_targets = 0x25;
inline constexpr std::uint64_t eval = 0x31;
inline constexpr std::uint64_t sde = 0x32;
}  // namespace seed_tag

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(mix_seed(seed)) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

    Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
        return m;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace ruot
