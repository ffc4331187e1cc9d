/// @file rng.hpp
/// @brief Per-trajectory random streams keyed by (root seed, trajectory index).
#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace vortex {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed of stream `index` (and optional sub-stream) under `root`.  Adding
/// trajectories never changes the seeds of existing ones.
constexpr std::uint64_t stream_seed(std::uint64_t root, std::uint64_t index, std::uint64_t sub = 0) {
    return splitmix64(splitmix64(root) ^ splitmix64(index * 0xD1B54A32D192ED03ULL + sub));
}

class GaussianStream {
public:
    GaussianStream() = default;
    explicit GaussianStream(std::uint64_t seed) : eng_(seed) {}
    GaussianStream(std::uint64_t root, std::uint64_t index, std::uint64_t sub = 0) : eng_(stream_seed(root, index, sub)) {}

    double normal() { return nd_(eng_); }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(eng_); }

    /// Brownian increments: iid N(0, dt) per entry.
    void increments(Eigen::VectorXd& out, double dt) {
        const double s = std::sqrt(dt);
        for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = s * nd_(eng_);
    }

    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_{0};
    std::normal_distribution<double> nd_{0.0, 1.0};
};

}  // namespace vortex
