/// @file lattice.hpp
/// @brief Truncated wavenumber lattice with the real sin/cos basis split.
///
/// Modes come in pairs.  Index 2p is sin(k.x) for a representative k of the
/// upper half plane (k2 > 0, or k2 == 0 and k1 > 0); index 2p+1 is the cosine
/// mode stored under -k.  Pairs are sorted by |k|^2 so every Euclidean band
/// |k| <= N is a prefix of the mode list.
#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace vortex {

struct Mode {
    int k1 = 0;
    int k2 = 0;

    [[nodiscard]] constexpr int norm_sq() const { return k1 * k1 + k2 * k2; }
    [[nodiscard]] constexpr int norm_inf() const {
        int a = k1 < 0 ? -k1 : k1;
        int b = k2 < 0 ? -k2 : k2;
        return a > b ? a : b;
    }
    [[nodiscard]] constexpr bool upper() const { return k2 > 0 || (k2 == 0 && k1 > 0); }
    constexpr Mode operator-() const { return {-k1, -k2}; }
    friend constexpr bool operator==(const Mode&, const Mode&) = default;
};

class Lattice {
public:
    Lattice(int M, int N) : M_(M), N_(N) {
        if (M < 1) throw std::invalid_argument("lattice: M must be >= 1");
        if (M > 512) throw std::invalid_argument("lattice: M must be <= 512");
        if (N < 1) throw std::invalid_argument("lattice: N must be >= 1");
        if (N > M) throw std::invalid_argument("lattice: noise band N must not exceed truncation M");

        std::vector<Mode> reps;
        for (int k2 = 0; k2 <= M; ++k2)
            for (int k1 = -M; k1 <= M; ++k1) {
                Mode k{k1, k2};
                if (k.upper()) reps.push_back(k);
            }
        std::sort(reps.begin(), reps.end(), [](const Mode& a, const Mode& b) {
            return std::make_tuple(a.norm_sq(), a.k2, a.k1) < std::make_tuple(b.norm_sq(), b.k2, b.k1);
        });

        modes_.reserve(2 * reps.size());
        for (const Mode& k : reps) {
            modes_.push_back(k);
            modes_.push_back(-k);
        }
        const int cut = (2 * M) / 3;
        ksq_.resize(modes_.size());
        dealias_.resize(modes_.size());
        for (std::size_t i = 0; i < modes_.size(); ++i) {
            ksq_[i] = static_cast<double>(modes_[i].norm_sq());
            dealias_[i] = modes_[i].norm_inf() <= cut;
        }
        band_ = band_size(N);
    }

    [[nodiscard]] int M() const { return M_; }
    [[nodiscard]] int N() const { return N_; }
    [[nodiscard]] std::size_t size() const { return modes_.size(); }
    [[nodiscard]] std::size_t pairs() const { return modes_.size() / 2; }
    [[nodiscard]] const std::vector<Mode>& modes() const { return modes_; }
    [[nodiscard]] const Mode& mode(std::size_t i) const { return modes_[i]; }
    /// Upper-half-plane wavenumber of pair p.
    [[nodiscard]] const Mode& pair_mode(std::size_t p) const { return modes_[2 * p]; }
    [[nodiscard]] static bool is_sine(std::size_t i) { return (i & 1U) == 0; }
    [[nodiscard]] double k_sq(std::size_t i) const { return ksq_[i]; }
    [[nodiscard]] const std::vector<double>& k_sq() const { return ksq_; }
    [[nodiscard]] bool dealiased(std::size_t i) const { return dealias_[i]; }
    [[nodiscard]] const std::vector<bool>& dealias_mask() const { return dealias_; }

    /// Number of modes with |k| <= n (Euclidean); they are the leading entries.
    [[nodiscard]] std::size_t band_size(int n) const {
        if (n < 0) return 0;
        const double lim = static_cast<double>(n) * n;
        auto it = std::upper_bound(ksq_.begin(), ksq_.end(), lim);
        return static_cast<std::size_t>(it - ksq_.begin());
    }
    /// Band size of the lattice's own N.
    [[nodiscard]] std::size_t band_size() const { return band_; }

    [[nodiscard]] std::optional<std::size_t> index_of(const Mode& k) const {
        if (k.k1 == 0 && k.k2 == 0) return std::nullopt;
        if (k.norm_inf() > M_) return std::nullopt;
        // range of equal |k|^2 is short; scan it
        const double target = static_cast<double>(k.norm_sq());
        auto lo = std::lower_bound(ksq_.begin(), ksq_.end(), target);
        for (auto it = lo; it != ksq_.end() && *it == target; ++it) {
            auto i = static_cast<std::size_t>(it - ksq_.begin());
            if (modes_[i] == k) return i;
        }
        return std::nullopt;
    }

    /// Fields are interchangeable between lattices with the same truncation.
    [[nodiscard]] bool same_as(const Lattice& o) const { return this == &o || M_ == o.M_; }

private:
    int M_;
    int N_;
    std::vector<Mode> modes_;
    std::vector<double> ksq_;
    std::vector<bool> dealias_;
    std::size_t band_ = 0;
};

using LatticePtr = std::shared_ptr<const Lattice>;

inline LatticePtr build_lattice(int M, int N) { return std::make_shared<const Lattice>(M, N); }

}  // namespace vortex
