/// @file spectral_field.hpp
/// @brief Real coefficient fields on a Lattice, Sobolev norms, band projections
///        and the Biot-Savart map.
#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>

#include <Eigen/Core>

#include "vortex_mixer/lattice.hpp"

namespace vortex {

enum class Band { low, high };

class SpectralField {
public:
    SpectralField() = default;
    explicit SpectralField(LatticePtr lat) : lat_(std::move(lat)), c_(Eigen::VectorXd::Zero(lat_->size())) {}
    SpectralField(LatticePtr lat, Eigen::VectorXd c) : lat_(std::move(lat)), c_(std::move(c)) {
        if (static_cast<std::size_t>(c_.size()) != lat_->size())
            throw std::invalid_argument("SpectralField: coefficient count does not match lattice");
    }

    [[nodiscard]] const Lattice& lattice() const { return *lat_; }
    [[nodiscard]] const LatticePtr& lattice_ptr() const { return lat_; }
    [[nodiscard]] bool empty() const { return !lat_; }
    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(c_.size()); }
    [[nodiscard]] Eigen::VectorXd& coeffs() { return c_; }
    [[nodiscard]] const Eigen::VectorXd& coeffs() const { return c_; }
    double& operator[](std::size_t i) { return c_[static_cast<Eigen::Index>(i)]; }
    double operator[](std::size_t i) const { return c_[static_cast<Eigen::Index>(i)]; }

    [[nodiscard]] bool all_finite() const { return c_.allFinite(); }
    void set_zero() { c_.setZero(); }

    SpectralField& operator+=(const SpectralField& o) {
        check_same(o);
        c_ += o.c_;
        return *this;
    }
    SpectralField& operator-=(const SpectralField& o) {
        check_same(o);
        c_ -= o.c_;
        return *this;
    }
    SpectralField& operator*=(double a) {
        c_ *= a;
        return *this;
    }
    friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
    friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
    friend SpectralField operator*(double s, SpectralField a) { return a *= s; }
    friend SpectralField operator*(SpectralField a, double s) { return a *= s; }
    friend SpectralField operator-(SpectralField a) { return a *= -1.0; }

    void check_same(const SpectralField& o) const {
        if (!lat_ || !o.lat_ || !lat_->same_as(*o.lat_))
            throw std::invalid_argument("SpectralField: lattice mismatch");
    }

private:
    LatticePtr lat_;
    Eigen::VectorXd c_;
};

inline double inner_product(const SpectralField& u, const SpectralField& v) {
    u.check_same(v);
    return u.coeffs().dot(v.coeffs());
}

inline double sobolev_norm_sq(const SpectralField& w, double alpha) {
    const Lattice& lat = w.lattice();
    if (!w.all_finite()) throw std::domain_error("sobolev_norm: non-finite coefficient");
    double s = 0.0;
    if (alpha == 0.0) return w.coeffs().squaredNorm();
    for (std::size_t i = 0; i < w.size(); ++i) s += std::pow(lat.k_sq(i), alpha) * w[i] * w[i];
    return s;
}

/// (sum |k|^{2 alpha} w_k^2)^{1/2}
inline double sobolev_norm(const SpectralField& w, double alpha) { return std::sqrt(sobolev_norm_sq(w, alpha)); }

inline SpectralField project_band(const SpectralField& w, int N, Band which) {
    if (N > w.lattice().M() * 2) throw std::invalid_argument("project_band: N exceeds lattice range");
    SpectralField out = w;
    const std::size_t nb = w.lattice().band_size(N);
    if (which == Band::low)
        out.coeffs().tail(static_cast<Eigen::Index>(w.size() - nb)).setZero();
    else
        out.coeffs().head(static_cast<Eigen::Index>(nb)).setZero();
    return out;
}

/// Laplacian symbol: -|k|^2 per mode.
inline SpectralField laplacian(const SpectralField& w) {
    SpectralField out = w;
    const auto& ks = w.lattice().k_sq();
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = -ks[i] * w[i];
    return out;
}

/// Zero every mode outside the two-thirds mask.
inline SpectralField dealias(const SpectralField& w) {
    SpectralField out = w;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (!w.lattice().dealiased(i)) out[i] = 0.0;
    return out;
}

struct Velocity {
    SpectralField u1;
    SpectralField u2;
};

/// u = K w.  For the pair (S sin(k.x), C cos(k.x)) with m = (k2, -k1)/|k|^2
/// the velocity is (m C) sin(k.x) - (m S) cos(k.x).
inline Velocity apply_biot_savart(const SpectralField& w) {
    const Lattice& lat = w.lattice();
    Velocity u{SpectralField(w.lattice_ptr()), SpectralField(w.lattice_ptr())};
    for (std::size_t p = 0; p < lat.pairs(); ++p) {
        const Mode& k = lat.pair_mode(p);
        const double ksq = k.norm_sq();
        const double m1 = k.k2 / ksq;
        const double m2 = -k.k1 / ksq;
        const double S = w[2 * p];
        const double C = w[2 * p + 1];
        u.u1[2 * p] = m1 * C;
        u.u1[2 * p + 1] = -m1 * S;
        u.u2[2 * p] = m2 * C;
        u.u2[2 * p + 1] = -m2 * S;
    }
    return u;
}

inline double sobolev_norm(const Velocity& u, double alpha) {
    return std::sqrt(sobolev_norm_sq(u.u1, alpha) + sobolev_norm_sq(u.u2, alpha));
}

/// Partial derivative along axis 1 or 2 in the real basis.
inline SpectralField partial(const SpectralField& f, int axis) {
    const Lattice& lat = f.lattice();
    SpectralField out(f.lattice_ptr());
    for (std::size_t p = 0; p < lat.pairs(); ++p) {
        const Mode& k = lat.pair_mode(p);
        const double kj = axis == 1 ? k.k1 : k.k2;
        out[2 * p] = -kj * f[2 * p + 1];
        out[2 * p + 1] = kj * f[2 * p];
    }
    return out;
}

inline SpectralField divergence(const Velocity& u) { return partial(u.u1, 1) + partial(u.u2, 2); }

/// Vorticity of a velocity field, matching the orientation of apply_biot_savart.
inline SpectralField vorticity(const Velocity& u) { return partial(u.u1, 2) - partial(u.u2, 1); }

inline SpectralField basis_field(const LatticePtr& lat, std::size_t i, double amplitude = 1.0) {
    SpectralField f(lat);
    f[i] = amplitude;
    return f;
}

inline SpectralField mode_field(const LatticePtr& lat, const Mode& k, double amplitude = 1.0) {
    auto i = lat->index_of(k);
    if (!i) throw std::invalid_argument("mode_field: wavenumber not on lattice");
    return basis_field(lat, *i, amplitude);
}

/// Gaussian coefficients with spectral envelope (1 + |k|^2)^{-decay/2}.
template <class Rng>
SpectralField random_field(const LatticePtr& lat, Rng& rng, double decay = 0.0, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, 1.0);
    SpectralField f(lat);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = scale * g(rng) * std::pow(1.0 + lat->k_sq(i), -0.5 * decay);
    return f;
}

}  // namespace vortex
