/// @file nonlinearity.hpp
/// @brief Transport term B(K w, w) = -(u . grad) w, its linearization, the
///        band split used by the control, and a direct convolution oracle.
#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <utility>

#include "vortex_mixer/spectral_field.hpp"
#include "vortex_mixer/transform.hpp"

namespace vortex {

/// Thread-local transform for a lattice truncation, created on first use.
inline SpectralTransform& transform_for(const LatticePtr& lat) {
    thread_local std::map<int, std::unique_ptr<SpectralTransform>> cache;
    auto& slot = cache[lat->M()];
    if (!slot) slot = std::make_unique<SpectralTransform>(lat);
    return *slot;
}

/// B(K a, b).
inline SpectralField transport(const SpectralField& a, const SpectralField& b) {
    a.check_same(b);
    return transform_for(a.lattice_ptr()).transport(a, b);
}

inline SpectralField nonlinear_term(const SpectralField& w) {
    SpectralTransform& xf = transform_for(w.lattice_ptr());
    xf.load_base(w);
    return xf.self_transport();
}

/// B(K w, xi) + B(K xi, w)
inline SpectralField linearized_term(const SpectralField& w, const SpectralField& xi) {
    w.check_same(xi);
    SpectralTransform& xf = transform_for(w.lattice_ptr());
    xf.load_base(w);
    return xf.linearized(xi);
}

struct BandSplit {
    SpectralField low;
    SpectralField high;
};

inline BandSplit band_split_term(const SpectralField& w, const SpectralField& zeta, int N) {
    if (N > 2 * w.lattice().M()) throw std::invalid_argument("band_split_term: N out of range");
    SpectralField b = linearized_term(w, zeta);
    return {project_band(b, N, Band::low), project_band(b, N, Band::high)};
}

namespace oracle {

/// One real trig term: amplitude * trig(k.x) with trig = sin or cos.
struct Term {
    Mode k;
    bool sine;
    double amp;
};

/// Deposit amp * trig(k.x) / (sqrt2 pi) into lattice coefficients.
inline void deposit(SpectralField& out, const Lattice& lat, Mode k, bool sine, double amp) {
    if (k.k1 == 0 && k.k2 == 0) return;  // constant mode: not in H, and sin(0) = 0
    if (!k.upper()) {
        k = -k;
        if (sine) amp = -amp;
    }
    if (k.norm_inf() > lat.M()) return;
    auto i = lat.index_of(k);
    if (!i) return;
    out[sine ? *i : *i + 1] += amp;
}

}  // namespace oracle

/// B(K a, b) by summing the real-basis products of every mode pair.
/// Cost is quadratic in the mode count, so M is capped at 16.
inline SpectralField transport_oracle(const SpectralField& a, const SpectralField& b) {
    a.check_same(b);
    const Lattice& lat = a.lattice();
    if (lat.M() > 16) throw std::invalid_argument("nonlinear_oracle: M > 16 refused (cost guard)");
    SpectralField out(a.lattice_ptr());
    // basis functions are trig/(sqrt2 pi); a product of two is
    // trig trig /(2 pi^2) = (1/2)(trig +- trig)/(2 pi^2), re-expressed as
    // multiples of trig/(sqrt2 pi): factor 1/(2 sqrt2 pi)
    const double f = 1.0 / (2.0 * std::numbers::sqrt2 * std::numbers::pi);
    const std::size_t n = lat.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (a[i] == 0.0) continue;
        const Mode p = lat.mode(i);
        const Mode pu = Lattice::is_sine(i) ? p : -p;  // upper-half representative
        const double ksq = pu.norm_sq();
        const double m1 = pu.k2 / ksq;
        const double m2 = -pu.k1 / ksq;
        // velocity of sin(pu.x): -m cos(pu.x); of cos(pu.x): +m sin(pu.x)
        const bool u_sine = !Lattice::is_sine(i);
        const double u_sign = Lattice::is_sine(i) ? -1.0 : 1.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (b[j] == 0.0) continue;
            const Mode q = Lattice::is_sine(j) ? lat.mode(j) : -lat.mode(j);
            // grad of sin(q.x) = q cos(q.x); of cos(q.x) = -q sin(q.x)
            const bool g_sine = !Lattice::is_sine(j);
            const double g_sign = Lattice::is_sine(j) ? 1.0 : -1.0;
            const double dot = m1 * q.k1 + m2 * q.k2;
            if (dot == 0.0) continue;
            // -(u . grad b) = -c * T_u(pu.x) T_g(q.x)
            const double c = -a[i] * b[j] * u_sign * g_sign * dot * f;
            const Mode plus{pu.k1 + q.k1, pu.k2 + q.k2};
            const Mode minus{pu.k1 - q.k1, pu.k2 - q.k2};
            if (!u_sine && !g_sine) {  // cos A cos B = [cos(A-B) + cos(A+B)]/2
                oracle::deposit(out, lat, minus, false, c);
                oracle::deposit(out, lat, plus, false, c);
            } else if (u_sine && g_sine) {  // sin A sin B = [cos(A-B) - cos(A+B)]/2
                oracle::deposit(out, lat, minus, false, c);
                oracle::deposit(out, lat, plus, false, -c);
            } else if (u_sine && !g_sine) {  // sin A cos B = [sin(A+B) + sin(A-B)]/2
                oracle::deposit(out, lat, plus, true, c);
                oracle::deposit(out, lat, minus, true, c);
            } else {  // cos A sin B = [sin(A+B) - sin(A-B)]/2
                oracle::deposit(out, lat, plus, true, c);
                oracle::deposit(out, lat, minus, true, -c);
            }
        }
    }
    return out;
}

inline SpectralField nonlinear_oracle(const SpectralField& w) { return transport_oracle(w, w); }

inline SpectralField linearized_oracle(const SpectralField& w, const SpectralField& xi) {
    return transport_oracle(w, xi) + transport_oracle(xi, w);
}

}  // namespace vortex
