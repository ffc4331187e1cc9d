/// @file transform.hpp
/// @brief FFTW-backed synthesis/analysis between lattice coefficients and a
///        G x G physical grid on [-pi, pi)^2, plus cached advection fields.
///
/// G is the smallest 5-smooth integer >= 3M + 1, so a product of two
/// lattice functions is resolved without aliasing onto |k|_inf <= M.
#pragma once

#include <complex>
#include <cstring>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include <fftw3.h>

#include "vortex_mixer/spectral_field.hpp"

namespace vortex {

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

inline int fft_grid_size(int M) {
    auto smooth = [](int n) {
        for (int p : {2, 3, 5})
            while (n % p == 0) n /= p;
        return n == 1;
    };
    int g = 3 * M + 1;
    while (!smooth(g)) ++g;
    return g;
}

namespace detail {
struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};
using RealBuf = std::unique_ptr<double[], FftwFree>;
using CplxBuf = std::unique_ptr<fftw_complex[], FftwFree>;
inline RealBuf alloc_real(std::size_t n) { return RealBuf(fftw_alloc_real(n)); }
inline CplxBuf alloc_cplx(std::size_t n) { return CplxBuf(fftw_alloc_complex(n)); }
}  // namespace detail

/// Per-worker transform state.  Not thread-safe; one instance per thread.
class SpectralTransform {
public:
    explicit SpectralTransform(const LatticePtr& lat)
        : lat_(lat), G_(fft_grid_size(lat->M())), Gh_(G_ / 2 + 1) {
        const std::size_t nreal = static_cast<std::size_t>(G_) * G_;
        const std::size_t ncplx = static_cast<std::size_t>(G_) * Gh_;
        spec_ = detail::alloc_cplx(ncplx);
        for (auto& b : grid_) b = detail::alloc_real(nreal);
        scratch_ = detail::alloc_real(nreal);
        {
            std::lock_guard<std::mutex> lock(fftw_planner_mutex());
            c2r_ = fftw_plan_dft_c2r_2d(G_, G_, spec_.get(), scratch_.get(), FFTW_ESTIMATE);
            r2c_ = fftw_plan_dft_r2c_2d(G_, G_, scratch_.get(), spec_.get(), FFTW_ESTIMATE);
        }
        const std::size_t np = lat->pairs();
        slot_.resize(np);
        mirror_.assign(np, -1);
        for (std::size_t p = 0; p < np; ++p) {
            const Mode& k = lat->pair_mode(p);
            const int r = ((k.k1 % G_) + G_) % G_;
            slot_[p] = static_cast<long>(r) * Gh_ + k.k2;
            if (k.k2 == 0) mirror_[p] = static_cast<long>(G_ - k.k1) * Gh_;
        }
        work_.resize(np);
        tmp_.resize(np);
        mult_.resize(4 * np);
        for (std::size_t p = 0; p < np; ++p) {
            const Mode& k = lat->pair_mode(p);
            const double ksq = k.norm_sq();
            mult_[4 * p + 0] = -k.k2 / ksq;  // u1 = -i k2/|k|^2
            mult_[4 * p + 1] = k.k1 / ksq;   // u2 =  i k1/|k|^2
            mult_[4 * p + 2] = k.k1;         // d1 =  i k1
            mult_[4 * p + 3] = k.k2;         // d2 =  i k2
        }
    }
    SpectralTransform(const SpectralTransform&) = delete;
    SpectralTransform& operator=(const SpectralTransform&) = delete;
    ~SpectralTransform() {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        fftw_destroy_plan(c2r_);
        fftw_destroy_plan(r2c_);
    }

    [[nodiscard]] int grid() const { return G_; }
    [[nodiscard]] const Lattice& lattice() const { return *lat_; }
    [[nodiscard]] std::size_t grid_points() const { return static_cast<std::size_t>(G_) * G_; }

    /// Physical values of f on the grid x_j = -pi + 2 pi j / G (row index along x1).
    std::vector<double> to_physical(const SpectralField& f) {
        for (std::size_t p = 0; p < work_.size(); ++p) work_[p] = complex_coeff(f, p);
        synthesize(work_.data(), scratch_.get());
        return std::vector<double>(scratch_.get(), scratch_.get() + grid_points());
    }

    /// Project grid values onto the lattice (exact for band-limited input).
    SpectralField from_physical(const std::vector<double>& v) {
        std::memcpy(scratch_.get(), v.data(), sizeof(double) * grid_points());
        SpectralField out(lat_);
        analyze(scratch_.get(), out);
        return out;
    }

    /// Cache u = K w and grad w on the grid for subsequent products.
    void load_base(const SpectralField& w) {
        derived_fields(w, grid_[0].get(), grid_[1].get(), grid_[2].get(), grid_[3].get());
    }

    /// B(K w, w) for the loaded base.
    SpectralField self_transport() {
        const std::size_t n = grid_points();
        double* u1 = grid_[0].get();
        double* u2 = grid_[1].get();
        double* gx = grid_[2].get();
        double* gy = grid_[3].get();
        double* out = scratch_.get();
        for (std::size_t j = 0; j < n; ++j) out[j] = -(u1[j] * gx[j] + u2[j] * gy[j]);
        SpectralField res(lat_);
        analyze(out, res);
        return res;
    }

    /// B(K w, xi) + B(K xi, w) for the loaded base w.
    SpectralField linearized(const SpectralField& xi) {
        derived_fields(xi, grid_[4].get(), grid_[5].get(), grid_[6].get(), grid_[7].get());
        const std::size_t n = grid_points();
        const double *u1 = grid_[0].get(), *u2 = grid_[1].get(), *gx = grid_[2].get(), *gy = grid_[3].get();
        const double *v1 = grid_[4].get(), *v2 = grid_[5].get(), *hx = grid_[6].get(), *hy = grid_[7].get();
        double* out = scratch_.get();
        for (std::size_t j = 0; j < n; ++j) out[j] = -(u1[j] * hx[j] + u2[j] * hy[j] + v1[j] * gx[j] + v2[j] * gy[j]);
        SpectralField res(lat_);
        analyze(out, res);
        return res;
    }

    /// B(K(w + r), w + r) - B(K w, w) for the loaded base w, without cancellation.
    SpectralField difference(const SpectralField& r) {
        derived_fields(r, grid_[4].get(), grid_[5].get(), grid_[6].get(), grid_[7].get());
        const std::size_t n = grid_points();
        const double *u1 = grid_[0].get(), *u2 = grid_[1].get(), *gx = grid_[2].get(), *gy = grid_[3].get();
        const double *v1 = grid_[4].get(), *v2 = grid_[5].get(), *hx = grid_[6].get(), *hy = grid_[7].get();
        double* out = scratch_.get();
        for (std::size_t j = 0; j < n; ++j)
            out[j] = -((u1[j] + v1[j]) * hx[j] + (u2[j] + v2[j]) * hy[j] + v1[j] * gx[j] + v2[j] * gy[j]);
        SpectralField res(lat_);
        analyze(out, res);
        return res;
    }

    /// B(K a, b) without touching the cached base.
    SpectralField transport(const SpectralField& a, const SpectralField& b) {
        const std::size_t n = grid_points();
        std::vector<std::complex<double>> ca(work_.size()), cb(work_.size());
        for (std::size_t p = 0; p < work_.size(); ++p) {
            ca[p] = complex_coeff(a, p);
            cb[p] = complex_coeff(b, p);
        }
        detail::RealBuf u1 = detail::alloc_real(n), u2 = detail::alloc_real(n), bx = detail::alloc_real(n),
                        by = detail::alloc_real(n);
        velocity_and_gradient(ca.data(), u1.get(), u2.get(), nullptr, nullptr);
        velocity_and_gradient(cb.data(), nullptr, nullptr, bx.get(), by.get());
        double* out = scratch_.get();
        for (std::size_t j = 0; j < n; ++j) out[j] = -(u1[j] * bx[j] + u2[j] * by[j]);
        SpectralField res(lat_);
        analyze(out, res);
        return res;
    }

private:
    static constexpr double kSqrtHalf = 0.70710678118654752440;

    /// c_k = (C - i S)/sqrt(2) for the pair (S sin, C cos).
    static std::complex<double> complex_coeff(const SpectralField& f, std::size_t p) {
        return {kSqrtHalf * f[2 * p + 1], -kSqrtHalf * f[2 * p]};
    }

    void derived_fields(const SpectralField& f, double* u1, double* u2, double* gx, double* gy) {
        for (std::size_t p = 0; p < work_.size(); ++p) work_[p] = complex_coeff(f, p);
        velocity_and_gradient(work_.data(), u1, u2, gx, gy);
    }

    void velocity_and_gradient(const std::complex<double>* c, double* u1, double* u2, double* gx, double* gy) {
        double* outs[4] = {u1, u2, gx, gy};
        for (int q = 0; q < 4; ++q) {
            if (!outs[q]) continue;
            for (std::size_t p = 0; p < tmp_.size(); ++p) {
                const double m = mult_[4 * p + static_cast<std::size_t>(q)];
                tmp_[p] = {-m * c[p].imag(), m * c[p].real()};  // i m c
            }
            synthesize(tmp_.data(), outs[q]);
        }
    }

    /// Grid values f(x) = sum_k c_k e^{ik.x}/(2 pi) over the full lattice.
    /// The grid starts at -pi, which multiplies each coefficient by (-1)^{k1+k2}.
    void synthesize(const std::complex<double>* c, double* out) {
        std::memset(spec_.get(), 0, sizeof(fftw_complex) * static_cast<std::size_t>(G_) * Gh_);
        constexpr double inv2pi = 0.5 / std::numbers::pi;
        for (std::size_t p = 0; p < work_.size(); ++p) {
            const Mode& k = lat_->pair_mode(p);
            const double sgn = ((k.k1 + k.k2) & 1) ? -inv2pi : inv2pi;
            const std::complex<double> v = sgn * c[p];
            spec_[slot_[p]][0] = v.real();
            spec_[slot_[p]][1] = v.imag();
            if (mirror_[p] >= 0) {
                spec_[mirror_[p]][0] = v.real();
                spec_[mirror_[p]][1] = -v.imag();
            }
        }
        fftw_execute_dft_c2r(c2r_, spec_.get(), out);
    }

    /// Inverse of synthesize restricted to the lattice; in is clobbered.
    void analyze(double* in, SpectralField& out) {
        fftw_execute_dft_r2c(r2c_, in, spec_.get());
        const double scale = 2.0 * std::numbers::pi / (static_cast<double>(G_) * G_);
        constexpr double sqrt2 = 1.41421356237309504880;
        for (std::size_t p = 0; p < work_.size(); ++p) {
            const Mode& k = lat_->pair_mode(p);
            const double sgn = ((k.k1 + k.k2) & 1) ? -scale : scale;
            const double re = sgn * spec_[slot_[p]][0];
            const double im = sgn * spec_[slot_[p]][1];
            out[2 * p] = -sqrt2 * im;
            out[2 * p + 1] = sqrt2 * re;
        }
    }

    LatticePtr lat_;
    int G_;
    int Gh_;
    detail::CplxBuf spec_;
    detail::RealBuf grid_[8];
    detail::RealBuf scratch_;
    fftw_plan c2r_ = nullptr;
    fftw_plan r2c_ = nullptr;
    std::vector<long> slot_;
    std::vector<long> mirror_;
    std::vector<std::complex<double>> work_;
    std::vector<std::complex<double>> tmp_;
    std::vector<double> mult_;
};

}  // namespace vortex
