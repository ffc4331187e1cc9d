/// @file noise_model.hpp
/// @brief Diagonal multiplicative noise on the band |k| <= N.
///
/// q_k(w) = sigma_k (1 + eps tanh(w_k)) for every band mode k; the constant
/// modulation drops the tanh factor.  Q(w) du = sum_k q_k(w) du_k e_k and
/// g(w) f = (f_k / q_k(w))_k is the exact right inverse on the band.
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vortex_mixer/rng.hpp"
#include "vortex_mixer/spectral_field.hpp"

namespace vortex {

using NoiseVector = Eigen::VectorXd;

struct NoiseIncrement {
    NoiseVector values;
    double dt = 0.0;
};

enum class Modulation { constant, tanh_diagonal };

inline std::string to_string(Modulation m) { return m == Modulation::constant ? "constant" : "tanh-diagonal"; }

/// Operations every noise family must provide to drive the integrators.
template <class Q>
concept NoiseFamily = requires(const Q& q, const SpectralField& w, const NoiseVector& du) {
    { q.band() } -> std::convertible_to<int>;
    { q.band_size() } -> std::convertible_to<std::size_t>;
    { q.apply_Q(w, du) } -> std::same_as<SpectralField>;
    { q.apply_g(w, w) } -> std::same_as<NoiseVector>;
    { q.apply_DQ(w, w, du) } -> std::same_as<SpectralField>;
    { q.apply_Q_difference(w, w, du) } -> std::same_as<SpectralField>;
    { q.hs_norm_sq(w) } -> std::convertible_to<double>;
    { q.B0() } -> std::convertible_to<double>;
    { q.L_Q() } -> std::convertible_to<double>;
};

class NoiseModel {
public:
    NoiseModel(LatticePtr lat, int N, std::vector<double> sigma, Modulation mod, double eps_mod)
        : lat_(std::move(lat)), N_(N), sigma_(std::move(sigma)), mod_(mod), eps_(mod == Modulation::constant ? 0.0 : eps_mod) {
        if (N < 1 || N > lat_->M()) throw std::invalid_argument("noise: band N must satisfy 1 <= N <= M");
        nb_ = lat_->band_size(N);
        if (sigma_.size() == 1) sigma_.assign(nb_, sigma_[0]);
        if (sigma_.size() != nb_) throw std::invalid_argument("noise: sigma length must equal the band mode count");
        for (double s : sigma_)
            if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("noise: sigma must be finite and >= 0");
        if (mod == Modulation::tanh_diagonal && !(eps_mod >= 0.0 && eps_mod <= 0.9))
            throw std::invalid_argument("noise: eps_mod must lie in [0, 0.9]");
        double b = 0.0, smax = 0.0;
        for (double s : sigma_) {
            b += s * s;
            smax = std::max(smax, s);
        }
        B0_ = b * (1.0 + eps_) * (1.0 + eps_);
        LQ_ = eps_ * smax;
    }

    /// Uniform amplitude on every band mode.
    static NoiseModel uniform(LatticePtr lat, int N, double sigma, Modulation mod, double eps_mod) {
        return NoiseModel(std::move(lat), N, std::vector<double>{sigma}, mod, eps_mod);
    }

    [[nodiscard]] const Lattice& lattice() const { return *lat_; }
    [[nodiscard]] const LatticePtr& lattice_ptr() const { return lat_; }
    [[nodiscard]] int band() const { return N_; }
    [[nodiscard]] std::size_t band_size() const { return nb_; }
    [[nodiscard]] Modulation modulation() const { return mod_; }
    [[nodiscard]] double eps_mod() const { return eps_; }
    [[nodiscard]] const std::vector<double>& sigma() const { return sigma_; }
    [[nodiscard]] double B0() const { return B0_; }
    [[nodiscard]] double L_Q() const { return LQ_; }
    [[nodiscard]] bool additive() const { return mod_ == Modulation::constant || eps_ == 0.0; }

    [[nodiscard]] double q(const SpectralField& w, std::size_t i) const {
        return mod_ == Modulation::constant ? sigma_[i] : sigma_[i] * (1.0 + eps_ * std::tanh(w[i]));
    }

    [[nodiscard]] SpectralField apply_Q(const SpectralField& w, const NoiseVector& du) const {
        check_dim(du);
        SpectralField out(w.lattice_ptr());
        for (std::size_t i = 0; i < nb_; ++i) out[i] = q(w, i) * du[static_cast<Eigen::Index>(i)];
        return out;
    }

    /// Band coefficients of f divided by q_k(w).
    [[nodiscard]] NoiseVector apply_g(const SpectralField& w, const SpectralField& f) const {
        NoiseVector v(static_cast<Eigen::Index>(nb_));
        for (std::size_t i = 0; i < nb_; ++i) {
            const double qi = q(w, i);
            if (qi == 0.0) throw std::domain_error("noise: g(w) undefined where q_k(w) = 0");
            v[static_cast<Eigen::Index>(i)] = f[i] / qi;
        }
        return v;
    }

    [[nodiscard]] SpectralField apply_DQ(const SpectralField& w, const SpectralField& zeta, const NoiseVector& du) const {
        check_dim(du);
        SpectralField out(w.lattice_ptr());
        if (mod_ == Modulation::constant || eps_ == 0.0) return out;
        for (std::size_t i = 0; i < nb_; ++i) {
            const double t = std::tanh(w[i]);
            out[i] = sigma_[i] * eps_ * (1.0 - t * t) * zeta[i] * du[static_cast<Eigen::Index>(i)];
        }
        return out;
    }

    /// (Q(w + r) - Q(w)) du, formed without subtracting nearly equal numbers.
    [[nodiscard]] SpectralField apply_Q_difference(const SpectralField& w, const SpectralField& r, const NoiseVector& du) const {
        check_dim(du);
        SpectralField out(w.lattice_ptr());
        if (mod_ == Modulation::constant || eps_ == 0.0) return out;
        for (std::size_t i = 0; i < nb_; ++i) {
            const double ta = std::tanh(w[i]);
            const double tb = std::tanh(r[i]);
            // tanh(a + b) - tanh(a) = tanh(b)(1 - tanh^2 a)/(1 + tanh a tanh b)
            const double d = tb * (1.0 - ta * ta) / (1.0 + ta * tb);
            out[i] = sigma_[i] * eps_ * d * du[static_cast<Eigen::Index>(i)];
        }
        return out;
    }

    [[nodiscard]] double hs_norm_sq(const SpectralField& w) const {
        double s = 0.0;
        for (std::size_t i = 0; i < nb_; ++i) {
            const double qi = q(w, i);
            s += qi * qi;
        }
        return s;
    }

    /// ||Q(u) - Q(v)||_HS
    [[nodiscard]] double hs_distance(const SpectralField& u, const SpectralField& v) const {
        double s = 0.0;
        for (std::size_t i = 0; i < nb_; ++i) {
            const double d = q(u, i) - q(v, i);
            s += d * d;
        }
        return std::sqrt(s);
    }

    [[nodiscard]] double min_q_bound() const {
        double m = sigma_.empty() ? 0.0 : sigma_[0];
        for (double s : sigma_) m = std::min(m, s);
        return m * (1.0 - eps_);
    }

private:
    void check_dim(const NoiseVector& du) const {
        if (static_cast<std::size_t>(du.size()) != nb_) throw std::invalid_argument("noise: increment dimension does not match band");
    }

    LatticePtr lat_;
    int N_;
    std::vector<double> sigma_;
    Modulation mod_;
    double eps_;
    std::size_t nb_ = 0;
    double B0_ = 0.0;
    double LQ_ = 0.0;
};

static_assert(NoiseFamily<NoiseModel>);

struct HypothesisReport {
    std::size_t n_samples = 0;
    double max_hs_sq = 0.0;
    double B0 = 0.0;
    double max_lipschitz_ratio = 0.0;
    double L_Q = 0.0;
    double max_inverse_residual = 0.0;
    bool bounded_ok = false;
    bool lipschitz_ok = false;
    bool inverse_ok = false;
    [[nodiscard]] bool pass() const { return bounded_ok && lipschitz_ok && inverse_ok; }
};

/// Sample states at several scales (so tanh saturates) and check the
/// boundedness, Lipschitz and right-inverse hypotheses.
inline HypothesisReport validate_hypotheses(const NoiseModel& model, std::size_t n_samples, std::uint64_t seed,
                                            double inverse_tol = 1e-12) {
    const LatticePtr& lat = model.lattice_ptr();
    if (n_samples < 100) throw std::invalid_argument("validate_hypotheses: need at least 100 samples");
    HypothesisReport rep;
    rep.n_samples = n_samples;
    rep.B0 = model.B0();
    rep.L_Q = model.L_Q();
    GaussianStream rng(seed);
    const double scales[] = {0.05, 0.3, 1.0, 3.0, 10.0};
    const double gaps[] = {1e-6, 1e-3, 0.1, 1.0, 10.0};
    const std::size_t nb = model.band_size();
    const bool invertible = model.min_q_bound() > 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        SpectralField w = random_field(lat, rng.engine(), 0.0, scales[s % 5]);
        rep.max_hs_sq = std::max(rep.max_hs_sq, model.hs_norm_sq(w));

        SpectralField v = w + random_field(lat, rng.engine(), 0.0, gaps[(s / 5) % 5]);
        const double dist = (v - w).coeffs().norm();
        if (dist > 0.0) rep.max_lipschitz_ratio = std::max(rep.max_lipschitz_ratio, model.hs_distance(w, v) / dist);

        if (!invertible) continue;
        SpectralField f = random_field(lat, rng.engine());
        SpectralField back = model.apply_Q(w, model.apply_g(w, f));
        rep.max_inverse_residual = std::max(rep.max_inverse_residual, (back - project_band(f, model.band(), Band::low)).coeffs().norm());
        if (s < 1000) {
            for (std::size_t j = 0; j < nb; ++j) {
                SpectralField e = basis_field(lat, j);
                SpectralField r = model.apply_Q(w, model.apply_g(w, e)) - e;
                rep.max_inverse_residual = std::max(rep.max_inverse_residual, r.coeffs().norm());
            }
        }
    }
    rep.bounded_ok = rep.max_hs_sq <= rep.B0 * (1.0 + 1e-12);
    rep.lipschitz_ok = rep.max_lipschitz_ratio <= rep.L_Q * (1.0 + 1e-9) + 1e-15;
    rep.inverse_ok = invertible && rep.max_inverse_residual <= inverse_tol;
    return rep;
}

}  // namespace vortex
