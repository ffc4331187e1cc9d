/// @file distance.hpp
/// @brief Weighted straight-line gauge
///        rho'(x, y) = int_0^1 exp(r eta ||t y + (1-t) x||^2) ||x - y|| dt.
#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/math/special_functions/legendre.hpp>

#include "vortex_mixer/spectral_field.hpp"

namespace vortex {

/// Gauss-Legendre nodes and weights on [0, 1].
inline std::vector<std::pair<double, double>> gauss_legendre01(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre01: n must be >= 1");
    std::vector<std::pair<double, double>> out;
    for (double z : boost::math::legendre_p_zeros<double>(n)) {
        const double dp = boost::math::legendre_p_prime(n, z);
        const double w = 2.0 / ((1.0 - z * z) * dp * dp);
        out.emplace_back(0.5 * (1.0 + z), 0.5 * w);
        if (z != 0.0) out.emplace_back(0.5 * (1.0 - z), 0.5 * w);
    }
    return out;
}

struct GaugeValue {
    double value = 0.0;
    bool converged = true;  ///< doubling the node count moved the result by <= 1e-8 (relative)
};

/// The integrand is exp of a quadratic in t, so the line is parametrised by
/// a = ||x||^2, b = <x, y - x>, c = ||y - x||^2.
inline GaugeValue rho_prime_distance(const SpectralField& x, const SpectralField& y, double eta, double r, int n_quad = 16) {
    x.check_same(y);
    if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("rho_prime_distance: r must lie in (0, 1]");
    if (!(eta > 0.0)) throw std::invalid_argument("rho_prime_distance: eta must be > 0");
    if (n_quad < 8) throw std::invalid_argument("rho_prime_distance: n_quad must be >= 8");
    const Eigen::VectorXd d = y.coeffs() - x.coeffs();
    const double dist = d.norm();
    if (dist == 0.0) return {0.0, true};
    const double a = x.coeffs().squaredNorm(), b = x.coeffs().dot(d), c = d.squaredNorm();
    auto integrate = [&](int n) {
        double s = 0.0;
        for (auto [t, w] : gauss_legendre01(n)) s += w * std::exp(r * eta * (a + 2.0 * t * b + t * t * c));
        return s * dist;
    };
    const double v = integrate(n_quad);
    const double v2 = integrate(2 * n_quad);
    return {v2, std::abs(v2 - v) <= 1e-8 * std::abs(v2)};
}

}  // namespace vortex
