// Transport term against the convolution oracle and a hand-computed product.
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "vortex_mixer/nonlinearity.hpp"

using namespace vortex;

namespace {
double rel_err(const SpectralField& a, const SpectralField& b) {
    const double scale = std::max(b.coeffs().norm(), 1e-300);
    return (a - b).coeffs().norm() / scale;
}
}  // namespace

TEST(Nonlinearity, SingleModeSelfAdvectsToZero) {
    auto lat = build_lattice(6, 2);
    for (std::size_t i = 0; i < lat->size(); i += 7) {
        SpectralField w = basis_field(lat, i, 2.5);
        EXPECT_LT(nonlinear_term(w).coeffs().norm(), 1e-13);
        EXPECT_LT(nonlinear_oracle(w).coeffs().norm(), 1e-15);
    }
}

// w1 = A sin(x1)/(sqrt2 pi) gives u = (0, A cos(x1)/(sqrt2 pi)); with
// w2 = G sin(2 x2)/(sqrt2 pi) the product -u2 d2 w2 equals
// -(A G/pi^2) cos(x1) cos(2 x2), i.e. -A G/(sqrt2 pi) on the cosine modes
// of (1, -2) and (1, 2).
TEST(Nonlinearity, HandComputedCrossTerm) {
    auto lat = build_lattice(4, 2);
    const double A = 0.7, Gm = -1.9;
    SpectralField w1 = mode_field(lat, {1, 0}, A);
    SpectralField w2 = mode_field(lat, {0, 2}, Gm);
    SpectralField ref(lat);
    const double c = -A * Gm / (std::numbers::sqrt2 * std::numbers::pi);
    ref[lat->index_of({1, -2}).value()] = c;
    ref[lat->index_of({-1, -2}).value()] = c;
    EXPECT_LT((transport(w1, w2) - ref).coeffs().norm(), 1e-14);
    EXPECT_LT((transport_oracle(w1, w2) - ref).coeffs().norm(), 1e-14);
}

TEST(Nonlinearity, PseudospectralMatchesOracle) {
    for (int M : {4, 8}) {
        auto lat = build_lattice(M, 2);
        std::mt19937_64 rng(100 + M);
        for (int s = 0; s < 10; ++s) {
            SpectralField a = random_field(lat, rng, 0.5);
            SpectralField b = random_field(lat, rng, 0.5);
            EXPECT_LT(rel_err(nonlinear_term(a), nonlinear_oracle(a)), 1e-10);
            EXPECT_LT(rel_err(transport(a, b), transport_oracle(a, b)), 1e-10);
            EXPECT_LT(rel_err(linearized_term(a, b), linearized_oracle(a, b)), 1e-10);
        }
    }
}

TEST(Nonlinearity, OracleRefusesLargeLattice) {
    SpectralField w(build_lattice(17, 2));
    EXPECT_THROW(nonlinear_oracle(w), std::invalid_argument);
    EXPECT_EQ(nonlinear_oracle(SpectralField(build_lattice(3, 1))).coeffs().norm(), 0.0);
}

TEST(Nonlinearity, AntisymmetryAndConservation) {
    auto lat = build_lattice(8, 2);
    std::mt19937_64 rng(7);
    for (int s = 0; s < 30; ++s) {
        SpectralField u = random_field(lat, rng, 1.0, 0.1);
        SpectralField v = random_field(lat, rng, 0.5);
        SpectralField z = random_field(lat, rng, 0.5);
        const double l = inner_product(transport(u, v), z);
        const double r = -inner_product(transport(u, z), v);
        EXPECT_NEAR(l, r, 1e-12 * (std::abs(l) + 1.0));
        const double lo = inner_product(transport_oracle(u, v), z);
        EXPECT_NEAR(lo, -inner_product(transport_oracle(u, z), v), 1e-12 * (std::abs(lo) + 1.0));

        SpectralField w = random_field(lat, rng, 0.5);
        SpectralField b = nonlinear_term(w);
        EXPECT_LE(std::abs(inner_product(b, w)), 1e-10 * sobolev_norm_sq(w, 1.0));
        // kinetic energy: pairing with the stream function (-Laplacian)^{-1} w
        SpectralField psi = w;
        for (std::size_t i = 0; i < psi.size(); ++i) psi[i] /= lat->k_sq(i);
        EXPECT_LE(std::abs(inner_product(b, psi)), 1e-10 * sobolev_norm_sq(w, 1.0));
    }
}

TEST(Linearized, SelfAndBilinearity) {
    auto lat = build_lattice(8, 3);
    std::mt19937_64 rng(21);
    for (int s = 0; s < 10; ++s) {
        SpectralField w = random_field(lat, rng, 0.5);
        SpectralField x = random_field(lat, rng, 0.5);
        SpectralField y = random_field(lat, rng, 0.5);
        EXPECT_LT(rel_err(linearized_term(w, w), 2.0 * nonlinear_term(w)), 1e-12);
        const double a = 1.3, b = -0.4;
        EXPECT_LT(rel_err(linearized_term(w, a * x + b * y), a * linearized_term(w, x) + b * linearized_term(w, y)), 1e-12);
        EXPECT_LT(rel_err(linearized_term(a * x + b * y, w), a * linearized_term(x, w) + b * linearized_term(y, w)), 1e-12);
    }
}

// B is quadratic, so the forward difference error is exactly eps * B(K xi, xi).
TEST(Linearized, FiniteDifferenceSweep) {
    auto lat = build_lattice(8, 3);
    std::mt19937_64 rng(4);
    SpectralField w = random_field(lat, rng, 0.5);
    SpectralField xi = random_field(lat, rng, 0.5);
    const SpectralField bt = linearized_term(w, xi);
    const SpectralField b0 = nonlinear_term(w);
    const double curvature = nonlinear_term(xi).coeffs().norm();
    double prev = 0.0;
    for (double eps : {1e-3, 1e-4, 1e-5, 1e-6}) {
        SpectralField fd = (1.0 / eps) * (nonlinear_term(w + eps * xi) - b0);
        const double err = (fd - bt).coeffs().norm();
        EXPECT_NEAR(err, eps * curvature, 1e-3 * eps * curvature + 1e-7);
        if (prev > 0.0 && eps >= 1e-5) {
            EXPECT_NEAR(prev / err, 10.0, 0.5);
        }
        prev = err;
    }
}

TEST(BandSplit, ReconstructsAndCutoff) {
    auto lat = build_lattice(6, 3);
    std::mt19937_64 rng(8);
    SpectralField w = random_field(lat, rng, 0.5);
    SpectralField z = random_field(lat, rng, 0.5);
    BandSplit s = band_split_term(w, z, 3);
    EXPECT_LT((s.low + s.high - linearized_term(w, z)).coeffs().norm(), 1e-14);
    const std::size_t nb = lat->band_size(3);
    for (std::size_t i = nb; i < lat->size(); ++i) EXPECT_EQ(s.low[i], 0.0);
    for (std::size_t i = 0; i < nb; ++i) EXPECT_EQ(s.high[i], 0.0);
    BandSplit full = band_split_term(w, z, 9);  // 9 >= sqrt2 * 6
    EXPECT_EQ(full.high.coeffs().norm(), 0.0);
}

// Fitted constants: ratios stay bounded and the fitted value is stable
// when the sample doubles.
TEST(BandSplit, FittedConstantsStable) {
    auto lat = build_lattice(8, 3);
    auto fit = [&](int n, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        double cn = 0.0, c6 = 0.0;
        for (int s = 0; s < n; ++s) {
            SpectralField u = random_field(lat, rng, 1.0 + (s % 3));
            SpectralField w = random_field(lat, rng, 1.0 + (s % 2));
            SpectralField lo = band_split_term(u, w, 3).low;
            cn = std::max(cn, lo.coeffs().norm() / (u.coeffs().norm() * w.coeffs().norm()));
            const double num = std::abs(inner_product(transport(w, u), w));
            c6 = std::max(c6, num / (sobolev_norm(w, 0.5) * sobolev_norm(u, 1.0) * sobolev_norm(w, 0.0)));
        }
        return std::pair{cn, c6};
    };
    auto [a1, b1] = fit(200, 1);
    auto [a2, b2] = fit(400, 2);
    EXPECT_GT(a1, 0.0);
    EXPECT_GT(b1, 0.0);
    EXPECT_LT(std::abs(a1 - a2) / a2, 0.5);
    EXPECT_LT(std::abs(b1 - b2) / b2, 0.5);
}
