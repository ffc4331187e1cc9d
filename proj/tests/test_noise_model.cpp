// Noise family: boundedness, Lipschitz, right inverse and Frechet derivative.
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vortex_mixer/noise_model.hpp"

using namespace vortex;

namespace {
NoiseVector unit(std::size_t n, std::size_t i) {
    NoiseVector v = NoiseVector::Zero(static_cast<Eigen::Index>(n));
    v[static_cast<Eigen::Index>(i)] = 1.0;
    return v;
}
NoiseVector randn(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    NoiseVector v(static_cast<Eigen::Index>(n));
    for (auto& x : v) x = g(rng);
    return v;
}
}  // namespace

TEST(NoiseModel, ConstantUnitDirection) {
    auto lat = build_lattice(6, 3);
    std::vector<double> sig;
    for (std::size_t i = 0; i < lat->band_size(3); ++i) sig.push_back(0.5 + 0.1 * static_cast<double>(i));
    NoiseModel m(lat, 3, sig, Modulation::constant, 0.0);
    std::mt19937_64 rng(1);
    SpectralField w = random_field(lat, rng);
    for (std::size_t i = 0; i < m.band_size(); ++i) {
        SpectralField out = m.apply_Q(w, unit(m.band_size(), i));
        EXPECT_EQ((out - basis_field(lat, i, sig[i])).coeffs().norm(), 0.0);
    }
    EXPECT_THROW(m.apply_Q(w, NoiseVector::Zero(3)), std::invalid_argument);
}

TEST(NoiseModel, TanhAtZeroEqualsAdditive) {
    auto lat = build_lattice(6, 3);
    NoiseModel a = NoiseModel::uniform(lat, 3, 1.0, Modulation::constant, 0.0);
    NoiseModel t = NoiseModel::uniform(lat, 3, 1.0, Modulation::tanh_diagonal, 0.5);
    std::mt19937_64 rng(2);
    NoiseVector du = randn(a.band_size(), rng);
    SpectralField z(lat);
    EXPECT_EQ((a.apply_Q(z, du) - t.apply_Q(z, du)).coeffs().norm(), 0.0);
}

TEST(NoiseModel, ConstantsClosedForm) {
    auto lat = build_lattice(4, 1);
    NoiseModel t = NoiseModel::uniform(lat, 1, 1.0, Modulation::tanh_diagonal, 0.5);
    EXPECT_EQ(t.band_size(), 4u);
    EXPECT_DOUBLE_EQ(t.B0(), 9.0);  // 4 modes * 1.5^2
    EXPECT_DOUBLE_EQ(t.L_Q(), 0.5);
    NoiseModel a = NoiseModel::uniform(lat, 1, 2.0, Modulation::constant, 0.7);
    EXPECT_DOUBLE_EQ(a.B0(), 16.0);
    EXPECT_EQ(a.L_Q(), 0.0);
    EXPECT_THROW(NoiseModel::uniform(lat, 1, 1.0, Modulation::tanh_diagonal, 0.95), std::invalid_argument);
    EXPECT_THROW(NoiseModel::uniform(lat, 5, 1.0, Modulation::constant, 0.0), std::invalid_argument);
}

TEST(NoiseModel, HilbertSchmidtBounded) {
    auto lat = build_lattice(8, 4);
    NoiseModel t = NoiseModel::uniform(lat, 4, 1.0, Modulation::tanh_diagonal, 0.5);
    std::mt19937_64 rng(3);
    for (int s = 0; s < 10000; ++s) {
        SpectralField w = random_field(lat, rng, 0.0, 0.1 * (1 + s % 50));
        ASSERT_LE(t.hs_norm_sq(w), t.B0());
    }
}

TEST(NoiseModel, RightInverse) {
    auto lat = build_lattice(8, 4);
    NoiseModel t = NoiseModel::uniform(lat, 4, 0.8, Modulation::tanh_diagonal, 0.6);
    std::mt19937_64 rng(4);
    for (int s = 0; s < 200; ++s) {
        SpectralField w = random_field(lat, rng, 0.0, 3.0);
        for (std::size_t j = 0; j < t.band_size(); ++j) {
            SpectralField e = basis_field(lat, j);
            EXPECT_LE((t.apply_Q(w, t.apply_g(w, e)) - e).coeffs().norm(), 1e-12);
        }
        SpectralField hi = project_band(random_field(lat, rng), 4, Band::high);
        EXPECT_EQ(t.apply_g(w, hi).norm(), 0.0);
        SpectralField f = random_field(lat, rng);
        const double bound = project_band(f, 4, Band::low).coeffs().norm() / t.min_q_bound();
        EXPECT_LE(t.apply_g(w, f).norm(), bound * (1.0 + 1e-12));
    }
}

TEST(NoiseModel, DerivativeClosedFormAndFiniteDifference) {
    auto lat = build_lattice(6, 3);
    NoiseModel a = NoiseModel::uniform(lat, 3, 1.0, Modulation::constant, 0.0);
    NoiseModel t = NoiseModel::uniform(lat, 3, 1.3, Modulation::tanh_diagonal, 0.4);
    std::mt19937_64 rng(5);
    SpectralField w = random_field(lat, rng);
    SpectralField z = random_field(lat, rng);
    NoiseVector du = randn(t.band_size(), rng);
    EXPECT_EQ(a.apply_DQ(w, z, du).coeffs().norm(), 0.0);

    SpectralField zero(lat);
    SpectralField at0 = t.apply_DQ(zero, z, du);
    for (std::size_t i = 0; i < t.band_size(); ++i) EXPECT_NEAR(at0[i], 0.4 * 1.3 * z[i] * du[static_cast<Eigen::Index>(i)], 1e-15);

    const SpectralField dq = t.apply_DQ(w, z, du);
    double prev_fwd = 0.0, prev_ctr = 0.0;
    for (double eps : {1e-2, 5e-3, 2.5e-3}) {
        SpectralField fwd = (1.0 / eps) * (t.apply_Q(w + eps * z, du) - t.apply_Q(w, du));
        SpectralField ctr = (0.5 / eps) * (t.apply_Q(w + eps * z, du) - t.apply_Q(w - eps * z, du));
        const double ef = (fwd - dq).coeffs().norm(), ec = (ctr - dq).coeffs().norm();
        if (prev_fwd > 0.0) {
            EXPECT_NEAR(prev_fwd / ef, 2.0, 0.2);
            EXPECT_NEAR(prev_ctr / ec, 4.0, 0.4);
        }
        prev_fwd = ef;
        prev_ctr = ec;
    }
    // linear in zeta and du
    SpectralField z2 = random_field(lat, rng);
    NoiseVector du2 = randn(t.band_size(), rng);
    EXPECT_LT((t.apply_DQ(w, 2.0 * z - z2, du) - (2.0 * t.apply_DQ(w, z, du) - t.apply_DQ(w, z2, du))).coeffs().norm(), 1e-13);
    EXPECT_LT((t.apply_DQ(w, z, du + 3.0 * du2) - (t.apply_DQ(w, z, du) + 3.0 * t.apply_DQ(w, z, du2))).coeffs().norm(), 1e-13);
}

TEST(NoiseModel, StableDifference) {
    auto lat = build_lattice(6, 3);
    NoiseModel t = NoiseModel::uniform(lat, 3, 1.0, Modulation::tanh_diagonal, 0.5);
    std::mt19937_64 rng(6);
    SpectralField w = random_field(lat, rng, 0.0, 2.0);
    NoiseVector du = randn(t.band_size(), rng);
    SpectralField r = random_field(lat, rng, 0.0, 0.7);
    EXPECT_LT((t.apply_Q_difference(w, r, du) - (t.apply_Q(w + r, du) - t.apply_Q(w, du))).coeffs().norm(), 1e-14);
    // far below roundoff of q itself the difference still tracks DQ[r] du
    SpectralField tiny = 1e-20 * r;
    SpectralField d = t.apply_Q_difference(w, tiny, du);
    SpectralField lin = t.apply_DQ(w, tiny, du);
    EXPECT_LT((d - lin).coeffs().norm(), 1e-12 * lin.coeffs().norm());
}

TEST(ValidateHypotheses, AdditiveAndTanh) {
    auto lat = build_lattice(8, 4);
    HypothesisReport ra = validate_hypotheses(NoiseModel::uniform(lat, 4, 1.0, Modulation::constant, 0.0), 200, 1);
    EXPECT_TRUE(ra.pass());
    EXPECT_EQ(ra.max_lipschitz_ratio, 0.0);
    EXPECT_EQ(ra.max_inverse_residual, 0.0);
    HypothesisReport rt = validate_hypotheses(NoiseModel::uniform(lat, 4, 1.0, Modulation::tanh_diagonal, 0.5), 500, 2);
    EXPECT_TRUE(rt.pass());
    EXPECT_LE(rt.max_hs_sq, rt.B0);
    EXPECT_GT(rt.max_lipschitz_ratio, 0.1);  // perturbations off the band do not move q
    EXPECT_THROW(validate_hypotheses(NoiseModel::uniform(lat, 4, 1.0, Modulation::constant, 0.0), 10, 1), std::invalid_argument);
    // zero amplitude: bounded and Lipschitz hold, the right inverse does not exist
    HypothesisReport rz = validate_hypotheses(NoiseModel::uniform(lat, 4, 0.0, Modulation::constant, 0.0), 100, 1);
    EXPECT_TRUE(rz.bounded_ok);
    EXPECT_FALSE(rz.inverse_ok);
}

TEST(ValidateHypotheses, LipschitzShrinksLinearlyWithDepth) {
    auto lat = build_lattice(6, 2);
    double prev = 0.0;
    for (double eps : {0.4, 0.2, 0.1, 0.05}) {
        HypothesisReport r = validate_hypotheses(NoiseModel::uniform(lat, 2, 1.0, Modulation::tanh_diagonal, eps), 300, 9);
        EXPECT_LE(r.max_lipschitz_ratio, eps);
        if (prev > 0.0) {
            EXPECT_NEAR(prev / r.max_lipschitz_ratio, 2.0, 0.1);
        }
        prev = r.max_lipschitz_ratio;
    }
}
