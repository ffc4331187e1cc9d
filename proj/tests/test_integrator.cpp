// Time stepping of w and the tangent processes on a shared path.
#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "vortex_mixer/integrator.hpp"
#include "vortex_mixer/rng.hpp"

using namespace vortex;

namespace {

StepScheme scheme(double dt, double nu = 1.0, int N = 4) {
    StepScheme s;
    s.dt = dt;
    s.nu = nu;
    s.N = N;
    s.B1 = 1.5 * nu * N * N;
    return s;
}

std::vector<NoiseVector> brownian_path(std::size_t dim, std::size_t steps, double dt, std::uint64_t seed) {
    GaussianStream g(seed);
    std::vector<NoiseVector> out(steps, NoiseVector(static_cast<Eigen::Index>(dim)));
    for (auto& v : out) g.increments(v, dt);
    return out;
}

// coarse increments are sums of consecutive fine increments
std::vector<NoiseVector> coarsen(const std::vector<NoiseVector>& fine, std::size_t factor) {
    std::vector<NoiseVector> out;
    for (std::size_t i = 0; i < fine.size(); i += factor) {
        NoiseVector s = fine[i];
        for (std::size_t j = 1; j < factor; ++j) s += fine[i + j];
        out.push_back(s);
    }
    return out;
}

SpectralField run(Integrator<NoiseModel>& ig, SpectralField w, const std::vector<NoiseVector>& path) {
    for (const auto& dW : path) w = ig.step_vorticity(w, dW);
    return w;
}

}  // namespace

TEST(StepScheme, RejectsSmallB1) {
    StepScheme s = scheme(1e-3);
    s.B1 = 15.9;
    try {
        s.validate();
        FAIL() << "expected rejection";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("bigger than nu*N^2"), std::string::npos);
    }
}

TEST(Integrator, HeatKernelStep) {
    auto lat = build_lattice(6, 2);
    StepScheme s = scheme(0.01, 0.7, 2);
    s.advect = false;
    Integrator<NoiseModel> ig(lat, s, NoiseModel::uniform(lat, 2, 0.0, Modulation::constant, 0.0));
    const std::size_t i = lat->index_of({2, 3}).value();
    SpectralField w = basis_field(lat, i, 1.5);
    NoiseVector dW = NoiseVector::Ones(static_cast<Eigen::Index>(ig.noise_dim()));
    SpectralField w1 = ig.step_vorticity(w, dW);
    EXPECT_DOUBLE_EQ(w1[i], 1.5 / (1.0 + 0.01 * 0.7 * 13.0));
    EXPECT_EQ(w1.coeffs().norm(), std::abs(w1[i]));
}

TEST(Integrator, ZeroDirectionStaysZero) {
    auto lat = build_lattice(8, 4);
    Integrator<NoiseModel> ig(lat, scheme(2e-3), NoiseModel::uniform(lat, 4, 1.0, Modulation::tanh_diagonal, 0.5));
    TrajectoryState st;
    GaussianStream g(1);
    st.w = random_field(lat, g.engine(), 1.0);
    st.J_xi = SpectralField(lat);
    auto path = brownian_path(ig.noise_dim(), 100, 2e-3, 2);
    for (const auto& dW : path) ig.advance(st, dW);
    EXPECT_EQ(st.J_xi->coeffs().norm(), 0.0);
    EXPECT_NEAR(st.t, 0.2, 1e-12);
    EXPECT_EQ(st.steps, 100u);
}

// J is the derivative of the discrete flow map, so finite differences on the
// same path converge to it at O(eps).
TEST(Integrator, DerivativeFlowMatchesFiniteDifference) {
    auto lat = build_lattice(8, 4);
    const double dt = 2e-3;
    Integrator<NoiseModel> ig(lat, scheme(dt), NoiseModel::uniform(lat, 4, 1.0, Modulation::tanh_diagonal, 0.5));
    GaussianStream g(3);
    SpectralField w0 = random_field(lat, g.engine(), 1.0, 1.0);
    SpectralField xi = random_field(lat, g.engine(), 1.0);
    xi *= 1.0 / xi.coeffs().norm();
    auto path = brownian_path(ig.noise_dim(), 250, dt, 4);
    TrajectoryState st;
    st.w = w0;
    st.J_xi = xi;
    for (const auto& dW : path) ig.advance(st, dW);
    const SpectralField base = run(ig, w0, path);
    EXPECT_EQ((base - st.w).coeffs().norm(), 0.0);
    double prev = 0.0;
    for (double eps : {1e-3, 1e-4, 1e-5}) {
        SpectralField fd = (1.0 / eps) * (run(ig, w0 + eps * xi, path) - base);
        const double err = (fd - *st.J_xi).coeffs().norm() / st.J_xi->coeffs().norm();
        if (eps == 1e-5) {
            EXPECT_LT(err, 1e-3);
        }
        if (prev > 0.0 && eps >= 1e-4) {
            EXPECT_NEAR(prev / err, 10.0, 2.0);
        }
        prev = err;
    }
}

TEST(Integrator, DerivativeFlowLinearity) {
    auto lat = build_lattice(8, 4);
    Integrator<NoiseModel> ig(lat, scheme(2e-3), NoiseModel::uniform(lat, 4, 1.0, Modulation::tanh_diagonal, 0.5));
    GaussianStream g(5);
    SpectralField w0 = random_field(lat, g.engine(), 1.0, 1.0);
    SpectralField x1 = random_field(lat, g.engine(), 1.0), x2 = random_field(lat, g.engine(), 1.0);
    auto path = brownian_path(ig.noise_dim(), 200, 2e-3, 6);
    auto flow = [&](const SpectralField& xi) {
        TrajectoryState st;
        st.w = w0;
        st.J_xi = xi;
        for (const auto& dW : path) ig.advance(st, dW);
        return *st.J_xi;
    };
    const double a = 0.6, b = -1.7;
    SpectralField lhs = flow(a * x1 + b * x2);
    SpectralField rhs = a * flow(x1) + b * flow(x2);
    EXPECT_LT((lhs - rhs).coeffs().norm(), 1e-10 * rhs.coeffs().norm());
}

TEST(Integrator, ZeroControlGivesRhoEqualJBitwise) {
    auto lat = build_lattice(8, 4);
    Integrator<NoiseModel> ig(lat, scheme(2e-3), NoiseModel::uniform(lat, 4, 1.0, Modulation::tanh_diagonal, 0.5));
    GaussianStream g(7);
    TrajectoryState st;
    st.w = random_field(lat, g.engine(), 1.0, 1.0);
    SpectralField xi = mode_field(lat, {1, 0});
    st.J_xi = xi;
    st.rho = xi;
    NoiseVector v0 = NoiseVector::Zero(static_cast<Eigen::Index>(ig.noise_dim()));
    auto path = brownian_path(ig.noise_dim(), 150, 2e-3, 8);
    for (const auto& dW : path) ig.advance(st, dW, &v0);
    EXPECT_TRUE(st.rho->coeffs() == st.J_xi->coeffs());
}

TEST(Integrator, RhoEqualsJMinusA) {
    auto lat = build_lattice(8, 4);
    Integrator<NoiseModel> ig(lat, scheme(2e-3), NoiseModel::uniform(lat, 4, 1.0, Modulation::tanh_diagonal, 0.5));
    GaussianStream g(9);
    TrajectoryState st;
    st.w = random_field(lat, g.engine(), 1.0, 1.0);
    SpectralField xi = mode_field(lat, {0, 1});
    st.J_xi = xi;
    st.zeta = xi;
    st.rho = xi;
    st.malliavin = SpectralField(lat);
    auto path = brownian_path(ig.noise_dim(), 250, 2e-3, 10);
    for (const auto& dW : path) ig.advance(st, dW);
    const SpectralField diff = *st.J_xi - *st.malliavin - *st.rho;
    EXPECT_LT(diff.coeffs().norm(), 1e-12 * st.J_xi->coeffs().norm());
    EXPECT_GT(st.malliavin->coeffs().norm(), 1e-3);
}

// Frozen w = 0 with additive noise decouples every mode.
TEST(Integrator, ZetaDecaysModewise) {
    auto lat = build_lattice(8, 4);
    const double dt = 1e-3;
    StepScheme s = scheme(dt, 0.5);
    Integrator<NoiseModel> ig(lat, s, NoiseModel::uniform(lat, 4, 1.0, Modulation::constant, 0.0));
    TrajectoryState st;
    st.w = SpectralField(lat);
    st.freeze_w = true;
    SpectralField z0(lat);
    z0.coeffs().setOnes();
    st.zeta = z0;
    auto path = brownian_path(ig.noise_dim(), 200, dt, 11);
    for (const auto& dW : path) ig.advance(st, dW);
    const std::size_t nb = lat->band_size(4);
    for (std::size_t i = 0; i < lat->size(); i += 5) {
        const double rate = (i < nb ? s.B1 : s.nu) * lat->k_sq(i);
        EXPECT_NEAR((*st.zeta)[i], std::pow(1.0 + dt * rate, -200.0), 1e-13);
    }
}

// Strong self-convergence on refined Brownian paths.
TEST(Integrator, StrongSelfConvergence) {
    auto lat = build_lattice(8, 4);
    const double T = 0.25;
    const double dt_ref = T / 512;
    for (bool additive : {true, false}) {
        NoiseModel m = additive ? NoiseModel::uniform(lat, 4, 1.0, Modulation::constant, 0.0)
                                : NoiseModel::uniform(lat, 4, 1.0, Modulation::tanh_diagonal, 0.9);
        Integrator<NoiseModel> ref(lat, scheme(dt_ref), m);
        std::vector<double> errs;
        std::vector<std::size_t> factors{32, 16, 8, 4};
        std::vector<std::unique_ptr<Integrator<NoiseModel>>> igs;
        for (auto f : factors) igs.push_back(std::make_unique<Integrator<NoiseModel>>(lat, scheme(dt_ref * f), m));
        errs.assign(factors.size(), 0.0);
        const int paths = 12;
        for (int p = 0; p < paths; ++p) {
            GaussianStream g(100 + p);
            SpectralField w0 = random_field(lat, g.engine(), 1.5, 2.0);
            // w0 on the band makes tanh sensitivity visible
            auto fine = brownian_path(ref.noise_dim(), 512, dt_ref, 200 + p);
            SpectralField wr = run(ref, w0, fine);
            for (std::size_t q = 0; q < factors.size(); ++q) errs[q] += (run(*igs[q], w0, coarsen(fine, factors[q])) - wr).coeffs().norm();
        }
        // least squares slope of log err vs log dt
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t q = 0; q < factors.size(); ++q) {
            const double x = std::log(dt_ref * factors[q]), y = std::log(errs[q] / paths);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double n = static_cast<double>(factors.size());
        const double order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        if (additive) {
            EXPECT_GT(order, 0.85) << "additive order " << order;
        } else {
            EXPECT_GT(order, 0.45) << "multiplicative order " << order;
        }
    }
}

// One-step energy identity: E||w1||^2 - ||w0||^2 = dt(-2 nu ||w0||_1^2 + ||Q(w0)||_HS^2) + O(dt^2).
TEST(Integrator, OneStepEnergyBalance) {
    auto lat = build_lattice(8, 4);
    const double dt = 1e-4;
    NoiseModel m = NoiseModel::uniform(lat, 4, 1.0, Modulation::tanh_diagonal, 0.5);
    Integrator<NoiseModel> ig(lat, scheme(dt), m);
    GaussianStream g0(12);
    SpectralField w0 = random_field(lat, g0.engine(), 2.0, 1.0);
    const double e0 = w0.coeffs().squaredNorm();
    const double expect = dt * (-2.0 * 1.0 * sobolev_norm_sq(w0, 1.0) + m.hs_norm_sq(w0));
    const int n = 4000;
    double s = 0.0, ss = 0.0;
    NoiseVector dW(static_cast<Eigen::Index>(ig.noise_dim()));
    for (int i = 0; i < n; ++i) {
        GaussianStream g(13, static_cast<std::uint64_t>(i));
        g.increments(dW, dt);
        const double d = ig.step_vorticity(w0, dW).coeffs().squaredNorm() - e0;
        s += d;
        ss += d * d;
    }
    const double mean = s / n;
    const double se = std::sqrt((ss / n - mean * mean) / n);
    EXPECT_LE(std::abs(mean - expect), 3.0 * se + 1e-6) << mean << " vs " << expect << " se " << se;
}
