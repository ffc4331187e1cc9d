/// @file model.hpp
/// @brief Model setup shared by the experiments, initial data, and the basic
///        path simulator.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vortex_mixer/integrator.hpp"
#include "vortex_mixer/lattice.hpp"
#include "vortex_mixer/noise_model.hpp"
#include "vortex_mixer/rng.hpp"

namespace vortex {

struct NoiseSpec {
    Modulation modulation = Modulation::tanh_diagonal;
    std::vector<double> sigma{1.0};  ///< one value broadcasts to the band
    double eps_mod = 0.5;
};

struct ModelSpec {
    int M = 16;
    int N = 4;
    double nu = 1.0;
    NoiseSpec noise;
    double dt = 1e-3;
    double B1 = 0.0;  ///< 0 selects 1.5 nu N^2

    [[nodiscard]] double b1() const { return B1 > 0.0 ? B1 : 1.5 * nu * N * N; }
    [[nodiscard]] StepScheme scheme() const {
        StepScheme s;
        s.dt = dt;
        s.nu = nu;
        s.N = N;
        s.B1 = b1();
        return s;
    }
};

/// Lattice, noise and scheme built once and shared read-only by workers.
struct ModelSetup {
    ModelSpec spec;
    LatticePtr lattice;
    NoiseModel noise;
    StepScheme scheme;

    explicit ModelSetup(const ModelSpec& s)
        : spec(s),
          lattice(build_lattice(s.M, s.N)),
          noise(lattice, s.N, s.noise.sigma, s.noise.modulation, s.noise.eps_mod),
          scheme(s.scheme()) {
        scheme.validate();
    }

    [[nodiscard]] Integrator<NoiseModel> integrator() const { return Integrator<NoiseModel>(lattice, scheme, noise); }
    [[nodiscard]] std::size_t noise_dim() const { return noise.band_size(); }
    [[nodiscard]] double B0() const { return noise.B0(); }
    [[nodiscard]] double nu() const { return spec.nu; }
};

struct InitialCondition {
    enum class Kind { zero, mode, random };
    Kind kind = Kind::zero;
    int k1 = 1;
    int k2 = 0;
    double amplitude = 1.0;  ///< mode amplitude, or target L2 norm for random
    double decay = 2.0;      ///< random: spectral envelope exponent
    std::uint64_t seed = 0;  ///< random: draw seed
};

inline SpectralField make_initial(const LatticePtr& lat, const InitialCondition& ic) {
    switch (ic.kind) {
        case InitialCondition::Kind::zero:
            return SpectralField(lat);
        case InitialCondition::Kind::mode:
            return mode_field(lat, {ic.k1, ic.k2}, ic.amplitude);
        case InitialCondition::Kind::random: {
            GaussianStream g(ic.seed);
            SpectralField w = random_field(lat, g.engine(), ic.decay);
            const double n = w.coeffs().norm();
            if (n > 0.0) w *= ic.amplitude / n;
            return w;
        }
    }
    throw std::invalid_argument("initial condition: unknown kind");
}

inline std::size_t step_count(double T, double dt) {
    if (!(T >= 0.0) || !(dt > 0.0)) throw std::invalid_argument("step_count: need T >= 0 and dt > 0");
    return static_cast<std::size_t>(std::llround(T / dt));
}

/// Per-trajectory Brownian source; sub-stream 0 drives the path.
inline GaussianStream path_stream(std::uint64_t seed, std::size_t traj, std::uint64_t sub = 0) {
    return GaussianStream(seed, static_cast<std::uint64_t>(traj), sub);
}

struct PathOptions {
    double T = 1.0;
    std::size_t record_stride = 10;
    bool derivative_flow = false;  ///< carry J xi
    bool control = false;          ///< carry zeta and rho with v = g(w) F
    std::optional<SpectralField> xi;  ///< tangent direction, default e_0
    std::size_t n_modes = 4;       ///< leading coefficients echoed per record
};

struct PathRecord {
    double t = 0.0;
    double norm_l2 = 0.0;
    double norm_h1 = 0.0;
    double dissipation = 0.0;  ///< -2 nu ||w||_1^2
    double noise_power = 0.0;  ///< ||Q(w)||_HS^2
    std::vector<double> modes;
    std::optional<double> J_norm;
    std::optional<double> zeta_norm;
    std::optional<double> rho_norm;
    double acc_stoch_int = 0.0;
    double acc_control_sq = 0.0;
    bool blown_up = false;
};

/// Number of records ⌊T/(dt stride)⌋ + 1 including the initial one.
inline std::size_t record_count(double T, double dt, std::size_t stride) { return step_count(T, dt) / stride + 1; }

inline std::vector<PathRecord> simulate_path(const ModelSetup& setup, const SpectralField& w0, const PathOptions& opt,
                                             std::uint64_t seed, std::size_t traj = 0) {
    if (opt.record_stride == 0) throw std::invalid_argument("simulate_path: record stride must be >= 1");
    Integrator<NoiseModel> ig = setup.integrator();
    const double dt = setup.scheme.dt;
    const std::size_t steps = step_count(opt.T, dt);
    TrajectoryState st;
    st.w = w0;
    const SpectralField xi = opt.xi ? *opt.xi : basis_field(setup.lattice, 0);
    if (opt.derivative_flow) st.J_xi = xi;
    if (opt.control) {
        st.zeta = xi;
        st.rho = xi;
    }
    const std::size_t nm = std::min(opt.n_modes, setup.lattice->size());
    auto snap = [&] {
        PathRecord r;
        r.t = st.t;
        r.norm_l2 = st.w.coeffs().norm();
        const double h1 = sobolev_norm_sq(st.w, 1.0);
        r.norm_h1 = std::sqrt(h1);
        r.dissipation = -2.0 * setup.nu() * h1;
        r.noise_power = setup.noise.hs_norm_sq(st.w);
        for (std::size_t i = 0; i < nm; ++i) r.modes.push_back(st.w[i]);
        if (st.J_xi) r.J_norm = st.J_xi->coeffs().norm();
        if (st.zeta) r.zeta_norm = st.zeta->coeffs().norm();
        if (st.rho) r.rho_norm = st.rho->coeffs().norm();
        r.acc_stoch_int = st.acc_stoch_int;
        r.acc_control_sq = st.acc_control_sq;
        r.blown_up = st.blown_up;
        return r;
    };
    std::vector<PathRecord> out;
    out.reserve(steps / opt.record_stride + 1);
    out.push_back(snap());
    GaussianStream g = path_stream(seed, traj);
    NoiseVector dW(static_cast<Eigen::Index>(setup.noise_dim()));
    for (std::size_t n = 1; n <= steps; ++n) {
        g.increments(dW, dt);
        ig.advance(st, dW);
        if (n % opt.record_stride == 0) out.push_back(snap());
    }
    return out;
}

}  // namespace vortex
