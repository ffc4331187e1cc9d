/// @file malliavin.hpp
/// @brief Control v = g(w) F, the gradient estimators built on it, and the
///        zeta moment check.
///
/// Gradient identity on a shared path, with I_v = sum v . dW:
///   <grad P_T phi(w0), xi> = E[phi(w_T) I_v] + E[<grad phi(w_T), rho_T>].
/// The finite-difference oracle runs w0 and w0 + eps xi on the same increments.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "vortex_mixer/ensemble.hpp"
#include "vortex_mixer/model.hpp"
#include "vortex_mixer/nonlinearity.hpp"
#include "vortex_mixer/stats.hpp"

namespace vortex {

/// F = P_N Bt(w, zeta) + (B1 - nu)|k|^2 zeta^l.  The integrator uses the same
/// form with the stiff part at its implicit predictor.
inline SpectralField control_F(const SpectralField& w, const SpectralField& zeta, int N, double B1, double nu) {
    SpectralField F = band_split_term(w, zeta, N).low;
    const Lattice& lat = w.lattice();
    const std::size_t nb = lat.band_size(N);
    for (std::size_t i = 0; i < nb; ++i) F[i] += (B1 - nu) * lat.k_sq(i) * zeta[i];
    return F;
}

inline NoiseVector control_v(const NoiseModel& model, const SpectralField& w, const SpectralField& F) { return model.apply_g(w, F); }

/// Built-in bounded observables with exact gradients.
struct Observable {
    enum class Kind { single_mode, bounded_exp, smoothed_energy, constant };
    Kind kind = Kind::single_mode;
    std::size_t mode = 0;  ///< coefficient index for single_mode
    double c = 1.0;        ///< value of the constant observable

    [[nodiscard]] double value(const SpectralField& w) const {
        switch (kind) {
            case Kind::single_mode: return w[mode];
            case Kind::bounded_exp: return std::exp(-w.coeffs().squaredNorm());
            case Kind::smoothed_energy: {
                const double e = w.coeffs().squaredNorm();
                return e / (1.0 + e);
            }
            case Kind::constant: return c;
        }
        return 0.0;
    }

    [[nodiscard]] SpectralField gradient(const SpectralField& w) const {
        switch (kind) {
            case Kind::single_mode: return basis_field(w.lattice_ptr(), mode);
            case Kind::bounded_exp: return (-2.0 * std::exp(-w.coeffs().squaredNorm())) * w;
            case Kind::smoothed_energy: {
                const double e = w.coeffs().squaredNorm();
                return (2.0 / ((1.0 + e) * (1.0 + e))) * w;
            }
            case Kind::constant: return SpectralField(w.lattice_ptr());
        }
        return SpectralField(w.lattice_ptr());
    }

    [[nodiscard]] std::string name() const {
        switch (kind) {
            case Kind::single_mode: return "single-mode";
            case Kind::bounded_exp: return "bounded-exp";
            case Kind::smoothed_energy: return "smoothed-energy";
            case Kind::constant: return "constant";
        }
        return "?";
    }
};

inline Observable observable_from_name(const std::string& s, std::size_t mode = 0) {
    Observable o;
    o.mode = mode;
    if (s == "single-mode") o.kind = Observable::Kind::single_mode;
    else if (s == "bounded-exp") o.kind = Observable::Kind::bounded_exp;
    else if (s == "smoothed-energy") o.kind = Observable::Kind::smoothed_energy;
    else if (s == "constant") o.kind = Observable::Kind::constant;
    else throw std::invalid_argument("unknown observable '" + s + "'");
    return o;
}

struct GradientProbe {
    std::vector<Observable> phi;
    SpectralField xi;
    double T = 1.0;
    std::size_t n_traj = 1000;

    void validate() const {
        if (phi.empty()) throw std::invalid_argument("gradient probe: no observables");
        if (std::abs(xi.coeffs().norm() - 1.0) > 1e-12) throw std::invalid_argument("gradient probe: |xi| must be 1");
        if (!(T > 0.0)) throw std::invalid_argument("gradient probe: T must be > 0");
        if (n_traj < 2) throw std::invalid_argument("gradient probe: need n_traj >= 2");
    }
};

struct GradientEstimate {
    std::string observable;
    MeanCI malliavin;   ///< E[phi I_v + <grad phi, rho>]
    MeanCI finite_diff; ///< E[(phi(w^eps_T) - phi(w_T)) / eps]
    MeanCI difference;  ///< paired difference of the two per-path estimators
    MeanCI weight_term; ///< E[phi I_v] alone
    [[nodiscard]] bool agree() const { return std::abs(difference.mean) <= difference.ci; }
    [[nodiscard]] bool inconclusive() const { return malliavin.ci > std::abs(malliavin.mean); }
};

struct GradientReport {
    std::vector<GradientEstimate> estimates;
    MeanCI stoch_int;       ///< E[I_v], zero for a martingale
    MeanCI stoch_int_sq;    ///< E[I_v^2]
    MeanCI control_energy;  ///< E[sum |v|^2 dt], equal to E[I_v^2] by isometry
    double eps = 0.0;
    std::size_t n_used = 0;
    std::size_t n_blown_up = 0;
};

namespace detail {
struct GradientSample {
    std::vector<double> mall, fd, weight;
    double I = 0.0, I2 = 0.0, energy = 0.0;
    bool ok = true;
};
}  // namespace detail

/// Both estimators on the same paths: one pass carries (w, zeta, rho) and a
/// second copy started at w0 + eps xi.  eps = 0 skips the finite difference.
inline GradientReport gradient_experiment(const ModelSetup& setup, const SpectralField& w0, const GradientProbe& probe, double eps,
                                          std::uint64_t seed) {
    probe.validate();
    if (eps != 0.0 && !(eps >= 1e-6 && eps <= 1e-2)) throw std::invalid_argument("gradient: eps must lie in [1e-6, 1e-2]");
    const std::size_t steps = step_count(probe.T, setup.scheme.dt);
    const std::size_t K = probe.phi.size();
    auto one = [&](std::size_t traj) {
        detail::GradientSample s;
        Integrator<NoiseModel> ig = setup.integrator();
        Integrator<NoiseModel> ig_fd = setup.integrator();
        TrajectoryState st;
        st.w = w0;
        st.zeta = probe.xi;
        st.rho = probe.xi;
        SpectralField wf = w0 + eps * probe.xi;
        GaussianStream g = path_stream(seed, traj);
        NoiseVector dW(static_cast<Eigen::Index>(setup.noise_dim()));
        for (std::size_t n = 0; n < steps && !st.blown_up; ++n) {
            g.increments(dW, setup.scheme.dt);
            if (eps != 0.0) wf = ig_fd.step_vorticity(wf, dW);
            ig.advance(st, dW);
        }
        if (st.blown_up || !Integrator<NoiseModel>::healthy(wf)) {
            s.ok = false;
            return s;
        }
        s.I = st.acc_stoch_int;
        s.I2 = s.I * s.I;
        s.energy = st.acc_control_sq;
        for (std::size_t k = 0; k < K; ++k) {
            const Observable& o = probe.phi[k];
            const double phi = o.value(st.w);
            s.weight.push_back(phi * s.I);
            s.mall.push_back(phi * s.I + inner_product(o.gradient(st.w), *st.rho));
            s.fd.push_back(eps != 0.0 ? (o.value(wf) - phi) / eps : 0.0);
        }
        return s;
    };
    auto samples = parallel_map<detail::GradientSample>(probe.n_traj, one);

    GradientReport rep;
    rep.eps = eps;
    std::vector<RunningStats> m(K), f(K), d(K), wt(K);
    RunningStats I, I2, E;
    for (const auto& s : samples) {
        if (!s.ok) {
            ++rep.n_blown_up;
            continue;
        }
        ++rep.n_used;
        I.add(s.I);
        I2.add(s.I2);
        E.add(s.energy);
        for (std::size_t k = 0; k < K; ++k) {
            m[k].add(s.mall[k]);
            f[k].add(s.fd[k]);
            d[k].add(s.mall[k] - s.fd[k]);
            wt[k].add(s.weight[k]);
        }
    }
    rep.stoch_int = I.summary();
    rep.stoch_int_sq = I2.summary();
    rep.control_energy = E.summary();
    for (std::size_t k = 0; k < K; ++k)
        rep.estimates.push_back({probe.phi[k].name(), m[k].summary(), f[k].summary(), d[k].summary(), wt[k].summary()});
    return rep;
}

inline MeanCI gradient_via_malliavin(const ModelSetup& setup, const SpectralField& w0, const GradientProbe& probe, std::uint64_t seed) {
    return gradient_experiment(setup, w0, probe, 0.0, seed).estimates.front().malliavin;
}

inline MeanCI gradient_via_finite_difference(const ModelSetup& setup, const SpectralField& w0, const GradientProbe& probe, double eps,
                                             std::uint64_t seed) {
    if (!(eps >= 1e-6 && eps <= 1e-2)) throw std::invalid_argument("gradient: eps must lie in [1e-6, 1e-2]");
    return gradient_experiment(setup, w0, probe, eps, seed).estimates.front().finite_diff;
}

/// A_{0,T} v: the linear SDE dA = [nu Lap A + Bt(w, A) + Q(w) v] dt + DQ(w) A dW, A(0) = 0.
inline SpectralField malliavin_directional(const ModelSetup& setup, const SpectralField& w0, const std::vector<NoiseVector>& v,
                                           const std::vector<NoiseVector>& increments) {
    if (v.size() != increments.size()) throw std::invalid_argument("malliavin_directional: v and the time grid differ in length");
    Integrator<NoiseModel> ig = setup.integrator();
    TrajectoryState st;
    st.w = w0;
    st.malliavin = SpectralField(setup.lattice);
    for (std::size_t n = 0; n < v.size(); ++n) ig.advance(st, increments[n], &v[n]);
    return *st.malliavin;
}

/// (Phi_T(dW + eps v dt) - Phi_T(dW)) / eps on one path.
inline SpectralField shifted_path_difference(const ModelSetup& setup, const SpectralField& w0, const std::vector<NoiseVector>& v,
                                             const std::vector<NoiseVector>& increments, double eps) {
    if (v.size() != increments.size()) throw std::invalid_argument("shifted_path_difference: v and the time grid differ in length");
    Integrator<NoiseModel> ig = setup.integrator();
    SpectralField a = w0, b = w0;
    for (std::size_t n = 0; n < v.size(); ++n) {
        a = ig.step_vorticity(a, increments[n]);
        b = ig.step_vorticity(b, increments[n] + (eps * setup.scheme.dt) * v[n]);
    }
    return (1.0 / eps) * (b - a);
}

/// J_{0,T} xi and its common-path finite difference at eps.
struct TangentCheck {
    SpectralField J_xi;
    SpectralField fd;
    [[nodiscard]] double rel_error() const { return (fd - J_xi).coeffs().norm() / J_xi.coeffs().norm(); }
};

inline TangentCheck derivative_flow_check(const ModelSetup& setup, const SpectralField& w0, const SpectralField& xi,
                                          const std::vector<NoiseVector>& increments, double eps) {
    Integrator<NoiseModel> ig = setup.integrator();
    TrajectoryState st;
    st.w = w0;
    st.J_xi = xi;
    SpectralField b = w0 + eps * xi;
    for (const auto& dW : increments) {
        b = ig.step_vorticity(b, dW);
        ig.advance(st, dW);
    }
    return {*st.J_xi, (1.0 / eps) * (b - st.w)};
}

/// max_t ||rho_t - zeta_t|| along one path driven by the given increments.
inline double rho_zeta_deviation(const ModelSetup& setup, const SpectralField& w0, const SpectralField& xi,
                                 const std::vector<NoiseVector>& increments) {
    Integrator<NoiseModel> ig = setup.integrator();
    TrajectoryState st;
    st.w = w0;
    st.zeta = xi;
    st.rho = xi;
    double dev = 0.0;
    for (const auto& dW : increments) {
        ig.advance(st, dW);
        if (st.blown_up) return std::numeric_limits<double>::infinity();
        dev = std::max(dev, (*st.rho - *st.zeta).coeffs().norm());
    }
    return dev;
}

inline double verify_rho_equals_zeta(const ModelSetup& setup, const SpectralField& w0, const SpectralField& xi, double T,
                                     std::uint64_t seed, std::size_t traj = 0) {
    const std::size_t steps = step_count(T, setup.scheme.dt);
    GaussianStream g = path_stream(seed, traj);
    std::vector<NoiseVector> inc(steps, NoiseVector(static_cast<Eigen::Index>(setup.noise_dim())));
    for (auto& v : inc) g.increments(v, setup.scheme.dt);
    return rho_zeta_deviation(setup, w0, xi, inc);
}

/// Brownian increments at step T/fine_steps, summed in blocks of `factor`.
inline std::vector<NoiseVector> brownian_increments(std::size_t dim, double T, std::size_t fine_steps, std::size_t factor,
                                                    std::uint64_t seed, std::size_t traj) {
    if (factor == 0 || fine_steps % factor != 0) throw std::invalid_argument("brownian_increments: factor must divide the step count");
    GaussianStream g = path_stream(seed, traj);
    const double dt = T / static_cast<double>(fine_steps);
    std::vector<NoiseVector> out;
    out.reserve(fine_steps / factor);
    NoiseVector dW(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < fine_steps; i += factor) {
        NoiseVector s = NoiseVector::Zero(static_cast<Eigen::Index>(dim));
        for (std::size_t j = 0; j < factor; ++j) {
            g.increments(dW, dt);
            s += dW;
        }
        out.push_back(s);
    }
    return out;
}

struct RhoZetaSweep {
    std::vector<double> dt;
    std::vector<double> deviation;  ///< mean over paths of the max deviation
    std::vector<double> ratio;      ///< deviation[i+1] / deviation[i]
};

/// Deviation at dt_0, dt_0/2, ... on nested Brownian paths.
inline RhoZetaSweep rho_zeta_sweep(const ModelSpec& spec, const SpectralField& w0_template, const SpectralField& xi, double T,
                                   std::size_t levels, std::size_t n_paths, std::uint64_t seed) {
    const std::size_t coarse = step_count(T, spec.dt);
    const std::size_t fine = coarse << (levels - 1);
    RhoZetaSweep out;
    std::vector<double> acc(levels, 0.0);
    for (std::size_t l = 0; l < levels; ++l) {
        ModelSpec s = spec;
        s.dt = T / static_cast<double>(coarse << l);
        ModelSetup setup(s);
        SpectralField w0(setup.lattice, w0_template.coeffs());
        SpectralField x(setup.lattice, xi.coeffs());
        for (std::size_t p = 0; p < n_paths; ++p)
            acc[l] += rho_zeta_deviation(setup, w0, x, brownian_increments(setup.noise_dim(), T, fine, std::size_t{1} << (levels - 1 - l), seed, p));
        out.dt.push_back(s.dt);
        out.deviation.push_back(acc[l] / static_cast<double>(n_paths));
    }
    for (std::size_t l = 1; l < levels; ++l) out.ratio.push_back(out.deviation[l] / out.deviation[l - 1]);
    return out;
}

struct MomentReport {
    std::string statistic;
    double estimate = 0.0;
    double ci = 0.0;
    double bound = std::numeric_limits<double>::infinity();
    bool pass = false;
    bool heavy_tail = false;
    bool out_of_range = false;
    double ess = 0.0;
    std::size_t n_traj = 0;
    std::size_t n_blown_up = 0;
    double T = 0.0;
    double dt = 0.0;
};

/// pass iff estimate <= bound (1 + 3 rel_ci); heavy tails flagged by ESS.
inline void finish_moment(MomentReport& r, const ExpMean& e) {
    r.estimate = e.value();
    r.ci = e.ci();
    r.ess = e.ess;
    r.heavy_tail = e.n > 0 && (e.ess < 0.05 * static_cast<double>(e.n) || !(e.rel_ci < 0.5));
    r.pass = std::isfinite(r.bound) ? r.estimate <= r.bound * (1.0 + 3.0 * e.rel_ci) : true;
}

struct ZetaMomentOptions {
    int n = 1;
    double eta = 0.0;  ///< 0 selects nu^2 / (32 B0)
    double T = 1.0;
    std::size_t n_traj = 1000;
    bool freeze_w = false;  ///< test mode: w held at w0
};

/// E[||zeta_T||^{2n} exp((nu n N^2 - n(n-1) L_Q / 2) T - 4 eta int ||w||_1^2)] <= 1.
inline MomentReport zeta_moment_check(const ModelSetup& setup, const SpectralField& w0, const SpectralField& xi,
                                      const ZetaMomentOptions& opt, std::uint64_t seed) {
    if (opt.n != 1 && opt.n != 2) throw std::invalid_argument("zeta_moment_check: n must be 1 or 2");
    const double nu = setup.nu();
    const double N = setup.spec.N;
    const double eta = opt.eta > 0.0 ? opt.eta : nu * nu / (32.0 * setup.B0());
    MomentReport rep;
    rep.statistic = "zeta-moment-n" + std::to_string(opt.n);
    rep.bound = 1.0;
    rep.T = opt.T;
    rep.dt = setup.scheme.dt;
    rep.out_of_range = eta > nu * nu / (8.0 * opt.n * setup.B0());
    const double n = opt.n;
    const double growth = (nu * n * N * N - n * (n - 1.0) * setup.noise.L_Q() / 2.0) * opt.T;
    const std::size_t steps = step_count(opt.T, setup.scheme.dt);
    auto one = [&](std::size_t traj) {
        Integrator<NoiseModel> ig = setup.integrator();
        TrajectoryState st;
        st.w = w0;
        st.zeta = xi;
        st.freeze_w = opt.freeze_w;
        GaussianStream g = path_stream(seed, traj);
        NoiseVector dW(static_cast<Eigen::Index>(setup.noise_dim()));
        for (std::size_t k = 0; k < steps && !st.blown_up; ++k) {
            g.increments(dW, setup.scheme.dt);
            ig.advance(st, dW);
        }
        if (st.blown_up) return std::numeric_limits<double>::quiet_NaN();
        return 2.0 * n * std::log(st.zeta->coeffs().norm()) + growth - 4.0 * eta * st.acc_h1;
    };
    auto logs = parallel_map<double>(opt.n_traj, one);
    std::vector<double> ok;
    for (double v : logs) {
        if (std::isnan(v)) ++rep.n_blown_up;
        else ok.push_back(v);
    }
    rep.n_traj = ok.size();
    finish_moment(rep, exp_mean(ok));
    return rep;
}

}  // namespace vortex
