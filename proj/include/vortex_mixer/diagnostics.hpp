/// @file diagnostics.hpp
/// @brief Exponential moment checks, the Lyapunov structure with its two
///        auxiliary inequalities, two-start mixing and invariant-measure
///        sampling.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vortex_mixer/ensemble.hpp"
#include "vortex_mixer/malliavin.hpp"
#include "vortex_mixer/model.hpp"
#include "vortex_mixer/stats.hpp"

namespace vortex {

/// Fitted constant in <B(K xi, w), xi> <= C ||xi||_{1/2} ||w||_1 ||xi||:
/// the largest sampled ratio over fields with several spectral slopes.
inline double fit_transport_constant(const LatticePtr& lat, std::size_t n_samples, std::uint64_t seed) {
    GaussianStream g(seed);
    double c = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        SpectralField xi = random_field(lat, g.engine(), 0.5 + static_cast<double>(s % 4));
        SpectralField w = random_field(lat, g.engine(), 1.0 + static_cast<double>(s % 3));
        const double den = sobolev_norm(xi, 0.5) * sobolev_norm(w, 1.0) * xi.coeffs().norm();
        if (den > 0.0) c = std::max(c, std::abs(inner_product(transport(xi, w), xi)) / den);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Exponential moments

struct SupSample {
    double sup_energy = 0.0;       ///< max over the grid of ||w_t||^2
    double sup_dissipative = 0.0;  ///< max of ||w_t||^2 + nu int ||w||_1^2 - B0 t
    bool blown_up = false;
};

inline SupSample sup_path(const ModelSetup& setup, const SpectralField& w0, double T, std::uint64_t seed, std::size_t traj,
                          std::uint64_t sub) {
    Integrator<NoiseModel> ig = setup.integrator();
    TrajectoryState st;
    st.w = w0;
    const std::size_t steps = step_count(T, setup.scheme.dt);
    SupSample s;
    s.sup_energy = s.sup_dissipative = w0.coeffs().squaredNorm();
    GaussianStream g = path_stream(seed, traj, sub);
    NoiseVector dW(static_cast<Eigen::Index>(setup.noise_dim()));
    const double nu = setup.nu(), B0 = setup.B0();
    for (std::size_t n = 0; n < steps && !st.blown_up; ++n) {
        g.increments(dW, setup.scheme.dt);
        ig.advance(st, dW);
        const double e = st.w.coeffs().squaredNorm();
        s.sup_energy = std::max(s.sup_energy, e);
        s.sup_dissipative = std::max(s.sup_dissipative, e + nu * st.acc_h1 - B0 * st.t);
    }
    s.blown_up = st.blown_up;
    return s;
}

struct MomentStability {
    MomentReport at_T;
    MomentReport at_2T;
    double log_gap = 0.0;   ///< log est(2T) - log est(T)
    double log_ci = 0.0;    ///< joint 95% half-width of the gap
    bool stable = false;    ///< |gap| <= log_ci
    bool out_of_range = false;
};

enum class SupKind { energy, dissipative };

/// E exp(eta sup_t X_t) at T and 2T from independent ensembles (sub-streams
/// 1 and 2 of the root seed).
inline MomentStability exp_moment_stability(const ModelSetup& setup, const SpectralField& w0, double eta, double T,
                                            std::size_t n_traj, std::uint64_t seed, SupKind kind) {
    if (!(eta > 0.0)) throw std::invalid_argument("exp moment: eta must be > 0");
    MomentStability out;
    out.out_of_range = eta > setup.nu() / (2.0 * setup.B0());
    auto run = [&](double horizon, std::uint64_t sub) {
        auto samples = parallel_map<SupSample>(n_traj, [&](std::size_t i) { return sup_path(setup, w0, horizon, seed, i, sub); });
        std::vector<double> x;
        MomentReport r;
        r.statistic = kind == SupKind::energy ? "exp-moment-sup" : "exp-moment-dissipative";
        r.T = horizon;
        r.dt = setup.scheme.dt;
        for (const auto& s : samples) {
            if (s.blown_up) ++r.n_blown_up;
            else x.push_back(eta * (kind == SupKind::energy ? s.sup_energy : s.sup_dissipative));
        }
        r.n_traj = x.size();
        r.out_of_range = out.out_of_range;
        ExpMean e = exp_mean(x);
        finish_moment(r, e);
        return std::pair{r, e};
    };
    auto [a, ea] = run(T, 1);
    auto [b, eb] = run(2.0 * T, 2);
    out.at_T = a;
    out.at_2T = b;
    out.log_gap = eb.log_mean - ea.log_mean;
    out.log_ci = std::hypot(ea.rel_ci, eb.rel_ci);
    out.stable = std::abs(out.log_gap) <= out.log_ci + 1e-12;
    return out;
}

inline MomentStability exp_moment_sup(const ModelSetup& setup, const SpectralField& w0, double eta, double T, std::size_t n_traj,
                                      std::uint64_t seed) {
    return exp_moment_stability(setup, w0, eta, T, n_traj, seed, SupKind::energy);
}

inline MomentStability exp_moment_dissipative(const ModelSetup& setup, const SpectralField& w0, double eta, double T,
                                              std::size_t n_traj, std::uint64_t seed) {
    return exp_moment_stability(setup, w0, eta, T, n_traj, seed, SupKind::dissipative);
}

/// Regression of log E exp(eta sup ||w_t||^2) on ||w0||^2 along a ray.
inline LinearFit exp_moment_scaling(const ModelSetup& setup, const SpectralField& direction, const std::vector<double>& amplitudes,
                                    double eta, double T, std::size_t n_traj, std::uint64_t seed, SupKind kind) {
    std::vector<double> x, y;
    for (double a : amplitudes) {
        const SpectralField w0 = a * direction;
        auto samples = parallel_map<SupSample>(n_traj, [&](std::size_t i) { return sup_path(setup, w0, T, seed, i, 3); });
        std::vector<double> v;
        for (const auto& s : samples)
            if (!s.blown_up) v.push_back(eta * (kind == SupKind::energy ? s.sup_energy : s.sup_dissipative));
        x.push_back(w0.coeffs().squaredNorm());
        y.push_back(exp_mean(v).log_mean);
    }
    return linear_fit(x, y);
}

/// E[||J xi||^2 exp(-h(eta) T - eta int ||w||_1^2)] with
/// h(eta) = 16 C^4 / (eta^2 nu) + L_Q; the bound is 1.
inline MomentReport tangent_moment_check(const ModelSetup& setup, const SpectralField& w0, const SpectralField& xi, double eta,
                                         double T, std::size_t n_traj, std::uint64_t seed, double C_hat = 0.0) {
    if (!(eta > 0.0)) throw std::invalid_argument("tangent moment: eta must be > 0");
    if (std::abs(xi.coeffs().norm() - 1.0) > 1e-12) throw std::invalid_argument("tangent moment: |xi| must be 1");
    const double C = C_hat > 0.0 ? C_hat : fit_transport_constant(setup.lattice, 400, seed ^ 0x5bd1e995ULL);
    const double h = 16.0 * std::pow(C, 4) / (eta * eta * setup.nu()) + setup.noise.L_Q();
    struct S {
        double log_stat;
        bool bad;
    };
    auto samples = parallel_map<S>(n_traj, [&](std::size_t i) {
        Integrator<NoiseModel> ig = setup.integrator();
        TrajectoryState st;
        st.w = w0;
        st.J_xi = xi;
        GaussianStream g = path_stream(seed, i, 7);
        NoiseVector dW(static_cast<Eigen::Index>(setup.noise_dim()));
        const std::size_t steps = step_count(T, setup.scheme.dt);
        for (std::size_t n = 0; n < steps && !st.blown_up; ++n) {
            g.increments(dW, setup.scheme.dt);
            ig.advance(st, dW);
        }
        return S{2.0 * std::log(st.J_xi->coeffs().norm()) - h * st.t - eta * st.acc_h1, st.blown_up};
    });
    MomentReport r;
    r.statistic = "tangent-moment";
    r.bound = 1.0;
    r.T = T;
    r.dt = setup.scheme.dt;
    std::vector<double> x;
    for (const auto& s : samples) {
        if (s.bad) ++r.n_blown_up;
        else x.push_back(s.log_stat);
    }
    r.n_traj = x.size();
    finish_moment(r, exp_mean(x));
    return r;
}

// ---------------------------------------------------------------------------
// Lyapunov structure

struct LyapunovOptions {
    double r = 1.0;
    std::vector<double> times{0.25, 0.5, 1.0};
    std::vector<double> amplitudes;  ///< grid along the ray; empty selects eta0 ||w0||^2 in {0, .25, .5, .75, 1}
    std::size_t n_traj = 400;
    double eta_energy = 0.0;   ///< 0 selects nu / (4 B0)
    double eta_tangent = 0.0;   ///< 0 selects eta0
    double C_hat = 0.0;     ///< 0 fits the transport constant
    std::size_t bootstrap = 200;
};

struct LyapunovTimeReport {
    double t = 0.0;
    std::vector<double> w0_sq;
    std::vector<double> log_stat;   ///< log E[V^r(w_t)(1 + ||J h||)] per grid point
    LinearFit fit;
    Interval slope_ci;              ///< bootstrap over trajectories, common across the grid
    double slope_bound = 0.0;       ///< r eta0 exp(-nu t / 2)
    bool slope_ok = false;
    // exp(eta ||w_t||^2 + (nu e^{-nu t/2}/2) int eta ||w||_1^2) against its ceiling
    std::vector<double> est_energy;
    std::vector<double> ci_energy;
    std::vector<double> ceiling_energy;
    bool ok_energy = false;
    // E[||J xi||^2 exp(-h(eta) t - int eta ||w||_1^2)] <= 1
    std::vector<double> est_tangent;
    std::vector<double> ci_tangent;
    bool ok_tangent = false;
};

struct LyapunovReport {
    double eta0 = 0.0;
    double C_hat = 0.0;
    double h_eta = 0.0;
    std::vector<LyapunovTimeReport> times;
    std::size_t n_blown_up = 0;
    bool heavy_tail = false;
    [[nodiscard]] bool pass() const {
        return std::all_of(times.begin(), times.end(), [](const auto& t) { return t.slope_ok && t.ok_energy && t.ok_tangent; });
    }
};

namespace detail {
struct LyapunovSample {
    // per recorded time: log V^r (1 + ||Jh||), exponent of the energy moment, log of the tangent statistic
    std::vector<double> lyap, e_energy, l_tangent;
    bool blown_up = false;
};
}  // namespace detail

/// w0 = a * e_dir with tangent direction h; trajectory i uses the same
/// stream at every grid point so the slope is estimated with common noise.
inline LyapunovReport lyapunov_check(const ModelSetup& setup, const SpectralField& direction, const SpectralField& h,
                                     const LyapunovOptions& opt, std::uint64_t seed) {
    if (!(opt.r >= 0.5 && opt.r <= 2.0)) throw std::invalid_argument("lyapunov_check: r must lie in [1/2, 2]");
    for (double t : opt.times)
        if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("lyapunov_check: times must lie in (0, 1]");
    if (std::abs(h.coeffs().norm() - 1.0) > 1e-12) throw std::invalid_argument("lyapunov_check: |h| must be 1");
    const double nu = setup.nu(), B0 = setup.B0();
    LyapunovReport rep;
    rep.eta0 = nu / (16.0 * B0);
    rep.C_hat = opt.C_hat > 0.0 ? opt.C_hat : fit_transport_constant(setup.lattice, 400, seed ^ 0x5bd1e995ULL);
    const double eta_e = opt.eta_energy > 0.0 ? opt.eta_energy : nu / (4.0 * B0);
    const double eta_t = opt.eta_tangent > 0.0 ? opt.eta_tangent : rep.eta0;
    rep.h_eta = 16.0 * std::pow(rep.C_hat, 4) / (eta_t * eta_t * nu) + setup.noise.L_Q();
    std::vector<double> amps = opt.amplitudes;
    const double dnorm_sq = direction.coeffs().squaredNorm();
    if (amps.empty())
        for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) amps.push_back(std::sqrt(q / (rep.eta0 * dnorm_sq)));
    std::vector<std::size_t> rec;
    for (double t : opt.times) rec.push_back(step_count(t, setup.scheme.dt));
    const std::size_t steps = *std::max_element(rec.begin(), rec.end());
    const std::size_t G = amps.size(), R = rec.size();

    auto one = [&](std::size_t job) {
        const std::size_t gi = job / opt.n_traj, traj = job % opt.n_traj;
        detail::LyapunovSample s;
        Integrator<NoiseModel> ig = setup.integrator();
        TrajectoryState st;
        st.w = amps[gi] * direction;
        st.J_xi = h;
        GaussianStream g = path_stream(seed, traj);
        NoiseVector dW(static_cast<Eigen::Index>(setup.noise_dim()));
        std::size_t next = 0;
        for (std::size_t n = 1; n <= steps && !st.blown_up; ++n) {
            g.increments(dW, setup.scheme.dt);
            ig.advance(st, dW);
            for (std::size_t k = 0; k < R; ++k) {
                if (rec[k] != n) continue;
                const double e = st.w.coeffs().squaredNorm();
                const double jn = st.J_xi->coeffs().norm();
                s.lyap.push_back(opt.r * rep.eta0 * e + std::log1p(jn));
                s.e_energy.push_back(eta_e * e + 0.5 * nu * std::exp(-0.5 * nu * st.t) * eta_e * st.acc_h1);
                s.l_tangent.push_back(2.0 * std::log(jn) - rep.h_eta * st.t - eta_t * st.acc_h1);
                ++next;
            }
        }
        s.blown_up = st.blown_up || next != R;
        return s;
    };
    auto samples = parallel_map<detail::LyapunovSample>(G * opt.n_traj, one);

    for (const auto& s : samples)
        if (s.blown_up) ++rep.n_blown_up;
    for (std::size_t k = 0; k < R; ++k) {
        LyapunovTimeReport tr;
        tr.t = static_cast<double>(rec[k]) * setup.scheme.dt;
        tr.slope_bound = opt.r * rep.eta0 * std::exp(-0.5 * nu * tr.t);
        tr.ok_energy = tr.ok_tangent = true;
        // column [g][traj] of log statistics, skipping trajectories that failed anywhere
        std::vector<std::size_t> good;
        for (std::size_t traj = 0; traj < opt.n_traj; ++traj) {
            bool ok = true;
            for (std::size_t gi = 0; gi < G; ++gi) ok = ok && !samples[gi * opt.n_traj + traj].blown_up;
            if (ok) good.push_back(traj);
        }
        auto log_means = [&](const std::vector<std::size_t>& idx) {
            std::vector<double> y;
            for (std::size_t gi = 0; gi < G; ++gi) {
                std::vector<double> v;
                v.reserve(idx.size());
                for (auto i : idx) v.push_back(samples[gi * opt.n_traj + good[i]].lyap[k]);
                y.push_back(exp_mean(v).log_mean);
            }
            return y;
        };
        std::vector<std::size_t> all(good.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        for (double a : amps) tr.w0_sq.push_back(a * a * dnorm_sq);
        tr.log_stat = log_means(all);
        tr.fit = linear_fit(tr.w0_sq, tr.log_stat);
        tr.slope_ci = bootstrap_interval(
            good.size(), [&](const std::vector<std::size_t>& idx) { return linear_fit(tr.w0_sq, log_means(idx)).slope; }, opt.bootstrap,
            seed + 17 + k);
        // consistent with the profile when the bound is not below the interval
        tr.slope_ok = tr.slope_ci.lo <= tr.slope_bound;
        for (std::size_t gi = 0; gi < G; ++gi) {
            std::vector<double> v_e, v_t;
            for (auto i : good) {
                v_e.push_back(samples[gi * opt.n_traj + i].e_energy[k]);
                v_t.push_back(samples[gi * opt.n_traj + i].l_tangent[k]);
            }
            ExpMean m_e = exp_mean(v_e), m_t = exp_mean(v_t);
            const double ceil = 2.0 * std::exp(eta_e * B0 / nu) * std::exp(eta_e * tr.w0_sq[gi] * std::exp(-nu * tr.t));
            tr.est_energy.push_back(m_e.value());
            tr.ci_energy.push_back(m_e.ci());
            tr.ceiling_energy.push_back(ceil);
            tr.ok_energy = tr.ok_energy && m_e.value() <= ceil + 3.0 * m_e.ci();
            tr.est_tangent.push_back(m_t.value());
            tr.ci_tangent.push_back(m_t.ci());
            tr.ok_tangent = tr.ok_tangent && m_t.value() <= 1.0 + 3.0 * m_t.ci();
            if (m_e.ess < 0.05 * static_cast<double>(m_e.n)) rep.heavy_tail = true;
        }
        rep.times.push_back(std::move(tr));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Mixing and invariant measure

struct MixingOptions {
    std::vector<Observable> observables;
    double T = 3.0;
    std::size_t n_traj = 400;
    std::size_t record_stride = 20;
    double long_T = 100.0;
    std::size_t n_long = 8;
    std::size_t long_stride = 10;
};

struct ObservableDecay {
    std::string observable;
    std::vector<double> delta;     ///< |E phi(w^a_t) - E phi(w^b_t)|
    std::vector<double> delta_ci;  ///< joint 95% half-width
    std::optional<LinearFit> fit;  ///< log delta against t where delta exceeds 2 CI
    double theta_hat = 0.0;
    double theta_ci = 0.0;
    [[nodiscard]] bool decays() const { return fit && theta_hat - theta_ci > 0.0; }
};

struct MixingReport {
    std::vector<double> t;
    std::vector<ObservableDecay> decay;
    MeanCI long_avg_a;  ///< time average of ||w||^2 over [0, long_T], across chains
    MeanCI long_avg_b;
    double avg_gap = 0.0;
    double avg_ci = 0.0;  ///< joint CI of the two averages
    bool averages_agree = false;
    MeanCI stationary_energy;  ///< pooled chains
    double energy_ceiling = 0.0;  ///< B0 / (2 nu)
    bool energy_ok = false;
    std::size_t n_blown_up = 0;
};

namespace detail {
struct ObsPath {
    std::vector<double> t;
    std::vector<std::vector<double>> phi;  ///< [record][observable]
    bool blown_up = false;
};

inline ObsPath observe_path(const ModelSetup& setup, const SpectralField& w0, const std::vector<Observable>& obs, double T,
                            std::size_t stride, std::uint64_t seed, std::size_t traj, std::uint64_t sub) {
    Integrator<NoiseModel> ig = setup.integrator();
    TrajectoryState st;
    st.w = w0;
    ObsPath p;
    auto rec = [&] {
        p.t.push_back(st.t);
        std::vector<double> v;
        for (const auto& o : obs) v.push_back(o.value(st.w));
        p.phi.push_back(std::move(v));
    };
    rec();
    const std::size_t steps = step_count(T, setup.scheme.dt);
    GaussianStream g = path_stream(seed, traj, sub);
    NoiseVector dW(static_cast<Eigen::Index>(setup.noise_dim()));
    for (std::size_t n = 1; n <= steps; ++n) {
        g.increments(dW, setup.scheme.dt);
        ig.advance(st, dW);
        if (n % stride == 0 || n == steps) rec();
    }
    p.blown_up = st.blown_up;
    return p;
}

/// Time average of ||w||^2 along one chain including t = 0.
inline std::pair<double, bool> energy_time_average(const ModelSetup& setup, const SpectralField& w0, double T, std::size_t stride,
                                                   std::uint64_t seed, std::size_t traj, std::uint64_t sub) {
    Integrator<NoiseModel> ig = setup.integrator();
    TrajectoryState st;
    st.w = w0;
    const std::size_t steps = step_count(T, setup.scheme.dt);
    GaussianStream g = path_stream(seed, traj, sub);
    NoiseVector dW(static_cast<Eigen::Index>(setup.noise_dim()));
    double s = st.w.coeffs().squaredNorm();
    std::size_t cnt = 1;
    for (std::size_t n = 1; n <= steps && !st.blown_up; ++n) {
        g.increments(dW, setup.scheme.dt);
        ig.advance(st, dW);
        if (n % stride == 0) {
            s += st.w.coeffs().squaredNorm();
            ++cnt;
        }
    }
    return {s / static_cast<double>(cnt), st.blown_up};
}
}  // namespace detail

/// Records fall on every stride-th step and on the final step.
/// Independent ensembles from w0a (sub-stream 1) and w0b (sub-stream 2).
inline MixingReport mixing_decay(const ModelSetup& setup, const SpectralField& w0a, const SpectralField& w0b, const MixingOptions& opt,
                                 std::uint64_t seed) {
    if (opt.observables.empty()) throw std::invalid_argument("mixing_decay: no observables");
    if (opt.record_stride == 0 || opt.long_stride == 0) throw std::invalid_argument("mixing_decay: strides must be >= 1");
    MixingReport rep;
    const std::size_t K = opt.observables.size();
    auto ens = [&](const SpectralField& w0, std::uint64_t sub) {
        return parallel_map<detail::ObsPath>(opt.n_traj, [&](std::size_t i) {
            return detail::observe_path(setup, w0, opt.observables, opt.T, opt.record_stride, seed, i, sub);
        });
    };
    auto A = ens(w0a, 1), B = ens(w0b, 2);
    const std::size_t nrec = A.front().phi.size();
    rep.t = A.front().t;
    for (std::size_t k = 0; k < K; ++k) {
        ObservableDecay d;
        d.observable = opt.observables[k].name();
        std::vector<double> x, y;
        bool above = true;
        for (std::size_t j = 0; j < nrec; ++j) {
            RunningStats sa, sb;
            for (const auto& p : A)
                if (!p.blown_up) sa.add(p.phi[j][k]);
            for (const auto& p : B)
                if (!p.blown_up) sb.add(p.phi[j][k]);
            const MeanCI ma = sa.summary(), mb = sb.summary();
            const double dl = std::abs(ma.mean - mb.mean), ci = joint_ci(ma, mb);
            d.delta.push_back(dl);
            d.delta_ci.push_back(ci);
            // fit on the leading stretch that stays clear of the noise floor
            above = above && dl > 2.0 * ci && dl > 0.0;
            if (above) {
                x.push_back(rep.t[j]);
                y.push_back(std::log(dl));
            }
        }
        if (x.size() >= 3) {
            d.fit = linear_fit(x, y);
            d.theta_hat = -d.fit->slope;
            d.theta_ci = d.fit->slope_ci();
        }
        rep.decay.push_back(std::move(d));
    }
    for (const auto& p : A) rep.n_blown_up += p.blown_up;
    for (const auto& p : B) rep.n_blown_up += p.blown_up;

    auto chains = [&](const SpectralField& w0, std::uint64_t sub) {
        return parallel_map<std::pair<double, bool>>(opt.n_long, [&](std::size_t i) {
            return detail::energy_time_average(setup, w0, opt.long_T, opt.long_stride, seed, i, sub);
        });
    };
    RunningStats la, lb, pooled;
    for (auto [v, bad] : chains(w0a, 3))
        if (!bad) {
            la.add(v);
            pooled.add(v);
        } else ++rep.n_blown_up;
    for (auto [v, bad] : chains(w0b, 4))
        if (!bad) {
            lb.add(v);
            pooled.add(v);
        } else ++rep.n_blown_up;
    rep.long_avg_a = la.summary();
    rep.long_avg_b = lb.summary();
    rep.avg_gap = std::abs(rep.long_avg_a.mean - rep.long_avg_b.mean);
    rep.avg_ci = joint_ci(rep.long_avg_a, rep.long_avg_b);
    rep.averages_agree = rep.avg_gap <= 2.0 * rep.avg_ci;
    rep.stationary_energy = pooled.summary();
    rep.energy_ceiling = setup.B0() / (2.0 * setup.nu());
    rep.energy_ok = rep.stationary_energy.mean <= rep.energy_ceiling + rep.stationary_energy.ci;
    return rep;
}

struct InvariantSummary {
    MeanCI energy;          ///< ||w||^2
    MeanCI enstrophy_h1;    ///< ||w||_1^2
    MeanCI dissipation;     ///< 2 nu ||w||_1^2
    MeanCI noise_power;     ///< ||Q(w)||_HS^2
    std::vector<MeanCI> low_modes;  ///< mean of the leading coefficients
    std::vector<MeanCI> low_mode_var;
    double balance_gap = 0.0;  ///< E[2 nu ||w||_1^2] - E||Q||_HS^2
    double balance_ci = 0.0;
    bool balance_ok = false;
    double energy_ceiling = 0.0;
    bool energy_ok = false;
    bool burn_in_ok = true;  ///< first and second half of the kept samples agree
    std::size_t n_chains = 0;
    std::size_t n_samples = 0;
};

struct InvariantOptions {
    double burn_in = 10.0;
    std::size_t n_keep = 200;
    std::size_t thin = 20;
    std::size_t n_chains = 16;
    std::size_t n_low_modes = 4;
};

/// Chains from w0 after burn-in; CIs come from the spread of chain means.
inline InvariantSummary invariant_measure_sample(const ModelSetup& setup, const SpectralField& w0, const InvariantOptions& opt,
                                                 std::uint64_t seed, std::uint64_t sub = 5) {
    if (opt.burn_in < 10.0 / setup.nu()) throw std::invalid_argument("invariant_measure_sample: burn_in must be >= 10/nu");
    if (opt.n_chains < 2 || opt.n_keep < 2 || opt.thin == 0) throw std::invalid_argument("invariant_measure_sample: bad sampling sizes");
    const std::size_t L = std::min(opt.n_low_modes, setup.lattice->size());
    struct Chain {
        double e = 0, h1 = 0, q = 0, e_first = 0, e_second = 0;
        std::vector<double> m, m2;
        bool bad = false;
    };
    auto run = [&](std::size_t c) {
        Chain ch;
        ch.m.assign(L, 0.0);
        ch.m2.assign(L, 0.0);
        Integrator<NoiseModel> ig = setup.integrator();
        TrajectoryState st;
        st.w = w0;
        GaussianStream g = path_stream(seed, c, sub);
        NoiseVector dW(static_cast<Eigen::Index>(setup.noise_dim()));
        const std::size_t burn = step_count(opt.burn_in, setup.scheme.dt);
        for (std::size_t n = 0; n < burn && !st.blown_up; ++n) {
            g.increments(dW, setup.scheme.dt);
            ig.advance(st, dW);
        }
        for (std::size_t k = 0; k < opt.n_keep && !st.blown_up; ++k) {
            for (std::size_t n = 0; n < opt.thin; ++n) {
                g.increments(dW, setup.scheme.dt);
                ig.advance(st, dW);
            }
            const double e = st.w.coeffs().squaredNorm();
            ch.e += e;
            (k < opt.n_keep / 2 ? ch.e_first : ch.e_second) += e;
            ch.h1 += sobolev_norm_sq(st.w, 1.0);
            ch.q += setup.noise.hs_norm_sq(st.w);
            for (std::size_t i = 0; i < L; ++i) {
                ch.m[i] += st.w[i];
                ch.m2[i] += st.w[i] * st.w[i];
            }
        }
        ch.bad = st.blown_up;
        const double n = static_cast<double>(opt.n_keep);
        ch.e /= n;
        ch.h1 /= n;
        ch.q /= n;
        ch.e_first /= static_cast<double>(opt.n_keep / 2);
        ch.e_second /= static_cast<double>(opt.n_keep - opt.n_keep / 2);
        for (std::size_t i = 0; i < L; ++i) {
            ch.m[i] /= n;
            ch.m2[i] = ch.m2[i] / n - ch.m[i] * ch.m[i];
        }
        return ch;
    };
    auto chains = parallel_map<Chain>(opt.n_chains, run);
    InvariantSummary out;
    RunningStats e, h1, dis, q, gap, first, second;
    std::vector<RunningStats> m(L), v(L);
    for (const auto& c : chains) {
        if (c.bad) continue;
        ++out.n_chains;
        e.add(c.e);
        h1.add(c.h1);
        dis.add(2.0 * setup.nu() * c.h1);
        q.add(c.q);
        gap.add(2.0 * setup.nu() * c.h1 - c.q);
        first.add(c.e_first);
        second.add(c.e_second);
        for (std::size_t i = 0; i < L; ++i) {
            m[i].add(c.m[i]);
            v[i].add(c.m2[i]);
        }
    }
    out.n_samples = out.n_chains * opt.n_keep;
    out.energy = e.summary();
    out.enstrophy_h1 = h1.summary();
    out.dissipation = dis.summary();
    out.noise_power = q.summary();
    for (std::size_t i = 0; i < L; ++i) {
        out.low_modes.push_back(m[i].summary());
        out.low_mode_var.push_back(v[i].summary());
    }
    const MeanCI g = gap.summary();
    out.balance_gap = g.mean;
    out.balance_ci = g.ci;
    out.balance_ok = std::abs(g.mean) <= 3.0 * g.se + 1e-12;
    out.energy_ceiling = setup.B0() / (2.0 * setup.nu());
    out.energy_ok = out.energy.mean <= out.energy_ceiling + out.energy.ci;
    const MeanCI f = first.summary(), s = second.summary();
    out.burn_in_ok = std::abs(f.mean - s.mean) <= 3.0 * std::hypot(f.se, s.se) + 1e-12;
    return out;
}

}  // namespace vortex
