/// @file coupling.hpp
/// @brief Shifted process w~ = w + r with contracting feedback on the band,
///        the Girsanov control h, the stopping rule and the pair diagnostics.
///
/// The pair is stored as (w, r) so that tiny differences never cancel.  One
/// step on the shared increment dW, with the gain taken implicitly through
/// Kbar = K / (1 + dt K):
///   h  = -Kbar g(w + r) P_N r            (0 once tau has been hit)
///   w' = D^{-1}[w + dt B(Kw, w) + Q(w) dW]
///   r' = D^{-1}[r + dt (B(K(w+r), w+r) - B(Kw, w)) + (Q(w + r) - Q(w)) dW + dt Q(w + r) h]
/// and, with the weight exp(-sum h.dW - 0.5 sum |h|^2 dt), w~ has the law of
/// the uncontrolled process started at w0 + r0.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vortex_mixer/distance.hpp"
#include "vortex_mixer/ensemble.hpp"
#include "vortex_mixer/model.hpp"
#include "vortex_mixer/stats.hpp"

namespace vortex {

struct CouplingParams {
    double K = 50.0;
    double C_cap = 10.0;
    bool cap_enabled = true;  ///< false: h is never switched off
};

struct CouplingPair {
    double t = 0.0;
    SpectralField w;
    SpectralField r;  ///< w_tilde - w
    double acc_h_sq = 0.0;
    double acc_log_weight = 0.0;
    double acc_h1 = 0.0;  ///< int ||w||_1^2 dt
    double overshoot = 0.0;
    bool tau_hit = false;
    bool blown_up = false;

    [[nodiscard]] SpectralField w_tilde() const { return w + r; }
};

inline CouplingPair make_pair(const SpectralField& w01, const SpectralField& w02) {
    w01.check_same(w02);
    CouplingPair p;
    p.w = w01;
    p.r = w02 - w01;
    return p;
}

/// h = -K g(w~) P_N (w~ - w).
inline NoiseVector control_shift(const NoiseModel& model, const CouplingPair& pair, double K) {
    if (pair.tau_hit) return NoiseVector::Zero(static_cast<Eigen::Index>(model.band_size()));
    return -K * model.apply_g(pair.w_tilde(), pair.r);
}

class CoupledStepper {
public:
    CoupledStepper(const ModelSetup& setup, CouplingParams params)
        : setup_(setup), params_(params), ig_(setup.integrator()), kbar_(params.K / (1.0 + setup.scheme.dt * params.K)) {
        if (!(params.K >= 0.0)) throw std::invalid_argument("coupling: gain K must be >= 0");
        if (!(params.C_cap > 0.0)) throw std::invalid_argument("coupling: C_cap must be > 0");
        inv_nu_.resize(static_cast<Eigen::Index>(setup.lattice->size()));
        for (std::size_t i = 0; i < setup.lattice->size(); ++i)
            inv_nu_[static_cast<Eigen::Index>(i)] = 1.0 / (1.0 + setup.scheme.dt * setup.nu() * setup.lattice->k_sq(i));
    }

    [[nodiscard]] double effective_gain() const { return kbar_; }

    void step(CouplingPair& p, const NoiseVector& dW) {
        if (p.blown_up) return;
        const double dt = setup_.scheme.dt;
        const NoiseModel& q = setup_.noise;
        const SpectralField wt = p.w_tilde();
        p.acc_h1 += sobolev_norm_sq(p.w, 1.0) * dt;
        NoiseVector h = control_shift(q, p, kbar_);
        SpectralField r = p.r;
        auto& c = r.coeffs();
        c += dt * ig_.advection_difference(p.w, p.r).coeffs();
        c += q.apply_Q_difference(p.w, p.r, dW).coeffs();
        if (!p.tau_hit) {
            c += dt * q.apply_Q(wt, h).coeffs();
            const double hh = h.squaredNorm() * dt;
            p.acc_h_sq += hh;
            p.acc_log_weight += -h.dot(dW) - 0.5 * hh;
            if (params_.cap_enabled && p.acc_h_sq > 2.0 * params_.C_cap) {
                p.tau_hit = true;
                p.overshoot = p.acc_h_sq - 2.0 * params_.C_cap;
            }
        }
        c.array() *= inv_nu_.array();
        p.w = ig_.step_vorticity(p.w, dW);
        p.r = std::move(r);
        p.t += dt;
        p.blown_up = !Integrator<NoiseModel>::healthy(p.w) || !Integrator<NoiseModel>::healthy(p.r);
    }

private:
    const ModelSetup& setup_;
    CouplingParams params_;
    Integrator<NoiseModel> ig_;
    double kbar_;
    Eigen::VectorXd inv_nu_;
};

inline double girsanov_log_weight(const CouplingPair& p) { return p.acc_log_weight; }

/// Wilson score interval for a proportion.
inline Interval wilson_interval(std::size_t k, std::size_t n) {
    if (n == 0) return {0.0, 1.0};
    const double z = kZ95, nn = static_cast<double>(n), p = static_cast<double>(k) / nn;
    const double den = 1.0 + z * z / nn;
    const double mid = (p + z * z / (2.0 * nn)) / den;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / den;
    return {std::max(0.0, mid - half), std::min(1.0, mid + half)};
}

struct CouplingOptions {
    CouplingParams params;
    double T = 10.0;
    std::size_t n_pairs = 500;
    std::size_t record_stride = 100;
    double fit_t0 = 1.0;      ///< contraction fit window
    double fit_t1 = 10.0;
    double delta = 0.1;       ///< coupling radius
    double gauge_r = 0.5;
    double gauge_eta = 0.0;   ///< 0 selects nu / (16 B0)
    double eta_super = 0.0;   ///< supermartingale exponent, 0 selects nu^2 / (32 B0)
};

struct ContractionReport {
    std::vector<double> t;
    std::vector<double> mean_r_sq;  ///< E||r_t||^2 on the record grid
    std::vector<double> ci_r_sq;
    std::optional<LinearFit> fit;   ///< log E||r||^2 against t on the fit window
    double gamma2_hat = 0.0;        ///< -slope
    double prefactor = 0.0;         ///< exp(intercept)
    double p1_hat = 0.0;            ///< fraction with int |h|^2 <= C_cap at T
    Interval p1_ci;
    MeanCI a_hat;                   ///< E[min(1, W) 1{rho' <= delta}]
    Interval a_ci;
    MeanCI weight_mean;             ///< E[W], 1 for a martingale
    MeanCI supermartingale;         ///< E[||r_T||^2 exp(nu N^2 T - eta int ||w||_1^2)] / ||r_0||^2
    double max_h_sq = 0.0;
    double max_overshoot = 0.0;
    std::size_t n_pairs = 0;
    std::size_t n_tau_hit = 0;
    std::size_t n_blown_up = 0;
    std::size_t n_gauge_unconverged = 0;
    bool degenerate = false;        ///< every pair hit tau

    [[nodiscard]] bool contracts(double r2_min = 0.9) const { return fit && fit->slope < 0.0 && fit->r2 > r2_min; }
};

struct PairTrace {
    std::vector<double> t;
    std::vector<double> r_sq;
    std::vector<double> h_sq_path;
    std::vector<double> log_weight_path;
    std::vector<char> tau_path;
    double h_sq = 0.0;
    double log_weight = 0.0;
    double overshoot = 0.0;
    double gauge = 0.0;
    bool gauge_ok = true;
    double super_stat = 0.0;
    bool tau_hit = false;
    bool blown_up = false;
};

/// Pair index i uses stream (seed, i); the same trajectory appears in any
/// batch that contains it.
inline PairTrace run_pair(const ModelSetup& setup, const SpectralField& w01, const SpectralField& w02, const CouplingOptions& opt,
                          std::uint64_t seed, std::size_t index) {
    CoupledStepper stepper(setup, opt.params);
    CouplingPair p = make_pair(w01, w02);
    const double r0 = p.r.coeffs().squaredNorm();
    const std::size_t steps = step_count(opt.T, setup.scheme.dt);
    PairTrace tr;
    auto rec = [&] {
        tr.t.push_back(p.t);
        tr.r_sq.push_back(p.r.coeffs().squaredNorm());
        tr.h_sq_path.push_back(p.acc_h_sq);
        tr.log_weight_path.push_back(p.acc_log_weight);
        tr.tau_path.push_back(p.tau_hit);
    };
    rec();
    GaussianStream g = path_stream(seed, index);
    NoiseVector dW(static_cast<Eigen::Index>(setup.noise_dim()));
    for (std::size_t n = 1; n <= steps; ++n) {
        g.increments(dW, setup.scheme.dt);
        stepper.step(p, dW);
        if (n % opt.record_stride == 0) rec();
    }
    tr.h_sq = p.acc_h_sq;
    tr.log_weight = p.acc_log_weight;
    tr.overshoot = p.overshoot;
    tr.tau_hit = p.tau_hit;
    tr.blown_up = p.blown_up;
    const double eta_g = opt.gauge_eta > 0.0 ? opt.gauge_eta : setup.nu() / (16.0 * setup.B0());
    const double eta_s = opt.eta_super > 0.0 ? opt.eta_super : setup.nu() * setup.nu() / (32.0 * setup.B0());
    if (!p.blown_up) {
        GaugeValue gv = rho_prime_distance(p.w, p.w_tilde(), eta_g, opt.gauge_r);
        tr.gauge = gv.value;
        tr.gauge_ok = gv.converged;
        const double N = setup.spec.N;
        tr.super_stat = r0 > 0.0 ? p.r.coeffs().squaredNorm() / r0 * std::exp(setup.nu() * N * N * p.t - eta_s * p.acc_h1) : 0.0;
    }
    return tr;
}

inline ContractionReport run_coupling_experiment(const ModelSetup& setup, const SpectralField& w01, const SpectralField& w02,
                                                 const CouplingOptions& opt, std::uint64_t seed,
                                                 std::vector<PairTrace>* traces_out = nullptr) {
    if (opt.record_stride == 0) throw std::invalid_argument("coupling: record stride must be >= 1");
    auto traces = parallel_map<PairTrace>(opt.n_pairs, [&](std::size_t i) { return run_pair(setup, w01, w02, opt, seed, i); });
    ContractionReport rep;
    rep.n_pairs = traces.size();
    const std::size_t nrec = traces.empty() ? 0 : traces.front().r_sq.size();
    for (std::size_t j = 0; j < nrec; ++j) rep.t.push_back(static_cast<double>(j * opt.record_stride) * setup.scheme.dt);
    std::vector<RunningStats> rs(nrec);
    RunningStats a, wmean, sup;
    std::size_t within = 0, used = 0;
    for (const auto& tr : traces) {
        if (tr.blown_up) {
            ++rep.n_blown_up;
            continue;
        }
        ++used;
        for (std::size_t j = 0; j < nrec; ++j) rs[j].add(tr.r_sq[j]);
        if (tr.tau_hit) ++rep.n_tau_hit;
        if (tr.h_sq <= opt.params.C_cap) ++within;
        if (!tr.gauge_ok) ++rep.n_gauge_unconverged;
        rep.max_h_sq = std::max(rep.max_h_sq, tr.h_sq);
        rep.max_overshoot = std::max(rep.max_overshoot, tr.overshoot);
        const double W = std::exp(tr.log_weight);
        wmean.add(W);
        a.add(tr.gauge <= opt.delta ? std::min(1.0, W) : 0.0);
        sup.add(tr.super_stat);
    }
    for (std::size_t j = 0; j < nrec; ++j) {
        MeanCI m = rs[j].summary();
        rep.mean_r_sq.push_back(m.mean);
        rep.ci_r_sq.push_back(m.ci);
    }
    rep.p1_hat = used ? static_cast<double>(within) / static_cast<double>(used) : 0.0;
    rep.p1_ci = wilson_interval(within, used);
    rep.a_hat = a.summary();
    rep.a_ci = {std::max(0.0, rep.a_hat.mean - rep.a_hat.ci), std::min(1.0, rep.a_hat.mean + rep.a_hat.ci)};
    rep.weight_mean = wmean.summary();
    rep.supermartingale = sup.summary();
    rep.degenerate = used > 0 && rep.n_tau_hit == used;

    std::vector<double> x, y;
    for (std::size_t j = 0; j < nrec; ++j) {
        if (rep.t[j] + 1e-12 < opt.fit_t0 || rep.t[j] > opt.fit_t1 + 1e-12) continue;
        if (!(rep.mean_r_sq[j] > 0.0) || !std::isfinite(rep.mean_r_sq[j])) continue;
        x.push_back(rep.t[j]);
        y.push_back(std::log(rep.mean_r_sq[j]));
    }
    if (x.size() >= 3) {
        rep.fit = linear_fit(x, y);
        rep.gamma2_hat = -rep.fit->slope;
        rep.prefactor = std::exp(rep.fit->intercept);
    }
    if (traces_out) *traces_out = std::move(traces);
    return rep;
}

struct EnergyDecayReport {
    std::vector<double> t;
    std::vector<double> mean_energy;
    std::vector<double> ci_energy;
    double kappa_hat = 0.0;
    double C1_hat = 0.0;
    double a_hat = 0.0;
    double kappa_bound = 0.0;  ///< 2 nu
    double C1_bound = 0.0;     ///< B0 / (2 nu)
    bool kappa_ok = false;
    bool C1_ok = false;
    bool fit_ok = false;
    std::size_t n_traj = 0;
};

/// Least-squares fit of a exp(-kappa t) + C on a log-spaced kappa scan with
/// golden-section refinement; (a, C) solve a 2x2 system per kappa.
inline void fit_exp_plus_const(const std::vector<double>& t, const std::vector<double>& y, double& kappa, double& a, double& C,
                               bool& ok) {
    auto solve = [&](double k, double& aa, double& cc) {
        double s11 = 0, s12 = 0, s22 = 0, b1 = 0, b2 = 0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double e = std::exp(-k * t[i]);
            s11 += e * e;
            s12 += e;
            s22 += 1.0;
            b1 += e * y[i];
            b2 += y[i];
        }
        const double det = s11 * s22 - s12 * s12;
        if (std::abs(det) < 1e-300) {
            aa = 0.0;
            cc = b2 / s22;
        } else {
            aa = (b1 * s22 - s12 * b2) / det;
            cc = (s11 * b2 - s12 * b1) / det;
        }
        double sse = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double e = y[i] - aa * std::exp(-k * t[i]) - cc;
            sse += e * e;
        }
        return sse;
    };
    double best = std::numeric_limits<double>::infinity(), kb = 1.0;
    for (double lk = -3.0; lk <= 3.0; lk += 0.05) {
        double aa, cc;
        const double s = solve(std::pow(10.0, lk), aa, cc);
        if (s < best) {
            best = s;
            kb = lk;
        }
    }
    double lo = kb - 0.05, hi = kb + 0.05;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 60; ++it) {
        const double m1 = hi - g * (hi - lo), m2 = lo + g * (hi - lo);
        double aa, cc;
        if (solve(std::pow(10.0, m1), aa, cc) < solve(std::pow(10.0, m2), aa, cc)) hi = m2;
        else lo = m1;
    }
    kappa = std::pow(10.0, 0.5 * (lo + hi));
    solve(kappa, a, C);
    ok = std::isfinite(kappa) && std::isfinite(a) && std::isfinite(C) && kb > -2.95 && kb < 2.95;
}

/// Fits E||w_t||^2 = a exp(-kappa t) + C1 and compares with kappa = 2 nu,
/// C1 = B0 / (2 nu) from the energy identity.
inline EnergyDecayReport mean_energy_decay(const ModelSetup& setup, const SpectralField& w0, double T, std::size_t n_traj,
                                           std::size_t record_stride, std::uint64_t seed, double slack = 0.1) {
    if (n_traj < 500) throw std::invalid_argument("mean_energy_decay: need at least 500 trajectories");
    PathOptions po;
    po.T = T;
    po.record_stride = record_stride;
    po.n_modes = 0;
    auto paths = parallel_map<std::vector<PathRecord>>(n_traj, [&](std::size_t i) { return simulate_path(setup, w0, po, seed, i); });
    EnergyDecayReport rep;
    const std::size_t nrec = paths.front().size();
    std::vector<RunningStats> s(nrec);
    for (const auto& p : paths) {
        if (p.back().blown_up) continue;
        ++rep.n_traj;
        for (std::size_t j = 0; j < nrec; ++j) s[j].add(p[j].norm_l2 * p[j].norm_l2);
    }
    for (std::size_t j = 0; j < nrec; ++j) {
        rep.t.push_back(paths.front()[j].t);
        MeanCI m = s[j].summary();
        rep.mean_energy.push_back(m.mean);
        rep.ci_energy.push_back(m.ci);
    }
    fit_exp_plus_const(rep.t, rep.mean_energy, rep.kappa_hat, rep.a_hat, rep.C1_hat, rep.fit_ok);
    rep.kappa_bound = 2.0 * setup.nu();
    rep.C1_bound = setup.B0() / (2.0 * setup.nu());
    rep.kappa_ok = rep.kappa_hat >= rep.kappa_bound * (1.0 - slack);
    rep.C1_ok = rep.C1_hat <= rep.C1_bound * (1.0 + slack);
    return rep;
}

}  // namespace vortex
