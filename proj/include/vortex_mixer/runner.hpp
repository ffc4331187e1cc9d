/// @file runner.hpp
/// @brief Subcommand dispatch.  Every run computes in memory, then writes
///        its artifacts atomically into the output directory.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "vortex_mixer/config.hpp"
#include "vortex_mixer/coupling.hpp"
#include "vortex_mixer/diagnostics.hpp"
#include "vortex_mixer/malliavin.hpp"
#include "vortex_mixer/model.hpp"
#include "vortex_mixer/noise_model.hpp"
#include "vortex_mixer/output.hpp"

namespace vortex {

enum ExitCode : int { kExitPass = 0, kExitError = 1, kExitFlagged = 2 };

struct RunContext {
    RunConfig config;
    std::string subcommand;
    std::string check;  ///< diagnose only
    std::filesystem::path out_dir;
    std::ostream* log = &std::cerr;
};

namespace detail {

inline bool blowup_flood(std::size_t blown, std::size_t total) { return total > 0 && 10 * blown > total; }

inline std::size_t mode_index(const ModelSetup& su, const ModeRef& m) { return su.lattice->index_of({m.k1, m.k2}).value(); }

inline SpectralField unit_mode(const ModelSetup& su, const ModeRef& m) { return basis_field(su.lattice, mode_index(su, m)); }

inline json path_record_json(std::size_t traj, const PathRecord& r) {
    json j = {{"record", "state"},
              {"traj", traj},
              {"t", num(r.t)},
              {"norm_l2", num(r.norm_l2)},
              {"norm_h1", num(r.norm_h1)},
              {"energy_budget", {{"dissipation", num(r.dissipation)}, {"noise_power", num(r.noise_power)}}},
              {"acc", {{"stoch_int", num(r.acc_stoch_int)}, {"control_sq", num(r.acc_control_sq)}}},
              {"flags", {{"blown_up", r.blown_up}}}};
    json modes = json::array();
    for (double m : r.modes) modes.push_back(num(m));
    j["modes"] = modes;
    if (r.J_norm || r.zeta_norm || r.rho_norm) {
        json t = json::object();
        if (r.J_norm) t["J"] = num(*r.J_norm);
        if (r.zeta_norm) t["zeta"] = num(*r.zeta_norm);
        if (r.rho_norm) t["rho"] = num(*r.rho_norm);
        j["tangent_norms"] = t;
    }
    return j;
}

inline int run_simulate(const RunContext& cx) {
    const auto& c = cx.config;
    const auto& e = c.experiment;
    ModelSetup su(c.model);
    const SpectralField w0 = make_initial(su.lattice, e.initial);
    PathOptions po;
    po.T = e.T;
    po.record_stride = e.record_stride;
    po.derivative_flow = e.derivative_flow;
    po.control = e.control;
    po.xi = unit_mode(su, e.xi);
    po.n_modes = e.n_modes;
    auto paths = parallel_map<std::vector<PathRecord>>(e.n_traj, [&](std::size_t i) { return simulate_path(su, w0, po, c.seed, i); });
    std::size_t blown = 0;
    RunningStats final_energy;
    for (const auto& p : paths) {
        if (p.back().blown_up) ++blown;
        else final_energy.add(p.back().norm_l2 * p.back().norm_l2);
    }
    if (c.output.format == "ndjson") {
        NdjsonBuffer nd;
        nd.add(header_record(c, cx.subcommand));
        for (std::size_t i = 0; i < paths.size(); ++i)
            for (const auto& r : paths[i]) nd.add(path_record_json(i, r));
        write_atomic(cx.out_dir / "simulate.ndjson", nd.text());
    } else {
        CsvTable t({"traj", "t", "norm_l2", "norm_h1", "dissipation", "noise_power", "acc_stoch_int", "acc_control_sq", "blown_up"});
        for (std::size_t i = 0; i < paths.size(); ++i)
            for (const auto& r : paths[i])
                t.row({CsvTable::cell(i), CsvTable::cell(r.t), CsvTable::cell(r.norm_l2), CsvTable::cell(r.norm_h1),
                       CsvTable::cell(r.dissipation), CsvTable::cell(r.noise_power), CsvTable::cell(r.acc_stoch_int),
                       CsvTable::cell(r.acc_control_sq), CsvTable::cell(r.blown_up)});
        write_atomic(cx.out_dir / "simulate.csv", t.text(c, cx.subcommand));
    }
    const MeanCI fe = final_energy.summary();
    CsvTable s({"metric", "value", "ci"});
    s.row({"n_traj", CsvTable::cell(paths.size()), ""});
    s.row({"n_blown_up", CsvTable::cell(blown), ""});
    s.row({"final_energy", CsvTable::cell(fe.mean), CsvTable::cell(fe.ci)});
    s.row({"stationary_ceiling", CsvTable::cell(su.B0() / (2.0 * su.nu())), ""});
    write_atomic(cx.out_dir / "simulate_summary.csv", s.text(c, cx.subcommand));
    *cx.log << "simulate: " << paths.size() << " trajectories, " << blown << " blown up\n";
    return blowup_flood(blown, paths.size()) ? kExitFlagged : kExitPass;
}

inline int run_couple(const RunContext& cx) {
    const auto& c = cx.config;
    const auto& e = c.experiment;
    ModelSetup su(c.model);
    const SpectralField w01 = make_initial(su.lattice, e.initial), w02 = make_initial(su.lattice, e.initial_b);
    CouplingOptions o;
    o.params = {e.K, e.C_cap, e.cap_enabled};
    o.T = e.T;
    o.n_pairs = e.n_traj;
    o.record_stride = e.record_stride;
    o.fit_t0 = e.fit_t0;
    o.fit_t1 = std::min(e.fit_t1, e.T);
    o.delta = e.delta;
    o.gauge_r = e.gauge_r;
    std::vector<PairTrace> traces;
    ContractionReport rep = run_coupling_experiment(su, w01, w02, o, c.seed, &traces);
    if (c.output.format == "ndjson") {
        NdjsonBuffer nd;
        nd.add(header_record(c, cx.subcommand));
        for (std::size_t i = 0; i < traces.size(); ++i)
            for (std::size_t j = 0; j < traces[i].t.size(); ++j)
                nd.add({{"record", "pair"},
                        {"pair", i},
                        {"t", num(traces[i].t[j])},
                        {"norm_r", num(std::sqrt(traces[i].r_sq[j]))},
                        {"acc_h_sq", num(traces[i].h_sq_path[j])},
                        {"tau_hit", traces[i].tau_path[j] != 0},
                        {"log_weight", num(traces[i].log_weight_path[j])}});
        write_atomic(cx.out_dir / "couple.ndjson", nd.text());
    } else {
        CsvTable t({"pair", "t", "norm_r", "acc_h_sq", "tau_hit", "log_weight"});
        for (std::size_t i = 0; i < traces.size(); ++i)
            for (std::size_t j = 0; j < traces[i].t.size(); ++j)
                t.row({CsvTable::cell(i), CsvTable::cell(traces[i].t[j]), CsvTable::cell(std::sqrt(traces[i].r_sq[j])),
                       CsvTable::cell(traces[i].h_sq_path[j]), CsvTable::cell(traces[i].tau_path[j] != 0),
                       CsvTable::cell(traces[i].log_weight_path[j])});
        write_atomic(cx.out_dir / "couple.csv", t.text(c, cx.subcommand));
    }
    CsvTable s({"metric", "value", "lo", "hi"});
    auto put = [&](const std::string& m, double v, double lo, double hi) {
        s.row({m, CsvTable::cell(v), CsvTable::cell(lo), CsvTable::cell(hi)});
    };
    const double nan = std::nan("");
    if (rep.fit) {
        put("slope", rep.fit->slope, rep.fit->slope - rep.fit->slope_ci(), rep.fit->slope + rep.fit->slope_ci());
        put("r2", rep.fit->r2, nan, nan);
    }
    put("gamma2_hat", rep.gamma2_hat, nan, nan);
    put("prefactor", rep.prefactor, nan, nan);
    put("p1_hat", rep.p1_hat, rep.p1_ci.lo, rep.p1_ci.hi);
    put("a_hat", rep.a_hat.mean, rep.a_ci.lo, rep.a_ci.hi);
    put("weight_mean", rep.weight_mean.mean, rep.weight_mean.mean - rep.weight_mean.ci, rep.weight_mean.mean + rep.weight_mean.ci);
    put("supermartingale", rep.supermartingale.mean, rep.supermartingale.mean - rep.supermartingale.ci,
        rep.supermartingale.mean + rep.supermartingale.ci);
    put("max_h_sq", rep.max_h_sq, nan, nan);
    put("max_overshoot", rep.max_overshoot, nan, nan);
    put("n_pairs", static_cast<double>(rep.n_pairs), nan, nan);
    put("n_tau_hit", static_cast<double>(rep.n_tau_hit), nan, nan);
    put("n_blown_up", static_cast<double>(rep.n_blown_up), nan, nan);
    put("n_gauge_unconverged", static_cast<double>(rep.n_gauge_unconverged), nan, nan);
    bool energy_ok = true;
    if (e.energy_decay) {
        EnergyDecayReport ed = mean_energy_decay(su, w01, e.T, e.energy_n_traj, e.record_stride, c.seed ^ 0x9e3779b97f4a7c15ULL);
        put("kappa_hat", ed.kappa_hat, ed.kappa_bound, nan);
        put("C1_hat", ed.C1_hat, nan, ed.C1_bound);
        put("ball_radius_sq", 2.0 * ed.C1_hat, nan, nan);
        energy_ok = ed.fit_ok && ed.kappa_ok && ed.C1_ok;
    }
    write_atomic(cx.out_dir / "couple_summary.csv", s.text(c, cx.subcommand));
    const bool pass = rep.contracts() && rep.p1_ci.lo > 0.0 && rep.a_ci.lo > 0.0 && !rep.degenerate && energy_ok;
    *cx.log << "couple: gamma2_hat=" << rep.gamma2_hat << " p1_hat=" << rep.p1_hat << " a_hat=" << rep.a_hat.mean
            << (pass ? " pass" : " flagged") << "\n";
    return pass && !blowup_flood(rep.n_blown_up, rep.n_pairs) ? kExitPass : kExitFlagged;
}

inline int run_gradient(const RunContext& cx) {
    const auto& c = cx.config;
    const auto& e = c.experiment;
    ModelSetup su(c.model);
    GradientProbe p;
    for (const auto& name : e.observables) p.phi.push_back(observable_from_name(name, mode_index(su, e.observable_mode)));
    p.xi = unit_mode(su, e.xi);
    p.T = e.T;
    p.n_traj = e.n_traj;
    GradientReport r = gradient_experiment(su, make_initial(su.lattice, e.initial), p, e.eps, c.seed);
    const std::string h = config_hash(c);
    CsvTable t({"estimator", "observable", "value", "ci", "n_traj", "config_hash"});
    bool agree = true;
    for (const auto& g : r.estimates) {
        for (auto [name, m] : {std::pair{"malliavin", g.malliavin}, std::pair{"finite-difference", g.finite_diff},
                               std::pair{"difference", g.difference}, std::pair{"weight-term", g.weight_term}})
            t.row({name, g.observable, CsvTable::cell(m.mean), CsvTable::cell(m.ci), CsvTable::cell(r.n_used), h});
        agree = agree && g.agree();
    }
    write_atomic(cx.out_dir / "gradient.csv", t.text(c, cx.subcommand));
    *cx.log << "gradient: " << r.n_used << " trajectories, estimators " << (agree ? "agree" : "disagree") << "\n";
    return agree && !blowup_flood(r.n_blown_up, e.n_traj) ? kExitPass : kExitFlagged;
}

inline int run_moments(const RunContext& cx) {
    const auto& c = cx.config;
    const auto& e = c.experiment;
    ModelSetup su(c.model);
    const SpectralField w0 = make_initial(su.lattice, e.initial);
    const double eta = e.eta > 0.0 ? e.eta : su.nu() / (4.0 * su.B0());
    CsvTable t({"statistic", "T", "estimate", "ci", "bound", "pass", "heavy_tail", "ess", "n_traj", "n_blown_up"});
    bool pass = true;
    std::size_t blown = 0, total = 0;
    auto put = [&](const MomentReport& m) {
        t.row({m.statistic, CsvTable::cell(m.T), CsvTable::cell(m.estimate), CsvTable::cell(m.ci), CsvTable::cell(m.bound),
               CsvTable::cell(m.pass), CsvTable::cell(m.heavy_tail), CsvTable::cell(m.ess), CsvTable::cell(m.n_traj),
               CsvTable::cell(m.n_blown_up)});
        blown += m.n_blown_up;
        total += m.n_traj + m.n_blown_up;
    };
    for (auto kind : {SupKind::energy, SupKind::dissipative}) {
        MomentStability s = exp_moment_stability(su, w0, eta, e.T, e.n_traj, c.seed, kind);
        put(s.at_T);
        put(s.at_2T);
        const double nan = std::nan("");
        t.row({s.at_T.statistic + "-doubling", CsvTable::cell(e.T), CsvTable::cell(s.log_gap), CsvTable::cell(s.log_ci),
               CsvTable::cell(nan), CsvTable::cell(s.stable), CsvTable::cell(s.at_T.heavy_tail || s.at_2T.heavy_tail),
               CsvTable::cell(nan), CsvTable::cell(s.at_T.n_traj + s.at_2T.n_traj), CsvTable::cell(s.at_T.n_blown_up + s.at_2T.n_blown_up)});
        pass = pass && s.stable;
    }
    ZetaMomentOptions zo;
    zo.n = 1;
    zo.eta = e.zeta_eta;
    zo.T = e.T;
    zo.n_traj = e.n_traj;
    MomentReport z = zeta_moment_check(su, w0, unit_mode(su, e.xi), zo, c.seed);
    put(z);
    pass = pass && z.pass;
    MomentReport tm = tangent_moment_check(su, w0, unit_mode(su, e.xi), su.nu() / (16.0 * su.B0()), e.T, e.n_traj, c.seed);
    put(tm);
    pass = pass && tm.pass;
    write_atomic(cx.out_dir / "diagnose_moments.csv", t.text(c, cx.subcommand));
    *cx.log << "diagnose moments: " << (pass ? "pass" : "flagged") << "\n";
    return pass && !blowup_flood(blown, total) ? kExitPass : kExitFlagged;
}

inline int run_lyapunov(const RunContext& cx) {
    const auto& c = cx.config;
    const auto& e = c.experiment;
    ModelSetup su(c.model);
    LyapunovOptions o;
    o.r = e.r;
    o.times = e.times;
    o.n_traj = e.n_traj;
    o.bootstrap = e.bootstrap;
    LyapunovReport r = lyapunov_check(su, unit_mode(su, e.direction), unit_mode(su, e.tangent), o, c.seed);
    CsvTable t({"t", "slope", "slope_lo", "slope_hi", "slope_bound", "slope_ok", "r2", "max_ratio_energy", "ok_energy", "max_tangent",
                "ok_tangent"});
    for (std::size_t k = 0; k < r.times.size(); ++k) {
        const auto& tr = r.times[k];
        double ratio = 0.0, m_t = 0.0;
        for (std::size_t g = 0; g < tr.est_energy.size(); ++g) {
            ratio = std::max(ratio, tr.est_energy[g] / tr.ceiling_energy[g]);
            m_t = std::max(m_t, tr.est_tangent[g]);
        }
        t.row({CsvTable::cell(tr.t), CsvTable::cell(tr.fit.slope), CsvTable::cell(tr.slope_ci.lo), CsvTable::cell(tr.slope_ci.hi),
               CsvTable::cell(tr.slope_bound), CsvTable::cell(tr.slope_ok), CsvTable::cell(tr.fit.r2), CsvTable::cell(ratio),
               CsvTable::cell(tr.ok_energy), CsvTable::cell(m_t), CsvTable::cell(tr.ok_tangent)});
        write_atomic(cx.out_dir / ("lyapunov_t" + std::to_string(k) + ".dat"), plot_data(tr.w0_sq, tr.log_stat));
    }
    write_atomic(cx.out_dir / "diagnose_lyapunov.csv", t.text(c, cx.subcommand));
    const std::size_t total = r.times.empty() ? 0 : r.times.front().w0_sq.size() * e.n_traj;
    *cx.log << "diagnose lyapunov: eta0=" << r.eta0 << " C_hat=" << r.C_hat << (r.pass() ? " pass" : " flagged") << "\n";
    return r.pass() && !blowup_flood(r.n_blown_up, total) ? kExitPass : kExitFlagged;
}

inline int run_mixing(const RunContext& cx) {
    const auto& c = cx.config;
    const auto& e = c.experiment;
    ModelSetup su(c.model);
    MixingOptions o;
    for (const auto& name : e.observables) o.observables.push_back(observable_from_name(name, mode_index(su, e.observable_mode)));
    o.T = e.T;
    o.n_traj = e.n_traj;
    o.record_stride = e.record_stride;
    o.long_T = e.long_T;
    o.n_long = e.n_long;
    o.long_stride = e.long_stride;
    MixingReport r = mixing_decay(su, make_initial(su.lattice, e.initial), make_initial(su.lattice, e.initial_b), o, c.seed);
    CsvTable t({"quantity", "value", "ci", "pass"});
    bool pass = r.averages_agree && r.energy_ok;
    for (const auto& d : r.decay) {
        t.row({"theta_hat:" + d.observable, CsvTable::cell(d.theta_hat), CsvTable::cell(d.theta_ci), CsvTable::cell(d.decays())});
        pass = pass && d.decays();
        std::vector<double> x(r.t.begin() + 1, r.t.end()), y(d.delta.begin() + 1, d.delta.end());
        write_atomic(cx.out_dir / ("mixing_" + d.observable + ".dat"), plot_data(x, y));
    }
    t.row({"long_avg_a", CsvTable::cell(r.long_avg_a.mean), CsvTable::cell(r.long_avg_a.ci), ""});
    t.row({"long_avg_b", CsvTable::cell(r.long_avg_b.mean), CsvTable::cell(r.long_avg_b.ci), ""});
    t.row({"long_avg_gap", CsvTable::cell(r.avg_gap), CsvTable::cell(r.avg_ci), CsvTable::cell(r.averages_agree)});
    t.row({"stationary_energy", CsvTable::cell(r.stationary_energy.mean), CsvTable::cell(r.stationary_energy.ci),
           CsvTable::cell(r.energy_ok)});
    t.row({"energy_ceiling", CsvTable::cell(r.energy_ceiling), "", ""});
    write_atomic(cx.out_dir / "diagnose_mixing.csv", t.text(c, cx.subcommand));
    *cx.log << "diagnose mixing: " << (pass ? "pass" : "flagged") << "\n";
    return pass && !blowup_flood(r.n_blown_up, 2 * (e.n_traj + e.n_long)) ? kExitPass : kExitFlagged;
}

inline int run_invariant(const RunContext& cx) {
    const auto& c = cx.config;
    const auto& e = c.experiment;
    ModelSetup su(c.model);
    InvariantOptions o;
    o.burn_in = e.burn_in;
    o.n_keep = e.n_keep;
    o.thin = e.thin;
    o.n_chains = e.n_chains;
    const SpectralField w0 = make_initial(su.lattice, e.initial);
    InvariantSummary a = invariant_measure_sample(su, w0, o, c.seed, 5);
    InvariantSummary b = invariant_measure_sample(su, w0, o, c.seed, 6);
    const bool seeds_agree = std::abs(a.energy.mean - b.energy.mean) <= 3.0 * std::hypot(a.energy.se, b.energy.se);
    CsvTable t({"quantity", "value", "ci", "pass"});
    auto put = [&](const std::string& q, const MeanCI& m, const std::string& ok) {
        t.row({q, CsvTable::cell(m.mean), CsvTable::cell(m.ci), ok});
    };
    put("energy", a.energy, CsvTable::cell(a.energy_ok));
    put("enstrophy_h1", a.enstrophy_h1, "");
    put("dissipation", a.dissipation, "");
    put("noise_power", a.noise_power, "");
    t.row({"balance_gap", CsvTable::cell(a.balance_gap), CsvTable::cell(a.balance_ci), CsvTable::cell(a.balance_ok)});
    t.row({"energy_ceiling", CsvTable::cell(a.energy_ceiling), "", ""});
    t.row({"burn_in_stationary", "", "", CsvTable::cell(a.burn_in_ok)});
    put("energy_second_seed", b.energy, CsvTable::cell(seeds_agree));
    for (std::size_t i = 0; i < a.low_modes.size(); ++i) {
        put("mode_mean_" + std::to_string(i), a.low_modes[i], "");
        put("mode_var_" + std::to_string(i), a.low_mode_var[i], "");
    }
    write_atomic(cx.out_dir / "diagnose_invariant.csv", t.text(c, cx.subcommand));
    const bool pass = a.energy_ok && a.balance_ok && a.burn_in_ok && seeds_agree;
    *cx.log << "diagnose invariant: " << (pass ? "pass" : "flagged") << "\n";
    const std::size_t lost = 2 * e.n_chains - a.n_chains - b.n_chains;
    return pass && !blowup_flood(lost, 2 * e.n_chains) ? kExitPass : kExitFlagged;
}

inline int run_validate_noise(const RunContext& cx) {
    const auto& c = cx.config;
    ModelSetup su(c.model);
    HypothesisReport r = validate_hypotheses(su.noise, c.experiment.n_samples, c.seed);
    CsvTable t({"hypothesis", "sampled", "bound", "pass"});
    t.row({"bounded_hs", CsvTable::cell(r.max_hs_sq), CsvTable::cell(r.B0), CsvTable::cell(r.bounded_ok)});
    t.row({"lipschitz", CsvTable::cell(r.max_lipschitz_ratio), CsvTable::cell(r.L_Q), CsvTable::cell(r.lipschitz_ok)});
    t.row({"right_inverse", CsvTable::cell(r.max_inverse_residual), CsvTable::cell(1e-12), CsvTable::cell(r.inverse_ok)});
    write_atomic(cx.out_dir / "validate_noise.csv", t.text(c, cx.subcommand));
    *cx.log << "validate-noise: " << (r.pass() ? "pass" : "flagged") << "\n";
    return r.pass() ? kExitPass : kExitFlagged;
}

}  // namespace detail

/// Runs one subcommand; exceptions propagate to the caller.
inline int dispatch(const RunContext& cx) {
    const std::string& kind = cx.config.experiment.kind;
    if (!kind.empty() && kind != cx.subcommand)
        throw std::invalid_argument("config experiment.kind is '" + kind + "' but the subcommand is '" + cx.subcommand + "'");
    if (cx.subcommand == "simulate") return detail::run_simulate(cx);
    if (cx.subcommand == "couple") return detail::run_couple(cx);
    if (cx.subcommand == "gradient") return detail::run_gradient(cx);
    if (cx.subcommand == "validate-noise") return detail::run_validate_noise(cx);
    if (cx.subcommand == "diagnose") {
        if (cx.check == "moments") return detail::run_moments(cx);
        if (cx.check == "lyapunov") return detail::run_lyapunov(cx);
        if (cx.check == "mixing") return detail::run_mixing(cx);
        if (cx.check == "invariant") return detail::run_invariant(cx);
        throw std::invalid_argument("diagnose: --check must be moments, lyapunov, mixing or invariant");
    }
    throw std::invalid_argument("unknown subcommand '" + cx.subcommand + "'");
}

}  // namespace vortex
