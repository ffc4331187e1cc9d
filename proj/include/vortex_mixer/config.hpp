/// @file config.hpp
/// @brief Run configuration: JSON parsing with typo rejection, validation
///        that reports every violation, and a canonical hash.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vortex_mixer/malliavin.hpp"
#include "vortex_mixer/model.hpp"

namespace vortex {

using json = nlohmann::json;

struct ModeRef {
    int k1 = 1;
    int k2 = 0;
};

struct ExperimentConfig {
    std::string kind;  ///< empty: any subcommand
    double T = 1.0;
    std::size_t n_traj = 100;
    std::size_t record_stride = 10;
    InitialCondition initial;
    InitialCondition initial_b{InitialCondition::Kind::random, 1, 0, 2.0, 2.0, 1};
    // simulate
    bool derivative_flow = false;
    bool control = false;
    ModeRef xi{1, 0};
    std::size_t n_modes = 4;
    // couple
    double K = 50.0;
    double C_cap = 10.0;
    bool cap_enabled = true;
    double delta = 0.1;
    double gauge_r = 0.5;
    double fit_t0 = 1.0;
    double fit_t1 = 10.0;
    bool energy_decay = false;
    std::size_t energy_n_traj = 500;
    // gradient
    std::vector<std::string> observables{"single-mode", "bounded-exp", "smoothed-energy"};
    ModeRef observable_mode{1, 0};
    double eps = 1e-4;
    // moments (0 selects the default exponent of each statistic)
    double eta = 0.0;
    double zeta_eta = 0.0;
    // lyapunov
    double r = 1.0;
    std::vector<double> times{0.25, 0.5, 1.0};
    std::size_t bootstrap = 200;
    ModeRef direction{1, 0};
    ModeRef tangent{0, 1};
    // mixing
    double long_T = 100.0;
    std::size_t n_long = 8;
    std::size_t long_stride = 10;
    // invariant
    double burn_in = 10.0;
    std::size_t n_keep = 200;
    std::size_t thin = 20;
    std::size_t n_chains = 16;
    // validate-noise
    std::size_t n_samples = 1000;
};

struct OutputConfig {
    std::string path = "out";
    std::string format = "ndjson";  ///< ndjson | csv, for time series
};

struct RunConfig {
    ModelSpec model;
    ExperimentConfig experiment;
    std::uint64_t seed = 1;
    OutputConfig output;
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> problems) : std::runtime_error(join(problems)), problems_(std::move(problems)) {}
    [[nodiscard]] const std::vector<std::string>& problems() const { return problems_; }

private:
    static std::string join(const std::vector<std::string>& p) {
        std::string s = "invalid config:";
        for (const auto& x : p) s += "\n  " + x;
        return s;
    }
    std::vector<std::string> problems_;
};

namespace detail {

/// Reads typed keys out of one JSON object, remembering which keys were used.
class Section {
public:
    Section(const json& j, std::string path, std::vector<std::string>& errs) : j_(j), path_(std::move(path)), errs_(errs) {
        if (!j_.is_object()) errs_.push_back(path_ + ": must be an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.is_object() || !j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const std::exception&) {
            errs_.push_back(path_ + "." + key + ": wrong type");
        }
    }

    void get_mode(const char* key, ModeRef& m) {
        seen_.insert(key);
        if (!j_.is_object() || !j_.contains(key)) return;
        Section s(j_.at(key), path_ + "." + key, errs_);
        s.get("k1", m.k1);
        s.get("k2", m.k2);
        s.finish();
    }

    void get_initial(const char* key, InitialCondition& ic) {
        seen_.insert(key);
        if (!j_.is_object() || !j_.contains(key)) return;
        Section s(j_.at(key), path_ + "." + key, errs_);
        std::string kind = ic.kind == InitialCondition::Kind::zero ? "zero" : ic.kind == InitialCondition::Kind::mode ? "mode" : "random";
        s.get("kind", kind);
        if (kind == "zero") ic.kind = InitialCondition::Kind::zero;
        else if (kind == "mode") ic.kind = InitialCondition::Kind::mode;
        else if (kind == "random") ic.kind = InitialCondition::Kind::random;
        else errs_.push_back(path_ + "." + key + ".kind: expected zero, mode or random");
        s.get("k1", ic.k1);
        s.get("k2", ic.k2);
        s.get("amplitude", ic.amplitude);
        s.get("decay", ic.decay);
        s.get("seed", ic.seed);
        s.finish();
    }

    const json* sub(const char* key) {
        seen_.insert(key);
        return j_.is_object() && j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() {
        if (!j_.is_object()) return;
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) errs_.push_back(path_ + "." + it.key() + ": unknown key");
    }

private:
    const json& j_;
    std::string path_;
    std::vector<std::string>& errs_;
    std::set<std::string> seen_;
};

inline json initial_json(const InitialCondition& ic) {
    const char* k = ic.kind == InitialCondition::Kind::zero ? "zero" : ic.kind == InitialCondition::Kind::mode ? "mode" : "random";
    return {{"kind", k}, {"k1", ic.k1}, {"k2", ic.k2}, {"amplitude", ic.amplitude}, {"decay", ic.decay}, {"seed", ic.seed}};
}

inline json mode_json(const ModeRef& m) { return {{"k1", m.k1}, {"k2", m.k2}}; }

}  // namespace detail

inline const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> k{"simulate", "couple", "gradient", "diagnose", "validate-noise"};
    return k;
}

/// Fully resolved config with every default written out; keys are sorted,
/// so dump() is canonical.  output.path is left out: where a run is written
/// does not change what it computes.
inline json to_json(const RunConfig& c) {
    const auto& m = c.model;
    const auto& e = c.experiment;
    json sigma = m.noise.sigma.size() == 1 ? json(m.noise.sigma[0]) : json(m.noise.sigma);
    return {
        {"lattice", {{"M", m.M}, {"N", m.N}}},
        {"physics", {{"nu", m.nu}}},
        {"noise", {{"modulation", to_string(m.noise.modulation)}, {"sigma_profile", sigma}, {"eps_mod", m.noise.eps_mod}}},
        {"scheme", {{"dt", m.dt}, {"B1", m.b1()}}},
        {"experiment",
         {{"kind", e.kind},
          {"T", e.T},
          {"n_traj", e.n_traj},
          {"record_stride", e.record_stride},
          {"initial", detail::initial_json(e.initial)},
          {"initial_b", detail::initial_json(e.initial_b)},
          {"derivative_flow", e.derivative_flow},
          {"control", e.control},
          {"xi", detail::mode_json(e.xi)},
          {"n_modes", e.n_modes},
          {"K", e.K},
          {"C_cap", e.C_cap},
          {"cap_enabled", e.cap_enabled},
          {"delta", e.delta},
          {"gauge_r", e.gauge_r},
          {"fit_t0", e.fit_t0},
          {"fit_t1", e.fit_t1},
          {"energy_decay", e.energy_decay},
          {"energy_n_traj", e.energy_n_traj},
          {"observables", e.observables},
          {"observable_mode", detail::mode_json(e.observable_mode)},
          {"eps", e.eps},
          {"eta", e.eta},
          {"zeta_eta", e.zeta_eta},
          {"r", e.r},
          {"times", e.times},
          {"bootstrap", e.bootstrap},
          {"direction", detail::mode_json(e.direction)},
          {"tangent", detail::mode_json(e.tangent)},
          {"long_T", e.long_T},
          {"n_long", e.n_long},
          {"long_stride", e.long_stride},
          {"burn_in", e.burn_in},
          {"n_keep", e.n_keep},
          {"thin", e.thin},
          {"n_chains", e.n_chains},
          {"n_samples", e.n_samples}}},
        {"seed", c.seed},
        {"output", {{"format", c.output.format}}},
    };
}

/// 64-bit FNV-1a of the canonical serialisation, as 16 hex digits.
inline std::string config_hash(const RunConfig& c) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : to_json(c).dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace detail {

inline void validate(const RunConfig& c, std::vector<std::string>& errs) {
    const auto& m = c.model;
    const auto& e = c.experiment;
    if (m.M < 1) errs.push_back("lattice.M: must be >= 1");
    if (m.N < 1) errs.push_back("lattice.N: must be >= 1");
    if (m.N > m.M) errs.push_back("lattice: band N must not exceed the truncation M (N <= M)");
    if (!(m.nu > 0.0)) errs.push_back("physics.nu: must be > 0");
    if (!(m.dt > 0.0)) errs.push_back("scheme.dt: must be > 0");
    if (m.B1 != 0.0 && !(m.B1 > m.nu * m.N * m.N))
        errs.push_back("scheme.B1: B1 is a constant bigger than nu*N^2 (got " + std::to_string(m.B1) + ", nu*N^2 = " +
                       std::to_string(m.nu * m.N * m.N) + ")");
    if (m.noise.modulation == Modulation::tanh_diagonal && !(m.noise.eps_mod >= 0.0 && m.noise.eps_mod <= 0.9))
        errs.push_back("noise.eps_mod: must lie in [0, 0.9] so that q stays bounded away from 0");
    for (double s : m.noise.sigma)
        if (!(s > 0.0)) errs.push_back("noise.sigma_profile: every entry must be > 0 (non-degenerate on the band)");
    if (!e.kind.empty() && std::find(experiment_kinds().begin(), experiment_kinds().end(), e.kind) == experiment_kinds().end())
        errs.push_back("experiment.kind: unknown kind '" + e.kind + "'");
    if (!(e.T > 0.0)) errs.push_back("experiment.T: must be > 0");
    if (e.n_traj < 1) errs.push_back("experiment.n_traj: must be >= 1");
    if (e.record_stride < 1) errs.push_back("experiment.record_stride: must be >= 1");
    if (!(e.K >= 0.0)) errs.push_back("experiment.K: must be >= 0");
    if (!(e.C_cap > 0.0)) errs.push_back("experiment.C_cap: must be > 0");
    if (!(e.delta > 0.0)) errs.push_back("experiment.delta: must be > 0");
    if (!(e.gauge_r > 0.0 && e.gauge_r <= 1.0)) errs.push_back("experiment.gauge_r: must lie in (0, 1]");
    if (!(e.fit_t0 < e.fit_t1)) errs.push_back("experiment.fit_t0: must be < fit_t1");
    if (e.energy_decay && e.energy_n_traj < 500) errs.push_back("experiment.energy_n_traj: must be >= 500");
    if (!(e.eps >= 1e-6 && e.eps <= 1e-2)) errs.push_back("experiment.eps: must lie in [1e-6, 1e-2]");
    for (const auto& o : e.observables) {
        try {
            observable_from_name(o);
        } catch (const std::exception& ex) {
            errs.push_back(std::string("experiment.observables: ") + ex.what());
        }
    }
    if (!(e.r >= 0.5 && e.r <= 2.0)) errs.push_back("experiment.r: must lie in [1/2, 2]");
    for (double t : e.times)
        if (!(t > 0.0 && t <= 1.0)) errs.push_back("experiment.times: every time must lie in (0, 1]");
    if (!(e.long_T > 0.0)) errs.push_back("experiment.long_T: must be > 0");
    if (e.n_long < 2) errs.push_back("experiment.n_long: must be >= 2");
    if (e.long_stride < 1) errs.push_back("experiment.long_stride: must be >= 1");
    if (!(e.burn_in >= 10.0 / m.nu)) errs.push_back("experiment.burn_in: must be >= 10/nu");
    if (e.n_keep < 2 || e.n_chains < 2 || e.thin < 1) errs.push_back("experiment: n_keep >= 2, n_chains >= 2 and thin >= 1 required");
    if (e.n_samples < 100) errs.push_back("experiment.n_samples: must be >= 100");
    if (c.output.format != "ndjson" && c.output.format != "csv") errs.push_back("output.format: expected ndjson or csv");
    if (c.output.path.empty()) errs.push_back("output.path: must not be empty");
    if (!errs.empty()) return;

    // checks that need the lattice and the noise constants
    try {
        ModelSetup su(m);
        auto check_mode = [&](const ModeRef& r, const char* name) {
            if (!su.lattice->index_of({r.k1, r.k2})) errs.push_back(std::string("experiment.") + name + ": mode not on the lattice");
        };
        check_mode(e.xi, "xi");
        check_mode(e.observable_mode, "observable_mode");
        check_mode(e.direction, "direction");
        check_mode(e.tangent, "tangent");
        if (e.initial.kind == InitialCondition::Kind::mode) check_mode({e.initial.k1, e.initial.k2}, "initial");
        if (e.initial_b.kind == InitialCondition::Kind::mode) check_mode({e.initial_b.k1, e.initial_b.k2}, "initial_b");
        const double eta_max = m.nu / (2.0 * su.B0());
        if (!(e.eta >= 0.0 && e.eta <= eta_max))
            errs.push_back("experiment.eta: must lie in (0, nu/(2 B0)] = (0, " + std::to_string(eta_max) + "], or 0 for the default");
        const double zeta_max = m.nu * m.nu / (8.0 * su.B0());
        if (!(e.zeta_eta >= 0.0 && e.zeta_eta <= zeta_max))
            errs.push_back("experiment.zeta_eta: must lie in (0, nu^2/(8 B0)], or 0 for the default");
        if (step_count(e.T, m.dt) < e.record_stride) errs.push_back("experiment.record_stride: exceeds the number of steps");
    } catch (const std::exception& ex) {
        errs.push_back(std::string("model: ") + ex.what());
    }
}

}  // namespace detail

/// Throws ConfigError listing every problem found.
inline RunConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& ex) {
        throw ConfigError({std::string("malformed JSON: ") + ex.what()});
    }
    std::vector<std::string> errs;
    RunConfig c;
    detail::Section root(j, "config", errs);
    if (auto* p = root.sub("lattice")) {
        detail::Section s(*p, "lattice", errs);
        s.get("M", c.model.M);
        s.get("N", c.model.N);
        s.finish();
    }
    if (auto* p = root.sub("physics")) {
        detail::Section s(*p, "physics", errs);
        s.get("nu", c.model.nu);
        s.finish();
    }
    if (auto* p = root.sub("noise")) {
        detail::Section s(*p, "noise", errs);
        std::string mod = to_string(c.model.noise.modulation);
        s.get("modulation", mod);
        if (mod == "constant") c.model.noise.modulation = Modulation::constant;
        else if (mod == "tanh-diagonal") c.model.noise.modulation = Modulation::tanh_diagonal;
        else errs.push_back("noise.modulation: expected constant or tanh-diagonal");
        if (const json* sp = s.sub("sigma_profile")) {
            if (sp->is_number()) c.model.noise.sigma = {sp->get<double>()};
            else if (sp->is_array() && !sp->empty() && std::all_of(sp->begin(), sp->end(), [](const json& v) { return v.is_number(); }))
                c.model.noise.sigma = sp->get<std::vector<double>>();
            else errs.push_back("noise.sigma_profile: expected a number or a non-empty array of numbers");
        }
        s.get("eps_mod", c.model.noise.eps_mod);
        s.finish();
        if (c.model.noise.modulation == Modulation::constant) c.model.noise.eps_mod = 0.0;
    }
    if (auto* p = root.sub("scheme")) {
        detail::Section s(*p, "scheme", errs);
        s.get("dt", c.model.dt);
        if (const json* b = s.sub("B1"); b && !b->is_null()) {
            if (b->is_number()) c.model.B1 = b->get<double>();
            else errs.push_back("scheme.B1: wrong type");
        }
        s.finish();
    }
    if (auto* p = root.sub("experiment")) {
        auto& e = c.experiment;
        detail::Section s(*p, "experiment", errs);
        s.get("kind", e.kind);
        s.get("T", e.T);
        s.get("n_traj", e.n_traj);
        s.get("record_stride", e.record_stride);
        s.get_initial("initial", e.initial);
        s.get_initial("initial_b", e.initial_b);
        s.get("derivative_flow", e.derivative_flow);
        s.get("control", e.control);
        s.get_mode("xi", e.xi);
        s.get("n_modes", e.n_modes);
        s.get("K", e.K);
        s.get("C_cap", e.C_cap);
        s.get("cap_enabled", e.cap_enabled);
        s.get("delta", e.delta);
        s.get("gauge_r", e.gauge_r);
        s.get("fit_t0", e.fit_t0);
        s.get("fit_t1", e.fit_t1);
        s.get("energy_decay", e.energy_decay);
        s.get("energy_n_traj", e.energy_n_traj);
        s.get("observables", e.observables);
        s.get_mode("observable_mode", e.observable_mode);
        s.get("eps", e.eps);
        s.get("eta", e.eta);
        s.get("zeta_eta", e.zeta_eta);
        s.get("r", e.r);
        s.get("times", e.times);
        s.get("bootstrap", e.bootstrap);
        s.get_mode("direction", e.direction);
        s.get_mode("tangent", e.tangent);
        s.get("long_T", e.long_T);
        s.get("n_long", e.n_long);
        s.get("long_stride", e.long_stride);
        s.get("burn_in", e.burn_in);
        s.get("n_keep", e.n_keep);
        s.get("thin", e.thin);
        s.get("n_chains", e.n_chains);
        s.get("n_samples", e.n_samples);
        s.finish();
    }
    root.get("seed", c.seed);
    if (auto* p = root.sub("output")) {
        detail::Section s(*p, "output", errs);
        s.get("path", c.output.path);
        s.get("format", c.output.format);
        s.finish();
    }
    root.finish();
    detail::validate(c, errs);
    if (!errs.empty()) throw ConfigError(std::move(errs));
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace vortex
