#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "entropic/scenarios.hpp"

namespace entropic {

using json = nlohmann::ordered_json;

inline constexpr const char* version = "0.1.0";

inline const std::vector<std::string>& run_modes() {
    static const std::vector<std::string> modes{"ensemble", "fokker-planck", "madelung", "schrodinger",
                                                "nonlinear", "compare",       "validate"};
    return modes;
}

struct EmitFlags {
    bool snapshots = false;
    bool trajectories = false;
    bool observables = true;
    bool plot_data = false;
};

/// Per-run numerical knobs; unset values fall back to the scenario.
struct SolverOverrides {
    std::optional<double> dt;
    std::optional<double> step_dt;
    std::optional<double> horizon;
    std::optional<std::size_t> samples;
    std::optional<std::vector<std::size_t>> cells;
    std::optional<std::size_t> walkers;
    double rho_floor = default_rho_floor;
    double fp_cfl = 0.25;
    double madelung_stability = 0.25;
    double energy_tolerance = 1e-5;
    double norm_tolerance = 1e-10;
    double wall_fraction = 1e-4;
    std::string boundary = "reflect";
    std::size_t trajectory_walkers = 100;
};

struct RunConfig {
    ScenarioSpec scenario;
    std::string mode;
    std::uint64_t seed = 0;
    std::string output = "entropic-out";
    SolverOverrides solver;
    std::optional<double> regraduate;   ///< κ applied to (η, τ, φ, μ) before the run
    EmitFlags emit;
    std::vector<std::string> warnings;
};

namespace detail {

/// Collects every schema problem instead of stopping at the first.
class SchemaReader {
public:
    std::vector<std::string> problems;

    void only(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
        if (!obj.is_object()) {
            problems.push_back(path + ": expected an object");
            return;
        }
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (auto it = obj.begin(); it != obj.end(); ++it)
            if (!ok.count(it.key())) problems.push_back(join(path, it.key()) + ": unknown key");
    }

    static std::string join(const std::string& path, const std::string& key) {
        return path.empty() ? key : path + "." + key;
    }

    template <class T>
    bool get(const json& obj, const std::string& path, const char* key, T& out) {
        if (!obj.is_object() || !obj.contains(key)) return false;
        const auto& v = obj.at(key);
        const std::string p = join(path, key);
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) throw std::runtime_error("expected a number");
                out = v.template get<double>();
                if (!std::isfinite(out)) throw std::runtime_error("must be finite");
            } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
                if (!v.is_number_integer() || v.template get<long long>() < 0)
                    throw std::runtime_error("expected a non-negative integer");
                out = v.template get<T>();
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw std::runtime_error("expected true or false");
                out = v.template get<bool>();
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw std::runtime_error("expected a string");
                out = v.template get<std::string>();
            } else if constexpr (std::is_same_v<T, std::vector<double>>) {
                std::vector<double> r;
                if (v.is_number()) {
                    r.push_back(v.template get<double>());
                } else if (v.is_array()) {
                    for (const auto& e : v) {
                        if (!e.is_number()) throw std::runtime_error("expected numbers");
                        r.push_back(e.template get<double>());
                    }
                } else {
                    throw std::runtime_error("expected a number or an array of numbers");
                }
                for (double x : r)
                    if (!std::isfinite(x)) throw std::runtime_error("must be finite");
                out = r;
            } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
                std::vector<std::size_t> r;
                auto one = [&](const json& e) {
                    if (!e.is_number_integer() || e.template get<long long>() <= 0)
                        throw std::runtime_error("expected positive integers");
                    r.push_back(e.template get<std::size_t>());
                };
                if (v.is_array()) {
                    for (const auto& e : v) one(e);
                } else {
                    one(v);
                }
                out = r;
            }
            return true;
        } catch (const std::exception& e) {
            problems.push_back(p + ": " + e.what());
            return false;
        }
    }

    void positive(const std::string& path, double v) {
        if (!(v > 0.0)) problems.push_back(path + ": must be positive");
    }
    void positive(const std::string& path, const std::vector<double>& v) {
        for (double x : v)
            if (!(x > 0.0)) {
                problems.push_back(path + ": must be positive");
                return;
            }
    }
};

inline std::vector<double> broadcast(const std::vector<double>& v, std::size_t n) {
    if (v.size() == 1 && n > 1) return std::vector<double>(n, v[0]);
    return v;
}

inline void read_params(SchemaReader& r, const json& j, const std::string& path, ScenarioSpec& s,
                        std::vector<std::string>& warnings) {
    r.only(j, path, {"m", "mu", "sigma", "eta", "tau"});
    std::vector<double> m, mu, sigma;
    double eta = 0.0, tau = 0.0;
    const bool has_m = r.get(j, path, "m", m);
    const bool has_mu = r.get(j, path, "mu", mu);
    const bool has_sigma = r.get(j, path, "sigma", sigma);
    const bool has_eta = r.get(j, path, "eta", eta);
    const bool has_tau = r.get(j, path, "tau", tau);
    const std::size_t before = r.problems.size();
    if (has_m) r.positive(path + ".m", m);
    if (has_sigma) r.positive(path + ".sigma", sigma);
    if (has_eta) r.positive(path + ".eta", eta);
    if (has_tau) r.positive(path + ".tau", tau);
    if (has_mu)
        for (double x : mu)
            if (!(x >= 0.0)) r.problems.push_back(path + ".mu: must be non-negative");
    if (r.problems.size() != before) return;
    const std::size_t N = s.particles;
    auto sized = [&](const char* name, std::vector<double>& v) {
        v = broadcast(v, N);
        if (v.size() != N) r.problems.push_back(path + "." + name + ": needs 1 or " + std::to_string(N) + " values");
    };
    if (has_m) sized("m", m);
    if (has_mu) sized("mu", mu);
    if (has_sigma) sized("sigma", sigma);
    if (r.problems.size() != before) return;
    if (has_m) {
        // μ keeps its ratio to m unless given explicitly
        if (!has_mu)
            for (std::size_t n = 0; n < N; ++n) s.mu[n] = s.mu[n] / s.m[n] * m[n];
        s.m = m;
    }
    if (has_mu) s.mu = mu;
    if (has_sigma) s.sigma = sigma;
    if (has_eta) s.eta = eta;
    if (has_tau) s.tau = tau;
    // σ²/τ = η/m fixes whichever of τ, η was not given
    if (has_tau && !has_eta) s.eta = s.m[0] * s.sigma[0] * s.sigma[0] / s.tau;
    else if (!has_tau) s.tau = s.m[0] * s.sigma[0] * s.sigma[0] / s.eta;
    for (std::size_t n = 0; n < N; ++n) {
        const double lhs = s.sigma[n] * s.sigma[n] / s.tau, rhs = s.eta / s.m[n];
        if (std::abs(lhs - rhs) > 1e-12 * std::max(lhs, rhs)) {
            r.problems.push_back(path + ": inconsistent parameters, sigma^2/tau = " + csv::format(lhs) +
                                 " but eta/m = " + csv::format(rhs) + " (particle " + std::to_string(n) + ")");
            break;
        }
    }
    (void)warnings;
}

inline void read_grid(SchemaReader& r, const json& j, const std::string& path, ScenarioSpec& s, bool required) {
    r.only(j, path, {"lo", "hi", "cells"});
    std::vector<double> lo, hi;
    std::vector<std::size_t> cells;
    const bool a = r.get(j, path, "lo", lo), b = r.get(j, path, "hi", hi), c = r.get(j, path, "cells", cells);
    if (required && !(a && b && c)) r.problems.push_back(path + ": lo, hi and cells are required");
    const std::size_t D = s.dims();
    if (a) s.lo = broadcast(lo, D);
    if (b) s.hi = broadcast(hi, D);
    if (c) s.cells = cells.size() == 1 ? std::vector<std::size_t>(D, cells[0]) : cells;
}

inline ScenarioSpec read_inline_scenario(SchemaReader& r, const json& j, std::vector<std::string>& warnings) {
    const std::string path = "scenario";
    r.only(j, path,
           {"name", "description", "d", "particles", "grid", "params", "potential", "phi", "initial", "horizon",
            "samples", "dt", "step_dt", "walkers", "oracle"});
    ScenarioSpec s;
    s.name = "inline";
    r.get(j, path, "name", s.name);
    r.get(j, path, "description", s.description);
    r.get(j, path, "d", s.d);
    r.get(j, path, "particles", s.particles);
    if (s.d == 0 || s.particles == 0) r.problems.push_back("scenario: d and particles must be positive");
    const std::size_t N = std::max<std::size_t>(1, s.particles), D = std::max<std::size_t>(1, s.dims());
    s.m.assign(N, 1.0);
    s.mu.assign(N, 1.0);
    s.sigma.assign(N, 1.0);
    if (j.contains("grid")) read_grid(r, j.at("grid"), "scenario.grid", s, true);
    else r.problems.push_back("scenario.grid: required");
    if (j.contains("params")) read_params(r, j.at("params"), "scenario.params", s, warnings);
    if (j.contains("potential")) {
        const auto& p = j.at("potential");
        r.only(p, "scenario.potential", {"kind", "omega", "coupling", "quartic"});
        r.get(p, "scenario.potential", "kind", s.potential.kind);
        r.get(p, "scenario.potential", "omega", s.potential.omega);
        r.get(p, "scenario.potential", "coupling", s.potential.coupling);
        r.get(p, "scenario.potential", "quartic", s.potential.quartic);
        if (s.potential.kind != "zero" && s.potential.kind != "harmonic" && s.potential.kind != "anharmonic")
            r.problems.push_back("scenario.potential.kind: expected zero, harmonic or anharmonic");
    }
    if (j.contains("phi")) {
        const auto& p = j.at("phi");
        r.only(p, "scenario.phi", {"kind", "value", "k"});
        r.get(p, "scenario.phi", "kind", s.phi.kind);
        r.get(p, "scenario.phi", "value", s.phi.value);
        r.get(p, "scenario.phi", "k", s.phi.k);
        if (s.phi.kind != "constant" && s.phi.kind != "exp")
            r.problems.push_back("scenario.phi.kind: expected constant or exp");
        r.positive("scenario.phi.value", s.phi.value);
        if (s.phi.kind == "exp") s.phi.k = broadcast(s.phi.k, D);
    }
    s.initial = {std::vector<double>(D, 0.0), std::vector<double>(D, 1.0), std::vector<double>(D, 0.0)};
    if (j.contains("initial")) {
        const auto& p = j.at("initial");
        r.only(p, "scenario.initial", {"center", "width", "momentum"});
        std::vector<double> v;
        if (r.get(p, "scenario.initial", "center", v)) s.initial.center = broadcast(v, D);
        if (r.get(p, "scenario.initial", "width", v)) {
            r.positive("scenario.initial.width", v);
            s.initial.width = broadcast(v, D);
        }
        if (r.get(p, "scenario.initial", "momentum", v)) s.initial.momentum = broadcast(v, D);
    }
    r.get(j, path, "horizon", s.horizon);
    r.get(j, path, "samples", s.samples);
    r.get(j, path, "dt", s.dt);
    r.get(j, path, "step_dt", s.step_dt);
    r.get(j, path, "walkers", s.walkers);
    r.get(j, path, "oracle", s.oracle);
    r.positive("scenario.horizon", s.horizon);
    r.positive("scenario.step_dt", s.step_dt);
    return s;
}

} // namespace detail

inline json to_json(const ScenarioSpec& s) {
    json j;
    j["name"] = s.name;
    j["description"] = s.description;
    j["d"] = s.d;
    j["particles"] = s.particles;
    j["grid"] = {{"lo", s.lo}, {"hi", s.hi}, {"cells", s.cells}};
    j["params"] = {{"m", s.m}, {"mu", s.mu}, {"sigma", s.sigma}, {"eta", s.eta}, {"tau", s.tau}};
    j["potential"] = {{"kind", s.potential.kind},
                      {"omega", s.potential.omega},
                      {"coupling", s.potential.coupling},
                      {"quartic", s.potential.quartic}};
    j["phi"] = {{"kind", s.phi.kind}, {"value", s.phi.value}, {"k", s.phi.k}};
    j["initial"] = {{"center", s.initial.center}, {"width", s.initial.width}, {"momentum", s.initial.momentum}};
    j["horizon"] = s.horizon;
    j["samples"] = s.samples;
    j["dt"] = s.dt;
    j["step_dt"] = s.step_dt;
    j["walkers"] = s.walkers;
    j["oracle"] = s.oracle;
    return j;
}

/// Parses a scenario manifest (the object written by to_json).
inline ScenarioSpec scenario_from_json(const json& j) {
    detail::SchemaReader r;
    std::vector<std::string> warnings;
    auto s = detail::read_inline_scenario(r, j, warnings);
    if (!r.problems.empty()) throw ConfigError(r.problems);
    return s;
}

inline json to_json(const RunConfig& c) {
    json j;
    j["scenario"] = to_json(c.scenario);
    j["mode"] = c.mode;
    j["seed"] = c.seed;
    j["output"] = c.output;
    json solver;
    if (c.solver.dt) solver["dt"] = *c.solver.dt;
    solver["rho_floor"] = c.solver.rho_floor;
    solver["fp_cfl"] = c.solver.fp_cfl;
    solver["madelung_stability"] = c.solver.madelung_stability;
    solver["energy_tolerance"] = c.solver.energy_tolerance;
    solver["norm_tolerance"] = c.solver.norm_tolerance;
    solver["wall_fraction"] = c.solver.wall_fraction;
    solver["boundary"] = c.solver.boundary;
    solver["trajectory_walkers"] = c.solver.trajectory_walkers;
    j["solver"] = solver;
    if (c.regraduate) j["regraduate"] = *c.regraduate;
    j["emit"] = {{"snapshots", c.emit.snapshots},
                 {"trajectories", c.emit.trajectories},
                 {"observables", c.emit.observables},
                 {"plot_data", c.emit.plot_data}};
    return j;
}

/// Validates a whole config document; every problem found is reported in one ConfigError.
inline RunConfig parse_config(const json& doc) {
    detail::SchemaReader r;
    RunConfig c;
    r.only(doc, "", {"scenario", "mode", "seed", "output", "solver", "params", "regraduate", "emit"});
    if (!doc.is_object()) throw ConfigError(r.problems);

    if (!doc.contains("scenario")) {
        r.problems.push_back("scenario: required (a shipped scenario name or an inline object)");
    } else if (doc.at("scenario").is_string()) {
        try {
            c.scenario = scenarios::by_name(doc.at("scenario").get<std::string>());
        } catch (const Error& e) {
            r.problems.push_back(std::string("scenario: ") + e.what());
        }
    } else if (doc.at("scenario").is_object()) {
        c.scenario = detail::read_inline_scenario(r, doc.at("scenario"), c.warnings);
    } else {
        r.problems.push_back("scenario: expected a name or an object");
    }

    if (!r.get(doc, "", "mode", c.mode)) {
        if (!doc.contains("mode")) r.problems.push_back("mode: required");
    } else if (std::find(run_modes().begin(), run_modes().end(), c.mode) == run_modes().end()) {
        std::string list;
        for (const auto& m : run_modes()) list += (list.empty() ? "" : ", ") + m;
        r.problems.push_back("mode: unknown mode '" + c.mode + "' (expected one of " + list + ")");
    }
    r.get(doc, "", "seed", c.seed);
    r.get(doc, "", "output", c.output);

    if (doc.contains("params")) detail::read_params(r, doc.at("params"), "params", c.scenario, c.warnings);

    if (doc.contains("solver")) {
        const auto& s = doc.at("solver");
        const std::string p = "solver";
        r.only(s, p,
               {"dt", "step_dt", "horizon", "samples", "cells", "walkers", "rho_floor", "fp_cfl", "madelung_stability",
                "energy_tolerance", "norm_tolerance", "wall_fraction", "boundary", "trajectory_walkers"});
        double v = 0.0;
        std::size_t n = 0;
        if (r.get(s, p, "dt", v)) {
            r.positive("solver.dt", v);
            c.solver.dt = v;
        }
        if (r.get(s, p, "step_dt", v)) {
            r.positive("solver.step_dt", v);
            c.scenario.step_dt = v;
        }
        if (r.get(s, p, "horizon", v)) {
            r.positive("solver.horizon", v);
            c.scenario.horizon = v;
        }
        if (r.get(s, p, "samples", n)) {
            if (n == 0) r.problems.push_back("solver.samples: must be positive");
            c.scenario.samples = n;
        }
        std::vector<std::size_t> cells;
        if (r.get(s, p, "cells", cells))
            c.scenario.cells = cells.size() == 1 ? std::vector<std::size_t>(c.scenario.dims(), cells[0]) : cells;
        if (r.get(s, p, "walkers", n)) {
            if (n == 0) r.problems.push_back("solver.walkers: must be positive");
            c.scenario.walkers = n;
        }
        if (r.get(s, p, "rho_floor", c.solver.rho_floor)) r.positive("solver.rho_floor", c.solver.rho_floor);
        if (r.get(s, p, "fp_cfl", c.solver.fp_cfl)) r.positive("solver.fp_cfl", c.solver.fp_cfl);
        if (r.get(s, p, "madelung_stability", c.solver.madelung_stability))
            r.positive("solver.madelung_stability", c.solver.madelung_stability);
        if (r.get(s, p, "energy_tolerance", c.solver.energy_tolerance))
            r.positive("solver.energy_tolerance", c.solver.energy_tolerance);
        if (r.get(s, p, "norm_tolerance", c.solver.norm_tolerance))
            r.positive("solver.norm_tolerance", c.solver.norm_tolerance);
        if (r.get(s, p, "wall_fraction", c.solver.wall_fraction))
            r.positive("solver.wall_fraction", c.solver.wall_fraction);
        if (r.get(s, p, "boundary", c.solver.boundary) && c.solver.boundary != "reflect" &&
            c.solver.boundary != "absorb")
            r.problems.push_back("solver.boundary: expected reflect or absorb");
        r.get(s, p, "trajectory_walkers", c.solver.trajectory_walkers);
    }

    if (doc.contains("regraduate")) {
        const auto& g = doc.at("regraduate");
        if (g.is_string() && g.get<std::string>() == "linearize") {
            if (c.scenario.mu.empty() || !(c.scenario.mu[0] > 0.0))
                r.problems.push_back("regraduate: linearize needs a positive osmotic mass");
            else
                c.regraduate = std::sqrt(c.scenario.m[0] / c.scenario.mu[0]);
        } else if (g.is_number() && g.get<double>() > 0.0 && std::isfinite(g.get<double>())) {
            c.regraduate = g.get<double>();
        } else {
            r.problems.push_back("regraduate: expected a positive number or \"linearize\"");
        }
    }

    if (doc.contains("emit")) {
        const auto& e = doc.at("emit");
        r.only(e, "emit", {"snapshots", "trajectories", "observables", "plot_data"});
        r.get(e, "emit", "snapshots", c.emit.snapshots);
        r.get(e, "emit", "trajectories", c.emit.trajectories);
        r.get(e, "emit", "observables", c.emit.observables);
        r.get(e, "emit", "plot_data", c.emit.plot_data);
    }

    if (r.problems.empty()) {
        try {
            (void)build_scenario(c.scenario);
        } catch (const Error& e) {
            r.problems.push_back(std::string("scenario '") + c.scenario.name + "': " + e.what());
        }
    }
    if (!r.problems.empty()) throw ConfigError(r.problems);

    bool nonlinear = false;
    for (std::size_t n = 0; n < c.scenario.particles; ++n) nonlinear |= c.scenario.mu[n] != c.scenario.m[n];
    if (nonlinear && !c.regraduate && c.mode != "nonlinear")
        c.warnings.push_back("osmotic mass mu differs from m and no regraduation is requested: the nonlinear (1 - mu/m) "
                             "term of the wave equation is active" +
                             std::string(c.mode == "schrodinger" ? "; the linear Schrodinger solver ignores it" : ""));
    if (c.regraduate) {
        const double k = *c.regraduate;
        bool still = false;
        for (std::size_t n = 0; n < c.scenario.particles; ++n)
            still |= std::abs(c.scenario.mu[n] * k * k - c.scenario.m[n]) > 1e-12 * c.scenario.m[n];
        if (still) c.warnings.push_back("regraduation leaves mu != m: the nonlinear term stays active");
    }
    return c;
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return parse_config(doc);
}

} // namespace entropic
