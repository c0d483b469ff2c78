#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "entropic/config.hpp"
#include "entropic/validation.hpp"

namespace entropic {

namespace fs = std::filesystem;

struct RunOptions {
    unsigned threads = 1;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> output;
    std::ostream* log = &std::cerr;
};

enum ExitCode : int { exit_ok = 0, exit_error = 1, exit_conservation = 2 };

namespace detail {

inline std::size_t steps_for(double interval, double max_dt) {
    return static_cast<std::size_t>(std::max(1.0, std::ceil(interval / max_dt * (1.0 - 1e-12))));
}

inline void write_observables_header(std::ostream& os, std::size_t D) {
    os << "t,norm,E";
    for (std::size_t a = 1; a <= D; ++a) os << ",mean_" << a;
    for (std::size_t a = 1; a <= D; ++a) os << ",var_" << a;
    os << ",boundary_mass,min_rho\n";
}

inline void write_observables_row(std::ostream& os, const Observables& o) {
    os << csv::format(o.t) << ',' << csv::format(o.norm) << ',' << csv::format(o.energy);
    for (double v : o.mean) os << ',' << csv::format(v);
    for (double v : o.variance) os << ',' << csv::format(v);
    os << ',' << csv::format(o.boundary_mass) << ',' << csv::format(o.min_rho) << '\n';
}

/// State shared by every mode while a run is in flight.
class RunContext {
public:
    RunContext(const RunConfig& cfg, const Scenario& sc, fs::path dir) : cfg_(cfg), sc_(sc), dir_(std::move(dir)) {
        if (cfg_.emit.observables) {
            obs_.open(dir_ / "observables.csv", std::ios::binary);
            if (!obs_) throw UsageError("cannot write " + (dir_ / "observables.csv").string());
            write_observables_header(obs_, sc_.grid.dims());
        }
        if (cfg_.emit.snapshots) fs::create_directories(dir_ / "snapshots");
    }

    void sample(const Observables& o, std::initializer_list<std::pair<const char*, const RealField*>> fields) {
        times_.push_back(o.t);
        if (cfg_.emit.observables) write_observables_row(obs_, o);
        if (!cfg_.emit.snapshots) return;
        json entry;
        entry["index"] = times_.size() - 1;
        entry["t"] = o.t;
        json files;
        for (const auto& [name, field] : fields) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%s_%04zu.csv", name, times_.size() - 1);
            const std::string rel = std::string("snapshots/") + buf;
            csv::write_grid((dir_ / rel).string(), *field);
            files[name] = rel;
        }
        entry["files"] = files;
        snapshots_.push_back(entry);
    }

    void check(std::string name, double value, double limit, std::string detail = {}) {
        checks_.push_back({std::move(name), value, limit, value <= limit, std::move(detail)});
    }
    void add(CheckResult c) { checks_.push_back(std::move(c)); }

    const std::vector<double>& times() const { return times_; }
    const std::vector<CheckResult>& checks() const { return checks_; }
    const json& snapshots() const { return snapshots_; }
    json extra = json::object();

private:
    const RunConfig& cfg_;
    const Scenario& sc_;
    fs::path dir_;
    std::ofstream obs_;
    std::vector<double> times_;
    std::vector<CheckResult> checks_;
    json snapshots_ = json::array();
};

inline RealField phase_of(const WaveFunction& w) {
    RealField out(w.psi.spec);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::arg(w.psi[i]);
    return out;
}

inline TransitionKernel scenario_kernel(const Scenario& sc) {
    return TransitionKernel(sc.space(), sc.phi, StepParams::from_tau_dt(sc.params.tau, sc.spec.step_dt));
}

inline void run_ensemble(const RunConfig& cfg, const Scenario& sc, RunContext& ctx, const fs::path& dir,
                         unsigned threads) {
    auto kernel = scenario_kernel(sc);
    const auto times = sc.sample_times();
    const double interval = times[1] - times[0];
    const auto per = static_cast<std::size_t>(std::llround(interval / sc.spec.step_dt));
    if (per == 0 || std::abs(static_cast<double>(per) * sc.spec.step_dt - interval) > 1e-9 * interval)
        throw ConfigError("ensemble mode needs horizon/samples to be a multiple of step_dt");
    auto ens = init_ensemble(sc.initial_density(), sc.spec.walkers, cfg.seed, sc.grid);
    EvolveOptions opts;
    opts.threads = threads;
    opts.domain = sc.grid;
    opts.policy = cfg.solver.boundary == "absorb" ? BoundaryPolicy::absorb : BoundaryPolicy::reflect;
    std::ofstream traj;
    std::optional<TrajectoryWriter> writer;
    if (cfg.emit.trajectories) {
        traj.open(dir / "trajectories.csv", std::ios::binary);
        writer.emplace(traj, sc.grid.dims(), cfg.solver.trajectory_walkers);
        (*writer)(ens);
        opts.observer = [&](const Ensemble& e) { (*writer)(e); };
    }
    EvolveReport rep;
    std::size_t reflections = 0;
    for (std::size_t s = 0; s < times.size(); ++s) {
        if (s > 0) {
            rep = evolve(ens, kernel, per, opts);
            reflections += rep.reflections;
        }
        ens.t = times[s];
        const auto rho = estimate_density(ens, sc.grid, DensityMethod::histogram());
        ctx.sample(density_observables(rho, ens.t), {{"rho", &rho}});
    }
    const double frac = static_cast<double>(rep.walkers_touched) / static_cast<double>(ens.size());
    ctx.check("wall_contact_fraction", frac, cfg.solver.wall_fraction, "walkers that ever met a wall");
    ctx.extra["walkers"] = ens.size();
    ctx.extra["walkers_alive"] = ens.alive_count();
    ctx.extra["reflections"] = reflections;
    ctx.extra["quality_warnings"] = kernel.quality_warnings();
}

inline void run_fokker_planck(const RunConfig& cfg, const Scenario& sc, RunContext& ctx) {
    auto kernel = scenario_kernel(sc);
    const auto b = drift_field(kernel, sc.grid);
    const auto times = sc.sample_times();
    const double limit = fokker_planck_dt_limit(sc.grid, sc.params, cfg.solver.fp_cfl);
    const double want = cfg.solver.dt.value_or(limit);
    const std::size_t per = steps_for(times[1] - times[0], want);
    const double dt = (times[1] - times[0]) / static_cast<double>(per);
    RealField rho = sc.initial.rho;
    double worst = 0.0;
    for (std::size_t s = 0; s < times.size(); ++s) {
        if (s > 0) {
            for (std::size_t k = 0; k < per; ++k) {
                const double before = integrate(rho);
                rho = fokker_planck_step(rho, b, sc.params, dt, cfg.solver.fp_cfl);
                worst = std::max(worst, std::abs(integrate(rho) - before));
            }
        }
        ctx.sample(density_observables(rho, times[s]), {{"rho", &rho}});
    }
    ctx.check("fp_mass_drift_per_step", worst, 1e-12);
    ctx.extra["dt"] = dt;
}

struct MadelungRun {
    MadelungSolver solver;
    double dt;
    std::size_t per;
};

inline MadelungRun make_madelung(const RunConfig& cfg, const Scenario& sc, const FieldState& init,
                                 const ModelParams& params) {
    MadelungOptions mo;
    mo.rho_floor = cfg.solver.rho_floor;
    mo.stability = cfg.solver.madelung_stability;
    MadelungSolver solver(init, params, mo);
    const auto times = sc.sample_times();
    const std::size_t per = steps_for(times[1] - times[0], cfg.solver.dt.value_or(solver.dt_limit()));
    return {std::move(solver), (times[1] - times[0]) / static_cast<double>(per), per};
}

inline void run_madelung(const RunConfig& cfg, const Scenario& sc, const FieldState& init, const ModelParams& params,
                         RunContext& ctx) {
    auto run = make_madelung(cfg, sc, init, params);
    const auto times = sc.sample_times();
    double e0 = 0.0, worst = 0.0;
    for (std::size_t s = 0; s < times.size(); ++s) {
        if (s > 0)
            for (std::size_t k = 0; k < run.per; ++k) run.solver.step(run.dt);
        auto st = run.solver.state();
        st.t = times[s];
        auto o = observables(st, params);
        if (s == 0) e0 = o.energy;
        worst = std::max(worst, std::abs(o.energy - e0) / (std::abs(e0) > 0.0 ? std::abs(e0) : 1.0));
        ctx.sample(o, {{"rho", &st.rho}, {"phi", &st.phi}});
    }
    ctx.check("madelung_energy_drift", worst, cfg.solver.energy_tolerance, "relative, over sample times");
    ctx.check("madelung_renormalisation", run.solver.max_renorm_deviation(), 1e-6, "largest |factor - 1| per step");
    ctx.extra["dt"] = run.dt;
}

inline void run_wave(const RunConfig& cfg, const Scenario& sc, const FieldState& init, const ModelParams& params,
                     bool nonlinear, RunContext& ctx) {
    const auto times = sc.sample_times();
    double max_dt = cfg.solver.dt.value_or(1e-3);
    if (nonlinear && !cfg.solver.dt) max_dt = std::min(max_dt, nonlinear_dt_limit(sc.grid, params));
    const std::size_t per = steps_for(times[1] - times[0], max_dt);
    const double dt = (times[1] - times[0]) / static_cast<double>(per);
    auto w = wavefunction_from_fields(init);
    const auto V = params.potential_on(sc.grid);
    double n0 = 0.0, worst = 0.0;
    for (std::size_t s = 0; s < times.size(); ++s) {
        if (s > 0)
            for (std::size_t k = 0; k < per; ++k) {
                if (nonlinear) nonlinear_schrodinger_step(w, params, dt, &V, cfg.solver.rho_floor);
                else schrodinger_step(w, params, dt, &V);
            }
        w.t = times[s];
        const auto o = observables(w, params);
        if (s == 0) n0 = o.norm;
        worst = std::max(worst, std::abs(o.norm - n0));
        const auto rho = density_of(w);
        const auto ph = phase_of(w);
        ctx.sample(o, {{"rho", &rho}, {"phase", &ph}});
    }
    ctx.check(nonlinear ? "nonlinear_norm_drift" : "schrodinger_norm_drift", worst, cfg.solver.norm_tolerance);
    ctx.extra["dt"] = dt;
}

/// Madelung, linear and nonlinear wave solvers side by side; writes compare.csv.
inline void run_compare(const RunConfig& cfg, const Scenario& sc, const FieldState& init, const ModelParams& params,
                        RunContext& ctx, const fs::path& dir) {
    auto mad = make_madelung(cfg, sc, init, params);
    const auto times = sc.sample_times();
    double max_dt = cfg.solver.dt.value_or(1e-3);
    if (!params.linear()) max_dt = std::min(max_dt, nonlinear_dt_limit(sc.grid, params));
    const std::size_t per = steps_for(times[1] - times[0], max_dt);
    const double dt = (times[1] - times[0]) / static_cast<double>(per);
    auto lin = wavefunction_from_fields(init);
    auto nl = lin;
    const auto V = params.potential_on(sc.grid);
    std::ofstream out(dir / "compare.csv", std::ios::binary);
    out << "t,l2_madelung_schrodinger,l2_madelung_nonlinear,l2_schrodinger_nonlinear,l2_madelung_oracle,"
           "l2_schrodinger_oracle\n";
    double e0 = 0.0, worst_e = 0.0, n0 = 0.0, worst_n = 0.0;
    for (std::size_t s = 0; s < times.size(); ++s) {
        if (s > 0) {
            for (std::size_t k = 0; k < mad.per; ++k) mad.solver.step(mad.dt);
            for (std::size_t k = 0; k < per; ++k) {
                schrodinger_step(lin, params, dt, &V);
                nonlinear_schrodinger_step(nl, params, dt, &V, cfg.solver.rho_floor);
            }
        }
        auto st = mad.solver.state();
        st.t = lin.t = nl.t = times[s];
        const auto r_lin = density_of(lin), r_nl = density_of(nl);
        const double nan = std::numeric_limits<double>::quiet_NaN();
        double om = nan, os = nan;
        if (auto o = sc.oracle(times[s])) {
            om = l2_distance(st.rho, o->rho);
            os = l2_distance(r_lin, o->rho);
        }
        out << csv::format(times[s]) << ',' << csv::format(l2_distance(st.rho, r_lin)) << ','
            << csv::format(l2_distance(st.rho, r_nl)) << ',' << csv::format(l2_distance(r_lin, r_nl)) << ','
            << csv::format(om) << ',' << csv::format(os) << '\n';
        auto o = observables(st, params);
        if (s == 0) {
            e0 = o.energy;
            n0 = integrate(r_lin);
        }
        worst_e = std::max(worst_e, std::abs(o.energy - e0) / (std::abs(e0) > 0.0 ? std::abs(e0) : 1.0));
        worst_n = std::max(worst_n, std::abs(integrate(r_lin) - n0));
        ctx.sample(o, {{"rho", &st.rho}, {"phi", &st.phi}});
    }
    ctx.check("madelung_energy_drift", worst_e, cfg.solver.energy_tolerance, "relative, over sample times");
    ctx.check("schrodinger_norm_drift", worst_n, cfg.solver.norm_tolerance);
    ctx.extra["dt_madelung"] = mad.dt;
    ctx.extra["dt_wave"] = dt;
}

inline void run_validate(const RunConfig& cfg, RunContext& ctx, const fs::path& dir, unsigned threads,
                         std::ostream& log) {
    ctx.add(check_metric_quadrature(cfg.seed));
    for (auto& c : check_me_maximizer()) ctx.add(c);
    ctx.add(check_backward_drift(cfg.seed, 1000000, threads));
    std::ofstream out(dir / "validate.csv", std::ios::binary);
    out << "check,value,limit,pass\n";
    log << std::left << std::setw(26) << "check" << std::setw(24) << "value" << std::setw(10) << "limit"
        << "result\n";
    for (const auto& c : ctx.checks()) {
        out << c.name << ',' << csv::format(c.value) << ',' << csv::format(c.limit) << ',' << (c.pass ? 1 : 0) << '\n';
        log << std::left << std::setw(26) << c.name << std::setw(24) << csv::format(c.value) << std::setw(10)
            << csv::format(c.limit) << (c.pass ? "PASS" : "FAIL") << "  " << c.detail << '\n';
    }
}

inline json checks_json(const std::vector<CheckResult>& checks) {
    json arr = json::array();
    for (const auto& c : checks) {
        json j;
        j["name"] = c.name;
        j["value"] = c.value;
        j["limit"] = c.limit;
        j["pass"] = c.pass;
        if (!c.detail.empty()) j["detail"] = c.detail;
        arr.push_back(j);
    }
    return arr;
}

inline void write_json(const fs::path& p, const json& j) {
    std::ofstream out(p, std::ios::binary);
    out << j.dump(2) << '\n';
}

} // namespace detail

/// Rewrites observables and snapshots of a finished run as long-format CSV
/// (t, x | x_1..x_D, field, value) under <dir>/plot/.
inline std::vector<fs::path> emit_plot_data(const fs::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw UsageError("no manifest.json in " + dir.string());
    const json manifest = json::parse(mf);
    fs::create_directories(dir / "plot");
    std::vector<fs::path> written;
    const std::size_t D = manifest.at("grid").at("cells").size();
    auto x_header = [&](std::ostream& os) {
        os << "t,";
        if (D == 1) os << "x";
        else
            for (std::size_t a = 1; a <= D; ++a) os << (a > 1 ? "," : "") << "x_" << a;
        os << ",field,value\n";
    };
    if (manifest.at("emit").at("observables").get<bool>()) {
        std::ifstream in(dir / "observables.csv");
        if (!in) throw UsageError("observables.csv missing in " + dir.string());
        std::string line;
        std::getline(in, line);
        const auto names = csv::split(line);
        const fs::path p = dir / "plot" / "observables.csv";
        std::ofstream out(p, std::ios::binary);
        x_header(out);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto cells = csv::split(line);
            for (std::size_t c = 1; c < cells.size(); ++c) {
                out << cells[0] << ',';
                for (std::size_t a = 1; a < D; ++a) out << ',';
                out << ',' << names[c] << ',' << cells[c] << '\n';
            }
        }
        written.push_back(p);
    }
    const auto& snaps = manifest.at("snapshots");
    if (manifest.at("emit").at("snapshots").get<bool>() && snaps.empty())
        throw UsageError("manifest lists no snapshots although snapshots were requested");
    std::map<std::string, std::unique_ptr<std::ofstream>> outs;
    for (const auto& s : snaps) {
        const double t = s.at("t").get<double>();
        for (auto it = s.at("files").begin(); it != s.at("files").end(); ++it) {
            const fs::path src = dir / it.value().get<std::string>();
            if (!fs::exists(src)) throw UsageError("snapshot file missing: " + src.string());
            auto& os = outs[it.key()];
            if (!os) {
                const fs::path p = dir / "plot" / (it.key() + ".csv");
                os = std::make_unique<std::ofstream>(p, std::ios::binary);
                x_header(*os);
                written.push_back(p);
            }
            const auto f = csv::read_grid(src.string());
            std::vector<double> x(D);
            for (std::size_t i = 0; i < f.size(); ++i) {
                f.spec.center(i, x);
                *os << csv::format(t);
                for (double v : x) *os << ',' << csv::format(v);
                *os << ',' << it.key() << ',' << csv::format(f[i]) << '\n';
            }
        }
    }
    return written;
}

/// Runs one configuration end to end. Exit code 0 on success, 2 when a conservation
/// contract is broken, 1 on any other error; the manifest records which.
inline int run(RunConfig cfg, const RunOptions& opts = {}) {
    std::ostream& log = opts.log ? *opts.log : std::cerr;
    if (opts.seed_override) cfg.seed = *opts.seed_override;
    if (opts.output) cfg.output = *opts.output;
    const fs::path dir(cfg.output);
    fs::create_directories(dir);
    for (const auto& w : cfg.warnings) log << "warning: " << w << '\n';

    json manifest;
    manifest["version"] = version;
    manifest["mode"] = cfg.mode;
    manifest["seed"] = cfg.seed;
    manifest["config"] = to_json(cfg);
    manifest["warnings"] = cfg.warnings;
    int code = exit_ok;
    std::optional<detail::RunContext> ctx;
    try {
        Scenario sc = build_scenario(cfg.scenario);
        ModelParams params = sc.params;
        FieldState init = sc.initial;
        if (cfg.regraduate) {
            params = regraduate(params, *cfg.regraduate);
            init = regraduate(init, *cfg.regraduate);
        }
        manifest["grid"] = {{"lo", cfg.scenario.lo}, {"hi", cfg.scenario.hi}, {"cells", cfg.scenario.cells},
                            {"boundary", to_string(sc.grid.boundary())}};
        manifest["params"] = {{"m", params.m}, {"mu", params.mu}, {"sigma", params.sigma},
                              {"eta", params.eta}, {"tau", params.tau}};
        ctx.emplace(cfg, sc, dir);
        const auto& m = cfg.mode;
        if (m == "ensemble") detail::run_ensemble(cfg, sc, *ctx, dir, opts.threads);
        else if (m == "fokker-planck") detail::run_fokker_planck(cfg, sc, *ctx);
        else if (m == "madelung") detail::run_madelung(cfg, sc, init, params, *ctx);
        else if (m == "schrodinger") detail::run_wave(cfg, sc, init, params, false, *ctx);
        else if (m == "nonlinear") detail::run_wave(cfg, sc, init, params, true, *ctx);
        else if (m == "compare") detail::run_compare(cfg, sc, init, params, *ctx, dir);
        else if (m == "validate") detail::run_validate(cfg, *ctx, dir, opts.threads, log);
        else throw UsageError("unknown mode " + m);
        bool ok = true;
        for (const auto& c : ctx->checks()) ok = ok && c.pass;
        manifest["status"] = ok ? "ok" : "conservation_violation";
        code = ok ? exit_ok : exit_conservation;
    } catch (const ConservationError& e) {
        manifest["status"] = "conservation_violation";
        manifest["error"] = {{"type", "conservation"}, {"message", e.what()}};
        code = exit_conservation;
    } catch (const std::exception& e) {
        std::string type = "error";
        if (dynamic_cast<const ConfigError*>(&e)) type = "config";
        else if (dynamic_cast<const SolverError*>(&e)) type = "solver";
        else if (dynamic_cast<const DomainError*>(&e)) type = "domain";
        else if (dynamic_cast<const NumericalError*>(&e)) type = "numerical";
        else if (dynamic_cast<const UsageError*>(&e)) type = "usage";
        manifest["status"] = "error";
        manifest["error"] = {{"type", type}, {"message", e.what()}};
        code = exit_error;
    }
    if (ctx) {
        manifest["times"] = ctx->times();
        manifest["conservation"] = detail::checks_json(ctx->checks());
        manifest["snapshots"] = ctx->snapshots();
        manifest["diagnostics"] = ctx->extra;
    } else {
        manifest["times"] = json::array();
        manifest["conservation"] = json::array();
        manifest["snapshots"] = json::array();
    }
    json artifacts = json::array();
    if (cfg.emit.observables) artifacts.push_back("observables.csv");
    if (cfg.mode == "compare") artifacts.push_back("compare.csv");
    if (cfg.mode == "validate") artifacts.push_back("validate.csv");
    if (cfg.mode == "ensemble" && cfg.emit.trajectories) artifacts.push_back("trajectories.csv");
    manifest["artifacts"] = artifacts;
    manifest["emit"] = {{"snapshots", cfg.emit.snapshots}, {"observables", cfg.emit.observables}};
    ctx.reset();
    detail::write_json(dir / "manifest.json", manifest);
    if (manifest.contains("error")) log << "error: " << manifest["error"]["message"].get<std::string>() << '\n';
    for (const auto& c : manifest["conservation"])
        if (!c["pass"].get<bool>())
            log << "conservation check failed: " << c["name"].get<std::string>() << " = "
                << csv::format(c["value"].get<double>()) << " > " << csv::format(c["limit"].get<double>()) << '\n';
    if (cfg.emit.plot_data && code != exit_error) {
        try {
            emit_plot_data(dir);
        } catch (const std::exception& e) {
            log << "error: plot data: " << e.what() << '\n';
            code = exit_error;
        }
    }
    return code;
}

} // namespace entropic
