// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include "entropic/run.hpp"

using namespace entropic;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

unsigned threads() { return std::max(1u, std::min(8u, std::thread::hardware_concurrency())); }

std::size_t steps_for(double T, double max_dt) { return static_cast<std::size_t>(std::ceil(T / max_dt - 1e-9)); }

void advance(MadelungSolver& s, double T, double dt_cap = INFINITY) {
    const std::size_t n = steps_for(T, std::min(s.dt_limit(), dt_cap));
    for (std::size_t k = 0; k < n; ++k) s.step(T / static_cast<double>(n));
}

void advance(WaveFunction& w, const ModelParams& p, double T, double max_dt, bool nonlinear) {
    const std::size_t n = steps_for(T, max_dt);
    const auto V = p.potential_on(w.psi.spec);
    for (std::size_t k = 0; k < n; ++k) {
        if (nonlinear) nonlinear_schrodinger_step(w, p, T / static_cast<double>(n), &V);
        else schrodinger_step(w, p, T / static_cast<double>(n), &V);
    }
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

Outcome a1() {
    const auto c = check_metric_quadrature(2024, 20, 1e-6);
    return {c.pass, "worst relative error " + fmt(c.value) + " over 20 cases (limit 1e-6)"};
}

Outcome a2() {
    const auto c = check_me_maximizer(401, 100.0);
    return {c[0].pass && c[1].pass,
            "sup deviation " + fmt(c[0].value) + " (limit 1e-6), alpha relative error " + fmt(c[1].value) + " (limit 1e-4)"};
}

Outcome a3() {
    std::vector<double> la, ld, lw;
    for (double alpha : {1e2, 1e4, 1e6}) {
        const TransitionKernel k(ConfigurationSpace(1, 1, 1.0), phi::exponential({0.5}, 1.0),
                                 StepParams::from_alpha_tau(alpha, 1.0));
        const std::vector<double> x{0.2};
        const auto m = k.step_moments(x, k.step_grid(x, 256, 8.0));
        la.push_back(std::log(alpha));
        ld.push_back(std::log(std::abs(m.mean[0])));
        lw.push_back(0.5 * std::log(m.covariance[0]));
    }
    const double sd = slope(la, ld), sw = slope(la, lw);
    return {std::abs(sd + 1.0) <= 0.05 && std::abs(sw + 0.5) <= 0.05,
            "drift slope " + fmt(sd) + ", fluctuation slope " + fmt(sw) + " (targets -1, -0.5 +/- 0.05)"};
}

Outcome a4() {
    const auto c = check_backward_drift(77, 1000000, threads(), 0.95);
    return {c.pass, fmt(100 * c.value) + "% of cells within 3 SE (" + c.detail + ", need 95%)"};
}

Outcome a5() {
    const auto sc = build_scenario(scenarios::phi_gradient_1d());
    const TransitionKernel k(sc.space(), sc.phi, StepParams::from_tau_dt(sc.params.tau, sc.spec.step_dt));
    const auto b = drift_field(k, sc.grid);
    auto rho = sc.initial.rho;
    const double T = 1.0;
    const std::size_t n = steps_for(T, fokker_planck_dt_limit(sc.grid, sc.params));
    for (std::size_t s = 0; s < n; ++s) rho = fokker_planck_step(rho, b, sc.params, T / static_cast<double>(n));
    auto ens = init_ensemble(sc.initial_density(), 100000, 31, sc.grid);
    EvolveOptions opts;
    opts.domain = sc.grid;
    opts.threads = threads();
    evolve(ens, k, static_cast<std::size_t>(std::llround(T / sc.spec.step_dt)), opts);
    const auto hist = estimate_density(ens, sc.grid);
    const double l1 = l1_distance(coarsen(rho, 8), coarsen(hist, 8));
    return {l1 <= 0.02, "L1 " + fmt(l1) + " on 32 bins at t = 1, 1e5 walkers (limit 0.02)"};
}

Outcome a6() {
    const auto sc = build_scenario(scenarios::free_packet_1d());
    MadelungSolver mad(sc.initial, sc.params);
    auto lin = wavefunction_from_fields(sc.initial);
    auto nl = lin;
    const double T = 2.0;
    advance(mad, T);
    advance(lin, sc.params, T, 1e-3, false);
    advance(nl, sc.params, T, 1e-3, true);
    const auto rm = mad.state().rho, rl = density_of(lin), rn = density_of(nl);
    const double d = std::max({l2_distance(rm, rl), l2_distance(rm, rn), l2_distance(rl, rn)});
    const FreePacket fp{0.0, 2.0, 0.25, 1.0, 1.0};
    double width_err = 0;
    for (const auto* r : {&rm, &rl, &rn})
        width_err = std::max(width_err, std::abs(std::sqrt(density_observables(*r, T).variance[0]) / fp.width(T) - 1.0));
    return {d <= 1e-4 && width_err <= 5e-3,
            "max pairwise L2 " + fmt(d) + " (limit 1e-4), width error " + fmt(100 * width_err) + "% (limit 0.5%)"};
}

Outcome a7() {
    std::ostringstream quiet;
    bool ok = true;
    std::string worst_e, worst_n;
    double we = 0, wn = 0;
    const auto base = fs::temp_directory_path() / "entropic-acceptance-a7";
    for (const auto& spec : scenarios::all()) {
        for (const char* mode : {"madelung", "schrodinger"}) {
            RunConfig cfg;
            cfg.scenario = spec;
            cfg.mode = mode;
            RunOptions o;
            o.output = (base / (spec.name + "-" + mode)).string();
            o.log = &quiet;
            const int code = run(cfg, o);
            std::ifstream in(fs::path(*o.output) / "manifest.json");
            const auto manifest = json::parse(in);
            for (const auto& c : manifest["conservation"]) {
                const double v = c["value"].get<double>();
                if (c["name"] == "madelung_energy_drift" && v >= we) {
                    we = v;
                    worst_e = spec.name;
                }
                if (c["name"] == "schrodinger_norm_drift" && v >= wn) {
                    wn = v;
                    worst_n = spec.name;
                }
            }
            if (code != 0) {
                ok = false;
                std::cout << "  A7 " << spec.name << " " << mode << ": exit " << code << '\n';
            }
        }
    }
    fs::remove_all(base);
    return {ok && we <= 1e-5 && wn <= 1e-10, "worst energy drift " + fmt(we) + " (" + worst_e + ", limit 1e-5), worst norm drift " +
                                                 fmt(wn) + " (" + worst_n + ", limit 1e-10), 7 scenarios"};
}

Outcome a8() {
    const auto g = build_scenario(scenarios::harmonic_ground_1d());
    MadelungSolver s(g.initial, g.params);
    advance(s, two_pi);
    double dev = 0;
    const auto r = s.state().rho;
    for (std::size_t i = 0; i < r.size(); ++i) dev = std::max(dev, std::abs(r[i] - g.initial.rho[i]));
    const auto c = build_scenario(scenarios::harmonic_coherent_1d());
    auto w = wavefunction_from_fields(c.initial);
    double worst = 0;
    const auto times = c.sample_times();
    for (std::size_t k = 1; k < times.size(); ++k) {
        advance(w, c.params, times[k] - times[k - 1], 1e-3, false);
        const double mean = density_observables(density_of(w), times[k]).mean[0];
        worst = std::max(worst, std::abs(mean - 2.0 * std::cos(times[k])) / 2.0);
    }
    return {dev <= 1e-6 && worst <= 0.01, "ground-state max |drho| over one period " + fmt(dev) +
                                              " (limit 1e-6), coherent centre error " + fmt(100 * worst) +
                                              "% of x0 over 3 periods (limit 1%)"};
}

Outcome a9() {
    auto spec = scenarios::free_packet_1d();
    spec.mu = {4.0};
    const auto sc = build_scenario(spec);
    const double kappa = linearizing_kappa(sc.params);
    const auto [rp, rs] = regraduate(sc.params, sc.initial, kappa);
    MadelungSolver a(sc.initial, sc.params), b(rs, rp);
    const double dt = std::min(a.dt_limit(), b.dt_limit());
    double worst = 0;
    for (int k = 0; k < 4; ++k) {
        const std::size_t n = steps_for(0.5, dt);
        for (std::size_t s = 0; s < n; ++s) {
            a.step(0.5 / static_cast<double>(n));
            b.step(0.5 / static_cast<double>(n));
        }
        const auto ra = a.state().rho, rb = b.state().rho;
        for (std::size_t i = 0; i < ra.size(); ++i) worst = std::max(worst, std::abs(ra[i] - rb[i]));
    }
    return {worst <= 1e-8 && rp.linear(), "kappa " + fmt(kappa) + ", eta' " + fmt(rp.eta) + ", mu' " + fmt(rp.mu[0]) +
                                               ", max |rho - rho'| to t = 2: " + fmt(worst) + " (limit 1e-8)"};
}

Outcome a10() {
    auto spec = scenarios::nonlinear_mu_2m_1d();
    const auto sc = build_scenario(spec);
    spec.mu = {1.0};
    const auto matched = build_scenario(spec);
    auto a = wavefunction_from_fields(sc.initial);
    auto b = wavefunction_from_fields(matched.initial);
    advance(a, sc.params, 1.0, nonlinear_dt_limit(sc.grid, sc.params), true);
    advance(b, matched.params, 1.0, 1e-3, true);
    const auto exact = analytic_free_packet(1.0, {0.0, 2.0, 0.25, 1.0, 1.0}, sc.grid).rho;
    const double da = l2_distance(density_of(a), exact), db = l2_distance(density_of(b), exact);
    return {da >= 10.0 * db, "L2 to linear oracle: mu = 2m " + fmt(da) + ", mu = m " + fmt(db) + ", ratio " +
                                 fmt(da / db) + " (need >= 10)"};
}

Outcome a11() {
    const ConfigurationSpace space(1, 1, 1.0);
    const TransitionKernel k(space, phi::exponential({0.4}, 1.0), StepParams::from_tau_dt(1.0, 1e-3));
    const GridSpec domain({{-8.0, 8.0, 256}});
    auto rho0 = ScalarField::separable({[](double x) { return std::exp(-0.5 * x * x); }});
    auto ens = init_ensemble(rho0, 1000000, 91, domain);
    TransitionPairs pairs;
    EvolveOptions opts;
    opts.pairs = &pairs;
    opts.threads = threads();
    evolve(ens, k, 1, opts);
    const GridSpec cells({{-4.0, 4.0, 40}});
    const auto rep = arrow_of_time_check(empirical_drifts(pairs, cells), estimate_density(ens, cells), space, 1.0);
    return {rep.pass_fraction() >= 0.95, fmt(100 * rep.pass_fraction()) + "% of " + std::to_string(rep.cells_checked) +
                                             " populated cells within 3 SE (need 95%)"};
}

Outcome a12() {
    const GridSpec g({{-6.0, 6.0, 256}});
    std::vector<ClassicalLimitSample> samples;
    for (double eta : {1.0, 0.5, 0.25, 0.125}) {
        auto p = ModelParams::natural();
        p.eta = eta;
        p.tau = 1.0 / eta;
        p.potential = potential_field({"harmonic", 1.0, 0.0, 0.0}, {1.0});
        FieldState init{sample(g, [](std::span<const double> x) { return std::exp(-0.5 * x[0] * x[0]) / std::sqrt(two_pi); }),
                        sample(g, [eta](std::span<const double> x) { return 0.3 * x[0] / eta; }), 0.0};
        MadelungSolver s(init, p, MadelungOptions{0.25, 1e-6, 1e-12, 0.0});
        const double h = 0.5 * s.dt_limit();
        s.step(h);
        auto before = s.state();
        s.step(h);
        auto at = s.state();
        s.step(h);
        samples.push_back({p, before, at, s.state()});
    }
    const auto rep = classical_limit_check(samples);
    return {std::abs(rep.slope - 2.0) <= 0.1, "fitted slope " + fmt(rep.slope) + " over eta in {1, 1/2, 1/4, 1/8} (2 +/- 0.1)"};
}

Outcome a13() {
    const auto dir = fs::temp_directory_path() / "entropic-acceptance-a13";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "config.json") << R"({"scenario": "phi-gradient-1d", "mode": "ensemble", "seed": 13})";
    auto go = [&](const char* name, int t) {
        const std::string cmd = std::string(ENTROPIC_CLI) + " --config " + (dir / "config.json").string() + " --output " +
                                (dir / name).string() + " --threads " + std::to_string(t) + " > /dev/null 2>&1";
        return std::system(cmd.c_str());
    };
    const int c1 = go("t1", 1), c8 = go("t8", 8);
    auto slurp = [&](const char* name) {
        std::ifstream in(dir / name / "observables.csv", std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const auto a = slurp("t1"), b = slurp("t8");
    fs::remove_all(dir);
    const bool same = !a.empty() && a == b;
    return {c1 == 0 && c8 == 0 && same, std::string(same ? "byte-identical" : "different") +
                                            " observables.csv at --threads 1 and 8 (" + std::to_string(a.size()) + " bytes)"};
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4},   {"A5", a5},   {"A6", a6},  {"A7", a7},
        {"A8", a8}, {"A9", a9}, {"A10", a10}, {"A11", a11}, {"A12", a12}, {"A13", a13}};
    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << name << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  [" << fmt(secs) << " s]"
                  << std::endl;
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
