#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "entropic/run.hpp"

using namespace entropic;
namespace fs = std::filesystem;

namespace {

RunConfig parse(const std::string& text) { return parse_config(json::parse(text)); }

std::vector<std::string> problems_of(const std::string& text) {
    try {
        parse(text);
    } catch (const ConfigError& e) {
        return e.problems();
    }
    return {};
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("entropic-test-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int cli(const fs::path& config, const fs::path& out, const std::string& extra = "") {
    const std::string cmd = std::string(ENTROPIC_CLI) + " --config " + config.string() + " --output " + out.string() +
                            " " + extra + " > " + (out.string() + ".log") + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const auto p = dir / "config.json";
    std::ofstream(p) << text;
    return p;
}

} // namespace

TEST(Config, MinimalNamedScenario) {
    const auto c = parse(R"({"scenario": "free-packet-1d", "mode": "madelung"})");
    EXPECT_EQ(c.scenario.name, "free-packet-1d");
    EXPECT_EQ(c.seed, 0u);
    EXPECT_TRUE(c.emit.observables);
    EXPECT_FALSE(c.emit.snapshots);
    EXPECT_TRUE(c.warnings.empty());
}

TEST(Config, InlineScenarioAndOverrides) {
    const auto c = parse(R"({
        "scenario": {"name": "box", "grid": {"lo": -5, "hi": 5, "cells": 128},
                     "params": {"m": 2, "sigma": 1, "eta": 1},
                     "initial": {"center": 0.5, "width": 0.7}},
        "mode": "schrodinger", "seed": 7,
        "solver": {"dt": 0.002, "horizon": 0.5, "samples": 5},
        "emit": {"snapshots": true}})");
    EXPECT_EQ(c.scenario.cells, std::vector<std::size_t>{128});
    EXPECT_DOUBLE_EQ(c.scenario.tau, 2.0);
    EXPECT_DOUBLE_EQ(c.scenario.mu[0], 2.0);
    EXPECT_DOUBLE_EQ(*c.solver.dt, 0.002);
    EXPECT_DOUBLE_EQ(c.scenario.horizon, 0.5);
    EXPECT_TRUE(c.emit.snapshots);
}

TEST(Config, AllProblemsAreReportedTogether) {
    const auto p = problems_of(R"({"scenario": "free-packet-1d", "mode": "warp", "colour": 1,
                                   "solver": {"dt": -1, "speed": 2}})");
    ASSERT_EQ(p.size(), 4u);
    auto has = [&](const std::string& s) {
        return std::any_of(p.begin(), p.end(), [&](const std::string& q) { return q.find(s) != std::string::npos; });
    };
    EXPECT_TRUE(has("colour: unknown key"));
    EXPECT_TRUE(has("solver.speed: unknown key"));
    EXPECT_TRUE(has("mode: unknown mode 'warp'"));
    EXPECT_TRUE(has("solver.dt: must be positive"));
}

TEST(Config, NegativeSigmaNamesTheField) {
    const auto p = problems_of(R"({"scenario": "free-packet-1d", "mode": "madelung", "params": {"sigma": -1}})");
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p[0], "params.sigma: must be positive");
}

TEST(Config, InconsistentParameters) {
    const auto p =
        problems_of(R"({"scenario": "free-packet-1d", "mode": "madelung", "params": {"sigma": 1, "tau": 1, "eta": 2}})");
    ASSERT_EQ(p.size(), 1u);
    EXPECT_NE(p[0].find("inconsistent"), std::string::npos);
    EXPECT_THROW(parse_config(std::string("/nonexistent/config.json")), ConfigError);
}

TEST(Config, OsmoticMassWarningAndLinearize) {
    const auto warned = parse(R"({"scenario": "nonlinear-mu-2m-1d", "mode": "schrodinger"})");
    ASSERT_EQ(warned.warnings.size(), 1u);
    EXPECT_NE(warned.warnings[0].find("ignores"), std::string::npos);
    EXPECT_TRUE(parse(R"({"scenario": "nonlinear-mu-2m-1d", "mode": "nonlinear"})").warnings.empty());
    const auto lin = parse(R"({"scenario": "nonlinear-mu-2m-1d", "mode": "madelung", "regraduate": "linearize"})");
    ASSERT_TRUE(lin.regraduate.has_value());
    EXPECT_DOUBLE_EQ(*lin.regraduate, std::sqrt(0.5));
    EXPECT_TRUE(lin.warnings.empty());
    EXPECT_FALSE(problems_of(R"({"scenario": "free-packet-1d", "mode": "madelung", "regraduate": -2})").empty());
}

TEST(Config, SerialisedConfigParsesBack) {
    const auto c = parse(R"({"scenario": "two-particle-1d", "mode": "ensemble", "seed": 3,
                            "solver": {"boundary": "absorb"}, "emit": {"trajectories": true}})");
    auto j = to_json(c);
    const auto back = parse_config(j);
    EXPECT_EQ(to_json(back).dump(), j.dump());
}

TEST(Cli, ThreadCountLeavesObservablesUnchanged) {
    const auto dir = scratch("threads");
    const auto cfg = write_config(dir, R"({"scenario": "phi-gradient-1d", "mode": "ensemble", "seed": 5,
                                          "solver": {"walkers": 20000}})");
    ASSERT_EQ(cli(cfg, dir / "one", "--threads 1"), 0) << slurp(dir / "one.log");
    ASSERT_EQ(cli(cfg, dir / "many", "--threads 8"), 0) << slurp(dir / "many.log");
    const auto a = slurp(dir / "one" / "observables.csv");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(dir / "many" / "observables.csv"));
    ASSERT_EQ(cli(cfg, dir / "other", "--seed-override 6"), 0);
    EXPECT_NE(a, slurp(dir / "other" / "observables.csv"));
    const auto manifest = json::parse(slurp(dir / "other" / "manifest.json"));
    EXPECT_EQ(manifest["seed"], 6);
    EXPECT_EQ(manifest["status"], "ok");
}

TEST(Cli, CompareWritesDistances) {
    const auto dir = scratch("compare");
    const auto cfg = write_config(dir, R"({"scenario": "free-packet-1d", "mode": "compare",
                                          "solver": {"horizon": 0.5, "samples": 2}})");
    ASSERT_EQ(cli(cfg, dir / "out"), 0) << slurp(dir / "out.log");
    std::istringstream in(slurp(dir / "out" / "compare.csv"));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "t,l2_madelung_schrodinger,l2_madelung_nonlinear,l2_schrodinger_nonlinear,l2_madelung_oracle,"
                    "l2_schrodinger_oracle");
    int rows = 0;
    while (std::getline(in, line)) {
        const auto cells = csv::split(line);
        ASSERT_EQ(cells.size(), 6u);
        for (std::size_t c = 1; c < cells.size(); ++c) EXPECT_LT(csv::parse(cells[c]), 1e-4) << line;
        ++rows;
    }
    EXPECT_EQ(rows, 3);
}

TEST(Cli, PlotDataIsIdempotent) {
    const auto dir = scratch("plot");
    const auto cfg = write_config(dir, R"({"scenario": "harmonic-ground-1d", "mode": "madelung",
                                          "solver": {"horizon": 0.2, "samples": 2},
                                          "emit": {"snapshots": true, "plot_data": true}})");
    ASSERT_EQ(cli(cfg, dir / "out"), 0) << slurp(dir / "out.log");
    const auto first = slurp(dir / "out" / "plot" / "rho.csv");
    EXPECT_EQ(first.substr(0, first.find('\n')), "t,x,field,value");
    EXPECT_EQ(std::count(first.begin(), first.end(), '\n'), 1 + 3 * 256);
    emit_plot_data(dir / "out");
    EXPECT_EQ(first, slurp(dir / "out" / "plot" / "rho.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / "plot" / "phi.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / "snapshots" / "rho_0002.csv"));
}

TEST(Cli, ConservationBreachExitsWithTwo) {
    const auto dir = scratch("breach");
    const auto cfg = write_config(dir, R"({"scenario": "free-packet-1d", "mode": "madelung",
                                          "solver": {"horizon": 0.2, "samples": 2, "energy_tolerance": 1e-30}})");
    EXPECT_EQ(cli(cfg, dir / "out"), 2);
    const auto manifest = json::parse(slurp(dir / "out" / "manifest.json"));
    EXPECT_EQ(manifest["status"], "conservation_violation");
}

TEST(Cli, ErrorsExitWithOne) {
    const auto dir = scratch("errors");
    EXPECT_EQ(cli(write_config(dir, R"({"scenario": "free-packet-1d"})"), dir / "bad"), 1);
    EXPECT_NE(slurp(dir / "bad.log").find("mode: required"), std::string::npos);
    EXPECT_EQ(cli(write_config(dir, "{not json"), dir / "garbled"), 1);
    EXPECT_EQ(cli(dir / "missing.json", dir / "missing"), 1);
    const auto cfg = write_config(dir, R"({"scenario": "free-packet-1d", "mode": "madelung", "solver": {"dt": 1.0}})");
    EXPECT_EQ(cli(cfg, dir / "unstable"), 1);
    const auto manifest = json::parse(slurp(dir / "unstable" / "manifest.json"));
    EXPECT_EQ(manifest["error"]["type"], "config");
}
