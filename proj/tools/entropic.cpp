#include <iostream>

#include <CLI11.hpp>

#include "entropic/run.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Entropic dynamics simulator: ensembles, Fokker-Planck, Madelung and Schrodinger solvers"};
    std::string config;
    std::string output;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    app.add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    auto* out_opt = app.add_option("--output", output, "output directory (overrides the config)");
    auto* seed_opt = app.add_option("--seed-override", seed, "seed (overrides the config)");
    app.add_option("--threads", threads, "worker threads; results do not depend on it")
        ->check(CLI::Range(1u, 1024u));
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    entropic::RunConfig cfg;
    try {
        cfg = entropic::parse_config(config);
    } catch (const entropic::ConfigError& e) {
        for (const auto& p : e.problems()) std::cerr << "config error: " << p << '\n';
        return entropic::exit_error;
    }
    entropic::RunOptions opts;
    opts.threads = threads;
    if (*seed_opt) opts.seed_override = seed;
    if (*out_opt) opts.output = output;
    return entropic::run(cfg, opts);
}
