#include "qexodus/runner.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

int print_errors(const std::vector<std::string>& errors) {
    for (const auto& e : errors) std::cerr << e << '\n';
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Markov chains and diffusions conditioned to avoid a moving boundary"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(qexodus::kVersion));

    std::string config;
    std::string out;
    unsigned threads = 1;
    bool verbose = false;

    auto* run = app.add_subcommand("run", "Run an experiment and write its report");
    run->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out, "Output directory")->required();
    run->add_option("--threads", threads, "Worker threads; results do not depend on it")->check(CLI::Range(1u, 1024u));
    run->add_flag("--verbose", verbose, "Progress on stderr");

    auto* validate = app.add_subcommand("validate", "Check a config without running it");
    validate->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    const auto loaded = qexodus::load_config(config);
    if (!loaded.ok()) return print_errors(loaded.errors);

    if (*validate) {
        std::cout << "ok: " << qexodus::to_string(loaded.config->kind) << " '" << loaded.config->name << "'\n";
        return 0;
    }

    qexodus::RunOptions opts;
    opts.threads = threads;
    if (verbose) opts.log = &std::cerr;
    try {
        const auto report = qexodus::run(*loaded.config, opts);
        const int code = qexodus::write_outputs(report, out);
        for (const auto& c : report.checks)
            std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << "  " << c.detail << '\n';
        for (const auto& e : report.errors) std::cout << "ERROR " << e << '\n';
        std::cout << (code == 0 ? "all checks passed" : "some checks failed") << " -> " << out << "/report.json\n";
        return code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
