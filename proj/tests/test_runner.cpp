#include "qexodus/runner.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace qexodus;
namespace fs = std::filesystem;

namespace {

const char* kChainA = R"({
  "states": ["a", "b", "∂"],
  "kernel": [[0.5, 0.3, 0.2], [0.4, 0.4, 0.2], [0.0, 0.0, 1.0]],
  "schedule": {"kind": "constant", "sets": {"0": ["∂"]}}
})";

std::string config(const std::string& kind, const std::string& extra) {
    return R"({"schema": 1, "kind": ")" + kind + R"(", "model": )" + kChainA + extra + "}";
}

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
    for (const auto& e : errors)
        if (e.find(needle) != std::string::npos) return true;
    return false;
}

const Check& find_check(const RunReport& r, const std::string& name) {
    for (const auto& c : r.checks)
        if (c.name == name) return c;
    FAIL("missing check " << name);
    throw 0;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("qexodus_test_" + name);
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

}  // namespace

TEST_CASE("minimal chain_certify config round-trips") {
    const auto a = parse_config(config("chain_certify", ""), ".");
    REQUIRE(a.ok());
    const auto text = to_json(*a.config).dump();
    const auto b = parse_config(text, ".");
    REQUIRE(b.ok());
    CHECK(to_json(*b.config).dump() == text);
    CHECK(b.config->params["t0_max"] == 3);
}

TEST_CASE("every validation error is reported") {
    const auto r = parse_config(R"({"schema": 1, "kind": "diffusion", "extra": true,
        "model": {"drift": {"kind": "zero"}, "boundary": {"kind": "constant"}, "dt": -1},
        "params": {"x0": 1, "paths": 0, "probe": {"y": 2, "t": 1, "xs": [1, 3]}}})",
                                ".");
    CHECK_FALSE(r.ok());
    CHECK(mentions(r.errors, "/seed"));
    CHECK(mentions(r.errors, "/extra: unknown field"));
    CHECK(mentions(r.errors, "/model/dt"));
    CHECK(mentions(r.errors, "/params/paths"));
    CHECK(mentions(r.errors, "/params/probe/xs"));
    CHECK(r.errors.size() >= 5);

    const auto nested = parse_config(config("chain_certify", R"(, "params": {"expect": {"t9": 1}})"), ".");
    CHECK(mentions(nested.errors, "/params/expect/t9: unknown field"));
    const auto version = parse_config(R"({"schema": 2, "kind": "chain_certify", "model": {}})", ".");
    CHECK(mentions(version.errors, "/schema"));
}

TEST_CASE("parse errors carry line and column") {
    const auto r = parse_config("{\n  \"schema\": 1,\n  \"kind\": ,\n}", ".");
    REQUIRE(r.errors.size() == 1);
    CHECK(r.errors[0].find("config:3:11") == 0);
}

TEST_CASE("model files resolve relative to the config") {
    const auto dir = scratch("model_file");
    std::ofstream(dir / "chain.json") << kChainA;
    std::ofstream(dir / "run.json") << R"({"schema": 1, "kind": "chain_certify", "model": "chain.json"})";
    const auto r = load_config(dir / "run.json");
    REQUIRE(r.ok());
    CHECK(r.config->model["states"].size() == 3);
    std::ofstream(dir / "missing.json") << R"({"schema": 1, "kind": "chain_certify", "model": "nope.json"})";
    CHECK(mentions(load_config(dir / "missing.json").errors, "/model"));
}

TEST_CASE("CHAIN-A certify report") {
    const auto cfg = parse_config(config("chain_certify", R"(, "params": {"expect": {"t0": 1, "c1": 0.875, "c2": 1}})"), ".");
    REQUIRE(cfg.ok());
    const auto report = run(*cfg.config);
    CHECK(report.passed());
    CHECK(report.results["certificate"]["c1"].get<double>() == 0.875);
    CHECK(report.results["certificate"]["c2"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(find_check(report, "expect_c1").pass);
}

TEST_CASE("CHAIN-A bounds report has no failures") {
    const auto cfg = parse_config(config("chain_bounds", ""), ".");
    REQUIRE(cfg.ok());
    const auto report = run(*cfg.config);
    CHECK(report.passed());
    CHECK(report.results["bounds"]["theorem_failures"] == 0);
    CHECK(report.results["bounds"]["merging_failures"] == 0);
    CHECK(report.series.at("bounds").rfind("seed,s,t,T,x,lhs,rhs,margin,pass\n", 0) == 0);
}

TEST_CASE("limits report and plot data") {
    const auto cfg = parse_config(config("chain_limits", R"(, "params": {"mu": {"b": 1.0}, "t_max": 60})"), ".");
    REQUIRE(cfg.ok());
    const auto report = run(*cfg.config);
    CHECK(report.passed());
    CHECK(report.results["qsd"]["rho"].get<double>() == doctest::Approx(0.8).epsilon(1e-13));
    const auto dir = scratch("plot");
    emit_plot_data(report, "quasi_limiting", dir);
    const auto csv = slurp(dir / "quasi_limiting.csv");
    CHECK(csv.rfind("t,tv\n0,", 0) == 0);
    CHECK(csv.find('\r') == std::string::npos);
    try {
        emit_plot_data(report, "nope", dir);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::UnknownSeries);
    }
    CHECK_FALSE(parse_config(config("chain_limits", R"(, "params": {"mu": {"∂": 1.0}})"), ".").ok());
}

TEST_CASE("failing checks and module errors give a nonzero exit") {
    const auto cfg = parse_config(config("chain_certify", R"(, "params": {"expect": {"c1": 0.5}})"), ".");
    REQUIRE(cfg.ok());
    const auto report = run(*cfg.config);
    CHECK_FALSE(report.passed());
    CHECK(write_outputs(report, scratch("fail")) == 1);

    const auto diff = parse_config(R"({"schema": 1, "kind": "diffusion", "seed": 1,
        "model": {"drift": {"kind": "zero"}, "boundary": {"kind": "constant", "level": 0}, "dt": 0.01, "horizon": 1},
        "params": {"x0": 0.01, "paths": 200, "histogram": {"t": 1, "edges": [0, 10]}}})",
                                   ".");
    REQUIRE(diff.ok());
    const auto bad = run(*diff.config);
    CHECK_FALSE(bad.passed());
    REQUIRE(bad.errors.size() == 1);
    CHECK(bad.errors[0].find("histogram: too-few-survivors") == 0);
}

TEST_CASE("diffusion reports are reproducible across threads") {
    const auto cfg = parse_config(R"({"schema": 1, "kind": "diffusion", "seed": 42,
        "model": {"drift": {"kind": "zero"}, "boundary": {"kind": "constant", "level": 0}, "dt": 0.01, "horizon": 1},
        "params": {"x0": 1, "paths": 3000, "survival_oracle": true,
                   "histogram": {"t": 1, "edges": [0, 1, 2, 3, 100]}, "dump_paths": {"count": 2, "thin": 10}}})",
                                  ".");
    REQUIRE(cfg.ok());
    RunOptions one;
    RunOptions four;
    four.threads = 4;
    const auto a = run(*cfg.config, one);
    const auto b = run(*cfg.config, four);
    const auto c = run(*cfg.config, one);
    CHECK(a.dump() == b.dump());
    CHECK(a.dump() == c.dump());
    CHECK(a.series == b.series);
    CHECK(a.config_hash == sha256_hex(a.config.dump()));
}

TEST_CASE("sha256") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
