#pragma once

// Config-driven experiment runner behind the `qexodus` command line tool.
//
// A config is one strict JSON object:
//   {"schema": 1, "kind": "chain_certify" | "chain_limits" | "chain_bounds" | "diffusion",
//    "name": "...", "seed": 42, "model": {...} or "relative/path.json", "params": {...}}
// See README.md for the keys each kind accepts.

#include "qexodus/serialize.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qexodus {

inline constexpr std::string_view kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

enum class ExperimentKind { ChainCertify, ChainLimits, ChainBounds, Diffusion };

std::string_view to_string(ExperimentKind kind);

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::ChainCertify;
    std::string name;
    std::optional<std::uint64_t> seed;
    Json model;   // inline document after resolving file references; null when absent
    Json params;  // every key present, defaults filled in
};

struct LoadResult {
    std::optional<ExperimentConfig> config;
    std::vector<std::string> errors;  // every problem found, not just the first

    bool ok() const noexcept { return config.has_value(); }
};

// `base_dir` resolves model file references.
LoadResult parse_config(std::string_view text, const std::filesystem::path& base_dir);
LoadResult load_config(const std::filesystem::path& path);

// Normalized form; parse_config(to_json(c).dump()) yields c again.
Json to_json(const ExperimentConfig& config);

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct RunReport {
    Json config;
    std::string config_hash;  // SHA-256 of the normalized config
    Json results = Json::object();
    std::vector<Check> checks;
    std::vector<std::string> errors;
    std::map<std::string, std::string> series;  // id -> CSV text
    std::vector<std::pair<std::string, double>> timings;  // seconds, kept out of report.json

    bool passed() const;
    Json to_json() const;
    std::string dump() const;
};

struct RunOptions {
    unsigned threads = 1;
    std::ostream* log = nullptr;  // progress lines when set
};

RunReport run(const ExperimentConfig& config, const RunOptions& opts = {});

// Writes <out_dir>/<which>.csv.  Throws UnknownSeries.
void emit_plot_data(const RunReport& report, const std::string& which, const std::filesystem::path& out_dir);

// report.json, timings.json and every series; returns the process exit code.
int write_outputs(const RunReport& report, const std::filesystem::path& out_dir);

std::string sha256_hex(std::string_view data);

}  // namespace qexodus
