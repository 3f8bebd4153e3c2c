#pragma once

#include "hetdim/abs_lorenz.hpp"
#include "hetdim/serialization.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hetdim {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitNumeric = 1, kExitInput = 2 };

enum class Experiment {
    forge_tangency,
    period2_sweep,
    hetdim_symmetric,
    hetdim_general,
    cone_battery,
    leaf_fit,
    c3prime_scan,
    abs_orbits,
};
std::string to_string(Experiment e);

struct ScheduleEntry {
    int k = 0;
    int m = 0;
};

/// Period-2 grid: every pair (k, m) drawn from `ks` with k > m, at every s target.
struct SweepGrid {
    std::vector<int> ks{12, 14, 16, 18, 20, 22, 24};
    std::vector<double> s_targets{-0.9, 0.0, 0.9};
    int branch = 1;
};

struct ExperimentConfig {
    ModelSpec model;
    GlobalMapCoeffs coeffs;
    std::optional<GlobalMapCoeffs> coeffs2;
    std::vector<Experiment> experiments;
    std::vector<ScheduleEntry> schedule;
    double s_target = 0.0;
    int branch = 1;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "hetdim_out";
    int jobs = 0;  ///< 0 means one per logical core

    std::vector<int> forge_ks{12, 14, 16, 18, 20, 22, 24};
    SweepGrid sweep;
    std::vector<int> leaf_ks{8, 10, 12, 14, 16, 18, 20};
    double leaf_half_width = 0.05;
    std::vector<double> c3_alpha{0.5};
    std::vector<double> c3_lambda{1.0};
    AbsConfig abs;
    int abs_orbit_count = 10000;
    int abs_steps = 100;
    int abs_export = 4;

    Json source;  ///< the config as written, echoed into the manifest
};

/// Validates a parsed config; errors carry the offending JSON pointer.
ExperimentConfig config_from_json(const Json& j);

/// Reads and validates a config file; errors carry "file:line:col (pointer)".
ExperimentConfig load_config(const std::filesystem::path& path);

struct RunOverrides {
    std::optional<std::filesystem::path> output_dir;
    std::optional<int> jobs;
};

struct SummaryCheck {
    std::string experiment;
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string note;  ///< error text for items that failed to solve
};

struct RunSummary {
    bool pass = false;
    std::vector<SummaryCheck> checks;
    std::filesystem::path output_dir;
    std::vector<std::string> outputs;  ///< relative paths, sorted
};

/// Runs the configured experiments and writes manifest.json, summary.json,
/// certificates/ and per-experiment CSV/JSON files.
RunSummary run_experiments(const ExperimentConfig& config, const RunOverrides& overrides = {});

/// Load, run and report; returns the process exit code.
int run_experiment(const std::filesystem::path& config_path, const RunOverrides& overrides, std::ostream& out,
                   std::ostream& err);

struct ReplayReport {
    bool pass = false;
    Json report;
};

/// Re-evaluates every residual of a certificate document against a freshly built model.
ReplayReport replay_certificate(const Json& certificate);
int replay_certificate_file(const std::filesystem::path& path, std::ostream& out, std::ostream& err);

/// Standing-condition report of the configured model and coefficients.
Json check_model(const ExperimentConfig& config);
int check_model_file(const std::filesystem::path& config_path, std::ostream& out, std::ostream& err);

}  // namespace hetdim
