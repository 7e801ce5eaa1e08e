#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mixq/search.hpp"

namespace mixq {

struct PipelineConfig {
    std::filesystem::path model_path;
    std::filesystem::path calib_path;
    std::filesystem::path output_dir;
    std::uint64_t seed = 0;
    double percentile = 99.999;
    int n_hutchinson = 256;
    std::vector<int> bit_palette{16, 8, 4};
    std::vector<double> accuracy_targets{0.99, 0.999, 0.9999};
    std::vector<Metric> metrics{Metric::aug};
    SearchKind search = SearchKind::bisection;
    std::string cost_table = "synthetic";  // CSV path, or synthetic generation
    double synth_us_per_mac = 0.001;
    long max_evals = 100000;
    HessianNorm hessian_norm = HessianNorm::per_param_mean;
    ClipMode clip = ClipMode::per_term;
    int trials = 0;  // error-bar mode: search reruns over calibration resamples
    unsigned workers = 0;
    std::size_t batch_size = 256;

    void validate() const;
};

// Fixed artifact names under output_dir.
namespace artifact {
inline constexpr const char* scales = "scales.json";
inline constexpr const char* sensitivity = "sensitivity.csv";
inline constexpr const char* degradation = "degradation_matrix.csv";
inline constexpr const char* final_config = "final_config.json";
inline constexpr const char* search_trace = "search_trace.json";
inline constexpr const char* report_json = "report.json";
inline constexpr const char* report_md = "report.md";
inline constexpr const char* frontier = "frontier.csv";
inline constexpr const char* trials = "trials.json";
inline constexpr const char* run_manifest = "run_manifest.json";
inline constexpr const char* quantized_model_dir = "quantized_model";
}  // namespace artifact

struct StageOutcome {
    std::vector<std::filesystem::path> artifacts;
    bool budget_exceeded = false;
    std::vector<std::string> warnings;
};

// Stages are resumable: each loads upstream artifacts when present and
// computes (and persists) them when missing. Every artifact is a pure
// function of (model, calibration data, config, seed).
StageOutcome run_analyze(const PipelineConfig& cfg);
StageOutcome run_search_stage(const PipelineConfig& cfg);
// target/metric select one searched config; NaN target = first configured.
StageOutcome run_quantize_stage(const PipelineConfig& cfg, double target, const std::string& metric);
StageOutcome run_report_stage(const PipelineConfig& cfg);
StageOutcome run_costtable_gen(const std::filesystem::path& model_path,
                               const std::filesystem::path& out_csv, double us_per_mac,
                               const std::vector<int>& palette);

// run_manifest.json: config snapshot, seed, artifact hashes, stage timings,
// tool version. Timings are wall-clock and thus the one non-reproducible
// field; determinism checks compare the artifact-hash map instead.
void write_run_manifest(const PipelineConfig& cfg, const std::string& command,
                        const StageOutcome& outcome, double elapsed_ms);

// Overlays fields from a JSON config file; explicit CLI flags are applied
// on top by the caller.
void apply_config_file(PipelineConfig& cfg, const std::filesystem::path& file);

const char* tool_version();

}  // namespace mixq
