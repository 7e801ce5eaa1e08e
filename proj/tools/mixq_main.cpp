#include <chrono>
#include <cmath>
#include <iostream>

#include <CLI11.hpp>

#include "mixq/error.hpp"
#include "mixq/pipeline.hpp"

namespace {

using mixq::PipelineConfig;

// Flags mirror PipelineConfig fields. Precedence: defaults < --config file
// < explicit flags.
struct CommonFlags {
    std::string config_file;
    std::string model_path;
    std::string calib_path;
    std::string output_dir;
    std::uint64_t seed = 0;
    double percentile = 99.999;
    int n_hutchinson = 256;
    std::vector<int> bit_palette;
    std::vector<double> accuracy_targets;
    std::vector<std::string> metrics;
    std::string search = "bisection";
    std::string cost_table = "synthetic";
    double synth_us_per_mac = 0.001;
    long max_evals = 100000;
    std::string hessian_norm = "mean";
    std::string clip = "per_term";
    int trials = 0;
    unsigned workers = 0;
    std::size_t batch_size = 256;

    CLI::App* cmd = nullptr;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    f.cmd = cmd;
    cmd->add_option("--config", f.config_file, "JSON config file; flags override its values");
    cmd->add_option("--model", f.model_path, "model container directory");
    cmd->add_option("--calib", f.calib_path, "calibration container directory");
    cmd->add_option("-o,--output-dir", f.output_dir, "artifact directory");
    cmd->add_option("--seed", f.seed, "RNG seed for all stochastic steps");
    cmd->add_option("--percentile", f.percentile, "activation calibration percentile");
    cmd->add_option("--n-hutchinson", f.n_hutchinson, "Hutchinson probes per layer");
    cmd->add_option("--bit-palette", f.bit_palette, "descending bit widths, e.g. 16 8 4");
    cmd->add_option("--accuracy-targets", f.accuracy_targets,
                    "relative accuracy targets, e.g. 0.99 0.999");
    cmd->add_option("--metric", f.metrics, "sensitivity metric: hessian | interlayer | aug")
        ->allow_extra_args(false);
    cmd->add_option("--search", f.search, "bisection | progressive");
    cmd->add_option("--cost-table", f.cost_table, "cost table CSV path, or 'synthetic'");
    cmd->add_option("--synth-us-per-mac", f.synth_us_per_mac, "synthetic table us per MAC");
    cmd->add_option("--max-evals", f.max_evals, "search evaluation budget");
    cmd->add_option("--hessian-norm", f.hessian_norm, "mean | raw");
    cmd->add_option("--clip", f.clip, "per_term | final_sum");
    cmd->add_option("--trials", f.trials, "error-bar mode: calibration resample count");
    cmd->add_option("--workers", f.workers, "worker threads (0 = hardware)");
    cmd->add_option("--batch-size", f.batch_size, "calibration batch size");
}

bool passed(const CommonFlags& f, const std::string& name) { return f.cmd->count(name) > 0; }

PipelineConfig resolve(const CommonFlags& f) {
    PipelineConfig cfg;
    if (!f.config_file.empty()) mixq::apply_config_file(cfg, f.config_file);
    if (passed(f, "--model")) cfg.model_path = f.model_path;
    if (passed(f, "--calib")) cfg.calib_path = f.calib_path;
    if (passed(f, "--output-dir")) cfg.output_dir = f.output_dir;
    if (passed(f, "--seed")) cfg.seed = f.seed;
    if (passed(f, "--percentile")) cfg.percentile = f.percentile;
    if (passed(f, "--n-hutchinson")) cfg.n_hutchinson = f.n_hutchinson;
    if (passed(f, "--bit-palette")) cfg.bit_palette = f.bit_palette;
    if (passed(f, "--accuracy-targets")) cfg.accuracy_targets = f.accuracy_targets;
    if (passed(f, "--metric")) {
        cfg.metrics.clear();
        for (const auto& name : f.metrics) {
            auto m = mixq::metric_from_name(name);
            if (!m) throw mixq::ConfigError("unknown metric '" + name + "'");
            cfg.metrics.push_back(*m);
        }
    }
    if (passed(f, "--search")) {
        auto k = mixq::search_kind_from_name(f.search);
        if (!k) throw mixq::ConfigError("unknown search kind '" + f.search + "'");
        cfg.search = *k;
    }
    if (passed(f, "--cost-table")) cfg.cost_table = f.cost_table;
    if (passed(f, "--synth-us-per-mac")) cfg.synth_us_per_mac = f.synth_us_per_mac;
    if (passed(f, "--max-evals")) cfg.max_evals = f.max_evals;
    if (passed(f, "--hessian-norm")) {
        if (f.hessian_norm == "mean") cfg.hessian_norm = mixq::HessianNorm::per_param_mean;
        else if (f.hessian_norm == "raw") cfg.hessian_norm = mixq::HessianNorm::raw;
        else throw mixq::ConfigError("--hessian-norm must be 'mean' or 'raw'");
    }
    if (passed(f, "--clip")) {
        if (f.clip == "per_term") cfg.clip = mixq::ClipMode::per_term;
        else if (f.clip == "final_sum") cfg.clip = mixq::ClipMode::final_sum;
        else throw mixq::ConfigError("--clip must be 'per_term' or 'final_sum'");
    }
    if (passed(f, "--trials")) cfg.trials = f.trials;
    if (passed(f, "--workers")) cfg.workers = f.workers;
    if (passed(f, "--batch-size")) cfg.batch_size = f.batch_size;
    return cfg;
}

int run_stage(const CommonFlags& flags, const std::string& command,
              const std::function<mixq::StageOutcome(const PipelineConfig&)>& stage) {
    PipelineConfig cfg = resolve(flags);
    auto t0 = std::chrono::steady_clock::now();
    mixq::StageOutcome outcome = stage(cfg);
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
    for (const auto& w : outcome.warnings) std::cerr << "warning: " << w << "\n";
    mixq::write_run_manifest(cfg, command, outcome, ms);
    for (const auto& a : outcome.artifacts) std::cout << a.string() << "\n";
    if (outcome.budget_exceeded) {
        std::cerr << "warning: evaluation budget exceeded; results are partial\n";
        return 4;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mixed-precision post-training quantization pipeline"};
    app.set_version_flag("--version", mixq::tool_version());
    app.require_subcommand(1);

    CommonFlags analyze_flags, search_flags, quantize_flags, report_flags;
    double quantize_target = std::nan("");
    std::string quantize_metric;

    CLI::App* analyze = app.add_subcommand("analyze", "sensitivity analysis and calibration");
    add_common(analyze, analyze_flags);
    CLI::App* search = app.add_subcommand("search", "bit-width configuration search");
    add_common(search, search_flags);
    CLI::App* quantize = app.add_subcommand("quantize", "materialize a quantized model");
    add_common(quantize, quantize_flags);
    quantize->add_option("--target", quantize_target, "accuracy target of the config to export");
    quantize->add_option("--quantize-metric", quantize_metric,
                         "metric of the config to export (default: first)");
    CLI::App* report = app.add_subcommand("report", "cost/accuracy report and frontier data");
    add_common(report, report_flags);

    CLI::App* costtable = app.add_subcommand("costtable", "cost table utilities");
    costtable->require_subcommand(1);
    CLI::App* gen = costtable->add_subcommand("gen", "generate a synthetic cost table CSV");
    std::string gen_model, gen_out;
    double gen_us_per_mac = 0.001;
    std::vector<int> gen_palette{16, 8, 4};
    gen->add_option("--model", gen_model, "model container directory")->required();
    gen->add_option("--out", gen_out, "output CSV path")->required();
    gen->add_option("--us-per-mac", gen_us_per_mac, "us per multiply-accumulate");
    gen->add_option("--bit-palette", gen_palette, "bit widths to tabulate");

    CLI11_PARSE(app, argc, argv);

    try {
        if (analyze->parsed()) {
            return run_stage(analyze_flags, "analyze", mixq::run_analyze);
        }
        if (search->parsed()) {
            return run_stage(search_flags, "search", mixq::run_search_stage);
        }
        if (quantize->parsed()) {
            return run_stage(quantize_flags, "quantize", [&](const PipelineConfig& cfg) {
                return mixq::run_quantize_stage(cfg, quantize_target, quantize_metric);
            });
        }
        if (report->parsed()) {
            return run_stage(report_flags, "report", mixq::run_report_stage);
        }
        if (costtable->parsed() && gen->parsed()) {
            auto outcome = mixq::run_costtable_gen(gen_model, gen_out, gen_us_per_mac, gen_palette);
            for (const auto& a : outcome.artifacts) std::cout << a.string() << "\n";
            return 0;
        }
    } catch (const mixq::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
