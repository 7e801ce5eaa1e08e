#include "mixq/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mixq/container.hpp"
#include "mixq/detail/io.hpp"
#include "mixq/engine.hpp"
#include "mixq/error.hpp"
#include "mixq/rng.hpp"

#include <json.hpp>

namespace mixq {

namespace {

using Json = nlohmann::ordered_json;

std::string hash_hex(std::uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

int highest_quantized_bits(const std::vector<int>& palette) {
    int best = 0;
    for (int b : palette) {
        if (b < 16) best = std::max(best, b);
    }
    return best == 0 ? 16 : best;
}

Json parse_json_file(const std::filesystem::path& path) {
    try {
        return Json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("cannot parse '" + path.string() + "': " + e.what());
    }
}

struct LoadedInputs {
    ModelGraph model;
    CalibrationSet calib;
};

LoadedInputs load_inputs(const PipelineConfig& cfg) {
    LoadedInputs in;
    in.model = load_model(cfg.model_path);
    in.calib = load_calibration(cfg.calib_path, cfg.batch_size);
    return in;
}

CostTable load_cost_table(const PipelineConfig& cfg, const ModelGraph& model,
                          std::vector<std::string>* warnings) {
    CostTable table = cfg.cost_table == "synthetic"
                          ? synth_cost_table(model, cfg.synth_us_per_mac, cfg.bit_palette)
                          : CostTable::from_csv(cfg.cost_table);
    for (auto& w : table.monotonicity_violations()) {
        if (warnings) warnings->push_back(std::move(w));
    }
    return table;
}

Json config_to_json(const PipelineConfig& cfg) {
    Json j;
    j["model_path"] = cfg.model_path.string();
    j["calib_path"] = cfg.calib_path.string();
    j["output_dir"] = cfg.output_dir.string();
    j["seed"] = cfg.seed;
    j["percentile"] = cfg.percentile;
    j["n_hutchinson"] = cfg.n_hutchinson;
    j["bit_palette"] = cfg.bit_palette;
    j["accuracy_targets"] = cfg.accuracy_targets;
    Json metrics = Json::array();
    for (Metric m : cfg.metrics) metrics.push_back(metric_name(m));
    j["metrics"] = std::move(metrics);
    j["search"] = search_kind_name(cfg.search);
    j["cost_table"] = cfg.cost_table;
    j["synth_us_per_mac"] = cfg.synth_us_per_mac;
    j["max_evals"] = cfg.max_evals;
    j["hessian_norm"] = cfg.hessian_norm == HessianNorm::per_param_mean ? "mean" : "raw";
    j["clip"] = cfg.clip == ClipMode::per_term ? "per_term" : "final_sum";
    j["trials"] = cfg.trials;
    j["batch_size"] = cfg.batch_size;
    return j;
}

// One searched configuration with everything the report stage needs.
struct SearchedConfig {
    double target = 0.0;
    Metric metric = Metric::aug;
    SearchKind search = SearchKind::bisection;
    QuantConfig config;
    SearchTrace trace;
};

Json config_layers_json(const QuantConfig& config) {
    Json layers;
    for (const auto& [id, wb] : config.weight_bits) {
        Json e;
        e["weight_bits"] = wb;
        e["act_bits"] = config.act_bits_for(id);
        layers[id] = std::move(e);
    }
    return layers;
}

QuantConfig config_layers_from_json(const Json& layers) {
    QuantConfig c;
    for (const auto& [id, e] : layers.items()) {
        c.weight_bits[id] = e.at("weight_bits").get<int>();
        c.act_bits[id] = e.at("act_bits").get<int>();
    }
    return c;
}

}  // namespace

const char* tool_version() { return "0.1.0"; }

void PipelineConfig::validate() const {
    for (double t : accuracy_targets) {
        if (!(t > 0.0) || t > 1.0) throw ConfigError("accuracy targets must lie in (0, 1]");
    }
    if (accuracy_targets.empty()) throw ConfigError("no accuracy targets configured");
    if (metrics.empty()) throw ConfigError("no sensitivity metrics configured");
    if (bit_palette.size() < 2) throw ConfigError("bit palette needs at least 2 widths");
    for (std::size_t i = 1; i < bit_palette.size(); ++i) {
        if (bit_palette[i] >= bit_palette[i - 1]) {
            throw ConfigError("bit palette must be strictly descending");
        }
    }
    if (!(percentile > 0.0) || percentile > 100.0) {
        throw ConfigError("percentile must lie in (0, 100]");
    }
    if (n_hutchinson < 1) throw ConfigError("n_hutchinson must be >= 1");
    if (max_evals < 1) throw ConfigError("max_evals must be >= 1");
    if (trials < 0) throw ConfigError("trials must be >= 0");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (output_dir.empty()) throw ConfigError("output_dir is required");
}

StageOutcome run_analyze(const PipelineConfig& cfg) {
    cfg.validate();
    StageOutcome outcome;
    LoadedInputs in = load_inputs(cfg);

    ScaleSet scales = compute_scales(in.model, in.calib, cfg.percentile,
                                     highest_quantized_bits(cfg.bit_palette));

    SensitivityParams params;
    params.n_hutchinson = cfg.n_hutchinson;
    params.seed = cfg.seed;
    params.norm = cfg.hessian_norm;
    params.clip = cfg.clip;
    params.metric = cfg.metrics.front();
    params.palette = cfg.bit_palette;
    params.workers = cfg.workers;
    SensitivityResult result = analyze_sensitivity(in.model, in.calib, scales, params);

    std::filesystem::create_directories(cfg.output_dir);
    save_scales(scales, in.model, cfg.output_dir / artifact::scales);
    write_sensitivity_csv(result.report, cfg.output_dir / artifact::sensitivity);
    write_degradation_csv(result.degradation, cfg.output_dir / artifact::degradation);
    outcome.artifacts = {cfg.output_dir / artifact::scales, cfg.output_dir / artifact::sensitivity,
                         cfg.output_dir / artifact::degradation};
    return outcome;
}

namespace {

std::vector<SearchedConfig> execute_searches(const PipelineConfig& cfg, const LoadedInputs& in,
                                             const ScaleSet& scales,
                                             const SensitivityReport& report,
                                             const CalibrationSet& calib,
                                             StageOutcome& outcome) {
    std::vector<SearchedConfig> searched;
    for (Metric metric : cfg.metrics) {
        std::vector<std::string> ordering =
            sensitivity_order(report.layer_ids, report.scores_for(metric));
        for (double target : cfg.accuracy_targets) {
            SearchSpec spec;
            spec.accuracy_target = target;
            spec.bit_palette = cfg.bit_palette;
            spec.metric = metric;
            spec.max_evals = cfg.max_evals;
            CalibConfigEvaluator evaluator(in.model, calib, scales);
            SearchResult res = run_search(cfg.search, ordering, spec, evaluator);
            if (res.trace.budget_exceeded) outcome.budget_exceeded = true;
            if (res.config == QuantConfig::uniform(in.model, cfg.bit_palette[0])) {
                std::ostringstream os;
                os << "target " << detail::fmt_double(target) << " (" << metric_name(metric)
                   << "): no quantized prefix met the target; returning the all-baseline config";
                outcome.warnings.push_back(os.str());
            }
            searched.push_back({target, metric, cfg.search, std::move(res.config),
                                std::move(res.trace)});
        }
    }
    return searched;
}

void write_search_artifacts(const PipelineConfig& cfg, const std::vector<SearchedConfig>& searched,
                            StageOutcome& outcome) {
    Json final_doc;
    Json trace_doc;
    final_doc["baseline_accuracy"] =
        searched.empty() ? 0.0 : searched.front().trace.baseline_accuracy;
    trace_doc["baseline_accuracy"] = final_doc["baseline_accuracy"];
    Json configs = Json::array();
    Json traces = Json::array();
    for (const auto& s : searched) {
        Json c;
        c["target"] = s.target;
        c["metric"] = metric_name(s.metric);
        c["search"] = search_kind_name(s.search);
        c["accuracy"] = s.trace.final_accuracy;
        c["feasible"] =
            s.trace.final_accuracy >= s.target * s.trace.baseline_accuracy;
        bool all_baseline = true;
        for (const auto& [id, wb] : s.config.weight_bits) {
            if (wb != cfg.bit_palette[0]) {
                all_baseline = false;
                break;
            }
        }
        c["all_baseline"] = all_baseline;
        c["budget_exceeded"] = s.trace.budget_exceeded;
        c["layers"] = config_layers_json(s.config);
        configs.push_back(std::move(c));

        Json t;
        t["target"] = s.target;
        t["metric"] = metric_name(s.metric);
        t["search"] = search_kind_name(s.search);
        t["final_accuracy"] = s.trace.final_accuracy;
        t["revalidated_shrink"] = s.trace.revalidated_shrink;
        t["budget_exceeded"] = s.trace.budget_exceeded;
        Json epl;
        for (const auto& [level, count] : s.trace.evals_per_level) {
            epl[std::to_string(level)] = count;
        }
        t["evals_per_level"] = std::move(epl);
        Json apx;
        for (const auto& [level, prefix] : s.trace.accepted_prefix) {
            apx[std::to_string(level)] = prefix;
        }
        t["accepted_prefix"] = std::move(apx);
        Json steps = Json::array();
        for (const auto& step : s.trace.steps) {
            Json e;
            e["level"] = step.bit_level;
            e["prefix"] = step.prefix;
            if (!step.layer_id.empty()) e["layer_id"] = step.layer_id;
            e["config_hash"] = hash_hex(step.config_hash);
            e["accuracy"] = step.accuracy;
            e["cached"] = step.cached;
            e["decision"] = step.decision;
            steps.push_back(std::move(e));
        }
        t["steps"] = std::move(steps);
        traces.push_back(std::move(t));
    }
    final_doc["configs"] = std::move(configs);
    trace_doc["traces"] = std::move(traces);
    detail::write_file_atomic(cfg.output_dir / artifact::final_config, final_doc.dump(2) + "\n");
    detail::write_file_atomic(cfg.output_dir / artifact::search_trace, trace_doc.dump(2) + "\n");
    outcome.artifacts.push_back(cfg.output_dir / artifact::final_config);
    outcome.artifacts.push_back(cfg.output_dir / artifact::search_trace);
}

void run_trials(const PipelineConfig& cfg, const LoadedInputs& in, const ScaleSet& scales,
                const SensitivityReport& report, StageOutcome& outcome) {
    CostTable table = load_cost_table(cfg, in.model, &outcome.warnings);
    Batch merged = in.calib.merged();
    const std::size_t n = merged.size();
    const std::size_t d = merged.inputs.cols();

    struct Agg {
        std::vector<double> accuracy;
        std::vector<double> latency_ms;
    };
    std::map<std::string, Agg> agg;

    for (int trial = 0; trial < cfg.trials; ++trial) {
        // Bootstrap resample of the calibration set.
        KeyedRng rng(cfg.seed, "trial-resample", static_cast<std::uint64_t>(trial));
        CalibrationSet resampled;
        std::size_t start = 0;
        while (start < n) {
            std::size_t rows = std::min(cfg.batch_size, n - start);
            Batch b;
            b.inputs = Tensor::zeros({rows, d});
            b.labels.resize(rows);
            for (std::size_t r = 0; r < rows; ++r) {
                std::size_t pick = static_cast<std::size_t>(rng.next_below(n));
                std::copy(merged.inputs.data.begin() + static_cast<std::ptrdiff_t>(pick * d),
                          merged.inputs.data.begin() + static_cast<std::ptrdiff_t>((pick + 1) * d),
                          b.inputs.data.begin() + static_cast<std::ptrdiff_t>(r * d));
                b.labels[r] = merged.labels[pick];
            }
            resampled.batches.push_back(std::move(b));
            start += rows;
        }

        StageOutcome scratch;
        std::vector<SearchedConfig> searched =
            execute_searches(cfg, in, scales, report, resampled, scratch);
        for (const auto& s : searched) {
            std::string key = std::string(metric_name(s.metric)) + "@" +
                              detail::fmt_double(s.target);
            agg[key].accuracy.push_back(s.trace.final_accuracy);
            agg[key].latency_ms.push_back(model_latency_us(in.model, s.config, table) / 1000.0);
        }
    }

    auto mean_std = [](const std::vector<double>& xs) {
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0.0;
        if (xs.size() > 1) {
            for (double x : xs) var += (x - mean) * (x - mean);
            var /= static_cast<double>(xs.size() - 1);
        }
        return std::pair<double, double>(mean, std::sqrt(var));
    };

    Json doc;
    doc["trials"] = cfg.trials;
    doc["note"] = "search reruns over bootstrap resamples of the calibration set; "
                  "scales and sensitivity ordering are held fixed from the main run";
    Json rows = Json::array();
    for (const auto& [key, a] : agg) {
        auto [acc_mean, acc_std] = mean_std(a.accuracy);
        auto [lat_mean, lat_std] = mean_std(a.latency_ms);
        Json r;
        r["config"] = key;
        r["accuracy_mean"] = acc_mean;
        r["accuracy_std"] = acc_std;
        r["latency_ms_mean"] = lat_mean;
        r["latency_ms_std"] = lat_std;
        rows.push_back(std::move(r));
    }
    doc["results"] = std::move(rows);
    detail::write_file_atomic(cfg.output_dir / artifact::trials, doc.dump(2) + "\n");
    outcome.artifacts.push_back(cfg.output_dir / artifact::trials);
}

}  // namespace

StageOutcome run_search_stage(const PipelineConfig& cfg) {
    cfg.validate();
    StageOutcome outcome;
    if (!std::filesystem::exists(cfg.output_dir / artifact::scales) ||
        !std::filesystem::exists(cfg.output_dir / artifact::sensitivity)) {
        StageOutcome analyzed = run_analyze(cfg);
        outcome.artifacts = analyzed.artifacts;
    }
    LoadedInputs in = load_inputs(cfg);
    ScaleSet scales = load_scales(cfg.output_dir / artifact::scales);
    SensitivityReport report = read_sensitivity_csv(cfg.output_dir / artifact::sensitivity);

    std::vector<SearchedConfig> searched =
        execute_searches(cfg, in, scales, report, in.calib, outcome);
    write_search_artifacts(cfg, searched, outcome);
    if (cfg.trials > 0) run_trials(cfg, in, scales, report, outcome);
    return outcome;
}

StageOutcome run_quantize_stage(const PipelineConfig& cfg, double target,
                                const std::string& metric) {
    cfg.validate();
    StageOutcome outcome;
    std::filesystem::path fc = cfg.output_dir / artifact::final_config;
    if (!std::filesystem::exists(fc)) {
        StageOutcome searched = run_search_stage(cfg);
        outcome.artifacts = searched.artifacts;
        outcome.budget_exceeded = searched.budget_exceeded;
    }
    Json doc = parse_json_file(fc);
    const Json* chosen = nullptr;
    for (const auto& c : doc.at("configs")) {
        bool target_ok = std::isnan(target) || c.at("target").get<double>() == target;
        bool metric_ok = metric.empty() || c.at("metric").get<std::string>() == metric;
        if (target_ok && metric_ok) {
            chosen = &c;
            break;
        }
    }
    if (!chosen) {
        throw ConfigError("no searched config matches target/metric selection");
    }
    QuantConfig config = config_layers_from_json(chosen->at("layers"));

    ModelGraph model = load_model(cfg.model_path);
    ScaleSet scales = load_scales(cfg.output_dir / artifact::scales);
    ModelGraph view = apply_config(model, config, scales);

    std::filesystem::path qdir = cfg.output_dir / artifact::quantized_model_dir;
    save_model(view, qdir);
    Json meta;
    meta["target"] = chosen->at("target");
    meta["metric"] = chosen->at("metric");
    meta["accuracy"] = chosen->at("accuracy");
    meta["layers"] = chosen->at("layers");
    meta["note"] = "weights are materialized on the quantized grid; activation quantizers "
                   "are defined by act_bits with scales from scales.json";
    detail::write_file_atomic(qdir / "quant_meta.json", meta.dump(2) + "\n");
    outcome.artifacts.push_back(qdir / "manifest.json");
    outcome.artifacts.push_back(qdir / "weights.bin");
    outcome.artifacts.push_back(qdir / "quant_meta.json");
    return outcome;
}

StageOutcome run_report_stage(const PipelineConfig& cfg) {
    cfg.validate();
    StageOutcome outcome;
    std::filesystem::path fc = cfg.output_dir / artifact::final_config;
    if (!std::filesystem::exists(fc)) {
        throw DataError("missing search artifacts in '" + cfg.output_dir.string() +
                        "'; run the search stage first");
    }
    Json doc = parse_json_file(fc);
    ModelGraph model = load_model(cfg.model_path);
    CostTable table = load_cost_table(cfg, model, &outcome.warnings);

    const double baseline_accuracy = doc.at("baseline_accuracy").get<double>();
    QuantConfig baseline_config = QuantConfig::uniform(model, cfg.bit_palette[0]);
    CostBaseline baseline;
    baseline.accuracy = baseline_accuracy;
    baseline.weight_bits_total = model_weight_bits_total(model, baseline_config);
    baseline.latency_us = model_latency_us(model, baseline_config, table);

    struct Row {
        double target;
        std::string metric;
        std::string search;
        CostReport cost;
        bool on_frontier = false;
    };
    std::vector<Row> rows;
    for (const auto& c : doc.at("configs")) {
        Row row;
        row.target = c.at("target").get<double>();
        row.metric = c.at("metric").get<std::string>();
        row.search = c.at("search").get<std::string>();
        QuantConfig config = config_layers_from_json(c.at("layers"));
        row.cost = build_cost_report(model, config, table, c.at("accuracy").get<double>(),
                                     baseline);
        rows.push_back(std::move(row));
    }

    std::vector<AccuracyLatency> points;
    points.reserve(rows.size());
    for (const auto& r : rows) points.push_back({r.cost.accuracy_abs, r.cost.latency_ms});
    std::vector<AccuracyLatency> frontier = pareto_frontier(points);
    for (auto& r : rows) {
        AccuracyLatency p{r.cost.accuracy_abs, r.cost.latency_ms};
        r.on_frontier = std::find(frontier.begin(), frontier.end(), p) != frontier.end();
    }

    auto precision_summary = [](const std::vector<LayerCostRow>& layers, bool weights) {
        int uniform = layers.empty() ? 16 : (weights ? layers[0].weight_bits : layers[0].act_bits);
        for (const auto& l : layers) {
            int b = weights ? l.weight_bits : l.act_bits;
            if (b != uniform) return std::string("MP");
        }
        return std::to_string(uniform);
    };

    // report.json
    Json rep;
    Json base;
    base["accuracy"] = baseline.accuracy;
    base["size_mb"] = model_size_bytes(model, baseline_config) / 1e6;
    base["latency_ms"] = baseline.latency_us / 1000.0;
    rep["baseline"] = std::move(base);
    Json cfgs = Json::array();
    for (const auto& r : rows) {
        Json e;
        e["target"] = r.target;
        e["metric"] = r.metric;
        e["search"] = r.search;
        e["accuracy_abs"] = r.cost.accuracy_abs;
        e["accuracy_rel"] = r.cost.accuracy_rel;
        e["size_mb"] = r.cost.size_mb;
        e["size_rel"] = r.cost.size_rel;
        e["latency_ms"] = r.cost.latency_ms;
        e["latency_rel"] = r.cost.latency_rel;
        e["precision_w"] = precision_summary(r.cost.layers, true);
        e["precision_a"] = precision_summary(r.cost.layers, false);
        e["on_frontier"] = r.on_frontier;
        Json layers = Json::array();
        for (const auto& l : r.cost.layers) {
            Json le;
            le["layer_id"] = l.layer_id;
            le["weight_bits"] = l.weight_bits;
            le["act_bits"] = l.act_bits;
            le["weight_count"] = l.weight_count;
            le["weight_bytes"] = l.weight_bytes;
            le["latency_us"] = l.latency_us;
            layers.push_back(std::move(le));
        }
        e["layers"] = std::move(layers);
        cfgs.push_back(std::move(e));
    }
    rep["configs"] = std::move(cfgs);
    rep["notes"] = Json::array({
        "bias tensors are kept at the 16-bit baseline width in size accounting",
        "relative size is computed over weight bytes only",
        "latency is a sum of per-kernel table entries; kernel fusion is not modeled",
    });
    detail::write_file_atomic(cfg.output_dir / artifact::report_json, rep.dump(2) + "\n");

    // report.md
    std::ostringstream md;
    md << "# Quantization report\n\n";
    md << "| Config | Accuracy | Relative | Size (MB) | Relative | Latency (ms) | Relative | W | A |\n";
    md << "|---|---|---|---|---|---|---|---|---|\n";
    md << "| baseline | " << detail::fmt_fixed(baseline.accuracy, 4) << " | 100.00% | "
       << detail::fmt_fixed(model_size_bytes(model, baseline_config) / 1e6, 2) << " | 100.00% | "
       << detail::fmt_fixed(baseline.latency_us / 1000.0, 3) << " | 100.00% | 16 | 16 |\n";
    for (const auto& r : rows) {
        md << "| " << r.metric << " " << detail::fmt_double(r.target * 100.0) << "% ("
           << r.search << ") | " << detail::fmt_fixed(r.cost.accuracy_abs, 4) << " | "
           << detail::fmt_fixed(r.cost.accuracy_rel * 100.0, 2) << "% | "
           << detail::fmt_fixed(r.cost.size_mb, 2) << " | "
           << detail::fmt_fixed(r.cost.size_rel * 100.0, 2) << "% | "
           << detail::fmt_fixed(r.cost.latency_ms, 3) << " | "
           << detail::fmt_fixed(r.cost.latency_rel * 100.0, 2) << "% | "
           << precision_summary(r.cost.layers, true) << " | "
           << precision_summary(r.cost.layers, false) << " |\n";
    }
    md << "\nBias tensors stay at the 16-bit baseline width; relative size covers weight "
          "bytes only. Latency sums per-kernel table entries without fusion.\n";
    detail::write_file_atomic(cfg.output_dir / artifact::report_md, md.str());

    // frontier.csv
    std::ostringstream fcsv;
    fcsv << "target,metric,accuracy,latency\n";
    for (const auto& r : rows) {
        fcsv << detail::fmt_double(r.target) << ',' << r.metric << ','
             << detail::fmt_double(r.cost.accuracy_abs) << ','
             << detail::fmt_double(r.cost.latency_ms) << '\n';
    }
    detail::write_file_atomic(cfg.output_dir / artifact::frontier, fcsv.str());

    outcome.artifacts.push_back(cfg.output_dir / artifact::report_json);
    outcome.artifacts.push_back(cfg.output_dir / artifact::report_md);
    outcome.artifacts.push_back(cfg.output_dir / artifact::frontier);
    return outcome;
}

StageOutcome run_costtable_gen(const std::filesystem::path& model_path,
                               const std::filesystem::path& out_csv, double us_per_mac,
                               const std::vector<int>& palette) {
    ModelGraph model = load_model(model_path);
    CostTable table = synth_cost_table(model, us_per_mac, palette);
    table.to_csv(out_csv);
    StageOutcome outcome;
    outcome.artifacts = {out_csv};
    return outcome;
}

void apply_config_file(PipelineConfig& cfg, const std::filesystem::path& file) {
    Json j = parse_json_file(file);
    try {
        if (j.contains("model_path")) cfg.model_path = j["model_path"].get<std::string>();
        if (j.contains("calib_path")) cfg.calib_path = j["calib_path"].get<std::string>();
        if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
        if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("percentile")) cfg.percentile = j["percentile"].get<double>();
        if (j.contains("n_hutchinson")) cfg.n_hutchinson = j["n_hutchinson"].get<int>();
        if (j.contains("bit_palette")) cfg.bit_palette = j["bit_palette"].get<std::vector<int>>();
        if (j.contains("accuracy_targets")) {
            cfg.accuracy_targets = j["accuracy_targets"].get<std::vector<double>>();
        }
        auto parse_metric = [&](const std::string& name) {
            auto m = metric_from_name(name);
            if (!m) throw ConfigError("unknown metric '" + name + "'");
            return *m;
        };
        if (j.contains("metric")) cfg.metrics = {parse_metric(j["metric"].get<std::string>())};
        if (j.contains("metrics")) {
            cfg.metrics.clear();
            for (const auto& m : j["metrics"]) cfg.metrics.push_back(parse_metric(m));
        }
        if (j.contains("search")) {
            auto k = search_kind_from_name(j["search"].get<std::string>());
            if (!k) throw ConfigError("unknown search kind '" + j["search"].get<std::string>() + "'");
            cfg.search = *k;
        }
        if (j.contains("cost_table")) cfg.cost_table = j["cost_table"].get<std::string>();
        if (j.contains("synth_us_per_mac")) cfg.synth_us_per_mac = j["synth_us_per_mac"].get<double>();
        if (j.contains("max_evals")) cfg.max_evals = j["max_evals"].get<long>();
        if (j.contains("hessian_norm")) {
            std::string v = j["hessian_norm"].get<std::string>();
            if (v == "mean") cfg.hessian_norm = HessianNorm::per_param_mean;
            else if (v == "raw") cfg.hessian_norm = HessianNorm::raw;
            else throw ConfigError("hessian_norm must be 'mean' or 'raw'");
        }
        if (j.contains("clip")) {
            std::string v = j["clip"].get<std::string>();
            if (v == "per_term") cfg.clip = ClipMode::per_term;
            else if (v == "final_sum") cfg.clip = ClipMode::final_sum;
            else throw ConfigError("clip must be 'per_term' or 'final_sum'");
        }
        if (j.contains("trials")) cfg.trials = j["trials"].get<int>();
        if (j.contains("workers")) cfg.workers = j["workers"].get<unsigned>();
        if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad value in '" + file.string() + "': " + e.what());
    }
}

void write_run_manifest(const PipelineConfig& cfg, const std::string& command,
                        const StageOutcome& outcome, double elapsed_ms) {
    Json doc;
    doc["tool"] = "mixq";
    doc["version"] = tool_version();
    doc["command"] = command;
    doc["seed"] = cfg.seed;
    doc["config"] = config_to_json(cfg);
    Json artifacts;
    for (const auto& path : outcome.artifacts) {
        if (!std::filesystem::exists(path)) continue;
        std::string content = detail::read_file(path);
        std::filesystem::path rel = std::filesystem::relative(path, cfg.output_dir);
        artifacts[rel.string()] = hash_hex(detail::fnv1a64_bytes(content.data(), content.size()));
    }
    doc["artifacts"] = std::move(artifacts);
    doc["budget_exceeded"] = outcome.budget_exceeded;
    doc["elapsed_ms"] = elapsed_ms;
    std::filesystem::create_directories(cfg.output_dir);
    detail::write_file_atomic(cfg.output_dir / artifact::run_manifest, doc.dump(2) + "\n");
}

}  // namespace mixq
