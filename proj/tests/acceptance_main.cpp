// Acceptance suite: runs every release gate at its pinned tolerance and
// prints one pass/fail line per criterion. Exit code = number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mixq/container.hpp"
#include "mixq/datagen.hpp"
#include "mixq/detail/io.hpp"
#include "mixq/engine.hpp"
#include "mixq/pipeline.hpp"
#include "mixq/quant.hpp"
#include "mixq/rng.hpp"
#include "mixq/search.hpp"
#include "mixq/sensitivity.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mixq;
using testutil::close;
using testutil::rel_err;

namespace {

struct Check {
    std::vector<std::string> failures;

    void require(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
};

// --- 1. autodiff correctness ------------------------------------------------

void criterion_autodiff(Check& c) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        ModelGraph m = testutil::random_mlp(seed);
        Batch b = testutil::random_batch(seed + 5000, 5, m.input_dim(), m.output_dim());
        oracle::DModel dm = oracle::DModel::from(m);
        for (const auto& id : m.weighted_layer_ids()) {
            Tensor g = gradient(m, b, id);
            std::vector<double> fd = oracle::fd_gradient(dm, b, id);
            for (std::size_t k = 0; k < g.numel(); ++k) {
                if (!close(g.data[k], fd[k], 1e-4, 1e-5)) {
                    c.require(false, "gradient mismatch seed " + std::to_string(seed) + " layer " +
                                         id + " elem " + std::to_string(k));
                    return;
                }
            }
            const Tensor& w = *m.layer(id).weights;
            KeyedRng rng(seed, "acc-hvp-dir", 0);
            Tensor v = Tensor::zeros(w.shape);
            std::vector<double> dv(w.numel());
            for (std::size_t k = 0; k < w.numel(); ++k) {
                v.data[k] = static_cast<float>(rng.next_gaussian());
                dv[k] = v.data[k];
            }
            Tensor hv = hvp(m, b, id, v);
            std::vector<double> fdh = oracle::fd_hvp(dm, b, id, dv);
            for (std::size_t k = 0; k < hv.numel(); ++k) {
                if (!close(hv.data[k], fdh[k], 1e-3, 1e-5)) {
                    c.require(false, "hvp mismatch seed " + std::to_string(seed) + " layer " + id +
                                         " elem " + std::to_string(k));
                    return;
                }
            }
        }
    }
}

// --- 2. Hutchinson fidelity ---------------------------------------------------

void criterion_hutchinson(Check& c) {
    ModelGraph quad = testutil::quad_model({1.0f, 2.0f, 3.0f}, {0.4f, -1.0f, 0.2f});
    Batch unit = testutil::unit_batch(3);
    double est1 = hutchinson_trace(quad, unit, "quad", 1, 12345);
    c.require(rel_err(est1, 6.0) < 1e-6, "n=1 estimate off the exact diagonal trace");

    ModelGraph mlp = testutil::fixed_tanh_mlp(107, 6, {8, 5, 3});
    std::size_t params = 0;
    for (const auto& id : mlp.weighted_layer_ids()) params += mlp.layer(id).weight_count();
    c.require(params <= 2000, "desk MLP exceeds 2k params");
    Batch b = testutil::random_batch(107, 32, 6, 3);
    double exact = exact_layer_trace(mlp, b, "fc2");
    double est = hutchinson_trace(mlp, b, "fc2", 1024, 3);
    c.require(rel_err(est, exact) < 0.02, "n=1024 estimate outside 2% of the exact trace");
}

// --- 3. quantizer ------------------------------------------------------------

void criterion_quantizer(Check& c) {
    const struct {
        int bits;
        float alpha;
    } grid[] = {{4, 0.5f}, {4, 1.0f}, {4, 2.7f}, {8, 0.31f}, {8, 1.0f}, {8, 10.0f}};
    for (const auto& g : grid) {
        KeyedRng rng(777, "acc-quant", static_cast<std::uint64_t>(g.bits * 1000) +
                                            static_cast<std::uint64_t>(g.alpha * 100));
        QuantParams p{g.bits, {g.alpha}, Rounding::nearest, GridMode::symmetric};
        const double step = grid_step(g.bits, g.alpha);
        Tensor x = Tensor::zeros({100000});
        for (auto& v : x.data) {
            v = static_cast<float>(rng.next_uniform(-1.3 / g.alpha, 1.3 / g.alpha));
        }
        Tensor q = quantize_tensor(x, p);
        Tensor qq = quantize_tensor(q, p);
        if (!(qq == q)) {
            c.require(false, "idempotence failed at b=" + std::to_string(g.bits));
            return;
        }
        for (std::size_t i = 0; i < x.numel(); ++i) {
            double proj = std::clamp(static_cast<double>(x.data[i]), -1.0 / g.alpha, 1.0 / g.alpha);
            if (std::fabs(q.data[i] - proj) > step * (0.5 + 1e-4)) {
                c.require(false, "error bound exceeded at b=" + std::to_string(g.bits));
                return;
            }
        }
    }
    // Hand-worked fixed-point examples reproduce exactly.
    QuantParams b3{3, {1.0f}, Rounding::nearest, GridMode::symmetric};
    Tensor h = quantize_tensor(Tensor({2}, {0.3f, 5.0f}), b3);
    c.require(h.data[0] == 0.25f, "0.3 at b=3, alpha=1 must give 0.25");
    c.require(h.data[1] == 1.0f, "5.0 at b=3, alpha=1 must saturate to 1.0");
    Tensor z = quantize_tensor(Tensor({1}, {0.0f}), b3);
    c.require(z.data[0] == 0.0f, "zero must stay zero");
}

// --- 4. CASE rounding ----------------------------------------------------------

void criterion_case(Check& c) {
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        KeyedRng rng(seed, "acc-case", 1);
        const int bits = rng.next_unit() < 0.5 ? 3 : 4;
        const std::size_t n = 2 + rng.next_below(11);
        std::vector<float> ch(n);
        for (auto& v : ch) v = static_cast<float>(rng.next_uniform(-1.0, 1.0));
        std::vector<float> alpha = weight_scales(Tensor({n}, std::vector<float>(ch)),
                                                 ScaleGranularity::per_tensor);
        Tensor rtn = quantize_tensor(Tensor({n}, std::vector<float>(ch)),
                                     {bits, alpha, Rounding::nearest, GridMode::symmetric});
        Tensor q = case_round(Tensor({n}, std::vector<float>(ch)),
                              {bits, alpha, Rounding::case_corrected, GridMode::symmetric});
        const double step = grid_step(bits, alpha[0]);
        double sum_err = 0.0;
        int flips = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sum_err += static_cast<double>(q.data[i]) - ch[i];
            if (q.data[i] != rtn.data[i]) ++flips;
        }
        if (std::fabs(sum_err) > step / 2 + 1e-6 * step) {
            c.require(false, "channel " + std::to_string(seed) + ": |sum e| above step/2");
            return;
        }
        int want =
            oracle::case_min_flips(std::vector<double>(ch.begin(), ch.end()), alpha[0], bits);
        if (want < 0 || flips != want) {
            c.require(false, "channel " + std::to_string(seed) + ": flips " +
                                 std::to_string(flips) + " != exhaustive minimum " +
                                 std::to_string(want));
            return;
        }
        ++checked;
    }
    c.require(checked == 500, "expected 500 channels");
}

// --- 5. inter-layer metric ----------------------------------------------------

void criterion_interlayer(Check& c) {
    PrototypeMlpSpec mlp;  // 12 dense layers
    ClusterTaskSpec task;
    task.n_samples = 512;
    ModelGraph model = make_prototype_classifier(mlp);
    CalibrationSet calib = make_cluster_calibration(task);
    ScaleSet scales = compute_scales(model, calib, 99.999, 8);

    DegradationMatrix d = interlayer_matrix(model, calib, 8, {16, 8, 4}, scales);
    const std::size_t l = d.layer_ids.size();
    c.require(l == 12, "desk model must have 12 weighted layers");
    c.require(d.eval_count == static_cast<long>(l * (l - 1) / 2 + l + 1),
              "evaluation counter must equal l(l-1)/2 + l + 1");
    for (std::size_t i = 0; i < l; ++i) {
        for (std::size_t j = 0; j < l; ++j) {
            if (d.at(i, j) != d.at(j, i)) {
                c.require(false, "degradation matrix asymmetric");
                return;
            }
        }
    }

    // Representable weights: quantization is the identity, scores all zero.
    ModelGraph exact = model;
    for (auto& layer : exact.layers) {
        if (!layer.weighted()) continue;
        QuantParams p{8, scales.weight_scales.at(layer.id), Rounding::case_corrected,
                      GridMode::symmetric};
        layer.weights = quantize_tensor(*layer.weights, p);
    }
    DegradationMatrix d0 = interlayer_matrix(exact, calib, 8, {16, 8, 4}, scales);
    for (double v : d0.values) {
        if (v != 0.0) {
            c.require(false, "representable weights must yield a zero matrix");
            return;
        }
    }

    // combine: mean(beta * E_il) == mean(E_h) within 1e-6.
    std::vector<double> e_il = interlayer_score(d);
    std::vector<double> e_h(l);
    Batch merged = calib.merged();
    for (std::size_t i = 0; i < l; ++i) {
        e_h[i] = hutchinson_trace(model, merged, d.layer_ids[i], 16, 42) /
                 static_cast<double>(model.layer(d.layer_ids[i]).weight_count());
    }
    CombineResult comb = combine(e_h, e_il);
    double mh = 0.0, mi = 0.0;
    for (std::size_t i = 0; i < l; ++i) {
        mh += e_h[i];
        mi += comb.beta * e_il[i];
    }
    c.require(rel_err(mh / l, mi / l) < 1e-6, "combine mean identity violated");
}

// --- 6. search correctness ------------------------------------------------------

struct MonotonePrefixStub : ConfigEvaluator {
    std::vector<std::string> ordering;
    std::map<int, int> thresholds;
    double accuracy(const QuantConfig& config) override {
        ++evals_;
        for (const auto& [level, k] : thresholds) {
            int count = 0;
            for (const auto& id : ordering) {
                if (config.weight_bits_for(id) <= level) ++count;
            }
            if (count > k) return 0.0;
        }
        return 1.0;
    }
};

struct HashStub : ConfigEvaluator {
    std::uint64_t salt = 0;
    QuantConfig baseline;
    double accuracy(const QuantConfig& config) override {
        ++evals_;
        if (config == baseline) return 1.0;
        KeyedRng rng(config.hash() ^ salt, "acc-hash-stub", 0);
        return 0.8 + 0.2 * rng.next_unit();
    }
};

void criterion_search(Check& c) {
    auto ceil_log2 = [](int n) {
        int k = 0;
        while ((1 << k) < n) ++k;
        return k;
    };
    for (int n : {8, 10, 54}) {
        std::map<int, int> histogram;
        for (std::uint64_t trial = 0; trial < 40; ++trial) {
            KeyedRng rng(trial, "acc-search", static_cast<std::uint64_t>(n));
            MonotonePrefixStub stub;
            for (int i = 0; i < n; ++i) stub.ordering.push_back("l" + std::to_string(i));
            int k8 = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n) + 1));
            int k4 = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(k8) + 1));
            stub.thresholds[8] = k8;
            stub.thresholds[4] = k4;
            SearchSpec spec;
            spec.accuracy_target = 1.0;
            auto [config, trace] = bisection_search(stub.ordering, spec, stub);
            if (trace.accepted_prefix.at(8) != k8 || trace.accepted_prefix.at(4) != k4) {
                c.require(false, "bisection prefix differs from the linear-scan optimum");
                return;
            }
            for (int level : {8, 4}) {
                if (trace.evals_per_level.at(level) > ceil_log2(n) + 2) {
                    c.require(false, "eval count exceeded ceil(log2 N) + 2");
                    return;
                }
                if (n == 54) ++histogram[trace.evals_per_level.at(level)];
            }
        }
        if (n == 54) {
            int mode = 0, best = 0;
            for (const auto& [evals, cnt] : histogram) {
                if (cnt > best) {
                    best = cnt;
                    mode = evals;
                }
            }
            c.require(mode >= 4 && mode <= 8, "typical N=54 eval count not ~6 (+2)");
        }
    }
    // Randomized non-monotone evaluators: the returned config always meets
    // the target thanks to the revalidation guard.
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        std::vector<std::string> ordering;
        int n = 2 + static_cast<int>(trial % 9);
        for (int i = 0; i < n; ++i) ordering.push_back("l" + std::to_string(i));
        QuantConfig base;
        for (const auto& id : ordering) base.set_layer_bits(id, 16);
        SearchSpec spec;
        spec.accuracy_target = 0.95;
        for (SearchKind kind : {SearchKind::bisection, SearchKind::progressive}) {
            HashStub stub;
            stub.salt = trial * 2654435761ULL;
            stub.baseline = base;
            auto [config, trace] = run_search(kind, ordering, spec, stub);
            HashStub verify;
            verify.salt = stub.salt;
            verify.baseline = base;
            if (verify.accuracy(config) < spec.accuracy_target * trace.baseline_accuracy) {
                c.require(false, "returned config misses the target (trial " +
                                     std::to_string(trial) + ")");
                return;
            }
        }
    }
}

// --- 7. oracle optimality -------------------------------------------------------

void criterion_oracle_optimality(Check& c) {
    int feasible = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ModelGraph m = testutil::fixed_tanh_mlp(seed + 900, 6, {8, 8, 8, 8, 8, 4});
        ClusterTaskSpec task;
        task.n_samples = 128;
        task.input_dim = 6;
        task.seed = seed + 900;
        CalibrationSet calib = make_cluster_calibration(task, 128);
        ScaleSet scales = compute_scales(m, calib, 99.999, 8);
        CostTable table = synth_cost_table(m, 0.01);

        SensitivityParams params;
        params.n_hutchinson = 32;
        params.seed = seed;
        SensitivityResult sens = analyze_sensitivity(m, calib, scales, params);
        auto ordering = sensitivity_order(sens.report.layer_ids, sens.report.e_aug);

        SearchSpec spec;
        spec.accuracy_target = 0.97;
        CalibConfigEvaluator eval(m, calib, scales);
        auto [config, trace] = bisection_search(ordering, spec, eval);

        CalibConfigEvaluator verify(m, calib, scales);
        double baseline = verify.accuracy(QuantConfig::uniform(m, 16));
        double acc = verify.accuracy(config);
        if (acc >= spec.accuracy_target * baseline) ++feasible;

        CalibConfigEvaluator oracle_eval(m, calib, scales);
        QuantConfig best = exhaustive_search(m, spec, oracle_eval, table);
        double lat_search = model_latency_us(m, config, table);
        double lat_best = model_latency_us(m, best, table);
        if (lat_search < lat_best - 1e-9) {
            c.require(false, "bisection beat the exhaustive optimum (impossible)");
            return;
        }
    }
    c.require(feasible == 20, "feasibility must hold in 20/20 runs, got " +
                                  std::to_string(feasible));
}

// --- 8/9. end-to-end pipeline + determinism -------------------------------------

PipelineConfig desk_config(const std::filesystem::path& root,
                           const std::filesystem::path& out) {
    PipelineConfig cfg;
    cfg.model_path = root / "model";
    cfg.calib_path = root / "calib";
    cfg.output_dir = out;
    cfg.seed = 42;
    cfg.accuracy_targets = {0.99};
    cfg.metrics = {Metric::hessian, Metric::aug};
    cfg.synth_us_per_mac = 0.01;
    return cfg;
}

void make_desk_inputs(const std::filesystem::path& root) {
    ClusterTaskSpec task;  // 2048 samples, 4 Gaussian clusters, seed 42
    PrototypeMlpSpec mlp;  // 12-layer tanh MLP
    save_model(make_prototype_classifier(mlp), root / "model");
    ClusterData data = make_cluster_data(task);
    save_calibration(data.inputs, data.labels, root / "calib");
}

void run_pipeline(const PipelineConfig& cfg) {
    StageOutcome a = run_analyze(cfg);
    write_run_manifest(cfg, "analyze", a, 0.0);
    StageOutcome s = run_search_stage(cfg);
    write_run_manifest(cfg, "search", s, 0.0);
    StageOutcome r = run_report_stage(cfg);
    write_run_manifest(cfg, "report", r, 0.0);
}

void criterion_end_to_end(Check& c, const std::filesystem::path& work) {
    make_desk_inputs(work);
    PipelineConfig cfg = desk_config(work, work / "out");
    run_pipeline(cfg);

    ModelGraph model = load_model(cfg.model_path);
    CalibrationSet calib = load_calibration(cfg.calib_path, cfg.batch_size);
    ScaleSet scales = load_scales(cfg.output_dir / artifact::scales);
    CostTable table = synth_cost_table(model, cfg.synth_us_per_mac, cfg.bit_palette);
    double baseline_latency =
        model_latency_us(model, QuantConfig::uniform(model, 16), table);

    std::string fc = detail::read_file(cfg.output_dir / artifact::final_config);
    CalibConfigEvaluator eval(model, calib, scales);
    double baseline_acc = eval.accuracy(QuantConfig::uniform(model, 16));

    // The quantize stage validates selection and materializes each view.
    for (const char* metric : {"hessian", "aug"}) {
        run_quantize_stage(cfg, 0.99, metric);
        std::string meta =
            detail::read_file(cfg.output_dir / artifact::quantized_model_dir / "quant_meta.json");
        c.require(meta.find("\"metric\": \"" + std::string(metric) + "\"") != std::string::npos,
                  "quantize stage exported the wrong metric entry");
    }

    c.require(fc.find("\"feasible\": true") != std::string::npos,
              "final_config.json must flag feasible configs");
    c.require(fc.find("\"feasible\": false") == std::string::npos,
              "no emitted config may miss its target");

    // frontier.csv carries both metrics.
    std::string frontier = detail::read_file(cfg.output_dir / artifact::frontier);
    c.require(frontier.find("hessian") != std::string::npos, "frontier.csv misses hessian rows");
    c.require(frontier.find("aug") != std::string::npos, "frontier.csv misses aug rows");

    // Recompute the emitted configs from search artifacts and verify both
    // accuracy and latency directly.
    SensitivityReport report = read_sensitivity_csv(cfg.output_dir / artifact::sensitivity);
    for (Metric metric : {Metric::hessian, Metric::aug}) {
        auto ordering = sensitivity_order(report.layer_ids, report.scores_for(metric));
        SearchSpec spec;
        spec.accuracy_target = 0.99;
        spec.metric = metric;
        CalibConfigEvaluator ev(model, calib, scales);
        auto [config, trace] = bisection_search(ordering, spec, ev);
        CalibConfigEvaluator ev2(model, calib, scales);
        double acc = ev2.accuracy(config);
        c.require(acc >= 0.99 * baseline_acc,
                  std::string(metric_name(metric)) + " config misses 0.99 * baseline");
        double lat = model_latency_us(model, config, table);
        c.require(lat < baseline_latency,
                  std::string(metric_name(metric)) + " config latency not below baseline");
    }
}

void criterion_determinism(Check& c, const std::filesystem::path& work) {
    make_desk_inputs(work);
    PipelineConfig cfg_a = desk_config(work, work / "out_a");
    PipelineConfig cfg_b = desk_config(work, work / "out_b");
    run_pipeline(cfg_a);
    run_pipeline(cfg_b);

    // Byte-compare the artifact trees. run_manifest.json carries wall-clock
    // timings; its artifact-hash map is compared instead.
    std::vector<std::filesystem::path> rel_paths;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(work / "out_a")) {
        if (!entry.is_regular_file()) continue;
        rel_paths.push_back(std::filesystem::relative(entry.path(), work / "out_a"));
    }
    c.require(rel_paths.size() >= 7, "expected a populated artifact tree");
    for (const auto& rel : rel_paths) {
        std::filesystem::path a = work / "out_a" / rel;
        std::filesystem::path b = work / "out_b" / rel;
        if (!std::filesystem::exists(b)) {
            c.require(false, "second run misses " + rel.string());
            continue;
        }
        if (rel.filename() == artifact::run_manifest) {
            auto hashes = [](const std::string& s) {
                auto from = s.find("\"artifacts\"");
                auto to = s.find("\"budget_exceeded\"");
                return s.substr(from, to - from);
            };
            c.require(hashes(detail::read_file(a)) == hashes(detail::read_file(b)),
                      "run manifests disagree on artifact hashes");
            continue;
        }
        if (detail::read_file(a) != detail::read_file(b)) {
            c.require(false, "artifact differs between runs: " + rel.string());
        }
    }
}

}  // namespace

int main() {
    struct Criterion {
        int num;
        const char* name;
        double limit_s;
        std::function<void(Check&)> fn;
    };

    std::filesystem::path work =
        std::filesystem::temp_directory_path() / "mixq_acceptance";
    std::filesystem::remove_all(work);
    std::filesystem::create_directories(work);

    double e2e_elapsed = 0.0;
    std::vector<Criterion> criteria = {
        {1, "autodiff matches finite differences", 10.0, criterion_autodiff},
        {2, "Hutchinson estimator fidelity", 30.0, criterion_hutchinson},
        {3, "quantizer idempotence and error bound", 5.0, criterion_quantizer},
        {4, "CASE rounding vs exhaustive subsets", 20.0, criterion_case},
        {5, "inter-layer metric and combine identity", 30.0, criterion_interlayer},
        {6, "bisection search vs linear scan", 30.0, criterion_search},
        {7, "feasibility vs the exhaustive oracle", 60.0, criterion_oracle_optimality},
        {8, "end-to-end pipeline on the desk task", 90.0,
         [&](Check& c) { criterion_end_to_end(c, work / "e2e"); }},
        {9, "byte-identical artifact trees", 0.0,  // limit set from criterion 8
         [&](Check& c) { criterion_determinism(c, work / "det"); }},
    };

    int failures = 0;
    for (auto& cr : criteria) {
        Check check;
        auto t0 = std::chrono::steady_clock::now();
        try {
            cr.fn(check);
        } catch (const std::exception& e) {
            check.failures.push_back(std::string("exception: ") + e.what());
        }
        double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        double limit = cr.limit_s;
        if (cr.num == 8) e2e_elapsed = elapsed;
        if (cr.num == 9) limit = 2.0 * std::max(e2e_elapsed, 1.0);
        if (elapsed > limit) {
            check.failures.push_back("runtime " + detail::fmt_fixed(elapsed, 1) + " s over the " +
                                     detail::fmt_fixed(limit, 1) + " s budget");
        }
        bool ok = check.failures.empty();
        std::printf("[%s] %d. %s (%.2f s)\n", ok ? "PASS" : "FAIL", cr.num, cr.name, elapsed);
        for (const auto& f : check.failures) std::printf("       - %s\n", f.c_str());
        if (!ok) ++failures;
    }
    std::filesystem::remove_all(work);
    std::printf("%d/9 criteria passed\n", 9 - failures);
    return failures;
}
