#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>

#include "mixq/container.hpp"
#include "mixq/datagen.hpp"
#include "mixq/engine.hpp"
#include "mixq/error.hpp"
#include "mixq/pipeline.hpp"
#include "mixq/quant.hpp"
#include "mixq/search.hpp"
#include "mixq/sensitivity.hpp"

namespace py = pybind11;
using namespace mixq;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const FloatArray& a) {
    std::vector<std::size_t> shape(static_cast<std::size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i) {
        shape[static_cast<std::size_t>(i)] = static_cast<std::size_t>(a.shape(i));
    }
    std::vector<float> data(a.data(), a.data() + a.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<float> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<float> a(shape);
    std::copy(t.data.begin(), t.data.end(), a.mutable_data());
    return a;
}

Batch batch_from_arrays(const FloatArray& inputs, const std::vector<std::int32_t>& labels) {
    Batch b;
    b.inputs = tensor_from_array(inputs);
    b.labels = labels;
    return b;
}

QuantParams params_from_args(int bits, std::vector<float> scales, const std::string& rounding,
                             const std::string& grid) {
    QuantParams p;
    p.bits = bits;
    p.scales = std::move(scales);
    if (rounding == "nearest") p.rounding = Rounding::nearest;
    else if (rounding == "case") p.rounding = Rounding::case_corrected;
    else throw ConfigError("rounding must be 'nearest' or 'case'");
    if (grid == "symmetric") p.grid = GridMode::symmetric;
    else if (grid == "hardware_int") p.grid = GridMode::hardware_int;
    else throw ConfigError("grid must be 'symmetric' or 'hardware_int'");
    return p;
}

Metric metric_arg(const std::string& name) {
    auto m = metric_from_name(name);
    if (!m) throw ConfigError("unknown metric '" + name + "'");
    return *m;
}

// Bridges a Python callable over {layer: weight_bits} into the search.
struct PyEvaluator : ConfigEvaluator {
    py::function fn;
    explicit PyEvaluator(py::function f) : fn(std::move(f)) {}
    double accuracy(const QuantConfig& config) override {
        ++evals_;
        py::dict d;
        for (const auto& [id, bits] : config.weight_bits) d[py::str(id)] = bits;
        return fn(d).cast<double>();
    }
};

py::dict config_to_dict(const QuantConfig& config) {
    py::dict d;
    for (const auto& [id, wb] : config.weight_bits) {
        py::dict e;
        e["weight_bits"] = wb;
        e["act_bits"] = config.act_bits_for(id);
        d[py::str(id)] = e;
    }
    return d;
}

py::dict trace_to_dict(const SearchTrace& trace) {
    py::dict d;
    d["baseline_accuracy"] = trace.baseline_accuracy;
    d["final_accuracy"] = trace.final_accuracy;
    d["eval_total"] = trace.eval_total();
    py::dict epl;
    for (const auto& [level, count] : trace.evals_per_level) epl[py::int_(level)] = count;
    d["evals_per_level"] = epl;
    d["budget_exceeded"] = trace.budget_exceeded;
    d["revalidated_shrink"] = trace.revalidated_shrink;
    return d;
}

PipelineConfig pipeline_config_from_kwargs(const py::kwargs& kw) {
    PipelineConfig cfg;
    for (auto item : kw) {
        std::string key = py::str(item.first);
        if (key == "model_path") cfg.model_path = item.second.cast<std::string>();
        else if (key == "calib_path") cfg.calib_path = item.second.cast<std::string>();
        else if (key == "output_dir") cfg.output_dir = item.second.cast<std::string>();
        else if (key == "seed") cfg.seed = item.second.cast<std::uint64_t>();
        else if (key == "percentile") cfg.percentile = item.second.cast<double>();
        else if (key == "n_hutchinson") cfg.n_hutchinson = item.second.cast<int>();
        else if (key == "bit_palette") cfg.bit_palette = item.second.cast<std::vector<int>>();
        else if (key == "accuracy_targets")
            cfg.accuracy_targets = item.second.cast<std::vector<double>>();
        else if (key == "metrics") {
            cfg.metrics.clear();
            for (auto name : item.second.cast<std::vector<std::string>>()) {
                cfg.metrics.push_back(metric_arg(name));
            }
        } else if (key == "search") {
            auto k = search_kind_from_name(item.second.cast<std::string>());
            if (!k) throw ConfigError("unknown search kind");
            cfg.search = *k;
        } else if (key == "cost_table") cfg.cost_table = item.second.cast<std::string>();
        else if (key == "synth_us_per_mac") cfg.synth_us_per_mac = item.second.cast<double>();
        else if (key == "max_evals") cfg.max_evals = item.second.cast<long>();
        else if (key == "trials") cfg.trials = item.second.cast<int>();
        else if (key == "batch_size") cfg.batch_size = item.second.cast<std::size_t>();
        else throw ConfigError("unknown pipeline option '" + key + "'");
    }
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Mixed-precision post-training quantization: sensitivity analysis, "
              "bit-width search, and cost estimation.";

    // Translators run newest-first: register the base before the derived
    // class so ConfigError surfaces as ValueError.
    py::register_exception<Error>(m, "MixqError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    py::class_<ModelGraph>(m, "Model")
        .def(py::init<>())
        .def(
            "add_dense",
            [](ModelGraph& g, const std::string& id, const FloatArray& w, const py::object& bias) {
                Layer l;
                l.id = id;
                l.kind = LayerKind::dense;
                l.weights = tensor_from_array(w);
                if (!bias.is_none()) l.bias = tensor_from_array(bias.cast<FloatArray>());
                g.layers.push_back(std::move(l));
            },
            py::arg("id"), py::arg("weights"), py::arg("bias") = py::none())
        .def("add_relu",
             [](ModelGraph& g, const std::string& id) {
                 g.layers.push_back(Layer{id, LayerKind::relu, {}, {}, {}});
             })
        .def("add_tanh",
             [](ModelGraph& g, const std::string& id) {
                 g.layers.push_back(Layer{id, LayerKind::tanh, {}, {}, {}});
             })
        .def("add_softmax_head",
             [](ModelGraph& g, const std::string& id) {
                 g.layers.push_back(Layer{id, LayerKind::softmax_xent, {}, {}, {}});
             })
        .def("add_quadratic_head",
             [](ModelGraph& g, const std::string& id, const FloatArray& w,
                const FloatArray& coeffs) {
                 Layer l;
                 l.id = id;
                 l.kind = LayerKind::quadratic;
                 l.weights = tensor_from_array(w);
                 l.bias = tensor_from_array(coeffs);
                 g.layers.push_back(std::move(l));
             })
        .def("validate", &ModelGraph::validate)
        .def("weighted_layer_ids", &ModelGraph::weighted_layer_ids)
        .def("weights",
             [](const ModelGraph& g, const std::string& id) {
                 return array_from_tensor(*g.layer(id).weights);
             })
        .def("save",
             [](const ModelGraph& g, const std::filesystem::path& dir) { save_model(g, dir); })
        .def_static("load", [](const std::filesystem::path& dir) { return load_model(dir); });

    m.def(
        "forward",
        [](const ModelGraph& model, const FloatArray& inputs,
           const std::vector<std::int32_t>& labels) {
            EvaluationResult r = forward(model, batch_from_arrays(inputs, labels));
            return py::make_tuple(r.loss, r.accuracy);
        },
        py::arg("model"), py::arg("inputs"), py::arg("labels"),
        "Mean cross-entropy loss and argmax accuracy over a batch.");

    m.def("gradient", [](const ModelGraph& model, const FloatArray& inputs,
                         const std::vector<std::int32_t>& labels, const std::string& layer_id) {
        return array_from_tensor(gradient(model, batch_from_arrays(inputs, labels), layer_id));
    });

    m.def("hvp", [](const ModelGraph& model, const FloatArray& inputs,
                    const std::vector<std::int32_t>& labels, const std::string& layer_id,
                    const FloatArray& v) {
        return array_from_tensor(
            hvp(model, batch_from_arrays(inputs, labels), layer_id, tensor_from_array(v)));
    });

    m.def("exact_layer_trace",
          [](const ModelGraph& model, const FloatArray& inputs,
             const std::vector<std::int32_t>& labels, const std::string& layer_id) {
              return exact_layer_trace(model, batch_from_arrays(inputs, labels), layer_id);
          });

    m.def(
        "hutchinson_trace",
        [](const ModelGraph& model, const FloatArray& inputs,
           const std::vector<std::int32_t>& labels, const std::string& layer_id, int n_samples,
           std::uint64_t seed) {
            return hutchinson_trace(model, batch_from_arrays(inputs, labels), layer_id, n_samples,
                                    seed);
        },
        py::arg("model"), py::arg("inputs"), py::arg("labels"), py::arg("layer_id"),
        py::arg("n_samples") = 256, py::arg("seed") = 0);

    m.def(
        "quantize_tensor",
        [](const FloatArray& x, int bits, std::vector<float> scales, const std::string& rounding,
           const std::string& grid) {
            return array_from_tensor(quantize_tensor(
                tensor_from_array(x), params_from_args(bits, std::move(scales), rounding, grid)));
        },
        py::arg("x"), py::arg("bits"), py::arg("scales") = std::vector<float>{1.0f},
        py::arg("rounding") = "nearest", py::arg("grid") = "symmetric");

    m.def(
        "weight_scales",
        [](const FloatArray& w, const std::string& granularity) {
            ScaleGranularity g = granularity == "per_tensor" ? ScaleGranularity::per_tensor
                                                             : ScaleGranularity::per_channel;
            return weight_scales(tensor_from_array(w), g);
        },
        py::arg("w"), py::arg("granularity") = "per_channel");

    m.def(
        "pareto_frontier",
        [](const std::vector<std::pair<double, double>>& points) {
            std::vector<AccuracyLatency> pts;
            pts.reserve(points.size());
            for (const auto& [acc, lat] : points) pts.push_back({acc, lat});
            std::vector<std::pair<double, double>> out;
            for (const auto& p : pareto_frontier(pts)) out.emplace_back(p.accuracy, p.latency);
            return out;
        },
        "Non-dominated (accuracy, latency) points, sorted by latency.");

    m.def(
        "bisection_search",
        [](const std::vector<std::string>& ordering, double accuracy_target,
           const py::function& evaluator, std::vector<int> bit_palette) {
            SearchSpec spec;
            spec.accuracy_target = accuracy_target;
            spec.bit_palette = std::move(bit_palette);
            PyEvaluator ev(evaluator);
            auto [config, trace] = bisection_search(ordering, spec, ev);
            return py::make_tuple(config_to_dict(config), trace_to_dict(trace));
        },
        py::arg("ordering"), py::arg("accuracy_target"), py::arg("evaluator"),
        py::arg("bit_palette") = std::vector<int>{16, 8, 4});

    m.def(
        "progressive_search",
        [](const std::vector<std::string>& ordering, double accuracy_target,
           const py::function& evaluator, std::vector<int> bit_palette) {
            SearchSpec spec;
            spec.accuracy_target = accuracy_target;
            spec.bit_palette = std::move(bit_palette);
            PyEvaluator ev(evaluator);
            auto [config, trace] = progressive_search(ordering, spec, ev);
            return py::make_tuple(config_to_dict(config), trace_to_dict(trace));
        },
        py::arg("ordering"), py::arg("accuracy_target"), py::arg("evaluator"),
        py::arg("bit_palette") = std::vector<int>{16, 8, 4});

    m.def(
        "make_demo_inputs",
        [](const std::filesystem::path& model_dir, const std::filesystem::path& calib_dir,
           std::uint64_t seed, std::size_t n_samples, std::size_t n_dense) {
            ClusterTaskSpec task;
            task.seed = seed;
            task.n_samples = n_samples;
            PrototypeMlpSpec mlp;
            mlp.seed = seed;
            mlp.n_dense = n_dense;
            save_model(make_prototype_classifier(mlp), model_dir);
            ClusterData data = make_cluster_data(task);
            save_calibration(data.inputs, data.labels, calib_dir);
        },
        py::arg("model_dir"), py::arg("calib_dir"), py::arg("seed") = 42,
        py::arg("n_samples") = 2048, py::arg("n_dense") = 12,
        "Writes the synthetic Gaussian-cluster task and its prototype classifier.");

    m.def(
        "run_stage",
        [](const std::string& stage, const py::kwargs& kw) {
            PipelineConfig cfg = pipeline_config_from_kwargs(kw);
            StageOutcome out;
            if (stage == "analyze") out = run_analyze(cfg);
            else if (stage == "search") out = run_search_stage(cfg);
            else if (stage == "report") out = run_report_stage(cfg);
            else if (stage == "quantize") out = run_quantize_stage(cfg, std::nan(""), "");
            else throw ConfigError("unknown stage '" + stage + "'");
            std::vector<std::string> artifacts;
            for (const auto& p : out.artifacts) artifacts.push_back(p.string());
            py::dict d;
            d["artifacts"] = artifacts;
            d["budget_exceeded"] = out.budget_exceeded;
            d["warnings"] = out.warnings;
            return d;
        },
        py::arg("stage"),
        "Runs one pipeline stage ('analyze', 'search', 'quantize', 'report') with "
        "PipelineConfig fields as keyword arguments.");

    m.attr("__version__") = tool_version();
}
