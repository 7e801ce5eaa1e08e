#include "mixq/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <atomic>
#include <numeric>
#include <sstream>

#include "mixq/detail/io.hpp"
#include "mixq/detail/parallel.hpp"
#include "mixq/engine.hpp"
#include "mixq/error.hpp"
#include "mixq/rng.hpp"

namespace mixq {

const char* metric_name(Metric m) {
    switch (m) {
        case Metric::hessian: return "hessian";
        case Metric::interlayer: return "interlayer";
        case Metric::aug: return "aug";
    }
    return "?";
}

std::optional<Metric> metric_from_name(const std::string& name) {
    if (name == "hessian") return Metric::hessian;
    if (name == "interlayer") return Metric::interlayer;
    if (name == "aug") return Metric::aug;
    return std::nullopt;
}

double hutchinson_trace(const ModelGraph& model, const Batch& batch, const std::string& layer_id,
                        int n_samples, std::uint64_t seed, unsigned workers) {
    if (n_samples < 1) throw ConfigError("hutchinson_trace needs n_samples >= 1");
    HvpEngine engine(model, batch, layer_id);
    const std::size_t count = engine.weight_count();
    const Tensor& w = *model.layer(layer_id).weights;

    std::vector<double> estimates(static_cast<std::size_t>(n_samples));
    detail::parallel_for(
        estimates.size(),
        [&](std::size_t s) {
            KeyedRng rng(seed, std::string("hutchinson/") + layer_id, s);
            Tensor v = Tensor::zeros(w.shape);
            for (std::size_t k = 0; k < count; ++k) v.data[k] = rng.next_rademacher();
            estimates[s] = engine.quadratic_form(v);
        },
        workers);

    double sum = 0.0;
    for (double e : estimates) sum += e;
    return sum / static_cast<double>(n_samples);
}

namespace {

// Mean loss over the whole calibration set (sample-weighted across batches).
double calib_loss(const ModelGraph& model, const CalibrationSet& calib) {
    double loss_sum = 0.0;
    std::size_t n = 0;
    for (const auto& batch : calib.batches) {
        EvaluationResult r = forward(model, batch);
        loss_sum += r.loss * static_cast<double>(batch.size());
        n += batch.size();
    }
    return loss_sum / static_cast<double>(n);
}

}  // namespace

DegradationMatrix interlayer_matrix(const ModelGraph& model, const CalibrationSet& calib, int bits,
                                    const std::vector<int>& palette, const ScaleSet& scales,
                                    unsigned workers) {
    if (std::find(palette.begin(), palette.end(), bits) == palette.end()) {
        throw ConfigError("pairwise bits " + std::to_string(bits) + " not in palette");
    }
    if (calib.empty()) throw DataError("empty calibration set");

    DegradationMatrix d;
    d.layer_ids = model.weighted_layer_ids();
    const std::size_t l = d.layer_ids.size();
    if (l < 2) throw DataError("inter-layer analysis needs at least 2 weighted layers");
    d.bits_used = bits;
    d.values.assign(l * l, 0.0);
    d.single_losses.assign(l, 0.0);

    // Quantize each layer once; subset evaluations reuse the cached tensors.
    std::vector<Tensor> quantized(l);
    for (std::size_t i = 0; i < l; ++i) {
        const Layer& layer = model.layer(d.layer_ids[i]);
        auto it = scales.weight_scales.find(layer.id);
        if (it == scales.weight_scales.end()) {
            throw ConfigError("missing weight scales for layer '" + layer.id + "'");
        }
        if (bits == 16) {
            quantized[i] = *layer.weights;
        } else {
            QuantParams p{bits, it->second, Rounding::case_corrected, GridMode::symmetric};
            quantized[i] = quantize_tensor(*layer.weights, p);
        }
    }

    std::atomic<long> evals{0};
    auto subset_loss = [&](std::initializer_list<std::size_t> subset) {
        ModelGraph view = model;
        for (std::size_t i : subset) view.layer(d.layer_ids[i]).weights = quantized[i];
        evals.fetch_add(1);
        return calib_loss(view, calib);
    };

    d.baseline_loss = subset_loss({});

    detail::parallel_for(
        l, [&](std::size_t i) { d.single_losses[i] = subset_loss({i}); }, workers);

    struct Pair {
        std::size_t i, j;
    };
    std::vector<Pair> pairs;
    pairs.reserve(l * (l - 1) / 2);
    for (std::size_t i = 0; i < l; ++i) {
        for (std::size_t j = i + 1; j < l; ++j) pairs.push_back({i, j});
    }
    std::vector<double> pair_losses(pairs.size());
    detail::parallel_for(
        pairs.size(),
        [&](std::size_t k) {
            try {
                pair_losses[k] = subset_loss({pairs[k].i, pairs[k].j});
            } catch (const Error& e) {
                throw DataError("pair (" + d.layer_ids[pairs[k].i] + ", " +
                                d.layer_ids[pairs[k].j] + "): " + e.what());
            }
        },
        workers);

    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto [i, j] = pairs[k];
        double excess = pair_losses[k] - std::max(d.single_losses[i], d.single_losses[j]);
        d.values[i * l + j] = excess;
        d.values[j * l + i] = excess;
    }
    d.eval_count = evals.load();
    return d;
}

std::vector<double> interlayer_score(const DegradationMatrix& d, ClipMode clip) {
    const std::size_t l = d.layer_ids.size();
    std::vector<double> scores(l, 0.0);
    for (std::size_t i = 0; i < l; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < l; ++j) {
            if (j == i) continue;
            double term = d.at(i, j);
            if (clip == ClipMode::per_term) term = std::max(term, 0.0);
            sum += term;
        }
        scores[i] = clip == ClipMode::final_sum ? std::max(sum, 0.0) : sum;
    }
    return scores;
}

CombineResult combine(const std::vector<double>& e_hessian,
                      const std::vector<double>& e_interlayer) {
    if (e_hessian.size() != e_interlayer.size()) {
        throw ConfigError("combine: score arrays differ in length");
    }
    CombineResult r;
    r.e_aug = e_hessian;
    if (e_hessian.empty()) return r;
    double mean_h = std::accumulate(e_hessian.begin(), e_hessian.end(), 0.0) /
                    static_cast<double>(e_hessian.size());
    double mean_il = std::accumulate(e_interlayer.begin(), e_interlayer.end(), 0.0) /
                     static_cast<double>(e_interlayer.size());
    if (mean_il == 0.0) return r;  // beta = 0, e_aug = e_hessian
    double beta = mean_h / mean_il;
    if (!std::isfinite(beta)) return r;  // denormal mean: same degenerate rule
    r.beta = beta;
    for (std::size_t i = 0; i < r.e_aug.size(); ++i) {
        r.e_aug[i] = e_hessian[i] + r.beta * e_interlayer[i];
    }
    return r;
}

const std::vector<double>& SensitivityReport::scores_for(Metric m) const {
    switch (m) {
        case Metric::hessian: return e_hessian;
        case Metric::interlayer: return e_interlayer;
        case Metric::aug: return e_aug;
    }
    return e_aug;
}

std::vector<std::string> sensitivity_order(const std::vector<std::string>& layer_ids,
                                           const std::vector<double>& scores) {
    if (layer_ids.size() != scores.size()) {
        throw ConfigError("sensitivity_order: ids and scores differ in length");
    }
    std::vector<std::size_t> idx(layer_ids.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<std::string> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(layer_ids[i]);
    return out;
}

SensitivityResult analyze_sensitivity(const ModelGraph& model, const CalibrationSet& calib,
                                      const ScaleSet& scales, const SensitivityParams& params) {
    SensitivityResult result;
    SensitivityReport& rep = result.report;
    rep.layer_ids = model.weighted_layer_ids();
    rep.metric_used = params.metric;

    Batch merged = calib.merged();
    rep.e_hessian.resize(rep.layer_ids.size());
    for (std::size_t i = 0; i < rep.layer_ids.size(); ++i) {
        double trace = hutchinson_trace(model, merged, rep.layer_ids[i], params.n_hutchinson,
                                        params.seed, params.workers);
        if (params.norm == HessianNorm::per_param_mean) {
            trace /= static_cast<double>(model.layer(rep.layer_ids[i]).weight_count());
        }
        rep.e_hessian[i] = trace;
    }

    // Pairwise interaction probed at the highest quantized precision.
    int pair_bits = 0;
    for (int b : params.palette) {
        if (b < 16) pair_bits = std::max(pair_bits, b);
    }
    if (pair_bits == 0) {
        rep.e_interlayer.assign(rep.layer_ids.size(), 0.0);
        result.degradation.layer_ids = rep.layer_ids;
        result.degradation.values.assign(rep.layer_ids.size() * rep.layer_ids.size(), 0.0);
        result.degradation.bits_used = 16;
    } else {
        result.degradation =
            interlayer_matrix(model, calib, pair_bits, params.palette, scales, params.workers);
        rep.e_interlayer = interlayer_score(result.degradation, params.clip);
    }

    CombineResult c = combine(rep.e_hessian, rep.e_interlayer);
    rep.beta = c.beta;
    rep.e_aug = std::move(c.e_aug);
    rep.ordering = sensitivity_order(rep.layer_ids, rep.scores_for(params.metric));
    return result;
}

void write_sensitivity_csv(const SensitivityReport& report, const std::filesystem::path& path) {
    // rank = position in the report's ordering (0 = least sensitive).
    std::map<std::string, std::size_t> rank;
    for (std::size_t r = 0; r < report.ordering.size(); ++r) rank[report.ordering[r]] = r;
    std::ostringstream os;
    os << "layer_id,e_hessian,e_interlayer,e_aug,rank\n";
    for (std::size_t i = 0; i < report.layer_ids.size(); ++i) {
        os << report.layer_ids[i] << ',' << detail::fmt_double(report.e_hessian[i]) << ','
           << detail::fmt_double(report.e_interlayer[i]) << ','
           << detail::fmt_double(report.e_aug[i]) << ',' << rank[report.layer_ids[i]] << '\n';
    }
    detail::write_file_atomic(path, os.str());
}

SensitivityReport read_sensitivity_csv(const std::filesystem::path& path) {
    std::istringstream in(detail::read_file(path));
    std::string line;
    if (!std::getline(in, line) || line != "layer_id,e_hessian,e_interlayer,e_aug,rank") {
        throw DataError("unexpected header in '" + path.string() + "'");
    }
    SensitivityReport rep;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string id, h, il, aug, rank;
        if (!std::getline(row, id, ',') || !std::getline(row, h, ',') ||
            !std::getline(row, il, ',') || !std::getline(row, aug, ',') ||
            !std::getline(row, rank)) {
            throw DataError("malformed row in '" + path.string() + "': " + line);
        }
        rep.layer_ids.push_back(id);
        rep.e_hessian.push_back(std::strtod(h.c_str(), nullptr));
        rep.e_interlayer.push_back(std::strtod(il.c_str(), nullptr));
        rep.e_aug.push_back(std::strtod(aug.c_str(), nullptr));
    }
    if (rep.layer_ids.empty()) throw DataError("no rows in '" + path.string() + "'");
    rep.ordering = sensitivity_order(rep.layer_ids, rep.e_aug);
    return rep;
}

void write_degradation_csv(const DegradationMatrix& d, const std::filesystem::path& path) {
    std::ostringstream os;
    os << "layer_id";
    for (const auto& id : d.layer_ids) os << ',' << id;
    os << '\n';
    for (std::size_t i = 0; i < d.layer_ids.size(); ++i) {
        os << d.layer_ids[i];
        for (std::size_t j = 0; j < d.layer_ids.size(); ++j) {
            os << ',' << detail::fmt_double(d.at(i, j));
        }
        os << '\n';
    }
    detail::write_file_atomic(path, os.str());
}

}  // namespace mixq
