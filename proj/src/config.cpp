#include "mixq/config.hpp"

#include <algorithm>
#include <cmath>

#include "mixq/engine.hpp"
#include "mixq/error.hpp"

namespace mixq {

QuantConfig QuantConfig::uniform(const ModelGraph& model, int bits) {
    QuantConfig c;
    for (const auto& id : model.weighted_layer_ids()) c.set_layer_bits(id, bits);
    return c;
}

int QuantConfig::weight_bits_for(const std::string& id) const {
    auto it = weight_bits.find(id);
    if (it == weight_bits.end()) throw ConfigError("config has no bits for layer '" + id + "'");
    return it->second;
}

int QuantConfig::act_bits_for(const std::string& id) const {
    auto it = act_bits.find(id);
    return it == act_bits.end() ? 16 : it->second;
}

void QuantConfig::validate(const ModelGraph& model, const std::vector<int>& palette) const {
    for (const auto& id : model.weighted_layer_ids()) {
        int wb = weight_bits_for(id);
        if (std::find(palette.begin(), palette.end(), wb) == palette.end()) {
            throw ConfigError("layer '" + id + "' bits " + std::to_string(wb) +
                              " not in the configured palette");
        }
        int ab = act_bits_for(id);
        if (std::find(palette.begin(), palette.end(), ab) == palette.end()) {
            throw ConfigError("layer '" + id + "' activation bits " + std::to_string(ab) +
                              " not in the configured palette");
        }
    }
}

std::uint64_t QuantConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const std::string& s, int v) {
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        h ^= static_cast<std::uint64_t>(v);
        h *= 0x100000001b3ULL;
    };
    for (const auto& [id, b] : weight_bits) mix(id, b);
    for (const auto& [id, b] : act_bits) mix(id, b);
    return h;
}

std::map<std::string, std::vector<float>> compute_weight_scales(const ModelGraph& model) {
    std::map<std::string, std::vector<float>> scales;
    for (const auto& l : model.layers) {
        if (!l.weighted()) continue;
        scales[l.id] = weight_scales(*l.weights, ScaleGranularity::per_channel);
    }
    return scales;
}

ModelGraph quantize_weights_uniform(const ModelGraph& model, int bits, const ScaleSet& scales,
                                    Rounding rounding) {
    ModelGraph view = model;
    if (bits == 16) return view;
    for (auto& l : view.layers) {
        if (!l.weighted()) continue;
        auto it = scales.weight_scales.find(l.id);
        if (it == scales.weight_scales.end()) {
            throw ConfigError("missing weight scales for quantized layer '" + l.id + "'");
        }
        QuantParams p{bits, it->second, rounding, GridMode::symmetric};
        l.weights = quantize_tensor(*l.weights, p);
    }
    return view;
}

std::map<std::string, float> calibrate_activation_scales(const ModelGraph& model,
                                                         const CalibrationSet& calib,
                                                         double percentile) {
    if (!(percentile > 0.0) || percentile > 100.0) {
        throw ConfigError("percentile must lie in (0, 100]");
    }
    if (calib.empty()) throw DataError("empty calibration set");

    std::vector<std::vector<float>> pooled(model.layers.size());
    for (const auto& batch : calib.batches) {
        std::vector<Tensor> acts = forward_activations(model, batch);
        for (std::size_t i = 0; i < acts.size(); ++i) {
            auto& pool = pooled[i];
            pool.reserve(pool.size() + acts[i].numel());
            for (float v : acts[i].data) pool.push_back(std::fabs(v));
        }
    }

    std::map<std::string, float> out;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        auto& pool = pooled[i];
        std::sort(pool.begin(), pool.end());
        const std::size_t n = pool.size();
        double q;
        if (n == 1) {
            q = pool[0];
        } else {
            double rank = percentile / 100.0 * static_cast<double>(n - 1);
            std::size_t lo = static_cast<std::size_t>(rank);
            if (lo >= n - 1) {
                q = pool[n - 1];
            } else {
                double frac = rank - static_cast<double>(lo);
                q = static_cast<double>(pool[lo]) +
                    frac * (static_cast<double>(pool[lo + 1]) - static_cast<double>(pool[lo]));
            }
        }
        out[model.layers[i].id] = q > 0.0 ? static_cast<float>(1.0 / q) : 1.0f;
    }
    return out;
}

ScaleSet compute_scales(const ModelGraph& model, const CalibrationSet& calib, double percentile,
                        int calibration_bits) {
    ScaleSet scales;
    scales.weight_scales = compute_weight_scales(model);
    scales.calibration_bits = calibration_bits;
    ModelGraph working = quantize_weights_uniform(model, calibration_bits, scales);
    scales.act_scales = calibrate_activation_scales(working, calib, percentile);
    return scales;
}

ModelGraph apply_config(const ModelGraph& model, const QuantConfig& config, const ScaleSet& scales,
                        Rounding rounding) {
    ModelGraph view = model;
    for (std::size_t i = 0; i < view.layers.size(); ++i) {
        Layer& l = view.layers[i];
        if (!l.weighted()) continue;
        int wb = config.weight_bits_for(l.id);
        if (wb != 16) {
            auto it = scales.weight_scales.find(l.id);
            if (it == scales.weight_scales.end()) {
                throw ConfigError("missing weight scales for quantized layer '" + l.id + "'");
            }
            QuantParams p{wb, it->second, rounding, GridMode::symmetric};
            l.weights = quantize_tensor(*l.weights, p);
        }
        int ab = config.act_bits_for(l.id);
        if (ab != 16 && i > 0) {
            Layer& producer = view.layers[i - 1];
            auto it = scales.act_scales.find(producer.id);
            if (it == scales.act_scales.end()) {
                throw ConfigError("missing activation scale for layer '" + producer.id +
                                  "' feeding quantized layer '" + l.id + "'");
            }
            producer.output_quant =
                QuantParams{ab, {it->second}, Rounding::nearest, GridMode::symmetric};
        }
    }
    return view;
}

}  // namespace mixq
