#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mixq/model.hpp"

namespace mixq {

// Per-layer bit assignment, the search's decision variable. weight_bits
// covers every weighted layer; act_bits is the precision of the layer's
// matmul input operand (all operands of a matmul share precision, so
// searches assign both together via set_layer_bits).
struct QuantConfig {
    std::map<std::string, int> weight_bits;
    std::map<std::string, int> act_bits;

    static QuantConfig uniform(const ModelGraph& model, int bits);

    void set_layer_bits(const std::string& id, int bits) {
        weight_bits[id] = bits;
        act_bits[id] = bits;
    }
    int weight_bits_for(const std::string& id) const;
    int act_bits_for(const std::string& id) const;  // 16 when unset

    // Every weighted layer present; bits drawn from the palette.
    void validate(const ModelGraph& model, const std::vector<int>& palette) const;

    std::uint64_t hash() const;

    friend bool operator==(const QuantConfig&, const QuantConfig&) = default;
};

struct ScaleSet {
    // Per weighted layer, one scale per output channel.
    std::map<std::string, std::vector<float>> weight_scales;
    // Per layer output, one scale; keyed by the producing layer's id.
    std::map<std::string, float> act_scales;
    int calibration_bits = 16;
};

// Per-channel scales for every weighted layer.
std::map<std::string, std::vector<float>> compute_weight_scales(const ModelGraph& model);

// View of the model with every weighted layer quantized at `bits` using the
// given weight scales (weights only, no activation quantizers).
ModelGraph quantize_weights_uniform(const ModelGraph& model, int bits, const ScaleSet& scales,
                                    Rounding rounding = Rounding::case_corrected);

// Empirical percentile (linear interpolation at rank r = p/100 * (n-1)) of
// |activation| pooled over the whole calibration set, per layer output;
// alpha = 1/q, with all-zero outputs falling back to alpha = 1. The model
// passed in should already carry quantized weights per the working config.
std::map<std::string, float> calibrate_activation_scales(const ModelGraph& model,
                                                         const CalibrationSet& calib,
                                                         double percentile);

// Weight scales plus activation calibration at the working precision
// `calibration_bits` (the highest quantized precision of the palette).
ScaleSet compute_scales(const ModelGraph& model, const CalibrationSet& calib, double percentile,
                        int calibration_bits);

// Quantized view of the model under the config: weighted layers below 16
// bits get quantized weights (CASE by default); a layer's matmul input is
// quantized at its act_bits by attaching an output quantizer to the
// producing layer. The original model is untouched. The first layer's raw
// input is not quantized (no calibrated scale exists for the data source).
ModelGraph apply_config(const ModelGraph& model, const QuantConfig& config, const ScaleSet& scales,
                        Rounding rounding = Rounding::case_corrected);

}  // namespace mixq
