#pragma once

#include <cstdint>
#include <vector>

#include "mixq/tensor.hpp"

namespace mixq {

enum class Rounding { nearest, case_corrected };

// The quantization formula admits the level +2^(b-1), a symmetric grid of
// 2^b + 1 levels. hardware_int additionally clamps levels to the two's
// complement range [-2^(b-1), 2^(b-1) - 1].
enum class GridMode { symmetric, hardware_int };

struct QuantParams {
    int bits = 16;
    // One entry = per-tensor scale; one entry per output channel (row)
    // otherwise. Scales must be positive and finite.
    std::vector<float> scales{1.0f};
    Rounding rounding = Rounding::nearest;
    GridMode grid = GridMode::symmetric;

    bool per_channel() const noexcept { return scales.size() > 1; }
    void validate(std::size_t channels) const;
};

enum class ScaleGranularity { per_tensor, per_channel };

// Grid spacing between representable values, in unscaled units: 2^-(b-1)/alpha.
double grid_step(int bits, double alpha);

// Fixed-point quantizer: round(clip(alpha*x) * 2^(b-1)) * 2^-(b-1) / alpha,
// with clip saturating alpha*x to [-1, 1]. bits == 16 is the identity
// (unquantized baseline). Rounding::case_corrected applies the per-channel
// CASE correction after round-to-nearest.
Tensor quantize_tensor(const Tensor& x, const QuantParams& p);

// alpha = 1 / max(|min|, |max|) per group; all-zero groups get alpha = 1.
std::vector<float> weight_scales(const Tensor& w, ScaleGranularity granularity);

// Round-to-nearest, then per channel flip the rounding direction of the
// minimum number of elements until |sum of signed errors| <= step/2.
// Candidates are the elements whose error has the same sign as the channel
// residual, largest |error| first, ties broken toward the lowest index.
// Clip-saturated elements are never flipped outward beyond the grid.
Tensor case_round(const Tensor& w, const QuantParams& p);

// Single value through the quantizer with the params' per-tensor scale;
// used for activation quantization at layer outputs.
float quantize_value(float x, const QuantParams& p);

}  // namespace mixq
