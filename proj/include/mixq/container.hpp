#pragma once

#include <filesystem>

#include "mixq/config.hpp"
#include "mixq/model.hpp"

namespace mixq {

// Model container: <dir>/manifest.json (layer list with ids, kinds, dims and
// byte offsets) plus <dir>/weights.bin (little-endian float32, layer order,
// row-major, weights then bias per layer). Round-trips bit-exactly.
void save_model(const ModelGraph& model, const std::filesystem::path& dir);
ModelGraph load_model(const std::filesystem::path& dir);

// Calibration container uses the same manifest + raw blob layout:
// <dir>/manifest.json and <dir>/data.bin holding little-endian float32
// inputs followed by little-endian int32 labels.
void save_calibration(const Tensor& inputs, const std::vector<std::int32_t>& labels,
                      const std::filesystem::path& dir);
// Loads and splits into fixed-size batches (the partition is part of the
// deterministic evaluation order).
CalibrationSet load_calibration(const std::filesystem::path& dir, std::size_t batch_size = 256);

// scales.json: per layer {weight_scales, act_scale, bits_used_for_calibration}.
void save_scales(const ScaleSet& scales, const ModelGraph& model,
                 const std::filesystem::path& file);
ScaleSet load_scales(const std::filesystem::path& file);

}  // namespace mixq
