#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mixq/quant.hpp"
#include "mixq/tensor.hpp"

namespace mixq {

// Layer kinds of the sequential graph. softmax_xent marks the loss head and
// must be the last layer when present; the loss is mean cross-entropy over
// the final logits either way. quadratic is a diagnostic head whose loss is
// 0.5 * sum(coeff_i * w_i^2), used to exercise curvature machinery against
// closed forms; its bias tensor holds the diagonal coefficients.
enum class LayerKind { dense, relu, tanh, softmax_xent, quadratic };

const char* layer_kind_name(LayerKind kind);
std::optional<LayerKind> layer_kind_from_name(const std::string& name);

struct Layer {
    std::string id;
    LayerKind kind = LayerKind::dense;
    std::optional<Tensor> weights;  // dense: [out, in]; quadratic: [n]
    std::optional<Tensor> bias;     // dense: [out]; quadratic: coefficients [n]
    // Set on quantized views only: quantizer applied to this layer's output.
    std::optional<QuantParams> output_quant;

    bool weighted() const noexcept { return weights.has_value(); }
    std::size_t weight_count() const noexcept { return weights ? weights->numel() : 0; }
};

struct ModelGraph {
    std::vector<Layer> layers;

    // Structural checks: unique ids, composing shapes, at least one weighted
    // layer, heads only in last position. Throws ShapeError / DataError.
    void validate() const;

    const Layer& layer(const std::string& id) const;
    Layer& layer(const std::string& id);
    int layer_index(const std::string& id) const;  // -1 when absent
    std::vector<std::string> weighted_layer_ids() const;
    std::size_t input_dim() const;
    std::size_t output_dim() const;

    bool has_output_quant() const noexcept;
};

struct Batch {
    Tensor inputs;                // n x d_in
    std::vector<std::int32_t> labels;  // length n, values in [0, n_classes)

    std::size_t size() const noexcept { return labels.size(); }
    void validate(std::size_t n_classes) const;
};

struct EvaluationResult {
    double loss = 0.0;      // mean cross-entropy (or diagnostic head loss)
    double accuracy = 0.0;  // correct / n, argmax ties broken toward class 0
};

struct CalibrationSet {
    std::vector<Batch> batches;

    std::size_t sample_count() const noexcept {
        std::size_t n = 0;
        for (const auto& b : batches) n += b.size();
        return n;
    }
    bool empty() const noexcept { return batches.empty(); }
    // All batches concatenated; used where a single evaluation context is
    // needed (e.g. curvature probes over the whole set).
    Batch merged() const;
};

}  // namespace mixq
