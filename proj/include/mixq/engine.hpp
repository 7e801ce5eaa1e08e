#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mixq/model.hpp"

namespace mixq {

// Sequential-network evaluation. All entry points are pure functions of
// immutable inputs and are safe to call concurrently from many workers.
// Results are bitwise reproducible for fixed inputs within one build.

EvaluationResult forward(const ModelGraph& model, const Batch& batch);

// Output activations of every layer, in layer order, after any attached
// output quantizer. Used by the activation calibration pass.
std::vector<Tensor> forward_activations(const ModelGraph& model, const Batch& batch);

// dL/dw for one weighted layer. Differentiation through quantized views is
// refused; quantize after analysis, not before.
Tensor gradient(const ModelGraph& model, const Batch& batch, const std::string& layer_id);

// (d^2 L / d w_i^2) * v, restricted to the diagonal block of layer i.
Tensor hvp(const ModelGraph& model, const Batch& batch, const std::string& layer_id,
           const Tensor& v);

// Sum of e_k^T H e_k over the standard basis; capped at 1e4 weights.
double exact_layer_trace(const ModelGraph& model, const Batch& batch,
                         const std::string& layer_id);

// Shared-primal Hessian-vector product engine: the forward and adjoint
// passes are computed once and reused across probe directions, so repeated
// probes (Hutchinson, basis sweeps) cost only the tangent propagation.
// apply(v) is bitwise identical to hvp(model, batch, layer_id, v).
class HvpEngine {
public:
    HvpEngine(const ModelGraph& model, const Batch& batch, const std::string& layer_id);
    ~HvpEngine();
    HvpEngine(HvpEngine&&) noexcept;
    HvpEngine& operator=(HvpEngine&&) noexcept;

    Tensor apply(const Tensor& v) const;
    double quadratic_form(const Tensor& v) const;  // v^T H v
    std::size_t weight_count() const noexcept;

private:
    struct Impl;
    std::unique_ptr<const Impl> impl_;
};

}  // namespace mixq
