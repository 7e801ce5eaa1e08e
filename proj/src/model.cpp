#include "mixq/model.hpp"

#include <algorithm>
#include <unordered_set>

#include "mixq/error.hpp"

namespace mixq {

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::dense: return "dense";
        case LayerKind::relu: return "relu";
        case LayerKind::tanh: return "tanh";
        case LayerKind::softmax_xent: return "softmax_xent";
        case LayerKind::quadratic: return "quadratic";
    }
    return "?";
}

std::optional<LayerKind> layer_kind_from_name(const std::string& name) {
    if (name == "dense") return LayerKind::dense;
    if (name == "relu") return LayerKind::relu;
    if (name == "tanh") return LayerKind::tanh;
    if (name == "softmax_xent") return LayerKind::softmax_xent;
    if (name == "quadratic") return LayerKind::quadratic;
    return std::nullopt;
}

void ModelGraph::validate() const {
    if (layers.empty()) throw DataError("model has no layers");
    std::unordered_set<std::string> seen;
    bool any_weighted = false;
    std::size_t width = 0;  // current activation width; 0 = not yet fixed
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        if (l.id.empty()) throw DataError("layer " + std::to_string(i) + " has empty id");
        if (!seen.insert(l.id).second) throw DataError("duplicate layer id '" + l.id + "'");
        bool is_head = l.kind == LayerKind::softmax_xent || l.kind == LayerKind::quadratic;
        if (is_head && i + 1 != layers.size()) {
            throw ShapeError(l.id, "head layer must be last");
        }
        switch (l.kind) {
            case LayerKind::dense: {
                if (!l.weights) throw ShapeError(l.id, "dense layer has no weights");
                l.weights->validate("weights of '" + l.id + "'");
                if (l.weights->ndim() != 2) {
                    throw ShapeError(l.id, "dense weights must be 2-D [out, in], got " +
                                               shape_to_string(l.weights->shape));
                }
                std::size_t out = l.weights->shape[0];
                std::size_t in = l.weights->shape[1];
                if (width != 0 && width != in) {
                    throw ShapeError(l.id, "expects input width " + std::to_string(in) +
                                               " but previous layer produces " + std::to_string(width));
                }
                if (l.bias) {
                    l.bias->validate("bias of '" + l.id + "'");
                    if (l.bias->numel() != out) {
                        throw ShapeError(l.id, "bias length " + std::to_string(l.bias->numel()) +
                                                   " != out width " + std::to_string(out));
                    }
                }
                width = out;
                any_weighted = true;
                break;
            }
            case LayerKind::relu:
            case LayerKind::tanh:
            case LayerKind::softmax_xent:
                if (l.weights) throw ShapeError(l.id, "weightless layer kind carries weights");
                break;
            case LayerKind::quadratic: {
                if (!l.weights) throw ShapeError(l.id, "quadratic head has no weights");
                l.weights->validate("weights of '" + l.id + "'");
                if (!l.bias || l.bias->numel() != l.weights->numel()) {
                    throw ShapeError(l.id, "quadratic head needs coefficient vector matching weights");
                }
                any_weighted = true;
                break;
            }
        }
        if (l.output_quant) l.output_quant->validate(1);
    }
    if (!any_weighted) throw DataError("model has no weighted layer");
}

const Layer& ModelGraph::layer(const std::string& id) const {
    int idx = layer_index(id);
    if (idx < 0) throw UnknownLayerError(id);
    return layers[static_cast<std::size_t>(idx)];
}

Layer& ModelGraph::layer(const std::string& id) {
    int idx = layer_index(id);
    if (idx < 0) throw UnknownLayerError(id);
    return layers[static_cast<std::size_t>(idx)];
}

int ModelGraph::layer_index(const std::string& id) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].id == id) return static_cast<int>(i);
    }
    return -1;
}

std::vector<std::string> ModelGraph::weighted_layer_ids() const {
    std::vector<std::string> ids;
    for (const auto& l : layers) {
        if (l.weighted()) ids.push_back(l.id);
    }
    return ids;
}

std::size_t ModelGraph::input_dim() const {
    for (const auto& l : layers) {
        if (l.kind == LayerKind::dense) return l.weights->shape[1];
    }
    throw DataError("model has no dense layer; input width undefined");
}

std::size_t ModelGraph::output_dim() const {
    std::size_t width = 0;
    for (const auto& l : layers) {
        if (l.kind == LayerKind::dense) width = l.weights->shape[0];
    }
    if (width == 0) throw DataError("model has no dense layer; output width undefined");
    return width;
}

bool ModelGraph::has_output_quant() const noexcept {
    for (const auto& l : layers) {
        if (l.output_quant) return true;
    }
    return false;
}

void Batch::validate(std::size_t n_classes) const {
    inputs.validate("batch inputs");
    if (inputs.ndim() != 2) throw DataError("batch inputs must be 2-D [n, d]");
    if (inputs.shape[0] != labels.size()) {
        throw DataError("batch has " + std::to_string(inputs.shape[0]) + " rows but " +
                        std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) throw DataError("empty batch");
    for (std::int32_t y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
            throw DataError("label " + std::to_string(y) + " outside [0, " +
                            std::to_string(n_classes) + ")");
        }
    }
}

Batch CalibrationSet::merged() const {
    if (batches.empty()) throw DataError("empty calibration set");
    std::size_t d = batches[0].inputs.cols();
    std::size_t n = sample_count();
    Batch out;
    out.inputs = Tensor::zeros({n, d});
    out.labels.reserve(n);
    std::size_t row = 0;
    for (const auto& b : batches) {
        if (b.inputs.cols() != d) throw DataError("calibration batches disagree on input width");
        std::copy(b.inputs.data.begin(), b.inputs.data.end(),
                  out.inputs.data.begin() + static_cast<std::ptrdiff_t>(row * d));
        out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
        row += b.size();
    }
    return out;
}

}  // namespace mixq
