#include "mixq/engine.hpp"

#include <Eigen/Core>
#include <cmath>

#include "mixq/error.hpp"
#include "mixq/quant.hpp"

namespace mixq {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;

ConstMap map2d(const Tensor& t, std::size_t rows, std::size_t cols) {
    return ConstMap(t.data.data(), static_cast<Eigen::Index>(rows),
                    static_cast<Eigen::Index>(cols));
}

void apply_output_quant(RowMat& m, const QuantParams& q) {
    float* p = m.data();
    const std::size_t n = static_cast<std::size_t>(m.size());
    for (std::size_t i = 0; i < n; ++i) p[i] = quantize_value(p[i], q);
}

// Primal forward state. outs[i] is layer i's output (post output quantizer);
// probs is the softmax of the final logits unless the model ends in the
// diagnostic quadratic head.
struct ForwardState {
    RowMat inputs;
    std::vector<RowMat> outs;
    RowMat probs;
    bool quad_head = false;
    double loss = 0.0;
    double accuracy = 0.0;
};

const RowMat& layer_input(const ForwardState& st, std::size_t layer_idx) {
    return layer_idx == 0 ? st.inputs : st.outs[layer_idx - 1];
}

ForwardState run_forward(const ModelGraph& model, const Batch& batch, bool need_probs) {
    model.validate();
    batch.inputs.validate("batch inputs");
    // Width of the final logits: last dense layer's out width, else the
    // input width (pass-through heads).
    std::size_t n_classes = batch.inputs.cols();
    for (const auto& l : model.layers) {
        if (l.kind == LayerKind::dense) n_classes = l.weights->shape[0];
    }
    batch.validate(n_classes);

    ForwardState st;
    const std::size_t n = batch.size();
    st.inputs = map2d(batch.inputs, n, batch.inputs.cols());
    st.outs.reserve(model.layers.size());

    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const Layer& l = model.layers[i];
        const RowMat& in = layer_input(st, i);
        RowMat out;
        switch (l.kind) {
            case LayerKind::dense: {
                const Tensor& w = *l.weights;
                if (static_cast<std::size_t>(in.cols()) != w.shape[1]) {
                    throw ShapeError(l.id, "input width " + std::to_string(in.cols()) +
                                               " does not match weight shape " +
                                               shape_to_string(w.shape));
                }
                auto W = map2d(w, w.shape[0], w.shape[1]);
                out.noalias() = in * W.transpose();
                if (l.bias) {
                    auto b = Eigen::Map<const Eigen::RowVectorXf>(
                        l.bias->data.data(), static_cast<Eigen::Index>(l.bias->numel()));
                    out.rowwise() += b;
                }
                break;
            }
            case LayerKind::relu:
                out = in.cwiseMax(0.0f);
                break;
            case LayerKind::tanh: {
                out = in;
                float* p = out.data();
                for (Eigen::Index k = 0; k < out.size(); ++k) p[k] = std::tanh(p[k]);
                break;
            }
            case LayerKind::softmax_xent:
            case LayerKind::quadratic:
                out = in;
                break;
        }
        if (l.output_quant) apply_output_quant(out, *l.output_quant);
        st.outs.push_back(std::move(out));
    }

    const Layer& last = model.layers.back();
    st.quad_head = last.kind == LayerKind::quadratic;
    const RowMat& logits = st.outs.back();

    // Accuracy from the final logits; argmax ties break toward the lowest
    // class index.
    std::size_t correct = 0;
    for (std::size_t s = 0; s < n; ++s) {
        Eigen::Index arg = 0;
        float best = logits(static_cast<Eigen::Index>(s), 0);
        for (Eigen::Index c = 1; c < logits.cols(); ++c) {
            float v = logits(static_cast<Eigen::Index>(s), c);
            if (v > best) {
                best = v;
                arg = c;
            }
        }
        if (arg == static_cast<Eigen::Index>(batch.labels[s])) ++correct;
    }
    st.accuracy = static_cast<double>(correct) / static_cast<double>(n);

    if (st.quad_head) {
        const Tensor& w = *last.weights;
        const Tensor& a = *last.bias;
        double acc = 0.0;
        for (std::size_t k = 0; k < w.numel(); ++k) {
            acc += 0.5 * static_cast<double>(a.data[k]) * static_cast<double>(w.data[k]) *
                   static_cast<double>(w.data[k]);
        }
        st.loss = acc;
        return st;
    }

    if (need_probs) st.probs.resize(logits.rows(), logits.cols());
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        const Eigen::Index si = static_cast<Eigen::Index>(s);
        float m = logits.row(si).maxCoeff();
        float Z = 0.0f;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) Z += std::exp(logits(si, c) - m);
        float lse = m + std::log(Z);
        loss_sum += static_cast<double>(lse - logits(si, batch.labels[s]));
        if (need_probs) {
            for (Eigen::Index c = 0; c < logits.cols(); ++c) {
                st.probs(si, c) = std::exp(logits(si, c) - lse);
            }
        }
    }
    st.loss = loss_sum / static_cast<double>(n);
    return st;
}

// Adjoint of the final logits for the cross-entropy head: (p - onehot)/n.
RowMat logits_adjoint(const ForwardState& st, const Batch& batch) {
    RowMat g = st.probs;
    const float inv_n = 1.0f / static_cast<float>(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) {
        g(static_cast<Eigen::Index>(s), batch.labels[s]) -= 1.0f;
    }
    g *= inv_n;
    return g;
}

int checked_weighted_index(const ModelGraph& model, const std::string& layer_id) {
    int idx = model.layer_index(layer_id);
    if (idx < 0) throw UnknownLayerError(layer_id);
    const Layer& l = model.layers[static_cast<std::size_t>(idx)];
    if (!l.weighted()) throw DataError("layer '" + layer_id + "' has no weights");
    if (model.has_output_quant()) {
        throw DataError("differentiation through quantized views is not supported");
    }
    return idx;
}

}  // namespace

EvaluationResult forward(const ModelGraph& model, const Batch& batch) {
    ForwardState st = run_forward(model, batch, /*need_probs=*/false);
    return {st.loss, st.accuracy};
}

std::vector<Tensor> forward_activations(const ModelGraph& model, const Batch& batch) {
    ForwardState st = run_forward(model, batch, /*need_probs=*/false);
    std::vector<Tensor> acts;
    acts.reserve(st.outs.size());
    for (const RowMat& m : st.outs) {
        Tensor t = Tensor::zeros({static_cast<std::size_t>(m.rows()),
                                  static_cast<std::size_t>(m.cols())});
        std::copy(m.data(), m.data() + m.size(), t.data.begin());
        acts.push_back(std::move(t));
    }
    return acts;
}

Tensor gradient(const ModelGraph& model, const Batch& batch, const std::string& layer_id) {
    const int target = checked_weighted_index(model, layer_id);
    const Layer& target_layer = model.layers[static_cast<std::size_t>(target)];

    if (target_layer.kind == LayerKind::quadratic) {
        // d/dw of 0.5 * sum(a_i w_i^2) = a .* w
        const Tensor& w = *target_layer.weights;
        const Tensor& a = *target_layer.bias;
        Tensor g = Tensor::zeros(w.shape);
        for (std::size_t k = 0; k < w.numel(); ++k) g.data[k] = a.data[k] * w.data[k];
        return g;
    }

    ForwardState st = run_forward(model, batch, /*need_probs=*/true);
    if (st.quad_head) {
        // Diagnostic-head loss has no path through upstream activations.
        return Tensor::zeros(target_layer.weights->shape);
    }

    RowMat g = logits_adjoint(st, batch);  // adjoint of last layer's output
    for (int i = static_cast<int>(model.layers.size()) - 1; i > target; --i) {
        const Layer& l = model.layers[static_cast<std::size_t>(i)];
        const RowMat& in = layer_input(st, static_cast<std::size_t>(i));
        switch (l.kind) {
            case LayerKind::dense: {
                auto W = map2d(*l.weights, l.weights->shape[0], l.weights->shape[1]);
                RowMat gi;
                gi.noalias() = g * W;
                g = std::move(gi);
                break;
            }
            case LayerKind::relu:
                g = (in.array() > 0.0f).select(g, 0.0f);
                break;
            case LayerKind::tanh: {
                const RowMat& out = st.outs[static_cast<std::size_t>(i)];
                g.array() *= (1.0f - out.array().square());
                break;
            }
            case LayerKind::softmax_xent:
            case LayerKind::quadratic:
                break;  // identity pass-through
        }
    }
    const RowMat& a_in = layer_input(st, static_cast<std::size_t>(target));
    const Tensor& w = *target_layer.weights;
    Tensor grad = Tensor::zeros(w.shape);
    Eigen::Map<RowMat> G(grad.data.data(), static_cast<Eigen::Index>(w.shape[0]),
                         static_cast<Eigen::Index>(w.shape[1]));
    G.noalias() = g.transpose() * a_in;
    return grad;
}

// ---------------------------------------------------------------------------
// Hessian-vector products via forward-over-reverse: propagate directional
// tangents of every primal and adjoint quantity along the perturbation
// w_target += eps * v and read d/d_eps of dL/dw_target at eps = 0. Exact for
// the layer kinds here (relu's second derivative is 0 almost everywhere and
// is taken as 0).
// ---------------------------------------------------------------------------

struct HvpEngine::Impl {
    ModelGraph model;  // deep copy: engine outlives caller mutations
    Batch batch;
    int target = 0;
    ForwardState st;
    std::vector<RowMat> adjoints;  // adjoints[i] = dL/d(output of layer i), i >= target
    bool quad = false;
};

HvpEngine::HvpEngine(const ModelGraph& model, const Batch& batch, const std::string& layer_id) {
    auto impl = std::make_unique<Impl>();
    impl->model = model;
    impl->batch = batch;
    impl->target = checked_weighted_index(model, layer_id);
    const Layer& tl = model.layers[static_cast<std::size_t>(impl->target)];
    impl->quad = tl.kind == LayerKind::quadratic;
    impl->st = run_forward(impl->model, impl->batch, /*need_probs=*/true);

    if (!impl->quad && !impl->st.quad_head) {
        const std::size_t L = model.layers.size();
        impl->adjoints.assign(L, RowMat());
        RowMat g = logits_adjoint(impl->st, impl->batch);
        impl->adjoints[L - 1] = g;
        for (int i = static_cast<int>(L) - 1; i > impl->target; --i) {
            const Layer& l = model.layers[static_cast<std::size_t>(i)];
            const RowMat& in = layer_input(impl->st, static_cast<std::size_t>(i));
            switch (l.kind) {
                case LayerKind::dense: {
                    auto W = map2d(*l.weights, l.weights->shape[0], l.weights->shape[1]);
                    RowMat gi;
                    gi.noalias() = g * W;
                    g = std::move(gi);
                    break;
                }
                case LayerKind::relu:
                    g = (in.array() > 0.0f).select(g, 0.0f);
                    break;
                case LayerKind::tanh: {
                    const RowMat& out = impl->st.outs[static_cast<std::size_t>(i)];
                    g.array() *= (1.0f - out.array().square());
                    break;
                }
                case LayerKind::softmax_xent:
                case LayerKind::quadratic:
                    break;
            }
            impl->adjoints[static_cast<std::size_t>(i) - 1] = g;
        }
    }
    impl_ = std::move(impl);
}

HvpEngine::~HvpEngine() = default;
HvpEngine::HvpEngine(HvpEngine&&) noexcept = default;
HvpEngine& HvpEngine::operator=(HvpEngine&&) noexcept = default;

std::size_t HvpEngine::weight_count() const noexcept {
    return impl_->model.layers[static_cast<std::size_t>(impl_->target)].weight_count();
}

Tensor HvpEngine::apply(const Tensor& v) const {
    const Impl& im = *impl_;
    const Layer& tl = im.model.layers[static_cast<std::size_t>(im.target)];
    const Tensor& w = *tl.weights;
    if (!v.same_shape(w)) {
        throw DataError("hvp direction shape " + shape_to_string(v.shape) +
                        " does not match weights " + shape_to_string(w.shape));
    }

    if (im.quad) {
        // H = diag(a): exact closed form.
        const Tensor& a = *tl.bias;
        Tensor out = Tensor::zeros(w.shape);
        for (std::size_t k = 0; k < w.numel(); ++k) out.data[k] = a.data[k] * v.data[k];
        return out;
    }
    if (im.st.quad_head) {
        // Loss depends only on the head's weights; other blocks are zero.
        return Tensor::zeros(w.shape);
    }

    const std::size_t L = im.model.layers.size();
    const std::size_t ti = static_cast<std::size_t>(im.target);
    auto V = map2d(v, w.shape[0], w.shape[1]);

    // Tangent forward from the target layer to the logits.
    std::vector<RowMat> touts(L);  // tangent of outs[i] for i >= target
    {
        const RowMat& a_in = layer_input(im.st, ti);
        touts[ti].noalias() = a_in * V.transpose();
    }
    for (std::size_t i = ti + 1; i < L; ++i) {
        const Layer& l = im.model.layers[i];
        const RowMat& tin = touts[i - 1];
        switch (l.kind) {
            case LayerKind::dense: {
                auto W = map2d(*l.weights, l.weights->shape[0], l.weights->shape[1]);
                touts[i].noalias() = tin * W.transpose();
                break;
            }
            case LayerKind::relu: {
                const RowMat& in = layer_input(im.st, i);
                touts[i] = (in.array() > 0.0f).select(tin, 0.0f);
                break;
            }
            case LayerKind::tanh: {
                const RowMat& out = im.st.outs[i];
                touts[i] = (tin.array() * (1.0f - out.array().square())).matrix();
                break;
            }
            case LayerKind::softmax_xent:
            case LayerKind::quadratic:
                touts[i] = tin;
                break;
        }
    }

    // Tangent of the logits adjoint: d/d_eps [(p - y)/n] = pdot / n with
    // pdot = p .* (zdot - rowsum(p .* zdot)).
    const RowMat& zdot = touts[L - 1];
    const RowMat& p = im.st.probs;
    RowMat gdot(p.rows(), p.cols());
    {
        Eigen::VectorXf rowmix = (p.array() * zdot.array()).rowwise().sum();
        gdot = (p.array() * (zdot.array().colwise() - rowmix.array())).matrix();
        gdot *= 1.0f / static_cast<float>(im.batch.size());
    }

    // Tangent backward to the target layer.
    for (int i = static_cast<int>(L) - 1; i > im.target; --i) {
        const Layer& l = im.model.layers[static_cast<std::size_t>(i)];
        switch (l.kind) {
            case LayerKind::dense: {
                auto W = map2d(*l.weights, l.weights->shape[0], l.weights->shape[1]);
                RowMat gi;
                gi.noalias() = gdot * W;
                gdot = std::move(gi);
                break;
            }
            case LayerKind::relu: {
                const RowMat& in = layer_input(im.st, static_cast<std::size_t>(i));
                gdot = (in.array() > 0.0f).select(gdot, 0.0f);
                break;
            }
            case LayerKind::tanh: {
                const std::size_t ui = static_cast<std::size_t>(i);
                const RowMat& out = im.st.outs[ui];
                const RowMat& g = im.adjoints[ui];
                // d/d_eps [(1 - y^2) g] = (1 - y^2) gdot - 2 y ydot g
                gdot = ((1.0f - out.array().square()) * gdot.array() -
                        2.0f * out.array() * touts[ui].array() * g.array())
                           .matrix();
                break;
            }
            case LayerKind::softmax_xent:
            case LayerKind::quadratic:
                break;
        }
    }

    // gdot now holds the tangent of the adjoint of the target's output; the
    // target input's tangent is zero, so Hv = gdot^T * a_in.
    const RowMat& a_in = layer_input(im.st, ti);
    Tensor out = Tensor::zeros(w.shape);
    Eigen::Map<RowMat> O(out.data.data(), static_cast<Eigen::Index>(w.shape[0]),
                         static_cast<Eigen::Index>(w.shape[1]));
    O.noalias() = gdot.transpose() * a_in;
    return out;
}

double HvpEngine::quadratic_form(const Tensor& v) const {
    Tensor hv = apply(v);
    double acc = 0.0;
    for (std::size_t k = 0; k < v.numel(); ++k) {
        acc += static_cast<double>(v.data[k]) * static_cast<double>(hv.data[k]);
    }
    return acc;
}

Tensor hvp(const ModelGraph& model, const Batch& batch, const std::string& layer_id,
           const Tensor& v) {
    return HvpEngine(model, batch, layer_id).apply(v);
}

double exact_layer_trace(const ModelGraph& model, const Batch& batch,
                         const std::string& layer_id) {
    HvpEngine engine(model, batch, layer_id);
    const std::size_t n = engine.weight_count();
    if (n > 10000) {
        throw ConfigError("exact_layer_trace capped at 1e4 weights, layer '" + layer_id +
                          "' has " + std::to_string(n));
    }
    const Layer& l = model.layer(layer_id);
    Tensor e = Tensor::zeros(l.weights->shape);
    double trace = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        e.data[k] = 1.0f;
        trace += engine.quadratic_form(e);
        e.data[k] = 0.0f;
    }
    return trace;
}

}  // namespace mixq
