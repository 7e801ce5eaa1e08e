#include <doctest.h>

#include <cmath>

#include "mixq/engine.hpp"
#include "mixq/error.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mixq;
using testutil::close;
using testutil::rel_err;

namespace {

ModelGraph identity_dense(std::size_t dim) {
    Layer l;
    l.id = "fc";
    l.kind = LayerKind::dense;
    l.weights = Tensor::zeros({dim, dim});
    for (std::size_t i = 0; i < dim; ++i) l.weights->at(i, i) = 1.0f;
    ModelGraph m;
    m.layers.push_back(std::move(l));
    Layer head;
    head.id = "head";
    head.kind = LayerKind::softmax_xent;
    m.layers.push_back(std::move(head));
    m.validate();
    return m;
}

}  // namespace

TEST_CASE("forward: identity dense on one-hot input") {
    ModelGraph m = identity_dense(3);
    Batch b;
    b.inputs = Tensor({1, 3}, {1.0f, 0.0f, 0.0f});
    b.labels = {0};
    EvaluationResult r = forward(m, b);
    CHECK(r.accuracy == 1.0);
    CHECK(r.loss >= 0.0);

    // Same logits, label flipped to a losing class.
    b.labels = {1};
    r = forward(m, b);
    CHECK(r.accuracy == 0.0);
}

TEST_CASE("forward: argmax ties break toward the lowest class index") {
    ModelGraph m = identity_dense(3);
    Batch b;
    b.inputs = Tensor({1, 3}, {0.5f, 0.5f, 0.5f});
    b.labels = {0};
    CHECK(forward(m, b).accuracy == 1.0);
    b.labels = {2};
    CHECK(forward(m, b).accuracy == 0.0);
}

TEST_CASE("forward: matches the independent double-precision reimplementation") {
    ModelGraph m = testutil::fixed_tanh_mlp(42, 6, {5, 4});
    Batch b = testutil::random_batch(42, 8, 6, 4);
    EvaluationResult r = forward(m, b);
    oracle::DModel dm = oracle::DModel::from(m);
    double want = oracle::loss(dm, b);
    CHECK(rel_err(r.loss, want) < 1e-6);
    CHECK(r.accuracy == oracle::accuracy(dm, b));
}

TEST_CASE("forward: shape mismatch names the offending layer") {
    ModelGraph m = identity_dense(3);
    Batch b;
    b.inputs = Tensor({1, 4}, {1.0f, 0.0f, 0.0f, 0.0f});
    b.labels = {0};
    try {
        forward(m, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(e.layer_id() == "fc");
    }
}

TEST_CASE("gradient: quadratic toy head analytic values") {
    ModelGraph m = testutil::quad_model({1.0f, 2.0f}, {3.0f, 4.0f});
    Batch b = testutil::unit_batch(2);
    Tensor g = gradient(m, b, "quad");
    CHECK(g.data[0] == doctest::Approx(3.0));
    CHECK(g.data[1] == doctest::Approx(8.0));

    // Stationary point: gradient vanishes.
    ModelGraph m0 = testutil::quad_model({1.0f, 2.0f}, {0.0f, 0.0f});
    Tensor g0 = gradient(m0, b, "quad");
    CHECK(g0.data[0] == 0.0f);
    CHECK(g0.data[1] == 0.0f);
}

TEST_CASE("gradient: errors for unknown and weightless layers") {
    ModelGraph m = testutil::fixed_tanh_mlp(1, 4, {3, 3});
    Batch b = testutil::random_batch(1, 4, 4, 3);
    CHECK_THROWS_AS(gradient(m, b, "nope"), UnknownLayerError);
    CHECK_THROWS_AS(gradient(m, b, "act0"), Error);
}

TEST_CASE("gradient: matches central finite differences on a 3-layer tanh MLP") {
    ModelGraph m = testutil::fixed_tanh_mlp(7, 5, {6, 5, 4});
    Batch b = testutil::random_batch(7, 6, 5, 4);
    oracle::DModel dm = oracle::DModel::from(m);
    for (const auto& id : m.weighted_layer_ids()) {
        Tensor g = gradient(m, b, id);
        std::vector<double> fd = oracle::fd_gradient(dm, b, id);
        for (std::size_t k = 0; k < g.numel(); ++k) {
            CHECK(close(g.data[k], fd[k], 1e-4, 1e-5));
        }
    }
}

TEST_CASE("gradient: finite differences across 25 random models (all layer kinds)") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        ModelGraph m = testutil::random_mlp(seed);
        std::size_t in_dim = m.input_dim();
        std::size_t classes = m.output_dim();
        Batch b = testutil::random_batch(seed + 1000, 5, in_dim, classes);
        oracle::DModel dm = oracle::DModel::from(m);
        for (const auto& id : m.weighted_layer_ids()) {
            Tensor g = gradient(m, b, id);
            std::vector<double> fd = oracle::fd_gradient(dm, b, id);
            for (std::size_t k = 0; k < g.numel(); ++k) {
                CAPTURE(seed);
                CAPTURE(id);
                CHECK(close(g.data[k], fd[k], 1e-4, 1e-5));
            }
        }
    }
}

TEST_CASE("hvp: diagonal quadratic head") {
    ModelGraph m = testutil::quad_model({1.0f, 2.0f}, {3.0f, 4.0f});
    Batch b = testutil::unit_batch(2);
    Tensor v({2}, {1.0f, 1.0f});
    Tensor hv = hvp(m, b, "quad", v);
    CHECK(hv.data[0] == doctest::Approx(1.0));
    CHECK(hv.data[1] == doctest::Approx(2.0));

    Tensor z({2}, {0.0f, 0.0f});
    Tensor hz = hvp(m, b, "quad", z);
    CHECK(hz.data[0] == 0.0f);
    CHECK(hz.data[1] == 0.0f);
}

TEST_CASE("hvp: matches finite differences of gradients on a tanh MLP") {
    ModelGraph m = testutil::fixed_tanh_mlp(11, 4, {5, 4, 3});
    Batch b = testutil::random_batch(11, 6, 4, 3);
    oracle::DModel dm = oracle::DModel::from(m);
    KeyedRng rng(11, "hvp-dir", 0);
    for (const auto& id : m.weighted_layer_ids()) {
        const Tensor& w = *m.layer(id).weights;
        Tensor v = Tensor::zeros(w.shape);
        std::vector<double> dv(w.numel());
        for (std::size_t k = 0; k < w.numel(); ++k) {
            dv[k] = rng.next_gaussian();
            v.data[k] = static_cast<float>(dv[k]);
        }
        // The float direction is the ground truth the oracle differentiates.
        for (std::size_t k = 0; k < w.numel(); ++k) dv[k] = v.data[k];
        Tensor hv = hvp(m, b, id, v);
        std::vector<double> fd = oracle::fd_hvp(dm, b, id, dv);
        for (std::size_t k = 0; k < hv.numel(); ++k) {
            CAPTURE(id);
            CHECK(close(hv.data[k], fd[k], 1e-3, 1e-5));
        }
    }
}

TEST_CASE("hvp: linear in the direction") {
    ModelGraph m = testutil::fixed_tanh_mlp(13, 4, {5, 3});
    Batch b = testutil::random_batch(13, 5, 4, 3);
    const std::string id = "fc0";
    const Tensor& w = *m.layer(id).weights;
    KeyedRng rng(13, "lin", 0);
    Tensor u = Tensor::zeros(w.shape);
    Tensor v = Tensor::zeros(w.shape);
    for (std::size_t k = 0; k < w.numel(); ++k) {
        u.data[k] = static_cast<float>(rng.next_gaussian());
        v.data[k] = static_cast<float>(rng.next_gaussian());
    }
    const float a = 0.75f, c = -1.25f;
    Tensor mix = Tensor::zeros(w.shape);
    for (std::size_t k = 0; k < w.numel(); ++k) mix.data[k] = a * u.data[k] + c * v.data[k];

    HvpEngine engine(m, b, id);
    Tensor hu = engine.apply(u);
    Tensor hv = engine.apply(v);
    Tensor hmix = engine.apply(mix);
    for (std::size_t k = 0; k < w.numel(); ++k) {
        double want = a * static_cast<double>(hu.data[k]) + c * static_cast<double>(hv.data[k]);
        CHECK(close(hmix.data[k], want, 1e-6, 1e-6));
    }
}

TEST_CASE("hvp: symmetry u.Hv == v.Hu") {
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
        ModelGraph m = testutil::random_mlp(seed);
        Batch b = testutil::random_batch(seed, 4, m.input_dim(), m.output_dim());
        for (const auto& id : m.weighted_layer_ids()) {
            const Tensor& w = *m.layer(id).weights;
            KeyedRng rng(seed, "sym", 1);
            Tensor u = Tensor::zeros(w.shape);
            Tensor v = Tensor::zeros(w.shape);
            for (std::size_t k = 0; k < w.numel(); ++k) {
                u.data[k] = static_cast<float>(rng.next_gaussian());
                v.data[k] = static_cast<float>(rng.next_gaussian());
            }
            HvpEngine engine(m, b, id);
            Tensor hu = engine.apply(u);
            Tensor hv = engine.apply(v);
            double uhv = 0.0, vhu = 0.0;
            for (std::size_t k = 0; k < w.numel(); ++k) {
                uhv += static_cast<double>(u.data[k]) * hv.data[k];
                vhu += static_cast<double>(v.data[k]) * hu.data[k];
            }
            CHECK(close(uhv, vhu, 1e-6, 1e-6));
        }
    }
}

TEST_CASE("hvp: direction shape must match the layer") {
    ModelGraph m = testutil::fixed_tanh_mlp(3, 4, {3});
    Batch b = testutil::random_batch(3, 4, 4, 3);
    Tensor bad({2}, {1.0f, 1.0f});
    CHECK_THROWS_AS(hvp(m, b, "fc0", bad), Error);
}

TEST_CASE("exact_layer_trace: trace of a diagonal quadratic") {
    ModelGraph m = testutil::quad_model({1.0f, 2.0f, 3.0f}, {0.5f, -0.5f, 2.0f});
    Batch b = testutil::unit_batch(3);
    CHECK(exact_layer_trace(m, b, "quad") == doctest::Approx(6.0));
}

TEST_CASE("exact_layer_trace: matches the dense finite-difference Hessian") {
    // Pure-linear network with cross-entropy on a single sample.
    ModelGraph m = testutil::fixed_tanh_mlp(21, 4, {3});
    Batch b = testutil::random_batch(21, 1, 4, 3);
    double got = exact_layer_trace(m, b, "fc0");
    auto h = oracle::fd_hessian(oracle::DModel::from(m), b, "fc0");
    double want = 0.0;
    for (std::size_t k = 0; k < h.size(); ++k) want += h[k][k];
    CHECK(rel_err(got, want) < 1e-3);
}

TEST_CASE("exact_layer_trace: invariant under batch duplication") {
    ModelGraph m = testutil::fixed_tanh_mlp(23, 4, {4, 3});
    Batch b = testutil::random_batch(23, 5, 4, 3);
    Batch doubled;
    doubled.inputs = Tensor::zeros({10, 4});
    for (int rep = 0; rep < 2; ++rep) {
        std::copy(b.inputs.data.begin(), b.inputs.data.end(),
                  doubled.inputs.data.begin() + rep * 20);
        doubled.labels.insert(doubled.labels.end(), b.labels.begin(), b.labels.end());
    }
    double a = exact_layer_trace(m, b, "fc0");
    double c = exact_layer_trace(m, doubled, "fc0");
    CHECK(rel_err(a, c) < 1e-5);
}

TEST_CASE("exact_layer_trace: rejects layers over the size cap") {
    Layer l;
    l.id = "big";
    l.kind = LayerKind::dense;
    l.weights = Tensor::zeros({101, 101});
    ModelGraph m;
    m.layers.push_back(std::move(l));
    Batch b = testutil::random_batch(1, 2, 101, 101);
    CHECK_THROWS_AS(exact_layer_trace(m, b, "big"), Error);
}

TEST_CASE("engine calls are bitwise deterministic") {
    ModelGraph m = testutil::fixed_tanh_mlp(31, 6, {8, 6, 4});
    Batch b = testutil::random_batch(31, 16, 6, 4);
    EvaluationResult r1 = forward(m, b);
    EvaluationResult r2 = forward(m, b);
    CHECK(r1.loss == r2.loss);
    CHECK(r1.accuracy == r2.accuracy);
    Tensor g1 = gradient(m, b, "fc1");
    Tensor g2 = gradient(m, b, "fc1");
    CHECK(g1 == g2);
    const Tensor& w = *m.layer("fc1").weights;
    Tensor v = Tensor::zeros(w.shape);
    for (std::size_t k = 0; k < v.numel(); ++k) v.data[k] = 0.25f * static_cast<float>(k % 5 - 2);
    Tensor h1 = hvp(m, b, "fc1", v);
    Tensor h2 = hvp(m, b, "fc1", v);
    CHECK(h1 == h2);
}

TEST_CASE("differentiation through quantized views is refused") {
    ModelGraph m = testutil::fixed_tanh_mlp(5, 4, {3, 3});
    m.layers[1].output_quant = QuantParams{8, {1.0f}, Rounding::nearest, GridMode::symmetric};
    Batch b = testutil::random_batch(5, 4, 4, 3);
    CHECK_THROWS_AS(gradient(m, b, "fc0"), Error);
    CHECK_NOTHROW(forward(m, b));
}
