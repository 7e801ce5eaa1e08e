#include "mixq/datagen.hpp"

#include <algorithm>
#include <cmath>

#include "mixq/error.hpp"
#include "mixq/rng.hpp"

namespace mixq {

namespace {

// Class means on a sphere of mean_radius, drawn from the seeded stream the
// prototype classifier also uses. Gram-Schmidt keeps the classes mutually
// orthogonal so the projection layer separates them cleanly.
std::vector<std::vector<float>> cluster_means(std::uint64_t seed, std::size_t n_classes,
                                              std::size_t dim, double radius) {
    std::vector<std::vector<double>> basis(n_classes, std::vector<double>(dim));
    for (std::size_t c = 0; c < n_classes; ++c) {
        KeyedRng rng(seed, "cluster-means", c);
        for (std::size_t j = 0; j < dim; ++j) basis[c][j] = rng.next_gaussian();
        for (std::size_t p = 0; p < c; ++p) {
            double dot = 0.0;
            for (std::size_t j = 0; j < dim; ++j) dot += basis[c][j] * basis[p][j];
            for (std::size_t j = 0; j < dim; ++j) basis[c][j] -= dot * basis[p][j];
        }
        double norm2 = 0.0;
        for (std::size_t j = 0; j < dim; ++j) norm2 += basis[c][j] * basis[c][j];
        double inv = 1.0 / std::sqrt(std::max(norm2, 1e-12));
        for (std::size_t j = 0; j < dim; ++j) basis[c][j] *= inv;
    }
    std::vector<std::vector<float>> means(n_classes, std::vector<float>(dim));
    for (std::size_t c = 0; c < n_classes; ++c) {
        for (std::size_t j = 0; j < dim; ++j) {
            means[c][j] = static_cast<float>(radius * basis[c][j]);
        }
    }
    return means;
}

}  // namespace

ClusterData make_cluster_data(const ClusterTaskSpec& spec) {
    if (spec.n_samples == 0 || spec.n_classes == 0 || spec.input_dim == 0) {
        throw ConfigError("cluster task dims must be positive");
    }
    auto means = cluster_means(spec.seed, spec.n_classes, spec.input_dim, spec.mean_radius);
    ClusterData data;
    data.inputs = Tensor::zeros({spec.n_samples, spec.input_dim});
    data.labels.resize(spec.n_samples);
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        std::int32_t label = static_cast<std::int32_t>(i % spec.n_classes);
        data.labels[i] = label;
        KeyedRng rng(spec.seed, "cluster-sample", i);
        for (std::size_t j = 0; j < spec.input_dim; ++j) {
            double v = means[static_cast<std::size_t>(label)][j] +
                       spec.noise_sigma * rng.next_gaussian();
            data.inputs.at(i, j) = static_cast<float>(v);
        }
    }
    return data;
}

CalibrationSet make_cluster_calibration(const ClusterTaskSpec& spec, std::size_t batch_size) {
    ClusterData data = make_cluster_data(spec);
    CalibrationSet calib;
    const std::size_t n = spec.n_samples;
    const std::size_t d = spec.input_dim;
    for (std::size_t start = 0; start < n; start += batch_size) {
        std::size_t rows = std::min(batch_size, n - start);
        Batch b;
        b.inputs = Tensor::zeros({rows, d});
        std::copy(data.inputs.data.begin() + static_cast<std::ptrdiff_t>(start * d),
                  data.inputs.data.begin() + static_cast<std::ptrdiff_t>((start + rows) * d),
                  b.inputs.data.begin());
        b.labels.assign(data.labels.begin() + static_cast<std::ptrdiff_t>(start),
                        data.labels.begin() + static_cast<std::ptrdiff_t>(start + rows));
        calib.batches.push_back(std::move(b));
    }
    return calib;
}

ModelGraph make_prototype_classifier(const PrototypeMlpSpec& spec) {
    if (spec.n_dense < 2) throw ConfigError("prototype classifier needs at least 2 dense layers");
    if (spec.hidden_dim < spec.n_classes) {
        throw ConfigError("hidden width must be at least the class count");
    }
    auto means = cluster_means(spec.seed, spec.n_classes, spec.input_dim, /*radius=*/1.0);

    ModelGraph model;
    auto add_dense = [&](const std::string& id, Tensor w) {
        Layer l;
        l.id = id;
        l.kind = LayerKind::dense;
        l.bias = Tensor::zeros({w.shape[0]});
        l.weights = std::move(w);
        model.layers.push_back(std::move(l));
    };
    auto add_act = [&](const std::string& id) {
        Layer l;
        l.id = id;
        l.kind = LayerKind::tanh;
        model.layers.push_back(std::move(l));
    };

    // Input projection: hidden unit r listens to class r % C.
    {
        Tensor w = Tensor::zeros({spec.hidden_dim, spec.input_dim});
        KeyedRng rng(spec.seed, "proto-layer", 0);
        for (std::size_t r = 0; r < spec.hidden_dim; ++r) {
            const auto& mu = means[r % spec.n_classes];
            for (std::size_t j = 0; j < spec.input_dim; ++j) {
                w.at(r, j) = static_cast<float>(spec.proj_scale * mu[j] +
                                                spec.weight_noise * rng.next_gaussian());
            }
        }
        add_dense("fc0", std::move(w));
        add_act("act0");
    }

    // Near-identity middle layers keep the sign pattern alive through tanh.
    for (std::size_t k = 1; k + 1 < spec.n_dense; ++k) {
        Tensor w = Tensor::zeros({spec.hidden_dim, spec.hidden_dim});
        KeyedRng rng(spec.seed, "proto-layer", k);
        for (std::size_t r = 0; r < spec.hidden_dim; ++r) {
            for (std::size_t c = 0; c < spec.hidden_dim; ++c) {
                double v = (r == c ? spec.gain : 0.0) + spec.weight_noise * rng.next_gaussian();
                w.at(r, c) = static_cast<float>(v);
            }
        }
        add_dense("fc" + std::to_string(k), std::move(w));
        add_act("act" + std::to_string(k));
    }

    // Readout averages each class's hidden units.
    {
        Tensor w = Tensor::zeros({spec.n_classes, spec.hidden_dim});
        KeyedRng rng(spec.seed, "proto-layer", spec.n_dense - 1);
        const double unit = static_cast<double>(spec.n_classes) /
                            static_cast<double>(spec.hidden_dim);
        for (std::size_t c = 0; c < spec.n_classes; ++c) {
            for (std::size_t j = 0; j < spec.hidden_dim; ++j) {
                double v = (j % spec.n_classes == c ? 2.0 * unit : 0.0) +
                           spec.weight_noise * rng.next_gaussian();
                w.at(c, j) = static_cast<float>(v);
            }
        }
        add_dense("fc" + std::to_string(spec.n_dense - 1), std::move(w));
    }

    Layer head;
    head.id = "head";
    head.kind = LayerKind::softmax_xent;
    model.layers.push_back(std::move(head));
    model.validate();
    return model;
}

}  // namespace mixq
