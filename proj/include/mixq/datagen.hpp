#pragma once

#include <cstdint>

#include "mixq/model.hpp"

namespace mixq {

// Synthetic Gaussian-cluster classification task plus a deterministic
// prototype classifier sized for desk-scale experiments. Model and data are
// tied through the seed: the first dense layer projects onto the same class
// means the sampler draws from, so the untrained network classifies the
// clusters well and quantization degrades it in a measurable way.

struct ClusterTaskSpec {
    std::size_t n_samples = 2048;
    std::size_t input_dim = 8;
    std::size_t n_classes = 4;
    double mean_radius = 2.0;
    double noise_sigma = 0.38;
    std::uint64_t seed = 42;
};

struct ClusterData {
    Tensor inputs;
    std::vector<std::int32_t> labels;
};

ClusterData make_cluster_data(const ClusterTaskSpec& spec);
CalibrationSet make_cluster_calibration(const ClusterTaskSpec& spec, std::size_t batch_size = 256);

struct PrototypeMlpSpec {
    std::size_t input_dim = 8;
    std::size_t hidden_dim = 16;
    std::size_t n_classes = 4;
    std::size_t n_dense = 12;  // weighted layers; tanh between, softmax head last
    double gain = 0.95;        // near-identity gain of the middle layers
    double proj_scale = 0.6;   // input projection onto the class means
    double weight_noise = 0.05;
    std::uint64_t seed = 42;
};

ModelGraph make_prototype_classifier(const PrototypeMlpSpec& spec);

}  // namespace mixq
