#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mixq {

// Dense row-major float32 tensor. All layer weights, activations and
// calibration inputs live in this type; 64-bit math is reserved for test
// oracles and statistics.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape_, std::vector<float> data_);

    static Tensor zeros(std::vector<std::size_t> shape_);

    std::size_t numel() const noexcept { return data.size(); }
    std::size_t ndim() const noexcept { return shape.size(); }

    // 2-D accessors; rows() is the channel (output) dimension for weights.
    std::size_t rows() const;
    std::size_t cols() const;
    float& at(std::size_t r, std::size_t c);
    float at(std::size_t r, std::size_t c) const;

    bool all_finite() const noexcept;

    // Throws DataError when dims are invalid, sizes disagree, or (when
    // require_finite) a non-finite value is present.
    void validate(const std::string& what, bool require_finite = true) const;

    bool same_shape(const Tensor& other) const noexcept { return shape == other.shape; }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape == b.shape && a.data == b.data;
    }
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_to_string(const std::vector<std::size_t>& shape);

}  // namespace mixq
