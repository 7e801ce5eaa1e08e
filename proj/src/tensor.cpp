#include "mixq/tensor.hpp"

#include <cmath>
#include <sstream>

#include "mixq/error.hpp"

namespace mixq {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<float> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (shape_numel(shape) != data.size()) {
        throw DataError("tensor data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_to_string(shape));
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape_) {
    Tensor t;
    t.data.assign(shape_numel(shape_), 0.0f);
    t.shape = std::move(shape_);
    return t;
}

std::size_t Tensor::rows() const {
    if (shape.empty()) throw DataError("rows() on rank-0 tensor");
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (shape.size() < 2) return 1;
    std::size_t c = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
    return c;
}

float& Tensor::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }

float Tensor::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

bool Tensor::all_finite() const noexcept {
    for (float v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::validate(const std::string& what, bool require_finite) const {
    for (std::size_t d : shape) {
        if (d == 0) throw DataError(what + ": zero-sized dimension in " + shape_to_string(shape));
    }
    if (shape_numel(shape) != data.size()) {
        throw DataError(what + ": data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_to_string(shape));
    }
    if (require_finite && !all_finite()) {
        throw DataError(what + ": non-finite value in tensor");
    }
}

}  // namespace mixq
