#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mixq {

// Error taxonomy mapped to CLI exit codes: config errors exit 2, data
// errors exit 3, evaluation-budget exhaustion exits 4.
enum class ErrorKind {
    internal = 1,
    config = 2,
    data = 3,
    budget = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(std::string message)
        : Error(ErrorKind::config, std::move(message)) {}
};

class DataError : public Error {
public:
    explicit DataError(std::string message)
        : Error(ErrorKind::data, std::move(message)) {}
};

// Shape mismatch during graph execution; carries the offending layer id.
class ShapeError : public Error {
public:
    ShapeError(std::string layer_id, const std::string& message)
        : Error(ErrorKind::data, "layer '" + layer_id + "': " + message),
          layer_id_(std::move(layer_id)) {}

    const std::string& layer_id() const noexcept { return layer_id_; }

private:
    std::string layer_id_;
};

class UnknownLayerError : public Error {
public:
    explicit UnknownLayerError(std::string layer_id)
        : Error(ErrorKind::data, "unknown layer id '" + layer_id + "'"),
          layer_id_(std::move(layer_id)) {}

    const std::string& layer_id() const noexcept { return layer_id_; }

private:
    std::string layer_id_;
};

class BudgetExceededError : public Error {
public:
    explicit BudgetExceededError(std::string message)
        : Error(ErrorKind::budget, std::move(message)) {}
};

}  // namespace mixq
