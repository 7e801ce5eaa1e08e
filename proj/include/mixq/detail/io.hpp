#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mixq::detail {

// Shortest decimal string that parses back to exactly the same value.
// Locale-independent ('.' decimal point), used for every CSV/JSON number we
// emit so artifacts are byte-stable.
std::string fmt_double(double v);
std::string fmt_float(float v);
// Fixed decimals, for human-facing report columns.
std::string fmt_fixed(double v, int decimals);

std::string read_file(const std::filesystem::path& path);
std::vector<std::uint8_t> read_binary(const std::filesystem::path& path);

// Write to a temp file in the same directory, then rename over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
void write_binary_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

std::uint64_t fnv1a64_bytes(const void* data, std::size_t size);

}  // namespace mixq::detail
