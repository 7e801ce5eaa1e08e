#include "mixq/detail/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "mixq/error.hpp"

namespace mixq::detail {

namespace {

template <typename T, typename ParseFn>
std::string shortest_repr(T v, ParseFn parse, int max_digits) {
    char buf[64];
    for (int prec = 1; prec <= max_digits; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, static_cast<double>(v));
        if (parse(buf) == v) return buf;
    }
    std::snprintf(buf, sizeof(buf), "%.*g", max_digits, static_cast<double>(v));
    return buf;
}

}  // namespace

std::string fmt_double(double v) {
    return shortest_repr(v, [](const char* s) { return std::strtod(s, nullptr); }, 17);
}

std::string fmt_float(float v) {
    return shortest_repr(v, [](const char* s) { return std::strtof(s, nullptr); }, 9);
}

std::string fmt_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

std::vector<std::uint8_t> read_binary(const std::filesystem::path& path) {
    std::string s = read_file(path);
    return std::vector<std::uint8_t>(s.begin(), s.end());
}

namespace {

void write_atomic_impl(const std::filesystem::path& path, const void* data, std::size_t size) {
    std::filesystem::path dir = path.parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write '" + tmp.string() + "'");
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        if (!out) throw DataError("short write to '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    write_atomic_impl(path, content.data(), content.size());
}

void write_binary_atomic(const std::filesystem::path& path,
                         const std::vector<std::uint8_t>& bytes) {
    write_atomic_impl(path, bytes.data(), bytes.size());
}

std::uint64_t fnv1a64_bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace mixq::detail
