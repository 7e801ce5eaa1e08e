#include "mixq/container.hpp"

#include <bit>
#include <cstring>

#include "mixq/detail/io.hpp"
#include "mixq/error.hpp"

#include <json.hpp>

namespace mixq {

namespace {

using Json = nlohmann::ordered_json;

void append_f32le(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    out.push_back(static_cast<std::uint8_t>(bits & 0xff));
    out.push_back(static_cast<std::uint8_t>((bits >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((bits >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((bits >> 24) & 0xff));
}

void append_i32le(std::vector<std::uint8_t>& out, std::int32_t v) {
    append_f32le(out, std::bit_cast<float>(v));
}

float read_f32le(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
    std::uint32_t bits = static_cast<std::uint32_t>(bytes[offset]) |
                         (static_cast<std::uint32_t>(bytes[offset + 1]) << 8) |
                         (static_cast<std::uint32_t>(bytes[offset + 2]) << 16) |
                         (static_cast<std::uint32_t>(bytes[offset + 3]) << 24);
    return std::bit_cast<float>(bits);
}

std::int32_t read_i32le(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
    return std::bit_cast<std::int32_t>(read_f32le(bytes, offset));
}

Json tensor_entry(const Tensor& t, std::size_t offset) {
    Json e;
    e["shape"] = t.shape;
    e["offset"] = offset;
    return e;
}

Tensor read_tensor(const Json& entry, const std::vector<std::uint8_t>& blob,
                   const std::string& what) {
    std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
    std::size_t offset = entry.at("offset").get<std::size_t>();
    std::size_t count = shape_numel(shape);
    if (offset + count * 4 > blob.size()) {
        throw DataError(what + ": blob too small for tensor at offset " + std::to_string(offset));
    }
    Tensor t = Tensor::zeros(shape);
    for (std::size_t i = 0; i < count; ++i) t.data[i] = read_f32le(blob, offset + 4 * i);
    return t;
}

Json parse_json(const std::filesystem::path& path) {
    try {
        return Json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("cannot parse '" + path.string() + "': " + e.what());
    }
}

}  // namespace

void save_model(const ModelGraph& model, const std::filesystem::path& dir) {
    model.validate();
    std::vector<std::uint8_t> blob;
    Json manifest;
    manifest["container"] = "model";
    manifest["version"] = 1;
    Json layers = Json::array();
    for (const auto& l : model.layers) {
        Json e;
        e["id"] = l.id;
        e["kind"] = layer_kind_name(l.kind);
        if (l.weights) {
            e["weights"] = tensor_entry(*l.weights, blob.size());
            for (float v : l.weights->data) append_f32le(blob, v);
        }
        if (l.bias) {
            e["bias"] = tensor_entry(*l.bias, blob.size());
            for (float v : l.bias->data) append_f32le(blob, v);
        }
        layers.push_back(std::move(e));
    }
    manifest["layers"] = std::move(layers);
    std::filesystem::create_directories(dir);
    detail::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
    detail::write_binary_atomic(dir / "weights.bin", blob);
}

ModelGraph load_model(const std::filesystem::path& dir) {
    Json manifest = parse_json(dir / "manifest.json");
    if (manifest.value("container", "") != "model") {
        throw DataError("'" + (dir / "manifest.json").string() + "' is not a model manifest");
    }
    std::vector<std::uint8_t> blob = detail::read_binary(dir / "weights.bin");
    ModelGraph model;
    for (const auto& e : manifest.at("layers")) {
        Layer l;
        l.id = e.at("id").get<std::string>();
        auto kind = layer_kind_from_name(e.at("kind").get<std::string>());
        if (!kind) {
            throw DataError("layer '" + l.id + "': unknown kind '" +
                            e.at("kind").get<std::string>() + "'");
        }
        l.kind = *kind;
        if (e.contains("weights")) {
            l.weights = read_tensor(e.at("weights"), blob, "weights of '" + l.id + "'");
        }
        if (e.contains("bias")) {
            l.bias = read_tensor(e.at("bias"), blob, "bias of '" + l.id + "'");
        }
        model.layers.push_back(std::move(l));
    }
    model.validate();
    return model;
}

void save_calibration(const Tensor& inputs, const std::vector<std::int32_t>& labels,
                      const std::filesystem::path& dir) {
    inputs.validate("calibration inputs");
    if (inputs.ndim() != 2 || inputs.shape[0] != labels.size()) {
        throw DataError("calibration inputs must be [n, d] with one label per row");
    }
    std::vector<std::uint8_t> blob;
    Json manifest;
    manifest["container"] = "calibration";
    manifest["version"] = 1;
    manifest["inputs"] = tensor_entry(inputs, 0);
    for (float v : inputs.data) append_f32le(blob, v);
    Json lab;
    lab["count"] = labels.size();
    lab["offset"] = blob.size();
    manifest["labels"] = std::move(lab);
    for (std::int32_t v : labels) append_i32le(blob, v);
    std::filesystem::create_directories(dir);
    detail::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
    detail::write_binary_atomic(dir / "data.bin", blob);
}

CalibrationSet load_calibration(const std::filesystem::path& dir, std::size_t batch_size) {
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    Json manifest = parse_json(dir / "manifest.json");
    if (manifest.value("container", "") != "calibration") {
        throw DataError("'" + (dir / "manifest.json").string() + "' is not a calibration manifest");
    }
    std::vector<std::uint8_t> blob = detail::read_binary(dir / "data.bin");
    Tensor inputs = read_tensor(manifest.at("inputs"), blob, "calibration inputs");
    std::size_t count = manifest.at("labels").at("count").get<std::size_t>();
    std::size_t offset = manifest.at("labels").at("offset").get<std::size_t>();
    if (offset + count * 4 > blob.size()) throw DataError("calibration blob too small for labels");
    std::vector<std::int32_t> labels(count);
    for (std::size_t i = 0; i < count; ++i) labels[i] = read_i32le(blob, offset + 4 * i);
    if (inputs.ndim() != 2 || inputs.shape[0] != count) {
        throw DataError("calibration inputs/labels disagree on sample count");
    }

    CalibrationSet calib;
    const std::size_t n = count;
    const std::size_t d = inputs.shape[1];
    for (std::size_t start = 0; start < n; start += batch_size) {
        std::size_t rows = std::min(batch_size, n - start);
        Batch b;
        b.inputs = Tensor::zeros({rows, d});
        std::copy(inputs.data.begin() + static_cast<std::ptrdiff_t>(start * d),
                  inputs.data.begin() + static_cast<std::ptrdiff_t>((start + rows) * d),
                  b.inputs.data.begin());
        b.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(start),
                        labels.begin() + static_cast<std::ptrdiff_t>(start + rows));
        calib.batches.push_back(std::move(b));
    }
    if (calib.empty()) throw DataError("calibration set is empty");
    return calib;
}

void save_scales(const ScaleSet& scales, const ModelGraph& model,
                 const std::filesystem::path& file) {
    Json doc;
    Json layers;
    for (const auto& l : model.layers) {
        Json e;
        Json ws = Json::array();
        auto wit = scales.weight_scales.find(l.id);
        if (wit != scales.weight_scales.end()) {
            for (float s : wit->second) ws.push_back(s);
        }
        e["weight_scales"] = std::move(ws);
        auto ait = scales.act_scales.find(l.id);
        e["act_scale"] = ait != scales.act_scales.end() ? ait->second : 1.0f;
        e["bits_used_for_calibration"] = scales.calibration_bits;
        layers[l.id] = std::move(e);
    }
    doc["layers"] = std::move(layers);
    detail::write_file_atomic(file, doc.dump(2) + "\n");
}

ScaleSet load_scales(const std::filesystem::path& file) {
    Json doc = parse_json(file);
    ScaleSet scales;
    for (const auto& [id, e] : doc.at("layers").items()) {
        std::vector<float> ws;
        for (const auto& v : e.at("weight_scales")) ws.push_back(v.get<float>());
        if (!ws.empty()) scales.weight_scales[id] = std::move(ws);
        scales.act_scales[id] = e.at("act_scale").get<float>();
        scales.calibration_bits = e.at("bits_used_for_calibration").get<int>();
    }
    return scales;
}

}  // namespace mixq
