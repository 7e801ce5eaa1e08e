#include "mixq/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

#include "mixq/detail/io.hpp"
#include "mixq/error.hpp"

namespace mixq {

std::string CostKey::to_string() const {
    std::ostringstream os;
    os << '(' << op_kind << ", m=" << m << ", n=" << n << ", k=" << k << ", w" << weight_bits
       << ", a" << act_bits << ')';
    return os.str();
}

void CostTable::add(const CostKey& key, const CostEntry& entry) {
    if (!(entry.latency_us > 0.0)) {
        throw DataError("non-positive latency for key " + key.to_string());
    }
    auto [it, inserted] = entries_.emplace(key, entry);
    if (!inserted) {
        if (it->second.latency_us != entry.latency_us) {
            throw DataError("duplicate cost table key " + key.to_string());
        }
    }
}

const CostEntry* CostTable::find(const CostKey& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::string> CostTable::monotonicity_violations() const {
    std::vector<std::string> warnings;
    for (const auto& [ka, ea] : entries_) {
        for (const auto& [kb, eb] : entries_) {
            if (ka.op_kind != kb.op_kind || ka.m != kb.m || ka.n != kb.n || ka.k != kb.k) continue;
            bool le = ka.weight_bits <= kb.weight_bits && ka.act_bits <= kb.act_bits;
            bool strict = ka.weight_bits < kb.weight_bits || ka.act_bits < kb.act_bits;
            if (le && strict && ea.latency_us > eb.latency_us) {
                warnings.push_back("latency not monotone: " + ka.to_string() + " = " +
                                   detail::fmt_double(ea.latency_us) + " us > " + kb.to_string() +
                                   " = " + detail::fmt_double(eb.latency_us) + " us");
            }
        }
    }
    return warnings;
}

CostTable CostTable::from_csv(const std::filesystem::path& path) {
    std::istringstream in(detail::read_file(path));
    std::string line;
    if (!std::getline(in, line) ||
        line != "op_kind,m,n,k,weight_bits,act_bits,latency_us,provenance") {
        throw DataError("unexpected cost table header in '" + path.string() + "'");
    }
    CostTable table;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string op, m, n, k, wb, ab, lat, prov;
        if (!std::getline(row, op, ',') || !std::getline(row, m, ',') ||
            !std::getline(row, n, ',') || !std::getline(row, k, ',') ||
            !std::getline(row, wb, ',') || !std::getline(row, ab, ',') ||
            !std::getline(row, lat, ',')) {
            throw DataError("malformed cost table row " + std::to_string(lineno) + " in '" +
                            path.string() + "'");
        }
        std::getline(row, prov);
        CostKey key{op, std::strtoll(m.c_str(), nullptr, 10), std::strtoll(n.c_str(), nullptr, 10),
                    std::strtoll(k.c_str(), nullptr, 10), std::atoi(wb.c_str()),
                    std::atoi(ab.c_str())};
        table.add(key, CostEntry{std::strtod(lat.c_str(), nullptr), prov});
    }
    return table;
}

void CostTable::to_csv(const std::filesystem::path& path) const {
    std::ostringstream os;
    os << "op_kind,m,n,k,weight_bits,act_bits,latency_us,provenance\n";
    for (const auto& [key, entry] : entries_) {
        os << key.op_kind << ',' << key.m << ',' << key.n << ',' << key.k << ','
           << key.weight_bits << ',' << key.act_bits << ',' << detail::fmt_double(entry.latency_us)
           << ',' << entry.provenance << '\n';
    }
    detail::write_file_atomic(path, os.str());
}

std::uint64_t layer_macs(const Layer& layer) {
    if (!layer.weighted()) return 0;
    return layer.weight_count();  // out*in for dense, n for the quadratic head
}

CostKey layer_cost_key(const Layer& layer, int weight_bits, int act_bits) {
    CostKey key;
    key.weight_bits = weight_bits;
    key.act_bits = act_bits;
    if (layer.kind == LayerKind::dense) {
        key.op_kind = "dense";
        key.m = static_cast<std::int64_t>(layer.weights->shape[0]);
        key.n = static_cast<std::int64_t>(layer.weights->shape[1]);
        key.k = 1;
    } else {
        key.op_kind = layer_kind_name(layer.kind);
        key.m = static_cast<std::int64_t>(layer.weight_count());
        key.n = 1;
        key.k = 1;
    }
    return key;
}

std::uint64_t model_weight_bits_total(const ModelGraph& model, const QuantConfig& config) {
    std::uint64_t bits = 0;
    for (const auto& l : model.layers) {
        if (!l.weighted()) continue;
        bits += l.weight_count() * static_cast<std::uint64_t>(config.weight_bits_for(l.id));
    }
    return bits;
}

std::uint64_t model_total_bits(const ModelGraph& model, const QuantConfig& config) {
    std::uint64_t bits = model_weight_bits_total(model, config);
    for (const auto& l : model.layers) {
        if (l.bias) bits += l.bias->numel() * 16ULL;
    }
    return bits;
}

double model_size_bytes(const ModelGraph& model, const QuantConfig& config) {
    return static_cast<double>(model_total_bits(model, config)) / 8.0;
}

double model_latency_us(const ModelGraph& model, const QuantConfig& config,
                        const CostTable& table) {
    double total = 0.0;
    std::vector<std::string> missing;
    for (const auto& l : model.layers) {
        if (!l.weighted()) continue;
        CostKey key = layer_cost_key(l, config.weight_bits_for(l.id), config.act_bits_for(l.id));
        const CostEntry* entry = table.find(key);
        if (!entry) {
            missing.push_back(key.to_string());
            continue;
        }
        total += entry->latency_us;
    }
    if (!missing.empty()) {
        std::string msg = "cost table misses " + std::to_string(missing.size()) + " key(s):";
        for (const auto& k : missing) msg += " " + k;
        throw DataError(msg);
    }
    return total;
}

CostTable synth_cost_table(const ModelGraph& model, double us_per_mac,
                           const std::vector<int>& palette) {
    if (!(us_per_mac > 0.0)) throw ConfigError("us_per_mac must be positive");
    CostTable table;
    for (const auto& l : model.layers) {
        if (!l.weighted()) continue;
        const double macs = static_cast<double>(layer_macs(l));
        for (int wb : palette) {
            for (int ab : palette) {
                CostKey key = layer_cost_key(l, wb, ab);
                if (table.find(key)) continue;  // identical shapes share entries
                double latency =
                    macs * (static_cast<double>(std::max(wb, ab)) / 16.0) * us_per_mac + 1.0;
                table.add(key, CostEntry{latency, "synthetic"});
            }
        }
    }
    return table;
}

std::vector<AccuracyLatency> pareto_frontier(const std::vector<AccuracyLatency>& points) {
    for (const auto& p : points) {
        if (!std::isfinite(p.accuracy) || !std::isfinite(p.latency)) {
            throw DataError("non-finite point in frontier input");
        }
    }
    std::vector<AccuracyLatency> sorted = points;
    std::sort(sorted.begin(), sorted.end(), [](const AccuracyLatency& a, const AccuracyLatency& b) {
        if (a.latency != b.latency) return a.latency < b.latency;
        return a.accuracy > b.accuracy;
    });
    std::vector<AccuracyLatency> out;
    double best_accuracy = -std::numeric_limits<double>::infinity();
    for (const auto& p : sorted) {
        if (p.accuracy > best_accuracy) {
            out.push_back(p);
            best_accuracy = p.accuracy;
        }
    }
    return out;
}

CostReport build_cost_report(const ModelGraph& model, const QuantConfig& config,
                             const CostTable& table, double accuracy_abs,
                             const CostBaseline& baseline) {
    CostReport r;
    r.accuracy_abs = accuracy_abs;
    r.accuracy_rel = baseline.accuracy > 0.0 ? accuracy_abs / baseline.accuracy : 0.0;
    r.size_mb = model_size_bytes(model, config) / 1e6;
    std::uint64_t wbits = model_weight_bits_total(model, config);
    r.size_rel = baseline.weight_bits_total
                     ? static_cast<double>(wbits) / static_cast<double>(baseline.weight_bits_total)
                     : 0.0;
    double latency_us = model_latency_us(model, config, table);
    r.latency_ms = latency_us / 1000.0;
    r.latency_rel = baseline.latency_us > 0.0 ? latency_us / baseline.latency_us : 0.0;
    for (const auto& l : model.layers) {
        if (!l.weighted()) continue;
        LayerCostRow row;
        row.layer_id = l.id;
        row.weight_bits = config.weight_bits_for(l.id);
        row.act_bits = config.act_bits_for(l.id);
        row.weight_count = l.weight_count();
        row.weight_bytes =
            static_cast<double>(row.weight_count * static_cast<std::uint64_t>(row.weight_bits)) /
            8.0;
        row.latency_us = table.find(layer_cost_key(l, row.weight_bits, row.act_bits))->latency_us;
        r.layers.push_back(std::move(row));
    }
    return r;
}

}  // namespace mixq
