#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mixq/config.hpp"
#include "mixq/model.hpp"

namespace mixq {

struct CostKey {
    std::string op_kind;
    std::int64_t m = 0;
    std::int64_t n = 0;
    std::int64_t k = 0;
    int weight_bits = 16;
    int act_bits = 16;

    auto operator<=>(const CostKey&) const = default;
    std::string to_string() const;
};

struct CostEntry {
    double latency_us = 0.0;
    std::string provenance;
};

// Kernel latency table keyed by (op kind, gemm dims, operand precisions).
// Lookups never interpolate: a missing key is an error listing every absent
// key, since a silent nearest-shape fallback would corrupt comparisons.
class CostTable {
public:
    void add(const CostKey& key, const CostEntry& entry);
    const CostEntry* find(const CostKey& key) const;
    std::size_t size() const noexcept { return entries_.size(); }
    const std::map<CostKey, CostEntry>& entries() const noexcept { return entries_; }

    // For a fixed key-except-bits group, latency must be non-increasing as
    // either operand's bits decrease. Returns human-readable violations.
    std::vector<std::string> monotonicity_violations() const;

    // CSV: op_kind,m,n,k,weight_bits,act_bits,latency_us,provenance
    // UTF-8, '.' decimal, LF line endings; numbers round-trip bit-exactly.
    static CostTable from_csv(const std::filesystem::path& path);
    void to_csv(const std::filesystem::path& path) const;

private:
    std::map<CostKey, CostEntry> entries_;
};

std::uint64_t layer_macs(const Layer& layer);
CostKey layer_cost_key(const Layer& layer, int weight_bits, int act_bits);

// Weight bits under the config (bias excluded); exact integer arithmetic.
std::uint64_t model_weight_bits_total(const ModelGraph& model, const QuantConfig& config);
// Bias tensors stay at the 16-bit baseline width.
std::uint64_t model_total_bits(const ModelGraph& model, const QuantConfig& config);
double model_size_bytes(const ModelGraph& model, const QuantConfig& config);

double model_latency_us(const ModelGraph& model, const QuantConfig& config,
                        const CostTable& table);

// Desk-scale stand-in for profiled kernels: one entry per weighted-layer
// shape and palette bits pair, latency = MACs * (max(wbits, abits)/16) *
// us_per_mac + 1.0 us fixed overhead.
CostTable synth_cost_table(const ModelGraph& model, double us_per_mac,
                           const std::vector<int>& palette = {16, 8, 4});

struct AccuracyLatency {
    double accuracy = 0.0;
    double latency = 0.0;

    friend bool operator==(const AccuracyLatency&, const AccuracyLatency&) = default;
};

// Unique non-dominated points (another point with >= accuracy and <=
// latency, one strict, dominates), sorted by latency ascending.
std::vector<AccuracyLatency> pareto_frontier(const std::vector<AccuracyLatency>& points);

struct LayerCostRow {
    std::string layer_id;
    int weight_bits = 16;
    int act_bits = 16;
    std::uint64_t weight_count = 0;
    double weight_bytes = 0.0;
    double latency_us = 0.0;
};

struct CostBaseline {
    double accuracy = 0.0;
    std::uint64_t weight_bits_total = 0;
    double latency_us = 0.0;
};

struct CostReport {
    double size_mb = 0.0;
    double size_rel = 0.0;  // weight bytes vs baseline weight bytes
    double latency_ms = 0.0;
    double latency_rel = 0.0;
    double accuracy_abs = 0.0;
    double accuracy_rel = 0.0;
    std::vector<LayerCostRow> layers;
};

CostReport build_cost_report(const ModelGraph& model, const QuantConfig& config,
                             const CostTable& table, double accuracy_abs,
                             const CostBaseline& baseline);

}  // namespace mixq
