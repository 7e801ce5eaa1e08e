#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mixq/config.hpp"
#include "mixq/costmodel.hpp"
#include "mixq/model.hpp"
#include "mixq/sensitivity.hpp"

namespace mixq {

enum class SearchKind { bisection, progressive };
const char* search_kind_name(SearchKind k);
std::optional<SearchKind> search_kind_from_name(const std::string& name);

struct SearchSpec {
    double accuracy_target = 0.999;      // fraction of baseline accuracy, in (0, 1]
    std::vector<int> bit_palette{16, 8, 4};  // strictly descending
    Metric metric = Metric::aug;
    long max_evals = 100000;

    void validate() const;
};

// Accuracy oracle the searches drive. The production evaluator applies the
// config to the model and measures calibration accuracy; tests substitute
// synthetic evaluators.
class ConfigEvaluator {
public:
    virtual ~ConfigEvaluator() = default;
    virtual double accuracy(const QuantConfig& config) = 0;
    long eval_count() const noexcept { return evals_; }

protected:
    long evals_ = 0;
};

// Full-calibration-set accuracy of apply_config(model, config). Per-layer
// quantized weights are cached per (layer, bits), so repeated search
// evaluations pay only the forward passes.
class CalibConfigEvaluator : public ConfigEvaluator {
public:
    CalibConfigEvaluator(const ModelGraph& model, const CalibrationSet& calib,
                         const ScaleSet& scales, Rounding rounding = Rounding::case_corrected);
    double accuracy(const QuantConfig& config) override;

private:
    const ModelGraph& model_;
    const CalibrationSet& calib_;
    const ScaleSet& scales_;
    Rounding rounding_;
    std::map<std::pair<std::string, int>, Tensor> weight_cache_;
};

double evaluate_config(const ModelGraph& model, const QuantConfig& config,
                       const CalibrationSet& calib, const ScaleSet& scales);

struct TraceStep {
    int bit_level = 16;  // 0 marks the baseline evaluation
    int prefix = 0;      // layers at bit_level (bisection) / layer ordinal (progressive)
    std::string layer_id;
    std::uint64_t config_hash = 0;
    double accuracy = 0.0;
    bool cached = false;
    std::string decision;
};

struct SearchTrace {
    std::vector<TraceStep> steps;
    std::map<int, int> evals_per_level;  // evaluator calls, keyed by bit level
    std::map<int, int> accepted_prefix;  // bisection: accepted prefix per level
    double baseline_accuracy = 0.0;
    double final_accuracy = 0.0;
    bool revalidated_shrink = false;  // final config shrank in the revalidation guard
    bool budget_exceeded = false;

    long eval_total() const noexcept;
};

struct SearchResult {
    QuantConfig config;
    SearchTrace trace;
};

// Bisection over the sensitivity ordering (least sensitive first): per bit
// level, binary-search the largest prefix of the surviving list that keeps
// accuracy >= target * baseline, then hand the accepted prefix to the next
// lower level. The bracket is [lowl, upl) with upl starting at N+1 so the
// full list is reachable; floor midpoints; the loop stops at width <= 1.
// The accepted config is re-evaluated (memoized) and the prefix shrunk
// until it passes, so the returned config always meets the target.
SearchResult bisection_search(const std::vector<std::string>& ordering, const SearchSpec& spec,
                              ConfigEvaluator& evaluator);

// Layer-at-a-time scan per bit level: tentatively assign, keep on pass,
// revert to the last working width on fail; only kept layers advance to the
// next level. Every accepted state was explicitly evaluated, so the final
// config meets the target by construction.
SearchResult progressive_search(const std::vector<std::string>& ordering, const SearchSpec& spec,
                                ConfigEvaluator& evaluator);

SearchResult run_search(SearchKind kind, const std::vector<std::string>& ordering,
                        const SearchSpec& spec, ConfigEvaluator& evaluator);

// Rebuilds the final config from a trace's recorded decisions without any
// model evaluation; replaying a search must reproduce its result exactly.
QuantConfig replay_trace(SearchKind kind, const std::vector<std::string>& ordering,
                         const SearchSpec& spec, const SearchTrace& trace);

// Test oracle over the full configuration space (palette^layers): the
// feasible config minimizing table latency, ties broken by smaller size and
// then lexicographically smaller bits vector in model layer order.
QuantConfig exhaustive_search(const ModelGraph& model, const SearchSpec& spec,
                              ConfigEvaluator& evaluator, const CostTable& table,
                              std::size_t n_max = 12);

}  // namespace mixq
