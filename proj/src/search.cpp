#include "mixq/search.hpp"

#include <algorithm>

#include "mixq/engine.hpp"
#include "mixq/error.hpp"

namespace mixq {

const char* search_kind_name(SearchKind k) {
    return k == SearchKind::bisection ? "bisection" : "progressive";
}

std::optional<SearchKind> search_kind_from_name(const std::string& name) {
    if (name == "bisection") return SearchKind::bisection;
    if (name == "progressive") return SearchKind::progressive;
    return std::nullopt;
}

void SearchSpec::validate() const {
    if (!(accuracy_target > 0.0) || accuracy_target > 1.0) {
        throw ConfigError("accuracy target must lie in (0, 1]");
    }
    if (bit_palette.size() < 2) throw ConfigError("bit palette needs at least 2 widths");
    for (std::size_t i = 1; i < bit_palette.size(); ++i) {
        if (bit_palette[i] >= bit_palette[i - 1]) {
            throw ConfigError("bit palette must be strictly descending");
        }
    }
    if (max_evals < 1) throw ConfigError("max_evals must be positive");
}

CalibConfigEvaluator::CalibConfigEvaluator(const ModelGraph& model, const CalibrationSet& calib,
                                           const ScaleSet& scales, Rounding rounding)
    : model_(model), calib_(calib), scales_(scales), rounding_(rounding) {
    if (calib.empty()) throw DataError("empty calibration set");
}

double CalibConfigEvaluator::accuracy(const QuantConfig& config) {
    ++evals_;
    // Assemble the quantized view from cached per-(layer, bits) tensors.
    ModelGraph view = model_;
    for (std::size_t i = 0; i < view.layers.size(); ++i) {
        Layer& l = view.layers[i];
        if (!l.weighted()) continue;
        int wb = config.weight_bits_for(l.id);
        if (wb != 16) {
            auto key = std::make_pair(l.id, wb);
            auto it = weight_cache_.find(key);
            if (it == weight_cache_.end()) {
                auto sit = scales_.weight_scales.find(l.id);
                if (sit == scales_.weight_scales.end()) {
                    throw ConfigError("missing weight scales for quantized layer '" + l.id + "'");
                }
                QuantParams p{wb, sit->second, rounding_, GridMode::symmetric};
                it = weight_cache_.emplace(key, quantize_tensor(*l.weights, p)).first;
            }
            l.weights = it->second;
        }
        int ab = config.act_bits_for(l.id);
        if (ab != 16 && i > 0) {
            Layer& producer = view.layers[i - 1];
            auto ait = scales_.act_scales.find(producer.id);
            if (ait == scales_.act_scales.end()) {
                throw ConfigError("missing activation scale for layer '" + producer.id + "'");
            }
            producer.output_quant =
                QuantParams{ab, {ait->second}, Rounding::nearest, GridMode::symmetric};
        }
    }
    std::size_t total = 0;
    double correct = 0.0;
    for (const auto& batch : calib_.batches) {
        EvaluationResult r = forward(view, batch);
        correct += r.accuracy * static_cast<double>(batch.size());
        total += batch.size();
    }
    return correct / static_cast<double>(total);
}

double evaluate_config(const ModelGraph& model, const QuantConfig& config,
                       const CalibrationSet& calib, const ScaleSet& scales) {
    CalibConfigEvaluator evaluator(model, calib, scales);
    return evaluator.accuracy(config);
}

long SearchTrace::eval_total() const noexcept {
    long n = 0;
    for (const auto& [level, count] : evals_per_level) n += count;
    return n;
}

namespace {

// Shared state for one search run: memoizes evaluator calls by config hash
// so revalidating an already-seen configuration costs nothing, and enforces
// the evaluation budget.
struct SearchDriver {
    ConfigEvaluator& evaluator;
    const SearchSpec& spec;
    SearchTrace trace;
    std::map<std::uint64_t, double> memo;

    double eval(const QuantConfig& cfg, int level, int prefix, const std::string& layer_id,
                const char* what) {
        std::uint64_t h = cfg.hash();
        auto it = memo.find(h);
        bool cached = it != memo.end();
        double acc;
        if (cached) {
            acc = it->second;
        } else {
            if (trace.eval_total() >= spec.max_evals) {
                trace.budget_exceeded = true;
                throw BudgetExceededError("search exceeded max_evals = " +
                                          std::to_string(spec.max_evals));
            }
            acc = evaluator.accuracy(cfg);
            memo.emplace(h, acc);
            ++trace.evals_per_level[level];
        }
        trace.steps.push_back({level, prefix, layer_id, h, acc, cached, what});
        return acc;
    }
};

QuantConfig prefix_config(const QuantConfig& base, const std::vector<std::string>& ll, int prefix,
                          int bits) {
    QuantConfig cfg = base;
    for (int i = 0; i < prefix; ++i) cfg.set_layer_bits(ll[static_cast<std::size_t>(i)], bits);
    return cfg;
}

}  // namespace

SearchResult bisection_search(const std::vector<std::string>& ordering, const SearchSpec& spec,
                              ConfigEvaluator& evaluator) {
    spec.validate();
    SearchDriver drv{evaluator, spec, {}, {}};

    QuantConfig work;
    for (const auto& id : ordering) work.set_layer_bits(id, spec.bit_palette[0]);
    drv.trace.baseline_accuracy = drv.eval(work, 0, 0, "", "baseline");
    const double threshold = spec.accuracy_target * drv.trace.baseline_accuracy;
    double final_accuracy = drv.trace.baseline_accuracy;

    std::vector<std::string> ll = ordering;
    try {
        for (std::size_t bi = 1; bi < spec.bit_palette.size(); ++bi) {
            const int b = spec.bit_palette[bi];
            const int n = static_cast<int>(ll.size());
            drv.trace.evals_per_level.emplace(b, 0);
            if (n == 0) {
                drv.trace.accepted_prefix[b] = 0;
                continue;
            }
            // Bracket invariant: prefix lowl passes (0 = untouched config,
            // feasible by induction), upl is an exclusive fail bound. The
            // N+1 start makes the full list reachable.
            int lowl = 0;
            int upl = n + 1;
            while (upl - lowl > 1) {
                int thr = (lowl + upl) / 2;
                double acc = drv.eval(prefix_config(work, ll, thr, b), b, thr, "", "probe");
                if (acc >= threshold) {
                    drv.trace.steps.back().decision = "pass";
                    lowl = thr;
                } else {
                    drv.trace.steps.back().decision = "fail";
                    upl = thr;
                }
            }
            int thr = lowl;
            // Revalidation guard: the algorithm as stated can exit right
            // after a failing probe; re-check the accepted prefix and
            // shrink until it passes.
            while (thr > 0) {
                double acc = drv.eval(prefix_config(work, ll, thr, b), b, thr, "", "revalidate");
                if (acc >= threshold) {
                    drv.trace.steps.back().decision = "revalidate_pass";
                    final_accuracy = acc;
                    break;
                }
                drv.trace.steps.back().decision = "revalidate_fail";
                drv.trace.revalidated_shrink = true;
                --thr;
            }
            work = prefix_config(work, ll, thr, b);
            drv.trace.accepted_prefix[b] = thr;
            ll.assign(ll.begin(), ll.begin() + thr);
        }
    } catch (const BudgetExceededError&) {
        // Partial result: the working config only ever contains accepted
        // prefixes, so it still meets the target; the trace carries the flag.
    }
    drv.trace.final_accuracy = final_accuracy;
    return {work, std::move(drv.trace)};
}

SearchResult progressive_search(const std::vector<std::string>& ordering, const SearchSpec& spec,
                                ConfigEvaluator& evaluator) {
    spec.validate();
    SearchDriver drv{evaluator, spec, {}, {}};

    QuantConfig work;
    for (const auto& id : ordering) work.set_layer_bits(id, spec.bit_palette[0]);
    drv.trace.baseline_accuracy = drv.eval(work, 0, 0, "", "baseline");
    const double threshold = spec.accuracy_target * drv.trace.baseline_accuracy;
    double final_accuracy = drv.trace.baseline_accuracy;

    std::vector<std::string> ll = ordering;
    try {
        for (std::size_t bi = 1; bi < spec.bit_palette.size(); ++bi) {
            const int b = spec.bit_palette[bi];
            drv.trace.evals_per_level.emplace(b, 0);
            std::vector<std::string> kept;
            int ordinal = 0;
            for (const auto& id : ll) {
                ++ordinal;
                QuantConfig trial = work;
                trial.set_layer_bits(id, b);
                double acc = drv.eval(trial, b, ordinal, id, "tentative");
                if (acc >= threshold) {
                    // Keep: the tentative width becomes the new working value.
                    work = trial;
                    kept.push_back(id);
                    final_accuracy = acc;
                    drv.trace.steps.back().decision = "keep";
                } else {
                    // Revert to the last working value (work was not updated).
                    drv.trace.steps.back().decision = "revert";
                }
            }
            ll = std::move(kept);
        }
    } catch (const BudgetExceededError&) {
    }
    drv.trace.final_accuracy = final_accuracy;
    return {work, std::move(drv.trace)};
}

SearchResult run_search(SearchKind kind, const std::vector<std::string>& ordering,
                        const SearchSpec& spec, ConfigEvaluator& evaluator) {
    return kind == SearchKind::bisection ? bisection_search(ordering, spec, evaluator)
                                         : progressive_search(ordering, spec, evaluator);
}

QuantConfig replay_trace(SearchKind kind, const std::vector<std::string>& ordering,
                         const SearchSpec& spec, const SearchTrace& trace) {
    QuantConfig work;
    for (const auto& id : ordering) work.set_layer_bits(id, spec.bit_palette[0]);
    std::vector<std::string> ll = ordering;
    for (std::size_t bi = 1; bi < spec.bit_palette.size(); ++bi) {
        const int b = spec.bit_palette[bi];
        if (kind == SearchKind::bisection) {
            auto it = trace.accepted_prefix.find(b);
            if (it == trace.accepted_prefix.end()) break;  // budget cut the run short
            int thr = it->second;
            for (int i = 0; i < thr; ++i) work.set_layer_bits(ll[static_cast<std::size_t>(i)], b);
            ll.assign(ll.begin(), ll.begin() + thr);
        } else {
            std::vector<std::string> kept;
            for (const auto& step : trace.steps) {
                if (step.bit_level != b) continue;
                if (step.decision == "keep") {
                    work.set_layer_bits(step.layer_id, b);
                    kept.push_back(step.layer_id);
                }
            }
            ll = std::move(kept);
        }
    }
    return work;
}

QuantConfig exhaustive_search(const ModelGraph& model, const SearchSpec& spec,
                              ConfigEvaluator& evaluator, const CostTable& table,
                              std::size_t n_max) {
    spec.validate();
    const std::vector<std::string> ids = model.weighted_layer_ids();
    if (ids.size() > n_max) {
        throw ConfigError("exhaustive search capped at " + std::to_string(n_max) + " layers, got " +
                          std::to_string(ids.size()));
    }
    if (spec.bit_palette.size() > 3) {
        throw ConfigError("exhaustive search capped at palette size 3");
    }

    const double baseline = evaluator.accuracy(QuantConfig::uniform(model, spec.bit_palette[0]));
    const double threshold = spec.accuracy_target * baseline;

    struct Best {
        bool set = false;
        QuantConfig config;
        double latency = 0.0;
        std::uint64_t bits = 0;
        std::vector<int> assignment;
    } best;

    std::vector<int> assignment(ids.size(), 0);  // palette indices
    for (;;) {
        QuantConfig cfg;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            cfg.set_layer_bits(ids[i], spec.bit_palette[static_cast<std::size_t>(assignment[i])]);
        }
        double acc = evaluator.accuracy(cfg);
        if (acc >= threshold) {
            double latency = model_latency_us(model, cfg, table);
            std::uint64_t bits = model_weight_bits_total(model, cfg);
            std::vector<int> bits_vec(ids.size());
            for (std::size_t i = 0; i < ids.size(); ++i) {
                bits_vec[i] = spec.bit_palette[static_cast<std::size_t>(assignment[i])];
            }
            bool better = !best.set;
            if (!better && latency != best.latency) better = latency < best.latency;
            else if (!better && bits != best.bits) better = bits < best.bits;
            else if (!better) better = bits_vec < best.assignment;
            if (better) {
                best = {true, cfg, latency, bits, bits_vec};
            }
        }
        // Advance the mixed-radix counter.
        std::size_t pos = 0;
        while (pos < assignment.size()) {
            if (++assignment[pos] < static_cast<int>(spec.bit_palette.size())) break;
            assignment[pos] = 0;
            ++pos;
        }
        if (pos == assignment.size()) break;
    }
    if (!best.set) {
        // Nothing feasible except the baseline (which always is, target <= 1).
        return QuantConfig::uniform(model, spec.bit_palette[0]);
    }
    return best.config;
}

}  // namespace mixq
