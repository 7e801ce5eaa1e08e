#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mixq/config.hpp"
#include "mixq/model.hpp"

namespace mixq {

enum class Metric { hessian, interlayer, aug };
const char* metric_name(Metric m);
std::optional<Metric> metric_from_name(const std::string& name);

// Hessian trace reporting: raw Hutchinson estimate or mean over the layer's
// parameters (trace / weight_count).
enum class HessianNorm { per_param_mean, raw };

// Negative excess-degradation handling: clip each pair term at 0 before
// summing, or clip the final sum.
enum class ClipMode { per_term, final_sum };

// Hutchinson estimate of tr(d^2 L / d w_i^2): mean over n_samples of
// v^T H v with v i.i.d. Rademacher drawn from a counter-based stream keyed
// by (seed, layer_id, sample index). Deterministic for fixed arguments and
// independent of worker count.
double hutchinson_trace(const ModelGraph& model, const Batch& batch, const std::string& layer_id,
                        int n_samples, std::uint64_t seed, unsigned workers = 0);

struct DegradationMatrix {
    std::vector<std::string> layer_ids;  // weighted layers, model order
    std::vector<double> values;          // n x n, symmetric, zero diagonal
    int bits_used = 8;
    double baseline_loss = 0.0;          // unquantized calibration loss
    std::vector<double> single_losses;   // loss with exactly layer i quantized
    long eval_count = 0;                 // model evaluations spent: l(l-1)/2 + l + 1

    double at(std::size_t i, std::size_t j) const { return values[i * layer_ids.size() + j]; }
};

// Pairwise excess degradation at one working precision: D[i][j] =
// L(pair i,j quantized) - max(L(only i), L(only j)) over the mean
// calibration loss, weights-only quantization. Pair evaluations run as
// independent tasks; the reduction order is fixed.
DegradationMatrix interlayer_matrix(const ModelGraph& model, const CalibrationSet& calib, int bits,
                                    const std::vector<int>& palette, const ScaleSet& scales,
                                    unsigned workers = 0);

std::vector<double> interlayer_score(const DegradationMatrix& d,
                                     ClipMode clip = ClipMode::per_term);

struct CombineResult {
    double beta = 0.0;
    std::vector<double> e_aug;
};

// beta = mean(e_hessian) / mean(e_interlayer); e_aug = e_hessian +
// beta * e_interlayer. A zero-mean interlayer vector degenerates to beta=0.
CombineResult combine(const std::vector<double>& e_hessian,
                      const std::vector<double>& e_interlayer);

struct SensitivityReport {
    std::vector<std::string> layer_ids;  // weighted layers, model order
    std::vector<double> e_hessian;
    std::vector<double> e_interlayer;
    std::vector<double> e_aug;
    double beta = 0.0;
    Metric metric_used = Metric::aug;
    std::vector<std::string> ordering;  // ascending by metric_used

    const std::vector<double>& scores_for(Metric m) const;
};

// Ascending stable sort (least sensitive first; ties keep model order).
std::vector<std::string> sensitivity_order(const std::vector<std::string>& layer_ids,
                                           const std::vector<double>& scores);

struct SensitivityParams {
    int n_hutchinson = 256;
    std::uint64_t seed = 0;
    HessianNorm norm = HessianNorm::per_param_mean;
    ClipMode clip = ClipMode::per_term;
    Metric metric = Metric::aug;
    std::vector<int> palette{16, 8, 4};
    unsigned workers = 0;
};

struct SensitivityResult {
    SensitivityReport report;
    DegradationMatrix degradation;
};

SensitivityResult analyze_sensitivity(const ModelGraph& model, const CalibrationSet& calib,
                                      const ScaleSet& scales, const SensitivityParams& params);

// sensitivity.csv: layer_id,e_hessian,e_interlayer,e_aug,rank
void write_sensitivity_csv(const SensitivityReport& report, const std::filesystem::path& path);
SensitivityReport read_sensitivity_csv(const std::filesystem::path& path);
// degradation_matrix.csv: dense matrix with a header row/column of ids.
void write_degradation_csv(const DegradationMatrix& d, const std::filesystem::path& path);

}  // namespace mixq
