#include "mixq/quant.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixq/error.hpp"

namespace mixq {

namespace {

struct ChannelView {
    std::size_t count;   // channels
    std::size_t stride;  // elements per channel
};

// Channel = leading dimension for rank >= 2, the whole tensor for rank 1.
ChannelView channels_of(const Tensor& x) {
    if (x.ndim() >= 2) return {x.shape[0], x.numel() / x.shape[0]};
    return {1, x.numel()};
}

float scale_for(const QuantParams& p, std::size_t channel) {
    return p.per_channel() ? p.scales[channel] : p.scales[0];
}

long max_level(const QuantParams& p) { return 1L << (p.bits - 1); }

long min_level(const QuantParams& p) { return -(1L << (p.bits - 1)); }

long top_level(const QuantParams& p) {
    return p.grid == GridMode::hardware_int ? (1L << (p.bits - 1)) - 1 : (1L << (p.bits - 1));
}

// Integer level of one value: round(clip(alpha*x) * 2^(b-1)) with the grid
// mode's clamp. Rounding is half away from zero. Also reports whether the
// clip saturated.
long level_of(float x, float alpha, const QuantParams& p, bool* saturated) {
    float t = alpha * x;
    bool sat = t > 1.0f || t < -1.0f;
    t = std::clamp(t, -1.0f, 1.0f);
    long k = std::lround(t * static_cast<float>(max_level(p)));
    k = std::clamp(k, min_level(p), top_level(p));
    if (saturated) *saturated = sat;
    return k;
}

float value_of_level(long k, float alpha, const QuantParams& p) {
    float step_scaled = std::ldexp(1.0f, -(p.bits - 1));  // 2^-(b-1)
    return (static_cast<float>(k) * step_scaled) / alpha;
}

}  // namespace

void QuantParams::validate(std::size_t channels) const {
    // The formula is well-defined for any small width; palettes restrict
    // the widths a config may assign, not what the quantizer can evaluate.
    if (bits < 2 || bits > 16) {
        throw ConfigError("unsupported bit-width " + std::to_string(bits));
    }
    if (scales.empty()) throw ConfigError("quant params carry no scale");
    if (scales.size() != 1 && scales.size() != channels) {
        throw ConfigError("per-channel scale count " + std::to_string(scales.size()) +
                          " does not match channel dim " + std::to_string(channels));
    }
    for (float a : scales) {
        if (!(a > 0.0f) || !std::isfinite(a)) {
            throw ConfigError("quantization scale must be positive and finite");
        }
    }
}

double grid_step(int bits, double alpha) { return std::ldexp(1.0, -(bits - 1)) / alpha; }

Tensor quantize_tensor(const Tensor& x, const QuantParams& p) {
    if (!x.all_finite()) throw DataError("quantize: non-finite input value");
    if (p.bits == 16) return x;  // identity baseline
    ChannelView ch = channels_of(x);
    p.validate(ch.count);
    if (p.rounding == Rounding::case_corrected) return case_round(x, p);

    Tensor out = x;
    for (std::size_t c = 0; c < ch.count; ++c) {
        float alpha = scale_for(p, c);
        float* row = out.data.data() + c * ch.stride;
        for (std::size_t i = 0; i < ch.stride; ++i) {
            row[i] = value_of_level(level_of(row[i], alpha, p, nullptr), alpha, p);
        }
    }
    return out;
}

std::vector<float> weight_scales(const Tensor& w, ScaleGranularity granularity) {
    if (w.numel() == 0) throw DataError("weight_scales: empty tensor");
    auto group_scale = [](const float* v, std::size_t n) {
        float m = 0.0f;
        for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(v[i]));
        return m > 0.0f ? 1.0f / m : 1.0f;  // all-zero group: any scale is exact
    };
    if (granularity == ScaleGranularity::per_tensor) {
        return {group_scale(w.data.data(), w.numel())};
    }
    ChannelView ch = channels_of(w);
    std::vector<float> scales(ch.count);
    for (std::size_t c = 0; c < ch.count; ++c) {
        scales[c] = group_scale(w.data.data() + c * ch.stride, ch.stride);
    }
    return scales;
}

float quantize_value(float x, const QuantParams& p) {
    if (p.bits == 16) return x;
    float alpha = p.scales[0];
    return value_of_level(level_of(x, alpha, p, nullptr), alpha, p);
}

Tensor case_round(const Tensor& w, const QuantParams& p) {
    if (!w.all_finite()) throw DataError("quantize: non-finite input value");
    if (p.bits == 16) return w;
    ChannelView ch = channels_of(w);
    p.validate(ch.count);

    Tensor out = w;
    std::vector<long> levels(ch.stride);
    std::vector<bool> saturated(ch.stride);
    std::vector<double> err(ch.stride);
    std::vector<std::size_t> order(ch.stride);

    for (std::size_t c = 0; c < ch.count; ++c) {
        float alpha = scale_for(p, c);
        const double step = grid_step(p.bits, alpha);
        float* row = out.data.data() + c * ch.stride;

        double sum_err = 0.0;
        for (std::size_t i = 0; i < ch.stride; ++i) {
            bool sat = false;
            levels[i] = level_of(row[i], alpha, p, &sat);
            saturated[i] = sat;
            double q = value_of_level(levels[i], alpha, p);
            err[i] = q - static_cast<double>(row[i]);
            sum_err += err[i];
        }

        const double bound = step / 2.0 + 1e-9 * step;
        if (std::fabs(sum_err) > bound) {
            // Flip candidates: same error sign as the residual; the flip
            // moves the level one step toward the original value's other
            // neighbor, so saturated values (whose other neighbor lies
            // outside the grid) are excluded.
            double s = sum_err > 0.0 ? 1.0 : -1.0;
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return std::fabs(err[a]) > std::fabs(err[b]);
            });
            for (std::size_t oi = 0; oi < order.size() && std::fabs(sum_err) > bound; ++oi) {
                std::size_t i = order[oi];
                if (err[i] * s <= 0.0 || saturated[i]) continue;
                long flipped = levels[i] - static_cast<long>(s);
                if (flipped < min_level(p) || flipped > top_level(p)) continue;
                sum_err -= err[i];
                levels[i] = flipped;
                err[i] = static_cast<double>(value_of_level(flipped, alpha, p)) -
                         static_cast<double>(row[i]);
                sum_err += err[i];
            }
        }
        for (std::size_t i = 0; i < ch.stride; ++i) {
            row[i] = value_of_level(levels[i], alpha, p);
        }
    }
    return out;
}

}  // namespace mixq
