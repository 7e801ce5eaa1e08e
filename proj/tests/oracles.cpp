#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oracle {

using mixq::Batch;
using mixq::LayerKind;
using mixq::ModelGraph;

DModel DModel::from(const ModelGraph& model) {
    DModel dm;
    for (const auto& l : model.layers) {
        DLayer dl;
        dl.kind = l.kind;
        dl.id = l.id;
        if (l.weights) {
            if (l.weights->ndim() == 2) {
                dl.out_dim = l.weights->shape[0];
                dl.in_dim = l.weights->shape[1];
            } else {
                dl.out_dim = l.weights->numel();
                dl.in_dim = 1;
            }
            dl.weights.assign(l.weights->data.begin(), l.weights->data.end());
        }
        if (l.bias) dl.bias.assign(l.bias->data.begin(), l.bias->data.end());
        dm.layers.push_back(std::move(dl));
    }
    return dm;
}

DLayer& DModel::layer(const std::string& id) {
    for (auto& l : layers) {
        if (l.id == id) return l;
    }
    throw std::runtime_error("oracle: no layer " + id);
}

namespace {

// Forward pass retaining every intermediate activation.
struct Trace {
    std::vector<std::vector<std::vector<double>>> acts;  // acts[k][sample] = input of layer k
    std::vector<std::vector<double>> logits;             // final outputs per sample
};

Trace run(const DModel& model, const Batch& batch) {
    Trace tr;
    const std::size_t n = batch.size();
    const std::size_t d = batch.inputs.cols();
    std::vector<std::vector<double>> cur(n, std::vector<double>(d));
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t j = 0; j < d; ++j) {
            cur[s][j] = static_cast<double>(batch.inputs.at(s, j));
        }
    }
    for (const auto& l : model.layers) {
        tr.acts.push_back(cur);
        std::vector<std::vector<double>> next = cur;
        for (std::size_t s = 0; s < n; ++s) {
            const auto& x = cur[s];
            if (l.kind == LayerKind::dense) {
                std::vector<double> y(l.out_dim, 0.0);
                for (std::size_t r = 0; r < l.out_dim; ++r) {
                    double acc = l.bias.empty() ? 0.0 : l.bias[r];
                    for (std::size_t c = 0; c < l.in_dim; ++c) {
                        acc += l.weights[r * l.in_dim + c] * x[c];
                    }
                    y[r] = acc;
                }
                next[s] = std::move(y);
            } else if (l.kind == LayerKind::relu) {
                for (auto& v : next[s]) v = v > 0.0 ? v : 0.0;
            } else if (l.kind == LayerKind::tanh) {
                for (auto& v : next[s]) v = std::tanh(v);
            }  // heads pass through
        }
        cur = std::move(next);
    }
    tr.logits = cur;
    return tr;
}

bool has_quad_head(const DModel& model) {
    return !model.layers.empty() && model.layers.back().kind == LayerKind::quadratic;
}

double quad_loss(const DModel& model) {
    const DLayer& l = model.layers.back();
    double acc = 0.0;
    for (std::size_t k = 0; k < l.weights.size(); ++k) {
        acc += 0.5 * l.bias[k] * l.weights[k] * l.weights[k];
    }
    return acc;
}

}  // namespace

double loss(const DModel& model, const Batch& batch) {
    if (has_quad_head(model)) return quad_loss(model);
    Trace tr = run(model, batch);
    double total = 0.0;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const auto& z = tr.logits[s];
        double m = z[0];
        for (double v : z) m = std::max(m, v);
        double Z = 0.0;
        for (double v : z) Z += std::exp(v - m);
        total += m + std::log(Z) - z[static_cast<std::size_t>(batch.labels[s])];
    }
    return total / static_cast<double>(batch.size());
}

double accuracy(const DModel& model, const Batch& batch) {
    Trace tr = run(model, batch);
    std::size_t correct = 0;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const auto& z = tr.logits[s];
        std::size_t arg = 0;
        for (std::size_t c = 1; c < z.size(); ++c) {
            if (z[c] > z[arg]) arg = c;
        }
        if (arg == static_cast<std::size_t>(batch.labels[s])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(batch.size());
}

std::vector<double> gradient(const DModel& model, const Batch& batch,
                             const std::string& layer_id) {
    int target = -1;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (model.layers[i].id == layer_id) target = static_cast<int>(i);
    }
    if (target < 0) throw std::runtime_error("oracle: no layer " + layer_id);
    const DLayer& tl = model.layers[static_cast<std::size_t>(target)];

    if (tl.kind == LayerKind::quadratic) {
        std::vector<double> g(tl.weights.size());
        for (std::size_t k = 0; k < g.size(); ++k) g[k] = tl.bias[k] * tl.weights[k];
        return g;
    }
    if (has_quad_head(model)) return std::vector<double>(tl.weights.size(), 0.0);

    Trace tr = run(model, batch);
    const std::size_t n = batch.size();
    // Adjoint of logits from softmax cross-entropy.
    std::vector<std::vector<double>> g(n);
    for (std::size_t s = 0; s < n; ++s) {
        const auto& z = tr.logits[s];
        double m = z[0];
        for (double v : z) m = std::max(m, v);
        double Z = 0.0;
        for (double v : z) Z += std::exp(v - m);
        g[s].resize(z.size());
        for (std::size_t c = 0; c < z.size(); ++c) {
            double p = std::exp(z[c] - m) / Z;
            g[s][c] = (p - (static_cast<std::size_t>(batch.labels[s]) == c ? 1.0 : 0.0)) /
                      static_cast<double>(n);
        }
    }
    for (int i = static_cast<int>(model.layers.size()) - 1; i > target; --i) {
        const DLayer& l = model.layers[static_cast<std::size_t>(i)];
        const auto& in = tr.acts[static_cast<std::size_t>(i)];
        for (std::size_t s = 0; s < n; ++s) {
            if (l.kind == LayerKind::dense) {
                std::vector<double> gi(l.in_dim, 0.0);
                for (std::size_t r = 0; r < l.out_dim; ++r) {
                    for (std::size_t c = 0; c < l.in_dim; ++c) {
                        gi[c] += g[s][r] * l.weights[r * l.in_dim + c];
                    }
                }
                g[s] = std::move(gi);
            } else if (l.kind == LayerKind::relu) {
                for (std::size_t c = 0; c < g[s].size(); ++c) {
                    if (in[s][c] <= 0.0) g[s][c] = 0.0;
                }
            } else if (l.kind == LayerKind::tanh) {
                for (std::size_t c = 0; c < g[s].size(); ++c) {
                    double y = std::tanh(in[s][c]);
                    g[s][c] *= 1.0 - y * y;
                }
            }
        }
    }
    const auto& a_in = tr.acts[static_cast<std::size_t>(target)];
    std::vector<double> grad(tl.weights.size(), 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t r = 0; r < tl.out_dim; ++r) {
            for (std::size_t c = 0; c < tl.in_dim; ++c) {
                grad[r * tl.in_dim + c] += g[s][r] * a_in[s][c];
            }
        }
    }
    return grad;
}

std::vector<double> fd_gradient(DModel model, const Batch& batch, const std::string& layer_id,
                                double rel_eps) {
    DLayer& l = model.layer(layer_id);
    std::vector<double> g(l.weights.size());
    for (std::size_t k = 0; k < l.weights.size(); ++k) {
        double w0 = l.weights[k];
        double eps = rel_eps * std::max(1.0, std::fabs(w0));
        l.weights[k] = w0 + eps;
        double up = loss(model, batch);
        l.weights[k] = w0 - eps;
        double down = loss(model, batch);
        l.weights[k] = w0;
        g[k] = (up - down) / (2.0 * eps);
    }
    return g;
}

std::vector<double> fd_hvp(DModel model, const Batch& batch, const std::string& layer_id,
                           const std::vector<double>& v, double eps) {
    DLayer& l = model.layer(layer_id);
    std::vector<double> saved = l.weights;
    for (std::size_t k = 0; k < saved.size(); ++k) l.weights[k] = saved[k] + eps * v[k];
    std::vector<double> up = gradient(model, batch, layer_id);
    for (std::size_t k = 0; k < saved.size(); ++k) l.weights[k] = saved[k] - eps * v[k];
    std::vector<double> down = gradient(model, batch, layer_id);
    l.weights = saved;
    std::vector<double> hv(saved.size());
    for (std::size_t k = 0; k < saved.size(); ++k) hv[k] = (up[k] - down[k]) / (2.0 * eps);
    return hv;
}

std::vector<std::vector<double>> fd_hessian(const DModel& model, const Batch& batch,
                                            const std::string& layer_id, double eps) {
    DModel m = model;
    DLayer& l = m.layer(layer_id);
    const std::size_t n = l.weights.size();
    std::vector<std::vector<double>> h(n, std::vector<double>(n));
    for (std::size_t k = 0; k < n; ++k) {
        std::vector<double> e(n, 0.0);
        e[k] = 1.0;
        h[k] = fd_hvp(m, batch, layer_id, e, eps);
    }
    return h;
}

int case_min_flips(const std::vector<double>& channel, double alpha, int bits) {
    const double step = std::ldexp(1.0, -(bits - 1)) / alpha;
    const long maxlev = 1L << (bits - 1);
    const std::size_t n = channel.size();
    std::vector<double> err(n);
    std::vector<double> delta(n, 0.0);  // effect of flipping element i on the error sum
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double t = alpha * channel[i];
        bool sat = t > 1.0 || t < -1.0;
        t = std::clamp(t, -1.0, 1.0);
        double scaled = t * static_cast<double>(maxlev);
        // llround is half-away-from-zero, matching the production rounding.
        long k = static_cast<long>(std::llround(scaled));
        double q = static_cast<double>(k) * step;
        err[i] = q - channel[i];
        sum += err[i];
        if (!sat && err[i] != 0.0) {
            long flipped = k - (err[i] > 0.0 ? 1 : -1);
            if (flipped >= -maxlev && flipped <= maxlev) {
                delta[i] = -(err[i] > 0.0 ? 1.0 : -1.0) * step;
            }
        }
    }
    const double bound = step / 2.0 + 1e-9 * step;
    int best = -1;
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
        double s = sum;
        int flips = 0;
        bool valid = true;
        for (std::size_t i = 0; i < n; ++i) {
            if (!(mask & (std::size_t{1} << i))) continue;
            if (delta[i] == 0.0) {
                valid = false;
                break;
            }
            s += delta[i];
            ++flips;
        }
        if (!valid || std::fabs(s) > bound) continue;
        if (best < 0 || flips < best) best = flips;
    }
    return best;
}

std::vector<std::pair<double, double>> pareto_bruteforce(
    const std::vector<std::pair<double, double>>& points) {
    std::vector<std::pair<double, double>> out;
    for (const auto& p : points) {
        bool dominated = false;
        for (const auto& q : points) {
            if (q.first >= p.first && q.second <= p.second &&
                (q.first > p.first || q.second < p.second)) {
                dominated = true;
                break;
            }
        }
        if (!dominated && std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    return out;
}

}  // namespace oracle
