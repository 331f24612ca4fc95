#include <algorithm>
#include <cmath>
#include <numeric>

#include "hydra/error.hpp"
#include "hydra/models.hpp"
#include "hydra/random.hpp"

namespace hydra {

namespace {

constexpr std::size_t kLast = kMlpWeightLayers - 1;

// Activations and pre-activations of one forward pass, kept for backprop.
struct Tape {
    std::array<std::array<double, kMlpMaxWidth>, kMlpLayerSizes.size()> act{};  // act[0] = inputs
    std::array<std::array<double, kMlpMaxWidth>, kMlpWeightLayers> pre{};
};

double forward_tape(const MlpModel& m, const std::array<double, kNumFeatures>& inputs, Tape& tape) {
    std::copy(inputs.begin(), inputs.end(), tape.act[0].begin());
    for (std::size_t l = 0; l < kMlpWeightLayers; ++l) {
        const auto& layer = m.layers[l];
        const double* in = tape.act[l].data();
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            const double* w = layer.weights.data() + o * layer.inputs;
            double sum = layer.biases[o];
            for (std::size_t i = 0; i < layer.inputs; ++i) sum += w[i] * in[i];
            tape.pre[l][o] = sum;
            tape.act[l + 1][o] = (l == kLast) ? sum : std::max(sum, 0.0);
        }
    }
    return tape.act[kMlpWeightLayers][0];
}

// Accumulates scale * d(loss)/d(params) into grads, given a forward tape.
void backward_tape(const MlpModel& m, const Tape& tape, double dloss_dout, MlpGradients& grads) {
    std::array<double, kMlpMaxWidth> delta{};
    std::array<double, kMlpMaxWidth> prev{};
    delta[0] = dloss_dout;
    for (std::size_t l = kMlpWeightLayers; l-- > 0;) {
        const auto& layer = m.layers[l];
        const double* in = tape.act[l].data();
        auto& gw = grads.weights[l];
        auto& gb = grads.biases[l];
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            const double d = delta[o];
            gb[o] += d;
            if (d == 0.0) continue;
            double* g = gw.data() + o * layer.inputs;
            for (std::size_t i = 0; i < layer.inputs; ++i) g[i] += d * in[i];
        }
        if (l == 0) break;
        std::fill(prev.begin(), prev.begin() + static_cast<std::ptrdiff_t>(layer.inputs), 0.0);
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            const double d = delta[o];
            if (d == 0.0) continue;
            const double* w = layer.weights.data() + o * layer.inputs;
            for (std::size_t i = 0; i < layer.inputs; ++i) prev[i] += w[i] * d;
        }
        for (std::size_t i = 0; i < layer.inputs; ++i) delta[i] = tape.pre[l - 1][i] > 0.0 ? prev[i] : 0.0;
    }
}

MlpGradients zero_gradients() {
    MlpGradients g;
    for (std::size_t l = 0; l < kMlpWeightLayers; ++l) {
        g.weights[l].assign(kMlpLayerSizes[l] * kMlpLayerSizes[l + 1], 0.0);
        g.biases[l].assign(kMlpLayerSizes[l + 1], 0.0);
    }
    return g;
}

void clear(MlpGradients& g) {
    for (std::size_t l = 0; l < kMlpWeightLayers; ++l) {
        std::fill(g.weights[l].begin(), g.weights[l].end(), 0.0);
        std::fill(g.biases[l].begin(), g.biases[l].end(), 0.0);
    }
}

// Maps a flat parameter index to (layer, is_bias, offset).
struct ParamRef {
    std::size_t layer;
    bool bias;
    std::size_t offset;
};

ParamRef locate(std::size_t index) {
    for (std::size_t l = 0; l < kMlpWeightLayers; ++l) {
        const std::size_t nw = kMlpLayerSizes[l] * kMlpLayerSizes[l + 1];
        const std::size_t nb = kMlpLayerSizes[l + 1];
        if (index < nw) return {l, false, index};
        index -= nw;
        if (index < nb) return {l, true, index};
        index -= nb;
    }
    throw Error("parameter index out of range");
}

void check_example(const LabeledExample& ex, std::size_t index) {
    if (!ex.features.normalized)
        throw Error("example " + std::to_string(index) + ": feature vector is not normalized");
    for (double v : ex.features.values)
        if (!std::isfinite(v)) throw Error("example " + std::to_string(index) + ": non-finite feature");
    if (!std::isfinite(ex.target_scale_factor))
        throw Error("example " + std::to_string(index) + ": non-finite target");
}

double dataset_mse(const MlpModel& m, std::span<const LabeledExample> data, std::span<const std::size_t> idx) {
    if (idx.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i : idx) {
        const double d = mlp_forward_raw(m, data[i].features.values) - data[i].target_scale_factor;
        sum += d * d;
    }
    return sum / static_cast<double>(idx.size());
}

using ReluMask = std::array<std::array<bool, kMlpMaxWidth>, kMlpWeightLayers - 1>;

ReluMask relu_mask(const Tape& tape) {
    ReluMask mask{};
    for (std::size_t l = 0; l + 1 < kMlpWeightLayers; ++l)
        for (std::size_t o = 0; o < kMlpLayerSizes[l + 1]; ++o) mask[l][o] = tape.pre[l][o] > 0.0;
    return mask;
}

}  // namespace

std::size_t MlpModel::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.biases.size();
    return n;
}

void validate_mlp(const MlpModel& m) {
    for (std::size_t l = 0; l < kMlpWeightLayers; ++l) {
        const auto& layer = m.layers[l];
        if (layer.inputs != kMlpLayerSizes[l] || layer.outputs != kMlpLayerSizes[l + 1])
            throw ConfigError("mlp layer " + std::to_string(l) + ": expected " + std::to_string(kMlpLayerSizes[l + 1]) +
                              "x" + std::to_string(kMlpLayerSizes[l]));
        if (layer.weights.size() != layer.inputs * layer.outputs || layer.biases.size() != layer.outputs)
            throw ConfigError("mlp layer " + std::to_string(l) + ": parameter count does not match its shape");
        for (double v : layer.weights)
            if (!std::isfinite(v)) throw ConfigError("mlp layer " + std::to_string(l) + ": non-finite weight");
        for (double v : layer.biases)
            if (!std::isfinite(v)) throw ConfigError("mlp layer " + std::to_string(l) + ": non-finite bias");
    }
    if (!(m.clamp_lo < m.clamp_hi)) throw ConfigError("mlp: output clamp must satisfy lo < hi");
    for (const auto& r : m.norm_stats.ranges)
        if (!(r.max >= r.min)) throw ConfigError("mlp: normalization range with max < min");
}

MlpModel mlp_init(std::uint64_t seed) {
    Rng rng(seed);
    MlpModel m;
    for (std::size_t l = 0; l < kMlpWeightLayers; ++l) {
        auto& layer = m.layers[l];
        layer.inputs = kMlpLayerSizes[l];
        layer.outputs = kMlpLayerSizes[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.inputs + layer.outputs));
        layer.weights.resize(layer.inputs * layer.outputs);
        for (auto& w : layer.weights) w = uniform(rng, -limit, limit);
        layer.biases.assign(layer.outputs, 0.0);
    }
    for (auto& r : m.norm_stats.ranges) r = FeatureRange{0.0, 1.0};
    return m;
}

double mlp_forward_raw(const MlpModel& m, const std::array<double, kNumFeatures>& inputs) {
    std::array<double, kMlpMaxWidth> a{};
    std::array<double, kMlpMaxWidth> b{};
    std::copy(inputs.begin(), inputs.end(), a.begin());
    for (std::size_t l = 0; l < kMlpWeightLayers; ++l) {
        const auto& layer = m.layers[l];
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            const double* w = layer.weights.data() + o * layer.inputs;
            double sum = layer.biases[o];
            for (std::size_t i = 0; i < layer.inputs; ++i) sum += w[i] * a[i];
            b[o] = (l == kLast) ? sum : std::max(sum, 0.0);
        }
        std::swap(a, b);
    }
    return a[0];
}

double mlp_forward(const MlpModel& m, const FeatureVector& fv) {
    if (!fv.normalized) throw Error("mlp_forward: feature vector is not normalized");
    return std::clamp(mlp_forward_raw(m, fv.values), m.clamp_lo, m.clamp_hi);
}

void detail::mlp_forward_batch_serial(const MlpModel& m, std::span<const FeatureVector> inputs, std::span<double> out) {
    if (out.size() != inputs.size()) throw Error("mlp_forward_batch: output size mismatch");
    for (std::size_t i = 0; i < inputs.size(); ++i) out[i] = mlp_forward(m, inputs[i]);
}

void mlp_forward_batch(const MlpModel& m, std::span<const FeatureVector> inputs, std::span<double> out) {
    if (out.size() != inputs.size()) throw Error("mlp_forward_batch: output size mismatch");
    for (const auto& fv : inputs)
        if (!fv.normalized) throw Error("mlp_forward: feature vector is not normalized");
    const auto n = static_cast<std::ptrdiff_t>(inputs.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] =
            std::clamp(mlp_forward_raw(m, inputs[static_cast<std::size_t>(i)].values), m.clamp_lo, m.clamp_hi);
}

double mlp_example_loss(const MlpModel& m, const LabeledExample& ex) {
    const double d = mlp_forward_raw(m, ex.features.values) - ex.target_scale_factor;
    return d * d;
}

MlpGradients mlp_backprop(const MlpModel& m, const LabeledExample& ex) {
    Tape tape;
    const double y = forward_tape(m, ex.features.values, tape);
    MlpGradients g = zero_gradients();
    backward_tape(m, tape, 2.0 * (y - ex.target_scale_factor), g);
    return g;
}

double mlp_parameter(const MlpModel& m, std::size_t index) {
    const auto r = locate(index);
    return r.bias ? m.layers[r.layer].biases[r.offset] : m.layers[r.layer].weights[r.offset];
}

void set_mlp_parameter(MlpModel& m, std::size_t index, double value) {
    const auto r = locate(index);
    (r.bias ? m.layers[r.layer].biases[r.offset] : m.layers[r.layer].weights[r.offset]) = value;
}

double gradient_entry(const MlpGradients& g, std::size_t index) {
    const auto r = locate(index);
    return r.bias ? g.biases[r.layer][r.offset] : g.weights[r.layer][r.offset];
}

TrainResult train_mlp(std::span<const LabeledExample> data, const NormalizationStats& norm, const TrainConfig& cfg) {
    if (data.empty()) throw Error("train_mlp: no training examples");
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("train_mlp: learning_rate must be > 0");
    if (cfg.batch_size < 1) throw ConfigError("train_mlp: batch_size must be >= 1");
    if (!(cfg.validation_fraction >= 0.0 && cfg.validation_fraction < 1.0))
        throw ConfigError("train_mlp: validation_fraction must be in [0,1)");
    if (data.size() < cfg.batch_size)
        throw Error("train_mlp: fewer examples (" + std::to_string(data.size()) + ") than batch_size");
    for (std::size_t i = 0; i < data.size(); ++i) check_example(data[i], i);

    TrainResult result;
    result.model = mlp_init(cfg.seed);
    result.model.norm_stats = norm;
    MlpModel& m = result.model;

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(mix_seed(cfg.seed, 1));
    shuffle(order.begin(), order.end(), split_rng);
    const auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(data.size())));
    std::vector<std::size_t> val(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
    std::vector<std::size_t> train(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
    if (train.empty()) throw Error("train_mlp: validation split leaves no training examples");
    // Keep the training order independent of the split permutation.
    std::sort(train.begin(), train.end());
    result.train_size = train.size();
    result.validation_size = val.size();

    result.initial_loss = dataset_mse(m, data, train);

    MlpGradients grad = zero_gradients();
    MlpGradients moment1 = zero_gradients();
    MlpGradients moment2 = zero_gradients();
    Rng epoch_rng(mix_seed(cfg.seed, 2));
    Tape tape;
    double beta1_t = 1.0, beta2_t = 1.0;

    result.loss_history.reserve(cfg.epochs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(train.begin(), train.end(), epoch_rng);
        for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, train.size());
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            clear(grad);
            for (std::size_t k = start; k < end; ++k) {
                const auto& ex = data[train[k]];
                const double y = forward_tape(m, ex.features.values, tape);
                backward_tape(m, tape, 2.0 * (y - ex.target_scale_factor) * inv_batch, grad);
            }
            beta1_t *= cfg.adam_beta1;
            beta2_t *= cfg.adam_beta2;
            const double c1 = 1.0 / (1.0 - beta1_t);
            const double c2 = 1.0 / (1.0 - beta2_t);
            auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m1,
                              std::vector<double>& m2) {
                for (std::size_t i = 0; i < p.size(); ++i) {
                    m1[i] = cfg.adam_beta1 * m1[i] + (1.0 - cfg.adam_beta1) * g[i];
                    m2[i] = cfg.adam_beta2 * m2[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
                    p[i] -= cfg.learning_rate * (m1[i] * c1) / (std::sqrt(m2[i] * c2) + cfg.adam_epsilon);
                }
            };
            for (std::size_t l = 0; l < kMlpWeightLayers; ++l) {
                update(m.layers[l].weights, grad.weights[l], moment1.weights[l], moment2.weights[l]);
                update(m.layers[l].biases, grad.biases[l], moment1.biases[l], moment2.biases[l]);
            }
        }
        result.loss_history.push_back(dataset_mse(m, data, train));
    }
    if (!val.empty()) result.validation_loss = dataset_mse(m, data, val);
    return result;
}

GradientCheckResult gradient_check(const MlpModel& model, const LabeledExample& example,
                                   const GradientCheckOptions& opt, const GradientFn& analytic) {
    check_example(example, 0);
    if (!(opt.epsilon > 0.0)) throw ConfigError("gradient_check: epsilon must be > 0");
    const MlpGradients ga = analytic(model, example);

    Tape tape;
    forward_tape(model, example.features.values, tape);
    const ReluMask base = relu_mask(tape);

    const std::size_t total = model.parameter_count();
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(opt.seed);
    shuffle(order.begin(), order.end(), rng);

    GradientCheckResult res;
    MlpModel probe = model;
    for (std::size_t idx : order) {
        if (res.checked >= opt.samples) break;
        const double original = mlp_parameter(probe, idx);

        set_mlp_parameter(probe, idx, original + opt.epsilon);
        const double up_y = forward_tape(probe, example.features.values, tape);
        const bool up_same = relu_mask(tape) == base;
        set_mlp_parameter(probe, idx, original - opt.epsilon);
        const double down_y = forward_tape(probe, example.features.values, tape);
        const bool down_same = relu_mask(tape) == base;
        set_mlp_parameter(probe, idx, original);

        if (!up_same || !down_same) {
            ++res.skipped_kinks;
            continue;
        }
        // (a^2 - b^2) = (a - b)(a + b) avoids squaring before the subtraction
        const double du = up_y - example.target_scale_factor;
        const double dd = down_y - example.target_scale_factor;
        const double gn = (up_y - down_y) * (du + dd) / (2.0 * opt.epsilon);
        const double g = gradient_entry(ga, idx);
        const double rel = std::abs(g - gn) / std::max({std::abs(g), std::abs(gn), 1e-8});
        res.max_relative_error = std::max(res.max_relative_error, rel);
        res.max_abs_analytic = std::max(res.max_abs_analytic, std::abs(g));
        res.max_abs_numeric = std::max(res.max_abs_numeric, std::abs(gn));
        ++res.checked;
    }
    return res;
}

}  // namespace hydra
