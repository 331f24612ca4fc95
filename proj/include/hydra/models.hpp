#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "hydra/stats.hpp"
#include "hydra/trace.hpp"

namespace hydra {

// ---------------------------------------------------------------------------
// Analytical utilization model: P = idle + (max - idle) * util^alpha

/// Exponents of the linear, square and square-root models, in tie-break order.
inline constexpr std::array<double, 3> kAlphaFamily = {1.0, 2.0, 0.5};

struct AnalyticalModel {
    double alpha = 1.0;

    bool operator==(const AnalyticalModel&) const = default;
};

/// Throws ConfigError unless alpha is one of kAlphaFamily.
AnalyticalModel make_analytical(double alpha);

/// cpu_util is a fraction in [0,1]; anything else throws Error.
double analytical_predict(const AnalyticalModel& model, const ServerProfile& profile, double cpu_util);

/// Picks the alpha with the lowest RMSE over the trace (util taken from
/// cpu_util_pct / 100). Exact ties go to alpha = 1, then 2, then 0.5.
AnalyticalModel fit_alpha(const Trace& trace, const ServerProfile& profile);

// ---------------------------------------------------------------------------
// Multilayer perceptron

/// Input, six hidden widths, scalar output.
inline constexpr std::array<std::size_t, 8> kMlpLayerSizes = {kNumFeatures, 16, 32, 64, 32, 16, 8, 1};
inline constexpr std::size_t kMlpWeightLayers = kMlpLayerSizes.size() - 1;
inline constexpr std::size_t kMlpMaxWidth = 64;

struct DenseLayer {
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    std::vector<double> weights;  // row-major, outputs x inputs
    std::vector<double> biases;   // outputs

    bool operator==(const DenseLayer&) const = default;
};

/// Rectifier hidden layers, identity output clamped to [clamp_lo, clamp_hi].
struct MlpModel {
    std::array<DenseLayer, kMlpWeightLayers> layers;
    NormalizationStats norm_stats;
    double clamp_lo = 0.0;
    double clamp_hi = 1.2;

    std::size_t parameter_count() const noexcept;
    bool operator==(const MlpModel&) const = default;
};

/// Throws ConfigError on shape mismatch or non-finite parameters.
void validate_mlp(const MlpModel& model);

/// Glorot-uniform weights, zero biases, identity normalization.
MlpModel mlp_init(std::uint64_t seed);

/// Scale-factor prediction, clamped. Throws Error if fv is not normalized.
double mlp_forward(const MlpModel& model, const FeatureVector& fv);

/// Unclamped network output; the quantity the training loss is defined on.
double mlp_forward_raw(const MlpModel& model, const std::array<double, kNumFeatures>& inputs);

/// Batched mlp_forward; OpenMP across inputs.
void mlp_forward_batch(const MlpModel& model, std::span<const FeatureVector> inputs, std::span<double> out);

namespace detail {
void mlp_forward_batch_serial(const MlpModel& model, std::span<const FeatureVector> inputs, std::span<double> out);
}

struct LabeledExample {
    FeatureVector features;
    double target_scale_factor = 0.0;
};

/// Gradients with the same layout as MlpModel::layers.
struct MlpGradients {
    std::array<std::vector<double>, kMlpWeightLayers> weights;
    std::array<std::vector<double>, kMlpWeightLayers> biases;
};

/// Squared error (raw_output - target)^2 for one example.
double mlp_example_loss(const MlpModel& model, const LabeledExample& example);

/// Backpropagated gradient of mlp_example_loss.
MlpGradients mlp_backprop(const MlpModel& model, const LabeledExample& example);

/// Flat parameter access: layer 0 weights, layer 0 biases, layer 1 weights, ...
double mlp_parameter(const MlpModel& model, std::size_t index);
void set_mlp_parameter(MlpModel& model, std::size_t index, double value);
double gradient_entry(const MlpGradients& grads, std::size_t index);

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    std::size_t epochs = 100;
    std::uint64_t seed = 0;
    double validation_fraction = 0.1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
};

struct TrainResult {
    MlpModel model;
    double initial_loss = 0.0;           // training-set MSE before the first update
    std::vector<double> loss_history;    // training-set MSE after each epoch
    std::optional<double> validation_loss;  // held-out MSE; absent when nothing was held out
    std::size_t train_size = 0;
    std::size_t validation_size = 0;
};

/// Mini-batch Adam on mean squared error. A seeded permutation holds out
/// validation_fraction of the data; each epoch reshuffles the training part
/// from a stream derived from the seed. Single-threaded and deterministic.
TrainResult train_mlp(std::span<const LabeledExample> data, const NormalizationStats& norm, const TrainConfig& config);

using GradientFn = std::function<MlpGradients(const MlpModel&, const LabeledExample&)>;

struct GradientCheckOptions {
    double epsilon = 1e-5;
    std::size_t samples = 128;
    std::uint64_t seed = 0;
};

struct GradientCheckResult {
    double max_relative_error = 0.0;
    double max_abs_analytic = 0.0;
    double max_abs_numeric = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;  // perturbation flipped a rectifier; not differentiable there
};

/// Compares `analytic` against central differences of mlp_example_loss on a
/// random sample of parameters. Relative error per parameter is
/// |ga - gn| / max(|ga|, |gn|, 1e-8).
GradientCheckResult gradient_check(const MlpModel& model, const LabeledExample& example,
                                   const GradientCheckOptions& options = {}, const GradientFn& analytic = mlp_backprop);

// ---------------------------------------------------------------------------

/// Mean of the last `window` values (or all of them if fewer).
double moving_average_baseline(std::span<const double> power_history, std::size_t window);

}  // namespace hydra
