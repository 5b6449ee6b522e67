#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ookfso/dataset.hpp"
#include "ookfso/network.hpp"
#include "ookfso/optimizer.hpp"

namespace ookfso {

struct NormStats {
    double mean = 0.0;
    double std = 1.0;

    bool operator==(const NormStats&) const = default;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;

    bool operator==(const EpochRecord&) const = default;
};

struct TrainMeta {
    std::size_t epochs_run = 0;
    std::vector<EpochRecord> history;

    bool operator==(const TrainMeta&) const = default;
};

struct NetworkModel {
    Network<float> net;
    NormStats norm;
    TrainMeta meta;
};

// Overridable layer widths for the two default architectures.
struct ArchitectureConfig {
    std::vector<std::size_t> conv_channels;
    std::vector<std::size_t> dense_units;
    std::size_t kernel = 3;
    double dropout = 0.6;
};

nlohmann::json to_json(const ArchitectureConfig& a);
ArchitectureConfig architecture_config_from_json(const nlohmann::json& j, ArchitectureConfig base);

ArchitectureConfig default_presence_architecture();
ArchitectureConfig default_bit_architecture();

// conv2d x3 -> maxpool -> conv2d -> flatten -> dense/dropout stack -> dense 2.
// Kernel and pool widths are clamped to the available width so that narrow
// windows (few bit slots) still produce a valid stack.
std::vector<LayerSpec> presence_layers(std::size_t samples_per_bit, std::size_t window_bits,
                                       const ArchitectureConfig& arch = default_presence_architecture());
// conv1d x3 -> maxpool -> conv1d -> flatten -> dense/dropout -> dense 2.
std::vector<LayerSpec> bit_layers(std::size_t samples_per_bit,
                                  const ArchitectureConfig& arch = default_bit_architecture());

FeatureShape input_shape_for(const LabeledDataset& ds);

NetworkModel make_model(FeatureShape input, std::vector<LayerSpec> layers, std::uint64_t seed);

NormStats compute_norm_stats(const LabeledDataset& ds);

// Normalized network input for the given examples, shape [N, rows, cols, 1].
Tensor<float> make_batch(const LabeledDataset& ds, std::span<const std::size_t> indices, const NormStats& norm);
Tensor<float> make_batch(std::span<const float> column_major_values, std::size_t count, FeatureShape shape,
                         const NormStats& norm);

struct Prediction {
    std::vector<std::uint8_t> labels;
    std::vector<double> prob_one; // softmax probability of class 1
};

// Eval-mode inference over every example.
Prediction predict(const NetworkModel& model, const LabeledDataset& ds, std::size_t batch_size = 512);

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};
EvalResult evaluate(const NetworkModel& model, const LabeledDataset& ds, std::size_t batch_size = 512);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch Adam training. Normalization statistics are taken from train
// once, before the first epoch, and frozen. Deterministic given cfg.seed.
NetworkModel train(NetworkModel model, const LabeledDataset& train, const LabeledDataset& val,
                   const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct LayerGradError {
    std::size_t layer = 0;
    LayerKind kind = LayerKind::dense;
    double worst = 0.0;
    std::size_t checked = 0;
};

struct GradCheckReport {
    double worst = 0.0;
    std::size_t checked = 0;
    std::vector<LayerGradError> per_layer;
};

struct GradCheckOptions {
    double eps = 1e-5;
    // Denominator floor for relative error: |a - n| / max(|a|, |n|, floor).
    double floor = 1e-6;
    // Test hook: negate the analytic gradient to confirm the check can fail.
    bool flip_sign = false;
};

// Central differences against backward() for every parameter, eval mode.
// When a perturbation changes a ReLU sign pattern or a pooling argmax the
// step is halved until the piecewise-linear region is stable.
GradCheckReport grad_check(const Network<double>& net, const Tensor<double>& example, std::uint8_t label,
                           const GradCheckOptions& opts = {});

inline constexpr std::uint32_t kModelVersion = 1;

void save_model(const NetworkModel& model, const std::filesystem::path& path);
NetworkModel load_model(const std::filesystem::path& path);

} // namespace ookfso
