#include "ookfso/demod.hpp"

#include <algorithm>

#include "ookfso/error.hpp"

namespace ookfso {

TrainConfig presence_train_defaults() {
    TrainConfig c;
    c.epochs = 50;
    return c;
}

TrainConfig bit_train_defaults() {
    TrainConfig c;
    c.epochs = 20;
    return c;
}

namespace {

void require_kind(const LabeledDataset& ds, DatasetKind kind, const char* role) {
    require(ds.kind == kind, ErrorCode::kind_mismatch,
            std::string(role) + " dataset has kind '" + to_string(ds.kind) + "', expected '" + to_string(kind) + "'");
}

std::vector<ClassProbabilities> pairs(const Prediction& p) {
    std::vector<ClassProbabilities> out(p.prob_one.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {1.0 - p.prob_one[i], p.prob_one[i]};
    return out;
}

} // namespace

PresenceDetector train_presence(const LabeledDataset& train_ds, const LabeledDataset& val_ds, const TrainConfig& cfg,
                                const ArchitectureConfig& arch, const EpochCallback& on_epoch) {
    require_kind(train_ds, DatasetKind::presence, "training");
    require_kind(val_ds, DatasetKind::presence, "validation");
    require(!train_ds.empty() && !val_ds.empty(), ErrorCode::invalid_argument, "presence datasets must be non-empty");
    require(train_ds.window_bits == val_ds.window_bits, ErrorCode::shape_mismatch,
            "training and validation window sizes differ");

    auto model = make_model(input_shape_for(train_ds), presence_layers(train_ds.rows, train_ds.window_bits, arch),
                            cfg.seed);
    return {train(std::move(model), train_ds, val_ds, cfg, on_epoch), train_ds.window_bits};
}

BitClassifier train_bit_classifier(const LabeledDataset& train_ds, const LabeledDataset& val_ds,
                                   const TrainConfig& cfg, const ArchitectureConfig& arch,
                                   const EpochCallback& on_epoch) {
    require_kind(train_ds, DatasetKind::bit, "training");
    require_kind(val_ds, DatasetKind::bit, "validation");
    require(!train_ds.empty() && !val_ds.empty(), ErrorCode::invalid_argument, "bit datasets must be non-empty");

    auto model = make_model(input_shape_for(train_ds), bit_layers(train_ds.rows, arch), cfg.seed);
    return {train(std::move(model), train_ds, val_ds, cfg, on_epoch)};
}

Detection detect(const PresenceDetector& detector, const LabeledDataset& windows) {
    require(windows.cols == detector.window_bits, ErrorCode::shape_mismatch,
            "windows span " + std::to_string(windows.cols) + " bits, detector expects " +
                std::to_string(detector.window_bits));
    const auto p = predict(detector.model, windows);
    return {p.labels, pairs(p)};
}

BitDecisions classify_bits(const BitClassifier& classifier, const LabeledDataset& bit_windows) {
    require(bit_windows.cols == 1, ErrorCode::shape_mismatch, "bit windows must be single bit slots");
    const auto p = predict(classifier.model, bit_windows);
    return {p.labels, pairs(p)};
}

DemodResult pipeline(const PresenceDetector& detector, const BitClassifier& classifier, const Waveform& waveform) {
    const std::size_t spb = waveform.config.samples_per_bit;
    const std::size_t window_len = spb * detector.window_bits;
    require(window_len > 0 && waveform.samples.size() >= window_len, ErrorCode::shape_mismatch,
            "waveform of " + std::to_string(waveform.samples.size()) + " samples is shorter than one window (" +
                std::to_string(window_len) + ")");
    require(classifier.model.net.input_shape() == FeatureShape{spb, 1, 1}, ErrorCode::shape_mismatch,
            "bit classifier does not match samples_per_bit");

    DemodResult out;
    const std::size_t n_windows = waveform.samples.size() / window_len;
    const std::size_t remainder = waveform.samples.size() - n_windows * window_len;
    if (remainder > 0)
        out.warnings.push_back("discarded trailing " + std::to_string(remainder) +
                               " samples shorter than one window");

    LabeledDataset windows;
    windows.kind = DatasetKind::presence;
    windows.rows = spb;
    windows.cols = detector.window_bits;
    windows.window_bits = detector.window_bits;
    windows.channel_meta = waveform.config;
    windows.values.reserve(n_windows * window_len);
    for (std::size_t k = 0; k < n_windows * window_len; ++k)
        windows.values.push_back(static_cast<float>(waveform.samples[k]));
    windows.labels.assign(n_windows, waveform.contains_signal ? 1 : 0);

    const auto detection = detect(detector, windows);
    out.presence = detection.present;
    out.presence_probabilities = detection.probabilities;

    LabeledDataset slots;
    slots.kind = DatasetKind::bit;
    slots.rows = spb;
    slots.cols = 1;
    slots.channel_meta = waveform.config;
    for (std::size_t w = 0; w < n_windows; ++w) {
        if (!detection.present[w]) continue;
        out.present_windows.push_back(w);
        const auto ex = windows.example(w);
        slots.values.insert(slots.values.end(), ex.begin(), ex.end());
        slots.labels.insert(slots.labels.end(), detector.window_bits, 0);
    }
    if (!slots.empty()) {
        auto decisions = classify_bits(classifier, slots);
        out.bits = std::move(decisions.bits);
        out.per_bit_confidence = std::move(decisions.confidences);
    }
    return out;
}

std::vector<std::uint8_t> threshold_decisions(std::span<const float> values, std::size_t example_size,
                                              double reference_mean) {
    require(example_size > 0 && values.size() % example_size == 0, ErrorCode::shape_mismatch,
            "threshold input is not a whole number of examples");
    const std::size_t n = values.size() / example_size;
    std::vector<std::uint8_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t k = 0; k < example_size; ++k) sum += values[i * example_size + k];
        out[i] = sum / static_cast<double>(example_size) > reference_mean ? 1 : 0;
    }
    return out;
}

std::vector<std::uint8_t> threshold_presence(const LabeledDataset& windows, double reference_mean) {
    return threshold_decisions(windows.values, windows.example_size(), reference_mean);
}

BitStream threshold_bit(const LabeledDataset& bit_windows, double reference_mean) {
    return threshold_decisions(bit_windows.values, bit_windows.example_size(), reference_mean);
}

} // namespace ookfso
