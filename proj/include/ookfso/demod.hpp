#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ookfso/channel.hpp"
#include "ookfso/dataset.hpp"
#include "ookfso/model.hpp"

namespace ookfso {

struct PresenceDetector {
    NetworkModel model;
    std::size_t window_bits = 0;
};

struct BitClassifier {
    NetworkModel model;
};

// Softmax pair (P(class 0), P(class 1)).
using ClassProbabilities = std::array<double, 2>;

struct Detection {
    std::vector<std::uint8_t> present;
    std::vector<ClassProbabilities> probabilities;
};

struct BitDecisions {
    BitStream bits;
    std::vector<ClassProbabilities> confidences;
};

struct DemodResult {
    std::vector<std::uint8_t> presence; // per window
    std::vector<ClassProbabilities> presence_probabilities;
    BitStream bits;                      // concatenated bits of present windows
    std::vector<ClassProbabilities> per_bit_confidence;
    std::vector<std::size_t> present_windows;
    std::vector<std::string> warnings;
};

// 50 epochs, learning rate 0.001.
TrainConfig presence_train_defaults();
// 20 epochs, learning rate 0.001.
TrainConfig bit_train_defaults();

PresenceDetector train_presence(const LabeledDataset& train, const LabeledDataset& val,
                                const TrainConfig& cfg = presence_train_defaults(),
                                const ArchitectureConfig& arch = default_presence_architecture(),
                                const EpochCallback& on_epoch = {});

BitClassifier train_bit_classifier(const LabeledDataset& train, const LabeledDataset& val,
                                   const TrainConfig& cfg = bit_train_defaults(),
                                   const ArchitectureConfig& arch = default_bit_architecture(),
                                   const EpochCallback& on_epoch = {});

Detection detect(const PresenceDetector& detector, const LabeledDataset& windows);
BitDecisions classify_bits(const BitClassifier& classifier, const LabeledDataset& bit_windows);

// Stage 1 on consecutive windows, stage 2 only on bits of flagged windows.
// A trailing remainder shorter than one window is dropped with a warning.
DemodResult pipeline(const PresenceDetector& detector, const BitClassifier& classifier, const Waveform& waveform);

// Per-example mean compared against reference_mean; strictly greater wins.
std::vector<std::uint8_t> threshold_decisions(std::span<const float> values, std::size_t example_size,
                                              double reference_mean);
std::vector<std::uint8_t> threshold_presence(const LabeledDataset& windows, double reference_mean);
BitStream threshold_bit(const LabeledDataset& bit_windows, double reference_mean);

} // namespace ookfso
