#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "ookfso/channel.hpp"

namespace ookfso {

// Positive class is OFF (0): tp = OFF read as OFF, fp = ON read as OFF,
// fn = OFF read as ON, tn = ON read as ON.
struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const noexcept { return tp + fp + fn + tn; }
    // Same counts under the ON-positive convention.
    ConfusionMatrix swapped() const noexcept { return {tn, fn, fp, tp}; }

    bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> pred);

// tp / (tp + (fp + fn) / 2); throws undefined_metric when tp + fp + fn = 0.
double f1(const ConfusionMatrix& cm);

struct ScoreReport {
    double accuracy = 0.0;
    double ber = 0.0;
    double f1 = 0.0;
    // F1 with ON as the positive class, when defined.
    std::optional<double> f1_on;
    ConfusionMatrix confusion;
    std::size_t n = 0;
};

ScoreReport score(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> pred);

nlohmann::json to_json(const ScoreReport& r);

// 2x2 confusion normalized per true class, rows OFF then ON.
std::string confusion_csv(const ConfusionMatrix& cm);

struct ScintillationFit {
    double i0_hat = 0.0;
    double sigma2_hat = 0.0;
    double si_hat = 0.0;
};

// Log-domain moment estimates of the log-normal parameters.
ScintillationFit fit_scintillation(std::span<const double> samples);

// Least-squares fit of the log-normal density to a 64-bin normalized
// histogram, started from the moment estimates. Cross-check only.
ScintillationFit fit_scintillation_histogram(std::span<const double> samples, std::size_t bins = 64);

// Sample mean and Var/mean^2 (population variance).
struct IntensityMoments {
    double mean = 0.0;
    double normalized_variance = 0.0;
};
IntensityMoments intensity_moments(std::span<const double> samples);

} // namespace ookfso
