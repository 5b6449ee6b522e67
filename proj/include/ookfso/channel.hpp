#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "ookfso/random.hpp"

namespace ookfso {

// 0 = OFF, 1 = ON.
using BitStream = std::vector<std::uint8_t>;

struct ChannelConfig {
    std::size_t samples_per_bit = 35;
    double bit_amplitude = 10.0;
    double thermal_mean = 1.0;
    double thermal_corr = 5.0;
    bool turbulence_enabled = false;
    // Conventional scintillation index Var(I)/E[I]^2.
    double scintillation_index = 1.8;
    double turbulence_corr = 35.0;
    double detector_noise_std = 0.0;
    std::uint64_t seed = 0;

    void validate() const;

    bool operator==(const ChannelConfig&) const = default;
};

nlohmann::json to_json(const ChannelConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
ChannelConfig channel_config_from_json(const nlohmann::json& j);

struct Waveform {
    std::vector<double> samples;
    BitStream truth_bits;
    bool contains_signal = false;
    ChannelConfig config;

    std::size_t bit_slots() const { return samples.size() / config.samples_per_bit; }
};

// Log-normal intensity law with mean irradiance I0 and log-variance sigma^2,
// i.e. ln I ~ N(ln I0 - sigma^2/2, sigma^2).
struct TurbulenceModel {
    double mean_irradiance = 1.0;
    double log_variance = 0.0;

    static TurbulenceModel from_scintillation_index(double si, double mean_irradiance = 1.0);

    double pdf(double intensity) const;
    double cdf(double intensity) const;
    double mean() const { return mean_irradiance; }
    double scintillation_index() const;
};

BitStream generate_bits(std::size_t n, RandomStream& rng);

// Unit-mean log-normal fading with normalized variance si and AR(1)
// correlation in the log domain (rho = 1 - 1/corr; corr = 1 is white).
std::vector<double> sample_turbulence(std::size_t n, double si, double corr, RandomStream& rng);

// Pseudo-thermal speckle intensity: (mean/2)|E|^2 with E a complex Gaussian
// AR(1) process of unit-variance quadratures. Exponential marginals.
std::vector<double> sample_thermal(std::size_t n, double mean, double corr, RandomStream& rng);

std::vector<double> modulate(const BitStream& bits, const ChannelConfig& config);

// samples[k] = L[k] * (s[k] + th[k]) + d[k]. Noise-only when bits is empty
// optional; noise_only_bits sets the length in bit slots in that case.
Waveform compose(const ChannelConfig& config, const std::optional<BitStream>& bits,
                 RandomStream& rng, std::size_t noise_only_bits = 0);

// Convenience: stream seeded from config.seed.
Waveform compose(const ChannelConfig& config, const std::optional<BitStream>& bits,
                 std::size_t noise_only_bits = 0);

double snr_db(const ChannelConfig& config);

// Amplitude giving the requested SNR at the configured thermal mean.
double amplitude_for_snr_db(double snr_db, double thermal_mean);

} // namespace ookfso
