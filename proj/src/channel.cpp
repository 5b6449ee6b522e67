#include "ookfso/channel.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <string>

#include "ookfso/error.hpp"

namespace ookfso {

namespace {

double ar1_coefficient(double corr) { return 1.0 - 1.0 / corr; }

void check_corr(double corr, const char* name) {
    require(std::isfinite(corr) && corr >= 1.0, ErrorCode::invalid_argument,
            std::string(name) + " must be >= 1");
}

} // namespace

void ChannelConfig::validate() const {
    auto nonneg = [](double v, const char* name) {
        require(std::isfinite(v) && v >= 0.0, ErrorCode::config,
                std::string("channel.") + name + " must be a finite value >= 0");
    };
    require(samples_per_bit >= 1, ErrorCode::config, "channel.samples_per_bit must be >= 1");
    nonneg(bit_amplitude, "bit_amplitude");
    nonneg(thermal_mean, "thermal_mean");
    nonneg(scintillation_index, "scintillation_index");
    nonneg(detector_noise_std, "detector_noise_std");
    require(std::isfinite(thermal_corr) && thermal_corr >= 1.0, ErrorCode::config,
            "channel.thermal_corr must be >= 1");
    require(std::isfinite(turbulence_corr) && turbulence_corr >= 1.0, ErrorCode::config,
            "channel.turbulence_corr must be >= 1");
}

nlohmann::json to_json(const ChannelConfig& c) {
    return nlohmann::json{
        {"samples_per_bit", c.samples_per_bit},
        {"bit_amplitude", c.bit_amplitude},
        {"thermal_mean", c.thermal_mean},
        {"thermal_corr", c.thermal_corr},
        {"turbulence_enabled", c.turbulence_enabled},
        {"scintillation_index", c.scintillation_index},
        {"turbulence_corr", c.turbulence_corr},
        {"detector_noise_std", c.detector_noise_std},
        {"seed", c.seed},
    };
}

ChannelConfig channel_config_from_json(const nlohmann::json& j) {
    require(j.is_object(), ErrorCode::config, "channel config must be a JSON object");
    static const std::set<std::string> known = {
        "samples_per_bit", "bit_amplitude", "thermal_mean", "thermal_corr",
        "turbulence_enabled", "scintillation_index", "turbulence_corr",
        "detector_noise_std", "seed"};
    for (const auto& [key, _] : j.items()) {
        require(known.count(key) > 0, ErrorCode::config, "channel: unknown key '" + key + "'");
    }

    ChannelConfig c;
    auto number = [&](const char* key, double& out) {
        if (!j.contains(key)) return;
        require(j[key].is_number(), ErrorCode::config,
                std::string("channel.") + key + " must be a number");
        out = j[key].get<double>();
    };
    auto count = [&](const char* key, auto& out) {
        if (!j.contains(key)) return;
        require(j[key].is_number_unsigned() || (j[key].is_number_integer() && j[key].get<long long>() >= 0),
                ErrorCode::config, std::string("channel.") + key + " must be a nonnegative integer");
        out = j[key].get<std::remove_reference_t<decltype(out)>>();
    };

    count("samples_per_bit", c.samples_per_bit);
    number("bit_amplitude", c.bit_amplitude);
    number("thermal_mean", c.thermal_mean);
    number("thermal_corr", c.thermal_corr);
    if (j.contains("turbulence_enabled")) {
        require(j["turbulence_enabled"].is_boolean(), ErrorCode::config,
                "channel.turbulence_enabled must be a boolean");
        c.turbulence_enabled = j["turbulence_enabled"].get<bool>();
    }
    number("scintillation_index", c.scintillation_index);
    number("turbulence_corr", c.turbulence_corr);
    number("detector_noise_std", c.detector_noise_std);
    count("seed", c.seed);
    c.validate();
    return c;
}

TurbulenceModel TurbulenceModel::from_scintillation_index(double si, double mean_irradiance) {
    require(si >= 0.0, ErrorCode::invalid_argument, "scintillation index must be >= 0");
    return TurbulenceModel{mean_irradiance, std::log1p(si)};
}

double TurbulenceModel::pdf(double intensity) const {
    require(log_variance > 0.0, ErrorCode::invalid_argument, "pdf needs log_variance > 0");
    if (intensity <= 0.0) return 0.0;
    const double z = std::log(intensity / mean_irradiance) + 0.5 * log_variance;
    return std::exp(-z * z / (2.0 * log_variance)) /
           (intensity * std::sqrt(2.0 * std::numbers::pi * log_variance));
}

double TurbulenceModel::cdf(double intensity) const {
    if (intensity <= 0.0) return 0.0;
    if (log_variance == 0.0) return intensity >= mean_irradiance ? 1.0 : 0.0;
    const double z = std::log(intensity / mean_irradiance) + 0.5 * log_variance;
    return 0.5 * std::erfc(-z / std::sqrt(2.0 * log_variance));
}

double TurbulenceModel::scintillation_index() const { return std::expm1(log_variance); }

BitStream generate_bits(std::size_t n, RandomStream& rng) {
    BitStream bits(n);
    for (auto& b : bits) b = rng.bit() ? 1 : 0;
    return bits;
}

std::vector<double> sample_turbulence(std::size_t n, double si, double corr, RandomStream& rng) {
    require(std::isfinite(si) && si >= 0.0, ErrorCode::invalid_argument,
            "scintillation index must be >= 0");
    check_corr(corr, "turbulence correlation length");

    const double sigma2 = std::log1p(si);
    const double sigma = std::sqrt(sigma2);
    const double mu = -0.5 * sigma2;
    const double rho = ar1_coefficient(corr);
    const double innov = std::sqrt(1.0 - rho * rho);

    std::vector<double> fading(n);
    double g = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double w = rng.normal();
        g = (k == 0) ? w : rho * g + innov * w;
        fading[k] = std::exp(mu + sigma * g);
    }
    return fading;
}

std::vector<double> sample_thermal(std::size_t n, double mean, double corr, RandomStream& rng) {
    require(std::isfinite(mean) && mean >= 0.0, ErrorCode::invalid_argument,
            "thermal mean must be >= 0");
    check_corr(corr, "thermal correlation length");

    const double rho = ar1_coefficient(corr);
    const double innov = std::sqrt(1.0 - rho * rho);
    const double scale = 0.5 * mean;

    std::vector<double> intensity(n);
    double re = 0.0;
    double im = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double wr = rng.normal();
        const double wi = rng.normal();
        if (k == 0) {
            re = wr;
            im = wi;
        } else {
            re = rho * re + innov * wr;
            im = rho * im + innov * wi;
        }
        intensity[k] = scale * (re * re + im * im);
    }
    return intensity;
}

std::vector<double> modulate(const BitStream& bits, const ChannelConfig& config) {
    std::vector<double> out;
    out.reserve(bits.size() * config.samples_per_bit);
    for (auto b : bits) {
        require(b <= 1, ErrorCode::invalid_argument, "bit values must be 0 or 1");
        out.insert(out.end(), config.samples_per_bit, config.bit_amplitude * b);
    }
    return out;
}

Waveform compose(const ChannelConfig& config, const std::optional<BitStream>& bits,
                 RandomStream& rng, std::size_t noise_only_bits) {
    config.validate();

    // One draw from the caller's stream; thermal, turbulence and detector
    // noise each get their own child so toggling turbulence leaves the
    // other two sequences untouched.
    const RandomStream base(rng.next_u64());
    RandomStream thermal_rng = base.fork(1);
    RandomStream turbulence_rng = base.fork(2);
    RandomStream detector_rng = base.fork(3);

    Waveform wf;
    wf.config = config;
    wf.contains_signal = bits.has_value();

    std::vector<double> signal;
    if (bits) {
        wf.truth_bits = *bits;
        signal = modulate(*bits, config);
    } else {
        signal.assign(noise_only_bits * config.samples_per_bit, 0.0);
    }
    const std::size_t n = signal.size();

    const auto thermal = sample_thermal(n, config.thermal_mean, config.thermal_corr, thermal_rng);
    std::vector<double> fading;
    if (config.turbulence_enabled) {
        fading = sample_turbulence(n, config.scintillation_index, config.turbulence_corr,
                                   turbulence_rng);
    }

    wf.samples.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double gain = config.turbulence_enabled ? fading[k] : 1.0;
        double v = gain * (signal[k] + thermal[k]);
        if (config.detector_noise_std > 0.0) v += config.detector_noise_std * detector_rng.normal();
        wf.samples[k] = v;
    }
    return wf;
}

Waveform compose(const ChannelConfig& config, const std::optional<BitStream>& bits,
                 std::size_t noise_only_bits) {
    RandomStream rng(config.seed);
    return compose(config, bits, rng, noise_only_bits);
}

double snr_db(const ChannelConfig& config) {
    require(config.thermal_mean > 0.0, ErrorCode::invalid_argument,
            "SNR undefined for thermal_mean = 0");
    require(config.bit_amplitude > 0.0, ErrorCode::invalid_argument,
            "SNR is -inf for bit_amplitude = 0");
    return 10.0 * std::log10(config.bit_amplitude / config.thermal_mean);
}

double amplitude_for_snr_db(double snr, double thermal_mean) {
    require(thermal_mean > 0.0, ErrorCode::invalid_argument, "thermal_mean must be > 0");
    return thermal_mean * std::pow(10.0, snr / 10.0);
}

} // namespace ookfso
