#include "ookfso/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <vector>

#include "ookfso/error.hpp"

namespace ookfso {

ConfusionMatrix confusion(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> pred) {
    require(truth.size() == pred.size(), ErrorCode::shape_mismatch,
            "confusion: truth has " + std::to_string(truth.size()) + " bits, prediction " +
                std::to_string(pred.size()));
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        require(truth[i] <= 1 && pred[i] <= 1, ErrorCode::invalid_argument, "bits must be 0 or 1");
        if (truth[i] == 0)
            (pred[i] == 0 ? cm.tp : cm.fn) += 1;
        else
            (pred[i] == 0 ? cm.fp : cm.tn) += 1;
    }
    return cm;
}

double f1(const ConfusionMatrix& cm) {
    const double denom = static_cast<double>(cm.tp) + 0.5 * static_cast<double>(cm.fp + cm.fn);
    require(denom > 0.0, ErrorCode::undefined_metric, "F1 undefined: tp + fp + fn = 0");
    return static_cast<double>(cm.tp) / denom;
}

ScoreReport score(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> pred) {
    require(!truth.empty(), ErrorCode::invalid_argument, "score: empty input");
    ScoreReport r;
    r.confusion = confusion(truth, pred);
    r.n = truth.size();
    r.accuracy = static_cast<double>(r.confusion.tp + r.confusion.tn) / static_cast<double>(r.n);
    r.ber = 1.0 - r.accuracy;
    r.f1 = r.confusion.tp + r.confusion.fp + r.confusion.fn > 0 ? f1(r.confusion) : 0.0;
    const auto on = r.confusion.swapped();
    if (on.tp + on.fp + on.fn > 0) r.f1_on = f1(on);
    return r;
}

nlohmann::json to_json(const ScoreReport& r) {
    nlohmann::json j{
        {"accuracy", r.accuracy},
        {"ber", r.ber},
        {"f1", r.f1},
        {"n", r.n},
        {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}}},
        {"positive_class", "OFF"},
    };
    j["f1_on"] = r.f1_on ? nlohmann::json(*r.f1_on) : nlohmann::json(nullptr);
    return j;
}

std::string confusion_csv(const ConfusionMatrix& cm) {
    auto norm = [](std::size_t a, std::size_t b) {
        const std::size_t s = a + b;
        return s == 0 ? std::array<double, 2>{0.0, 0.0}
                      : std::array<double, 2>{static_cast<double>(a) / static_cast<double>(s),
                                              static_cast<double>(b) / static_cast<double>(s)};
    };
    const auto off = norm(cm.tp, cm.fn);
    const auto on = norm(cm.fp, cm.tn);
    std::ostringstream os;
    os.precision(6);
    os << "true,pred_off,pred_on\n";
    os << "off," << off[0] << ',' << off[1] << '\n';
    os << "on," << on[0] << ',' << on[1] << '\n';
    return os.str();
}

IntensityMoments intensity_moments(std::span<const double> samples) {
    require(!samples.empty(), ErrorCode::invalid_argument, "moments of an empty sequence");
    double sum = 0.0;
    for (double v : samples) sum += v;
    const double mean = sum / static_cast<double>(samples.size());
    double ss = 0.0;
    for (double v : samples) ss += (v - mean) * (v - mean);
    const double var = ss / static_cast<double>(samples.size());
    return {mean, mean != 0.0 ? var / (mean * mean) : 0.0};
}

namespace {

void check_fit_input(std::span<const double> samples) {
    require(samples.size() >= 100, ErrorCode::invalid_argument,
            "scintillation fit needs at least 100 samples, got " + std::to_string(samples.size()));
    for (double v : samples)
        require(std::isfinite(v) && v > 0.0, ErrorCode::invalid_argument,
                "scintillation fit needs strictly positive intensities");
}

} // namespace

ScintillationFit fit_scintillation(std::span<const double> samples) {
    check_fit_input(samples);
    const double n = static_cast<double>(samples.size());
    double sum = 0.0;
    for (double v : samples) sum += std::log(v);
    const double mean_log = sum / n;
    double ss = 0.0;
    for (double v : samples) {
        const double d = std::log(v) - mean_log;
        ss += d * d;
    }
    ScintillationFit fit;
    fit.sigma2_hat = ss / n;
    fit.i0_hat = std::exp(mean_log + 0.5 * fit.sigma2_hat);
    fit.si_hat = std::expm1(fit.sigma2_hat);
    return fit;
}

ScintillationFit fit_scintillation_histogram(std::span<const double> samples, std::size_t bins) {
    check_fit_input(samples);
    require(bins >= 4, ErrorCode::invalid_argument, "histogram fit needs at least 4 bins");

    std::vector<double> sorted(samples.begin(), samples.end());
    const auto q = static_cast<std::ptrdiff_t>(0.99 * static_cast<double>(sorted.size() - 1));
    std::nth_element(sorted.begin(), sorted.begin() + q, sorted.end());
    const double upper = sorted[static_cast<std::size_t>(q)];
    const double width = upper / static_cast<double>(bins);
    const double n = static_cast<double>(samples.size());

    std::vector<double> density(bins, 0.0);
    for (double v : samples) {
        if (v >= upper) continue;
        density[std::min(bins - 1, static_cast<std::size_t>(v / width))] += 1.0;
    }
    for (auto& d : density) d /= n * width;

    // Bin-averaged model density, parameters (ln I0, ln sigma^2).
    auto model = [&](const std::array<double, 2>& theta, std::size_t b) {
        const double i0 = std::exp(theta[0]);
        const double s2 = std::exp(theta[1]);
        auto cdf = [&](double x) {
            if (x <= 0.0) return 0.0;
            return 0.5 * std::erfc(-(std::log(x / i0) + 0.5 * s2) / std::sqrt(2.0 * s2));
        };
        return (cdf(width * static_cast<double>(b + 1)) - cdf(width * static_cast<double>(b))) / width;
    };
    auto sse = [&](const std::array<double, 2>& theta) {
        double s = 0.0;
        for (std::size_t b = 0; b < bins; ++b) {
            const double r = density[b] - model(theta, b);
            s += r * r;
        }
        return s;
    };

    const auto start = fit_scintillation(samples);
    std::array<double, 2> theta{std::log(start.i0_hat), std::log(std::max(start.sigma2_hat, 1e-8))};
    double lambda = 1e-3;
    double current = sse(theta);

    // Levenberg-Marquardt with a forward-difference Jacobian.
    bool converged = false;
    for (int iter = 0; iter < 200 && !converged; ++iter) {
        std::array<double, 4> jtj{};
        std::array<double, 2> jtr{};
        for (std::size_t b = 0; b < bins; ++b) {
            const double m0 = model(theta, b);
            const double r = density[b] - m0;
            std::array<double, 2> g{};
            for (int k = 0; k < 2; ++k) {
                auto t = theta;
                t[k] += 1e-6;
                g[k] = (model(t, b) - m0) / 1e-6;
            }
            jtj[0] += g[0] * g[0];
            jtj[1] += g[0] * g[1];
            jtj[3] += g[1] * g[1];
            jtr[0] += g[0] * r;
            jtr[1] += g[1] * r;
        }
        jtj[2] = jtj[1];

        bool improved = false;
        for (int tries = 0; tries < 20 && !improved; ++tries) {
            const double a = jtj[0] * (1.0 + lambda), d = jtj[3] * (1.0 + lambda), c = jtj[1];
            const double det = a * d - c * c;
            if (det == 0.0) {
                lambda *= 10.0;
                continue;
            }
            const std::array<double, 2> step{(d * jtr[0] - c * jtr[1]) / det, (a * jtr[1] - c * jtr[0]) / det};
            const std::array<double, 2> cand{theta[0] + step[0], theta[1] + step[1]};
            const double value = sse(cand);
            if (value < current) {
                const double gain = current - value;
                theta = cand;
                current = value;
                lambda = std::max(lambda / 10.0, 1e-12);
                improved = true;
                converged = gain < 1e-14 * std::max(1.0, current);
            } else {
                lambda *= 10.0;
            }
        }
        if (!improved) break;
    }

    ScintillationFit fit;
    fit.i0_hat = std::exp(theta[0]);
    fit.sigma2_hat = std::exp(theta[1]);
    fit.si_hat = std::expm1(fit.sigma2_hat);
    return fit;
}

} // namespace ookfso
