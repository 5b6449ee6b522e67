#include <doctest.h>

#include <cmath>

#include "ookfso/channel.hpp"
#include "ookfso/error.hpp"
#include "ookfso/metrics.hpp"
#include "test_support.hpp"

using namespace ookfso;
using testing::error_code_of;

namespace {

struct Counts {
    std::size_t off_off = 0, on_off = 0, off_on = 0, on_on = 0;
};

// Independent counting: (truth, pred) pairs tallied one by one.
Counts brute_force(const BitStream& truth, const BitStream& pred) {
    Counts c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == 0 && pred[i] == 0) ++c.off_off;
        if (truth[i] == 1 && pred[i] == 0) ++c.on_off;
        if (truth[i] == 0 && pred[i] == 1) ++c.off_on;
        if (truth[i] == 1 && pred[i] == 1) ++c.on_on;
    }
    return c;
}

BitStream random_stream(std::size_t n, RandomStream& rng, double p_one = 0.5) {
    BitStream b(n);
    for (auto& v : b) v = rng.uniform() < p_one ? 1 : 0;
    return b;
}

std::vector<double> lognormal_samples(std::size_t n, double si, double i0, std::uint64_t seed) {
    RandomStream rng(seed);
    auto l = sample_turbulence(n, si, 1.0, rng);
    for (auto& v : l) v *= i0;
    return l;
}

} // namespace

TEST_SUITE("metrics") {

TEST_CASE("confusion examples") {
    const auto a = confusion(BitStream{0, 0, 1}, BitStream{0, 0, 1});
    CHECK(a == ConfusionMatrix{2, 0, 0, 1});
    const auto b = confusion(BitStream{0, 1}, BitStream{1, 0});
    CHECK(b.fn == 1);
    CHECK(b.fp == 1);
    CHECK(b.tp == 0);
    CHECK(b.tn == 0);
    CHECK(error_code_of([] { confusion(BitStream{0, 1}, BitStream{0}); }) == ErrorCode::shape_mismatch);
}

TEST_CASE("f1 examples") {
    CHECK(f1({10, 0, 0, 0}) == 1.0);
    CHECK(std::abs(f1({8, 2, 4, 0}) - 8.0 / 11.0) <= 1e-12);
    CHECK(error_code_of([] { f1({0, 0, 0, 5}); }) == ErrorCode::undefined_metric);
    CHECK(f1({0, 3, 2, 1}) == 0.0);
}

TEST_CASE("score examples") {
    const BitStream t{0, 1, 1, 0, 1};
    const auto perfect = score(t, t);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.ber == 0.0);
    CHECK(perfect.f1 == 1.0);
    CHECK(perfect.n == 5);

    BitStream truth(100, 1), pred(100, 1);
    truth[0] = 0;
    truth[1] = 0; // two errors out of 100
    const auto r = score(truth, pred);
    CHECK(r.accuracy == 0.98);
    CHECK(r.ber == 1.0 - r.accuracy);
    CHECK(r.ber == doctest::Approx(0.02).epsilon(1e-14));

    CHECK(error_code_of([] { score(BitStream{}, BitStream{}); }) == ErrorCode::invalid_argument);

    // Only ON bits, all right: OFF-positive f1 undefined, reported as 0 with f1_on = 1.
    const auto only_on = score(BitStream{1, 1}, BitStream{1, 1});
    CHECK(only_on.f1 == 0.0);
    REQUIRE(only_on.f1_on.has_value());
    CHECK(*only_on.f1_on == 1.0);
}

TEST_CASE("oracle equivalence on random pairs") {
    RandomStream rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 1000);
        const double p_truth = rng.uniform(), p_pred = rng.uniform();
        const auto truth = random_stream(n, rng, p_truth);
        const auto pred = random_stream(n, rng, p_pred);
        const auto c = brute_force(truth, pred);
        const auto cm = confusion(truth, pred);
        REQUIRE(cm.tp == c.off_off);
        REQUIRE(cm.fp == c.on_off);
        REQUIRE(cm.fn == c.off_on);
        REQUIRE(cm.tn == c.on_on);
        REQUIRE(cm.total() == n);

        const auto r = score(truth, pred);
        std::size_t agree = 0;
        for (std::size_t i = 0; i < n; ++i) agree += truth[i] == pred[i];
        REQUIRE(r.accuracy == static_cast<double>(agree) / static_cast<double>(n));
        REQUIRE(r.ber == 1.0 - r.accuracy);
        REQUIRE(r.n == n);
        REQUIRE(r.confusion == cm);
        const double denom = c.off_off + 0.5 * (c.on_off + c.off_on);
        if (denom > 0) {
            const double expected = c.off_off / denom;
            REQUIRE(r.f1 == expected);
            REQUIRE(f1(cm) == expected);
            REQUIRE(r.f1 >= 0.0);
            REQUIRE(r.f1 <= 1.0);
            REQUIRE((r.f1 == 1.0) == (c.on_off == 0 && c.off_on == 0 && c.off_off > 0));
        }

        // Swapping the label convention.
        BitStream nt(n), np(n);
        for (std::size_t i = 0; i < n; ++i) {
            nt[i] = 1 - truth[i];
            np[i] = 1 - pred[i];
        }
        REQUIRE(confusion(nt, np) == cm.swapped());
        REQUIRE(cm.swapped().tp == cm.tn);
        REQUIRE(cm.swapped().fp == cm.fn);
    }
}

TEST_CASE("report JSON recomputes from its confusion") {
    RandomStream rng(5);
    const auto truth = random_stream(300, rng), pred = random_stream(300, rng);
    const auto j = to_json(score(truth, pred));
    const auto& c = j.at("confusion");
    const double tp = c.at("tp"), fp = c.at("fp"), fn = c.at("fn"), tn = c.at("tn");
    CHECK(j.at("n") == tp + fp + fn + tn);
    CHECK(j.at("accuracy").get<double>() == (tp + tn) / (tp + fp + fn + tn));
    CHECK(j.at("ber").get<double>() == 1.0 - j.at("accuracy").get<double>());
    CHECK(j.at("f1").get<double>() == tp / (tp + 0.5 * (fp + fn)));
}

TEST_CASE("confusion CSV is row-normalized per true class") {
    const auto csv = confusion_csv({6, 1, 2, 3});
    CHECK(csv == "true,pred_off,pred_on\noff,0.75,0.25\non,0.25,0.75\n");
    CHECK(confusion_csv({0, 0, 0, 4}) == "true,pred_off,pred_on\noff,0,0\non,0,1\n");
}

TEST_CASE("fit_scintillation: recovers the configured index") {
    const auto s = lognormal_samples(1'000'000, 1.8, 1.0, 31);
    const auto fit = fit_scintillation(s);
    CHECK(fit.si_hat >= 1.7);
    CHECK(fit.si_hat <= 1.9);
    CHECK(std::abs(fit.si_hat - std::expm1(fit.sigma2_hat)) <= 1e-12);
    CHECK(fit.sigma2_hat == doctest::Approx(std::log(2.8)).epsilon(0.01));
    CHECK(fit.i0_hat == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("fit_scintillation: degenerate and invalid inputs") {
    const std::vector<double> c(200, 4.5);
    const auto fit = fit_scintillation(c);
    CHECK(fit.sigma2_hat == doctest::Approx(0.0));
    CHECK(fit.si_hat == doctest::Approx(0.0));
    CHECK(fit.i0_hat == doctest::Approx(4.5).epsilon(1e-14));

    auto with_zero = lognormal_samples(500, 1.0, 1.0, 1);
    with_zero[10] = 0.0;
    CHECK(error_code_of([&] { fit_scintillation(with_zero); }) == ErrorCode::invalid_argument);
    with_zero[10] = -1.0;
    CHECK(error_code_of([&] { fit_scintillation(with_zero); }) == ErrorCode::invalid_argument);
    CHECK(error_code_of([] { fit_scintillation(std::vector<double>(99, 1.0)); }) == ErrorCode::invalid_argument);
}

TEST_CASE("fit_scintillation: scale equivariance") {
    const auto s = lognormal_samples(100'000, 1.2, 2.0, 8);
    auto scaled = s;
    for (auto& v : scaled) v *= 137.0;
    const auto a = fit_scintillation(s), b = fit_scintillation(scaled);
    CHECK(std::abs(b.i0_hat - 137.0 * a.i0_hat) <= 1e-10 * b.i0_hat);
    CHECK(std::abs(b.sigma2_hat - a.sigma2_hat) <= 1e-10);
    CHECK(std::abs(b.si_hat - a.si_hat) <= 1e-10);
}

TEST_CASE("histogram fit agrees with moments on log-normal data") {
    for (double si : {0.5, 1.8}) {
        CAPTURE(si);
        const auto s = lognormal_samples(1'000'000, si, 3.0, 41);
        const auto m = fit_scintillation(s);
        const auto h = fit_scintillation_histogram(s);
        CHECK(std::abs(h.si_hat - m.si_hat) <= 0.1 * m.si_hat);
        CHECK(std::abs(h.i0_hat - m.i0_hat) <= 0.1 * m.i0_hat);
        CHECK(std::abs(h.si_hat - std::expm1(h.sigma2_hat)) <= 1e-12);
    }
}

TEST_CASE("intensity moments") {
    const std::vector<double> v{1.0, 2.0, 3.0, 6.0};
    const auto m = intensity_moments(v);
    CHECK(m.mean == 3.0);
    // Population variance (4 + 1 + 0 + 9) / 4 = 3.5.
    CHECK(m.normalized_variance == doctest::Approx(3.5 / 9.0).epsilon(1e-15));
}

}
