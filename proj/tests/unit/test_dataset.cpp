#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <numeric>
#include <set>

#include "ookfso/dataset.hpp"
#include "ookfso/error.hpp"
#include "test_support.hpp"

#include <json.hpp>

using namespace ookfso;
using testing::error_code_of;

namespace {

Waveform noise_waveform(std::size_t slots, std::uint64_t seed = 1) {
    ChannelConfig cfg;
    cfg.seed = seed;
    return compose(cfg, std::nullopt, slots);
}

Waveform signal_waveform(const BitStream& bits, std::uint64_t seed = 2) {
    ChannelConfig cfg;
    cfg.seed = seed;
    return compose(cfg, bits);
}

BitStream random_bits(std::size_t n, std::uint64_t seed) {
    RandomStream rng(seed);
    return generate_bits(n, rng);
}

std::string header_of(const std::filesystem::path& p) {
    const auto bytes = testing::read_bytes(p);
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 8);
    return std::string(bytes.data() + 16, len);
}

std::vector<char> payload_of(const std::filesystem::path& p) {
    const auto bytes = testing::read_bytes(p);
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 8);
    return {bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len), bytes.end()};
}

} // namespace

TEST_SUITE("dataset") {

TEST_CASE("make_presence_examples: counts and labels") {
    const auto noise = noise_waveform(2);
    const auto ds = make_presence_examples(std::span(&noise, 1), 1);
    CHECK(ds.kind == DatasetKind::presence);
    CHECK(ds.size() == 2);
    CHECK(ds.labels == std::vector<std::uint8_t>{0, 0});
    CHECK(ds.rows == 35);
    CHECK(ds.cols == 1);

    const auto sig = signal_waveform(random_bits(14, 3));
    REQUIRE(sig.samples.size() == 490);
    const auto one = make_presence_examples(std::span(&sig, 1), 14);
    CHECK(one.size() == 1);
    CHECK(one.rows == 35);
    CHECK(one.cols == 14);
    CHECK(one.window_bits == 14);
    CHECK(one.labels[0] == 1);

    const auto off = signal_waveform(BitStream(28, 0));
    const auto offs = make_presence_examples(std::span(&off, 1), 14);
    CHECK(offs.size() == 2);
    CHECK(offs.labels == std::vector<std::uint8_t>{1, 1});
}

TEST_CASE("make_presence_examples: trailing remainder dropped, sources concatenated in order") {
    std::vector<Waveform> w{noise_waveform(30, 4), signal_waveform(random_bits(31, 5))};
    const auto ds = make_presence_examples(w, 7);
    CHECK(ds.size() == 30 / 7 + 31 / 7);
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK(ds.labels[i] == (i < 30 / 7 ? 0 : 1));
}

TEST_CASE("make_presence_examples: reshape inverse") {
    const auto sig = signal_waveform(random_bits(42, 6));
    const std::size_t x = 5;
    const auto ds = make_presence_examples(std::span(&sig, 1), x);
    REQUIRE(ds.size() == 42 / x);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto w = ds.window(i);
        CHECK(w.rows == 35);
        CHECK(w.cols == x);
        // Flattening column by column gives back the consecutive samples.
        for (std::size_t col = 0; col < x; ++col)
            for (std::size_t row = 0; row < 35; ++row)
                CHECK(w.at(row, col) == static_cast<float>(sig.samples[i * 35 * x + col * 35 + row]));
        CHECK(std::equal(w.values.begin(), w.values.end(), ds.example(i).begin()));
    }
}

TEST_CASE("make_presence_examples: rejects bad inputs") {
    auto w = noise_waveform(3);
    CHECK(error_code_of([&] { make_presence_examples(std::span(&w, 1), 0); }) == ErrorCode::invalid_argument);
    w.samples.pop_back();
    CHECK(error_code_of([&] { make_presence_examples(std::span(&w, 1), 1); }) == ErrorCode::shape_mismatch);
}

TEST_CASE("make_bit_examples") {
    const auto wf = signal_waveform({1, 0}, 8);
    const auto ds = make_bit_examples(std::span(&wf, 1));
    CHECK(ds.kind == DatasetKind::bit);
    CHECK(ds.labels == std::vector<std::uint8_t>{1, 0});
    CHECK(ds.rows == 35);
    CHECK(ds.cols == 1);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto b = ds.bit(i);
        for (std::size_t k = 0; k < 35; ++k) CHECK(b.values[k] == static_cast<float>(wf.samples[i * 35 + k]));
    }

    CHECK(make_bit_examples({}).empty());

    const auto noise = noise_waveform(2);
    CHECK(error_code_of([&] { make_bit_examples(std::span(&noise, 1)); }) == ErrorCode::invalid_argument);
}

TEST_CASE("make_bit_examples: label conservation at corpus scale") {
    const auto bits = random_bits(500'000, 9);
    const auto wf = signal_waveform(bits, 10);
    const auto ds = make_bit_examples(std::span(&wf, 1));
    CHECK(ds.size() == 500'000);
    CHECK(std::count(ds.labels.begin(), ds.labels.end(), 1) == std::count(bits.begin(), bits.end(), 1));
    CHECK(ds.labels == bits);
}

TEST_CASE("split: sizes, partition, determinism") {
    const auto wf = signal_waveform(random_bits(10, 11));
    const auto ds = make_bit_examples(std::span(&wf, 1));
    RandomStream a(1), b(1);
    const auto [tr, va] = split(ds, 0.8, a);
    const auto [tr2, va2] = split(ds, 0.8, b);
    CHECK(tr.size() == 8);
    CHECK(va.size() == 2);
    CHECK(tr == tr2);
    CHECK(va == va2);

    // Multiset of examples is preserved; identify examples by their values.
    std::multiset<std::vector<float>> whole, parts;
    for (std::size_t i = 0; i < ds.size(); ++i) whole.insert({ds.example(i).begin(), ds.example(i).end()});
    for (const auto* part : {&tr, &va})
        for (std::size_t i = 0; i < part->size(); ++i)
            parts.insert({part->example(i).begin(), part->example(i).end()});
    CHECK(whole == parts);

    for (double bad : {0.0, 1.0, -0.5, 1.5}) {
        RandomStream rng(0);
        CHECK_THROWS_AS(split(ds, bad, rng), Error);
    }
}

TEST_CASE("split: rounding rule at scale") {
    LabeledDataset ds;
    ds.kind = DatasetKind::bit;
    ds.rows = 1;
    ds.cols = 1;
    ds.values.resize(1'000'000);
    std::iota(ds.values.begin(), ds.values.end(), 0.0f);
    ds.labels.assign(1'000'000, 0);
    RandomStream rng(3);
    const auto [tr, va] = split(ds, 0.8, rng);
    CHECK(tr.size() == 800'000);
    CHECK(va.size() == 200'000);
    for (std::size_t n : {3u, 7u, 13u}) {
        auto small = ds.subset(std::vector<std::size_t>(n, 0));
        RandomStream r(0);
        CHECK(split(small, 0.8, r).first.size() == static_cast<std::size_t>(std::llround(0.8 * n)));
    }
}

TEST_CASE("save/load round trip") {
    testing::TempDir dir;
    std::vector<Waveform> w{noise_waveform(40, 12), signal_waveform(random_bits(40, 13))};
    w[1].config.turbulence_enabled = true;
    const auto pres = make_presence_examples(w, 3);
    save(pres, dir / "p.ookd");
    CHECK(load(dir / "p.ookd") == pres);

    const auto bits = make_bit_examples(std::span(&w[1], 1));
    save(bits, dir / "b.ookd");
    const auto back = load(dir / "b.ookd");
    CHECK(back == bits);
    CHECK(back.channel_meta == bits.channel_meta);

    // Byte-level layout.
    const auto bytes = testing::read_bytes(dir / "b.ookd");
    CHECK(std::string(bytes.data(), 4) == "OOKD");
    std::uint32_t version = 0;
    std::memcpy(&version, bytes.data() + 4, 4);
    CHECK(version == 1);
    const auto header = nlohmann::json::parse(header_of(dir / "b.ookd"));
    CHECK(header.at("kind") == "bit");
    CHECK(header.at("example_count") == bits.size());
    CHECK(header.at("rows") == 35);
    CHECK(header.at("cols") == 1);
    CHECK(header.contains("channel_meta"));
    CHECK(header.contains("window_bits"));
    CHECK(payload_of(dir / "b.ookd").size() == bits.size() * 35 * 4 + bits.size());

    // Writing twice is byte-identical.
    save(bits, dir / "b2.ookd");
    CHECK(testing::read_bytes(dir / "b2.ookd") == bytes);
}

TEST_CASE("save rejects empty dataset") {
    testing::TempDir dir;
    LabeledDataset empty;
    empty.rows = 35;
    empty.cols = 1;
    CHECK_THROWS_AS(save(empty, dir / "e.ookd"), Error);
}

TEST_CASE("load: distinct error codes for corruption") {
    testing::TempDir dir;
    const auto wf = signal_waveform(random_bits(28, 14));
    const auto pres = make_presence_examples(std::span(&wf, 1), 14);
    const auto path = dir / "p.ookd";
    save(pres, path);
    const auto good = testing::read_bytes(path);
    const auto header = header_of(path);
    const auto payload = payload_of(path);

    auto code_for = [&](const std::vector<char>& bytes) {
        testing::write_bytes(dir / "x.ookd", bytes);
        return error_code_of([&] { load(dir / "x.ookd"); });
    };

    CHECK(error_code_of([&] { load(dir / "missing.ookd"); }) == ErrorCode::file_not_found);
    CHECK(code_for(std::vector<char>(good.begin(), good.end() - 10)) == ErrorCode::truncated_payload);
    CHECK(code_for(std::vector<char>(good.begin(), good.begin() + 6)) == ErrorCode::truncated_payload);
    CHECK(code_for(testing::container("OOKX", 1, header, payload)) == ErrorCode::bad_magic);
    CHECK(code_for(testing::container("OOKD", 2, header, payload)) == ErrorCode::version_mismatch);
    CHECK(code_for(testing::container("OOKD", 1, "{not json", payload)) == ErrorCode::bad_header);

    auto j = nlohmann::json::parse(header);
    j["kind"] = "bit";
    CHECK(code_for(testing::container("OOKD", 1, j.dump(), payload)) == ErrorCode::shape_mismatch);

    auto bad_labels = payload;
    bad_labels.back() = 7;
    CHECK(code_for(testing::container("OOKD", 1, header, bad_labels)) == ErrorCode::label_corruption);

    auto longer = payload;
    longer.push_back(0);
    CHECK(code_for(testing::container("OOKD", 1, header, longer)) == ErrorCode::shape_mismatch);

    j = nlohmann::json::parse(header);
    j["example_count"] = 0;
    CHECK(code_for(testing::container("OOKD", 1, j.dump(), {})) == ErrorCode::shape_mismatch);

    // Hand-built file with the documented layout loads.
    CHECK(load(path) == pres);
    testing::write_bytes(dir / "y.ookd", testing::container("OOKD", 1, header, payload));
    CHECK(load(dir / "y.ookd") == pres);
}

TEST_CASE("scaled and value_mean") {
    const auto wf = signal_waveform(random_bits(20, 15));
    const auto ds = make_bit_examples(std::span(&wf, 1));
    const auto s = ds.scaled(137.0);
    CHECK(s.labels == ds.labels);
    for (std::size_t i = 0; i < ds.values.size(); ++i)
        CHECK(s.values[i] == static_cast<float>(static_cast<double>(ds.values[i]) * 137.0));
    double m = 0.0;
    for (float v : ds.values) m += v;
    CHECK(ds.value_mean() == doctest::Approx(m / ds.values.size()).epsilon(1e-12));
}

}
