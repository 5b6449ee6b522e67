#include "ookfso/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "binary_io.hpp"
#include "ookfso/error.hpp"

namespace ookfso {

namespace {

constexpr std::string_view kMagic = "OOKD";

void check_shape_consistency(const LabeledDataset& ds) {
    const std::size_t spb = ds.channel_meta.samples_per_bit;
    require(ds.rows == spb, ErrorCode::shape_mismatch,
            "dataset rows (" + std::to_string(ds.rows) + ") != samples_per_bit (" +
                std::to_string(spb) + ")");
    if (ds.kind == DatasetKind::bit) {
        require(ds.cols == 1, ErrorCode::shape_mismatch,
                "bit dataset must have exactly one column, header says " + std::to_string(ds.cols));
    } else {
        require(ds.window_bits >= 1 && ds.cols == ds.window_bits, ErrorCode::shape_mismatch,
                "presence dataset columns (" + std::to_string(ds.cols) + ") != window_bits (" +
                    std::to_string(ds.window_bits) + ")");
    }
}

} // namespace

const char* to_string(DatasetKind kind) noexcept {
    return kind == DatasetKind::presence ? "presence" : "bit";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
    if (s == "presence") return DatasetKind::presence;
    if (s == "bit") return DatasetKind::bit;
    fail(ErrorCode::bad_header, "unknown dataset kind '" + s + "'");
}

WindowExample LabeledDataset::window(std::size_t i) const {
    const auto v = example(i);
    return WindowExample{rows, cols, std::vector<float>(v.begin(), v.end()), labels[i]};
}

BitExample LabeledDataset::bit(std::size_t i) const {
    const auto v = example(i);
    return BitExample{std::vector<float>(v.begin(), v.end()), labels[i]};
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out;
    out.kind = kind;
    out.rows = rows;
    out.cols = cols;
    out.channel_meta = channel_meta;
    out.window_bits = window_bits;
    out.values.reserve(indices.size() * example_size());
    out.labels.reserve(indices.size());
    for (auto i : indices) {
        require(i < size(), ErrorCode::invalid_argument, "subset index out of range");
        const auto v = example(i);
        out.values.insert(out.values.end(), v.begin(), v.end());
        out.labels.push_back(labels[i]);
    }
    return out;
}

void LabeledDataset::append(const LabeledDataset& other) {
    if (empty() && values.empty()) {
        *this = other;
        return;
    }
    require(other.kind == kind && other.rows == rows && other.cols == cols, ErrorCode::shape_mismatch,
            "cannot append datasets of different kind or shape");
    values.insert(values.end(), other.values.begin(), other.values.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
}

LabeledDataset LabeledDataset::scaled(double c) const {
    LabeledDataset out = *this;
    const float f = static_cast<float>(c);
    for (auto& v : out.values) v *= f;
    out.channel_meta.bit_amplitude *= c;
    out.channel_meta.thermal_mean *= c;
    out.channel_meta.detector_noise_std *= c;
    return out;
}

double LabeledDataset::value_mean() const {
    require(!values.empty(), ErrorCode::invalid_argument, "mean of an empty dataset");
    double sum = 0.0;
    for (float v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

LabeledDataset make_presence_examples(std::span<const Waveform> waveforms, std::size_t window_bits) {
    require(window_bits >= 1, ErrorCode::invalid_argument, "window_bits must be >= 1");

    LabeledDataset ds;
    ds.kind = DatasetKind::presence;
    ds.cols = window_bits;
    ds.window_bits = window_bits;
    ds.rows = waveforms.empty() ? ChannelConfig{}.samples_per_bit
                                : waveforms.front().config.samples_per_bit;
    if (!waveforms.empty()) ds.channel_meta = waveforms.front().config;

    const std::size_t window_len = ds.rows * window_bits;
    for (const auto& wf : waveforms) {
        const std::size_t spb = wf.config.samples_per_bit;
        require(spb == ds.rows, ErrorCode::shape_mismatch,
                "waveforms disagree on samples_per_bit");
        require(wf.samples.size() % spb == 0, ErrorCode::shape_mismatch,
                "waveform length " + std::to_string(wf.samples.size()) +
                    " is not a multiple of samples_per_bit " + std::to_string(spb));
        const std::size_t windows = wf.samples.size() / window_len;
        const std::uint8_t label = wf.contains_signal ? 1 : 0;
        for (std::size_t w = 0; w < windows; ++w) {
            const auto first = wf.samples.begin() + static_cast<std::ptrdiff_t>(w * window_len);
            for (auto it = first; it != first + static_cast<std::ptrdiff_t>(window_len); ++it)
                ds.values.push_back(static_cast<float>(*it));
            ds.labels.push_back(label);
        }
    }
    return ds;
}

LabeledDataset make_bit_examples(std::span<const Waveform> waveforms) {
    LabeledDataset ds;
    ds.kind = DatasetKind::bit;
    ds.cols = 1;
    ds.rows = waveforms.empty() ? ChannelConfig{}.samples_per_bit
                                : waveforms.front().config.samples_per_bit;
    if (!waveforms.empty()) ds.channel_meta = waveforms.front().config;

    for (const auto& wf : waveforms) {
        require(wf.contains_signal, ErrorCode::invalid_argument,
                "bit examples need signal-bearing waveforms; got a noise-only waveform");
        const std::size_t spb = wf.config.samples_per_bit;
        require(spb == ds.rows, ErrorCode::shape_mismatch, "waveforms disagree on samples_per_bit");
        require(wf.samples.size() == wf.truth_bits.size() * spb, ErrorCode::shape_mismatch,
                "waveform length does not match its truth bits");
        for (std::size_t b = 0; b < wf.truth_bits.size(); ++b) {
            for (std::size_t k = 0; k < spb; ++k)
                ds.values.push_back(static_cast<float>(wf.samples[b * spb + k]));
            ds.labels.push_back(wf.truth_bits[b]);
        }
    }
    return ds;
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double train_fraction,
                                                RandomStream& rng) {
    require(train_fraction > 0.0 && train_fraction < 1.0, ErrorCode::invalid_argument,
            "train_fraction must lie strictly between 0 and 1");
    const std::size_t n = ds.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng.engine());

    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    const std::span<const std::size_t> all(order);
    return {ds.subset(all.first(n_train)), ds.subset(all.subspan(n_train))};
}

void save(const LabeledDataset& ds, const std::filesystem::path& path) {
    require(!ds.empty(), ErrorCode::invalid_argument, "refusing to save an empty dataset");
    require(ds.values.size() == ds.size() * ds.example_size(), ErrorCode::shape_mismatch,
            "dataset value count does not match its shape");
    check_shape_consistency(ds);

    const nlohmann::json header{
        {"kind", to_string(ds.kind)},
        {"example_count", ds.size()},
        {"rows", ds.rows},
        {"cols", ds.cols},
        {"channel_meta", to_json(ds.channel_meta)},
        {"window_bits", ds.window_bits},
    };
    const std::string text = header.dump();

    detail::ByteWriter w;
    w.bytes(kMagic);
    w.u32(kDatasetVersion);
    w.u64(text.size());
    w.bytes(text);
    w.floats(ds.values);
    w.u8s(ds.labels);
    detail::write_file_atomic(path, w.buffer());
}

LabeledDataset load(const std::filesystem::path& path) {
    detail::ByteReader r(detail::read_file(path));

    std::string magic;
    if (!r.try_bytes(kMagic.size(), magic) || magic != kMagic)
        fail(ErrorCode::bad_magic, "not a dataset file (bad magic): " + path.string());
    const auto version = r.u32("version");
    require(version == kDatasetVersion, ErrorCode::version_mismatch,
            "dataset version " + std::to_string(version) + " unsupported (expected " +
                std::to_string(kDatasetVersion) + ")");
    const auto header_len = r.u64("header length");
    std::string text;
    if (!r.try_bytes(header_len, text))
        fail(ErrorCode::truncated_payload, "truncated payload while reading header");

    LabeledDataset ds;
    std::size_t count = 0;
    try {
        const auto header = nlohmann::json::parse(text);
        ds.kind = dataset_kind_from_string(header.at("kind").get<std::string>());
        count = header.at("example_count").get<std::size_t>();
        ds.rows = header.at("rows").get<std::size_t>();
        ds.cols = header.at("cols").get<std::size_t>();
        ds.window_bits = header.at("window_bits").get<std::size_t>();
        ds.channel_meta = channel_config_from_json(header.at("channel_meta"));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_header, std::string("malformed dataset header: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::config) fail(ErrorCode::bad_header, e.what());
        throw;
    }
    require(count > 0, ErrorCode::shape_mismatch, "dataset header declares zero examples");
    require(ds.rows > 0 && ds.cols > 0, ErrorCode::shape_mismatch, "dataset header has empty shape");
    check_shape_consistency(ds);

    ds.values.resize(count * ds.rows * ds.cols);
    ds.labels.resize(count);
    r.floats(ds.values, "values");
    r.u8s(ds.labels, "labels");
    require(r.remaining() == 0, ErrorCode::shape_mismatch,
            "payload is larger than the header declares (" + std::to_string(r.remaining()) +
                " extra bytes)");
    for (auto l : ds.labels)
        require(l <= 1, ErrorCode::label_corruption,
                "label value " + std::to_string(l) + " is not 0 or 1");
    for (float v : ds.values)
        require(std::isfinite(v), ErrorCode::shape_mismatch, "non-finite value in dataset payload");
    return ds;
}

} // namespace ookfso
