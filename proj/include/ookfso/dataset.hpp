#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ookfso/channel.hpp"
#include "ookfso/random.hpp"

namespace ookfso {

enum class DatasetKind { presence, bit };

const char* to_string(DatasetKind kind) noexcept;
DatasetKind dataset_kind_from_string(const std::string& s);

// A samples_per_bit x window_bits window; column j holds bit slot j.
struct WindowExample {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> values; // column-major, i.e. the original sample order
    std::uint8_t presence_label = 0;

    float at(std::size_t row, std::size_t col) const { return values[col * rows + row]; }
};

struct BitExample {
    std::vector<float> values;
    std::uint8_t bit_label = 0;
};

// Examples are stored flat. Within an example, values are column-major
// (column = bit slot), which is also the on-disk order.
struct LabeledDataset {
    DatasetKind kind = DatasetKind::bit;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> values;
    std::vector<std::uint8_t> labels;
    ChannelConfig channel_meta;
    std::size_t window_bits = 0; // presence only

    std::size_t size() const noexcept { return labels.size(); }
    bool empty() const noexcept { return labels.empty(); }
    std::size_t example_size() const noexcept { return rows * cols; }

    std::span<const float> example(std::size_t i) const {
        return {values.data() + i * example_size(), example_size()};
    }
    float at(std::size_t i, std::size_t row, std::size_t col) const {
        return values[i * example_size() + col * rows + row];
    }

    WindowExample window(std::size_t i) const;
    BitExample bit(std::size_t i) const;

    LabeledDataset subset(std::span<const std::size_t> indices) const;
    void append(const LabeledDataset& other);
    // Every value multiplied by c (float arithmetic); labels untouched.
    LabeledDataset scaled(double c) const;
    // Mean of all values, accumulated in double.
    double value_mean() const;

    bool operator==(const LabeledDataset&) const = default;
};

LabeledDataset make_presence_examples(std::span<const Waveform> waveforms, std::size_t window_bits);
LabeledDataset make_bit_examples(std::span<const Waveform> waveforms);

// Uniform permutation then prefix split; |train| = round(train_fraction * n).
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double train_fraction,
                                                RandomStream& rng);

inline constexpr std::uint32_t kDatasetVersion = 1;

void save(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load(const std::filesystem::path& path);

} // namespace ookfso
