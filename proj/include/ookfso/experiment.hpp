#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ookfso/channel.hpp"
#include "ookfso/dataset.hpp"
#include "ookfso/demod.hpp"
#include "ookfso/metrics.hpp"
#include "ookfso/model.hpp"

namespace ookfso {

// Case 1: thermal background only. Case 2: thermal background + turbulence.
enum class NoiseCase { thermal, turbulence };

const char* to_string(NoiseCase c) noexcept;
NoiseCase noise_case_from_string(const std::string& s);

enum class ThresholdReference { evaluation, training };

struct StageConfig {
    TrainConfig train;
    ArchitectureConfig arch;
};

struct ExperimentConfig {
    ChannelConfig channel;
    StageConfig detect{presence_train_defaults(), default_presence_architecture()};
    StageConfig demod{bit_train_defaults(), default_bit_architecture()};
    std::vector<double> snr_grid_db{-5.0, 0.0, 5.0, 10.0, 15.0, 20.0};
    std::vector<std::size_t> window_bits_grid{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14};
    // Bit slots per source waveform in a presence corpus (one noise-only and
    // one signal-bearing source per case).
    std::size_t corpus_bits = 100000;
    // Bits in a stage-2 corpus.
    std::size_t bit_corpus_bits = 50000;
    std::size_t window_bits = 14;
    double train_fraction = 0.8;
    std::vector<NoiseCase> cases{NoiseCase::thermal, NoiseCase::turbulence};
    ThresholdReference threshold_reference = ThresholdReference::evaluation;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 1;
    std::size_t workers = 1;

    void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Progress lines; may be called from worker threads (serialized internally).
using LogFn = std::function<void(const std::string&)>;

ChannelConfig case_channel(const ExperimentConfig& cfg, NoiseCase c);

// One noise-only and one signal-bearing waveform of cfg.corpus_bits slots each.
std::vector<Waveform> presence_sources(const ExperimentConfig& cfg, NoiseCase c);
LabeledDataset presence_corpus(const ExperimentConfig& cfg, NoiseCase c, std::size_t window_bits);
LabeledDataset bit_corpus(const ExperimentConfig& cfg, NoiseCase c, double bit_amplitude);

struct GeneratedFile {
    std::filesystem::path path;
    DatasetKind kind;
    NoiseCase noise_case;
    std::size_t examples;
    std::size_t window_bits;
};

std::vector<GeneratedFile> cmd_generate(const ExperimentConfig& cfg, const LogFn& log = {});

enum class Stage { detect, demod };
Stage stage_from_string(const std::string& s);

struct TrainOutputs {
    std::filesystem::path model_path;
    std::filesystem::path history_path;
    NetworkModel model;
};

// Trains on train_path; validates on val_path, or on a held-out split of
// train_path when val_path is empty.
TrainOutputs cmd_train(const ExperimentConfig& cfg, Stage stage, const std::filesystem::path& train_path,
                       const std::filesystem::path& val_path, const LogFn& log = {});

std::string history_csv(const TrainMeta& meta);

struct WindowSweepRow {
    std::size_t window_bits = 0;
    std::size_t input_size = 0;
    double cnn_val_acc = 0.0;
    double threshold_acc = 0.0;
    NoiseCase noise_case = NoiseCase::thermal;
};

struct WindowSweepResult {
    std::vector<WindowSweepRow> rows;
    nlohmann::json summary;
};

WindowSweepResult cmd_sweep_window(const ExperimentConfig& cfg, const LogFn& log = {});

struct SnrSweepRow {
    double snr_db = 0.0;
    double cnn_acc = 0.0;
    double threshold_acc = 0.0;
    double ber = 0.0;
    std::optional<double> f1;
    NoiseCase noise_case = NoiseCase::thermal;
    ConfusionMatrix cnn_confusion;
    ConfusionMatrix threshold_confusion;
};

std::vector<SnrSweepRow> cmd_sweep_snr(const ExperimentConfig& cfg, const LogFn& log = {});

// Single SNR point of the stage-2 sweep; exposed for the acceptance suite.
SnrSweepRow run_snr_point(const ExperimentConfig& cfg, NoiseCase c, double snr_db, const LogFn& log = {});

struct EvalRequest {
    std::filesystem::path detector_path;
    std::filesystem::path classifier_path;
    std::filesystem::path dataset_path;
};

nlohmann::json cmd_eval(const ExperimentConfig& cfg, const EvalRequest& req, const LogFn& log = {});

struct GradCheckSummary {
    struct Entry {
        std::string network;
        std::size_t layer;
        LayerKind kind;
        double worst;
        std::size_t checked;
    };
    std::vector<Entry> entries;
    double worst = 0.0;
    bool passed = false;
};

inline constexpr double kGradCheckTolerance = 1e-4;

GradCheckSummary cmd_gradcheck(bool sabotage = false, const LogFn& log = {});

std::string format_double(double v);

} // namespace ookfso
