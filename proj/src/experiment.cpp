#include "ookfso/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "binary_io.hpp"
#include "ookfso/error.hpp"

namespace ookfso {

namespace {

// Fork tags keeping every consumer of the experiment seed independent.
enum SeedTag : std::uint64_t {
    kSignalSource = 11,
    kNoiseSource = 12,
    kBitCorpus = 13,
    kEvalSource = 14,
    kSplit = 21,
    kTrain = 22,
};

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    RandomStream s(seed);
    for (auto t : tags) s = s.fork(t);
    return s.next_u64();
}

std::uint64_t case_index(NoiseCase c) { return c == NoiseCase::thermal ? 1 : 2; }

void emit(const LogFn& log, const std::string& line) {
    if (log) log(line);
}

LogFn serialized(const LogFn& log) {
    if (!log) return {};
    auto mu = std::make_shared<std::mutex>();
    return [log, mu](const std::string& s) {
        std::lock_guard lock(*mu);
        log(s);
    };
}

// Runs fn(i) for i in [0, n) on up to `workers` threads; results must be
// stored by index so output order never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    require(!ec && std::filesystem::is_directory(dir), ErrorCode::io,
            "cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : ""));
}

template <typename T>
std::vector<T> get_list(const nlohmann::json& j, const char* key) {
    try {
        return j.at(key).get<std::vector<T>>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::config, std::string("sweep.") + key + ": " + e.what());
    }
}

} // namespace

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

const char* to_string(NoiseCase c) noexcept { return c == NoiseCase::thermal ? "thermal" : "turbulence"; }

NoiseCase noise_case_from_string(const std::string& s) {
    if (s == "thermal") return NoiseCase::thermal;
    if (s == "turbulence") return NoiseCase::turbulence;
    fail(ErrorCode::config, "unknown noise case '" + s + "' (expected 'thermal' or 'turbulence')");
}

Stage stage_from_string(const std::string& s) {
    if (s == "detect") return Stage::detect;
    if (s == "demod") return Stage::demod;
    fail(ErrorCode::config, "unknown stage '" + s + "' (expected 'detect' or 'demod')");
}

// ------------------------------------------------------------------ config

void ExperimentConfig::validate() const {
    channel.validate();
    detect.train.validate();
    demod.train.validate();
    require(!snr_grid_db.empty(), ErrorCode::config, "sweep.snr_grid_db must not be empty");
    require(std::is_sorted(snr_grid_db.begin(), snr_grid_db.end()), ErrorCode::config,
            "sweep.snr_grid_db must be sorted ascending");
    require(!window_bits_grid.empty(), ErrorCode::config, "sweep.window_bits_grid must not be empty");
    require(std::is_sorted(window_bits_grid.begin(), window_bits_grid.end()), ErrorCode::config,
            "sweep.window_bits_grid must be sorted ascending");
    require(window_bits_grid.front() >= 1, ErrorCode::config, "sweep.window_bits_grid entries must be >= 1");
    require(window_bits >= 1, ErrorCode::config, "window_bits must be >= 1");
    require(corpus_bits >= 1, ErrorCode::config, "corpus_bits must be >= 1");
    require(corpus_bits >= std::max(window_bits, window_bits_grid.back()), ErrorCode::config,
            "corpus_bits must be at least one window (" + std::to_string(window_bits) + " bits)");
    require(bit_corpus_bits >= 2, ErrorCode::config, "bit_corpus_bits must be >= 2");
    require(train_fraction > 0.0 && train_fraction < 1.0, ErrorCode::config,
            "train_fraction must lie strictly between 0 and 1");
    require(!cases.empty(), ErrorCode::config, "cases must not be empty");
    require(workers >= 1, ErrorCode::config, "workers must be >= 1");
    require(channel.thermal_mean > 0.0, ErrorCode::config, "channel.thermal_mean must be > 0 for SNR sweeps");
}

nlohmann::json to_json(const ExperimentConfig& c) {
    auto stage = [](const StageConfig& s) {
        auto j = to_json(s.train);
        j["architecture"] = to_json(s.arch);
        return j;
    };
    nlohmann::json cases = nlohmann::json::array();
    for (auto nc : c.cases) cases.push_back(to_string(nc));
    return {
        {"channel", to_json(c.channel)},
        {"train", {{"detect", stage(c.detect)}, {"demod", stage(c.demod)}}},
        {"sweep", {{"snr_grid_db", c.snr_grid_db}, {"window_bits_grid", c.window_bits_grid}}},
        {"corpus_bits", c.corpus_bits},
        {"bit_corpus_bits", c.bit_corpus_bits},
        {"window_bits", c.window_bits},
        {"train_fraction", c.train_fraction},
        {"cases", cases},
        {"threshold_reference", c.threshold_reference == ThresholdReference::evaluation ? "evaluation" : "training"},
        {"output_dir", c.output_dir.string()},
        {"seed", c.seed},
        {"workers", c.workers},
    };
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    require(j.is_object(), ErrorCode::config, "experiment config must be a JSON object");
    static const std::set<std::string> known = {"channel", "train", "sweep", "corpus_bits", "bit_corpus_bits",
                                                "window_bits", "train_fraction", "cases", "threshold_reference",
                                                "output_dir", "seed", "workers"};
    for (const auto& [key, _] : j.items())
        require(known.count(key) > 0, ErrorCode::config, "unknown key '" + key + "'");

    ExperimentConfig c;
    if (j.contains("channel")) c.channel = channel_config_from_json(j["channel"]);
    if (j.contains("train")) {
        const auto& t = j["train"];
        require(t.is_object(), ErrorCode::config, "train must be an object with 'detect'/'demod'");
        for (const auto& [key, value] : t.items()) {
            require(key == "detect" || key == "demod", ErrorCode::config, "train: unknown stage '" + key + "'");
            StageConfig& s = key == "detect" ? c.detect : c.demod;
            s.train = train_config_from_json(value, s.train);
            if (value.contains("architecture")) s.arch = architecture_config_from_json(value["architecture"], s.arch);
        }
    }
    if (j.contains("sweep")) {
        const auto& s = j["sweep"];
        require(s.is_object(), ErrorCode::config, "sweep must be an object");
        for (const auto& [key, _] : s.items())
            require(key == "snr_grid_db" || key == "window_bits_grid", ErrorCode::config,
                    "sweep: unknown key '" + key + "'");
        if (s.contains("snr_grid_db")) c.snr_grid_db = get_list<double>(s, "snr_grid_db");
        if (s.contains("window_bits_grid")) c.window_bits_grid = get_list<std::size_t>(s, "window_bits_grid");
    }
    try {
        if (j.contains("corpus_bits")) c.corpus_bits = j["corpus_bits"].get<std::size_t>();
        if (j.contains("bit_corpus_bits")) c.bit_corpus_bits = j["bit_corpus_bits"].get<std::size_t>();
        if (j.contains("window_bits")) c.window_bits = j["window_bits"].get<std::size_t>();
        if (j.contains("train_fraction")) c.train_fraction = j["train_fraction"].get<double>();
        if (j.contains("cases")) {
            c.cases.clear();
            for (const auto& s : j["cases"]) c.cases.push_back(noise_case_from_string(s.get<std::string>()));
        }
        if (j.contains("threshold_reference")) {
            const auto s = j["threshold_reference"].get<std::string>();
            require(s == "evaluation" || s == "training", ErrorCode::config,
                    "threshold_reference must be 'evaluation' or 'training'");
            c.threshold_reference = s == "evaluation" ? ThresholdReference::evaluation : ThresholdReference::training;
        }
        if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("workers")) c.workers = j["workers"].get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::config, std::string("invalid config value: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::config, "cannot read config file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::config, "config " + path.string() + " is not valid JSON: " + e.what());
    }
    return experiment_config_from_json(j);
}

// ----------------------------------------------------------------- corpora

ChannelConfig case_channel(const ExperimentConfig& cfg, NoiseCase c) {
    ChannelConfig ch = cfg.channel;
    ch.turbulence_enabled = c == NoiseCase::turbulence;
    return ch;
}

namespace {

// Both noise cases share seeds, so they see the same bits and thermal
// background and differ only by the fading.
Waveform signal_source(ChannelConfig ch, std::uint64_t seed, std::size_t bits) {
    ch.seed = seed;
    RandomStream rng(seed);
    const auto stream = generate_bits(bits, rng);
    return compose(ch, stream, rng);
}

Waveform noise_source(ChannelConfig ch, std::uint64_t seed, std::size_t slots) {
    ch.seed = seed;
    RandomStream rng(seed);
    return compose(ch, std::nullopt, rng, slots);
}

double threshold_reference_mean(const ExperimentConfig& cfg, const LabeledDataset& train,
                                const LabeledDataset& eval) {
    return cfg.threshold_reference == ThresholdReference::evaluation ? eval.value_mean() : train.value_mean();
}

TrainConfig seeded(TrainConfig t, std::uint64_t seed) {
    t.seed ^= seed;
    return t;
}

} // namespace

std::vector<Waveform> presence_sources(const ExperimentConfig& cfg, NoiseCase c) {
    const ChannelConfig ch = case_channel(cfg, c);
    return {noise_source(ch, derive_seed(cfg.seed, {kNoiseSource}), cfg.corpus_bits),
            signal_source(ch, derive_seed(cfg.seed, {kSignalSource}), cfg.corpus_bits)};
}

LabeledDataset presence_corpus(const ExperimentConfig& cfg, NoiseCase c, std::size_t window_bits) {
    const auto sources = presence_sources(cfg, c);
    return make_presence_examples(sources, window_bits);
}

LabeledDataset bit_corpus(const ExperimentConfig& cfg, NoiseCase c, double bit_amplitude) {
    ChannelConfig ch = case_channel(cfg, c);
    ch.bit_amplitude = bit_amplitude;
    const Waveform wf = signal_source(ch, derive_seed(cfg.seed, {kBitCorpus}), cfg.bit_corpus_bits);
    return make_bit_examples(std::span<const Waveform>(&wf, 1));
}

// ---------------------------------------------------------------- generate

std::vector<GeneratedFile> cmd_generate(const ExperimentConfig& cfg, const LogFn& log) {
    cfg.validate();
    ensure_dir(cfg.output_dir);

    std::vector<GeneratedFile> files;
    for (auto c : cfg.cases) {
        const auto dir = cfg.output_dir / to_string(c);
        ensure_dir(dir);

        const auto presence = presence_corpus(cfg, c, cfg.window_bits);
        const auto presence_path = dir / ("presence_x" + std::to_string(cfg.window_bits) + ".ookd");
        save(presence, presence_path);
        files.push_back({presence_path, DatasetKind::presence, c, presence.size(), cfg.window_bits});
        emit(log, std::string(to_string(c)) + ": wrote " + std::to_string(presence.size()) + " presence windows to " +
                      presence_path.string());

        const auto bits = bit_corpus(cfg, c, cfg.channel.bit_amplitude);
        const auto bits_path = dir / "bits.ookd";
        save(bits, bits_path);
        files.push_back({bits_path, DatasetKind::bit, c, bits.size(), 0});
        emit(log, std::string(to_string(c)) + ": wrote " + std::to_string(bits.size()) + " bit examples to " +
                      bits_path.string());
    }

    nlohmann::json manifest{{"config", to_json(cfg)}, {"files", nlohmann::json::array()}};
    for (const auto& f : files) {
        manifest["files"].push_back({{"path", std::filesystem::relative(f.path, cfg.output_dir).generic_string()},
                                     {"kind", to_string(f.kind)},
                                     {"case", to_string(f.noise_case)},
                                     {"examples", f.examples},
                                     {"window_bits", f.window_bits}});
    }
    detail::write_text_atomic(cfg.output_dir / "manifest.json", manifest.dump(2) + "\n");
    return files;
}

// ------------------------------------------------------------------- train

std::string history_csv(const TrainMeta& meta) {
    std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
    for (const auto& r : meta.history) {
        out += std::to_string(r.epoch) + ',' + format_double(r.train_loss) + ',' + format_double(r.train_acc) + ',' +
               format_double(r.val_loss) + ',' + format_double(r.val_acc) + '\n';
    }
    return out;
}

TrainOutputs cmd_train(const ExperimentConfig& cfg, Stage stage, const std::filesystem::path& train_path,
                       const std::filesystem::path& val_path, const LogFn& log) {
    cfg.validate();
    const DatasetKind expected = stage == Stage::detect ? DatasetKind::presence : DatasetKind::bit;
    const char* stage_name = stage == Stage::detect ? "detect" : "demod";

    LabeledDataset train_ds = load(train_path);
    require(train_ds.kind == expected, ErrorCode::kind_mismatch,
            std::string("stage '") + stage_name + "' needs a " + to_string(expected) + " dataset, but " +
                train_path.string() + " holds '" + to_string(train_ds.kind) + "' examples");
    LabeledDataset val_ds;
    if (val_path.empty()) {
        RandomStream rng(derive_seed(cfg.seed, {kSplit, static_cast<std::uint64_t>(stage)}));
        std::tie(train_ds, val_ds) = split(train_ds, cfg.train_fraction, rng);
    } else {
        val_ds = load(val_path);
        require(val_ds.kind == expected, ErrorCode::kind_mismatch,
                "validation dataset " + val_path.string() + " has kind '" + to_string(val_ds.kind) + "'");
    }
    require(!train_ds.empty() && !val_ds.empty(), ErrorCode::invalid_argument,
            "training and validation sets must both be non-empty");

    const StageConfig& sc = stage == Stage::detect ? cfg.detect : cfg.demod;
    const TrainConfig tc = seeded(sc.train, derive_seed(cfg.seed, {kTrain, static_cast<std::uint64_t>(stage)}));
    auto on_epoch = [&](const EpochRecord& r) {
        emit(log, std::string(stage_name) + " epoch " + std::to_string(r.epoch) + ": train_loss=" +
                      format_double(r.train_loss) + " val_acc=" + format_double(r.val_acc));
    };

    NetworkModel model = stage == Stage::detect ? train_presence(train_ds, val_ds, tc, sc.arch, on_epoch).model
                                                : train_bit_classifier(train_ds, val_ds, tc, sc.arch, on_epoch).model;

    ensure_dir(cfg.output_dir);
    TrainOutputs out;
    out.model_path = cfg.output_dir / (std::string(stage_name) + "_model.ookm");
    out.history_path = cfg.output_dir / (std::string(stage_name) + "_history.csv");
    save_model(model, out.model_path);
    detail::write_text_atomic(out.history_path, history_csv(model.meta));
    out.model = std::move(model);
    return out;
}

// ------------------------------------------------------------------ sweeps

WindowSweepResult cmd_sweep_window(const ExperimentConfig& cfg, const LogFn& raw_log) {
    cfg.validate();
    const LogFn log = serialized(raw_log);

    struct Point {
        NoiseCase c;
        std::size_t x;
    };
    std::vector<Point> points;
    for (auto c : cfg.cases)
        for (auto x : cfg.window_bits_grid) points.push_back({c, x});

    std::vector<std::vector<Waveform>> sources;
    for (auto c : cfg.cases) sources.push_back(presence_sources(cfg, c));

    std::vector<WindowSweepRow> rows(points.size());
    parallel_for(points.size(), cfg.workers, [&](std::size_t i) {
        const auto [c, x] = points[i];
        const std::size_t ci = static_cast<std::size_t>(std::find(cfg.cases.begin(), cfg.cases.end(), c) - cfg.cases.begin());
        const auto corpus = make_presence_examples(sources[ci], x);
        RandomStream split_rng(derive_seed(cfg.seed, {kSplit, case_index(c), x}));
        const auto [train_ds, val_ds] = split(corpus, cfg.train_fraction, split_rng);

        const TrainConfig tc = seeded(cfg.detect.train, derive_seed(cfg.seed, {kTrain, case_index(c), x}));
        const auto detector = train_presence(train_ds, val_ds, tc, cfg.detect.arch);
        const auto cnn = detect(detector, val_ds);
        const auto thr = threshold_presence(val_ds, threshold_reference_mean(cfg, train_ds, val_ds));

        WindowSweepRow row;
        row.window_bits = x;
        row.input_size = x * corpus.rows;
        row.cnn_val_acc = score(val_ds.labels, cnn.present).accuracy;
        row.threshold_acc = score(val_ds.labels, thr).accuracy;
        row.noise_case = c;
        rows[i] = row;
        emit(log, std::string("sweep-window ") + to_string(c) + " x=" + std::to_string(x) +
                      ": cnn=" + format_double(row.cnn_val_acc) + " threshold=" + format_double(row.threshold_acc));
    });

    WindowSweepResult result;
    result.rows = rows;
    result.summary = nlohmann::json::object();
    for (auto c : cfg.cases) {
        std::vector<WindowSweepRow> mine;
        for (const auto& r : rows)
            if (r.noise_case == c) mine.push_back(r);
        const auto& lo = mine.front();
        const auto& hi = mine.back();
        result.summary[to_string(c)] = {
            {"smallest_input_size", lo.input_size},
            {"smallest_cnn_val_acc", lo.cnn_val_acc},
            {"largest_input_size", hi.input_size},
            {"largest_cnn_val_acc", hi.cnn_val_acc},
            {"larger_input_improves", hi.cnn_val_acc > lo.cnn_val_acc},
        };
    }

    ensure_dir(cfg.output_dir);
    std::string csv = "x,input_size,cnn_val_acc,threshold_acc,case\n";
    for (const auto& r : rows)
        csv += std::to_string(r.window_bits) + ',' + std::to_string(r.input_size) + ',' + format_double(r.cnn_val_acc) +
               ',' + format_double(r.threshold_acc) + ',' + to_string(r.noise_case) + '\n';
    detail::write_text_atomic(cfg.output_dir / "sweep_window.csv", csv);
    detail::write_text_atomic(cfg.output_dir / "sweep_window_summary.json", result.summary.dump(2) + "\n");
    return result;
}

SnrSweepRow run_snr_point(const ExperimentConfig& cfg, NoiseCase c, double snr, const LogFn& log) {
    const double amplitude = amplitude_for_snr_db(snr, cfg.channel.thermal_mean);
    const auto corpus = bit_corpus(cfg, c, amplitude);
    const auto tag = std::bit_cast<std::uint64_t>(snr);
    RandomStream split_rng(derive_seed(cfg.seed, {kSplit, 100 + case_index(c), tag}));
    const auto [train_ds, val_ds] = split(corpus, cfg.train_fraction, split_rng);

    const TrainConfig tc = seeded(cfg.demod.train, derive_seed(cfg.seed, {kTrain, 100 + case_index(c), tag}));
    const auto classifier = train_bit_classifier(train_ds, val_ds, tc, cfg.demod.arch);
    const auto cnn = classify_bits(classifier, val_ds);
    const auto thr = threshold_bit(val_ds, threshold_reference_mean(cfg, train_ds, val_ds));

    const auto cnn_score = score(val_ds.labels, cnn.bits);
    const auto thr_score = score(val_ds.labels, thr);
    SnrSweepRow row;
    row.snr_db = snr;
    row.cnn_acc = cnn_score.accuracy;
    row.threshold_acc = thr_score.accuracy;
    row.ber = cnn_score.ber;
    if (cnn_score.confusion.tp + cnn_score.confusion.fp + cnn_score.confusion.fn > 0) row.f1 = cnn_score.f1;
    row.noise_case = c;
    row.cnn_confusion = cnn_score.confusion;
    row.threshold_confusion = thr_score.confusion;
    emit(log, std::string("sweep-snr ") + to_string(c) + " snr=" + format_double(snr) +
                  "dB: cnn=" + format_double(row.cnn_acc) + " threshold=" + format_double(row.threshold_acc));
    return row;
}

std::vector<SnrSweepRow> cmd_sweep_snr(const ExperimentConfig& cfg, const LogFn& raw_log) {
    cfg.validate();
    const LogFn log = serialized(raw_log);

    std::vector<std::pair<NoiseCase, double>> points;
    for (auto c : cfg.cases)
        for (double s : cfg.snr_grid_db) points.emplace_back(c, s);

    std::vector<SnrSweepRow> rows(points.size());
    parallel_for(points.size(), cfg.workers,
                 [&](std::size_t i) { rows[i] = run_snr_point(cfg, points[i].first, points[i].second, log); });

    ensure_dir(cfg.output_dir);
    ensure_dir(cfg.output_dir / "confusion");
    std::string csv = "snr_db,cnn_acc,threshold_acc,ber,f1,case\n";
    for (const auto& r : rows) {
        csv += format_double(r.snr_db) + ',' + format_double(r.cnn_acc) + ',' + format_double(r.threshold_acc) + ',' +
               format_double(r.ber) + ',' + (r.f1 ? format_double(*r.f1) : std::string()) + ',' +
               to_string(r.noise_case) + '\n';
        detail::write_text_atomic(cfg.output_dir / "confusion" /
                                      (std::string(to_string(r.noise_case)) + "_snr" + format_double(r.snr_db) + ".csv"),
                                  confusion_csv(r.cnn_confusion));
    }
    detail::write_text_atomic(cfg.output_dir / "sweep_snr.csv", csv);
    return rows;
}

// -------------------------------------------------------------------- eval

nlohmann::json cmd_eval(const ExperimentConfig& cfg, const EvalRequest& req, const LogFn& log) {
    nlohmann::json report;
    if (!req.dataset_path.empty()) {
        const auto ds = load(req.dataset_path);
        report["dataset"] = req.dataset_path.string();
        report["kind"] = to_string(ds.kind);
        if (ds.kind == DatasetKind::presence) {
            require(!req.detector_path.empty(), ErrorCode::kind_mismatch,
                    "presence dataset given but no --detector model");
            PresenceDetector det{load_model(req.detector_path), 0};
            det.window_bits = det.model.net.input_shape().width;
            require(det.model.net.input_shape() == input_shape_for(ds), ErrorCode::shape_mismatch,
                    "detector expects " + to_string(det.model.net.input_shape()) + " windows, dataset has " +
                        to_string(input_shape_for(ds)));
            report["stage"] = "detect";
            report["report"] = to_json(score(ds.labels, detect(det, ds).present));
        } else {
            require(!req.classifier_path.empty(), ErrorCode::kind_mismatch,
                    "bit dataset given but no --classifier model");
            const BitClassifier cls{load_model(req.classifier_path)};
            require(cls.model.net.input_shape() == input_shape_for(ds), ErrorCode::shape_mismatch,
                    "classifier expects " + to_string(cls.model.net.input_shape()) + " inputs, dataset has " +
                        to_string(input_shape_for(ds)));
            report["stage"] = "demod";
            report["report"] = to_json(score(ds.labels, classify_bits(cls, ds).bits));
        }
        emit(log, "evaluated " + req.dataset_path.string());
        return report;
    }

    cfg.validate();
    require(!req.detector_path.empty() && !req.classifier_path.empty(), ErrorCode::config,
            "full-pipeline evaluation needs both --detector and --classifier (or pass --data)");
    PresenceDetector det{load_model(req.detector_path), 0};
    det.window_bits = det.model.net.input_shape().width;
    const BitClassifier cls{load_model(req.classifier_path)};

    report["stage"] = "pipeline";
    for (auto c : cfg.cases) {
        const ChannelConfig ch = case_channel(cfg, c);
        const std::size_t bits = cfg.bit_corpus_bits;
        const Waveform signal = signal_source(ch, derive_seed(cfg.seed, {kEvalSource, 1}), bits);
        const Waveform noise = noise_source(ch, derive_seed(cfg.seed, {kEvalSource, 2}), bits);

        const auto rs = pipeline(det, cls, signal);
        const auto rn = pipeline(det, cls, noise);

        std::vector<std::uint8_t> truth_presence(rs.presence.size(), 1);
        truth_presence.insert(truth_presence.end(), rn.presence.size(), 0);
        std::vector<std::uint8_t> pred_presence = rs.presence;
        pred_presence.insert(pred_presence.end(), rn.presence.begin(), rn.presence.end());

        BitStream truth_bits;
        for (auto w : rs.present_windows) {
            const auto first = signal.truth_bits.begin() + static_cast<std::ptrdiff_t>(w * det.window_bits);
            truth_bits.insert(truth_bits.end(), first, first + static_cast<std::ptrdiff_t>(det.window_bits));
        }

        nlohmann::json entry;
        entry["presence"] = to_json(score(truth_presence, pred_presence));
        entry["bits"] = truth_bits.empty() ? nlohmann::json(nullptr) : to_json(score(truth_bits, rs.bits));
        entry["windows_flagged_in_signal"] = rs.present_windows.size();
        entry["windows_flagged_in_noise"] = rn.present_windows.size();
        entry["bits_recovered"] = rs.bits.size();
        entry["warnings"] = rs.warnings;
        report["cases"][to_string(c)] = entry;
        emit(log, std::string("pipeline evaluated on case ") + to_string(c));
    }
    return report;
}

// --------------------------------------------------------------- gradcheck

GradCheckSummary cmd_gradcheck(bool sabotage, const LogFn& log) {
    struct Candidate {
        std::string name;
        FeatureShape input;
        std::vector<LayerSpec> layers;
    };
    const std::vector<Candidate> nets = {
        {"toy_dense_relu", {4, 1, 1},
         {LayerSpec::flatten(), LayerSpec::dense(8), LayerSpec::relu(), LayerSpec::dense(2)}},
        {"presence_35x14", {35, 14, 1}, presence_layers(35, 14)},
        {"bit_35", {35, 1, 1}, bit_layers(35)},
    };

    GradCheckSummary summary;
    GradCheckOptions opts;
    opts.flip_sign = sabotage;
    std::uint64_t seed = 7;
    for (const auto& cand : nets) {
        Network<double> net(cand.input, cand.layers);
        net.init_parameters(seed++);
        Tensor<double> example({1, cand.input.height, cand.input.width, cand.input.channels});
        RandomStream rng(seed++);
        for (auto& v : example.values()) v = rng.normal();
        const auto rep = grad_check(net, example, 1, opts);
        for (const auto& e : rep.per_layer) {
            summary.entries.push_back({cand.name, e.layer, e.kind, e.worst, e.checked});
            emit(log, cand.name + " layer " + std::to_string(e.layer) + " (" + to_string(e.kind) +
                          "): worst relative error " + format_double(e.worst) + " over " +
                          std::to_string(e.checked) + " parameters");
        }
        summary.worst = std::max(summary.worst, rep.worst);
    }
    summary.passed = summary.worst < kGradCheckTolerance;
    return summary;
}

} // namespace ookfso
