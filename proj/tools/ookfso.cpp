#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ookfso/error.hpp"
#include "ookfso/experiment.hpp"

namespace {

struct CommonOptions {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_workers) {
    cmd->add_option("--config", o.config, "Experiment config (JSON)");
    cmd->add_option("--out", o.out, "Output directory (overrides output_dir)");
    cmd->add_option("--seed", o.seed, "Experiment seed (overrides seed)");
    if (with_workers) cmd->add_option("--workers", o.workers, "Parallel sweep points (overrides workers)")->check(CLI::PositiveNumber);
}

ookfso::ExperimentConfig resolve(const CommonOptions& o) {
    ookfso::ExperimentConfig cfg;
    bool workers_from_file = false;
    if (!o.config.empty()) {
        std::ifstream in(o.config);
        ookfso::require(static_cast<bool>(in), ookfso::ErrorCode::config, "cannot read config file " + o.config);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            ookfso::fail(ookfso::ErrorCode::config, "config " + o.config + " is not valid JSON: " + e.what());
        }
        cfg = ookfso::experiment_config_from_json(j);
        workers_from_file = j.is_object() && j.contains("workers");
    }
    if (!workers_from_file) {
        if (const char* env = std::getenv("OOKFSO_WORKERS"); env && *env) {
            try {
                cfg.workers = std::stoul(env);
            } catch (const std::exception&) {
                ookfso::fail(ookfso::ErrorCode::config, std::string("OOKFSO_WORKERS is not a count: ") + env);
            }
        }
    }
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (o.seed) cfg.seed = *o.seed;
    if (o.workers) cfg.workers = *o.workers;
    cfg.validate();
    return cfg;
}

void log_line(const std::string& s) { std::cerr << s << '\n'; }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"OOK free-space optical link simulator and CNN demodulator"};
    app.require_subcommand(1);

    CommonOptions gen_opts, train_opts, sw_opts, ss_opts, eval_opts;

    auto* gen = app.add_subcommand("generate", "Write presence and bit datasets for each noise case");
    add_common(gen, gen_opts, false);

    auto* train = app.add_subcommand("train", "Train the presence detector or the bit classifier");
    add_common(train, train_opts, false);
    std::string stage, train_data, val_data;
    train->add_option("--stage", stage, "detect | demod")->required()->check(CLI::IsMember({"detect", "demod"}));
    train->add_option("--data", train_data, "Training dataset (.ookd)")->required();
    train->add_option("--val", val_data, "Validation dataset (.ookd); default: held-out split of --data");

    auto* sw = app.add_subcommand("sweep-window", "Presence accuracy against window length");
    add_common(sw, sw_opts, true);

    auto* ss = app.add_subcommand("sweep-snr", "Demodulation accuracy against SNR");
    add_common(ss, ss_opts, true);

    auto* ev = app.add_subcommand("eval", "Score models on a dataset or run the full pipeline");
    add_common(ev, eval_opts, false);
    ookfso::EvalRequest req;
    std::string detector, classifier, dataset;
    ev->add_option("--detector", detector, "Presence detector model (.ookm)");
    ev->add_option("--classifier", classifier, "Bit classifier model (.ookm)");
    ev->add_option("--data", dataset, "Dataset to score (.ookd)");

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every layer's gradients");
    bool sabotage = false;
    gc->add_flag("--sabotage-sign", sabotage, "Flip the analytic gradient sign (test hook)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            const auto cfg = resolve(gen_opts);
            const auto files = ookfso::cmd_generate(cfg, log_line);
            for (const auto& f : files)
                std::cout << f.path.string() << ' ' << ookfso::to_string(f.kind) << ' ' << f.examples << '\n';
        } else if (train->parsed()) {
            const auto cfg = resolve(train_opts);
            const auto out = ookfso::cmd_train(cfg, ookfso::stage_from_string(stage), train_data, val_data, log_line);
            std::cout << out.model_path.string() << '\n' << out.history_path.string() << '\n';
        } else if (sw->parsed()) {
            const auto cfg = resolve(sw_opts);
            const auto res = ookfso::cmd_sweep_window(cfg, log_line);
            std::cout << res.summary.dump(2) << '\n';
        } else if (ss->parsed()) {
            const auto cfg = resolve(ss_opts);
            const auto rows = ookfso::cmd_sweep_snr(cfg, log_line);
            std::cout << (cfg.output_dir / "sweep_snr.csv").string() << ' ' << rows.size() << " rows\n";
        } else if (ev->parsed()) {
            const auto cfg = resolve(eval_opts);
            req.detector_path = detector;
            req.classifier_path = classifier;
            req.dataset_path = dataset;
            const auto report = ookfso::cmd_eval(cfg, req, log_line);
            std::cout << report.dump(2) << '\n';
            if (!eval_opts.out.empty()) {
                std::filesystem::create_directories(cfg.output_dir);
                std::ofstream(cfg.output_dir / "eval_report.json", std::ios::binary) << report.dump(2) << '\n';
            }
        } else if (gc->parsed()) {
            const auto summary = ookfso::cmd_gradcheck(sabotage, log_line);
            for (const auto& e : summary.entries)
                std::cout << e.network << " layer=" << e.layer << " kind=" << ookfso::to_string(e.kind)
                          << " worst_rel_err=" << ookfso::format_double(e.worst) << " checked=" << e.checked << '\n';
            std::cout << "worst=" << ookfso::format_double(summary.worst) << " tolerance="
                      << ookfso::format_double(ookfso::kGradCheckTolerance) << ' '
                      << (summary.passed ? "PASS" : "FAIL") << '\n';
            if (!summary.passed) return static_cast<int>(ookfso::ErrorCategory::numeric);
        }
    } catch (const ookfso::Error& e) {
        std::cerr << "error [" << ookfso::to_string(e.code()) << "]: " << e.what() << '\n';
        return static_cast<int>(e.category());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error [io]: " << e.what() << '\n';
        return static_cast<int>(ookfso::ErrorCategory::data);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ookfso::ErrorCategory::data);
    }
    return 0;
}
