#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "ookfso/error.hpp"
#include "ookfso/experiment.hpp"
#include "test_support.hpp"

using namespace ookfso;
using testing::error_code_of;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    for (std::string l; std::getline(is, l);) out.push_back(l);
    return out;
}

std::vector<std::string> fields(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    for (std::string f; std::getline(is, f, ',');) out.push_back(f);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

// Small, fast experiment used throughout.
ExperimentConfig tiny(const std::filesystem::path& out) {
    ExperimentConfig c;
    c.corpus_bits = 1000;
    c.bit_corpus_bits = 600;
    c.window_bits = 14;
    c.window_bits_grid = {1, 2};
    c.snr_grid_db = {0.0, 20.0};
    c.detect.train.epochs = 2;
    c.demod.train.epochs = 2;
    c.output_dir = out;
    return c;
}

int run_cli(const std::string& args, const std::filesystem::path& log) {
    const std::string cmd = std::string(OOKFSO_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_text(const std::filesystem::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

} // namespace

TEST_SUITE("cli") {

TEST_CASE("experiment config: defaults, round trip, validation") {
    ExperimentConfig d;
    CHECK(d.snr_grid_db == std::vector<double>{-5, 0, 5, 10, 15, 20});
    CHECK(d.window_bits_grid.size() == 14);
    CHECK(d.corpus_bits * 2 == 200'000);
    CHECK(d.bit_corpus_bits == 50'000);
    CHECK(d.detect.train.epochs == 50);
    CHECK(d.demod.train.epochs == 20);
    CHECK_NOTHROW(d.validate());

    const auto j = to_json(d);
    const auto back = experiment_config_from_json(j);
    CHECK(to_json(back) == j);

    auto expect_config_error = [](nlohmann::json bad, const std::string& needle) {
        try {
            experiment_config_from_json(bad);
            FAIL("accepted: " << bad.dump());
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::config);
            CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
        }
    };
    expect_config_error({{"corpus_bits", 0}}, "corpus_bits");
    expect_config_error({{"corpus_bits", 10}}, "corpus_bits");
    expect_config_error({{"sweep", {{"window_bits_grid", nlohmann::json::array()}}}}, "window_bits_grid");
    expect_config_error({{"sweep", {{"snr_grid_db", nlohmann::json::array()}}}}, "snr_grid_db");
    expect_config_error({{"sweep", {{"snr_grid_db", {5, 0}}}}}, "sorted");
    expect_config_error({{"surprise", 1}}, "surprise");
    expect_config_error({{"channel", {{"samples_per_bit", 0}}}}, "samples_per_bit");
    expect_config_error({{"train", {{"detect", {{"epochs", 0}}}}}}, "epochs");
    expect_config_error({{"train", {{"detect", {{"lr", 0.1}}}}}}, "lr");
    expect_config_error({{"cases", {"fog"}}}, "fog");

    const auto ok = experiment_config_from_json({{"train", {{"demod", {{"epochs", 3}, {"architecture", {{"dense_units", {8}}}}}}}},
                                                 {"seed", 9}});
    CHECK(ok.demod.train.epochs == 3);
    CHECK(ok.demod.arch.dense_units == std::vector<std::size_t>{8});
    CHECK(ok.detect.train.epochs == 50);
    CHECK(ok.seed == 9);
}

TEST_CASE("generate: counts, manifest, determinism") {
    testing::TempDir dir;
    auto cfg = tiny(dir / "a");
    const auto files = cmd_generate(cfg);
    REQUIRE(files.size() == 4);
    for (const auto& f : files) {
        if (f.kind == DatasetKind::presence) {
            CHECK(f.examples == (1000 / 14) * 2);
            CHECK(load(f.path).size() == (1000 / 14) * 2);
        } else {
            CHECK(f.examples == 600);
        }
    }
    const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
    CHECK(manifest.at("files").size() == 4);
    CHECK(manifest.at("files")[0].at("examples") == (1000 / 14) * 2);

    cfg.output_dir = dir / "b";
    cmd_generate(cfg);
    for (const char* rel : {"thermal/presence_x14.ookd", "thermal/bits.ookd", "turbulence/presence_x14.ookd",
                            "turbulence/bits.ookd"})
        CHECK(testing::read_bytes(dir / "a" / rel) == testing::read_bytes(dir / "b" / rel));

    // The two cases share bits and thermal draws but differ by fading.
    const auto th = load(dir / "a" / "thermal/bits.ookd"), tu = load(dir / "a" / "turbulence/bits.ookd");
    CHECK(th.labels == tu.labels);
    CHECK(th.values != tu.values);
    CHECK_FALSE(th.channel_meta.turbulence_enabled);
    CHECK(tu.channel_meta.turbulence_enabled);
}

TEST_CASE("train: history rows follow stage defaults, kind checked") {
    testing::TempDir dir;
    auto cfg = tiny(dir / "d");
    cfg.corpus_bits = 280;
    cfg.bit_corpus_bits = 200;
    cfg.detect.train.epochs = presence_train_defaults().epochs;
    cfg.demod.train.epochs = bit_train_defaults().epochs;
    cfg.cases = {NoiseCase::thermal};
    cmd_generate(cfg);

    const auto det = cmd_train(cfg, Stage::detect, dir / "d/thermal/presence_x14.ookd", {});
    const auto hist = lines(slurp(det.history_path));
    CHECK(hist.front() == "epoch,train_loss,train_acc,val_loss,val_acc");
    CHECK(hist.size() == 1 + 50);
    CHECK(std::filesystem::exists(det.model_path));

    const auto dem = cmd_train(cfg, Stage::demod, dir / "d/thermal/bits.ookd", {});
    CHECK(lines(slurp(dem.history_path)).size() == 1 + 20);
    CHECK(slurp(dem.history_path).find('\r') == std::string::npos);

    CHECK(error_code_of([&] { cmd_train(cfg, Stage::detect, dir / "d/thermal/bits.ookd", {}); }) ==
          ErrorCode::kind_mismatch);

    // Re-running writes identical artifacts.
    const auto model_bytes = testing::read_bytes(dem.model_path);
    const auto hist_bytes = testing::read_bytes(dem.history_path);
    cmd_train(cfg, Stage::demod, dir / "d/thermal/bits.ookd", {});
    CHECK(testing::read_bytes(dem.model_path) == model_bytes);
    CHECK(testing::read_bytes(dem.history_path) == hist_bytes);
}

TEST_CASE("sweep-window: schema, input sizes, summary") {
    testing::TempDir dir;
    auto cfg = tiny(dir / "w");
    cfg.cases = {NoiseCase::thermal};
    cfg.corpus_bits = 400;
    const auto res = cmd_sweep_window(cfg);
    const auto rows = lines(slurp(dir / "w" / "sweep_window.csv"));
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == "x,input_size,cnn_val_acc,threshold_acc,case");
    CHECK(fields(rows[1])[0] == "1");
    CHECK(fields(rows[1])[1] == "35");
    CHECK(fields(rows[2])[1] == "70");
    CHECK(fields(rows[2])[4] == "thermal");
    CHECK(res.summary.at("thermal").contains("larger_input_improves"));
    CHECK(res.summary.at("thermal").at("largest_input_size") == 70);
    CHECK(std::filesystem::exists(dir / "w" / "sweep_window_summary.json"));

    // Workers do not change results.
    auto par = cfg;
    par.workers = 2;
    par.output_dir = dir / "w2";
    cmd_sweep_window(par);
    CHECK(slurp(dir / "w2" / "sweep_window.csv") == slurp(dir / "w" / "sweep_window.csv"));

    auto bad = cfg;
    bad.window_bits_grid.clear();
    CHECK(error_code_of([&] { cmd_sweep_window(bad); }) == ErrorCode::config);
}

TEST_CASE("sweep-snr: schema, ber identity, confusion files") {
    testing::TempDir dir;
    auto cfg = tiny(dir / "s");
    const auto rows = cmd_sweep_snr(cfg);
    CHECK(rows.size() == 4);
    const auto csv = lines(slurp(dir / "s" / "sweep_snr.csv"));
    REQUIRE(csv.size() == 5);
    CHECK(csv[0] == "snr_db,cnn_acc,threshold_acc,ber,f1,case");
    for (std::size_t i = 1; i < csv.size(); ++i) {
        const auto f = fields(csv[i]);
        REQUIRE(f.size() == 6);
        CHECK(std::stod(f[3]) == 1.0 - std::stod(f[1]));
    }
    for (const auto& r : rows) {
        CHECK(r.ber == 1.0 - r.cnn_acc);
        const auto path = dir / "s" / "confusion" /
                          (std::string(to_string(r.noise_case)) + "_snr" + format_double(r.snr_db) + ".csv");
        CHECK(lines(slurp(path)).front() == "true,pred_off,pred_on");
    }
}

TEST_CASE("eval: single stage, pipeline, missing files") {
    testing::TempDir dir;
    auto cfg = tiny(dir / "e");
    cfg.cases = {NoiseCase::thermal};
    cfg.corpus_bits = 560;
    cfg.bit_corpus_bits = 2000;
    cfg.channel.bit_amplitude = 20.0;
    cfg.detect.train.epochs = 6;
    cfg.demod.train.epochs = 4;
    cmd_generate(cfg);
    const auto det = cmd_train(cfg, Stage::detect, dir / "e/thermal/presence_x14.ookd", {});
    const auto cls = cmd_train(cfg, Stage::demod, dir / "e/thermal/bits.ookd", {});

    // Noiseless bits are a perfectly separable set for a trained classifier.
    ChannelConfig clean = cfg.channel;
    clean.thermal_mean = 0.0;
    RandomStream rng(3);
    const auto wf = compose(clean, generate_bits(200, rng), rng);
    save(make_bit_examples(std::span(&wf, 1)), dir / "clean.ookd");
    const auto rep = cmd_eval(cfg, {{}, cls.model_path, dir / "clean.ookd"});
    CHECK(rep.at("report").at("accuracy") == 1.0);

    const auto full = cmd_eval(cfg, {det.model_path, cls.model_path, {}});
    const auto& p = full.at("cases").at("thermal").at("presence");
    const auto& c = p.at("confusion");
    const double tp = c.at("tp"), fp = c.at("fp"), fn = c.at("fn"), tn = c.at("tn");
    CHECK(p.at("accuracy").get<double>() == (tp + tn) / (tp + fp + fn + tn));
    CHECK(p.at("ber").get<double>() == 1.0 - p.at("accuracy").get<double>());

    CHECK(error_code_of([&] { cmd_eval(cfg, {dir / "none.ookm", {}, dir / "e/thermal/presence_x14.ookd"}); }) ==
          ErrorCode::file_not_found);
    CHECK(error_code_of([&] { cmd_eval(cfg, {det.model_path, {}, dir / "clean.ookd"}); }) == ErrorCode::kind_mismatch);
}

TEST_CASE("gradcheck summary") {
    const auto ok = cmd_gradcheck(false);
    CHECK(ok.passed);
    CHECK(ok.worst < kGradCheckTolerance);
    std::set<std::string> nets;
    for (const auto& e : ok.entries) nets.insert(e.network);
    CHECK(nets.size() == 3);
    CHECK_FALSE(cmd_gradcheck(true).passed);
}

TEST_CASE("command-line exit codes") {
    testing::TempDir dir;
    const auto log = dir / "log.txt";
    write_text(dir / "ok.json", R"({"corpus_bits": 300, "bit_corpus_bits": 100, "cases": ["thermal"]})");
    write_text(dir / "bad.json", R"({"corpus_bits": 0})");
    write_text(dir / "garbage.json", "{not json");

    CHECK(run_cli("generate --config " + (dir / "ok.json").string() + " --out " + (dir / "g").string(), log) == 0);
    CHECK(std::filesystem::exists(dir / "g" / "manifest.json"));
    CHECK(run_cli("generate --config " + (dir / "bad.json").string(), log) == 1);
    CHECK(slurp(log).find("corpus_bits") != std::string::npos);
    CHECK(run_cli("generate --config " + (dir / "garbage.json").string(), log) == 1);
    CHECK(run_cli("frobnicate", log) == 1);
    CHECK(run_cli("train --stage detect --data " + (dir / "g/thermal/bits.ookd").string() + " --out " +
                      (dir / "t").string(),
                  log) == 2);
    CHECK(run_cli("eval --detector " + (dir / "missing.ookm").string() + " --data " +
                      (dir / "g/thermal/presence_x14.ookd").string(),
                  log) == 2);
    CHECK(run_cli("gradcheck", log) == 0);
    const auto out = slurp(log);
    CHECK(out.find("presence_35x14 layer=0 kind=conv2d worst_rel_err=") != std::string::npos);
    CHECK(out.find("bit_35 layer=0 kind=conv1d") != std::string::npos);
    CHECK(run_cli("gradcheck --sabotage-sign", log) == 3);

    // --seed changes the data, --workers does not.
    CHECK(run_cli("generate --config " + (dir / "ok.json").string() + " --seed 99 --out " + (dir / "g2").string(),
                  log) == 0);
    CHECK(testing::read_bytes(dir / "g/thermal/bits.ookd") != testing::read_bytes(dir / "g2/thermal/bits.ookd"));
}

}
