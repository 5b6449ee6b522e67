#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ookfso/experiment.hpp"

namespace py = pybind11;
using namespace ookfso;

namespace {

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v) {
    py::array_t<T> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

template <typename T>
std::vector<T> to_vector(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
    return {a.data(), a.data() + a.size()};
}

ExperimentConfig config_from(const std::string& json_text) {
    if (json_text.empty()) return {};
    return experiment_config_from_json(nlohmann::json::parse(json_text));
}

py::dict confusion_dict(const ConfusionMatrix& cm) {
    py::dict d;
    d["tp"] = cm.tp;
    d["fp"] = cm.fp;
    d["fn"] = cm.fn;
    d["tn"] = cm.tn;
    return d;
}

} // namespace

PYBIND11_MODULE(_ookfso, m) {
    m.doc() = "OOK demodulation over free-space optical channels";

    static py::exception<Error> error(m, "Error");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error.ptr())(e.what());
            exc.attr("code") = to_string(e.code());
            exc.attr("category") = static_cast<int>(e.category());
            PyErr_SetObject(error.ptr(), exc.ptr());
        }
    });

    m.def("default_config", [] { return to_json(ExperimentConfig{}).dump(); });
    m.def("validate_config", [](const std::string& j) { return to_json(config_from(j)).dump(); });

    m.def("generate_bits", [](std::size_t n, std::uint64_t seed) {
        RandomStream rng(seed);
        return to_array(generate_bits(n, rng));
    });
    m.def("sample_turbulence", [](std::size_t n, double si, double corr, std::uint64_t seed) {
        RandomStream rng(seed);
        return to_array(sample_turbulence(n, si, corr, rng));
    });
    m.def("sample_thermal", [](std::size_t n, double mean, double corr, std::uint64_t seed) {
        RandomStream rng(seed);
        return to_array(sample_thermal(n, mean, corr, rng));
    });
    m.def("compose", [](const std::string& channel_json, std::optional<py::array_t<std::uint8_t>> bits,
                        std::size_t noise_only_bits) {
        const auto ch = channel_config_from_json(nlohmann::json::parse(channel_json));
        std::optional<BitStream> b;
        if (bits) b = to_vector<std::uint8_t>(*bits);
        const auto w = compose(ch, b, noise_only_bits);
        return py::make_tuple(to_array(w.samples), to_array(w.truth_bits));
    }, py::arg("channel_json"), py::arg("bits") = py::none(), py::arg("noise_only_bits") = 0);

    m.def("fit_scintillation", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& s) {
        const auto f = fit_scintillation(std::span<const double>(s.data(), s.size()));
        return py::make_tuple(f.i0_hat, f.sigma2_hat, f.si_hat);
    });

    m.def("score", [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& truth,
                      const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& pred) {
        const auto r = score(std::span<const std::uint8_t>(truth.data(), truth.size()),
                             std::span<const std::uint8_t>(pred.data(), pred.size()));
        py::dict d;
        d["accuracy"] = r.accuracy;
        d["ber"] = r.ber;
        d["f1"] = r.f1;
        d["f1_on"] = r.f1_on;
        d["n"] = r.n;
        d["confusion"] = confusion_dict(r.confusion);
        return d;
    });
    m.def("f1", [](std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
        return f1(ConfusionMatrix{tp, fp, fn, tn});
    }, py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn") = 0);

    m.def("load_dataset", [](const std::filesystem::path& path) {
        const auto ds = load(path);
        py::array_t<float> values({ds.size(), ds.cols, ds.rows});
        std::copy(ds.values.begin(), ds.values.end(), values.mutable_data());
        py::dict d;
        d["kind"] = to_string(ds.kind);
        d["values"] = values; // [example, bit slot, sample]
        d["labels"] = to_array(ds.labels);
        d["window_bits"] = ds.window_bits;
        d["channel"] = to_json(ds.channel_meta).dump();
        return d;
    });

    m.def("predict", [](const std::filesystem::path& model_path, const std::filesystem::path& data_path) {
        const auto model = load_model(model_path);
        const auto p = predict(model, load(data_path));
        return py::make_tuple(to_array(p.labels), to_array(p.prob_one));
    });

    m.def("generate", [](const std::string& cfg) {
        std::vector<std::string> paths;
        for (const auto& f : cmd_generate(config_from(cfg))) paths.push_back(f.path.string());
        return paths;
    }, py::call_guard<py::gil_scoped_release>());
    m.def("train", [](const std::string& cfg, const std::string& stage, const std::filesystem::path& data,
                      const std::filesystem::path& val) {
        const auto out = cmd_train(config_from(cfg), stage_from_string(stage), data, val);
        return std::pair{out.model_path.string(), out.history_path.string()};
    }, py::arg("config"), py::arg("stage"), py::arg("data"), py::arg("val") = std::filesystem::path{},
       py::call_guard<py::gil_scoped_release>());
    m.def("sweep_window", [](const std::string& cfg) { return cmd_sweep_window(config_from(cfg)).summary.dump(); },
          py::call_guard<py::gil_scoped_release>());
    m.def("sweep_snr", [](const std::string& cfg) {
        std::vector<std::tuple<std::string, double, double, double, double>> rows;
        for (const auto& r : cmd_sweep_snr(config_from(cfg)))
            rows.emplace_back(to_string(r.noise_case), r.snr_db, r.cnn_acc, r.threshold_acc, r.ber);
        return rows;
    }, py::call_guard<py::gil_scoped_release>());
    m.def("gradcheck", [](bool sabotage) {
        const auto s = cmd_gradcheck(sabotage);
        return std::pair{s.worst, s.passed};
    }, py::arg("sabotage") = false, py::call_guard<py::gil_scoped_release>());
}
