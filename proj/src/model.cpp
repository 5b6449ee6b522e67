#include "ookfso/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "binary_io.hpp"

namespace ookfso {

// ---------------------------------------------------------------- configs

void TrainConfig::validate() const {
    require(std::isfinite(learning_rate) && learning_rate > 0.0, ErrorCode::config,
            "train.learning_rate must be > 0");
    require(beta1 >= 0.0 && beta1 < 1.0, ErrorCode::config, "train.beta1 must lie in [0, 1)");
    require(beta2 >= 0.0 && beta2 < 1.0, ErrorCode::config, "train.beta2 must lie in [0, 1)");
    require(epsilon > 0.0, ErrorCode::config, "train.epsilon must be > 0");
    require(epochs >= 1, ErrorCode::config, "train.epochs must be >= 1");
    require(batch_size >= 1, ErrorCode::config, "train.batch_size must be >= 1");
    require(loss == "softmax_cross_entropy", ErrorCode::config,
            "train.loss must be 'softmax_cross_entropy'");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2},
            {"epsilon", c.epsilon},             {"epochs", c.epochs}, {"batch_size", c.batch_size},
            {"loss", c.loss},                   {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    require(j.is_object(), ErrorCode::config, "train config must be a JSON object");
    static const std::set<std::string> known = {"learning_rate", "beta1", "beta2",      "epsilon",
                                                "epochs",        "batch_size", "loss", "seed",
                                                "architecture"};
    for (const auto& [key, _] : j.items())
        require(known.count(key) > 0, ErrorCode::config, "train: unknown key '" + key + "'");
    try {
        if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
        if (j.contains("beta1")) c.beta1 = j["beta1"].get<double>();
        if (j.contains("beta2")) c.beta2 = j["beta2"].get<double>();
        if (j.contains("epsilon")) c.epsilon = j["epsilon"].get<double>();
        if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
        if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
        if (j.contains("loss")) c.loss = j["loss"].get<std::string>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::config, std::string("train: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json to_json(const ArchitectureConfig& a) {
    return {{"conv_channels", a.conv_channels}, {"dense_units", a.dense_units},
            {"kernel", a.kernel}, {"dropout", a.dropout}};
}

ArchitectureConfig architecture_config_from_json(const nlohmann::json& j, ArchitectureConfig a) {
    require(j.is_object(), ErrorCode::config, "architecture must be a JSON object");
    static const std::set<std::string> known = {"conv_channels", "dense_units", "kernel", "dropout"};
    for (const auto& [key, _] : j.items())
        require(known.count(key) > 0, ErrorCode::config, "architecture: unknown key '" + key + "'");
    try {
        if (j.contains("conv_channels")) a.conv_channels = j["conv_channels"].get<std::vector<std::size_t>>();
        if (j.contains("dense_units")) a.dense_units = j["dense_units"].get<std::vector<std::size_t>>();
        if (j.contains("kernel")) a.kernel = j["kernel"].get<std::size_t>();
        if (j.contains("dropout")) a.dropout = j["dropout"].get<double>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::config, std::string("architecture: ") + e.what());
    }
    require(a.conv_channels.size() >= 2, ErrorCode::config,
            "architecture.conv_channels needs at least two entries (before and after pooling)");
    require(a.kernel >= 1, ErrorCode::config, "architecture.kernel must be >= 1");
    require(a.dropout >= 0.0 && a.dropout < 1.0, ErrorCode::config, "architecture.dropout must lie in [0, 1)");
    return a;
}

ArchitectureConfig default_presence_architecture() { return {{16, 16, 32, 32}, {64, 32}, 3, 0.6}; }
ArchitectureConfig default_bit_architecture() { return {{16, 16, 16, 32}, {64}, 3, 0.6}; }

// ---------------------------------------------------------- architectures

namespace {

void append_head(std::vector<LayerSpec>& layers, const ArchitectureConfig& arch) {
    layers.push_back(LayerSpec::flatten());
    for (auto units : arch.dense_units) {
        layers.push_back(LayerSpec::dense(units));
        layers.push_back(LayerSpec::relu());
        layers.push_back(LayerSpec::dropout(arch.dropout));
    }
    layers.push_back(LayerSpec::dense(2));
}

} // namespace

std::vector<LayerSpec> presence_layers(std::size_t samples_per_bit, std::size_t window_bits,
                                       const ArchitectureConfig& arch) {
    require(arch.conv_channels.size() >= 2, ErrorCode::config, "need at least two conv layers");
    std::size_t h = samples_per_bit, w = window_bits;
    std::vector<LayerSpec> layers;
    auto conv = [&](std::size_t channels) {
        const std::size_t kh = std::min(arch.kernel, h), kw = std::min(arch.kernel, w);
        layers.push_back(LayerSpec::conv2d(kh, kw, channels));
        layers.push_back(LayerSpec::relu());
        h -= kh - 1;
        w -= kw - 1;
    };
    for (std::size_t i = 0; i + 1 < arch.conv_channels.size(); ++i) conv(arch.conv_channels[i]);
    const std::size_t ph = std::min<std::size_t>(2, h), pw = std::min<std::size_t>(2, w);
    layers.push_back(LayerSpec::maxpool2d(ph, pw));
    h /= ph;
    w /= pw;
    conv(arch.conv_channels.back());
    append_head(layers, arch);
    return layers;
}

std::vector<LayerSpec> bit_layers(std::size_t samples_per_bit, const ArchitectureConfig& arch) {
    require(arch.conv_channels.size() >= 2, ErrorCode::config, "need at least two conv layers");
    std::size_t h = samples_per_bit;
    std::vector<LayerSpec> layers;
    auto conv = [&](std::size_t channels) {
        const std::size_t k = std::min(arch.kernel, h);
        layers.push_back(LayerSpec::conv1d(k, channels));
        layers.push_back(LayerSpec::relu());
        h -= k - 1;
    };
    for (std::size_t i = 0; i + 1 < arch.conv_channels.size(); ++i) conv(arch.conv_channels[i]);
    const std::size_t ph = std::min<std::size_t>(2, h);
    layers.push_back(LayerSpec::maxpool2d(ph, 1));
    h /= ph;
    conv(arch.conv_channels.back());
    append_head(layers, arch);
    return layers;
}

FeatureShape input_shape_for(const LabeledDataset& ds) { return {ds.rows, ds.cols, 1}; }

NetworkModel make_model(FeatureShape input, std::vector<LayerSpec> layers, std::uint64_t seed) {
    NetworkModel m;
    m.net = Network<float>(input, std::move(layers));
    m.net.init_parameters(seed);
    return m;
}

// --------------------------------------------------------------- batching

NormStats compute_norm_stats(const LabeledDataset& ds) {
    require(!ds.values.empty(), ErrorCode::invalid_argument, "normalization needs data");
    double sum = 0.0;
    for (float v : ds.values) sum += v;
    const double mean = sum / static_cast<double>(ds.values.size());
    double ss = 0.0;
    for (float v : ds.values) {
        const double d = v - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(ds.values.size()));
    return {mean, sd > 0.0 ? sd : 1.0};
}

Tensor<float> make_batch(std::span<const float> values, std::size_t count, FeatureShape shape,
                         const NormStats& norm) {
    const std::size_t h = shape.height, w = shape.width, per = shape.size();
    require(values.size() == count * per, ErrorCode::shape_mismatch, "batch values do not match shape");
    Tensor<float> t({count, h, w, 1});
    for (std::size_t n = 0; n < count; ++n) {
        const float* src = values.data() + n * per;
        float* dst = t.data() + n * per;
        for (std::size_t col = 0; col < w; ++col)
            for (std::size_t row = 0; row < h; ++row)
                dst[row * w + col] = static_cast<float>((src[col * h + row] - norm.mean) / norm.std);
    }
    return t;
}

Tensor<float> make_batch(const LabeledDataset& ds, std::span<const std::size_t> indices, const NormStats& norm) {
    const FeatureShape shape = input_shape_for(ds);
    const std::size_t per = shape.size();
    std::vector<float> gathered(indices.size() * per);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto ex = ds.example(indices[i]);
        std::copy(ex.begin(), ex.end(), gathered.begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return make_batch(gathered, indices.size(), shape, norm);
}

namespace {

void check_compatible(const NetworkModel& model, const LabeledDataset& ds) {
    require(input_shape_for(ds) == model.net.input_shape(), ErrorCode::shape_mismatch,
            "dataset examples are " + to_string(input_shape_for(ds)) + " but the model expects " +
                to_string(model.net.input_shape()));
}

template <typename Fn>
void for_each_batch(std::size_t n, std::size_t batch_size, Fn&& fn) {
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        fn(std::span<const std::size_t>(idx));
    }
}

} // namespace

Prediction predict(const NetworkModel& model, const LabeledDataset& ds, std::size_t batch_size) {
    check_compatible(model, ds);
    Prediction out;
    out.labels.reserve(ds.size());
    out.prob_one.reserve(ds.size());
    RandomStream unused(0);
    for_each_batch(ds.size(), batch_size, [&](std::span<const std::size_t> idx) {
        const auto logits = model.net.forward(make_batch(ds, idx, model.norm), Mode::eval, unused);
        const auto p = softmax(logits);
        const std::size_t k = p.dim(1);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const float* row = p.data() + r * k;
            out.labels.push_back(static_cast<std::uint8_t>(std::max_element(row, row + k) - row));
            out.prob_one.push_back(k > 1 ? row[1] : 0.0);
        }
    });
    return out;
}

EvalResult evaluate(const NetworkModel& model, const LabeledDataset& ds, std::size_t batch_size) {
    check_compatible(model, ds);
    require(!ds.empty(), ErrorCode::invalid_argument, "cannot evaluate on an empty dataset");
    RandomStream unused(0);
    double loss = 0.0;
    std::size_t correct = 0;
    for_each_batch(ds.size(), batch_size, [&](std::span<const std::size_t> idx) {
        const auto logits = model.net.forward(make_batch(ds, idx, model.norm), Mode::eval, unused);
        std::vector<std::uint8_t> labels(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) labels[r] = ds.labels[idx[r]];
        const auto res = loss_and_grad(logits, std::span<const std::uint8_t>(labels));
        loss += res.loss * static_cast<double>(idx.size());
        correct += res.correct;
    });
    const double n = static_cast<double>(ds.size());
    return {loss / n, static_cast<double>(correct) / n};
}

// --------------------------------------------------------------- training

NetworkModel train(NetworkModel model, const LabeledDataset& train_ds, const LabeledDataset& val_ds,
                   const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    require(!train_ds.empty(), ErrorCode::invalid_argument, "training dataset is empty");
    require(!val_ds.empty(), ErrorCode::invalid_argument, "validation dataset is empty");
    require(train_ds.kind == val_ds.kind && train_ds.rows == val_ds.rows && train_ds.cols == val_ds.cols,
            ErrorCode::kind_mismatch, "training and validation datasets differ in kind or shape");
    require(model.net.parameter_count() > 0, ErrorCode::invalid_argument, "model has no parameters");
    check_compatible(model, train_ds);

    model.norm = compute_norm_stats(train_ds);

    const RandomStream root(cfg.seed);
    RandomStream shuffle_rng = root.fork(1);
    RandomStream dropout_rng = root.fork(2);

    AdamState<float> adam;
    ForwardCache<float> cache;
    std::vector<std::size_t> order(train_ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<std::uint8_t> labels;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            labels.resize(idx.size());
            for (std::size_t r = 0; r < idx.size(); ++r) labels[r] = train_ds.labels[idx[r]];

            LossResult<float> res;
            try {
                const auto batch = make_batch(train_ds, idx, model.norm);
                const auto logits = model.net.forward(batch, Mode::train, dropout_rng, &cache);
                res = loss_and_grad(logits, std::span<const std::uint8_t>(labels));
            } catch (const Error& e) {
                if (e.code() != ErrorCode::non_finite) throw;
                fail(ErrorCode::divergence, "training diverged in epoch " + std::to_string(epoch) +
                                                " at example offset " + std::to_string(start) + ": " + e.what());
            }
            const auto grads = model.net.backward(cache, res.dlogits);
            auto params = model.net.parameters();
            adam_step<float>(params, grads, adam, cfg);
            model.net.touch();

            loss_sum += res.loss * static_cast<double>(idx.size());
            correct += res.correct;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(train_ds.size());
        rec.train_acc = static_cast<double>(correct) / static_cast<double>(train_ds.size());
        try {
            const auto val = evaluate(model, val_ds);
            rec.val_loss = val.loss;
            rec.val_acc = val.accuracy;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::non_finite) throw;
            fail(ErrorCode::divergence, "validation diverged after epoch " + std::to_string(epoch));
        }
        model.meta.history.push_back(rec);
        ++model.meta.epochs_run;
        if (on_epoch) on_epoch(rec);
    }
    return model;
}

// -------------------------------------------------------------- gradcheck

namespace {

bool same_pattern(const Network<double>& net, const ForwardCache<double>& a, const ForwardCache<double>& b,
                  std::size_t from) {
    for (std::size_t i = from; i < net.num_layers(); ++i) {
        const auto kind = net.layers()[i].spec().kind;
        if (kind == LayerKind::relu) {
            const auto& xa = a.layers[i].input;
            const auto& xb = b.layers[i].input;
            for (std::size_t k = 0; k < xa.size(); ++k)
                if ((xa[k] > 0.0) != (xb[k] > 0.0)) return false;
        } else if (kind == LayerKind::maxpool2d) {
            if (a.layers[i].argmax != b.layers[i].argmax) return false;
        }
    }
    return true;
}

double relative_error(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

} // namespace

GradCheckReport grad_check(const Network<double>& net, const Tensor<double>& example, std::uint8_t label,
                           const GradCheckOptions& opts) {
    require(net.parameter_count() > 0, ErrorCode::invalid_argument, "grad_check needs a model with parameters");
    require(example.rank() == 4 && example.dim(0) == 1, ErrorCode::shape_mismatch,
            "grad_check expects a single example shaped [1, H, W, C]");

    RandomStream unused(0);
    const std::uint8_t labels[1] = {label};
    const std::span<const std::uint8_t> lab(labels);

    ForwardCache<double> base;
    const auto logits = net.forward(example, Mode::eval, unused, &base);
    const auto res = loss_and_grad(logits, lab);
    const auto grads = net.backward(base, res.dlogits);

    Network<double> work = net;
    auto params = work.parameters();
    const auto owners = work.parameter_layers();

    GradCheckReport report;
    ForwardCache<double> plus, minus;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const std::size_t layer = owners[pi];
        const auto& layer_input = base.layers[layer].input;
        auto loss_at = [&](ForwardCache<double>& c) {
            return loss_and_grad(work.forward_from(layer, layer_input, Mode::eval, unused, &c), lab).loss;
        };

        if (report.per_layer.empty() || report.per_layer.back().layer != layer)
            report.per_layer.push_back({layer, work.layers()[layer].spec().kind, 0.0, 0});
        auto& entry = report.per_layer.back();

        Tensor<double>& p = *params[pi];
        for (std::size_t e = 0; e < p.size(); ++e) {
            const double orig = p[e];
            double h = opts.eps;
            double lp = 0.0, lm = 0.0;
            for (int attempt = 0; attempt < 12; ++attempt) {
                p[e] = orig + h;
                lp = loss_at(plus);
                p[e] = orig - h;
                lm = loss_at(minus);
                if (same_pattern(work, plus, base, layer) && same_pattern(work, minus, base, layer)) break;
                h *= 0.5;
            }
            p[e] = orig;

            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = opts.flip_sign ? -grads[pi][e] : grads[pi][e];
            const double err = relative_error(analytic, numeric, opts.floor);
            entry.worst = std::max(entry.worst, err);
            ++entry.checked;
            report.worst = std::max(report.worst, err);
            ++report.checked;
        }
    }
    return report;
}

// --------------------------------------------------------------- model io

namespace {

constexpr std::string_view kModelMagic = "OOKM";

nlohmann::json shape_json(const FeatureShape& s) {
    return {{"height", s.height}, {"width", s.width}, {"channels", s.channels}};
}

} // namespace

void save_model(const NetworkModel& model, const std::filesystem::path& path) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& s : model.net.specs()) layers.push_back(to_json(s));
    nlohmann::json shapes = nlohmann::json::array();
    std::size_t count = 0;
    for (const auto* p : model.net.parameters()) {
        shapes.push_back(p->shape());
        count += p->size();
    }
    nlohmann::json history = nlohmann::json::array();
    for (const auto& r : model.meta.history)
        history.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"train_acc", r.train_acc},
                           {"val_loss", r.val_loss}, {"val_acc", r.val_acc}});

    const nlohmann::json header{
        {"input", shape_json(model.net.input_shape())},
        {"layers", layers},
        {"param_shapes", shapes},
        {"param_count", count},
        {"norm", {{"mean", model.norm.mean}, {"std", model.norm.std}}},
        {"train_meta", {{"epochs_run", model.meta.epochs_run}, {"history", history}}},
    };
    const std::string text = header.dump();

    detail::ByteWriter w;
    w.bytes(kModelMagic);
    w.u32(kModelVersion);
    w.u64(text.size());
    w.bytes(text);
    for (const auto* p : model.net.parameters()) w.floats(p->values());
    detail::write_file_atomic(path, w.buffer());
}

NetworkModel load_model(const std::filesystem::path& path) {
    detail::ByteReader r(detail::read_file(path));

    std::string magic;
    if (!r.try_bytes(kModelMagic.size(), magic) || magic != kModelMagic)
        fail(ErrorCode::bad_magic, "not a model file (bad magic): " + path.string());
    const auto version = r.u32("version");
    require(version == kModelVersion, ErrorCode::version_mismatch,
            "model version " + std::to_string(version) + " unsupported (expected " +
                std::to_string(kModelVersion) + ")");
    const auto header_len = r.u64("header length");
    std::string text;
    if (!r.try_bytes(header_len, text))
        fail(ErrorCode::truncated_payload, "truncated payload while reading model header");

    NetworkModel model;
    std::vector<std::vector<std::size_t>> declared_shapes;
    FeatureShape input;
    std::vector<LayerSpec> specs;
    try {
        const auto h = nlohmann::json::parse(text);
        const auto& in = h.at("input");
        input = {in.at("height").get<std::size_t>(), in.at("width").get<std::size_t>(),
                 in.at("channels").get<std::size_t>()};
        for (const auto& l : h.at("layers")) specs.push_back(layer_spec_from_json(l));
        declared_shapes = h.at("param_shapes").get<std::vector<std::vector<std::size_t>>>();
        model.norm.mean = h.at("norm").at("mean").get<double>();
        model.norm.std = h.at("norm").at("std").get<double>();
        const auto& meta = h.at("train_meta");
        model.meta.epochs_run = meta.at("epochs_run").get<std::size_t>();
        for (const auto& rec : meta.at("history"))
            model.meta.history.push_back({rec.at("epoch").get<std::size_t>(), rec.at("train_loss").get<double>(),
                                          rec.at("train_acc").get<double>(), rec.at("val_loss").get<double>(),
                                          rec.at("val_acc").get<double>()});
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_header, std::string("malformed model header: ") + e.what());
    } catch (const Error& e) {
        fail(ErrorCode::bad_header, std::string("malformed model header: ") + e.what());
    }
    require(model.norm.std > 0.0, ErrorCode::bad_header, "model normalization std must be > 0");

    try {
        model.net = Network<float>(input, std::move(specs));
    } catch (const Error& e) {
        fail(ErrorCode::shape_mismatch, std::string("model layers do not fit the declared input: ") + e.what());
    }
    auto params = model.net.parameters();
    require(params.size() == declared_shapes.size(), ErrorCode::shape_mismatch,
            "declared parameter list does not match the layer stack");
    for (std::size_t i = 0; i < params.size(); ++i)
        require(params[i]->shape() == declared_shapes[i], ErrorCode::shape_mismatch,
                "parameter " + std::to_string(i) + " declared as " + shape_string(declared_shapes[i]) +
                    " but the layer stack implies " + shape_string(params[i]->shape()));
    for (auto* p : params) r.floats(p->values(), "parameters");
    require(r.remaining() == 0, ErrorCode::shape_mismatch, "model payload is larger than declared");
    model.net.touch();
    return model;
}

} // namespace ookfso
