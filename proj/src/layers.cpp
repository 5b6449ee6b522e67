#include "ookfso/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Core>

namespace ookfso {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;
template <typename T>
using CVec = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

std::vector<std::size_t> batch_shape(std::size_t n, const FeatureShape& s) {
    return {n, s.height, s.width, s.channels};
}

} // namespace

const char* to_string(LayerKind kind) noexcept {
    switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::dropout: return "dropout";
    case LayerKind::flatten: return "flatten";
    }
    return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
    for (auto k : {LayerKind::conv2d, LayerKind::conv1d, LayerKind::maxpool2d, LayerKind::dense,
                   LayerKind::relu, LayerKind::dropout, LayerKind::flatten}) {
        if (s == to_string(k)) return k;
    }
    fail(ErrorCode::config, "unknown layer kind '" + s + "'");
}

LayerSpec LayerSpec::conv2d(std::size_t kh, std::size_t kw, std::size_t channels) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.kernel_h = kh;
    s.kernel_w = kw;
    s.channels = channels;
    return s;
}

LayerSpec LayerSpec::conv1d(std::size_t k, std::size_t channels) {
    LayerSpec s;
    s.kind = LayerKind::conv1d;
    s.kernel_h = k;
    s.kernel_w = 1;
    s.channels = channels;
    return s;
}

LayerSpec LayerSpec::maxpool2d(std::size_t ph, std::size_t pw) {
    LayerSpec s;
    s.kind = LayerKind::maxpool2d;
    s.pool_h = ph;
    s.pool_w = pw;
    return s;
}

LayerSpec LayerSpec::dense(std::size_t units) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.units = units;
    return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::dropout(double rate) {
    LayerSpec s;
    s.kind = LayerKind::dropout;
    s.rate = rate;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
}

nlohmann::json to_json(const LayerSpec& s) {
    nlohmann::json j{{"kind", to_string(s.kind)}};
    switch (s.kind) {
    case LayerKind::conv2d:
    case LayerKind::conv1d:
        j["kernel_h"] = s.kernel_h;
        j["kernel_w"] = s.kernel_w;
        j["channels"] = s.channels;
        break;
    case LayerKind::maxpool2d:
        j["pool_h"] = s.pool_h;
        j["pool_w"] = s.pool_w;
        break;
    case LayerKind::dense: j["units"] = s.units; break;
    case LayerKind::dropout: j["rate"] = s.rate; break;
    default: break;
    }
    return j;
}

LayerSpec layer_spec_from_json(const nlohmann::json& j) {
    require(j.is_object() && j.contains("kind"), ErrorCode::config, "layer spec needs a 'kind'");
    LayerSpec s;
    s.kind = layer_kind_from_string(j.at("kind").get<std::string>());
    s.kernel_h = j.value("kernel_h", std::size_t{0});
    s.kernel_w = j.value("kernel_w", std::size_t{0});
    s.channels = j.value("channels", std::size_t{0});
    s.pool_h = j.value("pool_h", std::size_t{0});
    s.pool_w = j.value("pool_w", std::size_t{0});
    s.units = j.value("units", std::size_t{0});
    s.rate = j.value("rate", 0.0);
    return s;
}

std::string to_string(const FeatureShape& s) {
    return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" + std::to_string(s.channels);
}

template <typename T>
Layer<T>::Layer(const LayerSpec& spec, FeatureShape input) : spec_(spec), in_(input), out_(input) {
    const std::string where = std::string(to_string(spec.kind)) + " on input " + to_string(input);
    require(input.size() > 0, ErrorCode::shape_mismatch, where + ": empty input");
    switch (spec.kind) {
    case LayerKind::conv1d:
        require(spec.kernel_w == 1, ErrorCode::shape_mismatch, where + ": conv1d kernel width must be 1");
        require(input.width == 1, ErrorCode::shape_mismatch, where + ": conv1d expects width 1");
        [[fallthrough]];
    case LayerKind::conv2d:
        require(spec.kernel_h >= 1 && spec.kernel_w >= 1, ErrorCode::shape_mismatch,
                where + ": kernel extents must be >= 1");
        require(spec.channels >= 1, ErrorCode::shape_mismatch, where + ": channels must be >= 1");
        require(spec.kernel_h <= input.height && spec.kernel_w <= input.width,
                ErrorCode::shape_mismatch, where + ": kernel larger than input");
        out_ = {input.height - spec.kernel_h + 1, input.width - spec.kernel_w + 1, spec.channels};
        params_.emplace_back(std::vector<std::size_t>{spec.kernel_h, spec.kernel_w, input.channels,
                                                      spec.channels});
        params_.emplace_back(std::vector<std::size_t>{spec.channels});
        break;
    case LayerKind::maxpool2d:
        require(spec.pool_h >= 1 && spec.pool_w >= 1, ErrorCode::shape_mismatch,
                where + ": pool extents must be >= 1");
        require(spec.pool_h <= input.height && spec.pool_w <= input.width, ErrorCode::shape_mismatch,
                where + ": pool window larger than input");
        out_ = {input.height / spec.pool_h, input.width / spec.pool_w, input.channels};
        break;
    case LayerKind::dense:
        require(spec.units >= 1, ErrorCode::shape_mismatch, where + ": units must be >= 1");
        require(input.height == 1 && input.width == 1, ErrorCode::shape_mismatch,
                where + ": dense needs a flattened input");
        out_ = {1, 1, spec.units};
        params_.emplace_back(std::vector<std::size_t>{input.channels, spec.units});
        params_.emplace_back(std::vector<std::size_t>{spec.units});
        break;
    case LayerKind::dropout:
        require(spec.rate >= 0.0 && spec.rate < 1.0, ErrorCode::shape_mismatch,
                where + ": dropout rate must lie in [0, 1)");
        break;
    case LayerKind::flatten: out_ = {1, 1, input.size()}; break;
    case LayerKind::relu: break;
    }
}

template <typename T>
std::size_t Layer<T>::param_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

template <typename T>
void Layer<T>::init(RandomStream& rng) {
    if (params_.empty()) return;
    const std::size_t fan_in =
        spec_.kind == LayerKind::dense ? in_.channels : kernel_rows();
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& w : params_[0].values()) w = static_cast<T>((2.0 * rng.uniform() - 1.0) * limit);
    params_[1].fill(T{0});
}

template <typename T>
void Layer<T>::im2col(const Tensor<T>& x, std::size_t b0, std::size_t nb, AlignedVector<T>& cols) const {
    const std::size_t kh = spec_.kernel_h, run = spec_.kernel_w * in_.channels;
    cols.resize(nb * out_.height * out_.width * kernel_rows());
    T* dst = cols.data();
    for (std::size_t b = b0; b < b0 + nb; ++b)
        for (std::size_t oh = 0; oh < out_.height; ++oh)
            for (std::size_t ow = 0; ow < out_.width; ++ow)
                for (std::size_t i = 0; i < kh; ++i) {
                    std::memcpy(dst, x.data() + ((b * in_.height + oh + i) * in_.width + ow) * in_.channels,
                                run * sizeof(T));
                    dst += run;
                }
}

template <typename T>
void Layer<T>::col2im(const T* dcols, std::size_t b0, std::size_t nb, Tensor<T>& dx) const {
    const std::size_t kh = spec_.kernel_h, run = spec_.kernel_w * in_.channels;
    for (std::size_t b = b0; b < b0 + nb; ++b)
        for (std::size_t oh = 0; oh < out_.height; ++oh)
            for (std::size_t ow = 0; ow < out_.width; ++ow)
                for (std::size_t i = 0; i < kh; ++i) {
                    T* d = dx.data() + ((b * in_.height + oh + i) * in_.width + ow) * in_.channels;
                    for (std::size_t e = 0; e < run; ++e) d[e] += dcols[e];
                    dcols += run;
                }
}

// Examples per im2col block; keeps the unfolded block near L2 size.
template <typename T>
std::size_t Layer<T>::conv_chunk() const noexcept {
    const std::size_t per_example = out_.height * out_.width * kernel_rows() * sizeof(T);
    return std::max<std::size_t>(1, (std::size_t{1} << 20) / std::max<std::size_t>(1, per_example));
}

template <typename T>
Tensor<T> Layer<T>::forward(const Tensor<T>& x, Mode mode, RandomStream& rng, LayerCache<T>* cache) const {
    require(x.rank() == 4 && x.dim(1) == in_.height && x.dim(2) == in_.width && x.dim(3) == in_.channels,
            ErrorCode::shape_mismatch,
            std::string(to_string(spec_.kind)) + ": expected batch of " + to_string(in_) + ", got " +
                shape_string(x.shape()));
    const std::size_t n = x.dim(0);
    Tensor<T> y(batch_shape(n, out_));

    switch (spec_.kind) {
    case LayerKind::conv2d:
    case LayerKind::conv1d: {
        const std::size_t k = kernel_rows();
        const std::size_t per = out_.height * out_.width;
        CMapR<T> w(params_[0].data(), k, out_.channels);
        AlignedVector<T> cols;
        for (std::size_t b0 = 0; b0 < n; b0 += conv_chunk()) {
            const std::size_t nb = std::min(conv_chunk(), n - b0);
            im2col(x, b0, nb, cols);
            CMapR<T> a(cols.data(), nb * per, k);
            MapR<T> out(y.data() + b0 * per * out_.channels, nb * per, out_.channels);
            out.noalias() = a * w;
            out.rowwise() += CVec<T>(params_[1].data(), out_.channels);
        }
        break;
    }
    case LayerKind::maxpool2d: {
        const std::size_t c = in_.channels;
        std::vector<std::uint32_t> argmax(y.size());
        std::size_t o = 0;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t oh = 0; oh < out_.height; ++oh)
                for (std::size_t ow = 0; ow < out_.width; ++ow)
                    for (std::size_t ch = 0; ch < c; ++ch, ++o) {
                        std::size_t best = ((b * in_.height + oh * spec_.pool_h) * in_.width +
                                            ow * spec_.pool_w) * c + ch;
                        for (std::size_t i = 0; i < spec_.pool_h; ++i)
                            for (std::size_t j = 0; j < spec_.pool_w; ++j) {
                                const std::size_t idx = ((b * in_.height + oh * spec_.pool_h + i) * in_.width +
                                                         ow * spec_.pool_w + j) * c + ch;
                                if (x[idx] > x[best]) best = idx;
                            }
                        y[o] = x[best];
                        argmax[o] = static_cast<std::uint32_t>(best);
                    }
        if (cache) cache->argmax = std::move(argmax);
        break;
    }
    case LayerKind::dense: {
        CMapR<T> a(x.data(), n, in_.channels);
        CMapR<T> w(params_[0].data(), in_.channels, out_.channels);
        MapR<T> out(y.data(), n, out_.channels);
        out.noalias() = a * w;
        out.rowwise() += CVec<T>(params_[1].data(), out_.channels);
        break;
    }
    case LayerKind::relu:
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
        break;
    case LayerKind::dropout:
        if (mode == Mode::train && spec_.rate > 0.0) {
            const T keep_scale = static_cast<T>(1.0 / (1.0 - spec_.rate));
            std::vector<T> mask(x.size());
            for (auto& m : mask) m = rng.uniform() < spec_.rate ? T{0} : keep_scale;
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
            if (cache) cache->mask = std::move(mask);
        } else {
            std::copy(x.values().begin(), x.values().end(), y.values().begin());
            if (cache) cache->mask.clear();
        }
        break;
    case LayerKind::flatten:
        std::copy(x.values().begin(), x.values().end(), y.values().begin());
        break;
    }

    if (cache) cache->input = x;
    return y;
}

template <typename T>
Tensor<T> Layer<T>::backward(const LayerCache<T>& cache, const Tensor<T>& dy, std::span<Tensor<T>> grads,
                             bool need_dx) const {
    const Tensor<T>& x = cache.input;
    require(x.rank() == 4, ErrorCode::stale_cache, "layer cache holds no forward input");
    const std::size_t n = x.dim(0);
    require(dy.size() == n * out_.size(), ErrorCode::shape_mismatch,
            std::string(to_string(spec_.kind)) + ": upstream gradient has wrong size");
    require(grads.size() == params_.size(), ErrorCode::shape_mismatch, "gradient slot count mismatch");

    Tensor<T> dx;
    if (need_dx) dx = Tensor<T>(x.shape());

    switch (spec_.kind) {
    case LayerKind::conv2d:
    case LayerKind::conv1d: {
        const std::size_t k = kernel_rows();
        const std::size_t per = out_.height * out_.width;
        grads[0] = Tensor<T>(params_[0].shape());
        grads[1] = Tensor<T>(params_[1].shape());
        MapR<T> gw(grads[0].data(), k, out_.channels);
        CMapR<T> w(params_[0].data(), k, out_.channels);
        CMapR<T> g_all(dy.data(), n * per, out_.channels);
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(grads[1].data(), out_.channels) = g_all.colwise().sum();
        AlignedVector<T> cols;
        MatR<T> dcols;
        for (std::size_t b0 = 0; b0 < n; b0 += conv_chunk()) {
            const std::size_t nb = std::min(conv_chunk(), n - b0);
            im2col(x, b0, nb, cols);
            CMapR<T> a(cols.data(), nb * per, k);
            CMapR<T> g(dy.data() + b0 * per * out_.channels, nb * per, out_.channels);
            gw.noalias() += a.transpose() * g;
            if (need_dx) {
                dcols.noalias() = g * w.transpose();
                col2im(dcols.data(), b0, nb, dx);
            }
        }
        break;
    }
    case LayerKind::maxpool2d:
        require(cache.argmax.size() == dy.size(), ErrorCode::stale_cache, "maxpool cache missing argmax");
        if (need_dx)
            for (std::size_t o = 0; o < dy.size(); ++o) dx[cache.argmax[o]] += dy[o];
        break;
    case LayerKind::dense: {
        CMapR<T> a(x.data(), n, in_.channels);
        CMapR<T> g(dy.data(), n, out_.channels);
        grads[0] = Tensor<T>(params_[0].shape());
        grads[1] = Tensor<T>(params_[1].shape());
        MapR<T>(grads[0].data(), in_.channels, out_.channels).noalias() = a.transpose() * g;
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(grads[1].data(), out_.channels) = g.colwise().sum();
        if (need_dx) {
            CMapR<T> w(params_[0].data(), in_.channels, out_.channels);
            MapR<T>(dx.data(), n, in_.channels).noalias() = g * w.transpose();
        }
        break;
    }
    case LayerKind::relu:
        if (need_dx)
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = x[i] > T{0} ? dy[i] : T{0};
        break;
    case LayerKind::dropout:
        if (need_dx) {
            if (cache.mask.empty()) {
                std::copy(dy.values().begin(), dy.values().end(), dx.values().begin());
            } else {
                for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * cache.mask[i];
            }
        }
        break;
    case LayerKind::flatten:
        if (need_dx) std::copy(dy.values().begin(), dy.values().end(), dx.values().begin());
        break;
    }
    return dx;
}

template class Layer<float>;
template class Layer<double>;

} // namespace ookfso
