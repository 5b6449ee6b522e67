#include "ookfso/network.hpp"

#include <algorithm>
#include <cmath>

namespace ookfso {

namespace {

template <typename T>
void check_finite(const Tensor<T>& t, std::size_t layer, LayerKind kind) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i]))
            fail(ErrorCode::non_finite, "non-finite activation after layer " + std::to_string(layer) +
                                            " (" + to_string(kind) + ")");
    }
}

} // namespace

template <typename T>
Network<T>::Network(FeatureShape input, std::vector<LayerSpec> specs)
    : input_(input), specs_(std::move(specs)) {
    FeatureShape shape = input;
    layers_.reserve(specs_.size());
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        try {
            layers_.emplace_back(specs_[i], shape);
        } catch (const Error& e) {
            fail(e.code(), "layer " + std::to_string(i) + ": " + e.what());
        }
        shape = layers_.back().output_shape();
    }
    require(layers_.empty() || (shape.height == 1 && shape.width == 1), ErrorCode::shape_mismatch,
            "network output must be flat, got " + to_string(shape));
}

template <typename T>
std::vector<Tensor<T>*> Network<T>::parameters() {
    std::vector<Tensor<T>*> out;
    for (auto& l : layers_)
        for (auto& p : l.params()) out.push_back(&p);
    return out;
}

template <typename T>
std::vector<const Tensor<T>*> Network<T>::parameters() const {
    std::vector<const Tensor<T>*> out;
    for (const auto& l : layers_)
        for (const auto& p : l.params()) out.push_back(&p);
    return out;
}

template <typename T>
std::vector<std::size_t> Network<T>::parameter_layers() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        for (std::size_t k = 0; k < layers_[i].params().size(); ++k) out.push_back(i);
    return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.param_count();
    return n;
}

template <typename T>
void Network<T>::init_parameters(std::uint64_t seed) {
    const RandomStream base(seed);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        RandomStream rng = base.fork(i);
        layers_[i].init(rng);
    }
    touch();
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& batch, Mode mode, RandomStream& rng,
                              ForwardCache<T>* cache) const {
    return forward_from(0, batch, mode, rng, cache);
}

template <typename T>
Tensor<T> Network<T>::forward_from(std::size_t first, const Tensor<T>& input, Mode mode,
                                   RandomStream& rng, ForwardCache<T>* cache) const {
    require(first <= layers_.size(), ErrorCode::invalid_argument, "forward_from: layer out of range");
    if (cache) {
        cache->layers.resize(layers_.size());
        cache->owner = this;
        cache->generation = generation_;
        cache->first_layer = first;
    }
    if (first == 0) check_finite(input, 0, layers_.empty() ? LayerKind::flatten : layers_[0].spec().kind);

    Tensor<T> x = input;
    for (std::size_t i = first; i < layers_.size(); ++i) {
        x = layers_[i].forward(x, mode, rng, cache ? &cache->layers[i] : nullptr);
        check_finite(x, i, layers_[i].spec().kind);
    }
    const std::size_t n = x.dim(0);
    x.reshape({n, x.size() / std::max<std::size_t>(n, 1)});
    return x;
}

template <typename T>
Gradients<T> Network<T>::backward(const ForwardCache<T>& cache, const Tensor<T>& dlogits) const {
    require(cache.owner == this && cache.generation == generation_ &&
                cache.layers.size() == layers_.size() && cache.first_layer == 0,
            ErrorCode::stale_cache, "backward called with a cache from a different forward pass");

    Gradients<T> grads;
    for (const auto* p : parameters()) grads.emplace_back(p->shape());

    // grads is laid out layer by layer; walk it backwards alongside layers_.
    std::size_t slot = grads.size();
    Tensor<T> dy = dlogits;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        const auto& layer = layers_[i];
        const std::size_t np = layer.params().size();
        slot -= np;
        const auto& in = cache.layers[i].input;
        require(in.rank() == 4, ErrorCode::stale_cache, "cache is missing layer inputs");
        dy.reshape({in.dim(0), layer.output_shape().height, layer.output_shape().width,
                    layer.output_shape().channels});
        dy = layer.backward(cache.layers[i], dy, std::span<Tensor<T>>(grads).subspan(slot, np), i > 0);
    }
    return grads;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    require(logits.rank() == 2, ErrorCode::shape_mismatch, "softmax expects [N, classes]");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    Tensor<T> p(logits.shape());
    for (std::size_t r = 0; r < n; ++r) {
        const T* z = logits.data() + r * k;
        T* out = p.data() + r * k;
        const T mx = *std::max_element(z, z + k);
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) sum += std::exp(static_cast<double>(z[c] - mx));
        for (std::size_t c = 0; c < k; ++c)
            out[c] = static_cast<T>(std::exp(static_cast<double>(z[c] - mx)) / sum);
    }
    return p;
}

template <typename T>
LossResult<T> loss_and_grad(const Tensor<T>& logits, std::span<const std::uint8_t> labels) {
    require(logits.rank() == 2, ErrorCode::shape_mismatch, "loss expects logits of shape [N, classes]");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    require(labels.size() == n, ErrorCode::shape_mismatch, "label count does not match batch size");
    require(n > 0, ErrorCode::shape_mismatch, "empty batch");

    LossResult<T> res;
    res.dlogits = Tensor<T>(logits.shape());
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const T* z = logits.data() + r * k;
        require(labels[r] < k, ErrorCode::shape_mismatch, "label out of range");
        const double mx = static_cast<double>(*std::max_element(z, z + k));
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) sum += std::exp(static_cast<double>(z[c]) - mx);
        const double log_sum = std::log(sum);
        total += -(static_cast<double>(z[labels[r]]) - mx - log_sum);
        std::size_t best = 0;
        for (std::size_t c = 0; c < k; ++c) {
            const double p = std::exp(static_cast<double>(z[c]) - mx - log_sum);
            res.dlogits[r * k + c] = static_cast<T>((p - (c == labels[r] ? 1.0 : 0.0)) / static_cast<double>(n));
            if (z[c] > z[best]) best = c;
        }
        if (best == labels[r]) ++res.correct;
    }
    res.loss = total / static_cast<double>(n);
    if (!std::isfinite(res.loss)) fail(ErrorCode::non_finite, "non-finite loss");
    return res;
}

template <typename T>
LossResult<T> loss_and_grad(const Tensor<T>& logits, const Tensor<T>& onehot) {
    require(onehot.shape() == logits.shape() && logits.rank() == 2, ErrorCode::shape_mismatch,
            "one-hot labels must match the logits shape");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    std::vector<std::uint8_t> labels(n);
    for (std::size_t r = 0; r < n; ++r) {
        std::size_t hot = k, ones = 0;
        for (std::size_t c = 0; c < k; ++c) {
            const T v = onehot[r * k + c];
            require(v == T{0} || v == T{1}, ErrorCode::shape_mismatch, "labels must be one-hot");
            if (v == T{1}) {
                hot = c;
                ++ones;
            }
        }
        require(ones == 1, ErrorCode::shape_mismatch, "each label row needs exactly one hot entry");
        labels[r] = static_cast<std::uint8_t>(hot);
    }
    return loss_and_grad(logits, std::span<const std::uint8_t>(labels));
}

template <typename T>
Tensor<T> one_hot(std::span<const std::uint8_t> labels, std::size_t classes) {
    Tensor<T> t({labels.size(), classes});
    for (std::size_t r = 0; r < labels.size(); ++r) {
        require(labels[r] < classes, ErrorCode::shape_mismatch, "label out of range");
        t[r * classes + labels[r]] = T{1};
    }
    return t;
}

template class Network<float>;
template class Network<double>;

template Tensor<float> softmax(const Tensor<float>&);
template Tensor<double> softmax(const Tensor<double>&);
template LossResult<float> loss_and_grad(const Tensor<float>&, std::span<const std::uint8_t>);
template LossResult<double> loss_and_grad(const Tensor<double>&, std::span<const std::uint8_t>);
template LossResult<float> loss_and_grad(const Tensor<float>&, const Tensor<float>&);
template LossResult<double> loss_and_grad(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> one_hot(std::span<const std::uint8_t>, std::size_t);
template Tensor<double> one_hot(std::span<const std::uint8_t>, std::size_t);

} // namespace ookfso
