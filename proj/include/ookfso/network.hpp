#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ookfso/layers.hpp"

namespace ookfso {

template <typename T>
struct ForwardCache {
    std::vector<LayerCache<T>> layers;
    const void* owner = nullptr;
    std::uint64_t generation = 0;
    std::size_t first_layer = 0;
};

template <typename T>
using Gradients = std::vector<Tensor<T>>;

// Layer stack with shapes resolved at construction. Parameters are exposed
// as a flat list: weight then bias for every parameterized layer, in order.
template <typename T>
class Network {
public:
    Network() = default;
    Network(FeatureShape input, std::vector<LayerSpec> specs);

    FeatureShape input_shape() const noexcept { return input_; }
    FeatureShape output_shape() const noexcept {
        return layers_.empty() ? input_ : layers_.back().output_shape();
    }
    const std::vector<LayerSpec>& specs() const noexcept { return specs_; }
    const std::vector<Layer<T>>& layers() const noexcept { return layers_; }
    std::size_t num_layers() const noexcept { return layers_.size(); }

    std::vector<Tensor<T>*> parameters();
    std::vector<const Tensor<T>*> parameters() const;
    // Layer index owning each entry of parameters().
    std::vector<std::size_t> parameter_layers() const;
    std::size_t parameter_count() const;

    void init_parameters(std::uint64_t seed);

    // Returns logits of shape [N, classes].
    Tensor<T> forward(const Tensor<T>& batch, Mode mode, RandomStream& rng,
                      ForwardCache<T>* cache = nullptr) const;
    // Runs layers [first, end) on the given input to layer `first`.
    Tensor<T> forward_from(std::size_t first, const Tensor<T>& input, Mode mode, RandomStream& rng,
                           ForwardCache<T>* cache = nullptr) const;

    // Gradients aligned with parameters(); throws stale_cache if parameters
    // changed since the forward pass that filled the cache.
    Gradients<T> backward(const ForwardCache<T>& cache, const Tensor<T>& dlogits) const;

    std::uint64_t generation() const noexcept { return generation_; }
    // Call after mutating parameters in place.
    void touch() noexcept { ++generation_; }

    template <typename U>
    Network<U> cast() const {
        Network<U> out(input_, specs_);
        auto dst = out.parameters();
        auto src = parameters();
        for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
        return out;
    }

private:
    FeatureShape input_;
    std::vector<LayerSpec> specs_;
    std::vector<Layer<T>> layers_;
    std::uint64_t generation_ = 0;
};

template <typename T>
struct LossResult {
    double loss = 0.0;
    Tensor<T> dlogits;
    std::size_t correct = 0;
};

// Row-wise softmax with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

// Mean softmax cross-entropy; dlogits = (softmax - onehot) / N.
template <typename T>
LossResult<T> loss_and_grad(const Tensor<T>& logits, std::span<const std::uint8_t> labels);

// Same with one-hot label rows.
template <typename T>
LossResult<T> loss_and_grad(const Tensor<T>& logits, const Tensor<T>& onehot);

template <typename T>
Tensor<T> one_hot(std::span<const std::uint8_t> labels, std::size_t classes);

extern template class Network<float>;
extern template class Network<double>;

} // namespace ookfso
