#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ookfso/random.hpp"
#include "ookfso/tensor.hpp"

namespace ookfso {

enum class LayerKind { conv2d, conv1d, maxpool2d, dense, relu, dropout, flatten };

const char* to_string(LayerKind kind) noexcept;
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t channels = 0; // conv output channels
    std::size_t pool_h = 0;
    std::size_t pool_w = 0;
    std::size_t units = 0;    // dense
    double rate = 0.0;        // dropout

    static LayerSpec conv2d(std::size_t kh, std::size_t kw, std::size_t channels);
    static LayerSpec conv1d(std::size_t k, std::size_t channels);
    static LayerSpec maxpool2d(std::size_t ph, std::size_t pw);
    static LayerSpec dense(std::size_t units);
    static LayerSpec relu();
    static LayerSpec dropout(double rate);
    static LayerSpec flatten();

    bool operator==(const LayerSpec&) const = default;
};

nlohmann::json to_json(const LayerSpec& spec);
LayerSpec layer_spec_from_json(const nlohmann::json& j);

// Per-example activation shape; batches are [N, height, width, channels].
struct FeatureShape {
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t channels = 1;

    std::size_t size() const noexcept { return height * width * channels; }
    bool operator==(const FeatureShape&) const = default;
};

std::string to_string(const FeatureShape& s);

enum class Mode { train, eval };

template <typename T>
struct LayerCache {
    Tensor<T> input;
    std::vector<std::uint32_t> argmax;  // maxpool: flat input index per output
    std::vector<T> mask;                // dropout: 0 or 1/(1-p)
};

// Valid cross-correlation (stride 1) for convs, non-overlapping floor pooling,
// affine dense, inverted dropout.
template <typename T>
class Layer {
public:
    Layer(const LayerSpec& spec, FeatureShape input);

    const LayerSpec& spec() const noexcept { return spec_; }
    FeatureShape input_shape() const noexcept { return in_; }
    FeatureShape output_shape() const noexcept { return out_; }

    bool has_params() const noexcept { return !params_.empty(); }
    std::vector<Tensor<T>>& params() noexcept { return params_; }
    const std::vector<Tensor<T>>& params() const noexcept { return params_; }
    std::size_t param_count() const noexcept;

    // Fan-in scaled uniform weights, zero biases.
    void init(RandomStream& rng);

    Tensor<T> forward(const Tensor<T>& x, Mode mode, RandomStream& rng, LayerCache<T>* cache) const;

    // Writes parameter gradients into grads (one per params() entry) and
    // returns d(loss)/d(input) when need_dx is set.
    Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& dy, std::span<Tensor<T>> grads,
                       bool need_dx) const;

    template <typename U>
    Layer<U> cast() const {
        Layer<U> out(spec_, in_);
        for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i] = params_[i].template cast<U>();
        return out;
    }

private:
    std::size_t kernel_rows() const { return spec_.kernel_h * spec_.kernel_w * in_.channels; }
    std::size_t conv_chunk() const noexcept;
    void im2col(const Tensor<T>& x, std::size_t b0, std::size_t nb, AlignedVector<T>& cols) const;
    void col2im(const T* dcols, std::size_t b0, std::size_t nb, Tensor<T>& dx) const;

    LayerSpec spec_;
    FeatureShape in_;
    FeatureShape out_;
    std::vector<Tensor<T>> params_;
};

extern template class Layer<float>;
extern template class Layer<double>;

} // namespace ookfso
