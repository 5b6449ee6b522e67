#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ookfso/tensor.hpp"

namespace ookfso {

struct TrainConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t epochs = 50;
    std::size_t batch_size = 128;
    std::string loss = "softmax_cross_entropy";
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
// Applies the keys present in j on top of base; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
    std::uint64_t t = 0;
};

// One bias-corrected Adam update over every parameter tensor.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, AdamState<T>& state,
               const TrainConfig& cfg) {
    require(params.size() == grads.size(), ErrorCode::shape_mismatch,
            "adam: parameter and gradient counts differ");
    if (state.m.empty()) {
        for (const auto* p : params) {
            state.m.emplace_back(p->shape());
            state.v.emplace_back(p->shape());
        }
    }
    require(state.m.size() == params.size(), ErrorCode::shape_mismatch, "adam: state does not match parameters");

    ++state.t;
    const double t = static_cast<double>(state.t);
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    const T step = static_cast<T>(cfg.learning_rate / (1.0 - std::pow(cfg.beta1, t)));
    const T v_corr = static_cast<T>(1.0 / (1.0 - std::pow(cfg.beta2, t)));
    const T eps = static_cast<T>(cfg.epsilon);

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = *params[i];
        const Tensor<T>& g = grads[i];
        require(g.shape() == p.shape() && state.m[i].shape() == p.shape(), ErrorCode::shape_mismatch,
                "adam: shape mismatch in parameter " + std::to_string(i));
        T* pd = p.data();
        T* md = state.m[i].data();
        T* vd = state.v[i].data();
        const T* gd = g.data();
        for (std::size_t k = 0; k < p.size(); ++k) {
            md[k] = b1 * md[k] + (T{1} - b1) * gd[k];
            vd[k] = b2 * vd[k] + (T{1} - b2) * gd[k] * gd[k];
            pd[k] -= step * md[k] / (std::sqrt(vd[k] * v_corr) + eps);
        }
    }
}

} // namespace ookfso
