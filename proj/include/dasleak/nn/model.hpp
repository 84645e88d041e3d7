#pragma once

#include "dasleak/features.hpp"
#include "dasleak/nn/architecture.hpp"
#include "dasleak/nn/layers.hpp"
#include "dasleak/rng.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dasleak::nn {

template <typename T>
struct ConvBlockParams {
    Tensor<T> kernel;   // [kh, kw, kd, Cin, Cout]
    Tensor<T> bias;
    Tensor<T> gamma, beta;
    Tensor<T> running_mean, running_var;
};

template <typename T>
struct DenseParams {
    Tensor<T> weight;   // [in, out]
    Tensor<T> bias;
};

/// All tensors of a network, shaped from an ArchitectureSpec.
template <typename T>
struct ParameterSet {
    std::vector<ConvBlockParams<T>> blocks;
    std::vector<DenseParams<T>> dense;

    /// Zero-filled tensors (running variance filled with 1).
    static ParameterSet shaped(const ArchitectureSpec& spec);

    /// Trainable tensors in a fixed order: conv{i}.kernel, conv{i}.bias, bn{i}.gamma, bn{i}.beta, ..., fc{j}.weight, fc{j}.bias.
    void for_each_trainable(const std::function<void(const std::string&, Tensor<T>&)>& fn);
    void for_each_trainable(const std::function<void(const std::string&, const Tensor<T>&)>& fn) const;

    /// Trainable tensors followed by bn{i}.running_mean / bn{i}.running_var.
    void for_each(const std::function<void(const std::string&, Tensor<T>&)>& fn);
    void for_each(const std::function<void(const std::string&, const Tensor<T>&)>& fn) const;

    template <typename U>
    ParameterSet<U> cast() const {
        ParameterSet<U> out;
        for (const auto& b : blocks)
            out.blocks.push_back({b.kernel.template cast<U>(), b.bias.template cast<U>(), b.gamma.template cast<U>(),
                                  b.beta.template cast<U>(), b.running_mean.template cast<U>(),
                                  b.running_var.template cast<U>()});
        for (const auto& d : dense) out.dense.push_back({d.weight.template cast<U>(), d.bias.template cast<U>()});
        return out;
    }
};

template <typename T>
struct BasicModel {
    ArchitectureSpec spec;
    ParameterSet<T> params;
    std::uint64_t seed = 0;
};

using Model = BasicModel<float>;

/// He-uniform kernels and weights, zero biases, unit gamma, zero beta.
template <typename T>
BasicModel<T> init_model(const ArchitectureSpec& spec, std::uint64_t seed);

template <typename U, typename T>
BasicModel<U> cast_model(const BasicModel<T>& model) {
    return {model.spec, model.params.template cast<U>(), model.seed};
}

enum class Mode { Train, Eval };

/// Stacks cubes into a [B, bands, frames, depth, 1] batch; the 2D variant keeps only the centre slice.
template <typename T>
Tensor<T> make_batch(const ArchitectureSpec& spec, std::span<const FeatureCube* const> cubes);

template <typename T>
struct BlockCache {
    Shape conv_shape;                  // [B, H, W, D, Cout] before pooling
    std::vector<std::uint32_t> argmax;
    BatchNormCache<T> bn;
    Tensor<T> activated;               // after ReLU
};

template <typename T>
struct ForwardCache {
    Tensor<T> input;
    std::vector<BlockCache<T>> blocks;
    std::vector<T> dropout_mask;       // empty when dropout is inactive
    Tensor<T> dropped;                 // block output after dropout
    std::vector<Tensor<T>> dense_inputs;
    Tensor<T> logits;
};

/**
 * Runs the network and returns [B, 2] class probabilities (column 1 = leak).
 * Train mode uses batch statistics and, when `rng` is given, dropout.
 * Running statistics are left untouched; see update_running_stats.
 * Throws NumericalError naming the first layer that produced a non-finite value.
 */
template <typename T>
Tensor<T> forward(const BasicModel<T>& model, const Tensor<T>& input, Mode mode, Rng* rng = nullptr,
                  ForwardCache<T>* cache = nullptr);

inline constexpr double kRunningStatMomentum = 0.9;

/// running = momentum·running + (1 − momentum)·batch, from a train-mode cache.
template <typename T>
void update_running_stats(ParameterSet<T>& params, const ForwardCache<T>& cache);

template <typename T>
struct LossResult {
    double loss = 0.0;            // cross-entropy + L2 term
    double cross_entropy = 0.0;
    ParameterSet<T> grads;        // running-stat entries unused
    Tensor<T> probabilities;
    ForwardCache<T> cache;
};

/// Mean cross-entropy plus l2_penalty·Σ‖conv kernel‖², with reverse-mode gradients.
template <typename T>
LossResult<T> loss_and_grads(const BasicModel<T>& model, const Tensor<T>& input, std::span<const std::uint8_t> labels,
                             double l2_penalty, Rng* rng = nullptr);

/// Leak probability for every cube, evaluated in batches.
std::vector<float> predict(const Model& model, std::span<const FeatureCube> cubes, std::size_t batch_size = 64);

} // namespace dasleak::nn
