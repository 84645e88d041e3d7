#pragma once

#include "dasleak/nn/tensor.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace dasleak::nn {

/// One sample's activation volume, channels last.
struct VolumeShape {
    std::size_t h = 0, w = 0, d = 0, c = 0;

    std::size_t voxels() const { return h * w * d; }
    std::size_t size() const { return voxels() * c; }
    bool operator==(const VolumeShape&) const = default;
};

using Extent3 = std::array<std::size_t, 3>;

VolumeShape volume_of(const Shape& batch_shape);   // from [B, H, W, D, C]

// Per-sample kernels. `col` and `dcol` are caller-owned scratch buffers.

/// Same-padded, stride-1 convolution of one sample; kernel is [kh, kw, kd, Cin, Cout].
template <typename T>
void conv_forward_sample(const T* x, VolumeShape in, const Tensor<T>& kernel, const Tensor<T>& bias, T* y,
                         AlignedVector<T>& col);

/// Accumulates kernel/bias gradients; writes dx when non-null.
template <typename T>
void conv_backward_sample(const T* x, VolumeShape in, const Tensor<T>& kernel, const T* dy, Tensor<T>& dkernel,
                          Tensor<T>& dbias, T* dx, AlignedVector<T>& col, AlignedVector<T>& dcol);

/// Non-overlapping max pool (stride = window, trailing remainder dropped).
/// argmax receives the flat index into the input volume of each output.
template <typename T>
void maxpool_forward_sample(const T* y, VolumeShape in, Extent3 window, T* out, std::uint32_t* argmax);

/// dy must be zeroed by the caller and sized like the pooled input.
template <typename T>
void maxpool_backward_sample(const T* dout, std::size_t out_size, const std::uint32_t* argmax, T* dy);

VolumeShape pooled_shape(VolumeShape in, Extent3 window);

// Batch-level wrappers over [B, H, W, D, C] tensors.

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias);

template <typename T>
struct ConvGrads {
    Tensor<T> input, kernel, bias;
};

template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& dout);

template <typename T>
struct PoolResult {
    Tensor<T> output;
    std::vector<std::uint32_t> argmax;
};

template <typename T>
PoolResult<T> maxpool3d_forward(const Tensor<T>& input, Extent3 window);

template <typename T>
Tensor<T> maxpool3d_backward(const Shape& input_shape, const PoolResult<T>& forward, const Tensor<T>& dout);

template <typename T>
struct BatchNormCache {
    std::vector<T> mean, var, inv_std;
    Tensor<T> normalized;
};

inline constexpr double kBatchNormEpsilon = 1e-3;

/// Normalizes each channel (last axis) by statistics over all other axes.
template <typename T>
Tensor<T> batchnorm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          BatchNormCache<T>& cache);

template <typename T>
Tensor<T> batchnorm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                         const Tensor<T>& running_mean, const Tensor<T>& running_var);

template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& dout, const Tensor<T>& gamma, const BatchNormCache<T>& cache,
                             Tensor<T>& dgamma, Tensor<T>& dbeta);

/// y = x·W + b with x [B, in], W [in, out].
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dout, Tensor<T>& dweight,
                         Tensor<T>& dbias);

/// Row-wise softmax, shifted by the row maximum.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

} // namespace dasleak::nn
