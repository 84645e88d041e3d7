#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace dasleak::nn {

enum class Variant : std::uint8_t { Cnn2D = 2, Cnn3D = 3 };

std::string to_string(Variant v);

/// Conv (same padding, stride 1) -> max-pool -> batch norm -> ReLU.
struct ConvBlockSpec {
    std::array<std::size_t, 3> kernel{3, 3, 3};
    std::size_t out_channels = 16;
    std::array<std::size_t, 3> pool{2, 2, 1};

    bool operator==(const ConvBlockSpec&) const = default;
};

struct DenseSpec {
    std::size_t in = 0;
    std::size_t out = 0;

    bool operator==(const DenseSpec&) const = default;
};

/**
 * Network layout: conv blocks, dropout on the last block output, global
 * average pooling, then dense layers (ReLU between them) and a softmax over
 * the final two logits. Input is (bands, frames, depth) with one channel.
 */
struct ArchitectureSpec {
    Variant variant = Variant::Cnn3D;
    std::size_t cube_depth = 5;                         // Z of the feature cubes consumed
    std::array<std::size_t, 3> input_shape{90, 98, 5};  // as seen by the first conv
    std::vector<ConvBlockSpec> blocks;
    float dropout_rate = 0.3f;
    std::vector<DenseSpec> dense;

    bool operator==(const ArchitectureSpec&) const = default;

    /// Throws DomainError on inconsistent layer sizes or a pooled dimension of zero.
    void validate() const;

    /// The four-block 2D or 3D network for cube depth Z ∈ {3, 5, 7, 9}.
    static ArchitectureSpec table(Variant variant, std::size_t cube_depth);
};

struct LayerTrace {
    std::string name;
    std::array<std::size_t, 4> shape;   // bands, frames, depth, channels
};

/// Activation shapes after every conv and pool stage; throws on a zero dimension.
std::vector<LayerTrace> shape_trace(const ArchitectureSpec& spec);

struct ParameterCount {
    std::size_t trainable = 0;
    std::size_t running_stats = 0;
};

ParameterCount parameter_count(const ArchitectureSpec& spec);

} // namespace dasleak::nn
