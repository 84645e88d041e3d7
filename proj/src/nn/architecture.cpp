#include "dasleak/nn/architecture.hpp"

#include "dasleak/error.hpp"

namespace dasleak::nn {

std::string to_string(Variant v) { return v == Variant::Cnn2D ? "2d" : "3d"; }

ArchitectureSpec ArchitectureSpec::table(Variant variant, std::size_t cube_depth) {
    require(cube_depth == 3 || cube_depth == 5 || cube_depth == 7 || cube_depth == 9,
            "cube depth must be one of 3, 5, 7, 9");
    ArchitectureSpec spec;
    spec.variant = variant;
    spec.cube_depth = cube_depth;
    const std::size_t channels[] = {16, 32, 64, 128};
    if (variant == Variant::Cnn3D) {
        const std::size_t second_pool_depth = cube_depth == 3 ? 1 : 2;
        const std::size_t pool_depth[] = {1, second_pool_depth, 1, 2};
        spec.input_shape = {90, 98, cube_depth};
        for (int i = 0; i < 4; ++i) spec.blocks.push_back({{3, 3, 3}, channels[i], {2, 2, pool_depth[i]}});
    } else {
        // The 2D network sees only the centre spectrogram of each cube.
        spec.input_shape = {90, 98, 1};
        for (int i = 0; i < 4; ++i) spec.blocks.push_back({{3, 3, 1}, channels[i], {2, 2, 1}});
    }
    spec.dense = {{128, 128}, {128, 64}, {64, 2}};
    spec.validate();
    return spec;
}

std::vector<LayerTrace> shape_trace(const ArchitectureSpec& spec) {
    std::vector<LayerTrace> trace;
    std::array<std::size_t, 4> shape{spec.input_shape[0], spec.input_shape[1], spec.input_shape[2], 1};
    trace.push_back({"input", shape});
    for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
        const auto& b = spec.blocks[i];
        for (auto k : b.kernel) require(k % 2 == 1, "conv kernels must have odd extent for same padding");
        shape[3] = b.out_channels;
        trace.push_back({"conv" + std::to_string(i + 1), shape});
        for (int a = 0; a < 3; ++a) {
            require(b.pool[a] >= 1, "pool window must be at least 1");
            shape[a] /= b.pool[a];
            if (shape[a] == 0)
                throw DomainError("pool" + std::to_string(i + 1) + " collapses axis " + std::to_string(a) + " to zero");
        }
        trace.push_back({"pool" + std::to_string(i + 1), shape});
    }
    trace.push_back({"gap", {1, 1, 1, shape[3]}});
    return trace;
}

void ArchitectureSpec::validate() const {
    require(!blocks.empty(), "architecture needs at least one conv block");
    require(!dense.empty(), "architecture needs at least one dense layer");
    require(dropout_rate >= 0.0f && dropout_rate < 1.0f, "dropout rate must lie in [0, 1)");
    require(cube_depth % 2 == 1, "cube depth must be odd");
    if (variant == Variant::Cnn3D)
        require(input_shape[2] == cube_depth, "3D input depth must equal the cube depth");
    else
        require(input_shape[2] == 1, "2D input depth must be 1");
    for (const auto& b : blocks) require(b.out_channels > 0, "conv blocks need output channels");
    const auto trace = shape_trace(*this);
    require(dense.front().in == trace.back().shape[3], "first dense layer must match the pooled channel count");
    for (std::size_t i = 1; i < dense.size(); ++i)
        require(dense[i].in == dense[i - 1].out, "dense layer sizes do not chain");
    require(dense.back().out == 2, "network must end in two logits");
}

ParameterCount parameter_count(const ArchitectureSpec& spec) {
    ParameterCount count;
    std::size_t in_channels = 1;
    for (const auto& b : spec.blocks) {
        count.trainable += b.kernel[0] * b.kernel[1] * b.kernel[2] * in_channels * b.out_channels + b.out_channels;
        count.trainable += 2 * b.out_channels;       // gamma, beta
        count.running_stats += 2 * b.out_channels;   // running mean, variance
        in_channels = b.out_channels;
    }
    for (const auto& d : spec.dense) count.trainable += d.in * d.out + d.out;
    return count;
}

} // namespace dasleak::nn
