#pragma once

// Brute-force reference implementations used by both the unit and the
// acceptance tests. Deliberately naive.

#include "dasleak/nn/model.hpp"
#include "dasleak/rng.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

namespace oracle {

using dasleak::nn::Tensor;

// X[k] = sum_n x[n] e^{-2 pi i k n / N}, k = 0..N/2
inline std::vector<double> dft_magnitudes(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<double> mag(n / 2 + 1);
    for (std::size_t k = 0; k <= n / 2; ++k) {
        long double re = 0, im = 0;
        for (std::size_t t = 0; t < n; ++t) {
            // reduce k*t mod n first so the angle stays small
            const auto phase = static_cast<long double>((k * t) % n) / static_cast<long double>(n);
            const long double a = -2.0L * std::numbers::pi_v<long double> * phase;
            re += x[t] * std::cos(a);
            im += x[t] * std::sin(a);
        }
        mag[k] = static_cast<double>(std::sqrt(re * re + im * im));
    }
    return mag;
}

// Same-padded correlation, input [B,H,W,D,Cin], kernel [kh,kw,kd,Cin,Cout].
template <typename T>
Tensor<T> conv3d_naive(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& bias) {
    const auto B = x.dim(0), H = x.dim(1), W = x.dim(2), D = x.dim(3), C = x.dim(4);
    const auto KH = k.dim(0), KW = k.dim(1), KD = k.dim(2), F = k.dim(4);
    Tensor<T> y({B, H, W, D, F});
    auto xi = [&](std::size_t b, std::size_t i, std::size_t j, std::size_t l, std::size_t c) {
        return x[(((b * H + i) * W + j) * D + l) * C + c];
    };
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j)
                for (std::size_t l = 0; l < D; ++l)
                    for (std::size_t f = 0; f < F; ++f) {
                        double acc = bias[f];
                        for (std::size_t a = 0; a < KH; ++a)
                            for (std::size_t e = 0; e < KW; ++e)
                                for (std::size_t g = 0; g < KD; ++g) {
                                    const auto ii = static_cast<long>(i + a) - static_cast<long>(KH / 2);
                                    const auto jj = static_cast<long>(j + e) - static_cast<long>(KW / 2);
                                    const auto ll = static_cast<long>(l + g) - static_cast<long>(KD / 2);
                                    if (ii < 0 || jj < 0 || ll < 0 || ii >= long(H) || jj >= long(W) || ll >= long(D))
                                        continue;
                                    for (std::size_t c = 0; c < C; ++c)
                                        acc += double(xi(b, ii, jj, ll, c)) *
                                               double(k[(((a * KW + e) * KD + g) * C + c) * F + f]);
                                }
                        y[(((b * H + i) * W + j) * D + l) * F + f] = static_cast<T>(acc);
                    }
    return y;
}

// Small network used for gradient checking: 12x12x3 input, two 2-channel
// conv blocks, a 2->4->2 head.
inline dasleak::nn::ArchitectureSpec tiny_spec() {
    dasleak::nn::ArchitectureSpec spec;
    spec.variant = dasleak::nn::Variant::Cnn3D;
    spec.cube_depth = 3;
    spec.input_shape = {12, 12, 3};
    spec.blocks = {{{3, 3, 3}, 2, {2, 2, 1}}, {{3, 3, 3}, 2, {2, 2, 1}}};
    spec.dropout_rate = 0.0f;
    spec.dense = {{2, 4}, {4, 2}};
    return spec;
}

struct GradCheckResult {
    double worst_relative_error = 0.0;
    std::string worst_parameter;
    std::size_t checked = 0;
    std::size_t kinks_crossed = 0;   // coordinates whose +-h stencil changed a pool winner or ReLU sign
};

// Which pooling inputs won and which activations were positive.
inline std::vector<std::uint32_t> routing(const dasleak::nn::ForwardCache<double>& cache) {
    std::vector<std::uint32_t> sig;
    for (const auto& b : cache.blocks) {
        sig.insert(sig.end(), b.argmax.begin(), b.argmax.end());
        for (double v : b.activated.values()) sig.push_back(v > 0.0);
    }
    for (std::size_t i = 1; i < cache.dense_inputs.size(); ++i)
        for (double v : cache.dense_inputs[i].values()) sig.push_back(v > 0.0);
    return sig;
}

// Input for the gradient check. Max pooling and ReLU are only piecewise
// smooth, and a +-h stencil that straddles a switch measures a chord, not a
// derivative. Every 2x2 pooling window gets one dominant spike (and every
// 2x2 group of windows one dominant window), so pool winners have wide
// margins; gradient_check() counts any stencil that still changes routing.
inline Tensor<double> spiky_input(std::size_t batch, dasleak::Rng& rng) {
    Tensor<double> x({batch, 12, 12, 3, 1});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < 12; ++i)
            for (std::size_t j = 0; j < 12; ++j)
                for (std::size_t l = 0; l < 3; ++l) {
                    double v = 0.1 * rng.normal();
                    if (i % 2 == 1 && j % 2 == 1) {
                        const bool major = (i / 2) % 2 == 0 && (j / 2) % 2 == 0;
                        v += major ? rng.uniform(9.0, 14.0) : rng.uniform(2.0, 4.0);
                    }
                    x[((b * 12 + i) * 12 + j) * 3 + l] = v;
                }
    return x;
}

// Central differences on every trainable scalar of a double model.
inline GradCheckResult gradient_check(std::uint64_t seed, double h = 1e-3, double l2 = 0.003,
                                      std::size_t batch = 4) {
    using namespace dasleak::nn;
    auto model = init_model<double>(tiny_spec(), seed);
    dasleak::Rng rng(dasleak::derive_seed(seed, 99));
    // Non-trivial BN affine parameters so their gradients are exercised.
    model.params.for_each_trainable([&](const std::string&, Tensor<double>& t) {
        for (auto& v : t.values()) v += rng.uniform(-0.2, 0.2);
    });
    // positive centre taps keep each spike on top after convolution
    for (auto& blk : model.params.blocks) {
        const auto cin = blk.kernel.dim(3), cout = blk.kernel.dim(4);
        const std::size_t centre = (1 * 3 + 1) * 3 + 1;
        for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t f = 0; f < cout; ++f) blk.kernel[(centre * cin + c) * cout + f] += 1.5;
    }
    const auto input = spiky_input(batch, rng);
    std::vector<std::uint8_t> labels(batch);
    for (std::size_t i = 0; i < batch; ++i) labels[i] = static_cast<std::uint8_t>((i + 1) / 2 % 2);

    const auto analytic = loss_and_grads(model, input, labels, l2);
    const auto base_routing = routing(analytic.cache);
    std::vector<const Tensor<double>*> grads;
    analytic.grads.for_each_trainable(
        [&](const std::string&, const Tensor<double>& g) { grads.push_back(&g); });

    GradCheckResult out;
    std::size_t index = 0;
    model.params.for_each_trainable([&](const std::string& name, Tensor<double>& p) {
        const auto& g = *grads[index++];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double saved = p[i];
            p[i] = saved + h;
            const auto up = loss_and_grads(model, input, labels, l2);
            p[i] = saved - h;
            const auto down = loss_and_grads(model, input, labels, l2);
            p[i] = saved;
            if (routing(up.cache) != base_routing || routing(down.cache) != base_routing) ++out.kinks_crossed;
            const double numeric = (up.loss - down.loss) / (2 * h);
            const double scale = std::max({std::abs(numeric), std::abs(g[i]), 1e-6});
            const double rel = std::abs(numeric - g[i]) / scale;
            ++out.checked;
            if (rel > out.worst_relative_error) {
                out.worst_relative_error = rel;
                out.worst_parameter = name + "[" + std::to_string(i) + "]";
            }
        }
    });
    return out;
}

} // namespace oracle
