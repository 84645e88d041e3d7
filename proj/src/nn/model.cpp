#include "dasleak/nn/model.hpp"

#include "dasleak/error.hpp"

#include <algorithm>
#include <cmath>

namespace dasleak::nn {

namespace {

template <typename T>
void check_finite(const Tensor<T>& t, const std::string& layer) {
    for (T v : t.values())
        if (!std::isfinite(v)) throw NumericalError("non-finite activation after layer " + layer);
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
    for (auto& v : t.storage()) v = v > T{0} ? v : T{0};
}

// Visitor shared by the const and non-const traversals.
template <typename Set, typename Fn>
void visit(Set& set, bool with_running, Fn&& fn) {
    for (std::size_t i = 0; i < set.blocks.size(); ++i) {
        const std::string n = std::to_string(i + 1);
        auto& b = set.blocks[i];
        fn("conv" + n + ".kernel", b.kernel);
        fn("conv" + n + ".bias", b.bias);
        fn("bn" + n + ".gamma", b.gamma);
        fn("bn" + n + ".beta", b.beta);
    }
    for (std::size_t j = 0; j < set.dense.size(); ++j) {
        const std::string n = std::to_string(j + 1);
        fn("fc" + n + ".weight", set.dense[j].weight);
        fn("fc" + n + ".bias", set.dense[j].bias);
    }
    if (!with_running) return;
    for (std::size_t i = 0; i < set.blocks.size(); ++i) {
        const std::string n = std::to_string(i + 1);
        fn("bn" + n + ".running_mean", set.blocks[i].running_mean);
        fn("bn" + n + ".running_var", set.blocks[i].running_var);
    }
}

template <typename T>
void fill_he_uniform(Tensor<T>& t, std::size_t fan_in, std::uint64_t seed) {
    Rng rng(seed);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(-limit, limit));
}

} // namespace

template <typename T>
ParameterSet<T> ParameterSet<T>::shaped(const ArchitectureSpec& spec) {
    ParameterSet<T> set;
    std::size_t cin = 1;
    for (const auto& b : spec.blocks) {
        const std::size_t c = b.out_channels;
        set.blocks.push_back({Tensor<T>({b.kernel[0], b.kernel[1], b.kernel[2], cin, c}), Tensor<T>({c}),
                              Tensor<T>({c}), Tensor<T>({c}), Tensor<T>({c}), Tensor<T>({c}, T{1})});
        cin = c;
    }
    for (const auto& d : spec.dense) set.dense.push_back({Tensor<T>({d.in, d.out}), Tensor<T>({d.out})});
    return set;
}

template <typename T>
void ParameterSet<T>::for_each_trainable(const std::function<void(const std::string&, Tensor<T>&)>& fn) {
    visit(*this, false, fn);
}
template <typename T>
void ParameterSet<T>::for_each_trainable(const std::function<void(const std::string&, const Tensor<T>&)>& fn) const {
    visit(*this, false, fn);
}
template <typename T>
void ParameterSet<T>::for_each(const std::function<void(const std::string&, Tensor<T>&)>& fn) {
    visit(*this, true, fn);
}
template <typename T>
void ParameterSet<T>::for_each(const std::function<void(const std::string&, const Tensor<T>&)>& fn) const {
    visit(*this, true, fn);
}

template <typename T>
BasicModel<T> init_model(const ArchitectureSpec& spec, std::uint64_t seed) {
    spec.validate();
    BasicModel<T> model{spec, ParameterSet<T>::shaped(spec), seed};
    std::size_t cin = 1;
    for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
        auto& b = model.params.blocks[i];
        const auto& k = spec.blocks[i].kernel;
        fill_he_uniform(b.kernel, k[0] * k[1] * k[2] * cin, derive_seed(seed, 1, i));
        b.gamma.fill(T{1});
        cin = spec.blocks[i].out_channels;
    }
    for (std::size_t j = 0; j < spec.dense.size(); ++j)
        fill_he_uniform(model.params.dense[j].weight, spec.dense[j].in, derive_seed(seed, 2, j));
    return model;
}

template <typename T>
Tensor<T> make_batch(const ArchitectureSpec& spec, std::span<const FeatureCube* const> cubes) {
    require(!cubes.empty(), "cannot build an empty batch");
    const std::size_t h = spec.input_shape[0], w = spec.input_shape[1], d = spec.input_shape[2];
    Tensor<T> batch({cubes.size(), h, w, d, 1});
    T* out = batch.data();
    for (const FeatureCube* cube : cubes) {
        if (cube->bands != h || cube->frames != w || cube->depth != spec.cube_depth)
            throw DomainError("cube " + std::to_string(cube->bands) + "x" + std::to_string(cube->frames) + "x" +
                              std::to_string(cube->depth) + " does not match the network input " +
                              std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(spec.cube_depth));
        if (d == cube->depth) {
            out = std::copy(cube->values.begin(), cube->values.end(), out);
        } else {
            const std::size_t z = cube->depth / 2;
            for (std::size_t i = 0; i < h * w; ++i) *out++ = static_cast<T>(cube->values[i * cube->depth + z]);
        }
    }
    return batch;
}

template <typename T>
Tensor<T> forward(const BasicModel<T>& model, const Tensor<T>& input, Mode mode, Rng* rng, ForwardCache<T>* cache) {
    const auto& spec = model.spec;
    if (input.rank() != 5 || input.dim(1) != spec.input_shape[0] || input.dim(2) != spec.input_shape[1] ||
        input.dim(3) != spec.input_shape[2] || input.dim(4) != 1)
        throw DomainError("network input " + shape_string(input.shape()) + " does not match the architecture");
    const std::size_t batch = input.dim(0);
    if (cache) {
        cache->input = input;
        cache->blocks.assign(spec.blocks.size(), {});
        cache->dense_inputs.clear();
        cache->dropout_mask.clear();
    }

    Tensor<T> current = input;
    AlignedVector<T> col, y;
    for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
        const auto& bs = spec.blocks[i];
        const auto& bp = model.params.blocks[i];
        const std::string n = std::to_string(i + 1);
        const VolumeShape in = volume_of(current.shape());
        const VolumeShape conv_out{in.h, in.w, in.d, bs.out_channels};
        const VolumeShape pooled = pooled_shape(conv_out, bs.pool);

        Tensor<T> pooled_batch({batch, pooled.h, pooled.w, pooled.d, pooled.c});
        std::vector<std::uint32_t> argmax(pooled_batch.size());
        y.resize(conv_out.size());
        for (std::size_t b = 0; b < batch; ++b) {
            conv_forward_sample(current.data() + b * in.size(), in, bp.kernel, bp.bias, y.data(), col);
            maxpool_forward_sample(y.data(), conv_out, bs.pool, pooled_batch.data() + b * pooled.size(),
                                   argmax.data() + b * pooled.size());
        }
        check_finite(pooled_batch, "conv" + n);

        Tensor<T> normed;
        if (mode == Mode::Train) {
            BatchNormCache<T> bn;
            normed = batchnorm_train(pooled_batch, bp.gamma, bp.beta, bn);
            if (cache) cache->blocks[i].bn = std::move(bn);
        } else {
            normed = batchnorm_eval(pooled_batch, bp.gamma, bp.beta, bp.running_mean, bp.running_var);
        }
        relu_inplace(normed);
        check_finite(normed, "bn" + n);
        current = std::move(normed);
        if (cache) {
            auto& bc = cache->blocks[i];
            bc.conv_shape = {batch, conv_out.h, conv_out.w, conv_out.d, conv_out.c};
            bc.argmax = std::move(argmax);
            bc.activated = current;
        }
    }

    if (mode == Mode::Train && rng && spec.dropout_rate > 0.0f) {
        const double rate = spec.dropout_rate;
        const T scale = static_cast<T>(1.0 / (1.0 - rate));
        std::vector<T> mask(current.size());
        for (std::size_t i = 0; i < mask.size(); ++i) {
            mask[i] = rng->uniform() < rate ? T{0} : scale;
            current[i] *= mask[i];
        }
        if (cache) cache->dropout_mask = std::move(mask);
    }
    if (cache) cache->dropped = current;

    const VolumeShape last = volume_of(current.shape());
    Tensor<T> h({batch, last.c});
    for (std::size_t b = 0; b < batch; ++b) {
        std::vector<double> acc(last.c, 0.0);
        const T* src = current.data() + b * last.size();
        for (std::size_t v = 0; v < last.voxels(); ++v)
            for (std::size_t c = 0; c < last.c; ++c) acc[c] += static_cast<double>(src[v * last.c + c]);
        for (std::size_t c = 0; c < last.c; ++c) h[b * last.c + c] = static_cast<T>(acc[c] / last.voxels());
    }

    for (std::size_t j = 0; j < spec.dense.size(); ++j) {
        if (cache) cache->dense_inputs.push_back(h);
        h = dense_forward(h, model.params.dense[j].weight, model.params.dense[j].bias);
        if (j + 1 < spec.dense.size()) relu_inplace(h);
        check_finite(h, "fc" + std::to_string(j + 1));
    }
    if (cache) cache->logits = h;
    return softmax(h);
}

template <typename T>
void update_running_stats(ParameterSet<T>& params, const ForwardCache<T>& cache) {
    require(cache.blocks.size() == params.blocks.size(), "forward cache does not match the parameters");
    const double m = kRunningStatMomentum;
    for (std::size_t i = 0; i < params.blocks.size(); ++i) {
        auto& b = params.blocks[i];
        const auto& bn = cache.blocks[i].bn;
        require(bn.mean.size() == b.running_mean.size(), "forward cache holds no batch statistics");
        for (std::size_t c = 0; c < bn.mean.size(); ++c) {
            b.running_mean[c] = static_cast<T>(m * b.running_mean[c] + (1.0 - m) * bn.mean[c]);
            b.running_var[c] = static_cast<T>(m * b.running_var[c] + (1.0 - m) * bn.var[c]);
        }
    }
}

template <typename T>
LossResult<T> loss_and_grads(const BasicModel<T>& model, const Tensor<T>& input, std::span<const std::uint8_t> labels,
                             double l2_penalty, Rng* rng) {
    const auto& spec = model.spec;
    require(labels.size() == input.dim(0), "label count does not match the batch");
    require(l2_penalty >= 0.0, "L2 penalty must be non-negative");
    for (auto l : labels) require(l <= 1, "labels must be 0 (non-leak) or 1 (leak)");

    LossResult<T> r;
    r.probabilities = forward(model, input, Mode::Train, rng, &r.cache);
    r.grads = ParameterSet<T>::shaped(spec);
    const std::size_t batch = input.dim(0);
    const std::size_t k = r.cache.logits.dim(1);

    // Cross-entropy from log-softmax of the logits, so saturated probabilities stay finite.
    double ce = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const T* z = r.cache.logits.data() + b * k;
        const double peak = static_cast<double>(*std::max_element(z, z + k));
        double total = 0.0;
        for (std::size_t i = 0; i < k; ++i) total += std::exp(static_cast<double>(z[i]) - peak);
        ce -= static_cast<double>(z[labels[b]]) - peak - std::log(total);
    }
    r.cross_entropy = ce / static_cast<double>(batch);
    double l2 = 0.0;
    for (const auto& b : model.params.blocks)
        for (T v : b.kernel.values()) l2 += static_cast<double>(v) * static_cast<double>(v);
    r.loss = r.cross_entropy + l2_penalty * l2;
    if (!std::isfinite(r.loss)) throw NumericalError("loss is not finite");

    Tensor<T> grad({batch, k});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < k; ++i)
            grad[b * k + i] = (r.probabilities[b * k + i] - (labels[b] == i ? T{1} : T{0})) / static_cast<T>(batch);

    for (std::size_t j = spec.dense.size(); j-- > 0;) {
        const Tensor<T>& x = r.cache.dense_inputs[j];
        grad = dense_backward(x, model.params.dense[j].weight, grad, r.grads.dense[j].weight, r.grads.dense[j].bias);
        if (j > 0)
            for (std::size_t i = 0; i < grad.size(); ++i)
                if (!(x[i] > T{0})) grad[i] = T{0};
    }

    const VolumeShape last = volume_of(r.cache.dropped.shape());
    Tensor<T> dact(r.cache.dropped.shape());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t v = 0; v < last.voxels(); ++v)
            for (std::size_t c = 0; c < last.c; ++c)
                dact[b * last.size() + v * last.c + c] = grad[b * last.c + c] / static_cast<T>(last.voxels());
    if (!r.cache.dropout_mask.empty())
        for (std::size_t i = 0; i < dact.size(); ++i) dact[i] *= r.cache.dropout_mask[i];

    AlignedVector<T> col, dcol, dy;
    for (std::size_t i = spec.blocks.size(); i-- > 0;) {
        const auto& bc = r.cache.blocks[i];
        for (std::size_t e = 0; e < dact.size(); ++e)
            if (!(bc.activated[e] > T{0})) dact[e] = T{0};
        Tensor<T> dpooled =
            batchnorm_backward(dact, model.params.blocks[i].gamma, bc.bn, r.grads.blocks[i].gamma, r.grads.blocks[i].beta);

        const Tensor<T>& x = i == 0 ? r.cache.input : r.cache.blocks[i - 1].activated;
        const VolumeShape in = volume_of(x.shape());
        const VolumeShape conv_out = volume_of(bc.conv_shape);
        const std::size_t pooled_size = dpooled.stride0();
        Tensor<T> dx = i == 0 ? Tensor<T>() : Tensor<T>(x.shape());
        dy.resize(conv_out.size());
        for (std::size_t b = 0; b < batch; ++b) {
            std::fill(dy.begin(), dy.end(), T{0});
            maxpool_backward_sample(dpooled.data() + b * pooled_size, pooled_size, bc.argmax.data() + b * pooled_size,
                                    dy.data());
            conv_backward_sample(x.data() + b * in.size(), in, model.params.blocks[i].kernel, dy.data(),
                                 r.grads.blocks[i].kernel, r.grads.blocks[i].bias,
                                 i == 0 ? nullptr : dx.data() + b * in.size(), col, dcol);
        }
        dact = std::move(dx);
    }

    if (l2_penalty > 0.0)
        for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
            const auto& kern = model.params.blocks[i].kernel;
            auto& g = r.grads.blocks[i].kernel;
            for (std::size_t e = 0; e < kern.size(); ++e) g[e] += static_cast<T>(2.0 * l2_penalty) * kern[e];
        }
    return r;
}

std::vector<float> predict(const Model& model, std::span<const FeatureCube> cubes, std::size_t batch_size) {
    require(batch_size > 0, "batch size must be positive");
    std::vector<float> out;
    out.reserve(cubes.size());
    std::vector<const FeatureCube*> ptrs;
    for (std::size_t start = 0; start < cubes.size(); start += batch_size) {
        const std::size_t end = std::min(cubes.size(), start + batch_size);
        ptrs.clear();
        for (std::size_t i = start; i < end; ++i) ptrs.push_back(&cubes[i]);
        const auto probs = forward(model, make_batch<float>(model.spec, ptrs), Mode::Eval);
        for (std::size_t b = 0; b < ptrs.size(); ++b) out.push_back(probs[b * 2 + 1]);
    }
    return out;
}

#define DASLEAK_INSTANTIATE_MODEL(T)                                                                                \
    template struct ParameterSet<T>;                                                                                \
    template BasicModel<T> init_model<T>(const ArchitectureSpec&, std::uint64_t);                                   \
    template Tensor<T> make_batch<T>(const ArchitectureSpec&, std::span<const FeatureCube* const>);                 \
    template Tensor<T> forward<T>(const BasicModel<T>&, const Tensor<T>&, Mode, Rng*, ForwardCache<T>*);            \
    template void update_running_stats<T>(ParameterSet<T>&, const ForwardCache<T>&);                                \
    template LossResult<T> loss_and_grads<T>(const BasicModel<T>&, const Tensor<T>&, std::span<const std::uint8_t>, \
                                             double, Rng*);

DASLEAK_INSTANTIATE_MODEL(float)
DASLEAK_INSTANTIATE_MODEL(double)

#undef DASLEAK_INSTANTIATE_MODEL

} // namespace dasleak::nn
