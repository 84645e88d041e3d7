#include "dasleak/nn/layers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>

namespace dasleak::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

struct KernelGeometry {
    std::size_t kh, kw, kd, cin, cout;
    std::size_t patch() const { return kh * kw * kd * cin; }
};

template <typename T>
KernelGeometry kernel_geometry(const Tensor<T>& kernel, std::size_t cin) {
    if (kernel.rank() != 5) throw DomainError("conv kernel must be [kh, kw, kd, Cin, Cout]");
    KernelGeometry g{kernel.dim(0), kernel.dim(1), kernel.dim(2), kernel.dim(3), kernel.dim(4)};
    if (g.cin != cin) throw DomainError("conv kernel input channels do not match the input");
    if (g.kh % 2 == 0 || g.kw % 2 == 0 || g.kd % 2 == 0) throw DomainError("same padding needs odd kernel extents");
    return g;
}

// Patch columns are ordered (a, b, e, ci), so for a fixed (a, b) the (e, ci)
// part of a patch is one contiguous run of the input row (ii, jj).
template <typename T>
void im2col(const T* x, VolumeShape in, const KernelGeometry& g, AlignedVector<T>& col) {
    const std::size_t patch = g.patch();
    col.resize(in.voxels() * patch);
    const auto ph = static_cast<std::ptrdiff_t>(g.kh / 2), pw = static_cast<std::ptrdiff_t>(g.kw / 2),
               pd = static_cast<std::ptrdiff_t>(g.kd / 2);
    const auto H = static_cast<std::ptrdiff_t>(in.h), W = static_cast<std::ptrdiff_t>(in.w),
               D = static_cast<std::ptrdiff_t>(in.d), kd = static_cast<std::ptrdiff_t>(g.kd);
    const std::size_t run = g.kd * in.c;
    T* dst = col.data();
    for (std::ptrdiff_t i = 0; i < H; ++i)
        for (std::ptrdiff_t j = 0; j < W; ++j)
            for (std::ptrdiff_t l = 0; l < D; ++l) {
                const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, pd - l);
                const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(kd, D + pd - l);
                for (std::size_t a = 0; a < g.kh; ++a) {
                    const std::ptrdiff_t ii = i + static_cast<std::ptrdiff_t>(a) - ph;
                    for (std::size_t b = 0; b < g.kw; ++b, dst += run) {
                        const std::ptrdiff_t jj = j + static_cast<std::ptrdiff_t>(b) - pw;
                        if (ii < 0 || ii >= H || jj < 0 || jj >= W) {
                            std::fill(dst, dst + run, T{0});
                            continue;
                        }
                        const auto C = static_cast<std::ptrdiff_t>(in.c);
                        const std::ptrdiff_t base = ((ii * W + jj) * D + l - pd) * C;
                        std::fill(dst, dst + lo * C, T{0});
                        std::copy(x + base + lo * C, x + base + hi * C, dst + lo * C);
                        std::fill(dst + hi * C, dst + run, T{0});
                    }
                }
            }
}

template <typename T>
void col2im(const T* col, VolumeShape in, const KernelGeometry& g, T* dx) {
    std::fill(dx, dx + in.size(), T{0});
    const auto ph = static_cast<std::ptrdiff_t>(g.kh / 2), pw = static_cast<std::ptrdiff_t>(g.kw / 2),
               pd = static_cast<std::ptrdiff_t>(g.kd / 2);
    const auto H = static_cast<std::ptrdiff_t>(in.h), W = static_cast<std::ptrdiff_t>(in.w),
               D = static_cast<std::ptrdiff_t>(in.d), kd = static_cast<std::ptrdiff_t>(g.kd);
    const auto C = static_cast<std::ptrdiff_t>(in.c);
    const std::size_t run = g.kd * in.c;
    const T* src = col;
    for (std::ptrdiff_t i = 0; i < H; ++i)
        for (std::ptrdiff_t j = 0; j < W; ++j)
            for (std::ptrdiff_t l = 0; l < D; ++l) {
                const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, pd - l);
                const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(kd, D + pd - l);
                for (std::size_t a = 0; a < g.kh; ++a) {
                    const std::ptrdiff_t ii = i + static_cast<std::ptrdiff_t>(a) - ph;
                    for (std::size_t b = 0; b < g.kw; ++b, src += run) {
                        const std::ptrdiff_t jj = j + static_cast<std::ptrdiff_t>(b) - pw;
                        if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
                        const std::ptrdiff_t base = ((ii * W + jj) * D + l - pd) * C;
                        for (std::ptrdiff_t q = lo * C; q < hi * C; ++q) dx[base + q] += src[q];
                    }
                }
            }
}

template <typename T>
void check_batch_volume(const Tensor<T>& t, const char* what) {
    if (t.rank() != 5) throw DomainError(std::string(what) + " must be [B, H, W, D, C], got " + shape_string(t.shape()));
}

} // namespace

VolumeShape volume_of(const Shape& s) {
    if (s.size() != 5) throw DomainError("expected a [B, H, W, D, C] shape, got " + shape_string(s));
    return {s[1], s[2], s[3], s[4]};
}

VolumeShape pooled_shape(VolumeShape in, Extent3 window) {
    for (auto w : window)
        if (w == 0) throw DomainError("pool window must be positive");
    VolumeShape out{in.h / window[0], in.w / window[1], in.d / window[2], in.c};
    if (out.h == 0 || out.w == 0 || out.d == 0) throw DomainError("max pool output has a zero dimension");
    return out;
}

template <typename T>
void conv_forward_sample(const T* x, VolumeShape in, const Tensor<T>& kernel, const Tensor<T>& bias, T* y,
                         AlignedVector<T>& col) {
    const auto g = kernel_geometry(kernel, in.c);
    if (bias.size() != g.cout) throw DomainError("conv bias size does not match output channels");
    im2col(x, in, g, col);
    const auto n = static_cast<Eigen::Index>(in.voxels());
    ConstMapMat<T> cols(col.data(), n, static_cast<Eigen::Index>(g.patch()));
    ConstMapMat<T> w(kernel.data(), static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.cout));
    MapMat<T> out(y, n, static_cast<Eigen::Index>(g.cout));
    out.noalias() = cols * w;
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data(), static_cast<Eigen::Index>(g.cout));
    out.rowwise() += b;
}

template <typename T>
void conv_backward_sample(const T* x, VolumeShape in, const Tensor<T>& kernel, const T* dy, Tensor<T>& dkernel,
                          Tensor<T>& dbias, T* dx, AlignedVector<T>& col, AlignedVector<T>& dcol) {
    const auto g = kernel_geometry(kernel, in.c);
    im2col(x, in, g, col);
    const auto n = static_cast<Eigen::Index>(in.voxels());
    const auto k = static_cast<Eigen::Index>(g.patch());
    const auto co = static_cast<Eigen::Index>(g.cout);
    ConstMapMat<T> cols(col.data(), n, k);
    ConstMapMat<T> grad_out(dy, n, co);
    MapMat<T> dw(dkernel.data(), k, co);
    dw.noalias() += cols.transpose() * grad_out;
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(dbias.data(), co);
    db += grad_out.colwise().sum();
    if (dx) {
        dcol.resize(col.size());
        ConstMapMat<T> w(kernel.data(), k, co);
        MapMat<T> dc(dcol.data(), n, k);
        dc.noalias() = grad_out * w.transpose();
        col2im(dcol.data(), in, g, dx);
    }
}

template <typename T>
void maxpool_forward_sample(const T* y, VolumeShape in, Extent3 window, T* out, std::uint32_t* argmax) {
    const auto o = pooled_shape(in, window);
    std::size_t idx = 0;
    for (std::size_t i = 0; i < o.h; ++i)
        for (std::size_t j = 0; j < o.w; ++j)
            for (std::size_t l = 0; l < o.d; ++l)
                for (std::size_t c = 0; c < in.c; ++c, ++idx) {
                    std::size_t best_at = 0;
                    T best = T{0};
                    bool first = true;
                    for (std::size_t a = 0; a < window[0]; ++a)
                        for (std::size_t b = 0; b < window[1]; ++b)
                            for (std::size_t e = 0; e < window[2]; ++e) {
                                const std::size_t at =
                                    (((i * window[0] + a) * in.w + j * window[1] + b) * in.d + l * window[2] + e) *
                                        in.c + c;
                                if (first || y[at] > best) {
                                    best = y[at];
                                    best_at = at;
                                    first = false;
                                }
                            }
                    out[idx] = best;
                    argmax[idx] = static_cast<std::uint32_t>(best_at);
                }
}

template <typename T>
void maxpool_backward_sample(const T* dout, std::size_t out_size, const std::uint32_t* argmax, T* dy) {
    for (std::size_t i = 0; i < out_size; ++i) dy[argmax[i]] += dout[i];
}

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias) {
    check_batch_volume(input, "conv input");
    const auto in = volume_of(input.shape());
    const auto g = kernel_geometry(kernel, in.c);
    const std::size_t batch = input.dim(0);
    Tensor<T> out({batch, in.h, in.w, in.d, g.cout});
    AlignedVector<T> col;
    for (std::size_t b = 0; b < batch; ++b)
        conv_forward_sample(input.data() + b * in.size(), in, kernel, bias, out.data() + b * in.voxels() * g.cout, col);
    return out;
}

template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& dout) {
    check_batch_volume(input, "conv input");
    const auto in = volume_of(input.shape());
    const auto g = kernel_geometry(kernel, in.c);
    ConvGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(kernel.shape()), Tensor<T>({g.cout})};
    AlignedVector<T> col, dcol;
    for (std::size_t b = 0; b < input.dim(0); ++b)
        conv_backward_sample(input.data() + b * in.size(), in, kernel, dout.data() + b * in.voxels() * g.cout,
                             grads.kernel, grads.bias, grads.input.data() + b * in.size(), col, dcol);
    return grads;
}

template <typename T>
PoolResult<T> maxpool3d_forward(const Tensor<T>& input, Extent3 window) {
    check_batch_volume(input, "pool input");
    const auto in = volume_of(input.shape());
    const auto o = pooled_shape(in, window);
    PoolResult<T> r{Tensor<T>({input.dim(0), o.h, o.w, o.d, o.c}), {}};
    r.argmax.resize(r.output.size());
    for (std::size_t b = 0; b < input.dim(0); ++b)
        maxpool_forward_sample(input.data() + b * in.size(), in, window, r.output.data() + b * o.size(),
                               r.argmax.data() + b * o.size());
    return r;
}

template <typename T>
Tensor<T> maxpool3d_backward(const Shape& input_shape, const PoolResult<T>& forward, const Tensor<T>& dout) {
    Tensor<T> dy(input_shape);
    const std::size_t in_size = dy.stride0();
    const std::size_t out_size = dout.stride0();
    for (std::size_t b = 0; b < input_shape[0]; ++b)
        maxpool_backward_sample(dout.data() + b * out_size, out_size, forward.argmax.data() + b * out_size,
                                dy.data() + b * in_size);
    return dy;
}

template <typename T>
Tensor<T> batchnorm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          BatchNormCache<T>& cache) {
    if (x.rank() < 2 || x.dim(0) < 2) throw DomainError("train-mode batch norm needs a batch of at least 2");
    const std::size_t c = x.shape().back();
    if (gamma.size() != c || beta.size() != c) throw DomainError("batch norm parameters do not match channels");
    const std::size_t rows = x.size() / c;
    std::vector<double> sum(c, 0.0), sq(c, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < c; ++k) sum[k] += static_cast<double>(x[r * c + k]);
    cache.mean.resize(c);
    for (std::size_t k = 0; k < c; ++k) cache.mean[k] = static_cast<T>(sum[k] / static_cast<double>(rows));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < c; ++k) {
            const double d = static_cast<double>(x[r * c + k]) - static_cast<double>(cache.mean[k]);
            sq[k] += d * d;
        }
    cache.var.resize(c);
    cache.inv_std.resize(c);
    for (std::size_t k = 0; k < c; ++k) {
        const double var = sq[k] / static_cast<double>(rows);
        cache.var[k] = static_cast<T>(var);
        cache.inv_std[k] = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEpsilon));
    }
    cache.normalized = Tensor<T>(x.shape());
    Tensor<T> out(x.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < c; ++k) {
            const T n = (x[r * c + k] - cache.mean[k]) * cache.inv_std[k];
            cache.normalized[r * c + k] = n;
            out[r * c + k] = gamma[k] * n + beta[k];
        }
    return out;
}

template <typename T>
Tensor<T> batchnorm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                         const Tensor<T>& running_mean, const Tensor<T>& running_var) {
    const std::size_t c = x.shape().back();
    if (gamma.size() != c || beta.size() != c || running_mean.size() != c || running_var.size() != c)
        throw DomainError("batch norm parameters do not match channels");
    std::vector<T> scale(c), shift(c);
    for (std::size_t k = 0; k < c; ++k) {
        scale[k] = static_cast<T>(static_cast<double>(gamma[k]) /
                                  std::sqrt(static_cast<double>(running_var[k]) + kBatchNormEpsilon));
        shift[k] = beta[k] - scale[k] * running_mean[k];
    }
    Tensor<T> out(x.shape());
    const std::size_t rows = x.size() / c;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < c; ++k) out[r * c + k] = scale[k] * x[r * c + k] + shift[k];
    return out;
}

template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& dout, const Tensor<T>& gamma, const BatchNormCache<T>& cache,
                             Tensor<T>& dgamma, Tensor<T>& dbeta) {
    const std::size_t c = dout.shape().back();
    const std::size_t rows = dout.size() / c;
    const auto& n = cache.normalized;
    std::vector<double> sum_dn(c, 0.0), sum_dn_n(c, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < c; ++k) {
            const double g = static_cast<double>(dout[r * c + k]);
            sum_dn[k] += g;
            sum_dn_n[k] += g * static_cast<double>(n[r * c + k]);
        }
    for (std::size_t k = 0; k < c; ++k) {
        dbeta[k] += static_cast<T>(sum_dn[k]);
        dgamma[k] += static_cast<T>(sum_dn_n[k]);
    }
    Tensor<T> dx(dout.shape());
    const double m = static_cast<double>(rows);
    for (std::size_t k = 0; k < c; ++k) {
        sum_dn[k] *= static_cast<double>(gamma[k]);
        sum_dn_n[k] *= static_cast<double>(gamma[k]);
    }
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < c; ++k) {
            const double dn = static_cast<double>(dout[r * c + k]) * static_cast<double>(gamma[k]);
            const double v = static_cast<double>(cache.inv_std[k]) / m *
                             (m * dn - sum_dn[k] - static_cast<double>(n[r * c + k]) * sum_dn_n[k]);
            dx[r * c + k] = static_cast<T>(v);
        }
    return dx;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(0) || bias.size() != weight.dim(1))
        throw DomainError("dense layer shape mismatch: input " + shape_string(x.shape()) + ", weight " +
                          shape_string(weight.shape()));
    const auto b = static_cast<Eigen::Index>(x.dim(0));
    const auto in = static_cast<Eigen::Index>(weight.dim(0));
    const auto out_dim = static_cast<Eigen::Index>(weight.dim(1));
    Tensor<T> y({x.dim(0), weight.dim(1)});
    MapMat<T> ym(y.data(), b, out_dim);
    ym.noalias() = ConstMapMat<T>(x.data(), b, in) * ConstMapMat<T>(weight.data(), in, out_dim);
    ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data(), out_dim);
    return y;
}

template <typename T>
Tensor<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dout, Tensor<T>& dweight,
                         Tensor<T>& dbias) {
    const auto b = static_cast<Eigen::Index>(x.dim(0));
    const auto in = static_cast<Eigen::Index>(weight.dim(0));
    const auto out_dim = static_cast<Eigen::Index>(weight.dim(1));
    ConstMapMat<T> xm(x.data(), b, in);
    ConstMapMat<T> dm(dout.data(), b, out_dim);
    MapMat<T>(dweight.data(), in, out_dim).noalias() += xm.transpose() * dm;
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(dbias.data(), out_dim) += dm.colwise().sum();
    Tensor<T> dx(x.shape());
    MapMat<T>(dx.data(), b, in).noalias() = dm * ConstMapMat<T>(weight.data(), in, out_dim).transpose();
    return dx;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    if (logits.rank() != 2) throw DomainError("softmax expects [B, K] logits");
    Tensor<T> p(logits.shape());
    const std::size_t k = logits.dim(1);
    for (std::size_t r = 0; r < logits.dim(0); ++r) {
        const T* z = logits.data() + r * k;
        T* out = p.data() + r * k;
        const T peak = *std::max_element(z, z + k);
        double total = 0.0;
        for (std::size_t i = 0; i < k; ++i) total += std::exp(static_cast<double>(z[i] - peak));
        for (std::size_t i = 0; i < k; ++i) out[i] = static_cast<T>(std::exp(static_cast<double>(z[i] - peak)) / total);
    }
    return p;
}

#define DASLEAK_INSTANTIATE_LAYERS(T)                                                                              \
    template void conv_forward_sample<T>(const T*, VolumeShape, const Tensor<T>&, const Tensor<T>&, T*,           \
                                         AlignedVector<T>&);                                                         \
    template void conv_backward_sample<T>(const T*, VolumeShape, const Tensor<T>&, const T*, Tensor<T>&,          \
                                          Tensor<T>&, T*, AlignedVector<T>&, AlignedVector<T>&);                       \
    template void maxpool_forward_sample<T>(const T*, VolumeShape, Extent3, T*, std::uint32_t*);                   \
    template void maxpool_backward_sample<T>(const T*, std::size_t, const std::uint32_t*, T*);                     \
    template Tensor<T> conv3d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                    \
    template ConvGrads<T> conv3d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
    template PoolResult<T> maxpool3d_forward<T>(const Tensor<T>&, Extent3);                                        \
    template Tensor<T> maxpool3d_backward<T>(const Shape&, const PoolResult<T>&, const Tensor<T>&);                \
    template Tensor<T> batchnorm_train<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BatchNormCache<T>&); \
    template Tensor<T> batchnorm_eval<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                         const Tensor<T>&);                                                        \
    template Tensor<T> batchnorm_backward<T>(const Tensor<T>&, const Tensor<T>&, const BatchNormCache<T>&,        \
                                             Tensor<T>&, Tensor<T>&);                                              \
    template Tensor<T> dense_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                     \
    template Tensor<T> dense_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&,        \
                                         Tensor<T>&);                                                              \
    template Tensor<T> softmax<T>(const Tensor<T>&);

DASLEAK_INSTANTIATE_LAYERS(float)
DASLEAK_INSTANTIATE_LAYERS(double)

#undef DASLEAK_INSTANTIATE_LAYERS

} // namespace dasleak::nn
