#pragma once

#include <atomic>
#include <cblas.h>

#include "iid/tensor.hpp"

namespace iid {

inline constexpr double kBnEps = 1e-5;

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
                 int lda, const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
                m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
                 int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
                m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

// Counts element-wise divisions whose denominator hit the kDivFloor clamp.
// Clamping is logged rather than fatal; tests and the trainer inspect this.
inline std::atomic<long long>& div_clamp_counter() {
    static std::atomic<long long> counter{0};
    return counter;
}

namespace detail {

template <typename T>
inline void check_4d(const Tensor<T>& t, const char* what) {
    if (t.ndim() != 4)
        throw std::invalid_argument(std::string(what) + " must be 4-D NCHW, got " + shape_str(t.shape()));
}

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

// Gathers k x k neighborhoods (same zero padding) of one sample into a
// (C*K*K) x (H*W) matrix so convolution becomes a single GEMM. Rows are
// independent, so the loop parallelizes without changing any result.
template <typename T>
inline void im2col(const T* in, int channels, int height, int width, int k, T* cols) {
    const int pad = k / 2;
    const int hw = height * width;
    const int rows = channels * k * k;
    for (int r = 0; r < rows; ++r) {
        const int c = r / (k * k);
        const int ky = (r / k) % k;
        const int kx = r % k;
        T* row = cols + static_cast<std::int64_t>(r) * hw;
        for (int y = 0; y < height; ++y) {
            const int sy = y + ky - pad;
            T* dst = row + static_cast<std::int64_t>(y) * width;
            if (sy < 0 || sy >= height) {
                std::fill(dst, dst + width, T(0));
                continue;
            }
            const T* src = in + (static_cast<std::int64_t>(c) * height + sy) * width;
            const int x0 = std::max(0, pad - kx);
            const int x1 = std::min(width, width + pad - kx);
            if (x0 > 0) std::fill(dst, dst + x0, T(0));
            if (x1 > x0) std::copy(src + x0 + kx - pad, src + x1 + kx - pad, dst + x0);
            if (x1 < width) std::fill(dst + x1, dst + width, T(0));
        }
    }
}

// Scatter-add of column gradients back onto the input plane. Parallel over
// input channels: each channel's writes are disjoint.
template <typename T>
inline void col2im_add(const T* cols, int channels, int height, int width, int k, T* grad_in) {
    const int pad = k / 2;
    const int hw = height * width;
    for (int c = 0; c < channels; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = cols + ((static_cast<std::int64_t>(c) * k + ky) * k + kx) * hw;
                for (int y = 0; y < height; ++y) {
                    const int sy = y + ky - pad;
                    if (sy < 0 || sy >= height) continue;
                    T* dst = grad_in + (static_cast<std::int64_t>(c) * height + sy) * width;
                    const int x0 = std::max(0, pad - kx);
                    const int x1 = std::min(width, width + pad - kx);
                    for (int x = x0; x < x1; ++x) dst[x + kx - pad] += row[y * width + x];
                }
            }
        }
    }
}

}  // namespace detail

// 2-D convolution, stride 1, same zero padding, odd square kernels.
// input: (N, C, H, W), kernels: (O, C, K, K), bias: (O). Output (N, O, H, W).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias) {
    detail::check_4d(input, "conv2d input");
    detail::check_4d(kernels, "conv2d kernels");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int o = kernels.dim(0), k = kernels.dim(2);
    if (kernels.dim(1) != c)
        throw std::invalid_argument("conv2d: kernel input channels " + std::to_string(kernels.dim(1)) +
                                    " != input channels " + std::to_string(c));
    if (kernels.dim(2) != kernels.dim(3) || k % 2 == 0)
        throw std::invalid_argument("conv2d: kernels must be odd and square, got " + shape_str(kernels.shape()));
    if (bias.ndim() != 1 || bias.dim(0) != o)
        throw std::invalid_argument("conv2d: bias shape " + shape_str(bias.shape()) + " != [" + std::to_string(o) + "]");

    const int hw = h * w;
    const int ckk = c * k * k;
    std::vector<T> out(static_cast<size_t>(n) * o * hw);
    // Neighborhood columns for the whole batch; kept alive by the backward
    // closure so the backward GEMMs reuse them instead of regathering.
    auto cols = std::make_shared<std::vector<T>>(static_cast<size_t>(n) * ckk * hw);
    for (int s = 0; s < n; ++s) {
        T* cols_s = cols->data() + static_cast<std::int64_t>(s) * ckk * hw;
        detail::im2col(input.data().data() + static_cast<std::int64_t>(s) * c * hw, c, h, w, k, cols_s);
        gemm(false, false, o, hw, ckk, T(1), kernels.data().data(), ckk, cols_s, hw, T(0),
             out.data() + static_cast<std::int64_t>(s) * o * hw, hw);
    }
    for (int so = 0; so < n * o; ++so) {
        T* dst = out.data() + static_cast<std::int64_t>(so) * hw;
        const T b = bias.data()[so % o];
        for (int i = 0; i < hw; ++i) dst[i] += b;
    }

    return Tensor<T>::make_op(
        {n, o, h, w}, std::move(out), {input, kernels, bias},
        [input, kernels, bias, cols, n, c, h, w, o, k](detail::Node<T>* self) {
            const int hw = h * w;
            const int ckk = c * k * k;
            std::vector<T> col_grad;
            if (input.requires_grad()) col_grad.resize(static_cast<size_t>(ckk) * hw);
            if (kernels.requires_grad()) kernels.node()->ensure_grad();
            if (input.requires_grad()) input.node()->ensure_grad();
            if (bias.requires_grad()) bias.node()->ensure_grad();
            for (int s = 0; s < n; ++s) {
                const T* go = self->grad.data() + static_cast<std::int64_t>(s) * o * hw;
                const T* cols_s = cols->data() + static_cast<std::int64_t>(s) * ckk * hw;
                if (kernels.requires_grad())
                    gemm(false, true, o, ckk, hw, T(1), go, hw, cols_s, hw, T(1),
                         kernels.node()->grad.data(), ckk);
                if (input.requires_grad()) {
                    gemm(true, false, ckk, hw, o, T(1), kernels.data().data(), ckk, go, hw, T(0),
                         col_grad.data(), hw);
                    detail::col2im_add(col_grad.data(), c, h, w, k,
                                       input.node()->grad.data() + static_cast<std::int64_t>(s) * c * hw);
                }
                if (bias.requires_grad()) {
                    for (int oc = 0; oc < o; ++oc) {
                        double acc = 0;
                        const T* row = go + static_cast<std::int64_t>(oc) * hw;
                        for (int i = 0; i < hw; ++i) acc += row[i];
                        bias.node()->grad[oc] += static_cast<T>(acc);
                    }
                }
            }
        });
}

// Pointwise channel mixing: kernels (O, C, 1, 1). A per-pixel linear map,
// computed as a direct GEMM without the im2col staging buffer.
template <typename T>
Tensor<T> conv1x1(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias) {
    detail::check_4d(input, "conv1x1 input");
    detail::check_4d(kernels, "conv1x1 kernels");
    if (kernels.dim(2) != 1 || kernels.dim(3) != 1)
        throw std::invalid_argument("conv1x1: kernel spatial size must be 1x1, got " + shape_str(kernels.shape()));
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int o = kernels.dim(0);
    if (kernels.dim(1) != c)
        throw std::invalid_argument("conv1x1: kernel input channels " + std::to_string(kernels.dim(1)) +
                                    " != input channels " + std::to_string(c));
    if (bias.ndim() != 1 || bias.dim(0) != o)
        throw std::invalid_argument("conv1x1: bias shape " + shape_str(bias.shape()) + " != [" + std::to_string(o) + "]");

    const int hw = h * w;
    std::vector<T> out(static_cast<size_t>(n) * o * hw);
    for (int s = 0; s < n; ++s) {
        gemm(false, false, o, hw, c, T(1), kernels.data().data(), c,
             input.data().data() + static_cast<std::int64_t>(s) * c * hw, hw, T(0),
             out.data() + static_cast<std::int64_t>(s) * o * hw, hw);
        for (int oc = 0; oc < o; ++oc) {
            T* dst = out.data() + (static_cast<std::int64_t>(s) * o + oc) * hw;
            const T b = bias.data()[oc];
            for (int i = 0; i < hw; ++i) dst[i] += b;
        }
    }

    return Tensor<T>::make_op(
        {n, o, h, w}, std::move(out), {input, kernels, bias},
        [input, kernels, bias, n, c, h, w, o](detail::Node<T>* self) {
            const int hw = h * w;
            if (kernels.requires_grad()) kernels.node()->ensure_grad();
            if (input.requires_grad()) input.node()->ensure_grad();
            if (bias.requires_grad()) bias.node()->ensure_grad();
            for (int s = 0; s < n; ++s) {
                const T* go = self->grad.data() + static_cast<std::int64_t>(s) * o * hw;
                if (kernels.requires_grad())
                    gemm(false, true, o, c, hw, T(1), go, hw,
                         input.data().data() + static_cast<std::int64_t>(s) * c * hw, hw, T(1),
                         kernels.node()->grad.data(), c);
                if (input.requires_grad())
                    gemm(true, false, c, hw, o, T(1), kernels.data().data(), c, go, hw, T(1),
                         input.node()->grad.data() + static_cast<std::int64_t>(s) * c * hw, hw);
                if (bias.requires_grad()) {
                    for (int oc = 0; oc < o; ++oc) {
                        double acc = 0;
                        const T* row = go + static_cast<std::int64_t>(oc) * hw;
                        for (int i = 0; i < hw; ++i) acc += row[i];
                        bias.node()->grad[oc] += static_cast<T>(acc);
                    }
                }
            }
        });
}

enum class BnMode { training, inference };

template <typename T>
struct BatchNormState {
    std::vector<T> running_mean;
    std::vector<T> running_var;
    T momentum = T(0.1);
    BnMode mode = BnMode::training;

    void init(int channels) {
        running_mean.assign(static_cast<size_t>(channels), T(0));
        running_var.assign(static_cast<size_t>(channels), T(1));
    }
};

// Batch normalization over (N, H, W) per channel. Training mode normalizes by
// batch statistics and updates the running estimates; inference mode uses the
// running estimates only.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& input, const Tensor<T>& scale, const Tensor<T>& shift,
                    BatchNormState<T>& state) {
    detail::check_4d(input, "batchnorm input");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (scale.ndim() != 1 || scale.dim(0) != c || shift.ndim() != 1 || shift.dim(0) != c)
        throw std::invalid_argument("batchnorm: scale/shift must be [" + std::to_string(c) + "], got " +
                                    shape_str(scale.shape()) + " and " + shape_str(shift.shape()));
    if (state.running_mean.empty()) state.init(c);
    if (static_cast<int>(state.running_mean.size()) != c)
        throw std::invalid_argument("batchnorm: state has " + std::to_string(state.running_mean.size()) +
                                    " channels, input has " + std::to_string(c));

    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    const std::int64_t m = static_cast<std::int64_t>(n) * hw;
    const bool training = state.mode == BnMode::training;
    if (training && m < 2)
        throw std::invalid_argument("batchnorm: training mode requires batch*H*W > 1");

    std::vector<T> mean(c), inv_std(c);
    if (training) {
        for (int ch = 0; ch < c; ++ch) {
            double s1 = 0, s2 = 0;
            for (int s = 0; s < n; ++s) {
                const T* p = input.data().data() + (static_cast<std::int64_t>(s) * c + ch) * hw;
                for (std::int64_t i = 0; i < hw; ++i) {
                    s1 += p[i];
                    s2 += static_cast<double>(p[i]) * p[i];
                }
            }
            const double mu = s1 / static_cast<double>(m);
            const double var = std::max(0.0, s2 / static_cast<double>(m) - mu * mu);
            mean[ch] = static_cast<T>(mu);
            inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + kBnEps));
            state.running_mean[ch] = (T(1) - state.momentum) * state.running_mean[ch] + state.momentum * static_cast<T>(mu);
            state.running_var[ch] = (T(1) - state.momentum) * state.running_var[ch] + state.momentum * static_cast<T>(var);
        }
    } else {
        for (int ch = 0; ch < c; ++ch) {
            mean[ch] = state.running_mean[ch];
            inv_std[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(state.running_var[ch]) + kBnEps));
        }
    }

    std::vector<T> out(input.data().size());
    for (int sc = 0; sc < n * c; ++sc) {
        const int ch = sc % c;
        const T* p = input.data().data() + static_cast<std::int64_t>(sc) * hw;
        T* q = out.data() + static_cast<std::int64_t>(sc) * hw;
        const T g = scale.data()[ch], b = shift.data()[ch], mu = mean[ch], is = inv_std[ch];
        for (std::int64_t i = 0; i < hw; ++i) q[i] = g * (p[i] - mu) * is + b;
    }

    return Tensor<T>::make_op(
        {n, c, h, w}, std::move(out), {input, scale, shift},
        [input, scale, shift, mean, inv_std, n, c, h, w, m, training](detail::Node<T>* self) {
            const std::int64_t hw = static_cast<std::int64_t>(h) * w;
            if (input.requires_grad()) input.node()->ensure_grad();
            if (scale.requires_grad()) scale.node()->ensure_grad();
            if (shift.requires_grad()) shift.node()->ensure_grad();
            for (int ch = 0; ch < c; ++ch) {
                const T mu = mean[ch], is = inv_std[ch], g = scale.data()[ch];
                double sum_g = 0, sum_gx = 0;
                for (int s = 0; s < n; ++s) {
                    const T* x = input.data().data() + (static_cast<std::int64_t>(s) * c + ch) * hw;
                    const T* go = self->grad.data() + (static_cast<std::int64_t>(s) * c + ch) * hw;
                    for (std::int64_t i = 0; i < hw; ++i) {
                        sum_g += go[i];
                        sum_gx += static_cast<double>(go[i]) * ((x[i] - mu) * is);
                    }
                }
                if (shift.requires_grad()) shift.node()->grad[ch] += static_cast<T>(sum_g);
                if (scale.requires_grad()) scale.node()->grad[ch] += static_cast<T>(sum_gx);
                if (!input.requires_grad()) continue;
                const double mg = sum_g / static_cast<double>(m);
                const double mgx = sum_gx / static_cast<double>(m);
                for (int s = 0; s < n; ++s) {
                    const T* x = input.data().data() + (static_cast<std::int64_t>(s) * c + ch) * hw;
                    const T* go = self->grad.data() + (static_cast<std::int64_t>(s) * c + ch) * hw;
                    T* gi = input.node()->grad.data() + (static_cast<std::int64_t>(s) * c + ch) * hw;
                    for (std::int64_t i = 0; i < hw; ++i) {
                        const T xhat = (x[i] - mu) * is;
                        if (training)
                            gi[i] += static_cast<T>(g * is * (go[i] - mg - xhat * mgx));
                        else
                            gi[i] += g * is * go[i];
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    std::vector<T> out(input.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(input.data()[i], T(0));
    return Tensor<T>::make_op(input.shape(), std::move(out), {input}, [input](detail::Node<T>* self) {
        if (!input.requires_grad()) return;
        input.node()->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i)
            if (input.data()[i] > T(0)) input.node()->grad[i] += self->grad[i];
    });
}

// softplus(x) = log(1 + exp(x)), overflow-stable. Strictly positive output.
template <typename T>
Tensor<T> softplus(const Tensor<T>& input) {
    std::vector<T> out(input.data().size());
    for (size_t i = 0; i < out.size(); ++i) {
        const double x = input.data()[i];
        out[i] = static_cast<T>(x > 20 ? x : (x < -20 ? std::exp(x) : std::log1p(std::exp(x))));
    }
    return Tensor<T>::make_op(input.shape(), std::move(out), {input}, [input](detail::Node<T>* self) {
        if (!input.requires_grad()) return;
        input.node()->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i) {
            const double x = input.data()[i];
            input.node()->grad[i] += self->grad[i] * static_cast<T>(1.0 / (1.0 + std::exp(-x)));
        }
    });
}

// Clamp to [0, 1]; gradient is zero outside the interval.
template <typename T>
Tensor<T> clip01(const Tensor<T>& input) {
    std::vector<T> out(input.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(input.data()[i], T(0), T(1));
    return Tensor<T>::make_op(input.shape(), std::move(out), {input}, [input](detail::Node<T>* self) {
        if (!input.requires_grad()) return;
        input.node()->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i) {
            const T x = input.data()[i];
            if (x >= T(0) && x <= T(1)) input.node()->grad[i] += self->grad[i];
        }
    });
}

// 2x2 max pooling, stride 2. Backward routes the whole window gradient to the
// first maximal element in row-major order.
template <typename T>
Tensor<T> maxpool2(const Tensor<T>& input) {
    detail::check_4d(input, "maxpool2 input");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (h % 2 != 0 || w % 2 != 0)
        throw std::invalid_argument("maxpool2: spatial size must be even, got " + shape_str(input.shape()));
    const int oh = h / 2, ow = w / 2;
    std::vector<T> out(static_cast<size_t>(n) * c * oh * ow);
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
    std::int64_t oi = 0;
    for (int s = 0; s < n; ++s)
        for (int ch = 0; ch < c; ++ch) {
            const T* plane = input.data().data() + (static_cast<std::int64_t>(s) * c + ch) * h * w;
            const std::int64_t base = (static_cast<std::int64_t>(s) * c + ch) * h * w;
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x, ++oi) {
                    T best = plane[(2 * y) * w + 2 * x];
                    std::int64_t best_idx = base + (2 * y) * w + 2 * x;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::int64_t idx = (2 * y + dy) * w + 2 * x + dx;
                            if (plane[idx] > best) {
                                best = plane[idx];
                                best_idx = base + idx;
                            }
                        }
                    out[oi] = best;
                    (*argmax)[oi] = best_idx;
                }
        }
    return Tensor<T>::make_op({n, c, oh, ow}, std::move(out), {input},
                              [input, argmax](detail::Node<T>* self) {
                                  if (!input.requires_grad()) return;
                                  input.node()->ensure_grad();
                                  for (size_t i = 0; i < self->grad.size(); ++i)
                                      input.node()->grad[(*argmax)[i]] += self->grad[i];
                              });
}

namespace detail {
inline void bilinear_src(int o, int size, int& i0, int& i1, double& frac) {
    const double s = (o + 0.5) * 0.5 - 0.5;
    const double f = std::floor(s);
    frac = s - f;
    i0 = std::clamp(static_cast<int>(f), 0, size - 1);
    i1 = std::clamp(static_cast<int>(f) + 1, 0, size - 1);
}
}  // namespace detail

// Bilinear 2x upsampling, align-corners-false. Linear in the input, so the
// backward pass is the exact transpose of the interpolation weights.
template <typename T>
Tensor<T> upsample_bilinear2(const Tensor<T>& input) {
    detail::check_4d(input, "upsample_bilinear2 input");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int oh = 2 * h, ow = 2 * w;
    std::vector<T> out(static_cast<size_t>(n) * c * oh * ow);
    for (int s = 0; s < n; ++s)
        for (int ch = 0; ch < c; ++ch) {
            const T* src = input.data().data() + (static_cast<std::int64_t>(s) * c + ch) * h * w;
            T* dst = out.data() + (static_cast<std::int64_t>(s) * c + ch) * oh * ow;
            for (int y = 0; y < oh; ++y) {
                int y0, y1;
                double fy;
                detail::bilinear_src(y, h, y0, y1, fy);
                for (int x = 0; x < ow; ++x) {
                    int x0, x1;
                    double fx;
                    detail::bilinear_src(x, w, x0, x1, fx);
                    const double v = (1 - fy) * ((1 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1]) +
                                     fy * ((1 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1]);
                    dst[y * ow + x] = static_cast<T>(v);
                }
            }
        }
    return Tensor<T>::make_op(
        {n, c, oh, ow}, std::move(out), {input}, [input, n, c, h, w](detail::Node<T>* self) {
            if (!input.requires_grad()) return;
            input.node()->ensure_grad();
            const int oh = 2 * h, ow = 2 * w;
            for (int s = 0; s < n; ++s)
                for (int ch = 0; ch < c; ++ch) {
                    T* gi = input.node()->grad.data() + (static_cast<std::int64_t>(s) * c + ch) * h * w;
                    const T* go = self->grad.data() + (static_cast<std::int64_t>(s) * c + ch) * oh * ow;
                    for (int y = 0; y < oh; ++y) {
                        int y0, y1;
                        double fy;
                        detail::bilinear_src(y, h, y0, y1, fy);
                        for (int x = 0; x < ow; ++x) {
                            int x0, x1;
                            double fx;
                            detail::bilinear_src(x, w, x0, x1, fx);
                            const double g = go[y * ow + x];
                            gi[y0 * w + x0] += static_cast<T>((1 - fy) * (1 - fx) * g);
                            gi[y0 * w + x1] += static_cast<T>((1 - fy) * fx * g);
                            gi[y1 * w + x0] += static_cast<T>(fy * (1 - fx) * g);
                            gi[y1 * w + x1] += static_cast<T>(fy * fx * g);
                        }
                    }
                }
        });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return Tensor<T>::make_op(a.shape(), std::move(out), {a, b}, [a, b](detail::Node<T>* self) {
        if (a.requires_grad()) {
            a.node()->ensure_grad();
            for (size_t i = 0; i < self->grad.size(); ++i) a.node()->grad[i] += self->grad[i];
        }
        if (b.requires_grad()) {
            b.node()->ensure_grad();
            for (size_t i = 0; i < self->grad.size(); ++i) b.node()->grad[i] += self->grad[i];
        }
    });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, T constant) {
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + constant;
    return Tensor<T>::make_op(a.shape(), std::move(out), {a}, [a](detail::Node<T>* self) {
        if (!a.requires_grad()) return;
        a.node()->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i) a.node()->grad[i] += self->grad[i];
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return Tensor<T>::make_op(a.shape(), std::move(out), {a, b}, [a, b](detail::Node<T>* self) {
        if (a.requires_grad()) {
            a.node()->ensure_grad();
            for (size_t i = 0; i < self->grad.size(); ++i) a.node()->grad[i] += self->grad[i];
        }
        if (b.requires_grad()) {
            b.node()->ensure_grad();
            for (size_t i = 0; i < self->grad.size(); ++i) b.node()->grad[i] -= self->grad[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return Tensor<T>::make_op(a.shape(), std::move(out), {a, b}, [a, b](detail::Node<T>* self) {
        if (a.requires_grad()) {
            a.node()->ensure_grad();
            for (size_t i = 0; i < self->grad.size(); ++i) a.node()->grad[i] += self->grad[i] * b.data()[i];
        }
        if (b.requires_grad()) {
            b.node()->ensure_grad();
            for (size_t i = 0; i < self->grad.size(); ++i) b.node()->grad[i] += self->grad[i] * a.data()[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, T constant) {
    std::vector<T> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * constant;
    return Tensor<T>::make_op(a.shape(), std::move(out), {a}, [a, constant](detail::Node<T>* self) {
        if (!a.requires_grad()) return;
        a.node()->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i) a.node()->grad[i] += self->grad[i] * constant;
    });
}

// Element-wise division with a denominator floor: where |b| < kDivFloor the
// denominator is clamped (and counted), keeping the quotient and its
// gradients finite. Gradient w.r.t. b is zero on clamped elements.
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "div");
    const T floor = static_cast<T>(kDivFloor);
    std::vector<T> out(a.data().size());
    auto denom = std::make_shared<std::vector<T>>(a.data().size());
    long long clamped = 0;
    for (size_t i = 0; i < out.size(); ++i) {
        T d = b.data()[i];
        if (d >= T(0) && d < floor) {
            d = floor;
            ++clamped;
        } else if (d < T(0) && d > -floor) {
            d = -floor;
            ++clamped;
        }
        (*denom)[i] = d;
        out[i] = a.data()[i] / d;
    }
    if (clamped) div_clamp_counter() += clamped;
    return Tensor<T>::make_op(a.shape(), std::move(out), {a, b}, [a, b, denom](detail::Node<T>* self) {
        if (a.requires_grad()) {
            a.node()->ensure_grad();
            for (size_t i = 0; i < self->grad.size(); ++i) a.node()->grad[i] += self->grad[i] / (*denom)[i];
        }
        if (b.requires_grad()) {
            b.node()->ensure_grad();
            for (size_t i = 0; i < self->grad.size(); ++i) {
                if (b.data()[i] != (*denom)[i]) continue;  // clamped: flat in b
                const T d = (*denom)[i];
                b.node()->grad[i] -= self->grad[i] * a.data()[i] / (d * d);
            }
        }
    });
}

// Concatenate two NCHW tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_4d(a, "concat_channels a");
    detail::check_4d(b, "concat_channels b");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw std::invalid_argument("concat_channels: incompatible shapes " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    std::vector<T> out(static_cast<size_t>(n) * (ca + cb) * hw);
    for (int s = 0; s < n; ++s) {
        std::copy_n(a.data().data() + static_cast<std::int64_t>(s) * ca * hw, ca * hw,
                    out.data() + static_cast<std::int64_t>(s) * (ca + cb) * hw);
        std::copy_n(b.data().data() + static_cast<std::int64_t>(s) * cb * hw, cb * hw,
                    out.data() + static_cast<std::int64_t>(s) * (ca + cb) * hw + ca * hw);
    }
    return Tensor<T>::make_op(
        {n, ca + cb, h, w}, std::move(out), {a, b}, [a, b, n, ca, cb, hw](detail::Node<T>* self) {
            for (int s = 0; s < n; ++s) {
                const T* go = self->grad.data() + static_cast<std::int64_t>(s) * (ca + cb) * hw;
                if (a.requires_grad()) {
                    a.node()->ensure_grad();
                    T* ga = a.node()->grad.data() + static_cast<std::int64_t>(s) * ca * hw;
                    for (std::int64_t i = 0; i < ca * hw; ++i) ga[i] += go[i];
                }
                if (b.requires_grad()) {
                    b.node()->ensure_grad();
                    T* gb = b.node()->grad.data() + static_cast<std::int64_t>(s) * cb * hw;
                    for (std::int64_t i = 0; i < cb * hw; ++i) gb[i] += go[ca * hw + i];
                }
            }
        });
}

// Contiguous sub-range of the batch axis.
template <typename T>
Tensor<T> narrow_batch(const Tensor<T>& t, int start, int count) {
    detail::check_4d(t, "narrow_batch input");
    const int n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
    if (start < 0 || count <= 0 || start + count > n)
        throw std::invalid_argument("narrow_batch: range [" + std::to_string(start) + ", " +
                                    std::to_string(start + count) + ") out of batch " + std::to_string(n));
    const std::int64_t chw = static_cast<std::int64_t>(c) * h * w;
    std::vector<T> out(t.data().begin() + start * chw, t.data().begin() + (start + count) * chw);
    return Tensor<T>::make_op({count, c, h, w}, std::move(out), {t},
                              [t, start, chw](detail::Node<T>* self) {
                                  if (!t.requires_grad()) return;
                                  t.node()->ensure_grad();
                                  T* g = t.node()->grad.data() + start * chw;
                                  for (size_t i = 0; i < self->grad.size(); ++i) g[i] += self->grad[i];
                              });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& t) {
    double acc = 0;
    for (T v : t.data()) acc += v;
    return Tensor<T>::make_op({1}, {static_cast<T>(acc)}, {t}, [t](detail::Node<T>* self) {
        if (!t.requires_grad()) return;
        t.node()->ensure_grad();
        const T g = self->grad[0];
        for (size_t i = 0; i < t.node()->grad.size(); ++i) t.node()->grad[i] += g;
    });
}

namespace detail {

// Resolves an optional mask against a data tensor: either undefined (all
// valid), the same shape, or (N,1,H,W) broadcast across channels.
template <typename T>
struct MaskView {
    const Tensor<T>* mask = nullptr;
    std::int64_t hw = 0;
    int channels = 1;
    bool broadcast = false;

    MaskView(const Tensor<T>& data, const Tensor<T>& m, const char* op) {
        if (!m.defined()) return;
        mask = &m;
        if (m.shape() == data.shape()) return;
        if (data.ndim() == 4 && m.ndim() == 4 && m.dim(0) == data.dim(0) && m.dim(1) == 1 &&
            m.dim(2) == data.dim(2) && m.dim(3) == data.dim(3)) {
            broadcast = true;
            channels = data.dim(1);
            hw = static_cast<std::int64_t>(data.dim(2)) * data.dim(3);
            return;
        }
        throw std::invalid_argument(std::string(op) + ": mask shape " + shape_str(m.shape()) +
                                    " incompatible with data " + shape_str(data.shape()));
    }

    T weight(std::int64_t flat_index) const {
        if (!mask) return T(1);
        if (!broadcast) return mask->data()[flat_index];
        const std::int64_t within = flat_index % (channels * hw);
        const std::int64_t sample = flat_index / (channels * hw);
        return mask->data()[sample * hw + within % hw];
    }
};

}  // namespace detail

// Mean of squared differences over unmasked elements (sum of squares divided
// by the unmasked element count). The mean convention keeps loss weights
// independent of image resolution.
template <typename T>
Tensor<T> l2_loss(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& mask = {}) {
    detail::check_same_shape(a, b, "l2_loss");
    detail::MaskView<T> mv(a, mask, "l2_loss");
    double acc = 0, count = 0;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(a.data().size()); ++i) {
        const T m = mv.weight(i);
        if (m == T(0)) continue;
        const double d = static_cast<double>(a.data()[i]) - b.data()[i];
        acc += d * d;
        count += 1;
    }
    if (count == 0) throw std::invalid_argument("l2_loss: empty mask");
    const T inv = static_cast<T>(1.0 / count);
    return Tensor<T>::make_op(
        {1}, {static_cast<T>(acc / count)}, {a, b}, [a, b, mask, inv](detail::Node<T>* self) {
            detail::MaskView<T> mv(a, mask, "l2_loss");
            const T g = self->grad[0];
            if (a.requires_grad()) a.node()->ensure_grad();
            if (b.requires_grad()) b.node()->ensure_grad();
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(a.data().size()); ++i) {
                const T m = mv.weight(i);
                if (m == T(0)) continue;
                const T d = T(2) * (a.data()[i] - b.data()[i]) * inv * g;
                if (a.requires_grad()) a.node()->grad[i] += d;
                if (b.requires_grad()) b.node()->grad[i] -= d;
            }
        });
}

// Mean squared magnitude of the forward-difference spatial gradient over
// channels [c_begin, c_end). The gradient lives on the (H-1) x (W-1) grid
// (no wraparound, last row/column excluded); a site counts only when it and
// both forward neighbours are unmasked. A constant field scores 0 and a
// horizontal ramp of step h scores exactly h^2.
template <typename T>
Tensor<T> fdiff_mean_square(const Tensor<T>& t, int c_begin, int c_end, const Tensor<T>& mask = {}) {
    detail::check_4d(t, "fdiff_mean_square input");
    const int n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
    if (c_begin < 0 || c_end > c || c_begin >= c_end)
        throw std::invalid_argument("fdiff_mean_square: channel range [" + std::to_string(c_begin) + ", " +
                                    std::to_string(c_end) + ") invalid for " + std::to_string(c) + " channels");
    if (mask.defined() &&
        (mask.ndim() != 4 || mask.dim(0) != n || mask.dim(1) != 1 || mask.dim(2) != h || mask.dim(3) != w))
        throw std::invalid_argument("fdiff_mean_square: mask shape " + shape_str(mask.shape()) +
                                    " must be [N,1,H,W]");

    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    auto site_valid = [&](int s, int y, int x) {
        if (!mask.defined()) return true;
        const T* m = mask.data().data() + s * hw;
        return m[y * w + x] != T(0) && m[y * w + x + 1] != T(0) && m[(y + 1) * w + x] != T(0);
    };
    double acc = 0;
    std::int64_t count = 0;
    for (int s = 0; s < n; ++s)
        for (int ch = c_begin; ch < c_end; ++ch) {
            const T* p = t.data().data() + (static_cast<std::int64_t>(s) * c + ch) * hw;
            for (int y = 0; y + 1 < h; ++y)
                for (int x = 0; x + 1 < w; ++x) {
                    if (!site_valid(s, y, x)) continue;
                    const double dx = static_cast<double>(p[y * w + x + 1]) - p[y * w + x];
                    const double dy = static_cast<double>(p[(y + 1) * w + x]) - p[y * w + x];
                    acc += dx * dx + dy * dy;
                    ++count;
                }
        }
    const T value = count ? static_cast<T>(acc / static_cast<double>(count)) : T(0);
    return Tensor<T>::make_op(
        {1}, {value}, {t}, [t, mask, c_begin, c_end, n, c, h, w, hw, count](detail::Node<T>* self) {
            if (!t.requires_grad() || count == 0) return;
            t.node()->ensure_grad();
            auto site_valid = [&](int s, int y, int x) {
                if (!mask.defined()) return true;
                const T* m = mask.data().data() + s * hw;
                return m[y * w + x] != T(0) && m[y * w + x + 1] != T(0) && m[(y + 1) * w + x] != T(0);
            };
            const T scale = static_cast<T>(2.0 / static_cast<double>(count)) * self->grad[0];
            for (int s = 0; s < n; ++s)
                for (int ch = c_begin; ch < c_end; ++ch) {
                    const T* p = t.data().data() + (static_cast<std::int64_t>(s) * c + ch) * hw;
                    T* g = t.node()->grad.data() + (static_cast<std::int64_t>(s) * c + ch) * hw;
                    for (int y = 0; y + 1 < h; ++y)
                        for (int x = 0; x + 1 < w; ++x) {
                            if (!site_valid(s, y, x)) continue;
                            const T dx = (p[y * w + x + 1] - p[y * w + x]) * scale;
                            const T dy = (p[(y + 1) * w + x] - p[y * w + x]) * scale;
                            g[y * w + x + 1] += dx;
                            g[(y + 1) * w + x] += dy;
                            g[y * w + x] -= dx + dy;
                        }
                }
        });
}

}  // namespace iid
