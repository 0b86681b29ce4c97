#pragma once

#include <array>

#include "iid/image.hpp"
#include "iid/tensor.hpp"

namespace iid {

// Standard sRGB electro-optical transfer and its inverse. Mutual inverses on
// [0,1]; the linear segment sits below 0.04045 / 0.0031308.
template <typename T>
inline T srgb_to_linear_value(T u) {
    const double x = static_cast<double>(u);
    return static_cast<T>(x <= 0.04045 ? x / 12.92 : std::pow((x + 0.055) / 1.055, 2.4));
}

template <typename T>
inline T linear_to_srgb_value(T u) {
    const double x = static_cast<double>(u);
    return static_cast<T>(x <= 0.0031308 ? 12.92 * x : 1.055 * std::pow(x, 1.0 / 2.4) - 0.055);
}

// Applies the sRGB decoding to a whole image. Out-of-range samples are
// clamped into [0,1] first; the number of clamped samples is returned so
// callers can warn.
Image srgb_to_linear(const Image& img, long* clamped_count = nullptr);
Image linear_to_srgb(const Image& img, long* clamped_count = nullptr);

// Rec.709 / sRGB luminance weights (the Y row of the RGB->XYZ matrix).
inline double luminance(double r, double g, double b) {
    return 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
}

namespace lab {
// sRGB (linear) -> XYZ, D65 white.
inline constexpr std::array<double, 9> kRgbToXyz = {
    0.4124564, 0.3575761, 0.1804375,
    0.2126729, 0.7151522, 0.0721750,
    0.0193339, 0.1191920, 0.9503041,
};
inline constexpr double kXn = 0.95047, kYn = 1.0, kZn = 1.08883;
inline constexpr double kDelta3 = (6.0 / 29) * (6.0 / 29) * (6.0 / 29);

inline double f(double t) { return t > kDelta3 ? std::cbrt(t) : t / (3 * std::cbrt(kDelta3) * std::cbrt(kDelta3)) + 4.0 / 29; }
inline double f_prime(double t) {
    const double d2 = std::cbrt(kDelta3) * std::cbrt(kDelta3);
    return t > kDelta3 ? 1.0 / (3 * std::cbrt(t) * std::cbrt(t)) : 1.0 / (3 * d2);
}
}  // namespace lab

// CIE-Lab under D65 from linear RGB, as an autodiff op over (N,3,H,W)
// tensors. The f(t) cube root is linearized below (6/29)^3, which also keeps
// the gradient bounded near black. Luminances above the white point are
// admitted (L may exceed 100) since shading is unbounded.
template <typename T>
Tensor<T> rgb_to_lab(const Tensor<T>& rgb) {
    if (rgb.ndim() != 4 || rgb.dim(1) != 3)
        throw std::invalid_argument("rgb_to_lab expects (N,3,H,W), got " + shape_str(rgb.shape()));
    const int n = rgb.dim(0), h = rgb.dim(2), w = rgb.dim(3);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    std::vector<T> out(rgb.data().size());
    for (int s = 0; s < n; ++s) {
        const T* r = rgb.data().data() + (static_cast<std::int64_t>(s) * 3 + 0) * hw;
        const T* g = rgb.data().data() + (static_cast<std::int64_t>(s) * 3 + 1) * hw;
        const T* b = rgb.data().data() + (static_cast<std::int64_t>(s) * 3 + 2) * hw;
        T* lo = out.data() + (static_cast<std::int64_t>(s) * 3 + 0) * hw;
        T* ao = out.data() + (static_cast<std::int64_t>(s) * 3 + 1) * hw;
        T* bo = out.data() + (static_cast<std::int64_t>(s) * 3 + 2) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
            const double rr = r[i], gg = g[i], bb = b[i];
            const auto& m = lab::kRgbToXyz;
            const double fx = lab::f((m[0] * rr + m[1] * gg + m[2] * bb) / lab::kXn);
            const double fy = lab::f((m[3] * rr + m[4] * gg + m[5] * bb) / lab::kYn);
            const double fz = lab::f((m[6] * rr + m[7] * gg + m[8] * bb) / lab::kZn);
            lo[i] = static_cast<T>(116 * fy - 16);
            ao[i] = static_cast<T>(500 * (fx - fy));
            bo[i] = static_cast<T>(200 * (fy - fz));
        }
    }
    return Tensor<T>::make_op(
        rgb.shape(), std::move(out), {rgb}, [rgb, n, hw](detail::Node<T>* self) {
            if (!rgb.requires_grad()) return;
            rgb.node()->ensure_grad();
            for (int s = 0; s < n; ++s) {
                const T* r = rgb.data().data() + (static_cast<std::int64_t>(s) * 3 + 0) * hw;
                const T* g = rgb.data().data() + (static_cast<std::int64_t>(s) * 3 + 1) * hw;
                const T* b = rgb.data().data() + (static_cast<std::int64_t>(s) * 3 + 2) * hw;
                const T* gl = self->grad.data() + (static_cast<std::int64_t>(s) * 3 + 0) * hw;
                const T* ga = self->grad.data() + (static_cast<std::int64_t>(s) * 3 + 1) * hw;
                const T* gb = self->grad.data() + (static_cast<std::int64_t>(s) * 3 + 2) * hw;
                T* dr = rgb.node()->grad.data() + (static_cast<std::int64_t>(s) * 3 + 0) * hw;
                T* dg = rgb.node()->grad.data() + (static_cast<std::int64_t>(s) * 3 + 1) * hw;
                T* db = rgb.node()->grad.data() + (static_cast<std::int64_t>(s) * 3 + 2) * hw;
                const auto& m = lab::kRgbToXyz;
                for (std::int64_t i = 0; i < hw; ++i) {
                    const double rr = r[i], gg = g[i], bb = b[i];
                    const double fpx = lab::f_prime((m[0] * rr + m[1] * gg + m[2] * bb) / lab::kXn) / lab::kXn;
                    const double fpy = lab::f_prime((m[3] * rr + m[4] * gg + m[5] * bb) / lab::kYn) / lab::kYn;
                    const double fpz = lab::f_prime((m[6] * rr + m[7] * gg + m[8] * bb) / lab::kZn) / lab::kZn;
                    // dL/dfy = 116, da = 500(dfx - dfy), db = 200(dfy - dfz)
                    const double wx = 500.0 * ga[i];
                    const double wy = 116.0 * gl[i] - 500.0 * ga[i] + 200.0 * gb[i];
                    const double wz = -200.0 * gb[i];
                    dr[i] += static_cast<T>(wx * fpx * m[0] + wy * fpy * m[3] + wz * fpz * m[6]);
                    dg[i] += static_cast<T>(wx * fpx * m[1] + wy * fpy * m[4] + wz * fpz * m[7]);
                    db[i] += static_cast<T>(wx * fpx * m[2] + wy * fpy * m[5] + wz * fpz * m[8]);
                }
            }
        });
}

struct ToneMapParams {
    float key = 0.18f;   // mid-gray target, sampled from U(0.1, 0.6)
    float burn = 0.0f;   // fraction of the top luminance allowed to clip, U(0.0, 0.2)
};

// Scaled luminance L_m = (key / log-average luminance) * L_w. Exposed
// separately so the linear scaling stage can be checked on its own.
std::vector<float> reinhard_scaled_luminance(const Image& hdr, float key);

// Per-pixel display luminance L_d after the compression curve; monotone in
// the input luminance. This is the stage reinhard_tonemap scales chroma by.
std::vector<float> reinhard_display_luminance(const Image& hdr, const ToneMapParams& params);

// Global photographic tone mapping: L_d = L_m (1 + L_m / L_white^2) / (1 + L_m)
// with L_white = (1 - burn) * max(L_m). Chroma is preserved through the
// per-pixel luminance ratio; output is clamped to [0,1]. An all-black image
// is returned unchanged.
Image reinhard_tonemap(const Image& hdr, const ToneMapParams& params);

}  // namespace iid
