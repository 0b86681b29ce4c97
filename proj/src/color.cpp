#include "iid/color.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace iid {

namespace {

Image apply_transfer(const Image& img, float (*fn)(float), long* clamped_count) {
    Image out(img.width, img.height, img.channels);
    long clamps = 0;
    for (size_t i = 0; i < img.pix.size(); ++i) {
        float v = img.pix[i];
        if (v < 0.f || v > 1.f) {
            v = std::clamp(v, 0.f, 1.f);
            ++clamps;
        }
        out.pix[i] = fn(v);
    }
    if (clamped_count)
        *clamped_count = clamps;
    else if (clamps)
        std::cerr << "warning: sRGB transfer clamped " << clamps << " out-of-range samples\n";
    return out;
}

}  // namespace

Image srgb_to_linear(const Image& img, long* clamped_count) {
    return apply_transfer(img, [](float v) { return srgb_to_linear_value(v); }, clamped_count);
}

Image linear_to_srgb(const Image& img, long* clamped_count) {
    return apply_transfer(img, [](float v) { return linear_to_srgb_value(v); }, clamped_count);
}

std::vector<float> reinhard_scaled_luminance(const Image& hdr, float key) {
    const size_t n = static_cast<size_t>(hdr.width) * hdr.height;
    std::vector<float> lum(n);
    double log_sum = 0;
    constexpr double kLogGuard = 1e-6;
    for (size_t i = 0; i < n; ++i) {
        const float l = hdr.channels == 3
                            ? static_cast<float>(luminance(hdr.pix[3 * i], hdr.pix[3 * i + 1], hdr.pix[3 * i + 2]))
                            : hdr.pix[i];
        lum[i] = l;
        log_sum += std::log(kLogGuard + l);
    }
    const double log_avg = std::exp(log_sum / static_cast<double>(n));
    const double gain = key / log_avg;
    for (auto& l : lum) l = static_cast<float>(l * gain);
    return lum;
}

std::vector<float> reinhard_display_luminance(const Image& hdr, const ToneMapParams& params) {
    std::vector<float> scaled = reinhard_scaled_luminance(hdr, params.key);
    const float max_lm = *std::max_element(scaled.begin(), scaled.end());
    if (max_lm <= 0.f) return scaled;  // all zero

    const float l_white = std::max((1.f - params.burn) * max_lm, 1e-6f);
    const float lw2 = l_white * l_white;
    for (auto& lm : scaled) lm = lm * (1.f + lm / lw2) / (1.f + lm);
    return scaled;
}

Image reinhard_tonemap(const Image& hdr, const ToneMapParams& params) {
    const size_t n = static_cast<size_t>(hdr.width) * hdr.height;
    const std::vector<float> display = reinhard_display_luminance(hdr, params);
    if (*std::max_element(display.begin(), display.end()) <= 0.f) return hdr;  // all black

    Image out(hdr.width, hdr.height, hdr.channels);
    for (size_t i = 0; i < n; ++i) {
        const float lw = hdr.channels == 3 ? static_cast<float>(luminance(hdr.pix[3 * i], hdr.pix[3 * i + 1],
                                                                          hdr.pix[3 * i + 2]))
                                           : hdr.pix[i];
        if (lw <= 0.f) continue;  // stays black
        const float ratio = display[i] / lw;
        for (int c = 0; c < hdr.channels; ++c)
            out.pix[i * hdr.channels + c] = std::clamp(hdr.pix[i * hdr.channels + c] * ratio, 0.f, 1.f);
    }
    return out;
}

}  // namespace iid
