#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "iid/tensor.hpp"

namespace iid {

// Planar-free float image: row-major, interleaved channels, values usually in
// [0,1] for display images and unbounded for HDR/shading rasters.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> pix;

    Image() = default;
    Image(int w, int h, int c) : width(w), height(h), channels(c), pix(static_cast<size_t>(w) * h * c, 0.f) {}

    float& at(int x, int y, int c) { return pix[(static_cast<size_t>(y) * width + x) * channels + c]; }
    float at(int x, int y, int c) const { return pix[(static_cast<size_t>(y) * width + x) * channels + c]; }
    bool empty() const { return pix.empty(); }
    size_t size() const { return pix.size(); }
};

// 8-bit PNG I/O. Reading converts any color type to float gray (1 channel)
// or RGB (3 channels) in [0,1]; writing quantizes with round(v*255) after
// clamping. Throws DataError on I/O or format problems.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

// Portable float map (PF/Pf), little-endian, rows stored bottom-to-top.
Image read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const Image& img);

inline std::uint8_t quantize8(float v) {
    const float c = std::clamp(v, 0.f, 1.f);
    return static_cast<std::uint8_t>(std::lround(c * 255.f));
}

// Bridges to the autodiff tensors (single-sample NCHW).
template <typename T>
Tensor<T> image_to_tensor(const Image& img, bool requires_grad = false) {
    std::vector<T> data(img.size());
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                data[(static_cast<size_t>(c) * img.height + y) * img.width + x] = static_cast<T>(img.at(x, y, c));
    return Tensor<T>::from_data({1, img.channels, img.height, img.width}, std::move(data), requires_grad);
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t, int sample = 0) {
    if (t.ndim() != 4) throw std::invalid_argument("tensor_to_image expects NCHW, got " + shape_str(t.shape()));
    const int c = t.dim(1), h = t.dim(2), w = t.dim(3);
    Image img(w, h, c);
    const std::int64_t base = static_cast<std::int64_t>(sample) * c * h * w;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.at(x, y, ch) = static_cast<float>(t.data()[base + (static_cast<std::int64_t>(ch) * h + y) * w + x]);
    return img;
}

}  // namespace iid
