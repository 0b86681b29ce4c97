#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "iid/rng.hpp"
#include "iid/tensor.hpp"
#include "iid/tensor_ops.hpp"

namespace iid {

struct NetConfig {
    int levels = 4;          // encoder/decoder depth; input must be divisible by 2^levels
    int proj_channels = 32;  // 1x1 projection width
    int conv_channels = 64;  // k x k convolution width
    int kernel_size = 5;     // odd
};

enum class RunMode { train, infer };

// One processing block: 1x1 projection + batchnorm + ReLU, then a k x k
// convolution + batchnorm + ReLU.
template <typename T>
struct LevelBlock {
    Tensor<T> proj_w, proj_b;
    Tensor<T> bn1_scale, bn1_shift;
    BatchNormState<T> bn1;
    Tensor<T> conv_w, conv_b;
    Tensor<T> bn2_scale, bn2_shift;
    BatchNormState<T> bn2;
};

// All learnable state of the decomposition network: an autoencoder whose
// encoder levels are joined to the mirrored decoder levels by channel
// concatenation, with a bottleneck block at the coarsest scale and a 1x1
// head regressing shading.
template <typename T>
struct NetworkWeightsT {
    NetConfig config;
    std::vector<LevelBlock<T>> encoder;
    LevelBlock<T> bottleneck;
    std::vector<LevelBlock<T>> decoder;  // decoder[l] runs at encoder level l's resolution
    Tensor<T> head_w, head_b;
    int format_version = 1;

    std::vector<Tensor<T>> parameters() {
        std::vector<Tensor<T>> ps;
        auto push_block = [&ps](LevelBlock<T>& b) {
            ps.push_back(b.proj_w);
            ps.push_back(b.proj_b);
            ps.push_back(b.bn1_scale);
            ps.push_back(b.bn1_shift);
            ps.push_back(b.conv_w);
            ps.push_back(b.conv_b);
            ps.push_back(b.bn2_scale);
            ps.push_back(b.bn2_shift);
        };
        for (auto& b : encoder) push_block(b);
        push_block(bottleneck);
        for (auto& b : decoder) push_block(b);
        ps.push_back(head_w);
        ps.push_back(head_b);
        return ps;
    }

    void set_bn_mode(BnMode mode) {
        for (auto& b : encoder) b.bn1.mode = b.bn2.mode = mode;
        bottleneck.bn1.mode = bottleneck.bn2.mode = mode;
        for (auto& b : decoder) b.bn1.mode = b.bn2.mode = mode;
    }

    bool all_finite() {
        for (auto& p : parameters())
            if (!p.all_finite()) return false;
        return true;
    }
};

using NetworkWeights = NetworkWeightsT<float>;

namespace detail {

template <typename T>
LevelBlock<T> build_block(int in_channels, const NetConfig& cfg, Pcg32& rng) {
    auto uniform_tensor = [&rng](std::vector<int> shape, int fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::int64_t n = 1;
        for (int d : shape) n *= d;
        std::vector<T> data(static_cast<size_t>(n));
        for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
        Tensor<T> t = Tensor<T>::from_data(std::move(shape), std::move(data), true);
        return t;
    };
    LevelBlock<T> b;
    const int p = cfg.proj_channels, f = cfg.conv_channels, k = cfg.kernel_size;
    b.proj_w = uniform_tensor({p, in_channels, 1, 1}, in_channels);
    b.proj_b = uniform_tensor({p}, in_channels);
    b.bn1_scale = Tensor<T>::filled({p}, T(1), true);
    b.bn1_shift = Tensor<T>::zeros({p}, true);
    b.bn1.init(p);
    b.conv_w = uniform_tensor({f, p, k, k}, p * k * k);
    b.conv_b = uniform_tensor({f}, p * k * k);
    b.bn2_scale = Tensor<T>::filled({f}, T(1), true);
    b.bn2_shift = Tensor<T>::zeros({f}, true);
    b.bn2.init(f);
    return b;
}

template <typename T>
Tensor<T> run_block(LevelBlock<T>& b, const Tensor<T>& x) {
    Tensor<T> h = relu(batchnorm(conv1x1(x, b.proj_w, b.proj_b), b.bn1_scale, b.bn1_shift, b.bn1));
    return relu(batchnorm(conv2d(h, b.conv_w, b.conv_b), b.bn2_scale, b.bn2_shift, b.bn2));
}

}  // namespace detail

// Deterministic initialization from a seed: fan-in-scaled uniform kernels,
// batchnorm scale 1 / shift 0.
template <typename T>
NetworkWeightsT<T> build_network_t(const NetConfig& cfg, std::uint64_t seed) {
    if (cfg.levels < 1) throw std::invalid_argument("NetConfig.levels must be >= 1");
    if (cfg.kernel_size % 2 == 0) throw std::invalid_argument("NetConfig.kernel_size must be odd");
    NetworkWeightsT<T> net;
    net.config = cfg;
    Pcg32 rng(seed, 0x6e65740aULL);
    const int f = cfg.conv_channels;
    for (int l = 0; l < cfg.levels; ++l)
        net.encoder.push_back(detail::build_block<T>(l == 0 ? 3 : f, cfg, rng));
    net.bottleneck = detail::build_block<T>(f, cfg, rng);
    for (int l = 0; l < cfg.levels; ++l)
        net.decoder.push_back(detail::build_block<T>(2 * f, cfg, rng));
    // The head starts near zero with softplus(bias) = 1: the first forward
    // emits an almost constant unit shading, so albedo begins as the input
    // image and no loss term sees a spike that would poison the optimizer's
    // second moments. The residual scale keeps gradients flowing through
    // every block from the first step.
    std::vector<T> hw(static_cast<size_t>(3) * f);
    for (auto& v : hw) v = static_cast<T>(rng.uniform(-1e-4, 1e-4));
    net.head_w = Tensor<T>::from_data({3, f, 1, 1}, std::move(hw), true);
    net.head_b = Tensor<T>::filled({3}, static_cast<T>(0.5413248546129181), true);  // softplus^-1(1)
    return net;
}

inline NetworkWeights build_network(const NetConfig& cfg, std::uint64_t seed) {
    return build_network_t<float>(cfg, seed);
}

// Decomposes a batch of images: shading is regressed through the autoencoder
// (softplus + floor keeps it strictly positive and unbounded above), albedo
// is deduced by the element-wise division and clipped into [0,1]. Wherever
// the clip is inactive, albedo * shading reproduces the input exactly up to
// rounding.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> forward_decompose(NetworkWeightsT<T>& net, const Tensor<T>& image,
                                                  RunMode mode) {
    if (image.ndim() != 4 || image.dim(1) != 3)
        throw std::invalid_argument("forward_decompose expects (N,3,H,W), got " + shape_str(image.shape()));
    const int h = image.dim(2), w = image.dim(3);
    const int multiple = 1 << net.config.levels;
    if (h % multiple != 0 || w % multiple != 0)
        throw std::invalid_argument("forward_decompose: spatial size " + std::to_string(h) + "x" +
                                    std::to_string(w) + " must be divisible by " + std::to_string(multiple));

    net.set_bn_mode(mode == RunMode::train ? BnMode::training : BnMode::inference);

    Tensor<T> x = image;
    std::vector<Tensor<T>> skips;
    for (int l = 0; l < net.config.levels; ++l) {
        x = detail::run_block(net.encoder[static_cast<size_t>(l)], x);
        skips.push_back(x);
        x = maxpool2(x);
    }
    x = detail::run_block(net.bottleneck, x);
    for (int l = net.config.levels - 1; l >= 0; --l) {
        x = upsample_bilinear2(x);
        x = concat_channels(x, skips[static_cast<size_t>(l)]);
        x = detail::run_block(net.decoder[static_cast<size_t>(l)], x);
    }
    Tensor<T> head = conv1x1(x, net.head_w, net.head_b);
    Tensor<T> shading = add(softplus(head), static_cast<T>(kDivFloor));
    Tensor<T> albedo = clip01(div(image, shading));
    return {albedo, shading};
}

// 64-bit copy of a weight set, for gradient verification.
NetworkWeightsT<double> widen(const NetworkWeights& net);

// Binary weight file: magic, version, config, then parameter and batchnorm
// blocks in fixed order as little-endian 32-bit floats. Round trip is
// bit-exact. Throws WeightsError with a distinct kind per failure mode.
void save_weights(const NetworkWeights& net, const std::filesystem::path& path);
NetworkWeights load_weights(const std::filesystem::path& path);

}  // namespace iid
