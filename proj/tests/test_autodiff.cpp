#include <doctest.h>

#include "iid/color.hpp"
#include "iid/tensor_ops.hpp"
#include "testutil.hpp"

using iid::Tensor;
using testutil::grad_check;
using testutil::random_tensor;

namespace {

// Keeps values away from a kink so central differences stay valid.
Tensor<double> away_from(Tensor<double> t, double kink, double margin) {
    for (auto& v : t.data())
        if (std::abs(v - kink) < margin) v = kink + (v < kink ? -margin : margin);
    return t;
}

Tensor<double> weighted_sum(const Tensor<double>& t, iid::Pcg32& rng) {
    // A fixed random projection makes the scalar objective sensitive to every
    // output element, unlike a plain sum whose gradient can hide sign errors.
    auto weights = testutil::random_tensor(t.shape(), rng, 0.5, 1.5);
    weights.set_requires_grad(false);
    return iid::sum(iid::mul(t, weights));
}

}  // namespace

TEST_CASE("backward of sum gives unit gradients") {
    auto x = Tensor<double>::from_data({4}, {1, 2, 3, 4}, true);
    iid::backward(iid::sum(x));
    for (double g : x.grad()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("backward of sum of squares gives 2x") {
    auto x = Tensor<double>::from_data({3}, {1.5, -2.0, 0.25}, true);
    iid::backward(iid::sum(iid::mul(x, x)));
    for (size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == doctest::Approx(2 * x.data()[i]));
}

TEST_CASE("backward rejects non-scalar roots") {
    auto x = Tensor<double>::from_data({2}, {1, 2}, true);
    auto y = iid::mul(x, 2.0);
    CHECK_THROWS_AS(iid::backward(y), std::invalid_argument);
}

TEST_CASE("gradient accumulation: reusing a tensor sums per-use gradients") {
    auto x = Tensor<double>::from_data({3}, {0.5, -1.0, 2.0}, true);
    // loss = sum(x*x) built by using x twice.
    iid::backward(iid::sum(iid::mul(x, x)));
    const auto reused = x.grad();

    // Same function with the second use replaced by a constant copy.
    auto x2 = Tensor<double>::from_data({3}, {0.5, -1.0, 2.0}, true);
    auto frozen = Tensor<double>::from_data({3}, {0.5, -1.0, 2.0});
    x2.zero_grad();
    iid::backward(iid::sum(iid::mul(x2, frozen)));
    for (size_t i = 0; i < 3; ++i) CHECK(reused[i] == doctest::Approx(2 * x2.grad()[i]));
}

TEST_CASE("conv2d gradients match finite differences") {
    iid::Pcg32 rng(31);
    auto input = random_tensor({2, 2, 4, 4}, rng);
    auto kernels = random_tensor({3, 2, 3, 3}, rng);
    auto bias = random_tensor({3}, rng);
    auto result = grad_check(
        [&] {
            iid::Pcg32 w(131);
            return weighted_sum(iid::conv2d(input, kernels, bias), w);
        },
        {input, kernels, bias});
    CHECK(result.max_err < 1e-3);
}

TEST_CASE("conv1x1 gradients match finite differences") {
    iid::Pcg32 rng(32);
    auto input = random_tensor({2, 3, 3, 3}, rng);
    auto kernels = random_tensor({2, 3, 1, 1}, rng);
    auto bias = random_tensor({2}, rng);
    auto result = grad_check(
        [&] {
            iid::Pcg32 w(132);
            return weighted_sum(iid::conv1x1(input, kernels, bias), w);
        },
        {input, kernels, bias});
    CHECK(result.max_err < 1e-3);
}

TEST_CASE("batchnorm training-mode gradients match finite differences") {
    iid::Pcg32 rng(33);
    auto input = random_tensor({3, 2, 3, 3}, rng);
    auto scale = random_tensor({2}, rng, 0.5, 1.5);
    auto shift = random_tensor({2}, rng, -0.5, 0.5);
    iid::BatchNormState<double> state;
    state.mode = iid::BnMode::training;
    auto result = grad_check(
        [&] {
            iid::Pcg32 w(133);
            return weighted_sum(iid::batchnorm(input, scale, shift, state), w);
        },
        {input, scale, shift});
    CHECK(result.max_err < 1e-3);
}

TEST_CASE("batchnorm inference-mode gradients match finite differences") {
    iid::Pcg32 rng(34);
    auto input = random_tensor({2, 2, 3, 3}, rng);
    auto scale = random_tensor({2}, rng, 0.5, 1.5);
    auto shift = random_tensor({2}, rng, -0.5, 0.5);
    iid::BatchNormState<double> state;
    state.init(2);
    state.running_mean = {0.2, -0.4};
    state.running_var = {1.5, 0.7};
    state.mode = iid::BnMode::inference;
    auto result = grad_check(
        [&] {
            iid::Pcg32 w(134);
            return weighted_sum(iid::batchnorm(input, scale, shift, state), w);
        },
        {input, scale, shift});
    CHECK(result.max_err < 1e-3);
}

TEST_CASE("relu gradients match finite differences away from the kink") {
    iid::Pcg32 rng(35);
    auto input = away_from(random_tensor({2, 2, 4, 4}, rng), 0.0, 0.05);
    auto result = grad_check(
        [&] {
            iid::Pcg32 w(135);
            return weighted_sum(iid::relu(input), w);
        },
        {input});
    CHECK(result.max_err < 1e-3);
}

TEST_CASE("softplus gradients match finite differences") {
    iid::Pcg32 rng(36);
    auto input = random_tensor({1, 3, 4, 4}, rng, -4.0, 4.0);
    auto result = grad_check(
        [&] {
            iid::Pcg32 w(136);
            return weighted_sum(iid::softplus(input), w);
        },
        {input});
    CHECK(result.max_err < 1e-3);
}

TEST_CASE("clip01 gradients match finite differences away from the boundaries") {
    iid::Pcg32 rng(37);
    auto input = away_from(away_from(random_tensor({1, 2, 4, 4}, rng, -0.5, 1.5), 0.0, 0.05), 1.0, 0.05);
    auto result = grad_check(
        [&] {
            iid::Pcg32 w(137);
            return weighted_sum(iid::clip01(input), w);
        },
        {input});
    CHECK(result.max_err < 1e-3);
}

TEST_CASE("maxpool2 gradients match finite differences") {
    iid::Pcg32 rng(38);
    auto input = random_tensor({2, 2, 4, 4}, rng);
    auto result = grad_check(
        [&] {
            iid::Pcg32 w(138);
            return weighted_sum(iid::maxpool2(input), w);
        },
        {input});
    CHECK(result.max_err < 1e-3);
}

TEST_CASE("upsample_bilinear2 gradients match finite differences") {
    iid::Pcg32 rng(39);
    auto input = random_tensor({1, 2, 3, 3}, rng);
    auto result = grad_check(
        [&] {
            iid::Pcg32 w(139);
            return weighted_sum(iid::upsample_bilinear2(input), w);
        },
        {input});
    CHECK(result.max_err < 1e-3);
}

TEST_CASE("elementwise op gradients match finite differences") {
    iid::Pcg32 rng(40);
    auto a = random_tensor({2, 2, 3, 3}, rng);
    auto b = random_tensor({2, 2, 3, 3}, rng, 0.5, 2.0);  // denominators away from the floor
    auto result = grad_check(
        [&] {
            iid::Pcg32 w(140);
            auto u = iid::mul(a, b);
            auto v = iid::div(a, b);
            auto s = iid::sub(u, v);
            auto t = iid::add(iid::mul(s, 0.7), 0.3);
            return weighted_sum(t, w);
        },
        {a, b});
    CHECK(result.max_err < 1e-3);
}

TEST_CASE("concat and narrow gradients match finite differences") {
    iid::Pcg32 rng(41);
    auto a = random_tensor({2, 2, 2, 2}, rng);
    auto b = random_tensor({2, 3, 2, 2}, rng);
    auto result = grad_check(
        [&] {
            iid::Pcg32 w(141);
            auto cat = iid::concat_channels(a, b);
            auto second = iid::narrow_batch(cat, 1, 1);
            return weighted_sum(second, w);
        },
        {a, b});
    CHECK(result.max_err < 1e-3);
}

TEST_CASE("l2_loss gradients match finite differences under a mask") {
    iid::Pcg32 rng(42);
    auto a = random_tensor({1, 3, 4, 4}, rng);
    auto b = random_tensor({1, 3, 4, 4}, rng);
    std::vector<double> mdata(16, 1.0);
    for (size_t i = 0; i < 16; i += 3) mdata[i] = 0.0;
    auto mask = Tensor<double>::from_data({1, 1, 4, 4}, mdata);
    auto result = grad_check([&] { return iid::l2_loss(a, b, mask); }, {a, b});
    CHECK(result.max_err < 1e-3);
}

TEST_CASE("fdiff_mean_square gradients match finite differences") {
    iid::Pcg32 rng(43);
    auto t = random_tensor({1, 3, 4, 4}, rng);
    std::vector<double> mdata(16, 1.0);
    mdata[5] = 0.0;
    auto mask = Tensor<double>::from_data({1, 1, 4, 4}, mdata);
    auto result = grad_check([&] { return iid::fdiff_mean_square(t, 1, 3, mask); }, {t});
    CHECK(result.max_err < 1e-3);
}

TEST_CASE("rgb_to_lab matches finite differences away from the seam") {
    iid::Pcg32 rng(44);
    auto rgb = random_tensor({1, 3, 3, 3}, rng, 0.1, 2.0);
    auto result = grad_check(
        [&] {
            iid::Pcg32 w(144);
            return weighted_sum(iid::rgb_to_lab(rgb), w);
        },
        {rgb});
    CHECK(result.max_err < 1e-3);
}
