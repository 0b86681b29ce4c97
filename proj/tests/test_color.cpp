#include <doctest.h>

#include <algorithm>

#include "iid/color.hpp"
#include "testutil.hpp"

namespace {

// Independent XYZ -> Lab reference straight from the textbook definition.
void lab_oracle(double r, double g, double b, double& L, double& A, double& B) {
    const double x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
    const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    const double z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
    auto f = [](double t) {
        const double d = 6.0 / 29.0;
        return t > d * d * d ? std::cbrt(t) : t / (3 * d * d) + 4.0 / 29.0;
    };
    L = 116 * f(y) - 16;
    A = 500 * (f(x) - f(y));
    B = 200 * (f(y) - f(z));
}

iid::Tensor<float> pixel(float r, float g, float b) {
    return iid::Tensor<float>::from_data({1, 3, 1, 1}, {r, g, b});
}

}  // namespace

TEST_CASE("sRGB transfer fixed points and the standard segment boundary") {
    CHECK(iid::srgb_to_linear_value(0.0) == doctest::Approx(0.0));
    CHECK(iid::srgb_to_linear_value(1.0) == doctest::Approx(1.0).epsilon(1e-9));
    // 0.04045 / 12.92 evaluated from the piecewise formula.
    CHECK(iid::srgb_to_linear_value(0.04045) == doctest::Approx(0.0031308).epsilon(1e-4));
}

TEST_CASE("sRGB transfer round-trips on a 1024-point grid") {
    for (int i = 0; i <= 1023; ++i) {
        const double u = i / 1023.0;
        CHECK(iid::linear_to_srgb_value(iid::srgb_to_linear_value(u)) == doctest::Approx(u).epsilon(1e-6));
        CHECK(iid::srgb_to_linear_value(iid::linear_to_srgb_value(u)) == doctest::Approx(u).epsilon(1e-6));
    }
}

TEST_CASE("srgb_to_linear clamps out-of-range samples and reports them") {
    iid::Image img(2, 1, 1);
    img.at(0, 0, 0) = -0.2f;
    img.at(1, 0, 0) = 0.5f;
    long clamped = 0;
    const iid::Image out = iid::srgb_to_linear(img, &clamped);
    CHECK(clamped == 1);
    CHECK(out.at(0, 0, 0) == doctest::Approx(0.f));
}

TEST_CASE("rgb_to_lab maps the D65 white point and black") {
    auto white = iid::rgb_to_lab(pixel(1.f, 1.f, 1.f));
    CHECK(white.data()[0] == doctest::Approx(100.f).epsilon(1e-3));
    CHECK(std::abs(white.data()[1]) < 0.5f);
    CHECK(std::abs(white.data()[2]) < 0.5f);

    auto black = iid::rgb_to_lab(pixel(0.f, 0.f, 0.f));
    CHECK(black.data()[0] == doctest::Approx(0.f).epsilon(1e-4));
    CHECK(black.data()[1] == doctest::Approx(0.f).epsilon(1e-4));
    CHECK(black.data()[2] == doctest::Approx(0.f).epsilon(1e-4));
}

TEST_CASE("rgb_to_lab matches the independent reference on pure red") {
    auto red = iid::rgb_to_lab(pixel(1.f, 0.f, 0.f));
    double L, A, B;
    lab_oracle(1, 0, 0, L, A, B);
    CHECK(red.data()[0] == doctest::Approx(L).epsilon(1e-4));
    CHECK(std::abs(red.data()[1] - A) < 0.01);
    CHECK(std::abs(red.data()[2] - B) < 0.01);
}

TEST_CASE("rgb_to_lab keeps gray pixels on the gray axis") {
    for (float v : {0.05f, 0.2f, 0.5f, 0.9f, 1.3f}) {
        auto lab = iid::rgb_to_lab(pixel(v, v, v));
        CHECK(std::abs(lab.data()[1]) < 0.5f);
        CHECK(std::abs(lab.data()[2]) < 0.5f);
    }
}

TEST_CASE("reinhard fixed point: constant image at the log-average maps to white") {
    iid::Image hdr(4, 4, 3);
    for (auto& v : hdr.pix) v = 0.37f;
    iid::ToneMapParams params;
    params.key = 0.25f;
    params.burn = 0.f;
    const iid::Image out = iid::reinhard_tonemap(hdr, params);
    for (float v : out.pix) CHECK(v == doctest::Approx(1.f).epsilon(1e-5));
}

TEST_CASE("reinhard scaled luminance is linear in the key") {
    iid::Pcg32 rng(50);
    iid::Image hdr(6, 6, 3);
    for (auto& v : hdr.pix) v = rng.uniformf(0.01f, 5.f);
    const auto full = iid::reinhard_scaled_luminance(hdr, 0.4f);
    const auto half = iid::reinhard_scaled_luminance(hdr, 0.2f);
    for (size_t i = 0; i < full.size(); ++i) CHECK(half[i] == doctest::Approx(0.5f * full[i]).epsilon(1e-6));
}

TEST_CASE("reinhard preserves the luminance ordering") {
    iid::Pcg32 rng(51);
    iid::Image hdr(8, 8, 3);
    for (auto& v : hdr.pix) v = rng.uniformf(0.f, 10.f);
    iid::ToneMapParams params;
    params.key = 0.35f;
    params.burn = 0.1f;
    const auto display = iid::reinhard_display_luminance(hdr, params);

    std::vector<std::pair<float, float>> pairs;  // (input luminance, display luminance)
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            pairs.emplace_back(
                static_cast<float>(iid::luminance(hdr.at(x, y, 0), hdr.at(x, y, 1), hdr.at(x, y, 2))),
                display[static_cast<size_t>(y) * 8 + x]);
    std::sort(pairs.begin(), pairs.end());
    for (size_t i = 1; i < pairs.size(); ++i) CHECK(pairs[i].second >= pairs[i - 1].second - 1e-6f);

    // The gray-pixel RGB output inherits the ordering (no chroma clamping).
    iid::Image gray(8, 8, 3);
    for (int i = 0; i < 64; ++i) {
        const float v = rng.uniformf(0.f, 10.f);
        gray.pix[3 * i] = gray.pix[3 * i + 1] = gray.pix[3 * i + 2] = v;
    }
    const iid::Image out = iid::reinhard_tonemap(gray, params);
    std::vector<std::pair<float, float>> gray_pairs;
    for (int i = 0; i < 64; ++i) gray_pairs.emplace_back(gray.pix[3 * i], out.pix[3 * i]);
    std::sort(gray_pairs.begin(), gray_pairs.end());
    for (size_t i = 1; i < gray_pairs.size(); ++i)
        CHECK(gray_pairs[i].second >= gray_pairs[i - 1].second - 1e-6f);
}

TEST_CASE("reinhard output stays in [0,1] and all-black passes through") {
    iid::Pcg32 rng(52);
    iid::Image hdr(8, 8, 3);
    for (auto& v : hdr.pix) v = rng.uniformf(0.f, 50.f);
    const iid::Image out = iid::reinhard_tonemap(hdr, {0.5f, 0.15f});
    for (float v : out.pix) {
        CHECK(v >= 0.f);
        CHECK(v <= 1.f);
    }

    iid::Image black(4, 4, 3);
    const iid::Image same = iid::reinhard_tonemap(black, {0.3f, 0.f});
    for (float v : same.pix) CHECK(v == 0.f);
}
