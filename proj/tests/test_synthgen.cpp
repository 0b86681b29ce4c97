#include <doctest.h>

#include <cmath>
#include <map>

#include "iid/errors.hpp"
#include "iid/synthgen.hpp"
#include "testutil.hpp"

using iid::GenParams;

TEST_CASE("gen_scene is deterministic and respects its contracts") {
    GenParams params;
    params.image_size = 32;
    const auto a = iid::gen_scene(1234, params);
    const auto b = iid::gen_scene(1234, params);
    CHECK(a.albedo.pix == b.albedo.pix);
    CHECK(a.normals.pix == b.normals.pix);
    CHECK(a.depth.pix == b.depth.pix);

    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            for (int c = 0; c < 3; ++c) {
                CHECK(a.albedo.at(x, y, c) >= 0.f);
                CHECK(a.albedo.at(x, y, c) <= 1.f);
            }
            if (std::isfinite(a.depth.at(x, y, 0))) {
                CHECK(a.depth.at(x, y, 0) > 0.f);
                const float nx = a.normals.at(x, y, 0), ny = a.normals.at(x, y, 1), nz = a.normals.at(x, y, 2);
                CHECK(std::abs(std::sqrt(nx * nx + ny * ny + nz * nz) - 1.f) < 1e-5f);
            }
        }
}

TEST_CASE("gen_scene albedos span several dominant colors across seeds") {
    GenParams params;
    params.image_size = 32;
    int seeds_with_enough_colors = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto scene = iid::gen_scene(seed, params);
        std::map<int, int> histogram;  // 4x4x4 color bins
        int valid = 0;
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                if (!std::isfinite(scene.depth.at(x, y, 0))) continue;
                ++valid;
                const int r = std::min(3, static_cast<int>(scene.albedo.at(x, y, 0) * 4));
                const int g = std::min(3, static_cast<int>(scene.albedo.at(x, y, 1) * 4));
                const int b = std::min(3, static_cast<int>(scene.albedo.at(x, y, 2) * 4));
                ++histogram[(r * 4 + g) * 4 + b];
            }
        int dominant = 0;
        for (const auto& [bin, count] : histogram)
            if (count > valid / 20) ++dominant;
        if (dominant >= 3) ++seeds_with_enough_colors;
    }
    CHECK(seeds_with_enough_colors >= 90);
}

TEST_CASE("sample_lighting stays in the half cuboid with 1-3 lights") {
    GenParams params;
    std::map<size_t, int> count_histogram;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto variant = iid::sample_lighting(seed, params);
        REQUIRE(variant.lights.size() >= 1);
        REQUIRE(variant.lights.size() <= 3);
        ++count_histogram[variant.lights.size()];
        for (const auto& light : variant.lights) {
            CHECK(light.position[0] >= iid::kLightXMin);
            CHECK(light.position[0] <= iid::kLightXMax);
            CHECK(light.position[1] >= iid::kLightYMin);
            CHECK(light.position[1] <= iid::kLightYMax);
            CHECK(light.position[2] >= iid::kLightZMin);
            CHECK(light.position[2] <= iid::kLightZMax);
            for (float i : light.intensity) CHECK(i > 0.f);
        }
    }
    // Chi-squared uniformity over {1,2,3} at 1000 draws (df=2, alpha=0.001).
    double chi2 = 0;
    for (size_t k = 1; k <= 3; ++k) {
        const double observed = count_histogram[k];
        chi2 = chi2 + (observed - 1000.0 / 3) * (observed - 1000.0 / 3) / (1000.0 / 3);
    }
    CHECK(chi2 < 13.8);

    const auto again = iid::sample_lighting(77, params);
    const auto again2 = iid::sample_lighting(77, params);
    REQUIRE(again.lights.size() == again2.lights.size());
    for (size_t i = 0; i < again.lights.size(); ++i)
        CHECK(again.lights[i].position == again2.lights[i].position);
}

TEST_CASE("render_scene: no lights means black, and it matches a per-pixel loop oracle") {
    GenParams params;
    params.image_size = 16;
    const auto scene = iid::gen_scene(5, params);
    const iid::Image dark = iid::render_scene(scene, iid::LightingVariant{});
    for (float v : dark.pix) CHECK(v == 0.f);

    const auto lighting = iid::sample_lighting(6, params);
    const iid::Image hdr = iid::render_scene(scene, lighting);
    // Independent oracle with the documented camera model.
    const float spread = 1.1547005f;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            if (!std::isfinite(scene.depth.at(x, y, 0))) {
                for (int c = 0; c < 3; ++c) CHECK(hdr.at(x, y, c) == 0.f);
                continue;
            }
            const float d = scene.depth.at(x, y, 0);
            const float px = ((x + 0.5f) / 16 - 0.5f) * spread * d;
            const float py = (0.5f - (y + 0.5f) / 16) * spread * d;
            const float pz = -d;
            for (int c = 0; c < 3; ++c) {
                double shade = 0;
                for (const auto& light : lighting.lights) {
                    const double lx = light.position[0] - px, ly = light.position[1] - py,
                                 lz = light.position[2] - pz;
                    const double dist2 = lx * lx + ly * ly + lz * lz;
                    const double ndotl = (scene.normals.at(x, y, 0) * lx + scene.normals.at(x, y, 1) * ly +
                                          scene.normals.at(x, y, 2) * lz) /
                                         std::sqrt(dist2);
                    if (ndotl > 0) shade += light.intensity[c] * ndotl / dist2;
                }
                CHECK(hdr.at(x, y, c) == doctest::Approx(scene.albedo.at(x, y, c) * shade).epsilon(1e-4));
            }
        }
}

TEST_CASE("render_scene flat frontal case is proportional to albedo") {
    GenParams params;
    params.image_size = 8;
    auto scene = iid::gen_scene(7, params);
    // Flatten: frontal normals, unit depth, no background.
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            scene.normals.at(x, y, 0) = 0;
            scene.normals.at(x, y, 1) = 0;
            scene.normals.at(x, y, 2) = 1;
            scene.depth.at(x, y, 0) = 1.f;
            for (int c = 0; c < 3; ++c) scene.albedo.at(x, y, c) = 0.25f * c + 0.25f;
        }
    iid::LightingVariant lighting;
    // A light far away on the +z axis approaches uniform frontal irradiance.
    lighting.lights.push_back({{0.f, 0.f, 1000.f}, {1.f, 1.f, 1.f}});
    const iid::Image hdr = iid::render_scene(scene, lighting);
    const float center = hdr.at(4, 4, 0) / scene.albedo.at(4, 4, 0);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c)
                CHECK(hdr.at(x, y, c) / scene.albedo.at(x, y, c) == doctest::Approx(center).epsilon(1e-2));
}

TEST_CASE("make_dataset writes a reproducible, self-consistent dataset") {
    testutil::TempDir dir("dataset");
    GenParams params;
    params.image_size = 16;
    params.n_lightings = 3;
    params.n_tonemaps = 3;
    const auto summary = iid::make_dataset(2, 2, params, 42, dir.path / "a");
    CHECK(summary.scenes == 2);
    CHECK(summary.views + summary.views_dropped == 4);
    CHECK(summary.variants_written <= 4 * 9);

    const auto views = iid::read_manifest(dir.path / "a");
    REQUIRE(!views.empty());
    for (const auto& view : views) {
        CHECK(view.variants.size() <= 9);
        const iid::Image albedo = iid::read_png(view.dir / "albedo.png");
        const iid::Image mask = iid::read_png(view.dir / "mask.png");
        for (const auto& variant : view.variants) {
            const iid::Image image = iid::read_png(view.dir / variant.image);
            const iid::Image shading = iid::read_pfm(view.dir / variant.shading);
            double mean = 0;
            for (float v : image.pix) mean += v;
            mean /= static_cast<double>(image.pix.size());
            CHECK(mean >= 20.0 / 255.0);
            // Exported triplet reconstructs on valid pixels.
            for (int y = 0; y < image.height; ++y)
                for (int x = 0; x < image.width; ++x) {
                    if (mask.at(x, y, 0) == 0.f) continue;
                    for (int c = 0; c < 3; ++c)
                        CHECK(std::abs(albedo.at(x, y, c) * shading.at(x, y, c) - image.at(x, y, c)) <=
                              2.f / 255.f);
                }
        }
    }

    // Same seed, second directory: byte-identical rasters and manifest.
    iid::make_dataset(2, 2, params, 42, dir.path / "b");
    for (const auto& view : views) {
        const auto rel = std::filesystem::relative(view.dir, dir.path / "a");
        CHECK(testutil::read_file_bytes(view.dir / "albedo.png") ==
              testutil::read_file_bytes(dir.path / "b" / rel / "albedo.png"));
        for (const auto& variant : view.variants)
            CHECK(testutil::read_file_bytes(view.dir / variant.image) ==
                  testutil::read_file_bytes(dir.path / "b" / rel / variant.image));
    }
    CHECK(testutil::read_file_bytes(dir.path / "a" / "manifest.json") ==
          testutil::read_file_bytes(dir.path / "b" / "manifest.json"));
}

TEST_CASE("make_dataset keeps the albedo bit-identical across a sequence") {
    testutil::TempDir dir("staticity");
    GenParams params;
    params.image_size = 16;
    params.n_lightings = 2;
    params.n_tonemaps = 2;
    iid::make_dataset(1, 1, params, 9, dir.path);
    const auto views = iid::read_manifest(dir.path);
    REQUIRE(views.size() == 1);
    // One albedo.png per view is the staticity guarantee; all variants of the
    // sequence reference the same file.
    CHECK(std::filesystem::exists(views[0].dir / "albedo.png"));
    const auto sequences = iid::load_sequences(dir.path);
    REQUIRE(sequences.size() == 1);
    CHECK(sequences[0].images.size() == views[0].variants.size());
    CHECK(sequences[0].mask.width == 16);
}

TEST_CASE("make_dataset rejects non-positive counts") {
    testutil::TempDir dir("badcounts");
    CHECK_THROWS_AS(iid::make_dataset(0, 2, GenParams{}, 1, dir.path), iid::UsageError);
}

TEST_CASE("views losing every variant to the intensity filter are dropped with a warning") {
    testutil::TempDir dir("alldark");
    GenParams params;
    params.image_size = 16;
    params.n_lightings = 2;
    params.n_tonemaps = 2;
    params.mean_intensity_floor = 1.1f;  // unreachable: everything is discarded
    const auto summary = iid::make_dataset(1, 2, params, 3, dir.path);
    CHECK(summary.views_dropped == 2);
    CHECK(summary.views == 0);
    CHECK(summary.variants_written == 0);
    CHECK(summary.variants_discarded == 8);
}
