#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iid/color.hpp"
#include "iid/image.hpp"
#include "iid/trainer.hpp"

namespace iid {

// A static scene as seen from one viewpoint: piecewise-textured albedo, a
// smooth heightfield's normals, and positive depths with infinite-depth
// background marks.
struct Scene {
    Image albedo;   // 3 channels in [0,1]
    Image normals;  // 3 channels, unit vectors, +z towards the camera
    Image depth;    // 1 channel, +inf marks background
    std::uint64_t seed = 0;
};

struct PointLight {
    std::array<float, 3> position{};   // camera frame; camera at origin looking down -z
    std::array<float, 3> intensity{};  // RGB, positive
};

struct LightingVariant {
    std::vector<PointLight> lights;  // 1 to 3
};

// Sampling cuboid for point lights (camera frame): a half cuboid of extent
// 3 x 1.5 x 3 in front of the camera.
inline constexpr float kLightXMin = -1.5f, kLightXMax = 1.5f;
inline constexpr float kLightYMin = 0.0f, kLightYMax = 1.5f;
inline constexpr float kLightZMin = -3.0f, kLightZMax = 0.0f;

struct GenParams {
    int image_size = 64;
    int n_lightings = 5;
    int n_tonemaps = 5;
    int min_regions = 4;
    int max_regions = 12;
    float infinite_depth_fraction = 0.08f;
    float light_intensity_min = 0.5f;   // log-uniform range for light power
    float light_intensity_max = 8.0f;
    float mean_intensity_floor = 20.f / 255.f;  // variants darker than this are discarded
};

// Deterministic from the seed: 4..12 flat or noise-textured polygonal albedo
// regions over a base color, normals from a smooth random heightfield, and a
// configurable fraction of infinite-depth background pixels.
Scene gen_scene(std::uint64_t seed, const GenParams& params);

// 1-3 point lights uniform in the half cuboid, log-uniform power with a mild
// random chroma tint.
LightingVariant sample_lighting(std::uint64_t seed, const GenParams& params);

// Lambertian local shading: per pixel, sum over lights of
// intensity * max(0, n.l) / d^2, times albedo. Linear HDR output, unbounded;
// background pixels render black.
Image render_scene(const Scene& scene, const LightingVariant& lighting);

struct DatasetSummary {
    int scenes = 0;
    int views = 0;
    int variants_written = 0;
    int variants_discarded = 0;
    int views_dropped = 0;
};

// Renders n_scenes x views_per_scene sequences, each under n_lightings
// lighting variants crossed with n_tonemaps tone-map draws. Variants whose
// tone-mapped mean intensity falls below the floor are discarded; a view
// losing every variant is dropped with a warning. Writes, per view: the
// variant images (8-bit PNG), one shared albedo.png and mask.png, and float
// PFM shading rasters derived from the quantized images, plus a JSON
// manifest at the root. Byte-for-byte reproducible from the seed.
DatasetSummary make_dataset(int n_scenes, int views_per_scene, const GenParams& params,
                            std::uint64_t seed, const std::filesystem::path& out_dir);

// Manifest index for consumers (trainer, eval).
struct VariantEntry {
    int lighting_id = 0;
    int tonemap_id = 0;
    std::string image;    // path relative to the view directory
    std::string shading;  // PFM, relative to the view directory
};

struct ViewEntry {
    std::string scene;
    std::string view;
    std::filesystem::path dir;  // absolute view directory
    std::vector<VariantEntry> variants;
};

std::vector<ViewEntry> read_manifest(const std::filesystem::path& dataset_dir);

// Loads every sequence's images and mask into memory for training.
std::vector<SequenceImages> load_sequences(const std::filesystem::path& dataset_dir);

}  // namespace iid
