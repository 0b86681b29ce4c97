#include "iid/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <nlohmann/json.hpp>

#include "iid/errors.hpp"

namespace iid {

namespace {

using json = nlohmann::json;

// Smooth value noise: a low-resolution random grid interpolated with a
// smoothstep-weighted bilinear kernel (C1 across cell boundaries).
struct SmoothField {
    int grid = 0;
    std::vector<float> values;

    SmoothField(Pcg32& rng, int grid_size) : grid(grid_size), values(static_cast<size_t>(grid) * grid) {
        for (auto& v : values) v = rng.next_float();
    }

    float sample(float u, float v) const {  // u, v in [0,1]
        const float gx = u * (grid - 1), gy = v * (grid - 1);
        const int x0 = std::min(static_cast<int>(gx), grid - 2);
        const int y0 = std::min(static_cast<int>(gy), grid - 2);
        const float fx = gx - x0, fy = gy - y0;
        auto smooth = [](float t) { return t * t * (3.f - 2.f * t); };
        const float sx = smooth(fx), sy = smooth(fy);
        const float a = values[static_cast<size_t>(y0) * grid + x0];
        const float b = values[static_cast<size_t>(y0) * grid + x0 + 1];
        const float c = values[static_cast<size_t>(y0 + 1) * grid + x0];
        const float d = values[static_cast<size_t>(y0 + 1) * grid + x0 + 1];
        return (1 - sy) * ((1 - sx) * a + sx * b) + sy * ((1 - sx) * c + sx * d);
    }
};

struct Polygon {
    std::vector<std::pair<float, float>> vertices;

    bool contains(float px, float py) const {  // even-odd crossing rule
        bool inside = false;
        const size_t n = vertices.size();
        for (size_t i = 0, j = n - 1; i < n; j = i++) {
            const auto& [xi, yi] = vertices[i];
            const auto& [xj, yj] = vertices[j];
            if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi) inside = !inside;
        }
        return inside;
    }
};

Polygon random_polygon(Pcg32& rng, int size) {
    Polygon poly;
    const float cx = rng.uniformf(0.f, static_cast<float>(size));
    const float cy = rng.uniformf(0.f, static_cast<float>(size));
    const float radius = rng.uniformf(0.15f, 0.45f) * static_cast<float>(size);
    const int nv = 3 + static_cast<int>(rng.bounded(6));  // 3..8 vertices
    for (int k = 0; k < nv; ++k) {
        const float angle = (k + rng.uniformf(0.f, 0.6f)) * 2.f * 3.14159265f / nv;
        const float r = radius * rng.uniformf(0.6f, 1.f);
        poly.vertices.emplace_back(cx + r * std::cos(angle), cy + r * std::sin(angle));
    }
    return poly;
}

std::array<float, 3> random_albedo_color(Pcg32& rng) {
    // Saturated-ish colors away from black; one dominant channel.
    std::array<float, 3> c;
    for (auto& v : c) v = rng.uniformf(0.08f, 0.9f);
    c[rng.bounded(3)] = rng.uniformf(0.5f, 1.f);
    return c;
}

// Camera: pinhole at the origin looking down -z, 60 degree vertical FOV.
constexpr float kCameraSpread = 1.1547005f;  // 2*tan(fov/2)

void pixel_direction(int x, int y, int size, float& dx, float& dy) {
    dx = ((x + 0.5f) / size - 0.5f) * kCameraSpread;
    dy = (0.5f - (y + 0.5f) / size) * kCameraSpread;
}

std::string two_digits(int v) {
    std::string s = std::to_string(v);
    return s.size() < 2 ? "0" + s : s;
}

}  // namespace

Scene gen_scene(std::uint64_t seed, const GenParams& params) {
    const int size = params.image_size;
    Scene scene;
    scene.seed = seed;
    scene.albedo = Image(size, size, 3);
    scene.normals = Image(size, size, 3);
    scene.depth = Image(size, size, 1);

    Pcg32 rng(seed, 0x7363656eULL);

    // Albedo: base color plus 4..12 polygonal regions, flat or noise-textured.
    const auto base = random_albedo_color(rng);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c) scene.albedo.at(x, y, c) = base[c];

    const int regions = params.min_regions +
                        static_cast<int>(rng.bounded(static_cast<std::uint32_t>(params.max_regions - params.min_regions + 1)));
    for (int r = 0; r < regions; ++r) {
        const Polygon poly = random_polygon(rng, size);
        const auto color = random_albedo_color(rng);
        const bool textured = rng.next_float() < 0.5f;
        SmoothField tex(rng, 5 + static_cast<int>(rng.bounded(4)));
        const float tex_amp = textured ? rng.uniformf(0.08f, 0.2f) : 0.f;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                if (!poly.contains(x + 0.5f, y + 0.5f)) continue;
                const float mod = tex_amp * (tex.sample((x + 0.5f) / size, (y + 0.5f) / size) - 0.5f) * 2.f;
                for (int c = 0; c < 3; ++c)
                    scene.albedo.at(x, y, c) = std::clamp(color[c] + mod, 0.05f, 1.f);
            }
    }

    // Geometry: a smooth random heightfield; normals from central differences.
    SmoothField height(rng, 4 + static_cast<int>(rng.bounded(5)));
    const float amplitude = rng.uniformf(0.2f, 0.6f);
    std::vector<float> h(static_cast<size_t>(size) * size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            h[static_cast<size_t>(y) * size + x] =
                amplitude * height.sample((x + 0.5f) / size, (y + 0.5f) / size);

    const float base_depth = 2.0f;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            scene.depth.at(x, y, 0) = base_depth + h[static_cast<size_t>(y) * size + x];

    const float texel = kCameraSpread * base_depth / static_cast<float>(size);  // world units per pixel
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const int xm = std::max(0, x - 1), xp = std::min(size - 1, x + 1);
            const int ym = std::max(0, y - 1), yp = std::min(size - 1, y + 1);
            const float dhdx = (h[static_cast<size_t>(y) * size + xp] - h[static_cast<size_t>(y) * size + xm]) /
                               (texel * (xp - xm));
            const float dhdy = (h[static_cast<size_t>(yp) * size + x] - h[static_cast<size_t>(ym) * size + x]) /
                               (texel * (yp - ym));
            // Height grows towards the camera (+z), so the surface normal
            // tilts against the height gradient.
            float nx = dhdx, ny = -dhdy, nz = 1.f;
            const float len = std::sqrt(nx * nx + ny * ny + nz * nz);
            scene.normals.at(x, y, 0) = nx / len;
            scene.normals.at(x, y, 1) = ny / len;
            scene.normals.at(x, y, 2) = nz / len;
        }

    // Background: mark the requested fraction of pixels infinite-depth via a
    // quantile threshold on a separate smooth field.
    if (params.infinite_depth_fraction > 0.f) {
        SmoothField bg(rng, 5);
        std::vector<float> field(static_cast<size_t>(size) * size);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                field[static_cast<size_t>(y) * size + x] = bg.sample((x + 0.5f) / size, (y + 0.5f) / size);
        std::vector<float> sorted = field;
        std::sort(sorted.begin(), sorted.end());
        const size_t cut = static_cast<size_t>((1.f - params.infinite_depth_fraction) * sorted.size());
        const float threshold = sorted[std::min(cut, sorted.size() - 1)];
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                if (field[static_cast<size_t>(y) * size + x] >= threshold) {
                    scene.depth.at(x, y, 0) = std::numeric_limits<float>::infinity();
                    for (int c = 0; c < 3; ++c) scene.albedo.at(x, y, c) = 0.f;
                }
    }
    return scene;
}

LightingVariant sample_lighting(std::uint64_t seed, const GenParams& params) {
    Pcg32 rng(seed, 0x6c69676874ULL);
    LightingVariant variant;
    const int count = 1 + static_cast<int>(rng.bounded(3));
    for (int i = 0; i < count; ++i) {
        PointLight light;
        light.position = {rng.uniformf(kLightXMin, kLightXMax), rng.uniformf(kLightYMin, kLightYMax),
                          rng.uniformf(kLightZMin, kLightZMax)};
        const float power = std::exp(rng.uniformf(std::log(params.light_intensity_min),
                                                  std::log(params.light_intensity_max)));
        for (int c = 0; c < 3; ++c) light.intensity[c] = power * rng.uniformf(0.8f, 1.2f);
        variant.lights.push_back(light);
    }
    return variant;
}

Image render_scene(const Scene& scene, const LightingVariant& lighting) {
    const int size = scene.albedo.width;
    Image hdr(size, size, 3);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const float depth = scene.depth.at(x, y, 0);
            if (!std::isfinite(depth)) continue;  // background stays black
            float dx, dy;
            pixel_direction(x, y, size, dx, dy);
            const float px = dx * depth, py = dy * depth, pz = -depth;
            const float nx = scene.normals.at(x, y, 0);
            const float ny = scene.normals.at(x, y, 1);
            const float nz = scene.normals.at(x, y, 2);
            float sr = 0, sg = 0, sb = 0;
            for (const auto& light : lighting.lights) {
                const float lx = light.position[0] - px;
                const float ly = light.position[1] - py;
                const float lz = light.position[2] - pz;
                const float d2 = lx * lx + ly * ly + lz * lz;
                const float d = std::sqrt(d2);
                const float ndotl = (nx * lx + ny * ly + nz * lz) / d;
                if (ndotl <= 0.f) continue;
                const float f = ndotl / d2;
                sr += light.intensity[0] * f;
                sg += light.intensity[1] * f;
                sb += light.intensity[2] * f;
            }
            hdr.at(x, y, 0) = scene.albedo.at(x, y, 0) * sr;
            hdr.at(x, y, 1) = scene.albedo.at(x, y, 1) * sg;
            hdr.at(x, y, 2) = scene.albedo.at(x, y, 2) * sb;
        }
    return hdr;
}

DatasetSummary make_dataset(int n_scenes, int views_per_scene, const GenParams& params,
                            std::uint64_t seed, const std::filesystem::path& out_dir) {
    if (n_scenes < 1 || views_per_scene < 1)
        throw UsageError("make_dataset: scene and view counts must be positive");
    std::filesystem::create_directories(out_dir);

    DatasetSummary summary;
    json manifest;
    manifest["seed"] = seed;
    manifest["params"] = {{"image_size", params.image_size},
                          {"n_lightings", params.n_lightings},
                          {"n_tonemaps", params.n_tonemaps},
                          {"min_regions", params.min_regions},
                          {"max_regions", params.max_regions},
                          {"infinite_depth_fraction", params.infinite_depth_fraction},
                          {"light_intensity_min", params.light_intensity_min},
                          {"light_intensity_max", params.light_intensity_max},
                          {"mean_intensity_floor", params.mean_intensity_floor}};
    manifest["scenes"] = json::array();

    for (int si = 0; si < n_scenes; ++si) {
        json scene_entry;
        scene_entry["name"] = "scene_" + std::string(si < 10 ? "00" : (si < 100 ? "0" : "")) + std::to_string(si);
        scene_entry["views"] = json::array();
        for (int vi = 0; vi < views_per_scene; ++vi) {
            const std::uint64_t view_seed = mix_seed(seed, (static_cast<std::uint64_t>(si) << 20) + vi);
            const Scene scene = gen_scene(view_seed, params);

            // Quantized albedo is the sequence ground truth; shading is
            // derived from the quantized rasters so the exported triplet
            // reconstructs exactly.
            Image albedo_q(scene.albedo.width, scene.albedo.height, 3);
            for (size_t i = 0; i < scene.albedo.pix.size(); ++i)
                albedo_q.pix[i] = quantize8(scene.albedo.pix[i]) / 255.f;

            Image mask(scene.albedo.width, scene.albedo.height, 1);
            for (int y = 0; y < mask.height; ++y)
                for (int x = 0; x < mask.width; ++x) {
                    const bool finite = std::isfinite(scene.depth.at(x, y, 0));
                    const bool lit = albedo_q.at(x, y, 0) > 0.f && albedo_q.at(x, y, 1) > 0.f &&
                                     albedo_q.at(x, y, 2) > 0.f;
                    mask.at(x, y, 0) = finite && lit ? 1.f : 0.f;
                }

            std::vector<LightingVariant> lightings;
            for (int li = 0; li < params.n_lightings; ++li)
                lightings.push_back(sample_lighting(mix_seed(view_seed, 1000 + li), params));
            std::vector<ToneMapParams> tonemaps;
            for (int ti = 0; ti < params.n_tonemaps; ++ti) {
                Pcg32 trng(mix_seed(view_seed, 2000 + ti), 0x746f6e65ULL);
                ToneMapParams tp;
                tp.key = trng.uniformf(0.1f, 0.6f);
                tp.burn = trng.uniformf(0.0f, 0.2f);
                tonemaps.push_back(tp);
            }

            json view_entry;
            const std::string view_name =
                "view_" + std::string(vi < 10 ? "00" : (vi < 100 ? "0" : "")) + std::to_string(vi);
            view_entry["name"] = view_name;
            view_entry["seed"] = view_seed;
            view_entry["variants"] = json::array();
            view_entry["discarded"] = json::array();

            struct Pending {
                int li, ti;
                Image image, shading;
                float mean;
            };
            std::vector<Pending> kept;
            for (int li = 0; li < params.n_lightings; ++li) {
                const Image hdr = render_scene(scene, lightings[static_cast<size_t>(li)]);
                for (int ti = 0; ti < params.n_tonemaps; ++ti) {
                    Image tone = reinhard_tonemap(hdr, tonemaps[static_cast<size_t>(ti)]);
                    // Quantize first; everything downstream sees the 8-bit image.
                    for (auto& v : tone.pix) v = quantize8(v) / 255.f;
                    double mean = 0;
                    for (float v : tone.pix) mean += v;
                    mean /= static_cast<double>(tone.pix.size());
                    if (mean < params.mean_intensity_floor) {
                        ++summary.variants_discarded;
                        view_entry["discarded"].push_back(
                            {{"lighting", li}, {"tonemap", ti}, {"mean_intensity", mean}});
                        continue;
                    }
                    Image shading(tone.width, tone.height, 3);
                    for (int y = 0; y < tone.height; ++y)
                        for (int x = 0; x < tone.width; ++x)
                            for (int c = 0; c < 3; ++c)
                                shading.at(x, y, c) = mask.at(x, y, 0) != 0.f
                                                          ? tone.at(x, y, c) / albedo_q.at(x, y, c)
                                                          : 0.f;
                    kept.push_back({li, ti, std::move(tone), std::move(shading), static_cast<float>(mean)});
                }
            }

            if (kept.empty()) {
                std::cerr << "warning: view " << view_name << " of scene " << si
                          << " lost every variant to the intensity filter; dropping view\n";
                ++summary.views_dropped;
                continue;
            }

            const auto view_dir = out_dir / scene_entry["name"].get<std::string>() / view_name;
            std::filesystem::create_directories(view_dir);
            write_png(view_dir / "albedo.png", albedo_q);
            write_png(view_dir / "mask.png", mask);
            for (const auto& p : kept) {
                const std::string stem = "variant_" + two_digits(p.li) + "_" + two_digits(p.ti);
                write_png(view_dir / (stem + ".png"), p.image);
                write_pfm(view_dir / ("shading_" + two_digits(p.li) + "_" + two_digits(p.ti) + ".pfm"),
                          p.shading);
                view_entry["variants"].push_back({{"lighting", p.li},
                                                  {"tonemap", p.ti},
                                                  {"image", stem + ".png"},
                                                  {"shading", "shading_" + two_digits(p.li) + "_" +
                                                                  two_digits(p.ti) + ".pfm"},
                                                  {"mean_intensity", p.mean}});
                ++summary.variants_written;
            }
            scene_entry["views"].push_back(view_entry);
            ++summary.views;
        }
        manifest["scenes"].push_back(scene_entry);
        ++summary.scenes;
    }

    std::ofstream out(out_dir / "manifest.json");
    if (!out) throw DataError("cannot write manifest: " + (out_dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
    return summary;
}

std::vector<ViewEntry> read_manifest(const std::filesystem::path& dataset_dir) {
    const auto manifest_path = dataset_dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw DataError("dataset manifest not found: " + manifest_path.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    std::vector<ViewEntry> views;
    for (const auto& scene : manifest.at("scenes")) {
        const std::string scene_name = scene.at("name");
        for (const auto& view : scene.at("views")) {
            ViewEntry entry;
            entry.scene = scene_name;
            entry.view = view.at("name");
            entry.dir = dataset_dir / scene_name / entry.view;
            for (const auto& variant : view.at("variants")) {
                VariantEntry ve;
                ve.lighting_id = variant.at("lighting");
                ve.tonemap_id = variant.at("tonemap");
                ve.image = variant.at("image");
                ve.shading = variant.at("shading");
                entry.variants.push_back(ve);
            }
            views.push_back(std::move(entry));
        }
    }
    return views;
}

std::vector<SequenceImages> load_sequences(const std::filesystem::path& dataset_dir) {
    std::vector<SequenceImages> sequences;
    for (const auto& view : read_manifest(dataset_dir)) {
        SequenceImages seq;
        seq.id = view.scene + "/" + view.view;
        seq.mask = read_png(view.dir / "mask.png");
        for (const auto& variant : view.variants) seq.images.push_back(read_png(view.dir / variant.image));
        if (!seq.images.empty()) sequences.push_back(std::move(seq));
    }
    if (sequences.empty()) throw DataError("dataset has no sequences: " + dataset_dir.string());
    return sequences;
}

}  // namespace iid
