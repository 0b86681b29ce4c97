#include "iid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "iid/color.hpp"
#include "iid/errors.hpp"
#include "iid/rng.hpp"

namespace iid {

namespace {

bool masked_out(const Image* mask, int x, int y) { return mask && mask->at(x, y, 0) == 0.f; }

double gray_level(const Image& img, int x, int y) {
    if (img.channels == 1) return img.at(x, y, 0);
    double acc = 0;
    for (int c = 0; c < img.channels; ++c) acc += img.at(x, y, c);
    return acc / img.channels;
}

// Mean gray level of the 3x3 patch around a point, clamped at borders.
double patch_intensity(const Image& img, int px, int py) {
    double acc = 0;
    int n = 0;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
            const int x = std::clamp(px + dx, 0, img.width - 1);
            const int y = std::clamp(py + dy, 0, img.height - 1);
            acc += gray_level(img, x, y);
            ++n;
        }
    return acc / n;
}

int predict_relation(double int1, double int2, double delta) {
    constexpr double kFloor = 1e-4;
    const double r = std::max(int1, kFloor) / std::max(int2, kFloor);
    if (r > 1.0 + delta) return +1;
    if (r < 1.0 / (1.0 + delta)) return -1;
    return 0;
}

double whdr_single(const Image& albedo, const std::vector<Judgement>& judgements, double delta) {
    double disagree = 0, total = 0;
    for (const auto& j : judgements) {
        const double i1 = patch_intensity(albedo, j.x1, j.y1);
        const double i2 = patch_intensity(albedo, j.x2, j.y2);
        if (predict_relation(i1, i2, delta) != j.relation) disagree += j.weight;
        total += j.weight;
    }
    return disagree / total;
}

// Gradient magnitude of log shading luminance, the smoothness score's basis.
std::vector<double> log_shading_gradient(const Image& shading) {
    constexpr double kGuard = 1e-4;
    const int w = shading.width, h = shading.height;
    std::vector<double> loglum(static_cast<size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double l = shading.channels == 3
                                 ? luminance(shading.at(x, y, 0), shading.at(x, y, 1), shading.at(x, y, 2))
                                 : shading.at(x, y, 0);
            loglum[static_cast<size_t>(y) * w + x] = std::log(kGuard + std::max(0.0, l));
        }
    std::vector<double> grad(static_cast<size_t>(w) * h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double gx = x + 1 < w ? loglum[static_cast<size_t>(y) * w + x + 1] - loglum[static_cast<size_t>(y) * w + x] : 0.0;
            const double gy = y + 1 < h ? loglum[static_cast<size_t>(y + 1) * w + x] - loglum[static_cast<size_t>(y) * w + x] : 0.0;
            grad[static_cast<size_t>(y) * w + x] = std::sqrt(gx * gx + gy * gy);
        }
    return grad;
}

const char* relation_name(int relation) {
    return relation < 0 ? "darker" : (relation > 0 ? "lighter" : "same");
}

}  // namespace

double lmse(const Image& pred, const Image& gt, const Image* mask, int window) {
    if (pred.width != gt.width || pred.height != gt.height || pred.channels != gt.channels)
        throw DataError("lmse: prediction and ground truth differ in shape");
    if (window <= 0) window = std::max(8, static_cast<int>(std::lround(0.1 * std::max(gt.width, gt.height))));
    window = std::min({window, gt.width, gt.height});
    const int stride = std::max(1, window / 2);

    double error_sum = 0, energy_sum = 0;
    auto window_starts = [&](int extent) {
        std::vector<int> starts;
        for (int s = 0;; s += stride) {
            if (s + window >= extent) {
                starts.push_back(extent - window);
                break;
            }
            starts.push_back(s);
        }
        return starts;
    };

    for (int sy : window_starts(gt.height))
        for (int sx : window_starts(gt.width)) {
            double dot_gp = 0, dot_pp = 0, dot_gg = 0;
            bool any = false;
            for (int y = sy; y < sy + window; ++y)
                for (int x = sx; x < sx + window; ++x) {
                    if (masked_out(mask, x, y)) continue;
                    any = true;
                    for (int c = 0; c < gt.channels; ++c) {
                        const double g = gt.at(x, y, c), p = pred.at(x, y, c);
                        dot_gp += g * p;
                        dot_pp += p * p;
                        dot_gg += g * g;
                    }
                }
            if (!any) continue;  // fully masked window
            const double a = dot_pp > 0 ? dot_gp / dot_pp : 0.0;
            // ||gt - a*pred||^2 = <gt,gt> - 2a<gt,pred> + a^2<pred,pred>
            error_sum += dot_gg - 2 * a * dot_gp + a * a * dot_pp;
            energy_sum += dot_gg;
        }
    if (energy_sum == 0) return 0.0;
    return error_sum / energy_sum;
}

std::vector<Judgement> read_judgements(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open judgement file: " + path.string());
    std::vector<Judgement> judgements;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        Judgement j;
        std::string relation;
        if (!(ls >> j.x1 >> j.y1 >> j.x2 >> j.y2 >> relation >> j.weight))
            throw DataError("malformed judgement at " + path.string() + ":" + std::to_string(line_no));
        if (relation == "darker")
            j.relation = -1;
        else if (relation == "lighter")
            j.relation = +1;
        else if (relation == "same")
            j.relation = 0;
        else
            throw DataError("unknown relation '" + relation + "' at " + path.string() + ":" +
                            std::to_string(line_no));
        if (j.weight <= 0)
            throw DataError("non-positive weight at " + path.string() + ":" + std::to_string(line_no));
        judgements.push_back(j);
    }
    return judgements;
}

void write_judgements(const std::filesystem::path& path, const std::vector<Judgement>& judgements) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write judgement file: " + path.string());
    for (const auto& j : judgements)
        out << j.x1 << ' ' << j.y1 << ' ' << j.x2 << ' ' << j.y2 << ' ' << relation_name(j.relation) << ' '
            << j.weight << '\n';
}

std::vector<Judgement> derive_judgements(const Image& albedo, int count, double delta, std::uint64_t seed,
                                         const Image* mask) {
    Pcg32 rng(seed, 0x6a756467ULL);
    std::vector<Judgement> judgements;
    judgements.reserve(static_cast<size_t>(count));
    int guard = 0;
    while (static_cast<int>(judgements.size()) < count && guard++ < count * 100) {
        Judgement j;
        j.x1 = static_cast<int>(rng.bounded(static_cast<std::uint32_t>(albedo.width)));
        j.y1 = static_cast<int>(rng.bounded(static_cast<std::uint32_t>(albedo.height)));
        j.x2 = static_cast<int>(rng.bounded(static_cast<std::uint32_t>(albedo.width)));
        j.y2 = static_cast<int>(rng.bounded(static_cast<std::uint32_t>(albedo.height)));
        if ((j.x1 == j.x2 && j.y1 == j.y2) || masked_out(mask, j.x1, j.y1) || masked_out(mask, j.x2, j.y2))
            continue;
        j.relation = predict_relation(patch_intensity(albedo, j.x1, j.y1),
                                      patch_intensity(albedo, j.x2, j.y2), delta);
        j.weight = 1.0;
        judgements.push_back(j);
    }
    return judgements;
}

double whdr(const Image& albedo, const std::vector<Judgement>& judgements, double delta, bool dual_run) {
    if (judgements.empty()) throw DataError("whdr: empty judgement set");
    for (const auto& j : judgements)
        if (j.x1 < 0 || j.x1 >= albedo.width || j.y1 < 0 || j.y1 >= albedo.height || j.x2 < 0 ||
            j.x2 >= albedo.width || j.y2 < 0 || j.y2 >= albedo.height)
            throw DataError("whdr: judgement point outside image bounds");
    const double as_is = whdr_single(albedo, judgements, delta);
    if (!dual_run) return as_is;
    const double linearized = whdr_single(srgb_to_linear(albedo), judgements, delta);
    return std::min(as_is, linearized);
}

ShadingLabels derive_shading_labels(const Image& shading_gt, const Image* mask) {
    const auto grad = log_shading_gradient(shading_gt);
    std::vector<double> considered;
    for (int y = 0; y < shading_gt.height; ++y)
        for (int x = 0; x < shading_gt.width; ++x)
            if (!masked_out(mask, x, y)) considered.push_back(grad[static_cast<size_t>(y) * shading_gt.width + x]);
    if (considered.empty()) throw DataError("derive_shading_labels: everything masked");
    std::sort(considered.begin(), considered.end());
    auto quantile = [&](double q) {
        return considered[std::min(considered.size() - 1, static_cast<size_t>(q * considered.size()))];
    };
    const double smooth_cut = quantile(0.60);
    const double boundary_cut = quantile(0.95);

    ShadingLabels labels;
    labels.width = shading_gt.width;
    labels.height = shading_gt.height;
    labels.labels.assign(static_cast<size_t>(labels.width) * labels.height, ShadingLabel::unlabeled);
    for (int y = 0; y < labels.height; ++y)
        for (int x = 0; x < labels.width; ++x) {
            if (masked_out(mask, x, y)) continue;
            const double g = grad[static_cast<size_t>(y) * labels.width + x];
            if (g >= boundary_cut && boundary_cut > smooth_cut)
                labels.labels[static_cast<size_t>(y) * labels.width + x] = ShadingLabel::boundary;
            else if (g <= smooth_cut)
                labels.labels[static_cast<size_t>(y) * labels.width + x] = ShadingLabel::smooth;
        }
    return labels;
}

ShadingLabels read_labels_png(const std::filesystem::path& path) {
    const Image img = read_png(path);
    ShadingLabels labels;
    labels.width = img.width;
    labels.height = img.height;
    labels.labels.resize(static_cast<size_t>(img.width) * img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const float v = img.at(x, y, 0);
            auto& l = labels.labels[static_cast<size_t>(y) * img.width + x];
            if (v > 0.75f)
                l = ShadingLabel::smooth;
            else if (v > 0.25f)
                l = ShadingLabel::boundary;
            else
                l = ShadingLabel::unlabeled;
        }
    return labels;
}

void write_labels_png(const std::filesystem::path& path, const ShadingLabels& labels) {
    Image img(labels.width, labels.height, 1);
    for (size_t i = 0; i < labels.labels.size(); ++i)
        img.pix[i] = labels.labels[i] == ShadingLabel::smooth ? 1.f
                     : labels.labels[i] == ShadingLabel::boundary ? 0.5f
                                                                  : 0.f;
    write_png(path, img);
}

SawResult saw_pr(const Image& shading, const ShadingLabels& labels) {
    if (shading.width != labels.width || shading.height != labels.height)
        throw DataError("saw_pr: shading and labels differ in size");
    const auto grad = log_shading_gradient(shading);

    // Collect (gradient magnitude, is_smooth) for labeled pixels. Predicting
    // "smooth" below a gradient threshold and sweeping it from strict to
    // loose traces the precision/recall curve.
    std::vector<std::pair<double, bool>> scored;
    size_t total_smooth = 0;
    for (int y = 0; y < labels.height; ++y)
        for (int x = 0; x < labels.width; ++x) {
            const ShadingLabel l = labels.at(x, y);
            if (l == ShadingLabel::unlabeled) continue;
            const bool smooth = l == ShadingLabel::smooth;
            total_smooth += smooth;
            scored.emplace_back(grad[static_cast<size_t>(y) * labels.width + x], smooth);
        }
    if (total_smooth == 0 || total_smooth == scored.size())
        throw DataError("saw_pr: labels must contain both smooth and boundary pixels");

    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    SawResult result;
    size_t tp = 0, predicted = 0;
    size_t i = 0;
    while (i < scored.size()) {
        // Equal scores cross the threshold together.
        size_t j = i;
        while (j < scored.size() && scored[j].first == scored[i].first) {
            tp += scored[j].second;
            ++predicted;
            ++j;
        }
        i = j;
        const double recall = static_cast<double>(tp) / static_cast<double>(total_smooth);
        const double precision = static_cast<double>(tp) / static_cast<double>(predicted);
        result.curve.emplace_back(recall, precision);
    }

    auto precision_at = [&](double target) {
        // Linear interpolation on the recall axis.
        double prev_r = 0.0, prev_p = result.curve.front().second;
        for (const auto& [r, p] : result.curve) {
            if (r >= target) {
                if (r == prev_r) return p;
                const double t = (target - prev_r) / (r - prev_r);
                return prev_p + t * (p - prev_p);
            }
            prev_r = r;
            prev_p = p;
        }
        return result.curve.back().second;
    };
    result.precision_at_50 = precision_at(0.50);
    result.precision_at_70 = precision_at(0.70);
    result.precision_at_80 = precision_at(0.80);
    return result;
}

MreResult mre(const Image& image, const Image& albedo, const Image& shading) {
    if (image.width != albedo.width || image.height != albedo.height || image.channels != albedo.channels ||
        image.width != shading.width || image.height != shading.height || image.channels != shading.channels)
        throw DataError("mre: image, albedo and shading must share a shape");
    double dot_ir = 0, dot_rr = 0;
    for (size_t i = 0; i < image.pix.size(); ++i) {
        const double r = static_cast<double>(albedo.pix[i]) * shading.pix[i];
        dot_ir += image.pix[i] * r;
        dot_rr += r * r;
    }
    if (dot_rr == 0) throw DataError("mre: reconstruction A*S is identically zero, alpha undefined");
    MreResult result;
    result.alpha = dot_ir / dot_rr;
    double acc = 0;
    for (size_t i = 0; i < image.pix.size(); ++i) {
        const double r = static_cast<double>(albedo.pix[i]) * shading.pix[i];
        acc += std::abs(image.pix[i] - result.alpha * r);
    }
    result.mre = 255.0 * acc / static_cast<double>(image.pix.size());
    return result;
}

double mace(const std::vector<Image>& albedos, const std::vector<Image>* sources, double t,
            double min_overlap) {
    if (albedos.size() < 2) throw DataError("mace: need at least two albedos");
    const int w = albedos.front().width, h = albedos.front().height, c = albedos.front().channels;
    for (const auto& a : albedos)
        if (a.width != w || a.height != h || a.channels != c)
            throw DataError("mace: albedo shapes differ");
    if (t > 0 && (!sources || sources->size() != albedos.size()))
        throw DataError("mace: thresholded variant needs one source image per albedo");

    const size_t pixels = static_cast<size_t>(w) * h;
    // Per-image non-dark masks from the source images (0..255 mean intensity).
    std::vector<std::vector<char>> bright(albedos.size());
    if (t > 0) {
        for (size_t k = 0; k < albedos.size(); ++k) {
            bright[k].resize(pixels, 1);
            const Image& src = (*sources)[k];
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    bright[k][static_cast<size_t>(y) * w + x] = gray_level(src, x, y) * 255.0 >= t;
        }
    }

    double pair_sum = 0;
    long pair_count = 0;
    for (size_t i = 0; i < albedos.size(); ++i)
        for (size_t j = 0; j < albedos.size(); ++j) {
            double acc = 0;
            size_t counted = 0;
            for (size_t p = 0; p < pixels; ++p) {
                if (t > 0 && (!bright[i][p] || !bright[j][p])) continue;
                ++counted;
                for (int ch = 0; ch < c; ++ch)
                    acc += std::abs(static_cast<double>(albedos[i].pix[p * c + ch]) -
                                    albedos[j].pix[p * c + ch]);
            }
            if (t > 0 && static_cast<double>(counted) < min_overlap * static_cast<double>(pixels))
                continue;  // insufficient non-dark overlap
            if (counted == 0) continue;
            pair_sum += acc / (static_cast<double>(c) * static_cast<double>(counted));
            ++pair_count;
        }
    if (pair_count == 0) throw DataError("mace: every pair excluded by the overlap rule");
    return 255.0 * pair_sum / static_cast<double>(pair_count);
}

}  // namespace iid
