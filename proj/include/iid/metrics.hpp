#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "iid/image.hpp"

namespace iid {

// Local mean squared error against dense ground truth: over half-overlapping
// square windows, the scale-invariant residual min_a ||gt - a*pred||^2 with
// the closed-form a = <gt,pred>/<pred,pred>, summed over windows and
// normalized by the windows' total gt energy. Fully masked windows are
// skipped. window <= 0 picks 10% of the larger image dimension (at least 8).
double lmse(const Image& pred, const Image& gt, const Image* mask = nullptr, int window = 0);

// Sparse relative albedo-intensity judgements. relation: -1 point1 darker,
// 0 same, +1 point1 lighter (than point2).
struct Judgement {
    int x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    int relation = 0;
    double weight = 1.0;
};

// Text format: one judgement per line, "x1 y1 x2 y2 relation weight" with
// relation spelled darker|same|lighter.
std::vector<Judgement> read_judgements(const std::filesystem::path& path);
void write_judgements(const std::filesystem::path& path, const std::vector<Judgement>& judgements);

// Samples point pairs and derives their relation from an albedo image with
// the same patch/threshold rule whdr uses.
std::vector<Judgement> derive_judgements(const Image& albedo, int count, double delta, std::uint64_t seed,
                                         const Image* mask = nullptr);

// Weighted human disagreement rate. Intensity is a 3x3 patch mean of the
// gray level; the predicted relation compares the intensity ratio against
// 1 + delta. The dual-run protocol scores the albedo both as-is and after
// sRGB->linear conversion and keeps the better (lower) of the two.
double whdr(const Image& albedo, const std::vector<Judgement>& judgements, double delta = 0.10,
            bool dual_run = true);

enum class ShadingLabel : std::uint8_t { unlabeled = 0, smooth = 1, boundary = 2 };

struct ShadingLabels {
    int width = 0, height = 0;
    std::vector<ShadingLabel> labels;

    ShadingLabel at(int x, int y) const { return labels[static_cast<size_t>(y) * width + x]; }
};

// Synthetic shading-smoothness annotations from ground truth: pixels whose
// log-luminance gradient magnitude exceeds the 95th percentile become
// boundary, those below the 60th percentile smooth, the rest unlabeled.
ShadingLabels derive_shading_labels(const Image& shading_gt, const Image* mask = nullptr);

ShadingLabels read_labels_png(const std::filesystem::path& path);
void write_labels_png(const std::filesystem::path& path, const ShadingLabels& labels);

struct SawResult {
    // (recall, precision) points of the smooth class, sweeping the
    // gradient-magnitude threshold from strict to loose.
    std::vector<std::pair<double, double>> curve;
    double precision_at_50 = 0;
    double precision_at_70 = 0;
    double precision_at_80 = 0;
};

// Precision/recall of classifying shading-smooth pixels, scoring each labeled
// pixel by the negative gradient magnitude of its log-shading luminance.
SawResult saw_pr(const Image& shading, const ShadingLabels& labels);

struct MreResult {
    double alpha = 0;  // optimal global rescale of A*S against I
    double mre = 0;    // mean |I - alpha*A*S| on the 0..255 scale
};

// Mean reconstruction error with the closed-form least-squares alpha.
MreResult mre(const Image& image, const Image& albedo, const Image& shading);

// Mean albedo consistency error over all ordered pairs (including i = j) of
// a sequence, on the 0..255 scale. With threshold t > 0, pixels darker than
// t (0..255, mean of the source image's channels) in either image of a pair
// are excluded and the pair renormalized; pairs whose non-dark overlap is
// below min_overlap of the image are excluded entirely. sources may be null
// only when t == 0.
double mace(const std::vector<Image>& albedos, const std::vector<Image>* sources, double t = 0.0,
            double min_overlap = 0.20);

}  // namespace iid
