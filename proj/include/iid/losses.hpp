#pragma once

#include <cstdint>
#include <string>

#include "iid/color.hpp"
#include "iid/tensor.hpp"
#include "iid/tensor_ops.hpp"

namespace iid {

struct LossWeights {
    float albedo_weight = 1.f;       // albedo similarity (the main target)
    float kappa = 75.f;              // chroma smoothness
    float lambda = 0.5f;             // overall shading smoothness
    float mu_start = 1.f;            // initialization pull, annealed ...
    float mu_end = 0.01f;            // ... down to this
    float mu_anneal_fraction = 0.5f; // over this fraction of training
    float nu = 100.f;                // reconstruction consistency
    enum class AlbedoForm { direct, cross_product } albedo_form = AlbedoForm::direct;
};

struct TrainSchedule {
    long total_iters = 2000;
    float lr_start = 1e-3f;
    float lr_end = 1e-5f;
    int batch_pairs = 3;  // pairs per iteration, i.e. 2x this many images
    std::uint64_t seed = 0;
};

// Exponential decay from lr_start to lr_end over the whole run.
inline float lr_schedule(long iter, const TrainSchedule& s) {
    if (s.total_iters <= 0) return s.lr_start;
    const double t = static_cast<double>(iter) / static_cast<double>(s.total_iters);
    return static_cast<float>(s.lr_start * std::pow(s.lr_end / static_cast<double>(s.lr_start), t));
}

// Linear from mu_start at iteration 0 to mu_end at anneal_fraction * total,
// constant afterwards.
inline float mu_schedule(long iter, const TrainSchedule& s, const LossWeights& w) {
    if (iter < 0 || iter > s.total_iters)
        throw std::invalid_argument("mu_schedule: iteration " + std::to_string(iter) + " outside [0, " +
                                    std::to_string(s.total_iters) + "]");
    const double knee = w.mu_anneal_fraction * static_cast<double>(s.total_iters);
    if (knee <= 0 || iter >= knee) return w.mu_end;
    const double t = static_cast<double>(iter) / knee;
    return static_cast<float>(w.mu_start + (w.mu_end - w.mu_start) * t);
}

// Albedo similarity between the two branches. The direct form penalizes the
// albedo difference; the cross form penalizes both cross-combined
// reconstructions (i,j) and (j,i).
template <typename T>
Tensor<T> loss_albedo(const Tensor<T>& albedo_i, const Tensor<T>& albedo_j, const Tensor<T>& image_i,
                      const Tensor<T>& image_j, const Tensor<T>& shading_i, const Tensor<T>& shading_j,
                      LossWeights::AlbedoForm form, const Tensor<T>& mask = {}) {
    if (form == LossWeights::AlbedoForm::direct) return l2_loss(albedo_i, albedo_j, mask);
    Tensor<T> ij = l2_loss(image_i, mul(albedo_j, shading_i), mask);
    Tensor<T> ji = l2_loss(image_j, mul(albedo_i, shading_j), mask);
    return add(ij, ji);
}

// kappa * mean-square forward-difference gradient of the a,b channels of the
// shading in CIE-Lab.
template <typename T>
Tensor<T> loss_chroma_smooth(const Tensor<T>& shading, T kappa, const Tensor<T>& mask = {}) {
    return mul(fdiff_mean_square(rgb_to_lab(shading), 1, 3, mask), kappa);
}

// lambda * mean-square forward-difference gradient over all shading channels.
template <typename T>
Tensor<T> loss_shading_smooth(const Tensor<T>& shading, T lambda, const Tensor<T>& mask = {}) {
    return mul(fdiff_mean_square(shading, 0, shading.dim(1), mask), lambda);
}

// mu * mean-square of (I_j - A_i). Cross-pairing (i != j) is the caller's
// contract; pairing an image with its own albedo is rejected at the
// total-loss level.
template <typename T>
Tensor<T> loss_init(const Tensor<T>& albedo_i, const Tensor<T>& image_j, T mu, const Tensor<T>& mask = {}) {
    return mul(l2_loss(image_j, albedo_i, mask), mu);
}

// nu * mean-square of (I - A*S).
template <typename T>
Tensor<T> loss_reconstruction(const Tensor<T>& image, const Tensor<T>& albedo, const Tensor<T>& shading,
                              T nu, const Tensor<T>& mask = {}) {
    return mul(l2_loss(image, mul(albedo, shading), mask), nu);
}

struct SiamesePair {
    int sequence_id = 0;
    int index_i = 0;
    int index_j = 0;
};

template <typename T>
struct PairTensors {
    Tensor<T> image_i, image_j;
    Tensor<T> mask;  // optional (N,1,H,W) validity, shared by both images
};

template <typename T>
struct PairOutputs {
    Tensor<T> albedo_i, shading_i;
    Tensor<T> albedo_j, shading_j;
};

template <typename T>
struct LossBreakdown {
    T albedo = 0, chroma = 0, smooth = 0, init = 0, recon = 0, total = 0;
};

// Joint loss of one siamese pair; per-image terms are averaged over the two
// branches. Returns the scalar graph node plus the weighted per-term values
// (which sum exactly to the scalar).
template <typename T>
std::pair<Tensor<T>, LossBreakdown<T>> total_loss(const SiamesePair& pair, const PairTensors<T>& in,
                                                  const PairOutputs<T>& out, const LossWeights& w, T mu) {
    if (pair.index_i == pair.index_j)
        throw std::invalid_argument("total_loss: siamese pair must use two distinct images (got index " +
                                    std::to_string(pair.index_i) + " twice)");
    const T half = T(0.5);
    Tensor<T> la = mul(loss_albedo(out.albedo_i, out.albedo_j, in.image_i, in.image_j, out.shading_i,
                                   out.shading_j, w.albedo_form, in.mask),
                       static_cast<T>(w.albedo_weight));
    Tensor<T> lc = mul(add(loss_chroma_smooth(out.shading_i, static_cast<T>(w.kappa), in.mask),
                           loss_chroma_smooth(out.shading_j, static_cast<T>(w.kappa), in.mask)),
                       half);
    Tensor<T> ls = mul(add(loss_shading_smooth(out.shading_i, static_cast<T>(w.lambda), in.mask),
                           loss_shading_smooth(out.shading_j, static_cast<T>(w.lambda), in.mask)),
                       half);
    Tensor<T> li = mul(add(loss_init(out.albedo_i, in.image_j, mu, in.mask),
                           loss_init(out.albedo_j, in.image_i, mu, in.mask)),
                       half);
    Tensor<T> lr = mul(add(loss_reconstruction(in.image_i, out.albedo_i, out.shading_i,
                                               static_cast<T>(w.nu), in.mask),
                           loss_reconstruction(in.image_j, out.albedo_j, out.shading_j,
                                               static_cast<T>(w.nu), in.mask)),
                       half);
    Tensor<T> total = add(add(add(add(la, lc), ls), li), lr);
    LossBreakdown<T> parts{la.item(), lc.item(), ls.item(), li.item(), lr.item(), total.item()};
    return {total, parts};
}

}  // namespace iid
