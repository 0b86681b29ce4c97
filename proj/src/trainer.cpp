#include "iid/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "iid/adam.hpp"
#include "iid/errors.hpp"
#include "iid/rng.hpp"

namespace iid {

namespace {

// Stacks the chosen images into one (2P,3,H,W) batch, branch-i images first,
// so both siamese branches run through a single forward pass and batchnorm
// sees the full mini-batch.
Tensor<float> stack_images(const std::vector<const Image*>& images) {
    const Image& first = *images.front();
    const int c = first.channels, h = first.height, w = first.width;
    std::vector<float> data(images.size() * static_cast<size_t>(c) * h * w);
    for (size_t s = 0; s < images.size(); ++s) {
        const Image& img = *images[s];
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    data[((s * c + ch) * static_cast<size_t>(h) + y) * w + x] = img.at(x, y, ch);
    }
    return Tensor<float>::from_data({static_cast<int>(images.size()), c, h, w}, std::move(data));
}

}  // namespace

TrainResult train(const std::vector<SequenceImages>& dataset, const TrainOptions& options,
                  std::ostream* progress) {
    if (dataset.empty()) throw DataError("train: dataset has no sequences");
    for (const auto& seq : dataset)
        if (seq.images.size() < 2)
            throw DataError("train: sequence " + seq.id + " has fewer than 2 images");
    const int h = dataset.front().images.front().height;
    const int w = dataset.front().images.front().width;

    TrainResult result;
    result.weights = build_network(options.net, options.schedule.seed);
    result.log.reserve(static_cast<size_t>(options.schedule.total_iters));

    auto params = result.weights.parameters();
    AdamState<float> adam;
    Pcg32 rng(options.schedule.seed, 0x747261696eULL);
    const int pairs = options.schedule.batch_pairs;

    for (long iter = 0; iter < options.schedule.total_iters; ++iter) {
        const float lr = lr_schedule(iter, options.schedule);
        const float mu = mu_schedule(iter, options.schedule, options.loss);

        std::vector<SiamesePair> meta(static_cast<size_t>(pairs));
        std::vector<const Image*> batch_i, batch_j, batch_m;
        for (int p = 0; p < pairs; ++p) {
            const int seq = static_cast<int>(rng.bounded(static_cast<std::uint32_t>(dataset.size())));
            const auto& images = dataset[static_cast<size_t>(seq)].images;
            const int i = static_cast<int>(rng.bounded(static_cast<std::uint32_t>(images.size())));
            int j = static_cast<int>(rng.bounded(static_cast<std::uint32_t>(images.size() - 1)));
            if (j >= i) ++j;  // ordered pair without replacement
            meta[static_cast<size_t>(p)] = SiamesePair{seq, i, j};
            batch_i.push_back(&images[static_cast<size_t>(i)]);
            batch_j.push_back(&images[static_cast<size_t>(j)]);
            batch_m.push_back(&dataset[static_cast<size_t>(seq)].mask);
        }

        std::vector<const Image*> all = batch_i;
        all.insert(all.end(), batch_j.begin(), batch_j.end());
        Tensor<float> batch = stack_images(all);

        bool any_mask = false;
        for (const Image* m : batch_m) any_mask = any_mask || !m->empty();
        Tensor<float> masks;
        if (any_mask) {
            std::vector<float> mdata(static_cast<size_t>(2 * pairs) * h * w, 1.f);
            for (int p = 0; p < 2 * pairs; ++p) {
                const Image* m = batch_m[static_cast<size_t>(p % pairs)];
                if (m->empty()) continue;
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        mdata[(static_cast<size_t>(p) * h + y) * w + x] = m->at(x, y, 0) != 0.f ? 1.f : 0.f;
            }
            masks = Tensor<float>::from_data({2 * pairs, 1, h, w}, std::move(mdata));
        }

        auto [albedo, shading] = forward_decompose(result.weights, batch, RunMode::train);

        Tensor<float> loss_sum;
        LossBreakdown<float> mean_parts;
        for (int p = 0; p < pairs; ++p) {
            PairTensors<float> in;
            in.image_i = narrow_batch(batch, p, 1);
            in.image_j = narrow_batch(batch, pairs + p, 1);
            if (masks.defined()) in.mask = narrow_batch(masks, p, 1);
            PairOutputs<float> out;
            out.albedo_i = narrow_batch(albedo, p, 1);
            out.shading_i = narrow_batch(shading, p, 1);
            out.albedo_j = narrow_batch(albedo, pairs + p, 1);
            out.shading_j = narrow_batch(shading, pairs + p, 1);
            auto [pair_loss, parts] = total_loss(meta[static_cast<size_t>(p)], in, out, options.loss, mu);
            loss_sum = loss_sum.defined() ? add(loss_sum, pair_loss) : pair_loss;
            mean_parts.albedo += parts.albedo / pairs;
            mean_parts.chroma += parts.chroma / pairs;
            mean_parts.smooth += parts.smooth / pairs;
            mean_parts.init += parts.init / pairs;
            mean_parts.recon += parts.recon / pairs;
        }
        Tensor<float> loss = mul(loss_sum, 1.f / static_cast<float>(pairs));
        mean_parts.total = loss.item();

        if (!std::isfinite(mean_parts.total)) {
            std::ostringstream os;
            os << "non-finite loss at iteration " << iter << " (L_a=" << mean_parts.albedo
               << " L_c=" << mean_parts.chroma << " L_smooth=" << mean_parts.smooth
               << " L_i=" << mean_parts.init << " L_r=" << mean_parts.recon << ")";
            throw NumericError(os.str());
        }

        backward(loss);
        adam_step(params, adam, lr);

        IterationLog row;
        row.iter = iter;
        row.lr = lr;
        row.mu = mu;
        row.albedo = mean_parts.albedo;
        row.chroma = mean_parts.chroma;
        row.smooth = mean_parts.smooth;
        row.init = mean_parts.init;
        row.recon = mean_parts.recon;
        row.total = mean_parts.total;
        result.log.push_back(row);

        if (progress && (iter % 100 == 0 || iter + 1 == options.schedule.total_iters))
            *progress << "iter " << iter << " lr " << lr << " total " << mean_parts.total << " L_r "
                      << mean_parts.recon << "\n";
    }
    return result;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<IterationLog>& log) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open loss log for writing: " + path.string());
    out << "iter,lr,mu,L_a,L_c,L_smooth,L_i,L_r,total\n";
    out << std::setprecision(9);
    for (const auto& row : log)
        out << row.iter << ',' << row.lr << ',' << row.mu << ',' << row.albedo << ',' << row.chroma << ','
            << row.smooth << ',' << row.init << ',' << row.recon << ',' << row.total << '\n';
    if (!out) throw DataError("loss log write failed: " + path.string());
}

}  // namespace iid
