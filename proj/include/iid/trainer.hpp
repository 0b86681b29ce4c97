#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "iid/image.hpp"
#include "iid/losses.hpp"
#include "iid/network.hpp"

namespace iid {

// One timelapse sequence loaded into memory: a static scene/view under
// varying lighting and tone mapping. All images share one validity mask.
struct SequenceImages {
    std::string id;
    std::vector<Image> images;  // 3-channel, [0,1]
    Image mask;                 // 1-channel, {0,1}; may be empty (all valid)
};

struct IterationLog {
    long iter = 0;
    float lr = 0, mu = 0;
    float albedo = 0, chroma = 0, smooth = 0, init = 0, recon = 0, total = 0;
};

struct TrainOptions {
    NetConfig net;
    LossWeights loss;
    TrainSchedule schedule;
};

struct TrainResult {
    NetworkWeights weights;
    std::vector<IterationLog> log;
};

// Unsupervised siamese training: each iteration samples batch_pairs sequences
// and an ordered image pair (i != j) within each, runs all images through one
// shared weight set in a single batch, and takes an Adam step on the mean
// pair loss at the scheduled learning rate. Deterministic under the schedule
// seed. Throws NumericError with the iteration index and term breakdown if
// the loss goes non-finite.
TrainResult train(const std::vector<SequenceImages>& dataset, const TrainOptions& options,
                  std::ostream* progress = nullptr);

// CSV columns: iter, lr, mu, L_a, L_c, L_smooth, L_i, L_r, total.
void write_loss_csv(const std::filesystem::path& path, const std::vector<IterationLog>& log);

}  // namespace iid
