#include <doctest.h>

#include <sstream>

#include "iid/errors.hpp"
#include "iid/trainer.hpp"
#include "testutil.hpp"

namespace {

// Tiny in-memory dataset: two sequences of lit variants of a fixed pattern.
std::vector<iid::SequenceImages> toy_dataset(int size = 8, int variants = 4) {
    std::vector<iid::SequenceImages> dataset;
    iid::Pcg32 rng(7);
    for (int s = 0; s < 2; ++s) {
        iid::SequenceImages seq;
        seq.id = "seq_" + std::to_string(s);
        iid::Image base(size, size, 3);
        for (auto& v : base.pix) v = rng.uniformf(0.1f, 0.9f);
        for (int k = 0; k < variants; ++k) {
            iid::Image img = base;
            const float gain = 0.4f + 0.2f * static_cast<float>(k);
            for (auto& v : img.pix) v = std::min(1.f, v * gain);
            seq.images.push_back(std::move(img));
        }
        dataset.push_back(std::move(seq));
    }
    return dataset;
}

iid::TrainOptions toy_options(long iters, std::uint64_t seed = 5) {
    iid::TrainOptions options;
    options.net.levels = 2;
    options.schedule.total_iters = iters;
    options.schedule.batch_pairs = 2;
    options.schedule.seed = seed;
    return options;
}

}  // namespace

TEST_CASE("zero iterations return the initial weights unchanged") {
    const auto dataset = toy_dataset();
    auto result = iid::train(dataset, toy_options(0));
    auto fresh = iid::build_network(toy_options(0).net, 5);
    auto pa = result.weights.parameters(), pb = fresh.parameters();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].data() == pb[i].data());
    CHECK(result.log.empty());
}

TEST_CASE("training is deterministic under the seed") {
    const auto dataset = toy_dataset();
    auto a = iid::train(dataset, toy_options(5));
    auto b = iid::train(dataset, toy_options(5));
    REQUIRE(a.log.size() == b.log.size());
    for (size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].total == b.log[i].total);
        CHECK(a.log[i].recon == b.log[i].recon);
    }
    auto pa = a.weights.parameters(), pb = b.weights.parameters();
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].data() == pb[i].data());

    auto c = iid::train(dataset, toy_options(5, 6));
    bool any_diff = false;
    for (size_t i = 0; i < a.log.size(); ++i) any_diff = any_diff || a.log[i].total != c.log[i].total;
    CHECK(any_diff);
}

TEST_CASE("both branches share weights: pair gradients accumulate into one set") {
    // Batched siamese backward against manual two-pass accumulation through
    // the same shared parameters. Inference-mode batchnorm keeps the two
    // samples independent so the passes are comparable.
    iid::NetConfig cfg;
    cfg.levels = 2;
    auto net = iid::build_network(cfg, 21);
    iid::Pcg32 rng(22);
    std::vector<float> data(2 * 3 * 8 * 8);
    for (auto& v : data) v = rng.next_float();
    auto batch = iid::Tensor<float>::from_data({2, 3, 8, 8}, data);

    auto params = net.parameters();
    auto [albedo, shading] = iid::forward_decompose(net, batch, iid::RunMode::infer);
    iid::backward(iid::add(iid::sum(albedo), iid::sum(shading)));
    std::vector<std::vector<float>> batched;
    for (auto& p : params) {
        batched.push_back(p.grad());
        p.zero_grad();
    }

    for (int s = 0; s < 2; ++s) {
        std::vector<float> one(data.begin() + s * 3 * 64, data.begin() + (s + 1) * 3 * 64);
        auto single = iid::Tensor<float>::from_data({1, 3, 8, 8}, one);
        auto [a, sh] = iid::forward_decompose(net, single, iid::RunMode::infer);
        iid::backward(iid::add(iid::sum(a), iid::sum(sh)));  // accumulates over the loop
    }
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& two_pass = params[i].grad();
        for (size_t j = 0; j < two_pass.size(); ++j)
            CHECK(two_pass[j] == doctest::Approx(batched[i][j]).epsilon(1e-4));
    }
}

TEST_CASE("loss log rows carry the schedule and the breakdown sums to the total") {
    const auto dataset = toy_dataset();
    auto options = toy_options(4);
    auto result = iid::train(dataset, options);
    REQUIRE(result.log.size() == 4);
    for (const auto& row : result.log) {
        CHECK(row.lr == doctest::Approx(iid::lr_schedule(row.iter, options.schedule)));
        CHECK(row.mu == doctest::Approx(iid::mu_schedule(row.iter, options.schedule, options.loss)));
        CHECK(row.total ==
              doctest::Approx(row.albedo + row.chroma + row.smooth + row.init + row.recon).epsilon(1e-4));
    }
}

TEST_CASE("loss CSV has the documented columns") {
    testutil::TempDir dir("losslog");
    const auto dataset = toy_dataset();
    auto result = iid::train(dataset, toy_options(2));
    iid::write_loss_csv(dir.path / "log.csv", result.log);
    std::ifstream in(dir.path / "log.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "iter,lr,mu,L_a,L_c,L_smooth,L_i,L_r,total");
    int rows = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2);
}

TEST_CASE("train validates the dataset") {
    CHECK_THROWS_AS(iid::train({}, toy_options(1)), iid::DataError);
    std::vector<iid::SequenceImages> single;
    single.push_back({"lonely", {iid::Image(8, 8, 3)}, iid::Image()});
    CHECK_THROWS_AS(iid::train(single, toy_options(1)), iid::DataError);
}

TEST_CASE("a non-finite loss aborts with the iteration index and breakdown") {
    auto dataset = toy_dataset(8, 2);
    // Two-image sequences: any sampled pair touches the poisoned images.
    for (auto& seq : dataset) seq.images[0].at(3, 3, 1) = std::numeric_limits<float>::quiet_NaN();
    try {
        iid::train(dataset, toy_options(3));
        FAIL("expected NumericError");
    } catch (const iid::NumericError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("iteration") != std::string::npos);
        CHECK(msg.find("L_r") != std::string::npos);
    }
}

TEST_CASE("masked pixels are excluded from the loss") {
    auto dataset = toy_dataset(8, 3);
    // Corrupt a region in every image of sequence 0 and mask it out; the
    // run must stay finite and the masked loss must ignore the corruption.
    iid::Image mask(8, 8, 1);
    for (auto& v : mask.pix) v = 1.f;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) mask.at(x, y, 0) = 0.f;
    for (auto& img : dataset[0].images)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = (x + y) % 2 ? 1.f : 0.f;
    dataset[0].mask = mask;
    auto result = iid::train(dataset, toy_options(3));
    for (const auto& row : result.log) CHECK(std::isfinite(row.total));
}
