// Command-line front end: dataset generation, training, single-image
// decomposition, metric evaluation, and radar-chart rendering.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "iid/errors.hpp"
#include "iid/metrics.hpp"
#include "iid/network.hpp"
#include "iid/report.hpp"
#include "iid/runtime.hpp"
#include "iid/synthgen.hpp"
#include "iid/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

void write_run_config(const fs::path& out_dir, const json& config) {
    fs::create_directories(out_dir);
    std::ofstream out(out_dir / "run_config.json");
    if (!out) throw iid::DataError("cannot write run config in " + out_dir.string());
    out << config.dump(2) << "\n";
}

// Mirror padding (edge not repeated) up to the requested size.
iid::Image pad_reflect(const iid::Image& img, int target_w, int target_h) {
    iid::Image out(target_w, target_h, img.channels);
    auto reflect = [](int i, int n) {
        if (n == 1) return 0;
        const int period = 2 * (n - 1);
        i = std::abs(i) % period;
        return i < n ? i : period - i;
    };
    for (int y = 0; y < target_h; ++y)
        for (int x = 0; x < target_w; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(x, y, c) = img.at(reflect(x, img.width), reflect(y, img.height), c);
    return out;
}

struct DecomposeResult {
    iid::Image albedo;
    iid::Image shading;
};

DecomposeResult decompose_image(iid::NetworkWeights& net, const iid::Image& input) {
    const int multiple = 1 << net.config.levels;
    const int pw = (input.width + multiple - 1) / multiple * multiple;
    const int ph = (input.height + multiple - 1) / multiple * multiple;
    const iid::Image padded = (pw == input.width && ph == input.height) ? input : pad_reflect(input, pw, ph);

    iid::NoGradGuard guard;
    auto tensor = iid::image_to_tensor<float>(padded);
    auto [albedo_t, shading_t] = iid::forward_decompose(net, tensor, iid::RunMode::infer);
    iid::Image albedo = iid::tensor_to_image(albedo_t);
    iid::Image shading = iid::tensor_to_image(shading_t);

    DecomposeResult result{iid::Image(input.width, input.height, 3), iid::Image(input.width, input.height, 3)};
    for (int y = 0; y < input.height; ++y)
        for (int x = 0; x < input.width; ++x)
            for (int c = 0; c < 3; ++c) {
                result.albedo.at(x, y, c) = albedo.at(x, y, c);
                result.shading.at(x, y, c) = shading.at(x, y, c);
            }
    return result;
}

int cmd_generate(int scenes, int views, std::uint64_t seed, const std::string& out,
                 const iid::GenParams& params) {
    const fs::path out_dir(out);
    write_run_config(out_dir, {{"command", "generate"},
                               {"scenes", scenes},
                               {"views", views},
                               {"seed", seed},
                               {"image_size", params.image_size},
                               {"n_lightings", params.n_lightings},
                               {"n_tonemaps", params.n_tonemaps},
                               {"infinite_depth_fraction", params.infinite_depth_fraction}});
    const auto summary = iid::make_dataset(scenes, views, params, seed, out_dir);
    std::cout << "dataset: " << summary.scenes << " scenes, " << summary.views << " views, "
              << summary.variants_written << " variants kept, " << summary.variants_discarded
              << " discarded by the intensity filter, " << summary.views_dropped << " views dropped\n";
    return kExitOk;
}

json loss_weights_json(const iid::LossWeights& w) {
    return {{"kappa", w.kappa},
            {"lambda", w.lambda},
            {"mu_start", w.mu_start},
            {"mu_end", w.mu_end},
            {"mu_anneal_fraction", w.mu_anneal_fraction},
            {"nu", w.nu},
            {"albedo_form", w.albedo_form == iid::LossWeights::AlbedoForm::direct ? "direct" : "cross"}};
}

int cmd_train(const std::string& data, const std::string& out, const iid::TrainOptions& options) {
    const fs::path out_dir(out);
    write_run_config(out_dir, {{"command", "train"},
                               {"data", data},
                               {"seed", options.schedule.seed},
                               {"total_iters", options.schedule.total_iters},
                               {"lr_start", options.schedule.lr_start},
                               {"lr_end", options.schedule.lr_end},
                               {"batch_pairs", options.schedule.batch_pairs},
                               {"levels", options.net.levels},
                               {"proj_channels", options.net.proj_channels},
                               {"conv_channels", options.net.conv_channels},
                               {"kernel_size", options.net.kernel_size},
                               {"loss", loss_weights_json(options.loss)}});
    const auto sequences = iid::load_sequences(data);
    auto result = iid::train(sequences, options, &std::cerr);
    iid::save_weights(result.weights, out_dir / "weights.iidw");
    iid::write_loss_csv(out_dir / "loss_log.csv", result.log);
    std::cout << "trained " << options.schedule.total_iters << " iterations on " << sequences.size()
              << " sequences; weights at " << (out_dir / "weights.iidw").string() << "\n";
    return kExitOk;
}

int cmd_decompose(const std::string& weights_path, const std::vector<std::string>& images,
                  const std::string& data, const std::string& out) {
    auto net = iid::load_weights(weights_path);
    const fs::path out_dir(out);
    write_run_config(out_dir, {{"command", "decompose"},
                               {"weights", weights_path},
                               {"images", images},
                               {"data", data}});

    auto run_one = [&net](const fs::path& input_path, const fs::path& target_dir) {
        const iid::Image input = iid::read_png(input_path);
        if (input.channels != 3)
            throw iid::DataError("decompose expects RGB input: " + input_path.string());
        const auto result = decompose_image(net, input);
        fs::create_directories(target_dir);
        const std::string stem = input_path.stem().string();
        iid::write_png(target_dir / (stem + "_albedo.png"), result.albedo);
        iid::write_pfm(target_dir / (stem + "_shading.pfm"), result.shading);
    };

    int count = 0;
    for (const auto& image : images) {
        run_one(image, out_dir);
        ++count;
    }
    if (!data.empty()) {
        for (const auto& view : iid::read_manifest(data)) {
            for (const auto& variant : view.variants) {
                run_one(view.dir / variant.image, out_dir / view.scene / view.view);
                ++count;
            }
        }
    }
    if (count == 0) throw iid::UsageError("decompose: no inputs given (use --image or --data)");
    std::cout << "decomposed " << count << " images into " << out_dir.string() << "\n";
    return kExitOk;
}

struct EvalAccumulator {
    double sum = 0;
    long count = 0;
    void add(double v) {
        sum += v;
        ++count;
    }
    std::optional<double> mean() const {
        return count ? std::optional<double>(sum / count) : std::nullopt;
    }
};

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& out,
             const std::set<std::string>& metrics, double mace_t, double whdr_delta,
             int judgements_per_image, std::uint64_t seed, int lmse_window) {
    const fs::path pred_dir(pred), gt_dir(gt), out_dir(out);
    write_run_config(out_dir, {{"command", "eval"},
                               {"pred", pred},
                               {"gt", gt},
                               {"metrics", std::vector<std::string>(metrics.begin(), metrics.end())},
                               {"mace_t", mace_t},
                               {"whdr_delta", whdr_delta},
                               {"judgements_per_image", judgements_per_image},
                               {"lmse_window", lmse_window},
                               {"seed", seed}});

    const auto views = iid::read_manifest(gt_dir);
    EvalAccumulator lmse_acc, whdr_acc, saw50_acc, saw70_acc, saw80_acc, mre_acc, mace_acc;
    std::vector<std::string> unmatched;
    long matched = 0;

    std::ofstream details(out_dir / "details.csv");
    details << "scene,view,image,lmse,whdr,saw_p70,mre\n";

    for (const auto& view : views) {
        const iid::Image gt_albedo = iid::read_png(view.dir / "albedo.png");
        const iid::Image mask = iid::read_png(view.dir / "mask.png");

        std::vector<iid::Judgement> judgements;
        if (metrics.count("whdr")) {
            const auto judgement_file = view.dir / "judgements.txt";
            judgements = fs::exists(judgement_file)
                             ? iid::read_judgements(judgement_file)
                             : iid::derive_judgements(gt_albedo, judgements_per_image, whdr_delta,
                                                      iid::mix_seed(seed, std::hash<std::string>{}(view.scene + view.view)),
                                                      &mask);
        }

        std::vector<iid::Image> sequence_albedos;
        std::vector<iid::Image> sequence_sources;
        for (const auto& variant : view.variants) {
            const fs::path stem = fs::path(variant.image).stem();
            const fs::path pred_albedo_path = pred_dir / view.scene / view.view / (stem.string() + "_albedo.png");
            const fs::path pred_shading_path = pred_dir / view.scene / view.view / (stem.string() + "_shading.pfm");
            if (!fs::exists(pred_albedo_path) || !fs::exists(pred_shading_path)) {
                unmatched.push_back(view.scene + "/" + view.view + "/" + variant.image);
                continue;
            }
            ++matched;
            const iid::Image pred_albedo = iid::read_png(pred_albedo_path);
            const iid::Image pred_shading = iid::read_pfm(pred_shading_path);
            const iid::Image gt_image = iid::read_png(view.dir / variant.image);
            const iid::Image gt_shading = iid::read_pfm(view.dir / variant.shading);

            double v_lmse = std::nan(""), v_whdr = std::nan(""), v_saw = std::nan(""), v_mre = std::nan("");
            if (metrics.count("lmse")) {
                v_lmse = 0.5 * (iid::lmse(pred_albedo, gt_albedo, &mask, lmse_window) +
                                iid::lmse(pred_shading, gt_shading, &mask, lmse_window));
                lmse_acc.add(v_lmse);
            }
            if (metrics.count("whdr") && !judgements.empty()) {
                v_whdr = iid::whdr(pred_albedo, judgements, whdr_delta);
                whdr_acc.add(v_whdr);
            }
            if (metrics.count("saw")) {
                const auto labels = iid::derive_shading_labels(gt_shading, &mask);
                const auto saw = iid::saw_pr(pred_shading, labels);
                v_saw = saw.precision_at_70;
                saw50_acc.add(saw.precision_at_50);
                saw70_acc.add(saw.precision_at_70);
                saw80_acc.add(saw.precision_at_80);
            }
            if (metrics.count("mre")) {
                v_mre = iid::mre(gt_image, pred_albedo, pred_shading).mre;
                mre_acc.add(v_mre);
            }
            if (metrics.count("mace")) {
                sequence_albedos.push_back(pred_albedo);
                sequence_sources.push_back(gt_image);
            }
            details << view.scene << ',' << view.view << ',' << variant.image << ',' << v_lmse << ','
                    << v_whdr << ',' << v_saw << ',' << v_mre << '\n';
        }
        if (metrics.count("mace") && sequence_albedos.size() >= 2)
            mace_acc.add(iid::mace(sequence_albedos, &sequence_sources, mace_t));
    }

    for (const auto& miss : unmatched) std::cerr << "warning: no prediction for " << miss << "\n";
    if (matched == 0) throw iid::DataError("eval: no predictions matched the ground-truth set");

    iid::MetricsReport report;
    report.lmse = lmse_acc.mean();
    report.whdr = whdr_acc.mean();
    report.saw_p50 = saw50_acc.mean();
    report.saw_p70 = saw70_acc.mean();
    report.saw_p80 = saw80_acc.mean();
    report.mre = mre_acc.mean();
    report.mace_t = mace_acc.mean();
    iid::write_report_csv(out_dir / "report.csv", report);

    std::cout << "evaluated " << matched << " predictions";
    if (report.lmse) std::cout << "  lmse " << *report.lmse;
    if (report.whdr) std::cout << "  whdr " << *report.whdr;
    if (report.saw_p70) std::cout << "  saw@70 " << *report.saw_p70;
    if (report.mre) std::cout << "  mre " << *report.mre;
    if (report.mace_t) std::cout << "  mace_" << mace_t << " " << *report.mace_t;
    std::cout << "\n";
    return kExitOk;
}

int cmd_chart(const std::vector<std::string>& reports, const std::string& out) {
    std::vector<std::pair<std::string, iid::ChartValues>> entries;
    for (const auto& path : reports) {
        const auto report = iid::read_report_csv(path);
        entries.emplace_back(fs::path(path).stem().string(), iid::normalize_report(report));
    }
    iid::render_radar_svg(out, entries);
    std::cout << "chart with " << entries.size() << " entries at " << out << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    iid::tune_numeric_runtime(argv);

    CLI::App app{"Unsupervised single-image intrinsic decomposition laboratory"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Render a synthetic timelapse dataset");
    int gen_scenes = 4, gen_views = 4;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    iid::GenParams gen_params;
    gen->add_option("--scenes", gen_scenes, "Number of scenes");
    gen->add_option("--views", gen_views, "Views per scene");
    gen->add_option("--seed", gen_seed, "Root seed");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--size", gen_params.image_size, "Image size (power of two)");
    gen->add_option("--lightings", gen_params.n_lightings, "Lighting variants per view");
    gen->add_option("--tonemaps", gen_params.n_tonemaps, "Tone-mapping variants per view");
    gen->add_option("--background", gen_params.infinite_depth_fraction, "Infinite-depth fraction");

    // train
    auto* train = app.add_subcommand("train", "Train the decomposition network on a dataset");
    std::string train_data, train_out;
    iid::TrainOptions train_options;
    std::string albedo_form = "direct";
    train->add_option("--data", train_data, "Dataset directory (with manifest.json)")->required();
    train->add_option("--out", train_out, "Output directory")->required();
    train->add_option("--iters", train_options.schedule.total_iters, "Training iterations");
    train->add_option("--lr-start", train_options.schedule.lr_start, "Initial learning rate");
    train->add_option("--lr-end", train_options.schedule.lr_end, "Final learning rate");
    train->add_option("--batch-pairs", train_options.schedule.batch_pairs, "Siamese pairs per iteration");
    train->add_option("--seed", train_options.schedule.seed, "Training seed");
    train->add_option("--levels", train_options.net.levels, "Encoder/decoder depth");
    train->add_option("--kappa", train_options.loss.kappa, "Chroma smoothness weight");
    train->add_option("--lambda", train_options.loss.lambda, "Shading smoothness weight");
    train->add_option("--mu-start", train_options.loss.mu_start, "Initialization weight at iteration 0");
    train->add_option("--mu-end", train_options.loss.mu_end, "Initialization weight after annealing");
    train->add_option("--mu-anneal", train_options.loss.mu_anneal_fraction, "Annealing fraction");
    train->add_option("--nu", train_options.loss.nu, "Reconstruction weight");
    train->add_option("--albedo-form", albedo_form, "Albedo loss form: direct|cross")
        ->check(CLI::IsMember({"direct", "cross"}));

    // decompose
    auto* dec = app.add_subcommand("decompose", "Decompose images into albedo and shading");
    std::string dec_weights, dec_data, dec_out;
    std::vector<std::string> dec_images;
    dec->add_option("--weights", dec_weights, "Weight file")->required();
    dec->add_option("--image", dec_images, "Input image (repeatable)");
    dec->add_option("--data", dec_data, "Decompose every variant of a dataset");
    dec->add_option("--out", dec_out, "Output directory")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "Score predictions against a dataset");
    std::string eval_pred, eval_gt, eval_out;
    std::string eval_metrics = "lmse,whdr,saw,mre,mace";
    double eval_mace_t = 10.0, eval_delta = 0.10;
    int eval_judgements = 100, eval_window = 0;
    std::uint64_t eval_seed = 0;
    eval->add_option("--pred", eval_pred, "Prediction directory (decompose output)")->required();
    eval->add_option("--gt", eval_gt, "Ground-truth dataset directory")->required();
    eval->add_option("--out", eval_out, "Output directory")->required();
    eval->add_option("--metrics", eval_metrics, "Comma-separated subset of lmse,whdr,saw,mre,mace");
    eval->add_option("--mace-t", eval_mace_t, "Darkness threshold (0..255)");
    eval->add_option("--delta", eval_delta, "WHDR relation threshold");
    eval->add_option("--judgements-per-image", eval_judgements, "Derived judgement count per view");
    eval->add_option("--window", eval_window, "LMSE window (0 = auto)");
    eval->add_option("--seed", eval_seed, "Seed for judgement derivation");

    // chart
    auto* chart = app.add_subcommand("chart", "Render a radar chart from report CSVs");
    std::vector<std::string> chart_reports;
    std::string chart_out;
    chart->add_option("--report", chart_reports, "Report CSV (repeatable)")->required();
    chart->add_option("--out", chart_out, "Output SVG path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*gen) return cmd_generate(gen_scenes, gen_views, gen_seed, gen_out, gen_params);
        if (*train) {
            train_options.loss.albedo_form = albedo_form == "cross"
                                                 ? iid::LossWeights::AlbedoForm::cross_product
                                                 : iid::LossWeights::AlbedoForm::direct;
            return cmd_train(train_data, train_out, train_options);
        }
        if (*dec) return cmd_decompose(dec_weights, dec_images, dec_data, dec_out);
        if (*eval) {
            std::set<std::string> metric_set;
            std::stringstream ss(eval_metrics);
            std::string item;
            while (std::getline(ss, item, ',')) {
                if (item != "lmse" && item != "whdr" && item != "saw" && item != "mre" && item != "mace")
                    throw iid::UsageError("unknown metric: " + item);
                metric_set.insert(item);
            }
            return cmd_eval(eval_pred, eval_gt, eval_out, metric_set, eval_mace_t, eval_delta,
                            eval_judgements, eval_seed, eval_window);
        }
        if (*chart) return cmd_chart(chart_reports, chart_out);
    } catch (const iid::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const iid::NumericError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const iid::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const iid::WeightsError& e) {
        std::cerr << "weight file error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
