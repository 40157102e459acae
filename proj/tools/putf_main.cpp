// putf: generate synthetic data, train the upsampling model, run patch-based
// inference, and evaluate CD/HD/P2F. Logs go to stderr, data and reports to
// stdout or --out files. Exit codes: 0 ok, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "putf/checkpoint.hpp"
#include "putf/dataset.hpp"
#include "putf/gradcheck.hpp"
#include "putf/io.hpp"
#include "putf/loss.hpp"
#include "putf/metrics.hpp"
#include "putf/pipeline.hpp"
#include "putf/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::vector<double> parse_csv_doubles(const std::string& csv) {
    std::vector<double> out;
    std::size_t p = 0;
    while (p <= csv.size()) {
        std::size_t comma = csv.find(',', p);
        if (comma == std::string::npos) comma = csv.size();
        const std::string tok = csv.substr(p, comma - p);
        double v = 0;
        auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || end != tok.data() + tok.size())
            throw putf::ArgumentError("bad number '" + tok + "' in list '" + csv + "'");
        out.push_back(v);
        p = comma + 1;
    }
    return out;
}

std::vector<std::size_t> parse_csv_sizes(const std::string& csv) {
    std::vector<std::size_t> out;
    for (double v : parse_csv_doubles(csv)) out.push_back(static_cast<std::size_t>(v));
    return out;
}

std::vector<putf::SurfaceRef> parse_shapes(const std::string& csv) {
    std::vector<putf::SurfaceRef> shapes;
    std::size_t p = 0;
    // split on ',' outside of "key=value" specs is ambiguous, so shapes are
    // separated by '+' when they carry parameters ("sphere:R=2+torus")
    const char sep = csv.find('+') != std::string::npos ? '+' : ',';
    while (p <= csv.size()) {
        std::size_t q = csv.find(sep, p);
        if (q == std::string::npos) q = csv.size();
        const std::string tok = csv.substr(p, q - p);
        if (!tok.empty()) shapes.push_back(putf::SurfaceRef::parse(tok));
        p = q + 1;
    }
    if (shapes.empty()) throw putf::ArgumentError("no shapes in '" + csv + "'");
    return shapes;
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw putf::IoError("cannot write: " + out_path);
    out << text;
}

std::string block_of(const std::string& name) {
    const auto dot = name.find('.');
    const std::string top = name.substr(0, dot);
    if (top == "head" || top == "tail") return top;
    const auto rest = name.substr(dot + 1);
    return top + "." + rest.substr(0, rest.find('.'));
}

int cmd_generate(const std::string& shapes_csv, std::size_t n_in, std::size_t ratio,
                 std::size_t count, std::uint64_t seed, const std::string& out_dir) {
    const auto shapes = parse_shapes(shapes_csv);
    const auto samples = putf::generate_dataset(shapes, n_in, ratio, count, seed);
    putf::save_dataset(samples, out_dir);
    std::cout << "generated " << samples.size() << " samples (" << n_in << " -> " << n_in * ratio
              << " points) in " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& ckpt_path,
              const std::string& manifest_path, putf::TrainConfig tc, putf::ModelConfig cfg) {
    const auto data = putf::load_dataset(data_dir);

    // upsampling ratio comes from the data itself
    const std::size_t n_in = data.front().sparse.size();
    const std::size_t n_out = data.front().dense.size();
    if (n_out % n_in != 0)
        throw putf::ArgumentError("train: dense size is not an integer multiple of sparse size");
    cfg.r = n_out / n_in;
    for (const auto& rec : data)
        if (rec.sparse.size() != n_in || rec.dense.size() != n_out)
            throw putf::ArgumentError("train: sample '" + rec.id + "' has inconsistent sizes");
    cfg.validate();
    tc.validate();

    auto params = putf::init_params<float>(cfg, tc.seed);
    std::cerr << "training on " << data.size() << " samples, ratio " << cfg.r << ", "
              << putf::param_count(cfg).total << " parameters\n";
    const auto result = putf::train_model<float>(
        data, cfg, params, tc, [&](std::size_t epoch, const putf::EpochStat& stat) {
            std::fprintf(stderr, "epoch %zu/%zu loss=%.6g lr=%.3g (%.1fs)\n", epoch + 1, tc.epochs,
                         stat.mean_loss, tc.lr_at_epoch(epoch), stat.seconds);
        });
    putf::save_checkpoint(params, cfg, ckpt_path);
    std::cerr << "saved best epoch " << result.best_epoch << " (loss " << result.best_loss
              << ") to " << ckpt_path << "\n";

    // quick self-check on the first sample, reported in the run manifest
    auto up = putf::upsample_cloud(data.front().sparse, cfg, params,
                                   std::min<std::size_t>(n_in, 256));
    const auto report = putf::evaluate(up, data.front().dense, data.front().surface);

    json m;
    m["train_config"] = {{"epochs", tc.epochs},
                         {"batch_size", tc.batch_size},
                         {"lr0", tc.lr0},
                         {"lr_decay", tc.lr_decay},
                         {"decay_interval", tc.decay_interval},
                         {"seed", tc.seed},
                         {"optimizer", tc.optimizer},
                         {"dataset", data_dir},
                         {"checkpoint", ckpt_path}};
    m["model_config"] = {{"encoders", cfg.encoders},       {"channels", cfg.channels},
                         {"head_channels", cfg.head_channels}, {"k", cfg.k},
                         {"psi", cfg.psi},                 {"ratio", cfg.r},
                         {"scaled_attention", cfg.scaled_attention}};
    m["checkpoint_sha1"] = putf::git_blob_sha1(putf::read_file_bytes(ckpt_path));
    m["best_epoch"] = result.best_epoch;
    m["best_loss"] = result.best_loss;
    m["steps"] = result.steps;
    json losses = json::array(), seconds = json::array();
    for (const auto& e : result.epochs) {
        losses.push_back(e.mean_loss);
        seconds.push_back(e.seconds);
    }
    m["epoch_loss"] = losses;
    m["epoch_seconds"] = seconds;
    m["first_sample_metrics"] = {{"cd_e-3", report.cd},
                                 {"hd_e-3", report.hd},
                                 {"p2f_e-3", report.p2f},
                                 {"n_pred", report.n_pred},
                                 {"n_gt", report.n_gt}};
    const std::string mpath = manifest_path.empty() ? ckpt_path + ".run.json" : manifest_path;
    std::ofstream mf(mpath, std::ios::binary);
    if (!mf) throw putf::IoError("cannot write: " + mpath);
    mf << m.dump(2) << "\n";
    std::cout << "best_loss=" << result.best_loss << " best_epoch=" << result.best_epoch
              << " checkpoint=" << ckpt_path << "\n";
    return 0;
}

int cmd_upsample(const std::string& in_path, const std::string& ckpt_path, std::size_t ratio,
                 std::size_t patch_size, double coverage, const std::string& out_path) {
    auto [cfg, params] = putf::load_checkpoint<float>(ckpt_path);
    if (ratio != 0 && ratio != cfg.r)
        throw putf::ArgumentError("upsample: requested ratio " + std::to_string(ratio) +
                                  " does not match checkpoint ratio " + std::to_string(cfg.r));
    const auto cloud = putf::read_xyz(in_path);
    const auto dense = putf::upsample_cloud(cloud, cfg, params, patch_size, coverage);
    putf::write_xyz(dense, out_path);
    std::cerr << "upsampled " << cloud.size() << " -> " << dense.size() << " points into "
              << out_path << "\n";
    return 0;
}

int cmd_evaluate(const std::string& pred_path, const std::string& gt_path,
                 const std::string& surface_spec) {
    const auto pred = putf::read_xyz(pred_path);
    const auto gt = putf::read_xyz(gt_path);
    const auto surface = putf::SurfaceRef::parse(surface_spec);
    const auto report = putf::evaluate(pred, gt, surface);
    std::cout << report.line() << "\n";
    if (!std::isfinite(report.cd) || !std::isfinite(report.hd) || !std::isfinite(report.p2f))
        return 1;
    return 0;
}

int cmd_noise_sweep(const std::string& in_path, const std::string& gt_path,
                    const std::string& surface_spec, const std::string& ckpt_path,
                    std::size_t patch_size, const std::string& betas_csv, std::uint64_t seed,
                    const std::string& out_path) {
    auto [cfg, params] = putf::load_checkpoint<float>(ckpt_path);
    const auto sparse = putf::read_xyz(in_path);
    const auto gt = putf::read_xyz(gt_path);
    const auto surface = putf::SurfaceRef::parse(surface_spec);
    const auto betas = parse_csv_doubles(betas_csv);
    const auto rows = putf::noise_sweep(sparse, gt, surface, cfg, params, patch_size, betas, seed);
    emit(putf::format_noise_table(rows), out_path);
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    using putf::Tensor;
    putf::ModelConfig cfg = putf::ModelConfig::tiny();
    auto params = putf::init_params<double>(cfg, seed);
    putf::Rng rng(seed ^ 0x5eedULL);
    putf::PointCloud cloud;
    cloud.pts.resize(8);
    for (auto& p : cloud.pts)
        p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto nbr = putf::knn(cloud, cfg.k);
    auto pts = cloud.to_tensor<double>();
    Tensor<double> target(putf::Shape{8 * cfg.r, 3});
    for (double& v : target.values_mut()) v = rng.uniform(-1, 1);

    std::vector<std::pair<std::string, Tensor<double>>> inputs{{"points", pts}};
    params.visit([&](const std::string& name, Tensor<double>& t, bool trainable) {
        if (trainable) inputs.emplace_back(name, t);
    });
    const auto report = putf::grad_check<double>(
        [&]() {
            return putf::chamfer_loss(putf::forward(pts, nbr, cfg, params, true), target);
        },
        inputs, 1e-5, 1e-4);

    // fold per-tensor entries into per-block maxima
    std::vector<std::pair<std::string, double>> blocks;
    for (const auto& e : report.entries) {
        const std::string b = e.name == "points" ? "points" : block_of(e.name);
        if (!blocks.empty() && blocks.back().first == b)
            blocks.back().second = std::max(blocks.back().second, e.max_rel_err);
        else
            blocks.emplace_back(b, e.max_rel_err);
    }
    for (const auto& [name, err] : blocks)
        std::printf("%-18s max_rel_err=%.3e\n", name.c_str(), err);
    std::printf("overall            max_rel_err=%.3e tol=%.0e\n", report.max_rel_err, report.tol);
    if (!report.passed()) {
        for (const auto& e : report.entries)
            if (e.max_rel_err >= report.tol)
                std::fprintf(stderr, "FAIL %s err=%.3e analytic=%.6g numeric=%.6g\n",
                             e.name.c_str(), e.max_rel_err, e.analytic, e.numeric);
        return 1;
    }
    std::printf("gradcheck PASS\n");
    return 0;
}

int cmd_params(std::size_t encoders, const std::string& channels_csv, std::size_t head,
               std::size_t psi, std::size_t ratio, std::size_t k) {
    putf::ModelConfig cfg = putf::ModelConfig::with_encoders(encoders);
    if (!channels_csv.empty()) cfg.channels = parse_csv_sizes(channels_csv);
    cfg.head_channels = head;
    cfg.psi = psi;
    cfg.r = ratio;
    cfg.k = k;
    cfg.validate();

    const auto count = putf::param_count(cfg);
    for (const auto& b : count.blocks) std::printf("%-18s %10zu\n", b.block.c_str(), b.count);
    std::printf("%-18s %10zu\n", "total", count.total);

    const putf::ModelConfig def;
    if (cfg.encoders == def.encoders && cfg.channels == def.channels &&
        cfg.head_channels == def.head_channels && cfg.psi == def.psi && cfg.r == def.r) {
        constexpr double kReference = 969900.0;  // published total for this configuration
        const double delta = (double(count.total) - kReference) / kReference * 100.0;
        std::printf("delta vs 969.9k reference: %+.2f%%\n", delta);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"point cloud upsampling transformer"};
    app.require_subcommand(1);
    std::function<int()> action;

    // generate
    {
        auto* sub = app.add_subcommand("generate", "Sample synthetic surface datasets");
        auto shapes = std::make_shared<std::string>("sphere,torus,cylinder,bump");
        auto n_in = std::make_shared<std::size_t>(256);
        auto ratio = std::make_shared<std::size_t>(4);
        auto count = std::make_shared<std::size_t>(64);
        auto seed = std::make_shared<std::uint64_t>(1);
        auto out = std::make_shared<std::string>();
        sub->add_option("--shapes", *shapes, "Shape list (name or name:key=val, ',' or '+' separated)");
        sub->add_option("--n-in", *n_in, "Sparse points per sample");
        sub->add_option("--ratio", *ratio, "Upsampling ratio r");
        sub->add_option("--count", *count, "Number of samples");
        sub->add_option("--seed", *seed, "Generator seed");
        sub->add_option("--out", *out, "Output directory")->required();
        sub->callback([=, &action]() {
            action = [=]() { return cmd_generate(*shapes, *n_in, *ratio, *count, *seed, *out); };
        });
    }

    // train
    {
        auto* sub = app.add_subcommand("train", "Train on a generated dataset");
        auto data = std::make_shared<std::string>();
        auto ckpt = std::make_shared<std::string>();
        auto manifest = std::make_shared<std::string>();
        auto preset = std::make_shared<std::string>("desk");
        auto tc = std::make_shared<putf::TrainConfig>();
        auto cfg = std::make_shared<putf::ModelConfig>();
        auto encoders = std::make_shared<std::size_t>(cfg->encoders);
        auto channels = std::make_shared<std::string>();
        sub->add_option("--data", *data, "Dataset directory (from generate)")->required();
        sub->add_option("--ckpt", *ckpt, "Checkpoint output path")->required();
        sub->add_option("--manifest", *manifest, "Run manifest path (default <ckpt>.run.json)");
        sub->add_option("--preset", *preset, "desk or paper defaults")
            ->check(CLI::IsMember({"desk", "paper"}));
        auto* batch_opt = sub->add_option("--batch-size", tc->batch_size, "Minibatch size");
        sub->add_option("--epochs", tc->epochs, "Training epochs");
        sub->add_option("--lr", tc->lr0, "Initial learning rate");
        sub->add_option("--lr-decay", tc->lr_decay, "Decay factor");
        sub->add_option("--decay-interval", tc->decay_interval, "Epochs per decay step");
        sub->add_option("--seed", tc->seed, "Run seed");
        sub->add_option("--optimizer", tc->optimizer, "adam or sgd")
            ->check(CLI::IsMember({"adam", "sgd"}));
        sub->add_option("--encoders", *encoders, "Encoder count");
        sub->add_option("--channels", *channels, "Per-encoder widths, comma separated");
        sub->add_option("--k", cfg->k, "Neighborhood size");
        sub->add_option("--psi", cfg->psi, "Attention reduction ratio");
        sub->callback([=, &action]() {
            action = [=]() {
                putf::TrainConfig tconf = *tc;
                if (*preset == "paper" && batch_opt->count() == 0) tconf.batch_size = 64;
                putf::ModelConfig mconf = *cfg;
                if (*encoders != mconf.encoders) {
                    mconf = putf::ModelConfig::with_encoders(*encoders);
                    mconf.k = cfg->k;
                    mconf.psi = cfg->psi;
                }
                if (!channels->empty()) mconf.channels = parse_csv_sizes(*channels);
                return cmd_train(*data, *ckpt, *manifest, tconf, mconf);
            };
        });
    }

    // upsample
    {
        auto* sub = app.add_subcommand("upsample", "Upsample a point cloud with a checkpoint");
        auto in = std::make_shared<std::string>();
        auto ckpt = std::make_shared<std::string>();
        auto ratio = std::make_shared<std::size_t>(0);
        auto patch = std::make_shared<std::size_t>(256);
        auto coverage = std::make_shared<double>(3.0);
        auto out = std::make_shared<std::string>();
        sub->add_option("--in", *in, "Input .xyz")->required();
        sub->add_option("--ckpt", *ckpt, "Checkpoint path")->required();
        sub->add_option("--ratio", *ratio, "Expected ratio (must match the checkpoint)");
        sub->add_option("--patch-size", *patch, "Seed patch size");
        sub->add_option("--coverage", *coverage, "Patch coverage factor");
        sub->add_option("--out", *out, "Output .xyz")->required();
        sub->callback([=, &action]() {
            action = [=]() { return cmd_upsample(*in, *ckpt, *ratio, *patch, *coverage, *out); };
        });
    }

    // evaluate
    {
        auto* sub = app.add_subcommand("evaluate", "CD/HD/P2F report for a prediction");
        auto pred = std::make_shared<std::string>();
        auto gt = std::make_shared<std::string>();
        auto surface = std::make_shared<std::string>();
        sub->add_option("--pred", *pred, "Predicted .xyz")->required();
        sub->add_option("--gt", *gt, "Ground-truth .xyz")->required();
        sub->add_option("--surface", *surface, "Surface spec, e.g. sphere:R=1")->required();
        sub->callback([=, &action]() {
            action = [=]() { return cmd_evaluate(*pred, *gt, *surface); };
        });
    }

    // noise-sweep
    {
        auto* sub = app.add_subcommand("noise-sweep", "Noise robustness table over beta levels");
        auto in = std::make_shared<std::string>();
        auto gt = std::make_shared<std::string>();
        auto surface = std::make_shared<std::string>();
        auto ckpt = std::make_shared<std::string>();
        auto patch = std::make_shared<std::size_t>(256);
        auto betas = std::make_shared<std::string>("0,0.005,0.01,0.02");
        auto seed = std::make_shared<std::uint64_t>(1);
        auto out = std::make_shared<std::string>();
        sub->add_option("--in", *in, "Sparse input .xyz")->required();
        sub->add_option("--gt", *gt, "Ground-truth dense .xyz")->required();
        sub->add_option("--surface", *surface, "Surface spec")->required();
        sub->add_option("--ckpt", *ckpt, "Checkpoint path")->required();
        sub->add_option("--patch-size", *patch, "Seed patch size");
        sub->add_option("--betas", *betas, "Noise levels, comma separated");
        sub->add_option("--seed", *seed, "Noise seed");
        sub->add_option("--out", *out, "Write the table here instead of stdout");
        sub->callback([=, &action]() {
            action = [=]() {
                return cmd_noise_sweep(*in, *gt, *surface, *ckpt, *patch, *betas, *seed, *out);
            };
        });
    }

    // gradcheck
    {
        auto* sub = app.add_subcommand("gradcheck", "64-bit finite-difference gradient suite");
        auto seed = std::make_shared<std::uint64_t>(1);
        sub->add_option("--seed", *seed, "Instance seed");
        sub->callback([=, &action]() {
            action = [=]() { return cmd_gradcheck(*seed); };
        });
    }

    // params
    {
        auto* sub = app.add_subcommand("params", "Parameter count breakdown for a config");
        auto encoders = std::make_shared<std::size_t>(5);
        auto channels = std::make_shared<std::string>();
        auto head = std::make_shared<std::size_t>(16);
        auto psi = std::make_shared<std::size_t>(4);
        auto ratio = std::make_shared<std::size_t>(4);
        auto k = std::make_shared<std::size_t>(20);
        sub->add_option("--encoders", *encoders, "Encoder count");
        sub->add_option("--channels", *channels, "Override widths, comma separated");
        sub->add_option("--head-channels", *head, "Head feature width");
        sub->add_option("--psi", *psi, "Attention reduction ratio");
        sub->add_option("--ratio", *ratio, "Upsampling ratio");
        sub->add_option("--k", *k, "Neighborhood size");
        sub->callback([=, &action]() {
            action = [=]() { return cmd_params(*encoders, *channels, *head, *psi, *ratio, *k); };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        return action();
    } catch (const putf::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
