#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "vmb/bench.hpp"
#include "vmb/checkpoint.hpp"
#include "vmb/context.hpp"
#include "vmb/data.hpp"
#include "vmb/eval.hpp"
#include "vmb/train.hpp"

namespace fs = std::filesystem;
using namespace vmb;

namespace {

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return RunConfig{};
    return parse_config_file(path);
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

Tensor load_image_tensor(const std::string& path, int image_size) {
    ManifestRecord rec;
    rec.image_path = path;
    rec.score = 1.0; // unused
    AugmentConfig no_aug;
    no_aug.enabled = false;
    std::mt19937_64 rng(0);
    return load_sample(rec, "", image_size, false, no_aug, rng).pixels;
}

std::string metrics_csv(const std::string& variant, const MetricsReport& r,
                        const std::string& cfg_hash) {
    std::string out = "variant,pc,mae,rmse,n,config_hash\n";
    out += variant + "," + format_double(r.pc) + "," + format_double(r.mae) + "," +
           format_double(r.rmse) + "," + std::to_string(r.n) + "," + cfg_hash + "\n";
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"VM-BeautyNet: dual-backbone facial beauty regression"};
    app.require_subcommand(1);
    app.fallthrough(); // allow global flags after the subcommand
    bool quiet = false;
    app.add_flag("--quiet", quiet, "suppress human-readable tables");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset + manifest");
    std::string synth_out;
    int synth_n = 200, synth_size = 64, synth_folds = 5;
    std::uint64_t synth_seed = 42;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--n", synth_n, "number of images");
    synth->add_option("--size", synth_size, "image side length");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--folds", synth_folds, "fold count");

    // train
    auto* train_cmd = app.add_subcommand("train", "train on one fold split");
    std::string train_config, train_manifest, train_out;
    int train_fold = 1, train_workers = 1;
    train_cmd->add_option("--config", train_config, "run config file");
    train_cmd->add_option("--manifest", train_manifest, "dataset manifest CSV")->required();
    train_cmd->add_option("--fold", train_fold, "held-out test fold")->required();
    train_cmd->add_option("--out", train_out, "output directory")->required();
    train_cmd->add_option("--workers", train_workers, "data-prefetch threads");

    // crossval
    auto* cv_cmd = app.add_subcommand("crossval", "K-fold cross-validation");
    std::string cv_config, cv_manifest, cv_out;
    cv_cmd->add_option("--config", cv_config, "run config file");
    cv_cmd->add_option("--manifest", cv_manifest, "dataset manifest CSV")->required();
    cv_cmd->add_option("--out", cv_out, "output directory")->required();

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "four-variant ablation study");
    std::string ab_config, ab_manifest, ab_out;
    ablate_cmd->add_option("--config", ab_config, "run config file");
    ablate_cmd->add_option("--manifest", ab_manifest, "dataset manifest CSV")->required();
    ablate_cmd->add_option("--out", ab_out, "output directory")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a fold");
    std::string ev_ckpt, ev_manifest, ev_variant = "learned_fusion", ev_out;
    int ev_fold = 1;
    eval_cmd->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--manifest", ev_manifest, "dataset manifest CSV")->required();
    eval_cmd->add_option("--fold", ev_fold, "test fold")->required();
    eval_cmd->add_option("--variant", ev_variant, "vit_only|mamba_only|averaging|learned_fusion");
    eval_cmd->add_option("--out", ev_out, "optional output directory for metrics.csv");

    // predict
    auto* pred_cmd = app.add_subcommand("predict", "score one image");
    std::string pr_ckpt, pr_image;
    pred_cmd->add_option("--checkpoint", pr_ckpt, "checkpoint file")->required();
    pred_cmd->add_option("--image", pr_image, "input image (PNG/JPEG)")->required();

    // saliency
    auto* sal_cmd = app.add_subcommand("saliency", "token attribution map for one image");
    std::string sa_ckpt, sa_image, sa_branch = "fused", sa_out;
    sal_cmd->add_option("--checkpoint", sa_ckpt, "checkpoint file")->required();
    sal_cmd->add_option("--image", sa_image, "input image (PNG/JPEG)")->required();
    sal_cmd->add_option("--branch", sa_branch, "vit|mamba|fused");
    sal_cmd->add_option("--out", sa_out, "output directory")->required();

    // bench-scan
    auto* bench_cmd = app.add_subcommand("bench-scan", "scan vs attention scaling benchmark");
    std::string be_lengths = "128,256,512,1024", be_out;
    int be_trials = 5;
    bench_cmd->add_option("--lengths", be_lengths, "comma-separated sequence lengths");
    bench_cmd->add_option("--trials", be_trials, "timed trials per point");
    bench_cmd->add_option("--out", be_out, "optional output directory for bench.csv");

    // print-config
    auto* pc_cmd = app.add_subcommand("print-config", "print the effective configuration");
    std::string pc_config;
    pc_cmd->add_option("--config", pc_config, "run config file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (synth->parsed()) {
        synth_dataset(synth_out, synth_n, synth_size, synth_seed, synth_folds);
        if (!quiet) {
            std::cout << "wrote " << synth_n << " images + manifest.csv to " << synth_out << "\n";
        }
        return 0;
    }

    if (train_cmd->parsed()) {
        RunConfig cfg = load_config_or_default(train_config);
        DatasetManifest manifest = load_manifest(train_manifest);
        if (train_fold < 1 || train_fold > manifest.fold_count) {
            throw ConfigError("--fold " + std::to_string(train_fold) + " outside 1.." +
                              std::to_string(manifest.fold_count));
        }
        VmBeautyNet model = build_fold_model(cfg, train_fold);
        TrainOptions opts;
        opts.checkpoint_dir = train_out;
        opts.workers = train_workers;
        opts.verbose = !quiet;
        TrainResult res = train(model, manifest, train_fold, cfg, opts);
        if (!quiet && !res.history.empty()) {
            const auto& last = res.history.back();
            std::cout << "final val_pc " << format_double(last.val_pc) << " val_mae "
                      << format_double(last.val_mae) << " val_rmse "
                      << format_double(last.val_rmse) << "\n";
        }
        return 0;
    }

    if (cv_cmd->parsed()) {
        RunConfig cfg = load_config_or_default(cv_config);
        DatasetManifest manifest = load_manifest(cv_manifest);
        TrainOptions opts;
        opts.checkpoint_dir = cv_out;
        opts.verbose = !quiet;
        CrossValResult res = cross_validate(manifest, cfg, opts);
        std::string csv = "fold,pc,mae,rmse,n\n";
        for (std::size_t i = 0; i < res.folds.size(); ++i) {
            const auto& r = res.folds[i];
            csv += std::to_string(i + 1) + "," + format_double(r.pc) + "," +
                   format_double(r.mae) + "," + format_double(r.rmse) + "," +
                   std::to_string(r.n) + "\n";
        }
        csv += "mean," + format_double(res.mean.pc) + "," + format_double(res.mean.mae) + "," +
               format_double(res.mean.rmse) + "," + std::to_string(res.mean.n) + "\n";
        write_text(fs::path(cv_out) / "crossval.csv", csv);
        if (!quiet) std::cout << csv;
        return 0;
    }

    if (ablate_cmd->parsed()) {
        RunConfig cfg = load_config_or_default(ab_config);
        DatasetManifest manifest = load_manifest(ab_manifest);
        auto rows = ablate(manifest, cfg, !quiet);
        write_text(fs::path(ab_out) / "ablation.csv", ablation_csv(rows));
        if (!quiet) std::cout << ablation_table(rows);
        return 0;
    }

    if (eval_cmd->parsed()) {
        LoadedCheckpoint ckpt = load_checkpoint(ev_ckpt);
        DatasetManifest manifest = load_manifest(ev_manifest);
        auto [train_recs, test_recs] = fold_split(manifest, ev_fold);
        const Variant variant = variant_from_name(ev_variant);
        MetricsReport r = evaluate(ckpt.model, test_recs, manifest.base_dir, variant);
        if (!quiet) {
            std::printf("%-16s  PC %8.4f  MAE %8.4f  RMSE %8.4f  n %lld\n", ev_variant.c_str(),
                        r.pc, r.mae, r.rmse, static_cast<long long>(r.n));
        }
        const std::string csv = metrics_csv(ev_variant, r, config_hash(ckpt.config));
        std::cout << csv;
        if (!ev_out.empty()) write_text(fs::path(ev_out) / "metrics.csv", csv);
        return 0;
    }

    if (pred_cmd->parsed()) {
        LoadedCheckpoint ckpt = load_checkpoint(pr_ckpt);
        Tensor image = load_image_tensor(pr_image, ckpt.model.config.image_size);
        NoGradGuard ng;
        ForwardResult fwd = model_forward(ckpt.model, image);
        std::cout << "y_hat " << format_double(fwd.y_hat.item()) << "\n"
                  << "p_vit " << format_double(fwd.p_vit.item()) << "\n"
                  << "p_mamba " << format_double(fwd.p_mamba.item()) << "\n";
        return 0;
    }

    if (sal_cmd->parsed()) {
        const Branch branch = branch_from_name(sa_branch);
        LoadedCheckpoint ckpt = load_checkpoint(sa_ckpt);
        Tensor image = load_image_tensor(sa_image, ckpt.model.config.image_size);
        SaliencyMap map = saliency(ckpt.model, image, branch);
        fs::create_directories(sa_out);
        ImageU8 base = decode_image(sa_image);
        if (base.width != ckpt.model.config.image_size ||
            base.height != ckpt.model.config.image_size) {
            base = to_u8(resize_bilinear(to_float(base), ckpt.model.config.image_size,
                                         ckpt.model.config.image_size));
        }
        write_png((fs::path(sa_out) / "overlay.png").string(), saliency_overlay(map, base));
        write_text(fs::path(sa_out) / "grid.csv", saliency_grid_csv(map));
        if (!quiet) {
            std::cout << "wrote overlay.png and grid.csv (" << map.side << "x" << map.side
                      << ", branch " << branch_name(map.branch) << ") to " << sa_out << "\n";
        }
        return 0;
    }

    if (bench_cmd->parsed()) {
        std::vector<std::int64_t> lengths;
        std::stringstream ss(be_lengths);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (!tok.empty()) lengths.push_back(std::stoll(tok));
        }
        BenchResult r = bench_scan(lengths, be_trials);
        if (!quiet) std::cout << bench_table(r);
        if (!be_out.empty()) write_text(fs::path(be_out) / "bench.csv", bench_csv(r));
        return 0;
    }

    if (pc_cmd->parsed()) {
        RunConfig cfg = load_config_or_default(pc_config);
        std::cout << print_config(cfg);
        return 0;
    }

    return 2;
}

} // namespace

int main(int argc, char** argv) {
    init_context_from_env();
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
