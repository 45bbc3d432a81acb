#include "vmb/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <limits>
#include <sstream>

#include "vmb/checkpoint.hpp"
#include "vmb/context.hpp"

namespace fs = std::filesystem;

namespace vmb {

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.rank() != 1 || target.rank() != 1 || pred.dim(0) != target.dim(0)) {
        throw ShapeError("mse_loss: length mismatch between " + shape_str(pred.shape()) +
                         " and " + shape_str(target.shape()));
    }
    if (pred.dim(0) < 1) throw ShapeError("mse_loss: empty batch");
    Tensor d = sub(pred, target);
    return mean_all(mul(d, d));
}

VmBeautyNet build_fold_model(const RunConfig& cfg, int fold) {
    return build_model(cfg.model_config(),
                       derive_seed(cfg.train.seed, "init", static_cast<std::uint64_t>(fold)));
}

namespace {

std::vector<NamedParam> trainable_params(const VmBeautyNet& model, Variant variant) {
    auto all = named_parameters(model);
    auto keep = [&](const std::string& name) {
        switch (variant) {
            case Variant::learned_fusion: return true;
            case Variant::averaging: return name.rfind("fusion.", 0) != 0; // fusion stays frozen
            case Variant::vit_only:
                return name.rfind("vit.", 0) == 0 || name.rfind("vit_embed.", 0) == 0;
            case Variant::mamba_only:
                return name.rfind("mamba.", 0) == 0 || name.rfind("mamba_embed.", 0) == 0;
        }
        return true;
    };
    std::vector<NamedParam> out;
    for (auto& p : all) {
        if (keep(p.name)) out.push_back(p);
    }
    return out;
}

Tensor variant_prediction(const VmBeautyNet& model, const Tensor& image, Variant variant) {
    switch (variant) {
        case Variant::vit_only: {
            Tensor z = embed(image, model.config.vit_embed_config(), model.vit_embed);
            return vit_forward(z, model.config.vit, model.vit);
        }
        case Variant::mamba_only: {
            Tensor z = embed(image, model.config.mamba_embed_config(), model.mamba_embed);
            return mamba_forward(z, model.config.mamba, model.mamba);
        }
        case Variant::averaging:
        case Variant::learned_fusion:
            return model_forward(model, image).y_hat;
    }
    throw ConfigError("invalid variant");
}

struct HashAccum {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    void update(std::uint64_t v) { h = fnv1a(&v, sizeof(v), h); }
};

void write_history(const std::string& dir, const std::vector<EpochStats>& history) {
    std::ofstream out(fs::path(dir) / "history.csv", std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write history.csv under " + dir);
    out << history_csv(history);
}

} // namespace

std::string history_csv(const std::vector<EpochStats>& history) {
    std::ostringstream out;
    out << "epoch,mean_train_loss,val_pc,val_mae,val_rmse\n";
    for (const auto& e : history) {
        out << e.epoch << "," << format_double(e.mean_train_loss) << ","
            << format_double(e.val_pc) << "," << format_double(e.val_mae) << ","
            << format_double(e.val_rmse) << "\n";
    }
    return out.str();
}

TrainResult train(VmBeautyNet& model, const DatasetManifest& manifest, int test_fold,
                  const RunConfig& cfg, const TrainOptions& opts) {
    if (!precision_env_forced()) {
        set_precision(cfg.train.precision == "f64" ? Precision::f64 : Precision::f32);
    }
    auto [train_records, test_records] = fold_split(manifest, test_fold);

    AdamW optimizer(trainable_params(model, opts.variant),
                    AdamW::Options{cfg.train.learning_rate, cfg.train.beta1, cfg.train.beta2,
                                   cfg.train.eps, cfg.train.weight_decay});

    const std::uint64_t data_seed =
        derive_seed(cfg.train.seed, "data", static_cast<std::uint64_t>(test_fold));
    const std::uint64_t aug_seed =
        derive_seed(cfg.train.seed, "augment", static_cast<std::uint64_t>(test_fold));

    if (!opts.checkpoint_dir.empty()) {
        std::error_code ec;
        fs::create_directories(opts.checkpoint_dir, ec);
        if (ec) throw DataError("cannot create checkpoint directory: " + opts.checkpoint_dir);
    }

    TrainResult result;
    HashAccum order_hash;
    const int batch_size = cfg.train.batch_size;
    bool stop = false;

    for (int epoch = 1; epoch <= cfg.train.epochs && !stop; ++epoch) {
        std::vector<std::size_t> order(train_records.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937_64 shuffle_rng(derive_seed(data_seed, "epoch", static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        order_hash.update(static_cast<std::uint64_t>(epoch));
        for (std::size_t idx : order) order_hash.update(static_cast<std::uint64_t>(idx));

        const double lr_scale =
            cfg.train.cosine_schedule
                ? 0.5 * (1.0 + std::cos(3.14159265358979323846 * (epoch - 1) /
                                        std::max(1, cfg.train.epochs)))
                : 1.0;

        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t batch_start = 0; batch_start < order.size() && !stop;
             batch_start += static_cast<std::size_t>(batch_size)) {
            const std::size_t batch_end =
                std::min(order.size(), batch_start + static_cast<std::size_t>(batch_size));
            const std::size_t b = batch_end - batch_start;

            // decode + augment (optionally prefetched); deterministic per-sample seeds
            std::vector<Sample> samples(b);
            auto decode_one = [&](std::size_t k) {
                const std::size_t rec_idx = order[batch_start + k];
                std::mt19937_64 rng(derive_seed(
                    aug_seed, "sample",
                    (static_cast<std::uint64_t>(epoch) << 32) ^ static_cast<std::uint64_t>(rec_idx)));
                return load_sample(train_records[rec_idx], manifest.base_dir,
                                   cfg.image_size, true, cfg.augment, rng);
            };
            if (opts.workers > 1) {
                std::vector<std::future<Sample>> futs;
                futs.reserve(b);
                for (std::size_t k = 0; k < b; ++k) {
                    futs.push_back(std::async(std::launch::async, decode_one, k));
                }
                for (std::size_t k = 0; k < b; ++k) samples[k] = futs[k].get();
            } else {
                for (std::size_t k = 0; k < b; ++k) samples[k] = decode_one(k);
            }

            optimizer.zero_grad();
            double batch_loss = 0.0;
            const double inv_b = 1.0 / static_cast<double>(b);
            for (std::size_t k = 0; k < b; ++k) {
                Tensor pred = variant_prediction(model, samples[k].pixels, opts.variant);
                Tensor diff = sub(pred, Tensor::scalar(samples[k].score));
                Tensor sq = mul(diff, diff);
                // scaling by 1/B makes per-sample backward accumulation equal
                // to the batch-mean MSE gradient
                backward(mul_scalar(sq, inv_b));
                batch_loss += sq.item() * inv_b;
            }
            if (!std::isfinite(batch_loss)) {
                throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) +
                                     ", batch starting at sample " + std::to_string(batch_start));
            }
            if (cfg.train.grad_clip > 0.0) optimizer.clip_global_norm(cfg.train.grad_clip);
            optimizer.step(lr_scale);
            loss_sum += batch_loss * static_cast<double>(b);
            loss_count += b;
            if (opts.max_steps && optimizer.step_count() >= *opts.max_steps) stop = true;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(1, loss_count));
        {
            std::vector<double> preds, targets;
            eval_predictions(model, test_records, manifest.base_dir, opts.variant, preds, targets);
            stats.val_mae = mae(preds, targets);
            stats.val_rmse = rmse(preds, targets);
            try {
                stats.val_pc = pearson(preds, targets);
            } catch (const NumericalError&) {
                stats.val_pc = std::numeric_limits<double>::quiet_NaN();
            }
        }
        result.history.push_back(stats);
        if (opts.verbose) {
            std::cout << "epoch " << epoch << " train_mse " << format_double(stats.mean_train_loss)
                      << " val_pc " << format_double(stats.val_pc) << " val_mae "
                      << format_double(stats.val_mae) << " val_rmse "
                      << format_double(stats.val_rmse) << "\n";
        }

        if (!opts.checkpoint_dir.empty()) {
            CheckpointMeta meta;
            meta.entries["fold"] = std::to_string(test_fold);
            meta.entries["epoch"] = std::to_string(epoch);
            meta.entries["variant"] = variant_name(opts.variant);
            meta.entries["data_order_hash"] = hash_hex(order_hash.h);
            char name[48];
            std::snprintf(name, sizeof(name), "checkpoint_epoch_%04d.vmbc", epoch);
            save_checkpoint((fs::path(opts.checkpoint_dir) / name).string(), model, cfg, meta);
            if (cfg.train.keep_last > 0) {
                const int cutoff = epoch - cfg.train.keep_last;
                for (int old = 1; old <= cutoff; ++old) {
                    char old_name[48];
                    std::snprintf(old_name, sizeof(old_name), "checkpoint_epoch_%04d.vmbc", old);
                    std::error_code ec;
                    fs::remove(fs::path(opts.checkpoint_dir) / old_name, ec);
                }
            }
            write_history(opts.checkpoint_dir, result.history);
        }
    }

    result.data_order_hash = hash_hex(order_hash.h);
    if (!opts.checkpoint_dir.empty()) {
        CheckpointMeta meta;
        meta.entries["fold"] = std::to_string(test_fold);
        meta.entries["epoch"] = std::to_string(result.history.empty() ? 0 : result.history.back().epoch);
        meta.entries["variant"] = variant_name(opts.variant);
        meta.entries["data_order_hash"] = result.data_order_hash;
        save_checkpoint((fs::path(opts.checkpoint_dir) / "checkpoint_final.vmbc").string(), model,
                        cfg, meta);
        write_history(opts.checkpoint_dir, result.history);
    }
    return result;
}

CrossValResult cross_validate(const DatasetManifest& manifest, const RunConfig& cfg,
                              const TrainOptions& opts) {
    CrossValResult result;
    for (int fold = 1; fold <= manifest.fold_count; ++fold) {
        VmBeautyNet model = build_fold_model(cfg, fold);
        TrainOptions fold_opts = opts;
        if (!opts.checkpoint_dir.empty()) {
            fold_opts.checkpoint_dir =
                (fs::path(opts.checkpoint_dir) / ("fold" + std::to_string(fold))).string();
        }
        train(model, manifest, fold, cfg, fold_opts);
        auto [train_recs, test_recs] = fold_split(manifest, fold);
        result.folds.push_back(evaluate(model, test_recs, manifest.base_dir, opts.variant));
    }
    MetricsReport mean;
    for (const auto& r : result.folds) {
        mean.pc += r.pc;
        mean.mae += r.mae;
        mean.rmse += r.rmse;
        mean.n += r.n;
    }
    const double k = static_cast<double>(result.folds.size());
    mean.pc /= k;
    mean.mae /= k;
    mean.rmse /= k;
    result.mean = mean;
    return result;
}

} // namespace vmb
