#include <iomanip>
#include <iostream>
#include <sstream>

#include "vmb/eval.hpp"
#include "vmb/train.hpp"

namespace vmb {

std::vector<AblationRow> ablate(const DatasetManifest& manifest, const RunConfig& cfg,
                                bool verbose) {
    const Variant variants[] = {Variant::vit_only, Variant::mamba_only, Variant::averaging,
                                Variant::learned_fusion};
    const std::string cfg_hash = config_hash(cfg);

    std::vector<AblationRow> rows;
    for (Variant variant : variants) {
        MetricsReport sum;
        std::uint64_t combined = 0xcbf29ce484222325ULL;
        for (int fold = 1; fold <= manifest.fold_count; ++fold) {
            // same fold seed for every variant: identical init draws, data
            // order and augmentation across the four runs
            VmBeautyNet model = build_fold_model(cfg, fold);
            TrainOptions opts;
            opts.variant = variant;
            if (verbose) {
                std::cerr << "[ablate] training " << variant_name(variant) << " fold " << fold
                          << "\n";
            }
            TrainResult tr = train(model, manifest, fold, cfg, opts);
            combined = fnv1a(tr.data_order_hash.data(), tr.data_order_hash.size(), combined);
            auto [train_recs, test_recs] = fold_split(manifest, fold);
            MetricsReport r = evaluate(model, test_recs, manifest.base_dir, variant);
            sum.pc += r.pc;
            sum.mae += r.mae;
            sum.rmse += r.rmse;
            sum.n += r.n;
        }
        const double k = static_cast<double>(manifest.fold_count);
        AblationRow row;
        row.variant = variant;
        row.metrics.pc = sum.pc / k;
        row.metrics.mae = sum.mae / k;
        row.metrics.rmse = sum.rmse / k;
        row.metrics.n = sum.n;
        row.config_hash = cfg_hash;
        row.data_order_hash = hash_hex(combined);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "variant,pc,mae,rmse,n,config_hash,data_order_hash\n";
    for (const auto& r : rows) {
        out << variant_name(r.variant) << "," << format_double(r.metrics.pc) << ","
            << format_double(r.metrics.mae) << "," << format_double(r.metrics.rmse) << ","
            << r.metrics.n << "," << r.config_hash << "," << r.data_order_hash << "\n";
    }
    return out.str();
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << std::left << std::setw(18) << "variant" << std::right << std::setw(10) << "PC"
        << std::setw(10) << "MAE" << std::setw(10) << "RMSE" << std::setw(8) << "n" << "\n";
    for (const auto& r : rows) {
        out << std::left << std::setw(18) << variant_name(r.variant) << std::right << std::fixed
            << std::setprecision(4) << std::setw(10) << r.metrics.pc << std::setw(10)
            << r.metrics.mae << std::setw(10) << r.metrics.rmse << std::setw(8) << r.metrics.n
            << "\n";
        out.unsetf(std::ios::fixed);
    }
    return out.str();
}

} // namespace vmb
