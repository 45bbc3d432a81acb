#include "vmb/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace vmb {

namespace {
constexpr const char* kMagic = "vm-beautynet-checkpoint";
constexpr int kVersion = 1;

std::string read_line(std::istream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("checkpoint truncated: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}
} // namespace

void save_checkpoint(const std::string& path, const VmBeautyNet& model, const RunConfig& cfg,
                     const CheckpointMeta& meta) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    const std::string config_text = print_config(cfg);
    out << kMagic << " " << kVersion << "\n";
    out << "config-bytes " << config_text.size() << "\n" << config_text;
    // fixed format conventions, recorded alongside caller metadata
    std::map<std::string, std::string> entries = meta.entries;
    entries.emplace("format.class_token_init", "zeros");
    entries.emplace("format.head_init", "zero-weight-zero-bias");
    entries.emplace("format.fusion_init", "averaging-0.5");
    entries.emplace("format.discretization", "abar=exp(delta*A),bbar=delta*B");
    entries.emplace("format.bidirectional_reversal", "shared-params-flip-scan-average");
    out << "meta " << entries.size() << "\n";
    for (const auto& [k, v] : entries) out << k << " " << v << "\n";

    const auto params = named_parameters(model);
    out << "tensors " << params.size() << "\n";
    std::int64_t offset = 0;
    for (const auto& p : params) {
        out << p.name << " " << p.tensor.rank();
        for (auto d : p.tensor.shape()) out << " " << d;
        out << " " << offset << "\n";
        offset += p.tensor.numel();
    }
    out << "payload " << offset << "\n";
    std::vector<float> payload;
    payload.reserve(static_cast<std::size_t>(offset));
    for (const auto& p : params) {
        for (double v : p.tensor.data()) payload.push_back(static_cast<float>(v));
    }
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out) throw DataError("failed writing checkpoint payload: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);

    std::istringstream header(read_line(in, path));
    std::string magic;
    int version = -1;
    header >> magic >> version;
    if (magic != kMagic) throw DataError("not a checkpoint file: " + path);
    if (version != kVersion) {
        throw DataError("checkpoint version mismatch in " + path + ": found " +
                        std::to_string(version) + ", expected " + std::to_string(kVersion));
    }

    std::istringstream cfg_line(read_line(in, path));
    std::string tag;
    std::size_t cfg_bytes = 0;
    cfg_line >> tag >> cfg_bytes;
    if (tag != "config-bytes") throw DataError("malformed checkpoint header: " + path);
    std::string config_text(cfg_bytes, '\0');
    in.read(config_text.data(), static_cast<std::streamsize>(cfg_bytes));
    if (!in) throw DataError("checkpoint truncated reading config: " + path);

    LoadedCheckpoint result;
    result.config = parse_config(config_text);

    std::istringstream meta_line(read_line(in, path));
    std::size_t meta_count = 0;
    meta_line >> tag >> meta_count;
    if (tag != "meta") throw DataError("malformed checkpoint header: " + path);
    for (std::size_t i = 0; i < meta_count; ++i) {
        std::istringstream kv(read_line(in, path));
        std::string k, v;
        kv >> k;
        std::getline(kv, v);
        if (!v.empty() && v.front() == ' ') v.erase(0, 1);
        result.meta.entries[k] = v;
    }

    result.model = build_model(result.config.model_config(), result.config.train.seed);
    auto params = named_parameters(result.model);

    std::istringstream tcount_line(read_line(in, path));
    std::size_t tensor_count = 0;
    tcount_line >> tag >> tensor_count;
    if (tag != "tensors") throw DataError("malformed checkpoint header: " + path);
    if (tensor_count != params.size()) {
        throw DataError("checkpoint tensor count mismatch in " + path + ": found " +
                        std::to_string(tensor_count) + ", model has " +
                        std::to_string(params.size()));
    }
    struct Entry {
        Shape shape;
        std::int64_t offset;
    };
    std::vector<Entry> entries(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::istringstream ts(read_line(in, path));
        std::string name;
        std::size_t rank = 0;
        ts >> name >> rank;
        if (name != params[i].name) {
            throw DataError("checkpoint tensor name mismatch: expected '" + params[i].name +
                            "', found '" + name + "'");
        }
        Entry e;
        e.shape.resize(rank);
        for (auto& d : e.shape) ts >> d;
        ts >> e.offset;
        if (!ts) throw DataError("malformed tensor entry for '" + name + "'");
        if (e.shape != params[i].tensor.shape()) {
            throw DataError("checkpoint shape mismatch for '" + name + "': file has " +
                            shape_str(e.shape) + ", model expects " +
                            shape_str(params[i].tensor.shape()));
        }
        entries[i] = std::move(e);
    }

    std::istringstream pl(read_line(in, path));
    std::int64_t total = 0;
    pl >> tag >> total;
    if (tag != "payload") throw DataError("malformed checkpoint header: " + path);
    std::vector<float> payload(static_cast<std::size_t>(total));
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!in) throw DataError("checkpoint truncated reading payload: " + path);

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& dst = params[i].tensor.mutable_data();
        const std::int64_t off = entries[i].offset;
        if (off < 0 || off + params[i].tensor.numel() > total) {
            throw DataError("checkpoint payload overrun for '" + params[i].name + "'");
        }
        for (std::int64_t j = 0; j < params[i].tensor.numel(); ++j) {
            dst[static_cast<std::size_t>(j)] =
                static_cast<double>(payload[static_cast<std::size_t>(off + j)]);
        }
    }
    return result;
}

} // namespace vmb
