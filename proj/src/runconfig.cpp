#include "vmb/runconfig.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "vmb/context.hpp"
#include "vmb/error.hpp"

namespace vmb {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

struct Field {
    std::string section;
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&, int line)> set;
};

int parse_int(const std::string& v, int line) {
    int out = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
        throw ConfigError("config line " + std::to_string(line) + ": expected integer, got '" + v + "'");
    }
    return out;
}

std::uint64_t parse_u64(const std::string& v, int line) {
    std::uint64_t out = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
        throw ConfigError("config line " + std::to_string(line) + ": expected unsigned integer, got '" + v + "'");
    }
    return out;
}

double parse_double(const std::string& v, int line) {
    double out = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
        throw ConfigError("config line " + std::to_string(line) + ": expected number, got '" + v + "'");
    }
    return out;
}

bool parse_bool(const std::string& v, int line) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("config line " + std::to_string(line) + ": expected true/false, got '" + v + "'");
}

#define INT_FIELD(sec, name, expr)                                                     \
    Field{sec, name, [](const RunConfig& c) { return std::to_string(c.expr); },        \
          [](RunConfig& c, const std::string& v, int ln) { c.expr = parse_int(v, ln); }}
#define DBL_FIELD(sec, name, expr)                                                     \
    Field{sec, name, [](const RunConfig& c) { return format_double(c.expr); },         \
          [](RunConfig& c, const std::string& v, int ln) { c.expr = parse_double(v, ln); }}
#define BOOL_FIELD(sec, name, expr)                                                    \
    Field{sec, name, [](const RunConfig& c) { return c.expr ? "true" : "false"; },     \
          [](RunConfig& c, const std::string& v, int ln) { c.expr = parse_bool(v, ln); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        INT_FIELD("model", "image_size", image_size),
        INT_FIELD("model", "patch_size", patch_size),
        INT_FIELD("model", "channels", channels),
        INT_FIELD("model", "vit_depth", vit_depth),
        INT_FIELD("model", "vit_dim", vit_dim),
        INT_FIELD("model", "vit_heads", vit_heads),
        INT_FIELD("model", "vit_mlp_ratio", vit_mlp_ratio),
        INT_FIELD("model", "mamba_depth", mamba_depth),
        INT_FIELD("model", "mamba_dim", mamba_dim),
        INT_FIELD("model", "mamba_d_state", mamba_d_state),
        INT_FIELD("model", "mamba_conv_kernel", mamba_conv_kernel),
        INT_FIELD("model", "mamba_expand", mamba_expand),
        BOOL_FIELD("model", "mamba_bidirectional", mamba_bidirectional),
        INT_FIELD("train", "epochs", train.epochs),
        INT_FIELD("train", "batch_size", train.batch_size),
        DBL_FIELD("train", "learning_rate", train.learning_rate),
        DBL_FIELD("train", "weight_decay", train.weight_decay),
        DBL_FIELD("train", "beta1", train.beta1),
        DBL_FIELD("train", "beta2", train.beta2),
        DBL_FIELD("train", "eps", train.eps),
        Field{"train", "seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
              [](RunConfig& c, const std::string& v, int ln) { c.train.seed = parse_u64(v, ln); }},
        DBL_FIELD("train", "grad_clip", train.grad_clip),
        BOOL_FIELD("train", "cosine_schedule", train.cosine_schedule),
        INT_FIELD("train", "keep_last", train.keep_last),
        Field{"train", "precision", [](const RunConfig& c) { return c.train.precision; },
              [](RunConfig& c, const std::string& v, int) { c.train.precision = v; }},
        BOOL_FIELD("augment", "enabled", augment.enabled),
        DBL_FIELD("augment", "flip_prob", augment.flip_prob),
        DBL_FIELD("augment", "rotation_degrees", augment.rotation_degrees),
        DBL_FIELD("augment", "jitter_brightness", augment.jitter_brightness),
        DBL_FIELD("augment", "jitter_contrast", augment.jitter_contrast),
        DBL_FIELD("augment", "jitter_saturation", augment.jitter_saturation),
    };
    return f;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

#undef INT_FIELD
#undef DBL_FIELD
#undef BOOL_FIELD

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = t.substr(1, t.size() - 2);
            bool known = false;
            for (const Field& f : fields()) known = known || f.section == section;
            if (!known) {
                throw ConfigError("config line " + std::to_string(ln) + ": unknown section [" +
                                  section + "]");
            }
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(ln) + ": expected 'key = value'");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        bool matched = false;
        for (const Field& f : fields()) {
            if (f.section == section && f.key == key) {
                f.set(cfg, value, ln);
                matched = true;
                break;
            }
        }
        if (!matched) {
            throw ConfigError("config line " + std::to_string(ln) + ": unknown key '" + key +
                              "' in section [" + section + "]");
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string print_config(const RunConfig& cfg) {
    std::ostringstream out;
    std::string section;
    for (const Field& f : fields()) {
        if (f.section != section) {
            if (!section.empty()) out << "\n";
            section = f.section;
            out << "[" << section << "]\n";
        }
        out << f.key << " = " << f.get(cfg) << "\n";
    }
    return out.str();
}

std::string config_hash(const RunConfig& cfg) {
    const std::string text = print_config(cfg);
    return hash_hex(fnv1a(text.data(), text.size()));
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.image_size = image_size;
    m.patch_size = patch_size;
    m.channels = channels;
    m.vit = ViTConfig{vit_depth, vit_dim, vit_heads, vit_mlp_ratio};
    m.mamba = MambaConfig{mamba_depth, mamba_dim, mamba_d_state, mamba_conv_kernel,
                          mamba_expand, mamba_bidirectional};
    return m;
}

void RunConfig::validate() const {
    model_config().validate();
    if (vit_depth < 1 || mamba_depth < 1) {
        throw ConfigError("config: backbone depth must be >= 1");
    }
    const auto& t = train;
    if (t.epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (t.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (!(t.learning_rate > 0)) throw ConfigError("config: learning_rate must be > 0");
    if (t.weight_decay < 0) throw ConfigError("config: weight_decay must be >= 0");
    if (!(t.beta1 >= 0 && t.beta1 < 1) || !(t.beta2 >= 0 && t.beta2 < 1)) {
        throw ConfigError("config: betas must lie in [0, 1)");
    }
    if (!(t.eps > 0)) throw ConfigError("config: eps must be > 0");
    if (t.grad_clip < 0) throw ConfigError("config: grad_clip must be >= 0");
    if (t.keep_last < 0) throw ConfigError("config: keep_last must be >= 0");
    if (t.precision != "f32" && t.precision != "f64") {
        throw ConfigError("config: precision must be f32 or f64, got '" + t.precision + "'");
    }
    const auto& a = augment;
    if (a.flip_prob < 0 || a.flip_prob > 1) throw ConfigError("config: flip_prob must lie in [0, 1]");
    if (a.rotation_degrees < 0) throw ConfigError("config: rotation_degrees must be >= 0");
    if (a.jitter_brightness < 0 || a.jitter_contrast < 0 || a.jitter_saturation < 0) {
        throw ConfigError("config: jitter strengths must be >= 0");
    }
}

} // namespace vmb
