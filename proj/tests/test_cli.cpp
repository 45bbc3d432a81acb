#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "vmb/runconfig.hpp"

namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string output;
};

CmdResult run_cli(const std::string& args) {
    const fs::path out = fs::temp_directory_path() / "vmb_cli_out.txt";
    const std::string cmd = std::string(VMB_CLI_PATH) + " " + args + " > " + out.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
}

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_tiny_config(const fs::path& p, int epochs = 1) {
    std::ofstream out(p);
    out << "[model]\nimage_size = 16\npatch_size = 4\nvit_depth = 1\nvit_dim = 8\n"
           "vit_heads = 1\nvit_mlp_ratio = 2\nmamba_depth = 1\nmamba_dim = 8\n"
           "mamba_d_state = 4\nmamba_conv_kernel = 3\n"
           "[train]\nepochs = "
        << epochs << "\nbatch_size = 4\nlearning_rate = 0.001\nseed = 3\n";
}

} // namespace

TEST_CASE("synth is deterministic across runs and rejects n < folds") {
    const fs::path d1 = fresh_dir("vmb_cli_synth1");
    const fs::path d2 = fresh_dir("vmb_cli_synth2");
    CHECK(run_cli("synth --out " + d1.string() + " --n 8 --size 16 --seed 4").exit_code == 0);
    CHECK(run_cli("synth --out " + d2.string() + " --n 8 --size 16 --seed 4").exit_code == 0);
    for (const auto& entry : fs::directory_iterator(d1)) {
        const auto name = entry.path().filename();
        CHECK(slurp(entry.path()) == slurp(d2 / name));
    }
    CHECK(run_cli("synth --out " + d1.string() + " --n 3 --size 16 --seed 4").exit_code == 2);
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("missing manifest exits 3 and names the path") {
    CmdResult r = run_cli("train --manifest /nonexistent/m.csv --fold 1 --out /tmp/vmb_cli_x");
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("/nonexistent/m.csv") != std::string::npos);
}

TEST_CASE("out-of-range fold exits 2") {
    const fs::path d = fresh_dir("vmb_cli_fold");
    REQUIRE(run_cli("synth --out " + d.string() + " --n 10 --size 16 --seed 5").exit_code == 0);
    CmdResult r = run_cli("train --manifest " + (d / "manifest.csv").string() +
                          " --fold 6 --out " + (d / "run").string());
    CHECK(r.exit_code == 2);
    fs::remove_all(d);
}

TEST_CASE("train writes one history row per epoch plus checkpoints") {
    const fs::path d = fresh_dir("vmb_cli_train");
    REQUIRE(run_cli("synth --out " + d.string() + " --n 10 --size 16 --seed 6").exit_code == 0);
    const fs::path cfg = d / "tiny.ini";
    write_tiny_config(cfg, 2);
    CmdResult r = run_cli("train --config " + cfg.string() + " --manifest " +
                          (d / "manifest.csv").string() + " --fold 1 --out " +
                          (d / "run").string() + " --quiet");
    CHECK(r.exit_code == 0);
    const std::string history = slurp(d / "run" / "history.csv");
    CHECK(std::count(history.begin(), history.end(), '\n') == 3); // header + 2 epochs
    CHECK(fs::exists(d / "run" / "checkpoint_final.vmbc"));
    fs::remove_all(d);
}

TEST_CASE("predict twice prints identical scores") {
    const fs::path d = fresh_dir("vmb_cli_predict");
    REQUIRE(run_cli("synth --out " + d.string() + " --n 6 --size 16 --seed 7").exit_code == 0);
    const fs::path cfg = d / "tiny.ini";
    write_tiny_config(cfg);
    REQUIRE(run_cli("train --config " + cfg.string() + " --manifest " +
                    (d / "manifest.csv").string() + " --fold 1 --out " + (d / "run").string() +
                    " --quiet")
                .exit_code == 0);
    const std::string args = "predict --checkpoint " +
                             (d / "run" / "checkpoint_final.vmbc").string() + " --image " +
                             (d / "img_00000.png").string();
    CmdResult a = run_cli(args);
    CmdResult b = run_cli(args);
    CHECK(a.exit_code == 0);
    CHECK(a.output == b.output);
    CHECK(a.output.find("y_hat") != std::string::npos);
    CHECK(a.output.find("p_vit") != std::string::npos);
    CHECK(a.output.find("p_mamba") != std::string::npos);
    fs::remove_all(d);
}

TEST_CASE("saliency rejects a bogus branch, listing valid tags") {
    CmdResult r = run_cli("saliency --checkpoint x.vmbc --image y.png --branch bogus --out /tmp/z");
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("vit") != std::string::npos);
    CHECK(r.output.find("mamba") != std::string::npos);
    CHECK(r.output.find("fused") != std::string::npos);
}

TEST_CASE("bench-scan rejects a single length") {
    CmdResult r = run_cli("bench-scan --lengths 8 --trials 1");
    CHECK(r.exit_code == 2);
}

TEST_CASE("print-config output re-parses to an identical config") {
    CmdResult r = run_cli("print-config");
    CHECK(r.exit_code == 0);
    vmb::RunConfig parsed = vmb::parse_config(r.output);
    CHECK(vmb::print_config(parsed) == r.output);

    // and a non-default config round-trips through a file
    const fs::path d = fresh_dir("vmb_cli_cfg");
    write_tiny_config(d / "tiny.ini");
    CmdResult r2 = run_cli("print-config --config " + (d / "tiny.ini").string());
    CHECK(r2.exit_code == 0);
    vmb::RunConfig parsed2 = vmb::parse_config(r2.output);
    CHECK(vmb::print_config(parsed2) == r2.output);
    CHECK(r2.output.find("image_size = 16") != std::string::npos);
    fs::remove_all(d);
}

TEST_CASE("defaults carry the reference training recipe") {
    vmb::RunConfig cfg;
    CHECK(cfg.image_size == 224);
    CHECK(cfg.patch_size == 16);
    CHECK(cfg.mamba_depth == 4);
    CHECK(cfg.mamba_dim == 192);
    CHECK(cfg.mamba_bidirectional);
    CHECK(cfg.train.epochs == 50);
    CHECK(cfg.train.batch_size == 32);
    CHECK(cfg.train.learning_rate == 1e-5);
    CHECK(cfg.train.weight_decay == 1e-2);
    CHECK(cfg.train.beta1 == 0.9);
    CHECK(cfg.train.beta2 == 0.999);
    CHECK(cfg.train.eps == 1e-8);
    CHECK(cfg.augment.flip_prob == 0.5);
    CHECK(cfg.augment.rotation_degrees == 10.0);
    CHECK(cfg.augment.jitter_brightness == 0.1);
    CHECK(cfg.augment.jitter_contrast == 0.1);
    CHECK(cfg.augment.jitter_saturation == 0.1);
}

TEST_CASE("unknown config keys are rejected") {
    const fs::path d = fresh_dir("vmb_cli_badcfg");
    std::ofstream out(d / "bad.ini");
    out << "[model]\nimag_size = 16\n";
    out.close();
    CmdResult r = run_cli("print-config --config " + (d / "bad.ini").string());
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("imag_size") != std::string::npos);
    fs::remove_all(d);
}
