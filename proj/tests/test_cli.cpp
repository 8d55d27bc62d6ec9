#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "sfnn/checkpoint.hpp"
#include "sfnn/config.hpp"
#include "sfnn/data.hpp"
#include "sfnn/errors.hpp"

using namespace sfnn;
namespace fs = std::filesystem;

namespace {

// Each test gets a scratch directory that vanishes with the fixture.
struct Scratch {
    fs::path dir;
    explicit Scratch(const std::string& name) : dir(fs::path("cli_scratch") / name) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
    std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

int run_tool(const std::string& args, const std::string& capture_path) {
    const std::string cmd =
        std::string(SFNN_TOOL_PATH) + " " + args + " > " + capture_path + " 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

bool contains(const std::string& text, const std::string& needle) {
    return text.find(needle) != std::string::npos;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    REQUIRE(out.good());
    out << text;
}

// A deliberately small run: tiny synthetic corpus, narrow net, two epochs.
std::string toy_config(const std::string& variant, const std::string& extra = "") {
    std::ostringstream cfg;
    cfg << "[network]\nvariant = " << variant << "\ninput = 28x28x1\n"
        << "conv1_channels = 4\nconv2_channels = 6\nhidden = 12\nwindow = 5\ninit_seed = 3\n";
    if (variant != "lenet")
        cfg << "\n[elastic_net]\nlambda1 = 0.3\nlambda2 = 0.05\n";
    cfg << "\n[optimizer]\nlearning_rate = 0.05\n"
        << "\n[data]\nsource = synthetic\nsynthetic_train_per_class = 3\n"
        << "synthetic_test_per_class = 2\n"
        << "\n[run]\nepochs = 2\nbatch_size = 10\nseed = 11\n"
        << extra;
    return cfg.str();
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("train writes checkpoints, metrics, and a resolved config") {
    Scratch tmp("train_smoke");
    write_file(tmp / "run.cfg", toy_config("lenet"));
    const int rc = run_tool("train --config " + (tmp / "run.cfg") + " --out-dir " + (tmp / "out"),
                            tmp / "stdout.txt");
    CHECK(rc == 0);

    CheckpointData final = read_checkpoint(tmp / "out/checkpoint_final.sfnn");
    CHECK(final.epoch == 2);
    CHECK(fs::exists(tmp / "out/checkpoint_best.sfnn"));

    // Header plus one row per (epoch, split).
    const std::string metrics = read_file(tmp / "out/metrics.csv");
    CHECK(count_lines(metrics) == 1 + 2 * 2);
    CHECK(metrics.rfind("epoch,split,loss,accuracy,mu,wall_seconds", 0) == 0);

    // The resolved copy parses back to an equivalent run description.
    TrainConfig resolved = load_config(tmp / "out/config_resolved.cfg");
    CHECK(resolved.epochs == 2);
    CHECK(resolved.topology.variant == "lenet");
    CHECK(serialize_config(resolved) == read_file(tmp / "out/config_resolved.cfg"));
}

TEST_CASE("identical train invocations produce byte-identical checkpoints") {
    Scratch tmp("train_repeat");
    write_file(tmp / "run.cfg", toy_config("sf"));
    for (const char* threads : {"1", "2"}) {
        const std::string dir_a = tmp / (std::string("a") + threads);
        const std::string dir_b = tmp / (std::string("b") + threads);
        const std::string args = "train --config " + (tmp / "run.cfg") + " --threads " + threads;
        CHECK(run_tool(args + " --out-dir " + dir_a, tmp / "log_a.txt") == 0);
        CHECK(run_tool(args + " --out-dir " + dir_b, tmp / "log_b.txt") == 0);
        CHECK(read_file(dir_a + "/checkpoint_final.sfnn") ==
              read_file(dir_b + "/checkpoint_final.sfnn"));
    }
}

TEST_CASE("config mistakes exit with status 2 before any training") {
    Scratch tmp("train_badcfg");
    write_file(tmp / "bad.cfg", toy_config("sf", "\n[mu]\nstages = 1.5x1,0.0x1\n"));
    const int rc =
        run_tool("train --config " + (tmp / "bad.cfg") + " --out-dir " + (tmp / "out"),
                 tmp / "stdout.txt");
    CHECK(rc == 2);
    CHECK(contains(read_file(tmp / "stdout.txt"), "config error"));
    CHECK_FALSE(fs::exists(tmp / "out/checkpoint_final.sfnn"));

    // A missing config file is a config error too.
    CHECK(run_tool("train --config " + (tmp / "nowhere.cfg"), tmp / "stdout2.txt") == 2);
}

TEST_CASE("eval prints accuracy with confusion counts and is idempotent") {
    Scratch tmp("eval_repeat");
    write_file(tmp / "run.cfg", toy_config("lenet"));
    REQUIRE(run_tool("train --config " + (tmp / "run.cfg") + " --out-dir " + (tmp / "out"),
                     tmp / "train.txt") == 0);

    const std::string eval_args = "eval --config " + (tmp / "run.cfg") + " --checkpoint " +
                                  (tmp / "out/checkpoint_final.sfnn") + " --out-dir ";
    REQUIRE(run_tool(eval_args + (tmp / "e1"), tmp / "eval1.txt") == 0);
    REQUIRE(run_tool(eval_args + (tmp / "e2"), tmp / "eval2.txt") == 0);

    const std::string report = read_file(tmp / "e1/eval_report.txt");
    CHECK(contains(report, "accuracy = "));
    CHECK(contains(report, "%"));
    CHECK(contains(report, "confusion ="));
    // Ten confusion rows for ten classes, plus the scalar lines.
    CHECK(count_lines(report) == 5 + 10);
    CHECK(report == read_file(tmp / "e2/eval_report.txt"));
    CHECK(read_file(tmp / "eval1.txt") == read_file(tmp / "eval2.txt"));
}

TEST_CASE("eval refuses a checkpoint from a different topology with status 3") {
    Scratch tmp("eval_mismatch");
    write_file(tmp / "a.cfg", toy_config("lenet"));
    std::string wider = toy_config("lenet");
    wider.replace(wider.find("hidden = 12"), 11, "hidden = 13");
    write_file(tmp / "b.cfg", wider);
    REQUIRE(run_tool("train --config " + (tmp / "a.cfg") + " --out-dir " + (tmp / "out_a"),
                     tmp / "train.txt") == 0);
    const int rc = run_tool("eval --config " + (tmp / "b.cfg") + " --checkpoint " +
                                (tmp / "out_a/checkpoint_final.sfnn") + " --out-dir " +
                                (tmp / "e"),
                            tmp / "eval.txt");
    CHECK(rc == 3);
    CHECK(contains(read_file(tmp / "eval.txt"), "fingerprint"));
}

TEST_CASE("gradcheck reports one audited row per gradient kind") {
    Scratch tmp("gradcheck");
    const int rc = run_tool("gradcheck --seed 7", tmp / "out.txt");
    CHECK(rc == 0);
    const std::string out = read_file(tmp / "out.txt");
    for (const char* kind :
         {"sf_backward", "sf_unsup", "csf_backward", "csf_unsup", "conv", "linear", "relu",
          "maxpool", "network_lenet", "network_csf", "network_sf", "network_csf_sf"})
        CHECK(contains(out, kind));
    CHECK(contains(out, "pass"));
    CHECK_FALSE(contains(out, "FAIL"));
}

TEST_CASE("datagen materializes loadable idx files with a provenance sidecar") {
    Scratch tmp("datagen");
    const int rc = run_tool("datagen --kind synthetic --per-class 4 --seed 3 --out-dir " +
                                (tmp / "data"),
                            tmp / "out.txt");
    CHECK(rc == 0);
    LabeledImageSet train = load_idx(tmp / "data/synthetic-train-images-idx3-ubyte",
                                     tmp / "data/synthetic-train-labels-idx1-ubyte");
    CHECK(train.size() == 40);
    CHECK(train.image_shape() == Shape{28, 28, 1});
    LabeledImageSet test = load_idx(tmp / "data/synthetic-test-images-idx3-ubyte",
                                    tmp / "data/synthetic-test-labels-idx1-ubyte");
    CHECK(test.size() == 10);
    const std::string sidecar = read_file(tmp / "data/synthetic-provenance.txt");
    CHECK(contains(sidecar, "kind = synthetic"));
    CHECK(contains(sidecar, "seed = 3"));

    // Variations need base files; pointing at an empty directory is a data error.
    const int rc2 = run_tool("datagen --kind rot --out-dir " + (tmp / "v") + " --data-dir " +
                                 (tmp / "empty"),
                             tmp / "out2.txt");
    CHECK(rc2 == 3);

    // A trained run can consume the materialized files end to end.
    write_file(tmp / "idx.cfg",
               "[network]\nvariant = lenet\nconv1_channels = 4\nconv2_channels = 6\n"
               "hidden = 12\ninit_seed = 3\n"
               "[data]\nsource = idx\n"
               "train_images = synthetic-train-images-idx3-ubyte\n"
               "train_labels = synthetic-train-labels-idx1-ubyte\n"
               "test_images = synthetic-test-images-idx3-ubyte\n"
               "test_labels = synthetic-test-labels-idx1-ubyte\n"
               "[optimizer]\nlearning_rate = 0.05\n"
               "[run]\nepochs = 1\nbatch_size = 10\nseed = 11\n");
    const int rc3 = run_tool("train --config " + (tmp / "idx.cfg") + " --data-dir " +
                                 (tmp / "data") + " --out-dir " + (tmp / "run"),
                             tmp / "out3.txt");
    CHECK(rc3 == 0);
}

TEST_CASE("bad command lines exit with status 2") {
    Scratch tmp("badargs");
    CHECK(run_tool("transmogrify", tmp / "o1.txt") == 2);
    CHECK(run_tool("train", tmp / "o2.txt") == 2); // --config is required
    CHECK(run_tool("datagen --kind cubist --out-dir " + (tmp / "d"), tmp / "o3.txt") == 2);
}

} // TEST_SUITE
