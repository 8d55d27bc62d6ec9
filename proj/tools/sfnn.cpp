#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "sfnn/checkpoint.hpp"
#include "sfnn/config.hpp"
#include "sfnn/data.hpp"
#include "sfnn/gradcheck.hpp"
#include "sfnn/trainer.hpp"

namespace fs = std::filesystem;
using namespace sfnn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

std::string default_data_dir() {
    const char* env = std::getenv("SFNN_DATA_DIR");
    return env && *env ? env : ".";
}

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

struct ResolvedData {
    LabeledImageSet train;
    LabeledImageSet test;
    LabeledImageSet full_train; // pre-subsample, for the unlabeled pool
};

ResolvedData resolve_datasets(const TrainConfig& cfg, const std::string& data_dir) {
    ResolvedData out;
    if (cfg.source == "synthetic") {
        out.train = synthetic_digits(cfg.synthetic_train_per_class, cfg.seed);
        out.test = synthetic_digits(cfg.synthetic_test_per_class, derive_seed(cfg.seed, 0x7e57));
    } else if (cfg.source == "idx") {
        if (cfg.train_images.empty() || cfg.train_labels.empty())
            throw ConfigError("config: data.train_images/train_labels required for idx source");
        out.train = load_idx(join(data_dir, cfg.train_images), join(data_dir, cfg.train_labels));
        if (!cfg.test_images.empty())
            out.test = load_idx(join(data_dir, cfg.test_images), join(data_dir, cfg.test_labels));
    } else { // amat
        if (cfg.amat_train.empty())
            throw ConfigError("config: data.amat_train required for amat source");
        out.train = load_amat(join(data_dir, cfg.amat_train));
        if (!cfg.amat_test.empty()) out.test = load_amat(join(data_dir, cfg.amat_test));
    }

    if (cfg.variation != "none") {
        const VariationKind kind = variation_from_name(cfg.variation);
        // Variations never see their own digits as backgrounds; an img pool
        // must come through datagen-produced files instead.
        if (kind == VariationKind::img)
            throw ConfigError("config: generate img-variation files with `sfnn datagen` and "
                              "point data.train_images at them");
        out.train = make_variation(out.train, kind, cfg.variation_seed);
        if (out.test.size() > 0)
            out.test = make_variation(out.test, kind, derive_seed(cfg.variation_seed, 1));
    }

    out.full_train = out.train;
    if (cfg.subsample_per_class > 0) {
        SubsampleSpec spec;
        spec.per_class = cfg.subsample_per_class;
        spec.trial_seed = cfg.trial_seed;
        out.train = subsample(out.train, spec);
    }
    return out;
}

Network build_from_config(const TrainConfig& cfg) { return build_network(cfg.topology); }

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir_flag, std::optional<std::uint64_t> seed_flag,
              std::optional<std::size_t> threads_flag, const std::string& resume_path) {
    TrainConfig cfg = load_config(config_path);
    if (seed_flag) {
        cfg.seed = *seed_flag;
        cfg.topology.seed = derive_seed(*seed_flag, 1);
        cfg.trial_seed = derive_seed(*seed_flag, 2);
        cfg.variation_seed = derive_seed(*seed_flag, 3);
    }
    if (threads_flag) cfg.threads = *threads_flag;
    if (!out_dir_flag.empty()) cfg.out_dir = out_dir_flag;
    fs::create_directories(cfg.out_dir);

    ResolvedData data = resolve_datasets(cfg, data_dir);
    Network net = build_from_config(cfg);
    std::cout << net.report();

    SgdState state;
    state.learning_rate = cfg.learning_rate;
    state.momentum = cfg.momentum;

    TrainOptions opts;
    opts.epochs = cfg.epochs;
    opts.batch_size = cfg.batch_size;
    opts.mu = cfg.mu;
    opts.semisup = cfg.semisup;
    opts.seed = cfg.seed;
    opts.threads = std::max<std::size_t>(1, cfg.threads);
    if (cfg.unlabeled_pool) opts.unlabeled = &data.full_train;

    if (!resume_path.empty()) {
        CheckpointData ck = read_checkpoint(resume_path);
        restore(ck, net, state);
        opts.start_epoch = ck.epoch;
        std::cout << "resumed from " << resume_path << " at epoch " << ck.epoch << "\n";
    }

    const LabeledImageSet* eval_set =
        (cfg.eval_each_epoch && data.test.size() > 0) ? &data.test : nullptr;
    double best_metric = -1.0;
    const std::string best_path = join(cfg.out_dir, "checkpoint_best.sfnn");
    opts.on_epoch = [&](std::size_t epoch, const TrainLog& log) {
        for (auto it = log.rows.rbegin(); it != log.rows.rend(); ++it) {
            if (it->epoch != epoch) break;
            std::printf("epoch %zu %s: loss %.6f accuracy %.4f mu %.2f (%.2fs)\n", it->epoch,
                        it->split.c_str(), it->loss, it->accuracy, it->mu, it->wall_seconds);
        }
        // Best by eval accuracy when available, else by training loss.
        double metric = 0.0;
        for (auto it = log.rows.rbegin(); it != log.rows.rend(); ++it) {
            if (it->epoch != epoch) continue;
            if (eval_set && it->split == "eval") metric = it->accuracy;
            if (!eval_set && it->split == "train") metric = -it->loss;
        }
        if (metric > best_metric) {
            best_metric = metric;
            write_checkpoint(best_path, snapshot(net, state, epoch + 1, cfg.seed));
        }
        state.learning_rate *= cfg.lr_decay;
    };

    TrainLog log = train(net, state, data.train, eval_set, opts);

    write_checkpoint(join(cfg.out_dir, "checkpoint_final.sfnn"),
                     snapshot(net, state, cfg.epochs, cfg.seed));
    write_metrics_csv(join(cfg.out_dir, "metrics.csv"), log);
    std::ofstream resolved(join(cfg.out_dir, "config_resolved.cfg"));
    if (!resolved) throw DataError("cannot write resolved config");
    resolved << serialize_config(cfg);
    std::cout << "wrote " << join(cfg.out_dir, "checkpoint_final.sfnn") << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
             const std::string& data_dir, const std::string& out_dir_flag,
             std::optional<std::size_t> threads_flag, const std::string& split) {
    TrainConfig cfg = load_config(config_path);
    if (threads_flag) cfg.threads = *threads_flag;
    if (!out_dir_flag.empty()) cfg.out_dir = out_dir_flag;
    fs::create_directories(cfg.out_dir);

    ResolvedData data = resolve_datasets(cfg, data_dir);
    const LabeledImageSet& set = split == "train" ? data.train : data.test;
    if (set.size() == 0) throw DataError("eval: the " + split + " split is empty");

    Network net = build_from_config(cfg);
    SgdState state;
    restore(read_checkpoint(checkpoint_path), net, state);

    // Confusion counts: rows are true labels, columns predictions.
    std::vector<std::vector<std::size_t>> confusion(cfg.topology.classes,
                                                    std::vector<std::size_t>(cfg.topology.classes));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        NetPass pass;
        Tensor logits = net_forward(net, set.images[i], pass);
        loss_sum += softmax_loss(logits, set.labels[i], nullptr);
        std::size_t pred = 0;
        for (std::size_t k = 1; k < logits.size(); ++k)
            if (logits[k] > logits[pred]) pred = k;
        ++confusion[set.labels[i]][pred];
        if (pred == set.labels[i]) ++correct;
    }

    std::ostringstream report;
    char line[128];
    std::snprintf(line, sizeof line, "accuracy = %.2f%%\n",
                  100.0 * double(correct) / double(set.size()));
    report << line;
    std::snprintf(line, sizeof line, "mean_loss = %.6f\n", loss_sum / double(set.size()));
    report << line;
    report << "samples = " << set.size() << "\nsplit = " << split << "\nconfusion =\n";
    for (std::size_t t = 0; t < confusion.size(); ++t) {
        for (std::size_t p = 0; p < confusion[t].size(); ++p)
            report << (p ? " " : "") << confusion[t][p];
        report << "\n";
    }
    std::cout << report.str();
    std::ofstream out(join(cfg.out_dir, "eval_report.txt"));
    if (!out) throw DataError("cannot write eval report");
    out << report.str();
    return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed) {
    std::vector<GradCheckReport> reports = run_all_gradchecks(seed);
    bool all_pass = true;
    std::printf("%-14s %9s %12s %10s  %s\n", "kind", "instances", "max_rel_err", "tolerance",
                "status");
    for (const GradCheckReport& r : reports) {
        const bool ok = r.pass();
        all_pass = all_pass && ok;
        std::printf("%-14s %4zu/%-4zu %12.3e %10.0e  %s\n", r.kind.c_str(), r.instances,
                    r.requested, r.max_rel_err, r.tolerance, ok ? "pass" : "FAIL");
    }
    if (!all_pass) throw NumericalError("gradient check failed");
    return kExitOk;
}

int cmd_datagen(const std::string& kind, std::uint64_t seed, const std::string& out_dir,
                const std::string& data_dir, std::size_t per_class,
                const std::string& background_images, const std::string& background_labels) {
    fs::create_directories(out_dir);
    auto emit = [&](const LabeledImageSet& set, const std::string& stem) {
        const std::string images = join(out_dir, stem + "-images-idx3-ubyte");
        const std::string labels = join(out_dir, stem + "-labels-idx1-ubyte");
        save_idx(set, images, labels);
        std::cout << "wrote " << images << " (" << set.size() << " samples)\n";
    };

    if (kind == "synthetic") {
        LabeledImageSet train = synthetic_digits(per_class, seed);
        LabeledImageSet test = synthetic_digits(std::max<std::size_t>(1, per_class / 3),
                                                derive_seed(seed, 0x7e57));
        emit(train, "synthetic-train");
        emit(test, "synthetic-test");
        write_sidecar(join(out_dir, "synthetic-provenance.txt"),
                      {{"kind", "synthetic"},
                       {"seed", std::to_string(seed)},
                       {"train", train.provenance},
                       {"test", test.provenance}});
        return kExitOk;
    }

    const VariationKind vkind = variation_from_name(kind);
    LabeledImageSet train = load_idx(join(data_dir, "train-images-idx3-ubyte"),
                                     join(data_dir, "train-labels-idx1-ubyte"));
    LabeledImageSet test = load_idx(join(data_dir, "t10k-images-idx3-ubyte"),
                                    join(data_dir, "t10k-labels-idx1-ubyte"));
    LabeledImageSet pool;
    if (vkind == VariationKind::img) {
        if (background_images.empty())
            throw DataError("img variation needs --background-images/--background-labels");
        pool = load_idx(background_images, background_labels);
    }
    const LabeledImageSet* pool_ptr = vkind == VariationKind::img ? &pool : nullptr;
    LabeledImageSet vtrain = make_variation(train, vkind, seed, pool_ptr);
    LabeledImageSet vtest = make_variation(test, vkind, derive_seed(seed, 1), pool_ptr);
    emit(vtrain, kind + "-train");
    emit(vtest, kind + "-test");
    write_sidecar(join(out_dir, kind + "-provenance.txt"),
                  {{"kind", kind},
                   {"seed", std::to_string(seed)},
                   {"train", vtrain.provenance},
                   {"test", vtest.provenance}});
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse-factorization network trainer"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, out_dir, split = "test";
    std::string data_dir = default_data_dir();
    std::optional<std::uint64_t> seed_flag;
    std::optional<std::size_t> threads_flag;
    std::uint64_t gc_seed = 7, dg_seed = 1;
    std::string dg_kind;
    std::size_t dg_per_class = 60;
    std::string bg_images, bg_labels;

    CLI::App* train = app.add_subcommand("train", "train a network from a config file");
    train->add_option("--config", config_path, "config file")->required();
    train->add_option("--data-dir", data_dir, "dataset directory (env SFNN_DATA_DIR)");
    train->add_option("--out-dir", out_dir, "output directory (overrides config)");
    train->add_option("--seed", seed_flag, "override every seed in the config");
    train->add_option("--threads", threads_flag, "worker threads (overrides config)");
    train->add_option("--checkpoint", checkpoint_path, "resume from this checkpoint");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--config", config_path, "config file (topology + data)")->required();
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint to load")->required();
    eval->add_option("--data-dir", data_dir, "dataset directory (env SFNN_DATA_DIR)");
    eval->add_option("--out-dir", out_dir, "output directory (overrides config)");
    eval->add_option("--threads", threads_flag, "worker threads");
    eval->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    gradcheck->add_option("--seed", gc_seed, "instance generator seed");

    CLI::App* datagen = app.add_subcommand("datagen", "materialize datasets as idx files");
    datagen->add_option("--kind", dg_kind, "synthetic, rot, rand, or img")->required();
    datagen->add_option("--seed", dg_seed, "generator seed");
    datagen->add_option("--out-dir", out_dir, "output directory")->required();
    datagen->add_option("--data-dir", data_dir, "base dataset directory for variations");
    datagen->add_option("--per-class", dg_per_class, "synthetic: training samples per class");
    datagen->add_option("--background-images", bg_images, "idx images for img backgrounds");
    datagen->add_option("--background-labels", bg_labels, "idx labels for img backgrounds");

    try {
        app.parse(argc, argv);
        if (*train)
            return cmd_train(config_path, data_dir, out_dir, seed_flag, threads_flag,
                             checkpoint_path);
        if (*eval)
            return cmd_eval(config_path, checkpoint_path, data_dir, out_dir, threads_flag, split);
        if (*gradcheck) return cmd_gradcheck(gc_seed);
        if (*datagen)
            return cmd_datagen(dg_kind, dg_seed, out_dir, data_dir, dg_per_class, bg_images,
                               bg_labels);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericalError& e) { // SolverError lands here too
        std::cerr << "numerical abort: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
