#include "sfnn/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "sfnn/errors.hpp"

namespace sfnn {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
    throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& v, std::size_t line, const std::string& key) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        fail(line, key + ": '" + v + "' is not a number");
    }
}

std::uint64_t parse_u64(const std::string& v, std::size_t line, const std::string& key) {
    try {
        std::size_t used = 0;
        const unsigned long long x = std::stoull(v, &used);
        if (used != v.size() || v[0] == '-') throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        fail(line, key + ": '" + v + "' is not a non-negative integer");
    }
}

bool parse_bool(const std::string& v, std::size_t line, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail(line, key + ": '" + v + "' is not a boolean (true/false)");
}

Shape parse_shape(const std::string& v, std::size_t line, const std::string& key) {
    Shape dims;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, 'x'))
        dims.push_back(parse_u64(trim(part), line, key));
    if (dims.empty()) fail(line, key + ": empty shape");
    return dims;
}

std::vector<MuStage> parse_stages(const std::string& v, std::size_t line) {
    std::vector<MuStage> stages;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        const auto x = part.find('x');
        if (x == std::string::npos)
            fail(line, "stages: '" + part + "' is not MUxEPOCHS");
        MuStage st;
        st.mu = parse_double(part.substr(0, x), line, "stages");
        st.iterations = parse_u64(part.substr(x + 1), line, "stages");
        stages.push_back(st);
    }
    if (stages.empty()) fail(line, "stages: empty list");
    return stages;
}

std::vector<std::string> split_commas(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (!part.empty()) out.push_back(part);
    }
    return out;
}

bool has_dictionary_layers(const TopologySpec& topo) {
    if (topo.variant == "sf" || topo.variant == "csf" || topo.variant == "csf_sf") return true;
    if (topo.variant == "custom")
        for (const std::string& t : topo.custom_layers)
            if (t.rfind("sf:", 0) == 0 || t.rfind("csf:", 0) == 0) return true;
    return false;
}

} // namespace

TrainConfig parse_config(const std::string& text) {
    TrainConfig cfg;
    std::set<std::string> seen;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;

    static const std::set<std::string> kSections = {"network", "elastic_net", "optimizer",
                                                    "mu",      "data",        "run"};

    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') fail(line_no, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!kSections.count(section)) fail(line_no, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected key = value");
        if (section.empty()) fail(line_no, "key before any [section]");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(line_no, "empty key");
        if (value.empty()) fail(line_no, key + ": empty value");
        const std::string qual = section + "." + key;
        if (!seen.insert(qual).second) fail(line_no, qual + " set twice");

        if (section == "network") {
            if (key == "variant") cfg.topology.variant = value;
            else if (key == "layers") cfg.topology.custom_layers = split_commas(value);
            else if (key == "input") cfg.topology.input_shape = parse_shape(value, line_no, key);
            else if (key == "classes") cfg.topology.classes = parse_u64(value, line_no, key);
            else if (key == "conv1_channels")
                cfg.topology.conv1_channels = parse_u64(value, line_no, key);
            else if (key == "conv2_channels")
                cfg.topology.conv2_channels = parse_u64(value, line_no, key);
            else if (key == "hidden") cfg.topology.hidden = parse_u64(value, line_no, key);
            else if (key == "window") cfg.topology.window = parse_u64(value, line_no, key);
            else if (key == "pool") cfg.topology.pool = parse_u64(value, line_no, key);
            else if (key == "init_seed") cfg.topology.seed = parse_u64(value, line_no, key);
            else fail(line_no, "unknown key network." + key);
        } else if (section == "elastic_net") {
            if (key == "lambda1") cfg.topology.en.lambda1 = parse_double(value, line_no, key);
            else if (key == "lambda2") cfg.topology.en.lambda2 = parse_double(value, line_no, key);
            else if (key == "max_active")
                cfg.topology.en.max_active = parse_u64(value, line_no, key);
            else if (key == "tolerance")
                cfg.topology.en.tolerance = parse_double(value, line_no, key);
            else if (key == "max_iterations")
                cfg.topology.en.max_iterations = parse_u64(value, line_no, key);
            else fail(line_no, "unknown key elastic_net." + key);
        } else if (section == "optimizer") {
            if (key == "learning_rate") cfg.learning_rate = parse_double(value, line_no, key);
            else if (key == "momentum") cfg.momentum = parse_double(value, line_no, key);
            else if (key == "lr_decay") cfg.lr_decay = parse_double(value, line_no, key);
            else fail(line_no, "unknown key optimizer." + key);
        } else if (section == "mu") {
            if (key == "stages") {
                cfg.mu.stages = parse_stages(value, line_no);
                cfg.mu_explicit = true;
            } else if (key == "semisup") cfg.semisup = parse_bool(value, line_no, key);
            else if (key == "unlabeled_pool")
                cfg.unlabeled_pool = parse_bool(value, line_no, key);
            else fail(line_no, "unknown key mu." + key);
        } else if (section == "data") {
            if (key == "source") cfg.source = value;
            else if (key == "synthetic_train_per_class")
                cfg.synthetic_train_per_class = parse_u64(value, line_no, key);
            else if (key == "synthetic_test_per_class")
                cfg.synthetic_test_per_class = parse_u64(value, line_no, key);
            else if (key == "train_images") cfg.train_images = value;
            else if (key == "train_labels") cfg.train_labels = value;
            else if (key == "test_images") cfg.test_images = value;
            else if (key == "test_labels") cfg.test_labels = value;
            else if (key == "amat_train") cfg.amat_train = value;
            else if (key == "amat_test") cfg.amat_test = value;
            else if (key == "variation") cfg.variation = value;
            else if (key == "variation_seed")
                cfg.variation_seed = parse_u64(value, line_no, key);
            else if (key == "subsample_per_class")
                cfg.subsample_per_class = parse_u64(value, line_no, key);
            else if (key == "trial_seed") cfg.trial_seed = parse_u64(value, line_no, key);
            else fail(line_no, "unknown key data." + key);
        } else if (section == "run") {
            if (key == "epochs") cfg.epochs = parse_u64(value, line_no, key);
            else if (key == "batch_size") cfg.batch_size = parse_u64(value, line_no, key);
            else if (key == "threads") cfg.threads = parse_u64(value, line_no, key);
            else if (key == "seed") cfg.seed = parse_u64(value, line_no, key);
            else if (key == "eval_each_epoch")
                cfg.eval_each_epoch = parse_bool(value, line_no, key);
            else if (key == "out_dir") cfg.out_dir = value;
            else fail(line_no, "unknown key run." + key);
        }
    }

    // The silent knobs must be loud: no fallback for epochs, or for the
    // sparse-coding weights and dictionary widths where they matter.
    if (!seen.count("run.epochs")) throw ConfigError("config: run.epochs is required");
    if (has_dictionary_layers(cfg.topology)) {
        if (!seen.count("elastic_net.lambda1"))
            throw ConfigError("config: elastic_net.lambda1 is required for dictionary layers");
        if (!seen.count("elastic_net.lambda2"))
            throw ConfigError("config: elastic_net.lambda2 is required for dictionary layers");
        const std::string& variant = cfg.topology.variant;
        if ((variant == "sf" || variant == "csf_sf") && !seen.count("network.hidden"))
            throw ConfigError("config: network.hidden (dictionary atoms) is required for the " +
                              variant + " variant");
        if ((variant == "csf" || variant == "csf_sf") && !seen.count("network.conv1_channels"))
            throw ConfigError(
                "config: network.conv1_channels (dictionary atoms) is required for the " +
                variant + " variant");
    }

    if (cfg.epochs == 0) throw ConfigError("config: run.epochs must be positive");
    if (cfg.variation != "none") variation_from_name(cfg.variation); // validates
    if (cfg.source != "synthetic" && cfg.source != "idx" && cfg.source != "amat")
        throw ConfigError("config: data.source '" + cfg.source +
                          "' (want synthetic, idx, or amat)");
    if (!(cfg.learning_rate > 0.0))
        throw ConfigError("config: optimizer.learning_rate must be positive");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
        throw ConfigError("config: optimizer.momentum must lie in [0, 1)");
    if (!(cfg.lr_decay > 0.0) || cfg.lr_decay > 1.0)
        throw ConfigError("config: optimizer.lr_decay must lie in (0, 1]");
    if (cfg.mu_explicit) cfg.mu.validate();
    else cfg.mu = MuSchedule::step_down(cfg.epochs);
    return cfg;
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const TrainConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "[network]\n";
    out << "variant = " << cfg.topology.variant << "\n";
    if (!cfg.topology.custom_layers.empty()) {
        out << "layers = ";
        for (std::size_t i = 0; i < cfg.topology.custom_layers.size(); ++i)
            out << (i ? "," : "") << cfg.topology.custom_layers[i];
        out << "\n";
    }
    out << "input = ";
    for (std::size_t i = 0; i < cfg.topology.input_shape.size(); ++i)
        out << (i ? "x" : "") << cfg.topology.input_shape[i];
    out << "\n";
    out << "classes = " << cfg.topology.classes << "\n";
    out << "conv1_channels = " << cfg.topology.conv1_channels << "\n";
    out << "conv2_channels = " << cfg.topology.conv2_channels << "\n";
    out << "hidden = " << cfg.topology.hidden << "\n";
    out << "window = " << cfg.topology.window << "\n";
    out << "pool = " << cfg.topology.pool << "\n";
    out << "init_seed = " << cfg.topology.seed << "\n";

    out << "\n[elastic_net]\n";
    out << "lambda1 = " << cfg.topology.en.lambda1 << "\n";
    out << "lambda2 = " << cfg.topology.en.lambda2 << "\n";
    out << "max_active = " << cfg.topology.en.max_active << "\n";
    out << "tolerance = " << cfg.topology.en.tolerance << "\n";
    out << "max_iterations = " << cfg.topology.en.max_iterations << "\n";

    out << "\n[optimizer]\n";
    out << "learning_rate = " << cfg.learning_rate << "\n";
    out << "momentum = " << cfg.momentum << "\n";
    out << "lr_decay = " << cfg.lr_decay << "\n";

    out << "\n[mu]\n";
    const MuSchedule& sched = cfg.mu;
    out << "stages = ";
    for (std::size_t i = 0; i < sched.stages.size(); ++i)
        out << (i ? "," : "") << sched.stages[i].mu << "x" << sched.stages[i].iterations;
    out << "\n";
    out << "semisup = " << (cfg.semisup ? "true" : "false") << "\n";
    out << "unlabeled_pool = " << (cfg.unlabeled_pool ? "true" : "false") << "\n";

    out << "\n[data]\n";
    out << "source = " << cfg.source << "\n";
    out << "synthetic_train_per_class = " << cfg.synthetic_train_per_class << "\n";
    out << "synthetic_test_per_class = " << cfg.synthetic_test_per_class << "\n";
    if (!cfg.train_images.empty()) out << "train_images = " << cfg.train_images << "\n";
    if (!cfg.train_labels.empty()) out << "train_labels = " << cfg.train_labels << "\n";
    if (!cfg.test_images.empty()) out << "test_images = " << cfg.test_images << "\n";
    if (!cfg.test_labels.empty()) out << "test_labels = " << cfg.test_labels << "\n";
    if (!cfg.amat_train.empty()) out << "amat_train = " << cfg.amat_train << "\n";
    if (!cfg.amat_test.empty()) out << "amat_test = " << cfg.amat_test << "\n";
    out << "variation = " << cfg.variation << "\n";
    out << "variation_seed = " << cfg.variation_seed << "\n";
    out << "subsample_per_class = " << cfg.subsample_per_class << "\n";
    out << "trial_seed = " << cfg.trial_seed << "\n";

    out << "\n[run]\n";
    out << "epochs = " << cfg.epochs << "\n";
    out << "batch_size = " << cfg.batch_size << "\n";
    out << "threads = " << cfg.threads << "\n";
    out << "seed = " << cfg.seed << "\n";
    out << "eval_each_epoch = " << (cfg.eval_each_epoch ? "true" : "false") << "\n";
    out << "out_dir = " << cfg.out_dir << "\n";
    return out.str();
}

} // namespace sfnn
