#include "sfnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sfnn {

void Network::add(std::unique_ptr<Layer> layer) {
    const std::size_t idx = layers_.size();
    const auto labels = layer->param_labels();
    for (std::size_t s = 0; s < labels.size(); ++s)
        entries_.push_back({layer->name() + "." + labels[s], idx, s});
    layers_.push_back(std::move(layer));
}

Shape Network::output_shape() const {
    Shape s = input_shape_;
    for (const auto& l : layers_) s = l->output_shape(s);
    return s;
}

std::vector<Tensor*> Network::param_tensors() {
    std::vector<Tensor*> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(layers_[e.layer_index]->param_tensors()[e.slot]);
    return out;
}

std::vector<const Tensor*> Network::param_tensors() const {
    std::vector<const Tensor*> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) {
        const Layer& l = *layers_[e.layer_index];
        out.push_back(l.param_tensors()[e.slot]);
    }
    return out;
}

std::size_t Network::total_param_count() const {
    std::size_t n = 0;
    for (const Tensor* t : param_tensors()) n += t->size();
    return n;
}

namespace {

void fnv_mix(std::uint64_t& h, const std::string& s) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    h ^= '|';
    h *= 1099511628211ULL;
}

std::string shape_token(const Shape& s) {
    std::string out;
    for (std::size_t d : s) out += std::to_string(d) + ",";
    return out;
}

} // namespace

std::uint64_t Network::fingerprint() const {
    std::uint64_t h = 14695981039346656037ULL;
    fnv_mix(h, shape_token(input_shape_));
    Shape s = input_shape_;
    for (const auto& l : layers_) {
        fnv_mix(h, l->kind());
        for (const Tensor* t : static_cast<const Layer&>(*l).param_tensors())
            fnv_mix(h, shape_token(t->dims()));
        s = l->output_shape(s);
        fnv_mix(h, shape_token(s));
    }
    return h;
}

std::string Network::report() const {
    std::ostringstream out;
    Shape s = input_shape_;
    out << "input " << shape_to_string(s) << "\n";
    std::size_t total = 0;
    for (const auto& l : layers_) {
        std::size_t n = 0;
        for (const Tensor* t : static_cast<const Layer&>(*l).param_tensors()) n += t->size();
        total += n;
        s = l->output_shape(s);
        out << l->name() << " (" << l->kind() << ") -> " << shape_to_string(s) << ", " << n
            << " params\n";
    }
    out << "total " << total << " params\n";
    return out.str();
}

Tensor net_forward(const Network& net, const Tensor& x, NetPass& pass) {
    if (x.dims() != net.input_shape())
        throw DimensionError("net_forward: input shape " + shape_to_string(x.dims()) +
                             " does not match network input " +
                             shape_to_string(net.input_shape()));
    pass.ctxs.clear();
    pass.ctxs.resize(net.layer_count());
    Tensor a = x;
    for (std::size_t i = 0; i < net.layer_count(); ++i)
        a = net.layer(i).forward(a, pass.ctxs[i]);
    return a;
}

double softmax_loss(const Tensor& logits, std::size_t label, Tensor* grad_logits) {
    const std::size_t n = logits.size();
    if (label >= n)
        throw DimensionError("softmax_loss: label " + std::to_string(label) + " out of range for " +
                             std::to_string(n) + " classes");
    double mx = logits[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(logits[i] - mx);
    const double log_z = std::log(z) + mx;
    const double loss = log_z - logits[label];
    if (grad_logits) {
        *grad_logits = Tensor({n});
        for (std::size_t i = 0; i < n; ++i)
            (*grad_logits)[i] = std::exp(logits[i] - log_z) - (i == label ? 1.0 : 0.0);
    }
    return loss;
}

double net_loss(const Network& net, const Tensor& x, std::size_t label) {
    NetPass pass;
    Tensor logits = net_forward(net, x, pass);
    return softmax_loss(logits, label, nullptr);
}

void net_backward(const Network& net, const NetPass& pass, const Tensor& grad_logits, double mu,
                  std::vector<Tensor>& grads) {
    if (mu < 0.0 || mu > 1.0)
        throw Error("net_backward: mu " + std::to_string(mu) + " outside [0, 1]");
    if (pass.ctxs.size() != net.layer_count() || !pass.ctxs.back())
        throw Error("net_backward: no completed forward pass");
    const auto& entries = net.param_entries();
    if (grads.size() != entries.size())
        throw DimensionError("net_backward: gradient registry size mismatch");

    // entries are grouped by layer in order; walk them from the back.
    std::size_t entry_end = entries.size();
    Tensor g = grad_logits;
    for (std::size_t li = net.layer_count(); li-- > 0;) {
        const Layer& l = net.layer(li);
        LayerGrads lg = l.backward(*pass.ctxs[li], g);
        if (mu > 0.0 && l.has_dictionary()) {
            LayerGrads ug = l.unsup_gradients(*pass.ctxs[li]);
            for (std::size_t p = 0; p < lg.params.size(); ++p) {
                scale(1.0 - mu, lg.params[p]);
                axpy(mu, ug.params[p], lg.params[p]);
            }
            scale(1.0 - mu, lg.grad_input);
            axpy(mu, ug.grad_input, lg.grad_input);
        }
        const std::size_t entry_begin = entry_end - lg.params.size();
        for (std::size_t p = 0; p < lg.params.size(); ++p)
            axpy(1.0, lg.params[p], grads[entry_begin + p]);
        entry_end = entry_begin;
        g = std::move(lg.grad_input);
    }
}

double net_unsup_loss(const Network& net, const NetPass& pass) {
    double total = 0.0;
    for (std::size_t i = 0; i < net.layer_count(); ++i)
        if (net.layer(i).has_dictionary()) total += net.layer(i).unsup_loss_value(*pass.ctxs[i]);
    return total;
}

void net_unsup_backward(const Network& net, const NetPass& pass, std::vector<Tensor>& grads) {
    if (pass.ctxs.size() != net.layer_count() || !pass.ctxs.back())
        throw Error("net_unsup_backward: no completed forward pass");
    const auto& entries = net.param_entries();
    if (grads.size() != entries.size())
        throw DimensionError("net_unsup_backward: gradient registry size mismatch");

    std::size_t entry_end = entries.size();
    Tensor g;
    bool live = false; // becomes true at the topmost dictionary layer
    for (std::size_t li = net.layer_count(); li-- > 0;) {
        const Layer& l = net.layer(li);
        LayerGrads lg;
        if (live) lg = l.backward(*pass.ctxs[li], g);
        if (l.has_dictionary()) {
            LayerGrads ug = l.unsup_gradients(*pass.ctxs[li]);
            if (!live) {
                lg = std::move(ug);
                live = true;
            } else {
                for (std::size_t p = 0; p < lg.params.size(); ++p)
                    axpy(1.0, ug.params[p], lg.params[p]);
                axpy(1.0, ug.grad_input, lg.grad_input);
            }
        }
        const std::size_t width = l.param_labels().size();
        const std::size_t entry_begin = entry_end - width;
        if (live)
            for (std::size_t p = 0; p < width; ++p)
                axpy(1.0, lg.params[p], grads[entry_begin + p]);
        entry_end = entry_begin;
        if (live) g = std::move(lg.grad_input);
    }
}

namespace {

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::pair<std::size_t, std::size_t> parse_two(const std::string& arg, const std::string& token) {
    const auto x = arg.find('x');
    if (x == std::string::npos)
        throw ConfigError("layer token '" + token + "': expected HxK argument");
    try {
        return {std::stoul(arg.substr(0, x)), std::stoul(arg.substr(x + 1))};
    } catch (const std::exception&) {
        throw ConfigError("layer token '" + token + "': bad numbers");
    }
}

std::size_t parse_one(const std::string& arg, const std::string& token) {
    try {
        return std::stoul(arg);
    } catch (const std::exception&) {
        throw ConfigError("layer token '" + token + "': bad number");
    }
}

} // namespace

Network build_network(const TopologySpec& spec) {
    Network net(spec.input_shape);
    std::uint64_t stream = 0;
    auto next_rng = [&] { return Rng(derive_seed(spec.seed, stream++)); };
    Shape s = spec.input_shape;

    auto add = [&](std::unique_ptr<Layer> l) {
        s = l->output_shape(s);
        net.add(std::move(l));
    };

    const auto add_conv1 = [&](bool sparse) {
        Rng rng = next_rng();
        if (sparse) {
            add(std::make_unique<CsfLayer>("csf1", spec.window, spec.window, s[2],
                                           spec.conv1_channels, spec.en, rng));
        } else {
            // Bias-free so the csf variant is parameter-exact.
            add(std::make_unique<ConvLayer>("conv1", spec.window, spec.window, s[2],
                                            spec.conv1_channels, false, rng));
        }
    };
    const auto add_fc1 = [&](bool sparse) {
        Rng rng = next_rng();
        const std::size_t in = shape_size(s);
        if (sparse) {
            add(std::make_unique<SfLayer>("sf1", in, spec.hidden, spec.en, rng));
        } else {
            // Bias-free so the sf variant is parameter-exact.
            add(std::make_unique<LinearLayer>("fc1", in, spec.hidden, false, rng));
            add(std::make_unique<ReluLayer>("relu1"));
        }
    };

    if (spec.variant == "lenet" || spec.variant == "csf" || spec.variant == "sf" ||
        spec.variant == "csf_sf") {
        const bool sparse_conv = spec.variant == "csf" || spec.variant == "csf_sf";
        const bool sparse_fc = spec.variant == "sf" || spec.variant == "csf_sf";
        add_conv1(sparse_conv);
        add(std::make_unique<MaxPoolLayer>("pool1", spec.pool));
        {
            Rng rng = next_rng();
            add(std::make_unique<ConvLayer>("conv2", spec.window, spec.window, s[2],
                                            spec.conv2_channels, true, rng));
        }
        add(std::make_unique<MaxPoolLayer>("pool2", spec.pool));
        add_fc1(sparse_fc);
        {
            Rng rng = next_rng();
            add(std::make_unique<LinearLayer>("fc2", shape_size(s), spec.classes, true, rng));
        }
        return net;
    }

    if (spec.variant != "custom")
        throw ConfigError("unknown network variant '" + spec.variant + "'");

    if (spec.custom_layers.empty()) throw ConfigError("custom network has no layers");
    std::size_t counter = 0;
    for (const std::string& token : spec.custom_layers) {
        const auto colon = token.find(':');
        const std::string head = token.substr(0, colon);
        const std::string arg = colon == std::string::npos ? "" : token.substr(colon + 1);
        const std::string name = head + std::to_string(++counter);
        if (head == "conv" || head == "conv_nobias") {
            auto [win, ch] = parse_two(arg, token);
            if (s.size() != 3) throw ConfigError(name + ": conv needs an image input");
            Rng rng = next_rng();
            add(std::make_unique<ConvLayer>(name, win, win, s[2], ch, head == "conv", rng));
        } else if (head == "csf") {
            auto [win, ch] = parse_two(arg, token);
            if (s.size() != 3) throw ConfigError(name + ": csf needs an image input");
            Rng rng = next_rng();
            add(std::make_unique<CsfLayer>(name, win, win, s[2], ch, spec.en, rng));
        } else if (head == "maxpool") {
            add(std::make_unique<MaxPoolLayer>(name, parse_one(arg, token)));
        } else if (head == "relu") {
            add(std::make_unique<ReluLayer>(name));
        } else if (head == "linear" || head == "linear_nobias") {
            Rng rng = next_rng();
            add(std::make_unique<LinearLayer>(name, shape_size(s), parse_one(arg, token),
                                              head == "linear", rng));
        } else if (head == "sf") {
            Rng rng = next_rng();
            add(std::make_unique<SfLayer>(name, shape_size(s), parse_one(arg, token), spec.en,
                                          rng));
        } else {
            throw ConfigError("unknown layer token '" + token + "'");
        }
    }
    return net;
}

} // namespace sfnn
