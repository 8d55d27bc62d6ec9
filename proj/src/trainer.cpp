#include "sfnn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <utility>

#include "sfnn/errors.hpp"

namespace sfnn {

Tensor mix_gradients(const Tensor& grad_s, const Tensor& grad_u, double mu) {
    if (mu < 0.0 || mu > 1.0)
        throw Error("mix_gradients: mu " + std::to_string(mu) + " outside [0, 1]");
    if (grad_s.dims() != grad_u.dims())
        throw DimensionError("mix_gradients: shape mismatch " + shape_to_string(grad_s.dims()) +
                             " vs " + shape_to_string(grad_u.dims()));
    Tensor out = grad_s;
    scale(1.0 - mu, out);
    axpy(mu, grad_u, out);
    return out;
}

void sgd_step(Network& net, const std::vector<Tensor>& grads, SgdState& state) {
    std::vector<Tensor*> params = net.param_tensors();
    if (grads.size() != params.size())
        throw DimensionError("sgd_step: " + std::to_string(grads.size()) + " gradients for " +
                             std::to_string(params.size()) + " parameters");
    if (!(state.learning_rate > 0.0))
        throw ConfigError("sgd_step: learning rate must be positive");
    if (state.momentum < 0.0 || state.momentum >= 1.0)
        throw ConfigError("sgd_step: momentum must lie in [0, 1)");

    if (state.velocities.empty())
        for (const Tensor* p : params) state.velocities.emplace_back(p->dims());
    if (state.velocities.size() != params.size())
        throw DimensionError("sgd_step: velocity registry size mismatch");

    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!all_finite(grads[i]))
            throw NumericalError("sgd_step: non-finite gradient for " +
                                 net.param_entries()[i].name);
        if (grads[i].dims() != params[i]->dims() ||
            state.velocities[i].dims() != params[i]->dims())
            throw DimensionError("sgd_step: shape mismatch for " + net.param_entries()[i].name);
        Tensor& v = state.velocities[i];
        scale(state.momentum, v);
        axpy(-state.learning_rate, grads[i], v);
        axpy(1.0, v, *params[i]);
    }
    for (std::size_t li = 0; li < net.layer_count(); ++li) net.layer(li).renormalize_dictionary();
}

MuSchedule MuSchedule::step_down(std::size_t total) {
    if (total == 0) throw ConfigError("mu schedule: zero total iterations");
    const std::size_t quarter = total / 4;
    const double values[4] = {0.8, 0.5, 0.3, 0.0};
    MuSchedule sched;
    for (std::size_t i = 0; i < 4; ++i) {
        const std::size_t len = (i == 3) ? total - 3 * quarter : quarter;
        if (len > 0) sched.stages.push_back({values[i], len});
    }
    return sched;
}

void MuSchedule::validate() const {
    if (stages.empty()) throw ConfigError("mu schedule: no stages");
    for (const MuStage& st : stages) {
        if (!(st.mu >= 0.0 && st.mu <= 1.0))
            throw ConfigError("mu schedule: value " + std::to_string(st.mu) + " outside [0, 1]");
        if (st.iterations == 0) throw ConfigError("mu schedule: zero-length stage");
    }
    if (stages.back().mu != 0.0)
        throw ConfigError("mu schedule: final stage must be purely supervised (mu = 0)");
}

double MuSchedule::mu_at(std::size_t iteration) const {
    if (stages.empty()) throw ConfigError("mu schedule: no stages");
    std::size_t cum = 0;
    for (const MuStage& st : stages) {
        cum += st.iterations;
        if (iteration < cum) return st.mu;
    }
    return stages.back().mu;
}

void write_metrics_csv(const std::string& path, const TrainLog& log) {
    std::ofstream out(path);
    if (!out) throw DataError(path + ": cannot open for writing");
    out << "epoch,split,loss,accuracy,mu,wall_seconds\n";
    out << std::setprecision(10);
    for (const EpochRow& row : log.rows)
        out << row.epoch << ',' << row.split << ',' << row.loss << ',' << row.accuracy << ','
            << row.mu << ',' << row.wall_seconds << '\n';
    if (!out) throw DataError(path + ": write failed");
}

namespace {

std::size_t argmax_index(const Tensor& logits) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i;
    return best;
}

struct WorkerStats {
    double loss_sum = 0.0;
    std::size_t correct = 0;
};

void zero_all(std::vector<Tensor>& grads) {
    for (Tensor& g : grads) g.fill(0.0);
}

std::vector<Tensor> make_buffers(const Network& net) {
    std::vector<Tensor> out;
    for (const Tensor* p : std::as_const(net).param_tensors()) out.emplace_back(p->dims());
    return out;
}

/// Runs fn(t, begin, end) on `threads` workers over contiguous chunks of
/// [0, n). Thread t always owns the same chunk, so any per-thread
/// accumulation merged in thread order is deterministic.
template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t threads, Fn&& fn) {
    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
    if (workers == 1) {
        fn(0, 0, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (std::size_t t = 0; t < workers; ++t) {
        const std::size_t begin = t * chunk, end = std::min(n, begin + chunk);
        pool.emplace_back([&, t, begin, end] {
            try {
                fn(t, begin, end);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (std::thread& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace

EpochRow evaluate(const Network& net, const LabeledImageSet& set, std::size_t threads) {
    if (set.size() == 0) throw DataError("evaluate: empty dataset");
    const auto start = std::chrono::steady_clock::now();
    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, set.size()));
    std::vector<WorkerStats> stats(workers);
    parallel_chunks(set.size(), workers, [&](std::size_t t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            NetPass pass;
            Tensor logits = net_forward(net, set.images[i], pass);
            stats[t].loss_sum += softmax_loss(logits, set.labels[i], nullptr);
            if (argmax_index(logits) == set.labels[i]) ++stats[t].correct;
        }
    });
    double loss = 0.0;
    std::size_t correct = 0;
    for (const WorkerStats& s : stats) {
        loss += s.loss_sum;
        correct += s.correct;
    }
    EpochRow row;
    row.split = "eval";
    row.loss = loss / double(set.size());
    row.accuracy = double(correct) / double(set.size());
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return row;
}

TrainLog train(Network& net, SgdState& state, const LabeledImageSet& train_set,
               const LabeledImageSet* eval_set, const TrainOptions& options) {
    if (options.epochs == 0) throw ConfigError("train: epochs must be positive");
    if (options.start_epoch >= options.epochs)
        throw ConfigError("train: start epoch " + std::to_string(options.start_epoch) +
                          " is past the last epoch");
    if (options.batch_size == 0) throw ConfigError("train: batch size must be positive");
    if (train_set.size() == 0) throw DataError("train: empty dataset");
    if (train_set.image_shape() != net.input_shape())
        throw DimensionError("train: dataset images " + shape_to_string(train_set.image_shape()) +
                             " do not fit network input " + shape_to_string(net.input_shape()));
    const bool semisup = options.semisup && !options.mu.stages.empty();
    if (semisup) options.mu.validate();
    if (options.unlabeled && options.unlabeled->size() == 0)
        throw DataError("train: empty unlabeled pool");

    // The reconstruction chain reaches the topmost dictionary layer and
    // everything below it; parameters above keep their plain supervised
    // gradient, matching the in-batch mixing semantics.
    std::size_t top_dict = net.layer_count();
    for (std::size_t li = net.layer_count(); li-- > 0;)
        if (net.layer(li).has_dictionary()) {
            top_dict = li;
            break;
        }

    const std::size_t n = train_set.size();
    const std::size_t workers = std::max<std::size_t>(1, options.threads);
    std::vector<std::vector<Tensor>> worker_grads(workers);
    std::vector<std::vector<Tensor>> worker_ugrads(workers);
    for (auto& g : worker_grads) g = make_buffers(net);
    std::vector<Tensor> grads = make_buffers(net);
    std::vector<Tensor> ugrads;

    TrainLog log;
    std::vector<std::size_t> order(n);

    for (std::size_t epoch = options.start_epoch; epoch < options.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        const double mu = semisup ? options.mu.mu_at(epoch) : 0.0;
        const bool pooled =
            options.unlabeled != nullptr && mu > 0.0 && top_dict < net.layer_count();
        // Pooled mode keeps labeled backward purely supervised and draws the
        // reconstruction term from the unlabeled batch instead.
        const double backward_mu = pooled ? 0.0 : mu;

        // The visit order is a pure function of (seed, epoch) so a resumed
        // run replays exactly the batches the uninterrupted run would see.
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(options.seed, 0xE0000000ull + epoch));
        shuffle(order, shuffle_rng);
        std::vector<std::size_t> pool_order;
        Rng pool_rng(derive_seed(options.seed, 0xF0000000ull + epoch));
        if (pooled) {
            pool_order.resize(options.unlabeled->size());
            std::iota(pool_order.begin(), pool_order.end(), 0);
            shuffle(pool_order, pool_rng);
        }

        std::vector<WorkerStats> stats(workers);
        std::size_t pool_cursor = 0;
        for (std::size_t batch_begin = 0; batch_begin < n; batch_begin += options.batch_size) {
            const std::size_t bn = std::min(options.batch_size, n - batch_begin);
            for (auto& g : worker_grads) zero_all(g);
            parallel_chunks(bn, workers, [&](std::size_t t, std::size_t begin, std::size_t end) {
                for (std::size_t b = begin; b < end; ++b) {
                    const std::size_t idx = order[batch_begin + b];
                    NetPass pass;
                    Tensor logits = net_forward(net, train_set.images[idx], pass);
                    Tensor grad_logits(logits.dims());
                    stats[t].loss_sum +=
                        softmax_loss(logits, train_set.labels[idx], &grad_logits);
                    if (argmax_index(logits) == train_set.labels[idx]) ++stats[t].correct;
                    net_backward(net, pass, grad_logits, backward_mu, worker_grads[t]);
                }
            });
            zero_all(grads);
            for (const auto& g : worker_grads)
                for (std::size_t i = 0; i < grads.size(); ++i) axpy(1.0, g[i], grads[i]);
            for (Tensor& g : grads) scale(1.0 / double(bn), g);

            if (pooled) {
                // Matched unlabeled batch, cycling through the shuffled pool.
                const std::size_t un = std::min<std::size_t>(bn, pool_order.size());
                for (auto& g : worker_ugrads)
                    if (g.empty()) g = make_buffers(net);
                for (auto& g : worker_ugrads) zero_all(g);
                std::vector<std::size_t> chosen(un);
                for (std::size_t u = 0; u < un; ++u) {
                    chosen[u] = pool_order[pool_cursor];
                    pool_cursor = (pool_cursor + 1) % pool_order.size();
                }
                parallel_chunks(un, workers,
                                [&](std::size_t t, std::size_t begin, std::size_t end) {
                    for (std::size_t u = begin; u < end; ++u) {
                        NetPass pass;
                        net_forward(net, options.unlabeled->images[chosen[u]], pass);
                        net_unsup_backward(net, pass, worker_ugrads[t]);
                    }
                });
                if (ugrads.empty()) ugrads = make_buffers(net);
                zero_all(ugrads);
                for (const auto& g : worker_ugrads)
                    for (std::size_t i = 0; i < ugrads.size(); ++i) axpy(1.0, g[i], ugrads[i]);
                for (Tensor& g : ugrads) scale(1.0 / double(un), g);
                for (std::size_t i = 0; i < grads.size(); ++i)
                    if (net.param_entries()[i].layer_index <= top_dict)
                        grads[i] = mix_gradients(grads[i], ugrads[i], mu);
            }

            sgd_step(net, grads, state);
        }

        double loss = 0.0;
        std::size_t correct = 0;
        for (const WorkerStats& s : stats) {
            loss += s.loss_sum;
            correct += s.correct;
        }
        EpochRow row;
        row.epoch = epoch;
        row.split = "train";
        row.loss = loss / double(n);
        row.accuracy = double(correct) / double(n);
        row.mu = mu;
        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        log.rows.push_back(row);

        if (eval_set) {
            EpochRow ev = evaluate(net, *eval_set, options.threads);
            ev.epoch = epoch;
            ev.mu = mu;
            log.rows.push_back(ev);
        }
        if (options.on_epoch) options.on_epoch(epoch, log);
    }
    return log;
}

} // namespace sfnn
