#include "respnet/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace respnet {

void TrainConfig::validate() const {
    if (epochs < 1 || batch_size < 1) throw InvalidConfig("train config: epochs/batch_size < 1");
    if (lr < 0.0) throw InvalidConfig("train config: negative learning rate");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw InvalidConfig("train config: momentum must be in [0,1)");
    if (checkpoint_every < 0) throw InvalidConfig("train config: negative checkpoint interval");
}

TrainConfig TrainConfig::preset(const std::string& name) {
    TrainConfig cfg;
    if (name == "desk") {
        cfg.epochs = 300;
        cfg.batch_size = 8;
    } else if (name == "paper") {
        cfg.epochs = 2000;
        cfg.batch_size = 256;
    } else {
        throw InvalidConfig("unknown preset: " + name);
    }
    return cfg;
}

void TrainHistory::write_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write loss log: " + path);
    os << "epoch,train_loss,test_loss,wall_s\n";
    char buf[160];
    for (const auto& e : epochs) {
        if (std::isnan(e.test_loss))
            std::snprintf(buf, sizeof(buf), "%lld,%.12g,,%.3f\n",
                          static_cast<long long>(e.epoch), e.train_loss, e.wall_s);
        else
            std::snprintf(buf, sizeof(buf), "%lld,%.12g,%.12g,%.3f\n",
                          static_cast<long long>(e.epoch), e.train_loss, e.test_loss,
                          e.wall_s);
        os << buf;
    }
}

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

Tensor batch_inputs(const WindowedDataset& ds, std::span<const size_t> idx) {
    const int64_t len = ds.window_len;
    Tensor x(static_cast<int64_t>(idx.size()), 1, len);
    for (size_t b = 0; b < idx.size(); ++b) {
        const std::vector<double> z = zscore(ds.windows[idx[b]].x);
        std::copy(z.begin(), z.end(), x.value().begin() + static_cast<int64_t>(b) * len);
    }
    return x;
}

Tensor batch_targets(const WindowedDataset& ds, std::span<const size_t> idx) {
    const int64_t len = ds.window_len;
    Tensor y(static_cast<int64_t>(idx.size()), 1, len);
    for (size_t b = 0; b < idx.size(); ++b) {
        const NormalizeResult norm = minmax_normalize(ds.windows[idx[b]].y);
        std::copy(norm.values.begin(), norm.values.end(),
                  y.value().begin() + static_cast<int64_t>(b) * len);
    }
    return y;
}

double mean_test_loss(ModelParams& params, const WindowedDataset& ds,
                      std::span<const size_t> test_idx, int64_t batch_size) {
    double acc = 0.0;
    size_t count = 0;
    for (size_t off = 0; off < test_idx.size(); off += static_cast<size_t>(batch_size)) {
        const size_t take = std::min(static_cast<size_t>(batch_size), test_idx.size() - off);
        const auto chunk = test_idx.subspan(off, take);
        Tensor x = batch_inputs(ds, chunk);
        Tensor y = batch_targets(ds, chunk);
        const Tensor pred = forward(params, x, BnMode::eval);
        acc += smooth_l1_loss(pred, y).item() * static_cast<double>(take);
        count += take;
    }
    return count ? acc / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

void embed_optimizer_state(ModelParams& params, const std::vector<std::string>& names,
                           const std::vector<std::vector<double>>& velocities,
                           int64_t epochs_done) {
    for (size_t i = 0; i < names.size(); ++i) {
        const std::string key = "opt.v." + names[i];
        const Shape s = params.get(names[i]).shape();
        if (!params.has(key)) params.add(key, Tensor(s.n, s.c, s.l), false);
        std::copy(velocities[i].begin(), velocities[i].end(),
                  params.get(key).value().begin());
    }
    if (!params.has("opt.epoch")) params.add("opt.epoch", Tensor(1, 1, 1), false);
    params.get("opt.epoch").value()[0] = static_cast<double>(epochs_done);
}

}  // namespace

TrainHistory train(ModelParams& params, const WindowedDataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    if (params.config.input_length != ds.window_len)
        throw ShapeMismatch("train: model input length does not match window length");
    const std::vector<size_t> canonical_idx = ds.train_indices();
    std::vector<size_t> train_idx = canonical_idx;
    const std::vector<size_t> test_idx = ds.test_indices();
    if (train_idx.empty()) throw EmptyTrainSet("train: no training windows");

    const std::vector<std::string> names = params.trainable_names();
    std::vector<Tensor> tensors;
    std::vector<std::vector<double>> velocities;
    for (const auto& name : names) {
        Tensor& t = params.get(name);
        tensors.push_back(t);
        const std::string key = "opt.v." + name;
        if (params.has(key)) {
            auto v = params.get(key).value();
            velocities.emplace_back(v.begin(), v.end());
        } else {
            velocities.emplace_back(static_cast<size_t>(t.size()), 0.0);
        }
    }
    const int64_t start_epoch =
        params.has("opt.epoch") ? static_cast<int64_t>(params.get("opt.epoch").item()) : 0;

    TrainHistory history;
    const auto t0 = std::chrono::steady_clock::now();
    for (int64_t e = 0; e < cfg.epochs; ++e) {
        const int64_t epoch = start_epoch + e;
        if (cfg.shuffle) {
            // shuffle from the canonical order so epoch e's batch sequence
            // depends only on (seed, e), keeping resumed runs identical
            train_idx = canonical_idx;
            std::mt19937_64 rng(splitmix64(cfg.seed) ^ splitmix64(static_cast<uint64_t>(epoch) + 1));
            for (size_t i = train_idx.size(); i > 1; --i)
                std::swap(train_idx[i - 1], train_idx[static_cast<size_t>(rng() % i)]);
        }
        double loss_acc = 0.0;
        int64_t steps = 0;
        for (size_t off = 0; off < train_idx.size(); off += static_cast<size_t>(cfg.batch_size)) {
            const size_t take =
                std::min(static_cast<size_t>(cfg.batch_size), train_idx.size() - off);
            const auto chunk = std::span(train_idx).subspan(off, take);
            Tensor x = batch_inputs(ds, chunk);
            Tensor y = batch_targets(ds, chunk);
            GradTape tape;
            // a single-sample batch cannot provide batch statistics
            const BnMode mode = static_cast<int64_t>(take) * ds.window_len >= 2
                                    ? BnMode::train
                                    : BnMode::eval;
            const Tensor pred = forward(params, x, mode, &tape);
            const Tensor loss = smooth_l1_loss(pred, y, &tape);
            if (!std::isfinite(loss.item()))
                throw DivergedLoss("train: non-finite loss at epoch " + std::to_string(epoch));
            tape.backward(loss);
            sgd_momentum_step(tensors, velocities, cfg.lr, cfg.momentum);
            loss_acc += loss.item() * static_cast<double>(take);
            ++steps;
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.steps = steps;
        stats.train_loss = loss_acc / static_cast<double>(train_idx.size());
        if (cfg.eval_test && !test_idx.empty())
            stats.test_loss = mean_test_loss(params, ds, test_idx, cfg.batch_size);
        stats.wall_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        history.epochs.push_back(stats);

        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
            (e + 1) % cfg.checkpoint_every == 0) {
            embed_optimizer_state(params, names, velocities, epoch + 1);
            save_checkpoint(params, cfg.checkpoint_path);
        }
    }
    embed_optimizer_state(params, names, velocities, start_epoch + cfg.epochs);
    if (!cfg.checkpoint_path.empty()) save_checkpoint(params, cfg.checkpoint_path);
    if (!cfg.loss_log_path.empty()) history.write_csv(cfg.loss_log_path);
    return history;
}

std::vector<std::vector<double>> predict(ModelParams& params,
                                         const std::vector<std::vector<double>>& xs) {
    const int64_t len = params.config.input_length;
    for (const auto& x : xs)
        if (static_cast<int64_t>(x.size()) != len)
            throw ShapeMismatch("predict: window length does not match model input length");
    std::vector<std::vector<double>> out;
    out.reserve(xs.size());
    constexpr size_t kChunk = 8;
    for (size_t off = 0; off < xs.size(); off += kChunk) {
        const size_t take = std::min(kChunk, xs.size() - off);
        Tensor x(static_cast<int64_t>(take), 1, len);
        for (size_t b = 0; b < take; ++b) {
            const std::vector<double> z = zscore(xs[off + b]);
            std::copy(z.begin(), z.end(), x.value().begin() + static_cast<int64_t>(b) * len);
        }
        const Tensor pred = forward(params, x, BnMode::eval);
        for (size_t b = 0; b < take; ++b) {
            const auto* base = pred.value().data() + static_cast<int64_t>(b) * len;
            out.emplace_back(base, base + len);
        }
    }
    return out;
}

EvalReport evaluate_checkpoint(const std::string& path, const WindowedDataset& ds,
                               const std::string& dataset_id, double eval_fs) {
    ModelParams params = load_checkpoint(path);
    const std::vector<size_t> test_idx = ds.test_indices();
    if (test_idx.empty()) throw EmptyEvaluation("evaluate_checkpoint: empty test split");
    std::vector<std::vector<double>> xs, refs;
    for (size_t i : test_idx) {
        xs.push_back(ds.windows[i].x);
        refs.push_back(ds.windows[i].y);
    }
    std::vector<std::vector<double>> preds = predict(params, xs);
    for (auto& p : preds) p = downsample_for_eval(p, ds.fs, eval_fs);
    for (auto& r : refs) r = downsample_for_eval(r, ds.fs, eval_fs);
    return evaluate_method(preds, refs, eval_fs, "RespNet", dataset_id);
}

}  // namespace respnet
