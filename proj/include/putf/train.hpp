#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "putf/dataset.hpp"
#include "putf/geometry.hpp"
#include "putf/loss.hpp"
#include "putf/model.hpp"
#include "putf/rng.hpp"

namespace putf {

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 8;
    double lr0 = 1e-3;
    double lr_decay = 0.7;
    std::size_t decay_interval = 20;  // epochs between decay steps
    std::uint64_t seed = 1;
    std::string optimizer = "adam";   // "adam" or "sgd"
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const {
        if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
        if (batch_size == 0) throw ConfigError("train: batch size must be >= 1");
        if (lr0 <= 0) throw ConfigError("train: learning rate must be positive");
        if (lr_decay <= 0 || lr_decay > 1) throw ConfigError("train: decay must be in (0, 1]");
        if (decay_interval == 0) throw ConfigError("train: decay interval must be >= 1");
        if (optimizer != "adam" && optimizer != "sgd")
            throw ConfigError("train: unknown optimizer '" + optimizer + "'");
    }

    // Step schedule: lr0 * decay^floor(epoch / interval), epochs 0-based.
    double lr_at_epoch(std::size_t epoch) const {
        return lr0 * std::pow(lr_decay, static_cast<double>(epoch / decay_interval));
    }

    static TrainConfig desk() { return TrainConfig{}; }
    static TrainConfig paper() {
        TrainConfig tc;
        tc.batch_size = 64;
        return tc;
    }
};

struct EpochStat {
    double mean_loss = 0;
    double seconds = 0;
};

struct TrainResult {
    std::vector<EpochStat> epochs;
    double best_loss = 0;
    std::size_t best_epoch = 0;
    std::size_t steps = 0;
};

// Adaptive-moment update over a fixed list of tensors.
template <typename T>
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Tensor<T>*> tensors, const TrainConfig& tc)
        : tensors_(std::move(tensors)),
          beta1_(static_cast<T>(tc.adam_beta1)),
          beta2_(static_cast<T>(tc.adam_beta2)),
          eps_(static_cast<T>(tc.adam_eps)) {
        for (auto* t : tensors_) {
            m_.emplace_back(t->numel(), T(0));
            v_.emplace_back(t->numel(), T(0));
        }
    }

    void step(T lr) {
        ++t_;
        const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1_), t_));
        const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2_), t_));
        for (std::size_t i = 0; i < tensors_.size(); ++i) {
            auto vals = tensors_[i]->values_mut();
            auto grad = tensors_[i]->grad();
            for (std::size_t j = 0; j < vals.size(); ++j) {
                const T g = grad[j];
                m_[i][j] = beta1_ * m_[i][j] + (T(1) - beta1_) * g;
                v_[i][j] = beta2_ * v_[i][j] + (T(1) - beta2_) * g * g;
                const T mhat = m_[i][j] / bc1;
                const T vhat = v_[i][j] / bc2;
                vals[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

private:
    std::vector<Tensor<T>*> tensors_;
    std::vector<std::vector<T>> m_, v_;
    T beta1_, beta2_, eps_;
    int t_ = 0;
};

// A training item: unit-ball-normalized sparse input with its neighbor table
// (built once and reused every epoch) and the matching normalized target.
template <typename T>
struct TrainItem {
    Tensor<T> sparse;
    Tensor<T> dense;
    NeighborIndex nbr;
};

template <typename T>
std::vector<TrainItem<T>> prepare_items(const std::vector<SampleRecord>& data,
                                        const ModelConfig& cfg) {
    std::vector<TrainItem<T>> items;
    items.reserve(data.size());
    for (const auto& rec : data) {
        if (rec.sparse.size() < cfg.k)
            throw ArgumentError("train: sample '" + rec.id + "' has fewer points than k");
        std::vector<std::uint32_t> all(rec.sparse.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
        const Patch norm = normalize_points(rec.sparse, std::move(all));

        PointCloud dense_norm = rec.dense;
        const double inv = 1.0 / norm.scale;
        for (auto& p : dense_norm.pts) p = (p - norm.centroid) * inv;

        TrainItem<T> item;
        item.sparse = norm.normalized.to_tensor<T>();
        item.dense = dense_norm.to_tensor<T>();
        item.nbr = knn(norm.normalized, cfg.k);
        items.push_back(std::move(item));
    }
    return items;
}

// Mean chamfer loss over items, eval-mode forward, no tape.
template <typename T>
double evaluate_loss(std::vector<TrainItem<T>>& items, const ModelConfig& cfg,
                     ModelParams<T>& params) {
    double total = 0;
    for (auto& item : items)
        total += static_cast<double>(
            chamfer_loss(forward(item.sparse, item.nbr, cfg, params, false), item.dense).item());
    return total / static_cast<double>(items.size());
}

// Minibatch descent on the symmetric squared chamfer loss. Deterministic for
// a fixed seed: the per-epoch order comes from a seeded Fisher-Yates pass and
// every kernel has a fixed reduction order. On return, `params` holds the
// weights of the best epoch (lowest mean training loss).
template <typename T>
TrainResult train_model(const std::vector<SampleRecord>& data, const ModelConfig& cfg,
                        ModelParams<T>& params, const TrainConfig& tc,
                        const std::function<void(std::size_t, const EpochStat&)>& on_epoch = {}) {
    tc.validate();
    cfg.validate();
    if (data.empty()) throw ArgumentError("train: dataset is empty");

    auto items = prepare_items<T>(data, cfg);
    auto trainable = params.trainable_tensors();
    std::vector<Tensor<T>*> tensors;
    for (auto& [name, t] : trainable) {
        t->set_requires_grad(true);
        t->zero_grad();
        tensors.push_back(t);
    }
    AdamOptimizer<T> adam(tensors, tc);
    const bool use_adam = tc.optimizer == "adam";

    TrainResult result;
    result.best_loss = std::numeric_limits<double>::infinity();
    ModelParams<T> best = params.clone();

    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const Rng base(tc.seed);

    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const T lr = static_cast<T>(tc.lr_at_epoch(epoch));
        Rng rng = base.fork(epoch);
        rng.shuffle(order);

        double epoch_loss = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += tc.batch_size) {
            const std::size_t end = std::min(order.size(), begin + tc.batch_size);
            const T inv_batch = T(1) / static_cast<T>(end - begin);
            const std::size_t batch_idx = begin / tc.batch_size;
            for (std::size_t i = begin; i < end; ++i) {
                auto& item = items[order[i]];
                Tape<T> tape;
                TapeScope<T> scope(tape);
                Tensor<T> loss;
                try {
                    loss = chamfer_loss(forward(item.sparse, item.nbr, cfg, params, true),
                                        item.dense);
                } catch (const NumericError& e) {
                    throw NumericError("train: aborted at epoch " + std::to_string(epoch) +
                                       " batch " + std::to_string(batch_idx) + ": " + e.what());
                }
                epoch_loss += static_cast<double>(loss.item());
                tape.backward(ops::mul_scalar(loss, inv_batch));
            }
            if (use_adam) {
                adam.step(lr);
            } else {
                for (auto* t : tensors) {
                    auto vals = t->values_mut();
                    auto grad = t->grad();
                    for (std::size_t j = 0; j < vals.size(); ++j) vals[j] -= lr * grad[j];
                }
            }
            for (auto* t : tensors) t->zero_grad();
            ++result.steps;
        }

        EpochStat stat;
        stat.mean_loss = epoch_loss / static_cast<double>(items.size());
        stat.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!std::isfinite(stat.mean_loss))
            throw NumericError("train: non-finite epoch loss at epoch " + std::to_string(epoch));
        result.epochs.push_back(stat);
        if (stat.mean_loss < result.best_loss) {
            result.best_loss = stat.mean_loss;
            result.best_epoch = epoch;
            best = params.clone();
        }
        if (on_epoch) on_epoch(epoch, stat);
    }

    // Hand back the best-epoch weights (including their running stats).
    auto current = params.named_tensors();
    auto best_named = best.named_tensors();
    for (std::size_t i = 0; i < current.size(); ++i) {
        auto dst = current[i].second->values_mut();
        auto src = best_named[i].second->values();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = src[j];
    }
    return result;
}

}  // namespace putf
