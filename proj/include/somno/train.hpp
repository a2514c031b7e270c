#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "somno/errors.hpp"
#include "somno/metrics.hpp"
#include "somno/model.hpp"
#include "somno/ops.hpp"
#include "somno/rng.hpp"
#include "somno/tensor.hpp"

namespace somno {

struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 1e-5;
    int batch_size = 2;
    int max_epochs = 50;
    int patience = 7;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    double grad_clip = 0.0; // global-norm clip; 0 disables

    void validate() const {
        if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
        if (patience < 1) throw ConfigError("train: patience must be >= 1");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw ConfigError("train: betas must lie in [0, 1)");
        if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be positive");
        if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
        if (grad_clip < 0.0) throw ConfigError("train: grad_clip must be >= 0");
    }
};

/// First/second moment buffers plus the shared step counter.
struct AdamState {
    std::int64_t step = 0;
    std::vector<std::vector<double>> m, v;

    explicit AdamState(const std::vector<Parameter>& params) {
        m.reserve(params.size());
        v.reserve(params.size());
        for (const Parameter& p : params) {
            m.emplace_back(p.tensor.data().size(), 0.0);
            v.emplace_back(p.tensor.data().size(), 0.0);
        }
    }
};

/// One decoupled-weight-decay Adam update from the gradients currently on
/// the parameters: theta <- theta - lr * mhat/(sqrt(vhat)+eps) - lr * wd * theta.
inline void adamw_step(std::vector<Parameter>& params, AdamState& state, const TrainConfig& cfg) {
    if (params.size() != state.m.size())
        throw ConfigError("adamw: state does not match parameter list");
    const std::int64_t t = state.step + 1;

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const auto& g = params[pi].tensor.grad();
        for (double gv : g)
            if (!std::isfinite(gv))
                throw NumericError("adamw: non-finite gradient in '" + params[pi].name +
                                   "' at step " + std::to_string(t));
    }
    double clip_scale = 1.0;
    if (cfg.grad_clip > 0.0) {
        double sq = 0.0;
        for (std::size_t pi = 0; pi < params.size(); ++pi)
            for (double gv : params[pi].tensor.grad()) sq += gv * gv;
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip) clip_scale = cfg.grad_clip / norm;
    }

    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& theta = params[pi].tensor.data();
        const auto& g = params[pi].tensor.grad();
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gv = g[i] * clip_scale;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gv;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gv * gv;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps) +
                        cfg.lr * cfg.weight_decay * theta[i];
        }
    }
    state.step = t;
}

/// Strictly-better early stopping on validation kappa.
struct EarlyStopper {
    int patience;
    double best = -std::numeric_limits<double>::infinity();
    int since_best = 0;

    explicit EarlyStopper(int patience_epochs) : patience(patience_epochs) {}

    /// Returns true when this score improves on the best so far.
    bool update(double score) {
        if (score > best) {
            best = score;
            since_best = 0;
            return true;
        }
        ++since_best;
        return false;
    }
    bool should_stop() const { return since_best >= patience; }
};

/// One training example: per-channel sample vectors plus one label per epoch.
struct Sample {
    std::vector<std::vector<double>> channels;
    std::vector<std::int64_t> labels;
};

struct EpochStats {
    double train_loss = 0.0;
    double val_kappa = 0.0;
    double seconds = 0.0;
};

struct TrainState {
    std::int64_t step = 0;
    double best_val_kappa = -std::numeric_limits<double>::infinity();
    int epochs_since_best = 0;
    std::vector<EpochStats> history;
};

namespace detail {

inline double pooled_val_kappa(const Model& model, const std::vector<Sample>& val) {
    std::vector<int> truth, pred;
    for (const Sample& s : val) {
        const std::vector<int> p = model.predict(s.channels);
        if (p.size() != s.labels.size())
            throw ShapeError("train: prediction count != label count");
        for (std::size_t i = 0; i < p.size(); ++i) {
            truth.push_back(static_cast<int>(s.labels[i]));
            pred.push_back(p[i]);
        }
    }
    return cohen_kappa(confusion(truth, pred));
}

inline std::vector<Tensor> sample_tensors(const Sample& s) {
    std::vector<Tensor> channels;
    channels.reserve(s.channels.size());
    for (const auto& data : s.channels)
        channels.emplace_back(Shape{1, 1, static_cast<std::int64_t>(data.size())}, data);
    return channels;
}

} // namespace detail

/// AdamW training with per-epoch validation kappa and patience-based early
/// stopping; the model is left holding (and the state reports) the best
/// validation-kappa parameters.
inline TrainState train_loop(Model& model, const std::vector<Sample>& train,
                             const std::vector<Sample>& val, const TrainConfig& cfg) {
    cfg.validate();
    if (train.empty() || val.empty())
        throw ConfigError("train: training and validation sets must be non-empty");

    SeededRng rng(cfg.seed);
    AdamState adam(model.params());
    TrainState state;
    EarlyStopper stopper(cfg.patience);
    std::vector<std::vector<double>> best_params;

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        // deterministic shuffle
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i)));
            std::swap(order[i - 1], order[j]);
        }

        double loss_sum = 0.0; // per-sleep-epoch cross entropy, summed
        std::int64_t epoch_count = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::int64_t batch_epochs = 0;
            for (std::size_t i = start; i < end; ++i)
                batch_epochs += static_cast<std::int64_t>(train[order[i]].labels.size());

            model.zero_grad();
            for (std::size_t i = start; i < end; ++i) {
                const Sample& s = train[order[i]];
                Tensor logits = model.forward(detail::sample_tensors(s));
                Tensor ce = ops::cross_entropy(logits, s.labels);
                const double weight = static_cast<double>(s.labels.size()) /
                                      static_cast<double>(batch_epochs);
                Tensor scaled = ops::scale(ce, weight);
                if (!std::isfinite(scaled.item()))
                    throw NumericError("train: non-finite loss at step " +
                                       std::to_string(state.step + 1));
                scaled.backward();
                loss_sum += ce.item() * static_cast<double>(s.labels.size());
                epoch_count += static_cast<std::int64_t>(s.labels.size());
            }
            adamw_step(model.params(), adam, cfg);
            ++state.step;
        }

        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(epoch_count);
        stats.val_kappa = detail::pooled_val_kappa(model, val);
        if (stopper.update(stats.val_kappa)) {
            best_params.clear();
            for (const Parameter& p : model.params()) best_params.push_back(p.tensor.data());
        }
        state.best_val_kappa = stopper.best;
        state.epochs_since_best = stopper.since_best;
        stats.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        state.history.push_back(stats);
        if (stopper.should_stop()) break;
    }

    for (std::size_t i = 0; i < best_params.size(); ++i)
        model.params()[i].tensor.data() = best_params[i];
    return state;
}

} // namespace somno
