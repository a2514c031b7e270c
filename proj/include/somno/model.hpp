#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "somno/errors.hpp"
#include "somno/nn.hpp"
#include "somno/ops.hpp"
#include "somno/rng.hpp"
#include "somno/tensor.hpp"

namespace somno {

enum class ModelVariant { Single, Dual };

inline std::string variant_name(ModelVariant v) {
    return v == ModelVariant::Single ? "single" : "dual";
}

inline ModelVariant parse_variant(const std::string& s) {
    if (s == "single") return ModelVariant::Single;
    if (s == "dual") return ModelVariant::Dual;
    throw ConfigError("model: unknown variant '" + s + "'");
}

struct ModelConfig {
    ModelVariant variant = ModelVariant::Single;
    int blocks_per_stream = 8;
    std::vector<std::int64_t> channel_schedule = {16, 16, 32, 32, 64, 64, 128, 128};
    int fusion_blocks = 3;
    std::int64_t fusion_dim = 256;
    std::int64_t heads = 8;
    std::int64_t dense_units = 128;
    int tcn_blocks = 2;
    std::int64_t tcn_kernel = 7;
    std::vector<std::int64_t> tcn_dilations = {1, 2, 4, 8, 16, 32};
    std::int64_t classes = 4;
    double epsilon_weighting = 1e-8;
    std::int64_t samples_per_epoch = 1024;

    static ModelConfig single_default() { return ModelConfig{}; }

    static ModelConfig dual_default() {
        ModelConfig c;
        c.variant = ModelVariant::Dual;
        c.blocks_per_stream = 9;
        c.channel_schedule = {16, 16, 32, 32, 64, 64, 128, 128, 256};
        return c;
    }

    void validate() const {
        if (classes != 4) throw ConfigError("model: classes must be 4");
        if (blocks_per_stream < 1) throw ConfigError("model: blocks_per_stream must be >= 1");
        if (static_cast<int>(channel_schedule.size()) != blocks_per_stream)
            throw ConfigError("model: channel_schedule length " +
                              std::to_string(channel_schedule.size()) + " != blocks_per_stream " +
                              std::to_string(blocks_per_stream));
        for (std::int64_t c : channel_schedule)
            if (c < 1) throw ConfigError("model: channel_schedule entries must be positive");
        if (dense_units < 1) throw ConfigError("model: dense_units must be >= 1");
        if (tcn_blocks < 1) throw ConfigError("model: tcn_blocks must be >= 1");
        if (tcn_kernel < 1) throw ConfigError("model: tcn_kernel must be >= 1");
        if (tcn_dilations.empty()) throw ConfigError("model: tcn_dilations must be non-empty");
        for (std::int64_t d : tcn_dilations)
            if (d < 1) throw ConfigError("model: tcn_dilations entries must be >= 1");
        if (samples_per_epoch < 1) throw ConfigError("model: samples_per_epoch must be >= 1");
        if (blocks_per_stream >= 63 || samples_per_epoch % (std::int64_t{1} << blocks_per_stream) != 0)
            throw ConfigError("model: samples_per_epoch must be divisible by 2^blocks_per_stream");
        if (variant == ModelVariant::Dual) {
            if (heads < 1 || fusion_dim % heads != 0)
                throw ConfigError("model: fusion_dim must be divisible by heads");
            if (fusion_blocks < 1) throw ConfigError("model: fusion_blocks must be >= 1");
            if (channel_schedule.back() != fusion_dim)
                throw ConfigError("model: encoder must end at fusion_dim channels, got " +
                                  std::to_string(channel_schedule.back()) + " vs fusion_dim " +
                                  std::to_string(fusion_dim));
        }
    }

    std::int64_t steps_per_epoch() const {
        return samples_per_epoch >> blocks_per_stream;
    }
    std::int64_t epoch_feature_dim() const { return steps_per_epoch() * channel_schedule.back(); }
};

/// Encoder activation plus how many samples of the original signal one
/// remaining time step spans relative to an epoch.
struct FeatureMap {
    Tensor tensor; // [b, channels, time]
    std::int64_t samples_per_epoch_remaining = 0;
};

class Model {
public:
    Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
        config_.validate();
        SeededRng rng(seed);
        const auto& sched = config_.channel_schedule;
        auto build_stream = [&](std::vector<nn::ResConvBlock>& stream) {
            std::int64_t c_in = 1;
            for (int i = 0; i < config_.blocks_per_stream; ++i) {
                stream.emplace_back(rng, c_in, sched[static_cast<std::size_t>(i)]);
                c_in = sched[static_cast<std::size_t>(i)];
            }
        };
        build_stream(enc_ppg_);
        if (config_.variant == ModelVariant::Dual) {
            build_stream(enc_aux_);
            for (int i = 0; i < config_.fusion_blocks; ++i)
                fusion_.emplace_back(rng, config_.fusion_dim, config_.heads);
            weighting_ = nn::AdaptiveWeighting(rng, config_.fusion_dim, config_.epsilon_weighting);
        }
        dense_epoch_ = nn::DenseLayer(rng, config_.epoch_feature_dim(), config_.dense_units);
        for (int i = 0; i < config_.tcn_blocks; ++i)
            tcn_.emplace_back(rng, config_.dense_units, config_.tcn_kernel, config_.tcn_dilations);
        head_ = nn::DenseLayer(rng, config_.dense_units, config_.classes);

        auto reg = [&](auto& item, const std::string& name) { item.register_params(params_, name); };
        for (std::size_t i = 0; i < enc_ppg_.size(); ++i)
            reg(enc_ppg_[i], "enc_ppg.block" + std::to_string(i));
        for (std::size_t i = 0; i < enc_aux_.size(); ++i)
            reg(enc_aux_[i], "enc_aux.block" + std::to_string(i));
        for (std::size_t i = 0; i < fusion_.size(); ++i)
            reg(fusion_[i], "fusion.block" + std::to_string(i));
        if (config_.variant == ModelVariant::Dual) reg(weighting_, "weighting");
        reg(dense_epoch_, "dense_epoch");
        for (std::size_t i = 0; i < tcn_.size(); ++i) reg(tcn_[i], "tcn.block" + std::to_string(i));
        reg(head_, "head");
    }

    const ModelConfig& config() const { return config_; }
    std::vector<Parameter>& params() { return params_; }
    const std::vector<Parameter>& params() const { return params_; }

    void zero_grad() {
        for (Parameter& p : params_) p.tensor.zero_grad();
    }

    /// channels: one [b, 1, t] tensor for single, two for dual.
    /// Returns per-epoch logits [b, t / samples_per_epoch, classes].
    Tensor forward(const std::vector<Tensor>& channels) const {
        const std::size_t expected = config_.variant == ModelVariant::Single ? 1 : 2;
        if (channels.size() != expected)
            throw ShapeError("model: expected " + std::to_string(expected) + " channels, got " +
                             std::to_string(channels.size()));
        const std::int64_t t = channels[0].dim(2);
        if (t % config_.samples_per_epoch != 0)
            throw ShapeError("model: input length " + std::to_string(t) +
                             " is not a whole number of epochs");
        const std::int64_t epochs = t / config_.samples_per_epoch;

        Tensor per_epoch; // [b, epochs, feat]
        if (config_.variant == ModelVariant::Single) {
            FeatureMap f = encode(enc_ppg_, channels[0]);
            per_epoch = nn::temporal_window(f.tensor, epochs);
        } else {
            if (channels[0].shape() != channels[1].shape())
                throw ShapeError("model: channel shapes differ");
            FeatureMap fp = encode(enc_ppg_, channels[0]);
            FeatureMap fy = encode(enc_aux_, channels[1]);
            Tensor p = ops::transpose_last2(fp.tensor); // [b, time, d]
            Tensor y = ops::transpose_last2(fy.tensor);
            for (const auto& block : fusion_) {
                auto [p2, y2] = block.forward(p, y);
                p = p2;
                y = y2;
            }
            Tensor fused = weighting_.forward(p, y);       // [b, time, d]
            per_epoch = nn::temporal_window(ops::transpose_last2(fused), epochs);
        }
        Tensor h = dense_epoch_.forward(per_epoch); // [b, epochs, dense_units]
        for (const auto& block : tcn_) h = block.forward(h);
        return head_.forward(h); // [b, epochs, classes]
    }

    /// Per-epoch argmax classes for one recording's channel data; ties pick
    /// the lowest class index. Runs without recording the autodiff graph.
    std::vector<int> predict(const std::vector<std::vector<double>>& channel_data) const {
        NoGradGuard guard;
        std::vector<Tensor> channels;
        channels.reserve(channel_data.size());
        for (const auto& samples : channel_data) {
            const std::int64_t t = static_cast<std::int64_t>(samples.size());
            channels.emplace_back(Shape{1, 1, t}, samples);
        }
        Tensor logits = forward(channels);
        const std::int64_t epochs = logits.dim(1), nc = logits.dim(2);
        std::vector<int> stages(static_cast<std::size_t>(epochs));
        const double* d = logits.data().data();
        for (std::int64_t e = 0; e < epochs; ++e) {
            const double* row = d + e * nc;
            int best = 0;
            for (int c = 1; c < nc; ++c)
                if (row[c] > row[best]) best = c;
            stages[static_cast<std::size_t>(e)] = best;
        }
        return stages;
    }

private:
    FeatureMap encode(const std::vector<nn::ResConvBlock>& stream, const Tensor& x) const {
        if (x.rank() != 3 || x.dim(1) != 1)
            throw ShapeError("model: channel tensor must be [b, 1, t], got " + shape_str(x.shape()));
        FeatureMap f{x, config_.samples_per_epoch};
        for (const auto& block : stream) {
            f.tensor = block.forward(f.tensor);
            f.samples_per_epoch_remaining /= 2;
        }
        return f;
    }

    ModelConfig config_;
    std::vector<nn::ResConvBlock> enc_ppg_;
    std::vector<nn::ResConvBlock> enc_aux_;
    std::vector<nn::CrossAttentionBlock> fusion_;
    nn::AdaptiveWeighting weighting_;
    nn::DenseLayer dense_epoch_;
    std::vector<nn::TcnBlock> tcn_;
    nn::DenseLayer head_;
    std::vector<Parameter> params_;
};

} // namespace somno
