#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "somno/ops.hpp"
#include "somno/rng.hpp"
#include "somno/tensor.hpp"

namespace somno {
namespace nn {

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kLayerNormEps = 1e-5;

namespace detail {

inline Tensor init_weight(SeededRng& rng, Shape shape, std::int64_t fan_in) {
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (double& x : v) x = rng.normal() * std_dev;
    Tensor t(std::move(shape), std::move(v));
    t.set_requires_grad(true);
    return t;
}

inline Tensor init_const(Shape shape, double value) {
    Tensor t(std::move(shape), value);
    t.set_requires_grad(true);
    return t;
}

} // namespace detail

struct DenseLayer {
    Tensor w, b;

    DenseLayer() = default;
    DenseLayer(SeededRng& rng, std::int64_t d_in, std::int64_t d_out)
        : w(detail::init_weight(rng, {d_in, d_out}, d_in)), b(detail::init_const({d_out}, 0.0)) {}

    Tensor forward(const Tensor& x) const { return ops::dense(x, w, b); }

    void register_params(std::vector<Parameter>& out, const std::string& prefix) {
        out.push_back({prefix + ".w", w});
        out.push_back({prefix + ".b", b});
    }
};

struct ConvLayer {
    Tensor kernel, bias; // bias undefined for pure projections

    ConvLayer() = default;
    ConvLayer(SeededRng& rng, std::int64_t c_out, std::int64_t c_in, std::int64_t k,
              bool with_bias = true)
        : kernel(detail::init_weight(rng, {c_out, c_in, k}, c_in * k)) {
        if (with_bias) bias = detail::init_const({c_out}, 0.0);
    }

    Tensor forward(const Tensor& x, ops::Padding pad, std::int64_t dilation = 1) const {
        return ops::conv1d(x, kernel, pad, dilation, bias);
    }

    void register_params(std::vector<Parameter>& out, const std::string& prefix) {
        out.push_back({prefix + ".kernel", kernel});
        if (bias.defined()) out.push_back({prefix + ".bias", bias});
    }
};

struct LayerNormLayer {
    Tensor gain, bias;

    LayerNormLayer() = default;
    explicit LayerNormLayer(std::int64_t d)
        : gain(detail::init_const({d}, 1.0)), bias(detail::init_const({d}, 0.0)) {}

    Tensor forward(const Tensor& x) const { return ops::layer_norm(x, gain, bias, kLayerNormEps); }

    void register_params(std::vector<Parameter>& out, const std::string& prefix) {
        out.push_back({prefix + ".gain", gain});
        out.push_back({prefix + ".bias", bias});
    }
};

/// Normalize [b, c, t] across the channel axis.
inline Tensor channel_layer_norm(const LayerNormLayer& ln, const Tensor& x) {
    return ops::transpose_last2(ln.forward(ops::transpose_last2(x)));
}

/// Residual conv block with 2x temporal downsampling:
/// conv(k3) -> LN over channels -> leaky_relu -> conv(k3) -> +skip -> pool2.
struct ResConvBlock {
    ConvLayer conv1, conv2;
    LayerNormLayer norm;
    ConvLayer skip; // 1x1 projection, present only when channel count changes

    ResConvBlock() = default;
    ResConvBlock(SeededRng& rng, std::int64_t c_in, std::int64_t c_out)
        : conv1(rng, c_out, c_in, 3), conv2(rng, c_out, c_out, 3), norm(c_out) {
        if (c_in != c_out) skip = ConvLayer(rng, c_out, c_in, 1, /*with_bias=*/false);
    }

    Tensor forward(const Tensor& x) const {
        if (x.dim(2) % 2 != 0)
            throw ShapeError("res_conv_block: time axis must be even, got " +
                             std::to_string(x.dim(2)));
        Tensor h = conv1.forward(x, ops::Padding::Same);
        h = channel_layer_norm(norm, h);
        h = ops::leaky_relu(h, kLeakySlope);
        h = conv2.forward(h, ops::Padding::Same);
        Tensor res = skip.kernel.defined() ? skip.forward(x, ops::Padding::Same) : x;
        return ops::max_pool1d(ops::add(h, res));
    }

    void register_params(std::vector<Parameter>& out, const std::string& prefix) {
        conv1.register_params(out, prefix + ".conv1");
        conv2.register_params(out, prefix + ".conv2");
        norm.register_params(out, prefix + ".norm");
        if (skip.kernel.defined()) skip.register_params(out, prefix + ".skip");
    }
};

/// Reshape encoder output [b, c, t] into per-epoch feature vectors
/// [b, epochs, (t/epochs) * c], step-major within each epoch.
inline Tensor temporal_window(const Tensor& x, std::int64_t epochs) {
    if (x.rank() != 3) throw ShapeError("temporal_window: expected [b, c, t]");
    const std::int64_t b = x.dim(0), c = x.dim(1), t = x.dim(2);
    if (epochs < 1 || t % epochs != 0)
        throw ShapeError("temporal_window: time " + std::to_string(t) +
                         " not divisible into " + std::to_string(epochs) + " epochs");
    const std::int64_t steps = t / epochs;
    Tensor r = ops::reshape(x, {b, c, epochs, steps});
    r = ops::permute(r, {0, 2, 3, 1});
    return ops::reshape(r, {b, epochs, steps * c});
}

/// Stack of dilated convolutions over the epoch axis with a block-level
/// residual; input and output are [b, epochs, d].
struct TcnBlock {
    std::vector<ConvLayer> convs;
    std::vector<std::int64_t> dilations;

    TcnBlock() = default;
    TcnBlock(SeededRng& rng, std::int64_t d, std::int64_t kernel, std::vector<std::int64_t> dils)
        : dilations(std::move(dils)) {
        convs.reserve(dilations.size());
        for (std::size_t i = 0; i < dilations.size(); ++i) convs.emplace_back(rng, d, d, kernel);
    }

    Tensor forward(const Tensor& x) const {
        Tensor h = ops::transpose_last2(x); // [b, d, epochs]
        for (std::size_t i = 0; i < convs.size(); ++i) {
            h = convs[i].forward(h, ops::Padding::Same, dilations[i]);
            h = ops::leaky_relu(h, kLeakySlope);
        }
        return ops::add(ops::transpose_last2(h), x);
    }

    void register_params(std::vector<Parameter>& out, const std::string& prefix) {
        for (std::size_t i = 0; i < convs.size(); ++i)
            convs[i].register_params(out, prefix + ".conv" + std::to_string(i));
    }
};

/// Position-wise feed-forward d -> 4d -> d with leaky_relu.
struct FeedForward {
    DenseLayer fc1, fc2;

    FeedForward() = default;
    FeedForward(SeededRng& rng, std::int64_t d) : fc1(rng, d, 4 * d), fc2(rng, 4 * d, d) {}

    Tensor forward(const Tensor& x) const {
        return fc2.forward(ops::leaky_relu(fc1.forward(x), kLeakySlope));
    }

    void register_params(std::vector<Parameter>& out, const std::string& prefix) {
        fc1.register_params(out, prefix + ".fc1");
        fc2.register_params(out, prefix + ".fc2");
    }
};

inline ops::AttentionParams make_attention_params(SeededRng& rng, std::int64_t d) {
    ops::AttentionParams p;
    p.w_q = detail::init_weight(rng, {d, d}, d);
    p.w_k = detail::init_weight(rng, {d, d}, d);
    p.w_v = detail::init_weight(rng, {d, d}, d);
    p.w_o = detail::init_weight(rng, {d, d}, d);
    return p;
}

inline void register_attention_params(ops::AttentionParams& p, std::vector<Parameter>& out,
                                      const std::string& prefix) {
    out.push_back({prefix + ".w_q", p.w_q});
    out.push_back({prefix + ".w_k", p.w_k});
    out.push_back({prefix + ".w_v", p.w_v});
    out.push_back({prefix + ".w_o", p.w_o});
}

/// Simultaneous bidirectional cross-attention: each stream attends to the
/// other's features, then passes through its own residual FFN; both residual
/// sums are layer-normalized.
struct CrossAttentionBlock {
    ops::AttentionParams attn_p; // queries from the ppg stream
    ops::AttentionParams attn_y; // queries from the auxiliary stream
    LayerNormLayer ln_p1, ln_y1, ln_p2, ln_y2;
    FeedForward ffn_p, ffn_y;
    std::int64_t heads = 1;

    CrossAttentionBlock() = default;
    CrossAttentionBlock(SeededRng& rng, std::int64_t d, std::int64_t n_heads)
        : attn_p(make_attention_params(rng, d)),
          attn_y(make_attention_params(rng, d)),
          ln_p1(d),
          ln_y1(d),
          ln_p2(d),
          ln_y2(d),
          ffn_p(rng, d),
          ffn_y(rng, d),
          heads(n_heads) {}

    std::pair<Tensor, Tensor> forward(const Tensor& f_p, const Tensor& f_y) const {
        if (f_p.shape() != f_y.shape())
            throw ShapeError("cross_attention: stream shapes differ " + shape_str(f_p.shape()) +
                             " vs " + shape_str(f_y.shape()));
        Tensor p1 = ln_p1.forward(ops::add(f_p, ops::multi_head_attention(f_p, f_y, attn_p, heads)));
        Tensor y1 = ln_y1.forward(ops::add(f_y, ops::multi_head_attention(f_y, f_p, attn_y, heads)));
        Tensor p2 = ln_p2.forward(ops::add(p1, ffn_p.forward(p1)));
        Tensor y2 = ln_y2.forward(ops::add(y1, ffn_y.forward(y1)));
        return {p2, y2};
    }

    void register_params(std::vector<Parameter>& out, const std::string& prefix) {
        register_attention_params(attn_p, out, prefix + ".attn_p");
        register_attention_params(attn_y, out, prefix + ".attn_y");
        ln_p1.register_params(out, prefix + ".ln_p1");
        ln_y1.register_params(out, prefix + ".ln_y1");
        ln_p2.register_params(out, prefix + ".ln_p2");
        ln_y2.register_params(out, prefix + ".ln_y2");
        ffn_p.register_params(out, prefix + ".ffn_p");
        ffn_y.register_params(out, prefix + ".ffn_y");
    }
};

/// Gated fusion of two aligned streams: per-batch scalar gates from a shared
/// MLP over time-pooled features, normalized to ~convex weights.
struct AdaptiveWeighting {
    DenseLayer fc1, fc2; // shared between streams
    double epsilon = 1e-8;

    AdaptiveWeighting() = default;
    AdaptiveWeighting(SeededRng& rng, std::int64_t d, double eps)
        : fc1(rng, d, std::max<std::int64_t>(1, d / 4)),
          fc2(rng, std::max<std::int64_t>(1, d / 4), 1),
          epsilon(eps) {}

    Tensor gate(const Tensor& stream) const {
        Tensor g = ops::global_avg_pool(stream); // [b, d]
        g = ops::leaky_relu(fc1.forward(g), kLeakySlope);
        g = fc2.forward(g); // [b, 1]
        return ops::sigmoid(g);
    }

    Tensor forward(const Tensor& f_p, const Tensor& f_y) const {
        if (f_p.shape() != f_y.shape())
            throw ShapeError("adaptive_weighting: stream shapes differ");
        Tensor a = gate(f_p);
        Tensor b = gate(f_y);
        Tensor denom = ops::add_scalar(ops::add(a, b), epsilon);
        Tensor w_p = ops::div(a, denom);
        Tensor w_y = ops::div(b, denom);
        return ops::add(ops::scale_per_batch(f_p, w_p), ops::scale_per_batch(f_y, w_y));
    }

    void register_params(std::vector<Parameter>& out, const std::string& prefix) {
        fc1.register_params(out, prefix + ".fc1");
        fc2.register_params(out, prefix + ".fc2");
    }
};

} // namespace nn
} // namespace somno
