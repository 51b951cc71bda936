#pragma once

// Sinusoidal 2D positional encoding and multi-head attention blocks, written
// once over the plain/traced contexts.

#include <cmath>
#include <string>
#include <vector>

#include "deskdrive/nn.hpp"

namespace deskdrive {

inline const Tensor& value_of(const Tensor& t) { return t; }
inline const Tensor& value_of(const Var& v) { return v.val(); }

// Fixed 2D sinusoidal encoding, returned as (d, H*W): the first d/2 channels
// encode the row index, the rest the column index. Within an axis block,
// even channels are sin and odd channels cos at geometrically decreasing
// frequencies (channel 0 is sin(pos)).
inline Tensor positional_encoding(std::size_t h, std::size_t w, std::size_t d) {
    require(d % 2 == 0, "positional encoding width must be even");
    const std::size_t half = d / 2;
    Tensor out({d, h * w});
    auto fill_axis = [&](std::size_t chan_base, auto pos_of) {
        for (std::size_t k = 0; k < half; ++k) {
            const double omega = std::pow(10000.0, -2.0 * std::floor(static_cast<double>(k) / 2.0) /
                                                       static_cast<double>(half));
            for (std::size_t t = 0; t < h * w; ++t) {
                const double a = static_cast<double>(pos_of(t)) * omega;
                out.at2(chan_base + k, t) = (k % 2 == 0) ? std::sin(a) : std::cos(a);
            }
        }
    };
    fill_axis(0, [w](std::size_t t) { return t / w; });
    fill_axis(half, [w](std::size_t t) { return t % w; });
    return out;
}

inline void add_attention_params(ParamStore& ps, const std::string& prefix, std::size_t d,
                                 std::size_t heads) {
    const std::size_t dh = d / heads;
    for (std::size_t h = 0; h < heads; ++h) {
        const std::string hp = prefix + ".h" + std::to_string(h);
        ps.add(hp + ".q.w", {d, dh});
        ps.add(hp + ".q.b", {dh});
        ps.add(hp + ".k.w", {d, dh});
        ps.add(hp + ".k.b", {dh});
        ps.add(hp + ".v.w", {d, dh});
        ps.add(hp + ".v.b", {dh});
    }
    ps.add(prefix + ".out.w", {d, d});
    ps.add(prefix + ".out.b", {d});
}

inline void add_ffn_block_params(ParamStore& ps, const std::string& prefix, std::size_t d) {
    ps.add(prefix + ".w0", {d, 2 * d});
    ps.add(prefix + ".b0", {2 * d});
    ps.add(prefix + ".w1", {2 * d, d});
    ps.add(prefix + ".b1", {d});
}

inline void add_encoder_layer_params(ParamStore& ps, const std::string& prefix, std::size_t d,
                                     std::size_t heads) {
    add_attention_params(ps, prefix + ".att", d, heads);
    add_ffn_block_params(ps, prefix + ".ffn", d);
}

inline void add_decoder_layer_params(ParamStore& ps, const std::string& prefix, std::size_t d,
                                     std::size_t heads) {
    add_attention_params(ps, prefix + ".self", d, heads);
    add_attention_params(ps, prefix + ".cross", d, heads);
    add_ffn_block_params(ps, prefix + ".ffn", d);
}

// Multi-head attention. q_tokens (Tq,d) attend over kv_tokens (Tk,d).
// key_mask, when given, removes keys from the softmax; attn_sink, when
// given, receives one (Tq,Tk) row-stochastic matrix per head.
template <class Ctx>
typename Ctx::V attention_block(Ctx& ctx, const std::string& prefix, typename Ctx::V q_tokens,
                                typename Ctx::V kv_tokens, std::size_t heads,
                                const std::vector<bool>* key_mask = nullptr,
                                std::vector<Tensor>* attn_sink = nullptr) {
    using V = typename Ctx::V;
    const std::size_t d = value_of(q_tokens).cols();
    const std::size_t dh = d / heads;
    const std::size_t tk = value_of(kv_tokens).rows();
    Tensor mask_add;
    if (key_mask) {
        require(key_mask->size() == tk, "attention key mask length mismatch");
        mask_add = Tensor({value_of(q_tokens).rows(), tk});
        for (std::size_t r = 0; r < mask_add.rows(); ++r)
            for (std::size_t c = 0; c < tk; ++c)
                if ((*key_mask)[c]) mask_add.at2(r, c) = -1e9;
    }
    std::vector<V> head_out;
    head_out.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::string hp = prefix + ".h" + std::to_string(h);
        V q = add_rowwise(matmul(q_tokens, ctx.param(hp + ".q.w")), ctx.param(hp + ".q.b"));
        V k = add_rowwise(matmul(kv_tokens, ctx.param(hp + ".k.w")), ctx.param(hp + ".k.b"));
        V v = add_rowwise(matmul(kv_tokens, ctx.param(hp + ".v.w")), ctx.param(hp + ".v.b"));
        V s = scale(matmul(q, transpose2d(k)), 1.0 / std::sqrt(static_cast<double>(dh)));
        if (key_mask) s = add_const_any(ctx, s, mask_add);
        // canonical-order reductions over the keys keep the block exactly
        // permutation-equivariant in the tokens
        V a = softmax_keys(s);
        if (attn_sink) attn_sink->push_back(value_of(a));
        head_out.push_back(matmul_keys(a, v));
    }
    V cat = concat_cols(head_out);
    return add_rowwise(matmul(cat, ctx.param(prefix + ".out.w")), ctx.param(prefix + ".out.b"));
}

inline Tensor add_const_any(PlainCtx&, const Tensor& a, const Tensor& c) { return add(a, c); }
inline Var add_const_any(TraceCtx&, Var a, const Tensor& c) { return add_const(a, c); }

template <class Ctx>
typename Ctx::V ffn_block(Ctx& ctx, const std::string& prefix, typename Ctx::V x) {
    using V = typename Ctx::V;
    V h = add_rowwise(matmul(x, ctx.param(prefix + ".w0")), ctx.param(prefix + ".b0"));
    h = activation(h, Activation::Relu);
    return add_rowwise(matmul(h, ctx.param(prefix + ".w1")), ctx.param(prefix + ".b1"));
}

template <class Ctx>
typename Ctx::V encoder_layer(Ctx& ctx, const std::string& prefix, typename Ctx::V x,
                              std::size_t heads, std::vector<Tensor>* attn_sink = nullptr) {
    x = add(x, attention_block(ctx, prefix + ".att", x, x, heads, nullptr, attn_sink));
    return add(x, ffn_block(ctx, prefix + ".ffn", x));
}

template <class Ctx>
typename Ctx::V decoder_layer(Ctx& ctx, const std::string& prefix, typename Ctx::V queries,
                              typename Ctx::V memory, std::size_t heads,
                              const std::vector<bool>* memory_mask = nullptr,
                              std::vector<Tensor>* attn_sink = nullptr) {
    queries = add(queries,
                  attention_block(ctx, prefix + ".self", queries, queries, heads, nullptr, attn_sink));
    queries = add(queries, attention_block(ctx, prefix + ".cross", queries, memory, heads,
                                           memory_mask, attn_sink));
    return add(queries, ffn_block(ctx, prefix + ".ffn", queries));
}

}  // namespace deskdrive
