// SPDX-License-Identifier: Apache-2.0
//
// Pre-norm transformer building blocks on top of the autodiff graph, plus the
// plain-tensor counterparts used by inference paths that do not need gradients.

#pragma once

#include <vector>

#include <string>

#include "ts2/common/rng.hpp"
#include "ts2/numcore/graph.hpp"
#include "ts2/numcore/ops.hpp"
#include "ts2/numcore/optim.hpp"

namespace ts2::numcore {

struct LayerNormParams {
    Var gain;
    Var bias;
};

struct AttentionParams {
    Var wq, bq;
    Var wk, bk;
    Var wv, bv;
    Var wo, bo;
    int heads = 1;
};

struct FeedForwardParams {
    Var w1, b1;
    Var w2, b2;
};

struct EncoderBlockParams {
    LayerNormParams ln_attn;
    AttentionParams attn;
    LayerNormParams ln_ff;
    FeedForwardParams ff;
};

struct DecoderBlockParams {
    LayerNormParams ln_self;
    AttentionParams self_attn;
    LayerNormParams ln_cross;
    AttentionParams cross_attn;
    LayerNormParams ln_ff;
    FeedForwardParams ff;
};

// Registers the parameters of one block under `prefix` in the store and
// returns handles. Weights use Xavier init, biases and norm offsets zeros,
// norm gains ones.
LayerNormParams make_layer_norm(ParamStore& store, const std::string& prefix, int width);
AttentionParams make_attention(ParamStore& store, const std::string& prefix, int width,
                               int heads);
FeedForwardParams make_feed_forward(ParamStore& store, const std::string& prefix, int width,
                                    int hidden);
EncoderBlockParams make_encoder_block(ParamStore& store, const std::string& prefix, int width,
                                      int heads, int ff_hidden);
DecoderBlockParams make_decoder_block(ParamStore& store, const std::string& prefix, int width,
                                      int heads, int ff_hidden);

// Fixed sinusoidal position table, shape [t, channels].
Tensor sinusoidal_positions(int t, int channels);

// Additive causal mask, shape [t, t]: 0 on and below the diagonal, a large
// negative value above it.
Tensor causal_mask(int t);

// Multi-head scaled dot-product attention. `q_in` is [Tq, C], `kv_in` is
// [Tk, C]; `add_mask`, when given, is [Tq, Tk] and is added to the scores
// before the softmax.
Var attention(const AttentionParams& p, const Var& q_in, const Var& kv_in,
              const Tensor* add_mask = nullptr);

Var feed_forward(const FeedForwardParams& p, const Var& x);

// Pre-norm residual blocks. Dropout is applied to each sub-layer output when
// `dropout_p > 0` and an RNG is supplied.
Var encoder_block(const EncoderBlockParams& p, const Var& x, double dropout_p = 0.0,
                  Rng* rng = nullptr);
Var decoder_block(const DecoderBlockParams& p, const Var& x, const Var& memory,
                  const Tensor& self_mask, double dropout_p = 0.0, Rng* rng = nullptr);

// ---- plain-tensor forward helpers (no graph, used by cached decoding) ----

Tensor affine_value(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor layer_norm_value(const Tensor& x, const Tensor& gain, const Tensor& bias,
                        double eps = 1e-5);
Tensor row_softmax_value(const Tensor& x);
Tensor relu_value(const Tensor& x);

}  // namespace ts2::numcore
