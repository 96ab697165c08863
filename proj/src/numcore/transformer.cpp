// SPDX-License-Identifier: Apache-2.0

#include "ts2/numcore/transformer.hpp"

#include <cmath>

#include "ts2/numcore/kernels.hpp"

namespace ts2::numcore {

namespace {

constexpr double k_mask_value = -1e30;

}  // namespace

LayerNormParams make_layer_norm(ParamStore& store, const std::string& prefix, int width) {
    LayerNormParams p;
    p.gain = store.create(prefix + ".gain", {width}, Init::ones);
    p.bias = store.create(prefix + ".bias", {width}, Init::zeros);
    return p;
}

AttentionParams make_attention(ParamStore& store, const std::string& prefix, int width,
                               int heads) {
    AttentionParams p;
    p.wq = store.create(prefix + ".wq", {width, width}, Init::xavier_uniform);
    p.bq = store.create(prefix + ".bq", {width}, Init::zeros);
    p.wk = store.create(prefix + ".wk", {width, width}, Init::xavier_uniform);
    p.bk = store.create(prefix + ".bk", {width}, Init::zeros);
    p.wv = store.create(prefix + ".wv", {width, width}, Init::xavier_uniform);
    p.bv = store.create(prefix + ".bv", {width}, Init::zeros);
    p.wo = store.create(prefix + ".wo", {width, width}, Init::xavier_uniform);
    p.bo = store.create(prefix + ".bo", {width}, Init::zeros);
    p.heads = heads;
    return p;
}

FeedForwardParams make_feed_forward(ParamStore& store, const std::string& prefix, int width,
                                    int hidden) {
    FeedForwardParams p;
    p.w1 = store.create(prefix + ".w1", {width, hidden}, Init::xavier_uniform);
    p.b1 = store.create(prefix + ".b1", {hidden}, Init::zeros);
    p.w2 = store.create(prefix + ".w2", {hidden, width}, Init::xavier_uniform);
    p.b2 = store.create(prefix + ".b2", {width}, Init::zeros);
    return p;
}

EncoderBlockParams make_encoder_block(ParamStore& store, const std::string& prefix, int width,
                                      int heads, int ff_hidden) {
    EncoderBlockParams p;
    p.ln_attn = make_layer_norm(store, prefix + ".ln_attn", width);
    p.attn = make_attention(store, prefix + ".attn", width, heads);
    p.ln_ff = make_layer_norm(store, prefix + ".ln_ff", width);
    p.ff = make_feed_forward(store, prefix + ".ff", width, ff_hidden);
    return p;
}

DecoderBlockParams make_decoder_block(ParamStore& store, const std::string& prefix, int width,
                                      int heads, int ff_hidden) {
    DecoderBlockParams p;
    p.ln_self = make_layer_norm(store, prefix + ".ln_self", width);
    p.self_attn = make_attention(store, prefix + ".self", width, heads);
    p.ln_cross = make_layer_norm(store, prefix + ".ln_cross", width);
    p.cross_attn = make_attention(store, prefix + ".cross", width, heads);
    p.ln_ff = make_layer_norm(store, prefix + ".ln_ff", width);
    p.ff = make_feed_forward(store, prefix + ".ff", width, ff_hidden);
    return p;
}

Tensor sinusoidal_positions(int t, int channels) {
    Tensor out({t, channels});
    for (int pos = 0; pos < t; ++pos) {
        for (int j = 0; j < channels; ++j) {
            const int pair = j / 2;
            const double freq = std::pow(10000.0, -2.0 * pair / channels);
            const double angle = pos * freq;
            out.at2(pos, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return out;
}

Tensor causal_mask(int t) {
    Tensor out({t, t});
    for (int r = 0; r < t; ++r)
        for (int c = r + 1; c < t; ++c) out.at2(r, c) = k_mask_value;
    return out;
}

Var attention(const AttentionParams& p, const Var& q_in, const Var& kv_in,
              const Tensor* add_mask) {
    const int c = q_in->value.cols();
    require(p.heads >= 1 && c % p.heads == 0,
            "attention: channel count not divisible by head count");
    const int dh = c / p.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    Var q = affine(q_in, p.wq, p.bq);
    Var k = affine(kv_in, p.wk, p.bk);
    Var v = affine(kv_in, p.wv, p.bv);

    Var mask_var;
    if (add_mask != nullptr) mask_var = constant(*add_mask);

    std::vector<Var> head_outs;
    head_outs.reserve(p.heads);
    for (int h = 0; h < p.heads; ++h) {
        Var qh = slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = slice_cols(k, h * dh, (h + 1) * dh);
        Var vh = slice_cols(v, h * dh, (h + 1) * dh);
        Var scores = scale(matmul_nt(qh, kh), inv_sqrt);
        if (mask_var) scores = add(scores, mask_var);
        Var weights = row_softmax(scores);
        head_outs.push_back(matmul(weights, vh));
    }
    Var merged = p.heads == 1 ? head_outs[0] : concat_cols(head_outs);
    return affine(merged, p.wo, p.bo);
}

Var feed_forward(const FeedForwardParams& p, const Var& x) {
    return affine(relu(affine(x, p.w1, p.b1)), p.w2, p.b2);
}

namespace {

Var maybe_dropout(const Var& x, double p, Rng* rng) {
    if (p <= 0.0 || rng == nullptr) return x;
    return dropout(x, p, *rng);
}

}  // namespace

Var encoder_block(const EncoderBlockParams& p, const Var& x, double dropout_p, Rng* rng) {
    Var xn = layer_norm_rows(x, p.ln_attn.gain, p.ln_attn.bias);
    Var h = add(x, maybe_dropout(attention(p.attn, xn, xn), dropout_p, rng));
    return add(h, maybe_dropout(feed_forward(p.ff, layer_norm_rows(h, p.ln_ff.gain, p.ln_ff.bias)),
                                dropout_p, rng));
}

Var decoder_block(const DecoderBlockParams& p, const Var& x, const Var& memory,
                  const Tensor& self_mask, double dropout_p, Rng* rng) {
    Var xn = layer_norm_rows(x, p.ln_self.gain, p.ln_self.bias);
    Var h = add(x, maybe_dropout(attention(p.self_attn, xn, xn, &self_mask), dropout_p, rng));
    Var hn = layer_norm_rows(h, p.ln_cross.gain, p.ln_cross.bias);
    h = add(h, maybe_dropout(attention(p.cross_attn, hn, memory), dropout_p, rng));
    return add(h, maybe_dropout(feed_forward(p.ff, layer_norm_rows(h, p.ln_ff.gain, p.ln_ff.bias)),
                                dropout_p, rng));
}

Tensor affine_value(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_shapes(x.ndim() == 2 && w.ndim() == 2 && x.cols() == w.rows(), "affine_value", x, w);
    const int m = x.rows(), k = x.cols(), n = w.cols();
    Tensor out({m, n});
    kernels::mm_nn(x.data(), w.data(), out.data(), m, k, n);
    if (!b.empty()) {
        require_shapes(b.numel() == n, "affine_value_bias", out, b);
        for (int r = 0; r < m; ++r)
            for (int j = 0; j < n; ++j) out.at2(r, j) += b[j];
    }
    return out;
}

Tensor layer_norm_value(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const int t = x.rows(), c = x.cols();
    Tensor out({t, c});
    for (int r = 0; r < t; ++r) {
        double mu = 0.0;
        for (int j = 0; j < c; ++j) mu += x.at2(r, j);
        mu /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            const double d = x.at2(r, j) - mu;
            var += d * d;
        }
        var /= c;
        const double is = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < c; ++j) out.at2(r, j) = (x.at2(r, j) - mu) * is * gain[j] + bias[j];
    }
    return out;
}

Tensor row_softmax_value(const Tensor& x) {
    const int t = x.rows(), c = x.cols();
    Tensor out({t, c});
    for (int r = 0; r < t; ++r) {
        double mx = -1e300;
        for (int j = 0; j < c; ++j) mx = std::max(mx, x.at2(r, j));
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
            const double e = std::exp(x.at2(r, j) - mx);
            out.at2(r, j) = e;
            z += e;
        }
        for (int j = 0; j < c; ++j) out.at2(r, j) /= z;
    }
    return out;
}

Tensor relu_value(const Tensor& x) {
    Tensor out(x.shape());
    for (int i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return out;
}

}  // namespace ts2::numcore
