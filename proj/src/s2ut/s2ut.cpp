// SPDX-License-Identifier: Apache-2.0

#include "ts2/s2ut/s2ut.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ts2/common/error.hpp"
#include "ts2/numcore/ops.hpp"

namespace ts2::s2ut {

using numcore::Tensor;
using numcore::Var;

S2utModel::S2utModel(const S2utConfig& cfg) : cfg_(cfg), store_(cfg.seed) {
    if (cfg.vocab < 2 || cfg.aux_vocab < 2 || cfg.width < 2 || cfg.heads < 1 ||
        cfg.width % cfg.heads != 0 || cfg.conv_kernel % 2 != 1 || cfg.enc_blocks < 1 ||
        cfg.dec_blocks < 1 || cfg.aux_blocks < 1 || cfg.aux_attach < 1 ||
        cfg.aux_attach > cfg.enc_blocks || cfg.aux_weight < 0.0 || cfg.speaker_dim < 1 ||
        cfg.max_len_factor < 1) {
        throw ConfigError("s2ut: invalid model configuration");
    }
    conv1_w_ = store_.create("conv1.w", {2 * cfg.width, cfg.feature_dim, cfg.conv_kernel},
                             numcore::Init::xavier_uniform);
    conv1_b_ = store_.create("conv1.b", {2 * cfg.width}, numcore::Init::zeros);
    conv2_w_ = store_.create("conv2.w", {2 * cfg.width, cfg.width, cfg.conv_kernel},
                             numcore::Init::xavier_uniform);
    conv2_b_ = store_.create("conv2.b", {2 * cfg.width}, numcore::Init::zeros);
    for (int b = 0; b < cfg.enc_blocks; ++b) {
        enc_blocks_.push_back(numcore::make_encoder_block(store_, "enc" + std::to_string(b),
                                                          cfg.width, cfg.heads, cfg.ff_hidden));
    }
    enc_ln_f_ = numcore::make_layer_norm(store_, "enc_ln_f", cfg.width);
    if (cfg.speaker_fusion) {
        // Identity on the encoder slice, zero on the speaker slice: with a
        // zero speaker vector the fused states start out unchanged.
        fuse_w_ = store_.create("fuse.w", {cfg.width + cfg.speaker_dim, cfg.width},
                                numcore::Init::zeros);
        for (int i = 0; i < cfg.width; ++i) {
            fuse_w_->value.at2(i, i) = 1.0;
        }
        fuse_b_ = store_.create("fuse.b", {cfg.width}, numcore::Init::zeros);
    }
    dec_emb_ = store_.create("dec.emb", {cfg.vocab + 2, cfg.width}, numcore::Init::normal_002);
    for (int b = 0; b < cfg.dec_blocks; ++b) {
        dec_blocks_.push_back(numcore::make_decoder_block(store_, "dec" + std::to_string(b),
                                                          cfg.width, cfg.heads, cfg.ff_hidden));
    }
    dec_ln_f_ = numcore::make_layer_norm(store_, "dec_ln_f", cfg.width);
    dec_out_w_ = store_.create("dec.out.w", {cfg.width, cfg.vocab + 2},
                               numcore::Init::xavier_uniform);
    dec_out_b_ = store_.create("dec.out.b", {cfg.vocab + 2}, numcore::Init::zeros);
    aux_emb_ =
        store_.create("aux.emb", {cfg.aux_vocab + 2, cfg.width}, numcore::Init::normal_002);
    for (int b = 0; b < cfg.aux_blocks; ++b) {
        aux_blocks_.push_back(numcore::make_decoder_block(store_, "aux" + std::to_string(b),
                                                          cfg.width, cfg.heads, cfg.ff_hidden));
    }
    aux_ln_f_ = numcore::make_layer_norm(store_, "aux_ln_f", cfg.width);
    aux_out_w_ = store_.create("aux.out.w", {cfg.width, cfg.aux_vocab + 2},
                               numcore::Init::xavier_uniform);
    aux_out_b_ = store_.create("aux.out.b", {cfg.aux_vocab + 2}, numcore::Init::zeros);
}

Encoded S2utModel::encode(const numcore::Tensor& features, const std::vector<double>& speaker,
                          bool train_mode, Rng* rng) {
    if (features.ndim() != 2 || features.cols() != cfg_.feature_dim) {
        throw UsageError("s2ut encode: features must be [T, feature_dim]");
    }
    if (features.rows() < 1) {
        throw UsageError("s2ut encode: empty feature sequence");
    }
    if (!cfg_.speaker_fusion && !speaker.empty()) {
        throw UsageError("s2ut encode: speaker vector given but fusion is disabled");
    }
    if (cfg_.speaker_fusion && static_cast<int>(speaker.size()) != cfg_.speaker_dim) {
        throw ConfigError("s2ut encode: speaker vector width does not match speaker_dim");
    }
    const int pad = cfg_.conv_kernel / 2;
    Var h = numcore::glu_rows(
        numcore::conv1d(numcore::constant(features), conv1_w_, conv1_b_, 2, pad));
    h = numcore::glu_rows(numcore::conv1d(h, conv2_w_, conv2_b_, 2, pad));
    h = numcore::add(
        h, numcore::constant(numcore::sinusoidal_positions(h->value.rows(), cfg_.width)));
    const double p = train_mode ? cfg_.dropout : 0.0;
    Encoded out;
    for (std::size_t b = 0; b < enc_blocks_.size(); ++b) {
        h = numcore::encoder_block(enc_blocks_[b], h, p, rng);
        if (static_cast<int>(b) + 1 == cfg_.aux_attach) {
            out.aux = h;
        }
    }
    h = numcore::layer_norm_rows(h, enc_ln_f_.gain, enc_ln_f_.bias);
    if (cfg_.speaker_fusion) {
        Tensor spk({h->value.rows(), cfg_.speaker_dim});
        for (int r = 0; r < spk.rows(); ++r) {
            for (int j = 0; j < cfg_.speaker_dim; ++j) {
                spk.at2(r, j) = speaker[static_cast<std::size_t>(j)];
            }
        }
        h = numcore::affine(numcore::concat_cols({h, numcore::constant(spk)}), fuse_w_,
                            fuse_b_);
    }
    out.top = h;
    return out;
}

Var S2utModel::decode_stack(const Var& memory, const units::UnitSeq& prefix, int bos_id,
                            const Var& emb, const std::vector<numcore::DecoderBlockParams>& blocks,
                            const numcore::LayerNormParams& ln_f, const Var& out_w,
                            const Var& out_b, int vocab, bool train_mode, Rng* rng) {
    std::vector<int> rows;
    rows.reserve(prefix.size() + 1);
    rows.push_back(bos_id);
    for (int u : prefix) {
        if (u < 0 || u >= vocab) {
            throw DataError("s2ut: unit id outside the decoder vocabulary");
        }
        rows.push_back(u);
    }
    const int l = static_cast<int>(rows.size());
    Var x = numcore::gather_rows(emb, rows);
    x = numcore::add(x, numcore::constant(numcore::sinusoidal_positions(l, cfg_.width)));
    const Tensor mask = numcore::causal_mask(l);
    const double p = train_mode ? cfg_.dropout : 0.0;
    for (const auto& block : blocks) {
        x = numcore::decoder_block(block, x, memory, mask, p, rng);
    }
    x = numcore::layer_norm_rows(x, ln_f.gain, ln_f.bias);
    return numcore::affine(x, out_w, out_b);
}

Var S2utModel::decoder_logits(const Var& memory, const units::UnitSeq& target, bool train_mode,
                              Rng* rng) {
    return decode_stack(memory, target, bos(), dec_emb_, dec_blocks_, dec_ln_f_, dec_out_w_,
                        dec_out_b_, cfg_.vocab, train_mode, rng);
}

Var S2utModel::aux_logits(const Var& aux_memory, const units::UnitSeq& aux_target,
                          bool train_mode, Rng* rng) {
    return decode_stack(aux_memory, aux_target, aux_bos(), aux_emb_, aux_blocks_, aux_ln_f_,
                        aux_out_w_, aux_out_b_, cfg_.aux_vocab, train_mode, rng);
}

namespace {

// Multi-head attention for a single query row against cached keys/values.
Tensor mha_row_value(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
    const int w = q.cols();
    const int dh = w / heads;
    const int l = k.rows();
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor merged({1, w});
    std::vector<double> score(static_cast<std::size_t>(l));
    for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        double mx = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < l; ++i) {
            double s = 0.0;
            for (int j = 0; j < dh; ++j) {
                s += q.at2(0, off + j) * k.at2(i, off + j);
            }
            s *= inv_sqrt;
            score[static_cast<std::size_t>(i)] = s;
            mx = std::max(mx, s);
        }
        double z = 0.0;
        for (int i = 0; i < l; ++i) {
            score[static_cast<std::size_t>(i)] =
                std::exp(score[static_cast<std::size_t>(i)] - mx);
            z += score[static_cast<std::size_t>(i)];
        }
        for (int i = 0; i < l; ++i) {
            score[static_cast<std::size_t>(i)] /= z;
        }
        for (int j = 0; j < dh; ++j) {
            double acc = 0.0;
            for (int i = 0; i < l; ++i) {
                acc += score[static_cast<std::size_t>(i)] * v.at2(i, off + j);
            }
            merged.at2(0, off + j) = acc;
        }
    }
    return merged;
}

Tensor append_row(const Tensor& cache, const Tensor& row) {
    Tensor out({cache.rows() + 1, row.cols()});
    std::copy(cache.data(), cache.data() + cache.numel(), out.data());
    std::copy(row.data(), row.data() + row.cols(), out.data() + cache.numel());
    return out;
}

struct Hyp {
    std::vector<int> toks;
    double logp = 0.0;
    std::vector<Tensor> self_k;
    std::vector<Tensor> self_v;
};

}  // namespace

TranslateResult S2utModel::translate(const numcore::Tensor& features,
                                     const std::vector<double>& speaker, int beam) {
    if (beam < 1) {
        throw UsageError("s2ut translate: beam must be >= 1");
    }
    TranslateResult result;
    if (features.rows() == 0) {
        return result;
    }
    const Tensor memory = encode(features, speaker, false, nullptr).top->value;
    const int s = memory.rows();
    const int max_len = cfg_.max_len_factor * s;
    const int n_blocks = static_cast<int>(dec_blocks_.size());

    // Cross-attention keys/values depend only on the encoder output.
    std::vector<Tensor> cross_k(static_cast<std::size_t>(n_blocks));
    std::vector<Tensor> cross_v(static_cast<std::size_t>(n_blocks));
    for (int b = 0; b < n_blocks; ++b) {
        const auto& blk = dec_blocks_[static_cast<std::size_t>(b)];
        cross_k[static_cast<std::size_t>(b)] =
            numcore::affine_value(memory, blk.cross_attn.wk->value, blk.cross_attn.bk->value);
        cross_v[static_cast<std::size_t>(b)] =
            numcore::affine_value(memory, blk.cross_attn.wv->value, blk.cross_attn.bv->value);
    }
    const Tensor positions = numcore::sinusoidal_positions(max_len, cfg_.width);

    std::vector<Hyp> live(1);
    for (auto& h : live) {
        h.self_k.assign(static_cast<std::size_t>(n_blocks), Tensor({0, cfg_.width}));
        h.self_v.assign(static_cast<std::size_t>(n_blocks), Tensor({0, cfg_.width}));
    }
    std::vector<Hyp> finished;

    struct Cand {
        std::size_t hyp;
        int tok;
        double score;
    };

    for (int t = 0; t < max_len && !live.empty(); ++t) {
        std::vector<Cand> cands;
        cands.reserve(live.size() * static_cast<std::size_t>(cfg_.vocab + 1));
        for (std::size_t hi = 0; hi < live.size(); ++hi) {
            Hyp& hyp = live[hi];
            const int tok = t == 0 ? bos() : hyp.toks.back();
            Tensor x({1, cfg_.width});
            for (int j = 0; j < cfg_.width; ++j) {
                x.at2(0, j) = dec_emb_->value.at2(tok, j) + positions.at2(t, j);
            }
            for (int b = 0; b < n_blocks; ++b) {
                const auto& blk = dec_blocks_[static_cast<std::size_t>(b)];
                const Tensor xn = numcore::layer_norm_value(x, blk.ln_self.gain->value,
                                                            blk.ln_self.bias->value);
                const Tensor q =
                    numcore::affine_value(xn, blk.self_attn.wq->value, blk.self_attn.bq->value);
                hyp.self_k[static_cast<std::size_t>(b)] = append_row(
                    hyp.self_k[static_cast<std::size_t>(b)],
                    numcore::affine_value(xn, blk.self_attn.wk->value, blk.self_attn.bk->value));
                hyp.self_v[static_cast<std::size_t>(b)] = append_row(
                    hyp.self_v[static_cast<std::size_t>(b)],
                    numcore::affine_value(xn, blk.self_attn.wv->value, blk.self_attn.bv->value));
                Tensor attn = numcore::affine_value(
                    mha_row_value(q, hyp.self_k[static_cast<std::size_t>(b)],
                                  hyp.self_v[static_cast<std::size_t>(b)], cfg_.heads),
                    blk.self_attn.wo->value, blk.self_attn.bo->value);
                for (int j = 0; j < cfg_.width; ++j) {
                    x.at2(0, j) += attn.at2(0, j);
                }
                const Tensor hn = numcore::layer_norm_value(x, blk.ln_cross.gain->value,
                                                            blk.ln_cross.bias->value);
                const Tensor qc =
                    numcore::affine_value(hn, blk.cross_attn.wq->value, blk.cross_attn.bq->value);
                Tensor cross = numcore::affine_value(
                    mha_row_value(qc, cross_k[static_cast<std::size_t>(b)],
                                  cross_v[static_cast<std::size_t>(b)], cfg_.heads),
                    blk.cross_attn.wo->value, blk.cross_attn.bo->value);
                for (int j = 0; j < cfg_.width; ++j) {
                    x.at2(0, j) += cross.at2(0, j);
                }
                const Tensor fn =
                    numcore::layer_norm_value(x, blk.ln_ff.gain->value, blk.ln_ff.bias->value);
                const Tensor ff = numcore::affine_value(
                    numcore::relu_value(
                        numcore::affine_value(fn, blk.ff.w1->value, blk.ff.b1->value)),
                    blk.ff.w2->value, blk.ff.b2->value);
                for (int j = 0; j < cfg_.width; ++j) {
                    x.at2(0, j) += ff.at2(0, j);
                }
            }
            const Tensor y =
                numcore::layer_norm_value(x, dec_ln_f_.gain->value, dec_ln_f_.bias->value);
            const Tensor logits =
                numcore::affine_value(y, dec_out_w_->value, dec_out_b_->value);
            double mx = -std::numeric_limits<double>::infinity();
            for (int v = 0; v < cfg_.vocab + 2; ++v) {
                if (v != bos()) {
                    mx = std::max(mx, logits.at2(0, v));
                }
            }
            double z = 0.0;
            for (int v = 0; v < cfg_.vocab + 2; ++v) {
                if (v != bos()) {
                    z += std::exp(logits.at2(0, v) - mx);
                }
            }
            const double log_z = mx + std::log(z);
            for (int v = 0; v < cfg_.vocab + 2; ++v) {
                if (v != bos()) {
                    cands.push_back({hi, v, hyp.logp + logits.at2(0, v) - log_z});
                }
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.hyp != b.hyp) return a.hyp < b.hyp;
            return a.tok < b.tok;
        });
        std::vector<Hyp> next;
        int admitted = 0;
        for (const Cand& c : cands) {
            if (admitted >= beam) {
                break;
            }
            ++admitted;
            Hyp h = live[c.hyp];
            h.logp = c.score;
            if (c.tok == eos()) {
                finished.push_back(std::move(h));
            } else {
                h.toks.push_back(c.tok);
                next.push_back(std::move(h));
            }
        }
        live = std::move(next);
        if (!finished.empty() && !live.empty()) {
            double best_fin = -std::numeric_limits<double>::infinity();
            for (const Hyp& h : finished) {
                best_fin = std::max(best_fin, h.logp);
            }
            double best_live = -std::numeric_limits<double>::infinity();
            for (const Hyp& h : live) {
                best_live = std::max(best_live, h.logp);
            }
            // Scores only decrease with length, so no live hypothesis can
            // overtake an already better finished one.
            if (best_fin >= best_live) {
                break;
            }
        }
    }

    const Hyp* best = nullptr;
    for (const Hyp& h : finished) {
        if (best == nullptr || h.logp > best->logp) {
            best = &h;
        }
    }
    if (best == nullptr) {
        for (const Hyp& h : live) {
            if (best == nullptr || h.logp > best->logp) {
                best = &h;
            }
        }
        result.truncated = true;
    }
    if (best != nullptr) {
        result.units = best->toks;
        result.score = best->logp;
    }
    return result;
}

nlohmann::json S2utConfig::to_json() const {
    return nlohmann::json{{"seed", seed},
                          {"feature_dim", feature_dim},
                          {"vocab", vocab},
                          {"aux_vocab", aux_vocab},
                          {"width", width},
                          {"enc_blocks", enc_blocks},
                          {"dec_blocks", dec_blocks},
                          {"aux_blocks", aux_blocks},
                          {"heads", heads},
                          {"ff_hidden", ff_hidden},
                          {"conv_kernel", conv_kernel},
                          {"aux_attach", aux_attach},
                          {"aux_weight", aux_weight},
                          {"label_smoothing", label_smoothing},
                          {"dropout", dropout},
                          {"speaker_fusion", speaker_fusion},
                          {"speaker_dim", speaker_dim},
                          {"batch", batch},
                          {"updates", updates},
                          {"warmup", warmup},
                          {"peak_lr", peak_lr},
                          {"half_life", half_life},
                          {"clip_norm", clip_norm},
                          {"eval_interval", eval_interval},
                          {"beam", beam},
                          {"max_len_factor", max_len_factor}};
}

S2utConfig S2utConfig::from_json(const nlohmann::json& j) {
    S2utConfig c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.feature_dim = j.at("feature_dim").get<int>();
    c.vocab = j.at("vocab").get<int>();
    c.aux_vocab = j.at("aux_vocab").get<int>();
    c.width = j.at("width").get<int>();
    c.enc_blocks = j.at("enc_blocks").get<int>();
    c.dec_blocks = j.at("dec_blocks").get<int>();
    c.aux_blocks = j.at("aux_blocks").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ff_hidden = j.at("ff_hidden").get<int>();
    c.conv_kernel = j.at("conv_kernel").get<int>();
    c.aux_attach = j.at("aux_attach").get<int>();
    c.aux_weight = j.at("aux_weight").get<double>();
    c.label_smoothing = j.at("label_smoothing").get<double>();
    c.dropout = j.at("dropout").get<double>();
    c.speaker_fusion = j.at("speaker_fusion").get<bool>();
    c.speaker_dim = j.at("speaker_dim").get<int>();
    c.batch = j.at("batch").get<int>();
    c.updates = j.at("updates").get<int>();
    c.warmup = j.at("warmup").get<int>();
    c.peak_lr = j.at("peak_lr").get<double>();
    c.half_life = j.at("half_life").get<double>();
    c.clip_norm = j.at("clip_norm").get<double>();
    c.eval_interval = j.at("eval_interval").get<int>();
    c.beam = j.at("beam").get<int>();
    c.max_len_factor = j.at("max_len_factor").get<int>();
    return c;
}

}  // namespace ts2::s2ut
