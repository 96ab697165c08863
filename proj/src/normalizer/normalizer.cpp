// SPDX-License-Identifier: Apache-2.0
#include "ts2/normalizer/normalizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ts2/common/error.hpp"
#include "ts2/common/rng.hpp"
#include "ts2/ctc/ctc.hpp"
#include "ts2/numcore/ops.hpp"

namespace ts2::normalizer {

using numcore::Var;

NormalizerModel::NormalizerModel(const NormalizerConfig& cfg)
    : cfg_(cfg), store_(cfg.seed) {
    if (cfg.vocab < 2 || cfg.width < 2 || cfg.blocks < 1 || cfg.heads < 1 ||
        cfg.width % cfg.heads != 0 || cfg.conv_kernel % 2 != 1) {
        throw ConfigError("normalizer: invalid model configuration");
    }
    mask_vec_ = store_.create("mask.vec", {1, cfg.feature_dim}, numcore::Init::normal_002);
    conv_w_ = store_.create("conv.w", {2 * cfg.width, cfg.feature_dim, cfg.conv_kernel},
                            numcore::Init::xavier_uniform);
    conv_b_ = store_.create("conv.b", {2 * cfg.width}, numcore::Init::zeros);
    for (int b = 0; b < cfg.blocks; ++b) {
        blocks_.push_back(numcore::make_encoder_block(store_, "enc" + std::to_string(b),
                                                      cfg.width, cfg.heads, cfg.ff_hidden));
    }
    ln_f_ = numcore::make_layer_norm(store_, "ln_f", cfg.width);
    ctc_w_ = store_.create("ctc.w", {cfg.width, cfg.vocab + 1}, numcore::Init::xavier_uniform);
    ctc_b_ = store_.create("ctc.b", {cfg.vocab + 1}, numcore::Init::zeros);
    pre_w_ = store_.create("pre.w", {cfg.width, cfg.vocab}, numcore::Init::xavier_uniform);
    pre_b_ = store_.create("pre.b", {cfg.vocab}, numcore::Init::zeros);
}

Var NormalizerModel::encode(const numcore::Tensor& features, const std::vector<int>& masked_rows,
                            bool train_mode, Rng* rng) {
    if (features.ndim() != 2 || features.cols() != cfg_.feature_dim) {
        throw UsageError("normalizer encode: features must be [T, feature_dim]");
    }
    if (features.rows() < 1) {
        throw UsageError("normalizer encode: empty feature sequence");
    }
    Var x = masked_rows.empty() ? numcore::constant(features)
                                : numcore::replace_rows(features, masked_rows, mask_vec_);
    Var h = numcore::conv1d(x, conv_w_, conv_b_, 2, cfg_.conv_kernel / 2);
    h = numcore::glu_rows(h);
    h = numcore::add(h, numcore::constant(
                            numcore::sinusoidal_positions(h->value.rows(), cfg_.width)));
    const double p = train_mode ? cfg_.dropout : 0.0;
    for (const auto& block : blocks_) {
        h = numcore::encoder_block(block, h, p, rng);
    }
    return numcore::layer_norm_rows(h, ln_f_.gain, ln_f_.bias);
}

Var NormalizerModel::ctc_log_probs(const Var& encoded) {
    return numcore::log_row_softmax(numcore::affine(encoded, ctc_w_, ctc_b_));
}

Var NormalizerModel::pretrain_logits(const Var& encoded, const std::vector<int>& positions) {
    return numcore::affine(numcore::gather_rows(encoded, positions), pre_w_, pre_b_);
}

units::UnitSeq NormalizerModel::normalize(const numcore::Tensor& features) {
    const Var logp = ctc_log_probs(encode(features, {}, false, nullptr));
    return units::reduce(ctc::best_path_decode(logp->value)).units;
}

std::vector<int> NormalizerModel::masked_encoder_positions(const std::vector<int>& masked_rows,
                                                           int t) const {
    std::vector<bool> masked(static_cast<std::size_t>(t), false);
    for (int r : masked_rows) {
        masked[static_cast<std::size_t>(r)] = true;
    }
    std::vector<int> out;
    const int t_out = numcore::conv1d_out_len(t, cfg_.conv_kernel, 2, cfg_.conv_kernel / 2);
    for (int i = 0; i < t_out; ++i) {
        if (masked[static_cast<std::size_t>(2 * i)]) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<int> NormalizerModel::sample_mask(int t, Rng& rng) const {
    const double start_prob = cfg_.mask_rate / cfg_.mask_span;
    std::vector<bool> masked(static_cast<std::size_t>(t), false);
    for (int i = 0; i < t; ++i) {
        if (rng.bernoulli(start_prob)) {
            for (int j = i; j < std::min(t, i + cfg_.mask_span); ++j) {
                masked[static_cast<std::size_t>(j)] = true;
            }
        }
    }
    std::vector<int> rows;
    for (int i = 0; i < t; ++i) {
        if (masked[static_cast<std::size_t>(i)]) {
            rows.push_back(i);
        }
    }
    return rows;
}

namespace {

void check_sample(const NormSample& s, const NormalizerConfig& cfg, bool need_frame_units) {
    if (need_frame_units &&
        s.frame_units.size() != static_cast<std::size_t>(s.features.rows())) {
        throw DataError("normalizer: frame unit count does not match feature length");
    }
    for (int u : s.frame_units) {
        if (u < 0 || u >= cfg.vocab) {
            throw DataError("normalizer: frame unit out of vocabulary");
        }
    }
    for (int u : s.target) {
        if (u < 0 || u >= cfg.vocab) {
            throw DataError("normalizer: target unit out of vocabulary");
        }
    }
}

}  // namespace

PretrainResult pretrain(NormalizerModel& model, const std::vector<NormSample>& train,
                        const std::vector<NormSample>& dev) {
    const NormalizerConfig& cfg = model.config();
    if (train.empty()) {
        throw DataError("normalizer pretrain: empty training set");
    }
    for (const auto& s : train) {
        check_sample(s, cfg, true);
    }
    for (const auto& s : dev) {
        check_sample(s, cfg, true);
    }

    numcore::Adam adam(model.store(), numcore::adam_config_halving(
                                          cfg.pretrain_peak_lr, cfg.pretrain_warmup,
                                          cfg.pretrain_half_life));
    Rng rng(derive_seed(cfg.seed, "pretrain"));
    PretrainResult result;
    for (int update = 0; update < cfg.pretrain_updates; ++update) {
        double batch_loss = 0.0;
        int used = 0;
        for (int b = 0; b < cfg.batch; ++b) {
            const NormSample& s = train[rng.below(train.size())];
            const std::vector<int> rows = model.sample_mask(s.features.rows(), rng);
            const std::vector<int> positions =
                model.masked_encoder_positions(rows, s.features.rows());
            if (positions.empty()) {
                continue;
            }
            std::vector<int> targets;
            targets.reserve(positions.size());
            for (int pos : positions) {
                targets.push_back(s.frame_units[static_cast<std::size_t>(2 * pos)]);
            }
            const Var enc = model.encode(s.features, rows, true, &rng);
            const Var loss = numcore::cross_entropy_smooth_sum(
                model.pretrain_logits(enc, positions), targets, 0.0);
            const double denom = static_cast<double>(cfg.batch) *
                                 static_cast<double>(positions.size());
            numcore::backward(loss, 1.0 / denom);
            batch_loss += loss->value[0] / denom;
            ++used;
        }
        if (used == 0) {
            continue;
        }
        if (!std::isfinite(batch_loss)) {
            throw DivergenceError("normalizer pretrain: non-finite loss at update " +
                                  std::to_string(update));
        }
        adam.step();
        result.final_loss = batch_loss;
    }

    // Deterministic dev masking so the reported accuracy is reproducible.
    long correct = 0;
    long total = 0;
    for (std::size_t i = 0; i < dev.size(); ++i) {
        const NormSample& s = dev[i];
        Rng mask_rng(derive_seed(cfg.seed, "pretrain-dev", static_cast<std::uint64_t>(i)));
        const std::vector<int> rows = model.sample_mask(s.features.rows(), mask_rng);
        const std::vector<int> positions = model.masked_encoder_positions(rows, s.features.rows());
        if (positions.empty()) {
            continue;
        }
        const Var enc = model.encode(s.features, rows, false, nullptr);
        const Var logits = model.pretrain_logits(enc, positions);
        for (std::size_t p = 0; p < positions.size(); ++p) {
            int best = 0;
            for (int v = 1; v < cfg.vocab; ++v) {
                if (logits->value.at2(static_cast<int>(p), v) >
                    logits->value.at2(static_cast<int>(p), best)) {
                    best = v;
                }
            }
            correct += best == s.frame_units[static_cast<std::size_t>(2 * positions[p])] ? 1 : 0;
            ++total;
        }
    }
    result.dev_masked_accuracy =
        total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    return result;
}

double dev_uer(NormalizerModel& model, const std::vector<NormSample>& dev) {
    if (dev.empty()) {
        throw DataError("normalizer: empty dev set");
    }
    double sum = 0.0;
    for (const auto& s : dev) {
        sum += units::uer(model.normalize(s.features), s.target);
    }
    return sum / static_cast<double>(dev.size());
}

FinetuneResult finetune(NormalizerModel& model, const std::vector<NormSample>& train,
                        const std::vector<NormSample>& dev) {
    const NormalizerConfig& cfg = model.config();
    if (train.empty()) {
        throw DataError("normalizer finetune: empty training set");
    }
    for (const auto& s : train) {
        check_sample(s, cfg, false);
        if (s.target.empty()) {
            throw DataError("normalizer finetune: empty target sequence");
        }
    }

    numcore::AdamConfig acfg =
        numcore::adam_config_halving(cfg.peak_lr, cfg.warmup, cfg.half_life);
    acfg.clip_norm = cfg.clip_norm;
    numcore::Adam adam(model.store(), acfg);
    Rng rng(derive_seed(cfg.seed, "finetune"));

    FinetuneResult result;
    result.best_dev_uer = std::numeric_limits<double>::infinity();

    if (cfg.freeze_updates > 0) {
        model.store().set_frozen("enc", true);
    }
    for (int update = 0; update < cfg.finetune_updates; ++update) {
        if (update == cfg.freeze_updates) {
            model.store().set_frozen("enc", false);
        }
        double batch_loss = 0.0;
        int used = 0;
        for (int b = 0; b < cfg.batch; ++b) {
            const NormSample& s = train[rng.below(train.size())];
            const std::vector<int> rows = model.sample_mask(s.features.rows(), rng);
            const Var enc = model.encode(s.features, rows, true, &rng);
            const Var logp = model.ctc_log_probs(enc);
            if (logp->value.rows() < static_cast<int>(s.target.size())) {
                ++result.infeasible_skipped;
                continue;
            }
            const Var loss = ctc::ctc_loss_node(logp, s.target);
            if (std::isinf(loss->value[0])) {
                ++result.infeasible_skipped;
                continue;
            }
            const double denom = static_cast<double>(cfg.batch) *
                                 static_cast<double>(s.target.size());
            numcore::backward(loss, 1.0 / denom);
            batch_loss += loss->value[0] / denom;
            ++used;
        }
        if (used == 0) {
            continue;
        }
        if (!std::isfinite(batch_loss)) {
            throw DivergenceError("normalizer finetune: non-finite loss at update " +
                                  std::to_string(update));
        }
        adam.step();

        if ((update + 1) % cfg.eval_interval == 0 || update + 1 == cfg.finetune_updates) {
            const double u = dev_uer(model, dev);
            result.dev_curve.emplace_back(update + 1, u);
            if (u < result.best_dev_uer) {
                result.best_dev_uer = u;
                result.best_update = update + 1;
                result.best_state = model.store().state_dict();
            }
        }
    }
    if (result.best_state.empty()) {
        throw DivergenceError("normalizer finetune: no usable dev evaluation");
    }
    model.store().load_state_dict(result.best_state);
    return result;
}

nlohmann::json NormalizerConfig::to_json() const {
    return nlohmann::json{{"seed", seed},
                          {"feature_dim", feature_dim},
                          {"vocab", vocab},
                          {"width", width},
                          {"blocks", blocks},
                          {"heads", heads},
                          {"ff_hidden", ff_hidden},
                          {"conv_kernel", conv_kernel},
                          {"dropout", dropout},
                          {"mask_rate", mask_rate},
                          {"mask_span", mask_span},
                          {"batch", batch},
                          {"pretrain_updates", pretrain_updates},
                          {"pretrain_peak_lr", pretrain_peak_lr},
                          {"pretrain_warmup", pretrain_warmup},
                          {"pretrain_half_life", pretrain_half_life},
                          {"finetune_updates", finetune_updates},
                          {"freeze_updates", freeze_updates},
                          {"warmup", warmup},
                          {"peak_lr", peak_lr},
                          {"half_life", half_life},
                          {"clip_norm", clip_norm},
                          {"eval_interval", eval_interval}};
}

NormalizerConfig NormalizerConfig::from_json(const nlohmann::json& j) {
    NormalizerConfig c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.feature_dim = j.at("feature_dim").get<int>();
    c.vocab = j.at("vocab").get<int>();
    c.width = j.at("width").get<int>();
    c.blocks = j.at("blocks").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ff_hidden = j.at("ff_hidden").get<int>();
    c.conv_kernel = j.at("conv_kernel").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.mask_rate = j.at("mask_rate").get<double>();
    c.mask_span = j.at("mask_span").get<int>();
    c.batch = j.at("batch").get<int>();
    c.pretrain_updates = j.at("pretrain_updates").get<int>();
    c.pretrain_peak_lr = j.at("pretrain_peak_lr").get<double>();
    c.pretrain_warmup = j.at("pretrain_warmup").get<int>();
    c.pretrain_half_life = j.at("pretrain_half_life").get<double>();
    c.finetune_updates = j.at("finetune_updates").get<int>();
    c.freeze_updates = j.at("freeze_updates").get<int>();
    c.warmup = j.at("warmup").get<int>();
    c.peak_lr = j.at("peak_lr").get<double>();
    c.half_life = j.at("half_life").get<double>();
    c.clip_norm = j.at("clip_norm").get<double>();
    c.eval_interval = j.at("eval_interval").get<int>();
    return c;
}

}  // namespace ts2::normalizer
