// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <string>

#include "ts2/common/error.hpp"
#include "ts2/evalkit/bleu.hpp"
#include "ts2/numcore/ops.hpp"
#include "ts2/s2ut/s2ut.hpp"

namespace ts2::s2ut {

using numcore::Var;

namespace {

void check_sample(const S2utSample& s, const S2utConfig& cfg) {
    if (s.features.ndim() != 2 || s.features.cols() != cfg.feature_dim ||
        s.features.rows() < 1) {
        throw DataError("s2ut train: sample features must be non-empty [T, feature_dim]");
    }
    if (s.target.empty()) {
        throw DataError("s2ut train: empty target unit sequence");
    }
    for (int u : s.target) {
        if (u < 0 || u >= cfg.vocab) {
            throw DataError("s2ut train: target unit outside vocabulary");
        }
    }
    if (cfg.aux_weight > 0.0) {
        if (s.aux_target.empty()) {
            throw DataError("s2ut train: empty auxiliary target unit sequence");
        }
        for (int u : s.aux_target) {
            if (u < 0 || u >= cfg.aux_vocab) {
                throw DataError("s2ut train: auxiliary unit outside vocabulary");
            }
        }
    }
    if (cfg.speaker_fusion && static_cast<int>(s.speaker.size()) != cfg.speaker_dim) {
        throw DataError("s2ut train: sample speaker vector width does not match speaker_dim");
    }
    if (!cfg.speaker_fusion && !s.speaker.empty()) {
        throw DataError("s2ut train: speaker vector given but fusion is disabled");
    }
}

double dev_bleu(S2utModel& model, const std::vector<S2utSample>& dev) {
    std::vector<evalkit::TokenSeq> hyps;
    std::vector<evalkit::TokenSeq> refs;
    hyps.reserve(dev.size());
    refs.reserve(dev.size());
    for (const auto& s : dev) {
        hyps.push_back(model.translate(s.features, s.speaker, 1).units);
        refs.push_back(s.target);
    }
    return evalkit::bleu(hyps, refs);
}

}  // namespace

TrainResult train_s2ut(S2utModel& model, const std::vector<S2utSample>& train,
                       const std::vector<S2utSample>& dev) {
    const S2utConfig& cfg = model.config();
    if (train.empty()) {
        throw DataError("s2ut train: empty training set");
    }
    if (dev.empty()) {
        throw DataError("s2ut train: empty dev set");
    }
    for (const auto& s : train) {
        check_sample(s, cfg);
    }
    for (const auto& s : dev) {
        check_sample(s, cfg);
    }

    numcore::AdamConfig acfg =
        numcore::adam_config_halving(cfg.peak_lr, cfg.warmup, cfg.half_life);
    acfg.clip_norm = cfg.clip_norm;
    numcore::Adam adam(model.store(), acfg);
    Rng rng(derive_seed(cfg.seed, "train"));

    TrainResult result;
    result.best_dev_bleu = -1.0;

    for (int update = 0; update < cfg.updates; ++update) {
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.batch; ++b) {
            const S2utSample& s = train[rng.below(train.size())];
            Encoded enc = model.encode(s.features, s.speaker, true, &rng);
            const Var logits = model.decoder_logits(enc.top, s.target, true, &rng);
            std::vector<int> targets(s.target.begin(), s.target.end());
            targets.push_back(model.eos());
            Var loss = numcore::scale(
                numcore::cross_entropy_smooth_sum(logits, targets, cfg.label_smoothing),
                1.0 / static_cast<double>(targets.size()));
            if (cfg.aux_weight > 0.0) {
                const Var alogits = model.aux_logits(enc.aux, s.aux_target, true, &rng);
                std::vector<int> atargets(s.aux_target.begin(), s.aux_target.end());
                atargets.push_back(model.aux_eos());
                loss = numcore::add(
                    loss, numcore::scale(numcore::cross_entropy_smooth_sum(
                                             alogits, atargets, cfg.label_smoothing),
                                         cfg.aux_weight / static_cast<double>(atargets.size())));
            }
            numcore::backward(loss, 1.0 / static_cast<double>(cfg.batch));
            batch_loss += loss->value[0] / static_cast<double>(cfg.batch);
        }
        if (!std::isfinite(batch_loss)) {
            throw DivergenceError("s2ut train: non-finite loss at update " +
                                  std::to_string(update));
        }
        adam.step();

        if ((update + 1) % cfg.eval_interval == 0 || update + 1 == cfg.updates) {
            result.loss_curve.emplace_back(update + 1, batch_loss);
            const double b = dev_bleu(model, dev);
            result.bleu_curve.emplace_back(update + 1, b);
            if (b > result.best_dev_bleu) {
                result.best_dev_bleu = b;
                result.best_update = update + 1;
                result.best_state = model.store().state_dict();
            }
        }
    }
    if (result.best_state.empty()) {
        throw DivergenceError("s2ut train: no usable dev evaluation");
    }
    model.store().load_state_dict(result.best_state);
    return result;
}

}  // namespace ts2::s2ut
