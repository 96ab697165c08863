// SPDX-License-Identifier: Apache-2.0

#include "ts2/duration/duration.hpp"

#include <cmath>
#include <string>

#include "ts2/common/error.hpp"
#include "ts2/numcore/ops.hpp"

namespace ts2::duration {

using numcore::Var;

DurationModel::DurationModel(const DurationConfig& cfg) : cfg_(cfg), store_(cfg.seed) {
    if (cfg.vocab < 1 || cfg.width < 1 || cfg.hidden < 1 || cfg.weight < 0.0) {
        throw ConfigError("duration: invalid model configuration");
    }
    emb_ = store_.create("emb", {cfg.vocab, cfg.width}, numcore::Init::normal_002);
    w1_ = store_.create("w1", {cfg.width, cfg.hidden}, numcore::Init::xavier_uniform);
    b1_ = store_.create("b1", {cfg.hidden}, numcore::Init::zeros);
    w2_ = store_.create("w2", {cfg.hidden, 1}, numcore::Init::xavier_uniform);
    b2_ = store_.create("b2", {1}, numcore::Init::zeros);
}

Var DurationModel::forward(const units::UnitSeq& reduced) {
    if (reduced.empty()) {
        throw UsageError("duration forward: empty unit sequence");
    }
    for (int u : reduced) {
        if (u < 0 || u >= cfg_.vocab) {
            throw DataError("duration forward: unit outside vocabulary");
        }
    }
    const Var x = numcore::gather_rows(emb_, reduced);
    return numcore::affine(numcore::relu(numcore::affine(x, w1_, b1_)), w2_, b2_);
}

units::DurationSeq DurationModel::predict(const units::UnitSeq& reduced) {
    units::DurationSeq out;
    if (reduced.empty()) {
        return out;
    }
    const numcore::Tensor log_d = forward(reduced)->value;
    out.reserve(reduced.size());
    for (int i = 0; i < log_d.rows(); ++i) {
        const long d = std::lround(std::exp(log_d.at2(i, 0)));
        out.push_back(static_cast<int>(std::max(1L, d)));
    }
    return out;
}

namespace {

void check_sample(const DurationSample& s, const DurationConfig& cfg) {
    if (s.units.empty() || s.units.size() != s.durations.size()) {
        throw DataError("duration train: units and durations must be non-empty and aligned");
    }
    for (int u : s.units) {
        if (u < 0 || u >= cfg.vocab) {
            throw DataError("duration train: unit outside vocabulary");
        }
    }
    for (int d : s.durations) {
        if (d < 1) {
            throw DataError("duration train: non-positive duration cannot be log-transformed");
        }
    }
}

double mse_over(DurationModel& model, const std::vector<DurationSample>& data) {
    double sum = 0.0;
    long count = 0;
    for (const auto& s : data) {
        const numcore::Tensor pred = model.forward(s.units)->value;
        for (std::size_t i = 0; i < s.units.size(); ++i) {
            const double diff = pred.at2(static_cast<int>(i), 0) -
                                std::log(static_cast<double>(s.durations[i]));
            sum += diff * diff;
            ++count;
        }
    }
    return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace

DurationTrainResult train_duration(DurationModel& model,
                                   const std::vector<DurationSample>& train,
                                   const std::vector<DurationSample>& dev) {
    const DurationConfig& cfg = model.config();
    if (train.empty()) {
        throw DataError("duration train: empty training set");
    }
    for (const auto& s : train) {
        check_sample(s, cfg);
    }
    for (const auto& s : dev) {
        check_sample(s, cfg);
    }

    numcore::Adam adam(model.store(),
                       numcore::adam_config_halving(cfg.peak_lr, cfg.warmup, cfg.half_life));
    Rng rng(derive_seed(cfg.seed, "duration"));
    DurationTrainResult result;
    for (int update = 0; update < cfg.updates; ++update) {
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.batch; ++b) {
            const DurationSample& s = train[rng.below(train.size())];
            const Var pred = model.forward(s.units);
            numcore::Tensor target({static_cast<int>(s.durations.size()), 1});
            for (std::size_t i = 0; i < s.durations.size(); ++i) {
                target.at2(static_cast<int>(i), 0) =
                    std::log(static_cast<double>(s.durations[i]));
            }
            const Var loss = numcore::scale(
                numcore::mse_sum(pred, target),
                cfg.weight / static_cast<double>(s.durations.size()));
            numcore::backward(loss, 1.0 / static_cast<double>(cfg.batch));
            batch_loss += loss->value[0] / static_cast<double>(cfg.batch);
        }
        if (!std::isfinite(batch_loss)) {
            throw DivergenceError("duration train: non-finite loss at update " +
                                  std::to_string(update));
        }
        adam.step();
        result.final_train_mse = batch_loss / std::max(cfg.weight, 1e-12);
    }
    result.dev_mse = dev.empty() ? 0.0 : mse_over(model, dev);
    return result;
}

units::UnitSeq predict_and_expand(DurationModel& model, const units::UnitSeq& reduced) {
    if (reduced.empty()) {
        return {};
    }
    return units::expand(reduced, model.predict(reduced));
}

double resynthesis_proxy(const units::UnitSeq& u, const units::UnitSeq& content,
                         const synthworld::Language& lang, const units::Codebook& cb) {
    // Map ids into inventory space by nearest centroid; identity when cb is
    // the inventory itself.
    const units::UnitSeq to_inventory = units::quantize(cb.centroids, lang.inventory);
    units::UnitSeq inv;
    inv.reserve(u.size());
    for (int id : u) {
        if (id < 0 || id >= cb.size()) {
            throw UsageError("resynthesis proxy: unit id outside the codebook");
        }
        inv.push_back(to_inventory[static_cast<std::size_t>(id)]);
    }
    inv = units::reduce(inv).units;
    units::UnitSeq round;
    if (!inv.empty()) {
        const numcore::Tensor feats = synthworld::render(inv, lang.speakers[0], lang, 0);
        round = units::reduce(units::quantize(feats, cb)).units;
    }
    if (content.empty()) {
        return round.empty() ? 0.0 : 100.0;
    }
    return units::uer(round, content);
}

nlohmann::json DurationConfig::to_json() const {
    return nlohmann::json{{"seed", seed},         {"vocab", vocab},
                          {"width", width},       {"hidden", hidden},
                          {"weight", weight},     {"batch", batch},
                          {"updates", updates},   {"warmup", warmup},
                          {"peak_lr", peak_lr},   {"half_life", half_life},
                          {"eval_interval", eval_interval}};
}

DurationConfig DurationConfig::from_json(const nlohmann::json& j) {
    DurationConfig c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.vocab = j.at("vocab").get<int>();
    c.width = j.at("width").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.weight = j.at("weight").get<double>();
    c.batch = j.at("batch").get<int>();
    c.updates = j.at("updates").get<int>();
    c.warmup = j.at("warmup").get<int>();
    c.peak_lr = j.at("peak_lr").get<double>();
    c.half_life = j.at("half_life").get<double>();
    c.eval_interval = j.at("eval_interval").get<int>();
    return c;
}

}  // namespace ts2::duration
