// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "ts2/common/error.hpp"
#include "ts2/common/rng.hpp"
#include "ts2/normalizer/normalizer.hpp"
#include "ts2/numcore/ops.hpp"
#include "ts2/synthworld/world.hpp"
#include "ts2/units/kmeans.hpp"
#include "ts2/units/units.hpp"

using namespace ts2;
using namespace ts2::normalizer;

namespace {

NormalizerConfig tiny_config(int vocab) {
    NormalizerConfig cfg;
    cfg.seed = 7;
    cfg.vocab = vocab;
    cfg.width = 32;
    cfg.blocks = 2;
    cfg.heads = 4;
    cfg.ff_hidden = 64;
    cfg.dropout = 0.05;
    cfg.batch = 4;
    cfg.pretrain_updates = 150;
    cfg.pretrain_warmup = 30;
    cfg.finetune_updates = 400;
    cfg.freeze_updates = 100;
    cfg.warmup = 50;
    cfg.peak_lr = 2e-3;
    cfg.half_life = 2000;
    cfg.eval_interval = 50;
    return cfg;
}

struct MiniWorld {
    synthworld::World world;
    units::Codebook learned;
    std::vector<NormSample> train;
    std::vector<NormSample> dev;
};

// A small single-language data kit: multi-speaker renders quantized with a
// learned codebook, paired with reference-speaker unit sequences.
MiniWorld make_mini_world(int n_train, int n_dev) {
    synthworld::WorldConfig wcfg;
    wcfg.seed = 555;
    wcfg.inventory_size = 10;
    wcfg.vocab_size = 16;
    wcfg.word_len_min = 3;
    wcfg.word_len_max = 4;
    wcfg.speakers_per_lang = 6;
    wcfg.base_duration_min = 3;
    wcfg.base_duration_max = 5;

    MiniWorld mw;
    mw.world = synthworld::build_world(wcfg);
    const synthworld::Language& lang = mw.world.target();

    Rng rng(808);
    auto draw_words = [&] {
        for (;;) {
            const int w1 = static_cast<int>(rng.below(lang.words.size()));
            const int w2 = static_cast<int>(rng.below(lang.words.size()));
            if (lang.words[static_cast<std::size_t>(w1)].back() !=
                lang.words[static_cast<std::size_t>(w2)].front()) {
                return std::vector<int>{w1, w2};
            }
        }
    };

    // Fit the learned codebook on pooled multi-speaker frames.
    std::vector<numcore::Tensor> renders;
    int rows = 0;
    for (int t = 0; t < 120; ++t) {
        const auto words = draw_words();
        const int spk = static_cast<int>(rng.below(lang.speakers.size()));
        renders.push_back(synthworld::render(synthworld::sentence_units(lang, words),
                                             lang.speakers[static_cast<std::size_t>(spk)], lang,
                                             derive_seed(1, "cb", t)));
        rows += renders.back().rows();
    }
    numcore::Tensor frames({rows, wcfg.feature_dim});
    int at = 0;
    for (const auto& r : renders) {
        std::copy(r.data(), r.data() + r.numel(), frames.data() + at * wcfg.feature_dim);
        at += r.rows();
    }
    mw.learned = units::kmeans_fit(frames, 40, 3);

    auto make_sample = [&](std::uint64_t tag) {
        const auto words = draw_words();
        const units::UnitSeq content = synthworld::sentence_units(lang, words);
        const int spk = 1 + static_cast<int>(rng.below(lang.speakers.size() - 1));
        NormSample s;
        s.features = synthworld::render(content, lang.speakers[static_cast<std::size_t>(spk)],
                                        lang, derive_seed(2, "utt", tag));
        s.frame_units = units::quantize(s.features, mw.learned);
        const numcore::Tensor ref_feats =
            synthworld::render(content, lang.speakers[0], lang, derive_seed(3, "ref", tag));
        s.target = units::reduce(units::quantize(ref_feats, mw.learned)).units;
        return s;
    };
    for (int i = 0; i < n_train; ++i) {
        mw.train.push_back(make_sample(static_cast<std::uint64_t>(i)));
    }
    for (int i = 0; i < n_dev; ++i) {
        mw.dev.push_back(make_sample(static_cast<std::uint64_t>(1000 + i)));
    }
    return mw;
}

}  // namespace

TEST_CASE("encoder halves the time axis with ceiling") {
    NormalizerModel model(tiny_config(12));
    Rng rng(4);
    for (int t : {1, 2, 3, 5, 8, 9, 40}) {
        numcore::Tensor f({t, 16});
        for (int i = 0; i < f.numel(); ++i) {
            f[i] = rng.gauss();
        }
        const numcore::Var enc = model.encode(f, {}, false, nullptr);
        CHECK(enc->value.rows() == (t + 1) / 2);
        CHECK(enc->value.cols() == 32);
    }
    CHECK_THROWS_AS(model.encode(numcore::Tensor({0, 16}), {}, false, nullptr), UsageError);
}

TEST_CASE("span masking hits roughly the configured fraction") {
    NormalizerConfig cfg = tiny_config(12);
    cfg.mask_rate = 0.3;
    cfg.mask_span = 3;
    NormalizerModel model(cfg);
    Rng rng(99);
    long masked = 0;
    long total = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int t = 60;
        const std::vector<int> rows = model.sample_mask(t, rng);
        masked += static_cast<long>(rows.size());
        total += t;
        std::set<int> uniq(rows.begin(), rows.end());
        CHECK(uniq.size() == rows.size());
        for (int r : rows) {
            CHECK(r >= 0);
            CHECK(r < t);
        }
        const std::vector<int> pos = model.masked_encoder_positions(rows, t);
        for (int p : pos) {
            CHECK(uniq.count(2 * p) == 1);
        }
    }
    const double frac = static_cast<double>(masked) / static_cast<double>(total);
    INFO("masked fraction ", frac);
    CHECK(frac > 0.15);
    CHECK(frac < 0.45);
}

TEST_CASE("pretraining beats constant predictors on held-out masked units") {
    MiniWorld mw = make_mini_world(150, 40);
    NormalizerConfig cfg = tiny_config(mw.learned.size());
    cfg.pretrain_updates = 600;
    cfg.pretrain_peak_lr = 2e-3;
    NormalizerModel model(cfg);
    const PretrainResult r = pretrain(model, mw.train, mw.dev);

    // Bar: the frequency of the most common dev frame unit, i.e. the best any
    // input-independent predictor can do.
    std::vector<long> counts(static_cast<std::size_t>(mw.learned.size()), 0);
    long total = 0;
    for (const auto& s : mw.dev) {
        for (int u : s.frame_units) {
            ++counts[static_cast<std::size_t>(u)];
            ++total;
        }
    }
    const double majority =
        static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
        static_cast<double>(total);
    INFO("dev masked accuracy ", r.dev_masked_accuracy, " majority ", majority);
    CHECK(r.dev_masked_accuracy > majority + 0.05);
    CHECK(r.dev_masked_accuracy > 0.15);
    CHECK(std::isfinite(r.final_loss));
}

TEST_CASE("finetuning reaches low dev error and restores the best checkpoint") {
    MiniWorld mw = make_mini_world(60, 16);
    NormalizerConfig cfg = tiny_config(mw.learned.size());
    NormalizerModel model(cfg);
    pretrain(model, mw.train, mw.dev);
    const double before = dev_uer(model, mw.dev);

    const FinetuneResult r = finetune(model, mw.train, mw.dev);
    INFO("dev uer before ", before, " best ", r.best_dev_uer);
    CHECK(r.best_dev_uer < before);
    CHECK(r.best_dev_uer <= 20.0);
    CHECK(r.infeasible_skipped == 0);
    CHECK_FALSE(r.dev_curve.empty());
    CHECK(r.best_update >= 1);

    // The model was left at the best checkpoint.
    CHECK(dev_uer(model, mw.dev) == doctest::Approx(r.best_dev_uer).epsilon(1e-12));

    // Decodes are reduced and inside the vocabulary.
    for (const auto& s : mw.dev) {
        const units::UnitSeq out = model.normalize(s.features);
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(out[i] >= 0);
            CHECK(out[i] < mw.learned.size());
            if (i > 0) {
                CHECK(out[i] != out[i - 1]);
            }
        }
    }
}

TEST_CASE("frozen phase keeps transformer blocks fixed") {
    MiniWorld mw = make_mini_world(20, 6);
    NormalizerConfig cfg = tiny_config(mw.learned.size());
    cfg.pretrain_updates = 20;
    cfg.finetune_updates = 40;
    cfg.freeze_updates = 40;  // frozen for the whole run
    cfg.eval_interval = 20;
    NormalizerModel model(cfg);
    pretrain(model, mw.train, mw.dev);

    const auto before = model.store().state_dict();
    const FinetuneResult r = finetune(model, mw.train, mw.dev);

    // Best-checkpoint reload happened, so compare against the curve-tracked
    // states via a fresh forward: frozen params must equal the snapshot.
    const auto after = model.store().state_dict();
    bool conv_changed = false;
    for (const auto& [name, before_t] : before) {
        const numcore::Tensor& after_t = after.at(name);
        bool same = true;
        for (int i = 0; i < before_t.numel(); ++i) {
            same = same && before_t[i] == after_t[i];
        }
        if (name.rfind("enc", 0) == 0) {
            INFO("frozen param ", name);
            CHECK(same);
        } else if (name.rfind("conv", 0) == 0 || name.rfind("ctc", 0) == 0) {
            conv_changed = conv_changed || !same;
        }
    }
    CHECK(conv_changed);
    CHECK(r.best_update >= 1);
}

TEST_CASE("unalignable targets are skipped and counted") {
    MiniWorld mw = make_mini_world(8, 4);
    NormalizerConfig cfg = tiny_config(mw.learned.size());
    cfg.pretrain_updates = 5;
    cfg.finetune_updates = 10;
    cfg.freeze_updates = 0;
    cfg.eval_interval = 5;
    NormalizerModel model(cfg);

    // One sample whose target cannot fit in ceil(T/2) frames.
    NormSample bad;
    bad.features = numcore::Tensor({6, 16}, 0.1);
    bad.target = {0, 1, 2, 3, 0, 1, 2, 3};
    std::vector<NormSample> train = mw.train;
    train.push_back(bad);

    const FinetuneResult r = finetune(model, train, mw.dev);
    INFO("skipped ", r.infeasible_skipped);
    CHECK(r.infeasible_skipped > 0);

    // A training set of only unalignable pairs cannot produce a checkpoint.
    std::vector<NormSample> all_bad = {bad};
    NormalizerModel fresh(cfg);
    CHECK_THROWS_AS(finetune(fresh, all_bad, mw.dev), DivergenceError);
}

TEST_CASE("training is bit-deterministic in the seed") {
    MiniWorld mw = make_mini_world(16, 5);
    NormalizerConfig cfg = tiny_config(mw.learned.size());
    cfg.pretrain_updates = 30;
    cfg.finetune_updates = 60;
    cfg.freeze_updates = 20;
    cfg.eval_interval = 20;

    auto run = [&] {
        NormalizerModel model(cfg);
        pretrain(model, mw.train, mw.dev);
        const FinetuneResult r = finetune(model, mw.train, mw.dev);
        return std::make_pair(r.best_dev_uer, model.store().state_dict());
    };
    const auto [uer_a, state_a] = run();
    const auto [uer_b, state_b] = run();
    CHECK(uer_a == uer_b);
    REQUIRE(state_a.size() == state_b.size());
    for (const auto& [name, ta] : state_a) {
        const numcore::Tensor& tb = state_b.at(name);
        REQUIRE(ta.numel() == tb.numel());
        for (int i = 0; i < ta.numel(); ++i) {
            CHECK(ta[i] == tb[i]);
        }
    }
}
