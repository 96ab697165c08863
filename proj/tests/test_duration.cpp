// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ts2/common/error.hpp"
#include "ts2/common/rng.hpp"
#include "ts2/duration/duration.hpp"
#include "ts2/synthworld/world.hpp"
#include "ts2/units/kmeans.hpp"
#include "ts2/units/units.hpp"

using namespace ts2;
using namespace ts2::duration;

namespace {

DurationConfig small_config(int vocab) {
    DurationConfig cfg;
    cfg.seed = 5;
    cfg.vocab = vocab;
    cfg.width = 16;
    cfg.hidden = 32;
    cfg.batch = 8;
    cfg.updates = 800;
    cfg.warmup = 50;
    cfg.peak_lr = 2e-3;
    cfg.half_life = 2000;
    return cfg;
}

// Random reduced sequence: no two adjacent tokens equal.
units::UnitSeq random_reduced(Rng& rng, int vocab, int len) {
    units::UnitSeq u;
    u.reserve(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) {
        int tok = static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab)));
        while (!u.empty() && tok == u.back()) {
            tok = static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab)));
        }
        u.push_back(tok);
    }
    return u;
}

std::vector<DurationSample> duration_corpus(Rng& rng, int n, int vocab,
                                            const std::function<int(int, Rng&)>& length_of) {
    std::vector<DurationSample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        DurationSample s;
        s.units = random_reduced(rng, vocab, 4 + static_cast<int>(rng.below(6)));
        for (int u : s.units) {
            s.durations.push_back(length_of(u, rng));
        }
        out.push_back(std::move(s));
    }
    return out;
}

synthworld::World proxy_world() {
    synthworld::WorldConfig wcfg;
    wcfg.seed = 555;
    wcfg.inventory_size = 10;
    wcfg.vocab_size = 16;
    wcfg.word_len_min = 3;
    wcfg.word_len_max = 4;
    wcfg.speakers_per_lang = 6;
    wcfg.base_duration_min = 3;
    wcfg.base_duration_max = 5;
    return synthworld::build_world(wcfg);
}

// Chains words whose boundaries stay distinct, giving one long reduced
// content sequence.
units::UnitSeq long_content(const synthworld::Language& lang, int n_words, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> ids;
    while (static_cast<int>(ids.size()) < n_words) {
        const int w = static_cast<int>(rng.below(lang.words.size()));
        if (!ids.empty()) {
            const auto& prev = lang.words[static_cast<std::size_t>(ids.back())];
            const auto& next = lang.words[static_cast<std::size_t>(w)];
            if (prev.back() == next.front()) {
                continue;
            }
        }
        ids.push_back(w);
    }
    return synthworld::sentence_units(lang, ids);
}

}  // namespace

TEST_CASE("config round trips through json and records the loss weight") {
    DurationConfig cfg;
    cfg.seed = 42;
    cfg.vocab = 64;
    cfg.weight = 1.0;
    const nlohmann::json j = cfg.to_json();
    CHECK(j.at("weight").get<double>() == 1.0);
    const DurationConfig back = DurationConfig::from_json(j);
    CHECK(back.seed == cfg.seed);
    CHECK(back.vocab == cfg.vocab);
    CHECK(back.weight == cfg.weight);
    CHECK(back.peak_lr == cfg.peak_lr);
}

TEST_CASE("constant duration corpus is predicted exactly") {
    const int vocab = 12;
    Rng rng(31);
    const auto train =
        duration_corpus(rng, 60, vocab, [](int, Rng&) { return 3; });
    const auto dev = duration_corpus(rng, 20, vocab, [](int, Rng&) { return 3; });

    DurationModel model(small_config(vocab));
    const DurationTrainResult result = train_duration(model, train, dev);
    CHECK(result.dev_mse < 1e-3);

    for (const auto& s : dev) {
        const units::DurationSeq pred = model.predict(s.units);
        REQUIRE(pred.size() == s.units.size());
        for (int d : pred) {
            CHECK(d == 3);
        }
        const units::UnitSeq full = predict_and_expand(model, s.units);
        CHECK(full.size() == 3 * s.units.size());
        CHECK(units::reduce(full).units == s.units);
    }
}

TEST_CASE("per unit durations are recovered from the embedding") {
    const int vocab = 12;
    const auto unit_len = [](int u, Rng&) { return 2 + (u % 5); };
    Rng rng(32);
    const auto train = duration_corpus(rng, 80, vocab, unit_len);
    const auto dev = duration_corpus(rng, 20, vocab, unit_len);

    DurationModel model(small_config(vocab));
    const DurationTrainResult result = train_duration(model, train, dev);
    CHECK(result.dev_mse < 5e-3);

    units::UnitSeq all_units;
    for (int u = 0; u < vocab; ++u) {
        all_units.push_back(u);
    }
    const units::DurationSeq pred = model.predict(all_units);
    for (int u = 0; u < vocab; ++u) {
        CHECK(pred[static_cast<std::size_t>(u)] == 2 + (u % 5));
    }
}

TEST_CASE("loss depends only on the log-domain gap") {
    DurationConfig cfg = small_config(4);
    cfg.updates = 0;  // evaluation only
    const auto dev_mse_with = [&](double pinned_log, int true_duration) {
        DurationModel model(cfg);
        auto state = model.store().state_dict();
        numcore::Tensor& w2 = state.at("w2");
        for (int i = 0; i < w2.numel(); ++i) {
            w2[i] = 0.0;
        }
        state.at("b2")[0] = pinned_log;
        model.store().load_state_dict(state);
        const std::vector<DurationSample> data = {{{0}, {true_duration}}};
        return train_duration(model, data, data).dev_mse;
    };
    const double two_vs_four = dev_mse_with(std::log(2.0), 4);
    const double four_vs_eight = dev_mse_with(std::log(4.0), 8);
    CHECK(two_vs_four == doctest::Approx(four_vs_eight).epsilon(1e-12));
    CHECK(two_vs_four == doctest::Approx(std::log(2.0) * std::log(2.0)));
}

TEST_CASE("malformed duration data is rejected") {
    DurationModel model(small_config(8));
    const std::vector<DurationSample> good = {{{0, 1}, {2, 3}}};
    CHECK_THROWS_AS(train_duration(model, {}, good), DataError);
    CHECK_THROWS_AS(train_duration(model, {{{0, 1}, {2, 0}}}, good), DataError);
    CHECK_THROWS_AS(train_duration(model, {{{0, 1}, {2}}}, good), DataError);
    CHECK_THROWS_AS(train_duration(model, {{{0, 99}, {2, 3}}}, good), DataError);
    CHECK_THROWS_AS(train_duration(model, good, {{{0, 1}, {-1, 3}}}), DataError);
    CHECK_THROWS_AS(model.forward({0, 99}), DataError);
    CHECK_THROWS_AS(model.forward({}), UsageError);
}

TEST_CASE("oracle durations invert reduction exactly") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        units::UnitSeq full;
        const int runs = 1 + static_cast<int>(rng.below(8));
        for (int r = 0; r < runs; ++r) {
            const int tok = static_cast<int>(rng.below(9));
            const int len = 1 + static_cast<int>(rng.below(5));
            if (!full.empty() && full.back() == tok) {
                continue;
            }
            full.insert(full.end(), static_cast<std::size_t>(len), tok);
        }
        const units::Reduced r = units::reduce(full);
        CHECK(units::expand(r.units, r.durations) == full);
    }
}

TEST_CASE("predictions stay positive for arbitrary inputs") {
    Rng rng(55);
    for (std::uint64_t seed : {9ULL, 10ULL, 11ULL}) {
        DurationConfig cfg = small_config(20);
        cfg.seed = seed;
        DurationModel model(cfg);  // untrained on purpose
        CHECK(predict_and_expand(model, {}).empty());
        for (int trial = 0; trial < 334; ++trial) {
            const units::UnitSeq u = random_reduced(rng, 20, 1 + static_cast<int>(rng.below(12)));
            const units::DurationSeq pred = model.predict(u);
            REQUIRE(pred.size() == u.size());
            for (int d : pred) {
                CHECK(d >= 1);
            }
            const units::UnitSeq full = predict_and_expand(model, u);
            CHECK(full.size() >= u.size());
            CHECK(full.size() <= 50 * u.size());
            CHECK(units::reduce(full).units == u);
        }
    }
}

TEST_CASE("jittered durations regress to the per-unit mean") {
    const int vocab = 12;
    const auto jittered = [](int u, Rng& rng) { return 3 + (u % 3) + static_cast<int>(rng.below(2)); };
    Rng rng(33);
    const auto train = duration_corpus(rng, 100, vocab, jittered);
    const auto dev = duration_corpus(rng, 30, vocab, jittered);

    DurationModel model(small_config(vocab));
    const DurationTrainResult result = train_duration(model, train, dev);
    // Residual dev MSE is bounded by the intrinsic log-domain jitter variance.
    CHECK(result.dev_mse < 0.08);
    for (const auto& s : dev) {
        const units::UnitSeq full = predict_and_expand(model, s.units);
        CHECK(full.size() >= s.units.size());
        CHECK(full.size() <= 50 * s.units.size());
    }
}

TEST_CASE("resynthesis proxy is zero at the fixed point") {
    const synthworld::World world = proxy_world();
    const synthworld::Language& lang = world.target();
    const units::UnitSeq content = long_content(lang, 8, 101);

    // The reference-speaker render must quantize straight back to content.
    const numcore::Tensor feats = synthworld::render(content, lang.speakers[0], lang, 0);
    CHECK(units::reduce(units::quantize(feats, lang.inventory)).units == content);

    CHECK(resynthesis_proxy(content, content, lang, lang.inventory) == 0.0);
    CHECK(resynthesis_proxy({}, {}, lang, lang.inventory) == 0.0);
    CHECK(resynthesis_proxy({}, content, lang, lang.inventory) == 100.0);
    CHECK_THROWS_AS(resynthesis_proxy({lang.inventory.size()}, content, lang, lang.inventory),
                    UsageError);
}

TEST_CASE("ten percent corruption scores near ten") {
    const synthworld::World world = proxy_world();
    const synthworld::Language& lang = world.target();
    const units::UnitSeq content = long_content(lang, 40, 202);
    REQUIRE(content.size() >= 100);

    Rng rng(404);
    units::UnitSeq corrupted = content;
    const int n = static_cast<int>(content.size());
    int substituted = 0;
    for (int i = 5; i < n - 1; i += 10) {
        int tok = static_cast<int>(rng.below(static_cast<std::uint64_t>(lang.inventory.size())));
        while (tok == corrupted[static_cast<std::size_t>(i)] ||
               tok == corrupted[static_cast<std::size_t>(i - 1)] ||
               tok == corrupted[static_cast<std::size_t>(i + 1)]) {
            tok = static_cast<int>(rng.below(static_cast<std::uint64_t>(lang.inventory.size())));
        }
        corrupted[static_cast<std::size_t>(i)] = tok;
        ++substituted;
    }
    const double expected = 100.0 * substituted / n;
    const double score = resynthesis_proxy(corrupted, content, lang, lang.inventory);
    CHECK(score > expected - 3.0);
    CHECK(score < expected + 3.0);
}

TEST_CASE("proxy round trips a learned codebook") {
    const synthworld::World world = proxy_world();
    const synthworld::Language& lang = world.target();

    // Fit a learned codebook on clean reference renders; with as many
    // clusters as inventory units it relabels the inventory exactly.
    std::vector<numcore::Tensor> renders;
    int rows = 0;
    for (int w = 0; w < static_cast<int>(lang.words.size()); ++w) {
        renders.push_back(
            synthworld::render(lang.words[static_cast<std::size_t>(w)], lang.speakers[0], lang,
                               derive_seed(9, "cb", static_cast<std::uint64_t>(w))));
        rows += renders.back().rows();
    }
    numcore::Tensor frames({rows, world.config.feature_dim});
    int at = 0;
    for (const auto& r : renders) {
        std::copy(r.data(), r.data() + r.numel(), frames.data() + at * world.config.feature_dim);
        at += r.rows();
    }
    const units::Codebook learned = units::kmeans_fit(frames, lang.inventory.size(), 3);

    const std::vector<int> m = synthworld::inventory_to_learned(lang, -1, learned);
    const units::UnitSeq content = long_content(lang, 10, 303);
    units::UnitSeq mapped;
    for (int u : content) {
        mapped.push_back(m[static_cast<std::size_t>(u)]);
    }
    CHECK(resynthesis_proxy(mapped, mapped, lang, learned) == 0.0);
}

TEST_CASE("duration training is deterministic") {
    const int vocab = 10;
    Rng rng(88);
    const auto train = duration_corpus(rng, 30, vocab, [](int u, Rng&) { return 2 + u % 4; });
    DurationConfig cfg = small_config(vocab);
    cfg.updates = 120;

    DurationModel a(cfg);
    DurationModel b(cfg);
    const DurationTrainResult ra = train_duration(a, train, {});
    const DurationTrainResult rb = train_duration(b, train, {});
    CHECK(ra.final_train_mse == rb.final_train_mse);

    const auto sa = a.store().state_dict();
    const auto sb = b.store().state_dict();
    REQUIRE(sa.size() == sb.size());
    for (const auto& [name, ta] : sa) {
        const numcore::Tensor& tb = sb.at(name);
        REQUIRE(ta.numel() == tb.numel());
        for (int i = 0; i < ta.numel(); ++i) {
            CHECK(ta[i] == tb[i]);
        }
    }
}
