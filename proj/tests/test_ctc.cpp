// SPDX-License-Identifier: Apache-2.0
//
// CTC loss, gradient, and decoding. The forward-backward implementation is
// held against an exact path-enumeration oracle on small instances and a
// finite-difference oracle for the gradient, as well as hand-computed
// goldens.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "ts2/common/error.hpp"
#include "ts2/common/rng.hpp"
#include "ts2/ctc/ctc.hpp"
#include "ts2/numcore/graph.hpp"
#include "ts2/numcore/ops.hpp"

using namespace ts2;
using namespace ts2::ctc;
using numcore::Tensor;
using numcore::Var;
using units::UnitSeq;

namespace {

// Random [T, V+1] log-distribution.
Tensor random_log_probs(Rng& rng, int t, int v_plus_1, double sharpness = 1.0) {
    Tensor logits({t, v_plus_1});
    for (int i = 0; i < logits.numel(); ++i) logits[i] = rng.gauss() * sharpness;
    for (int r = 0; r < t; ++r) {
        double m = -1e300;
        for (int j = 0; j < v_plus_1; ++j) m = std::max(m, logits.at2(r, j));
        double z = 0.0;
        for (int j = 0; j < v_plus_1; ++j) z += std::exp(logits.at2(r, j) - m);
        const double lz = m + std::log(z);
        for (int j = 0; j < v_plus_1; ++j) logits.at2(r, j) -= lz;
    }
    return logits;
}

UnitSeq random_target(Rng& rng, int max_len, int v) {
    UnitSeq t(static_cast<std::size_t>(rng.uniform_int(0, max_len)));
    for (auto& tok : t) tok = rng.uniform_int(0, v - 1);
    return t;
}

}  // namespace

TEST_CASE("uniform two-frame instance matches the enumeration by hand") {
    // V = 1 unit plus blank, both frames uniform over 2 symbols. Paths that
    // collapse to [0]: (0,0), (0,blank), (blank,0) -> 3 * (1/2)^2 = 3/4.
    Tensor lp({2, 2}, std::log(0.5));
    CtcResult res = ctc_loss(lp, {0});
    CHECK(res.loss == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
    CHECK(ctc_brute_force(lp, {0}) == doctest::Approx(0.75).epsilon(1e-12));

    // Three symbols (2 units + blank), uniform 1/3, target [0]:
    // (0,0), (0,b), (b,0) -> 3 * (1/3)^2 = 1/3.
    Tensor lp3({2, 3}, std::log(1.0 / 3.0));
    CtcResult res3 = ctc_loss(lp3, {0});
    CHECK(res3.loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("infeasible targets give infinite loss without crashing") {
    Tensor lp({2, 3}, std::log(1.0 / 3.0));
    CtcResult res = ctc_loss(lp, {0, 1, 0}, true);
    CHECK(std::isinf(res.loss));
    CHECK(res.grad.empty());

    // Repeated units need a blank in between: [0,0] needs at least 3 frames.
    CtcResult rep = ctc_loss(lp, {0, 0});
    CHECK(std::isinf(rep.loss));

    Tensor lp3({3, 3}, std::log(1.0 / 3.0));
    CHECK(std::isfinite(ctc_loss(lp3, {0, 0}).loss));

    // Empty input: only the empty target is reachable.
    CHECK(ctc_loss(Tensor({0, 3}), {}).loss == 0.0);
    CHECK(std::isinf(ctc_loss(Tensor({0, 3}), {0}).loss));
}

TEST_CASE("loss agrees with exact path enumeration") {
    Rng rng(3001);
    int checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int t = rng.uniform_int(1, 5);
        const int v = rng.uniform_int(1, 4);
        Tensor lp = random_log_probs(rng, t, v + 1);
        UnitSeq target = random_target(rng, 4, v);
        const double brute = ctc_brute_force(lp, target);
        CtcResult res = ctc_loss(lp, target);
        if (brute == 0.0) {
            CHECK(std::isinf(res.loss));
        } else {
            CHECK(std::exp(-res.loss) == doctest::Approx(brute).epsilon(1e-10));
            ++checked;
        }
    }
    CHECK(checked > 100);  // most random instances must be feasible
}

TEST_CASE("brute force handles the degenerate cases") {
    Rng rng(3002);
    Tensor lp = random_log_probs(rng, 3, 3);
    // Empty target: only the all-blank path.
    double blanks = lp.at2(0, 2) + lp.at2(1, 2) + lp.at2(2, 2);
    CHECK(ctc_brute_force(lp, {}) == doctest::Approx(std::exp(blanks)).epsilon(1e-12));

    Tensor one = random_log_probs(rng, 1, 4);
    CHECK(ctc_brute_force(one, {1}) == doctest::Approx(std::exp(one.at2(0, 1))).epsilon(1e-12));

    CHECK_THROWS_AS(ctc_brute_force(Tensor({9, 3}), {}), UsageError);
    CHECK_THROWS_AS(ctc_brute_force(Tensor({2, 7}), {}), UsageError);
}

TEST_CASE("analytic gradient matches finite differences") {
    Rng rng(3003);
    for (int trial = 0; trial < 40; ++trial) {
        const int t = rng.uniform_int(2, 6);
        const int v = rng.uniform_int(1, 4);
        Tensor lp = random_log_probs(rng, t, v + 1);
        UnitSeq target = random_target(rng, 3, v);
        CtcResult res = ctc_loss(lp, target, true);
        if (std::isinf(res.loss)) continue;
        REQUIRE(res.grad.same_shape(lp));

        const double eps = 1e-6;
        for (int i = 0; i < lp.numel(); ++i) {
            const double saved = lp[i];
            lp[i] = saved + eps;
            const double up = ctc_loss(lp, target).loss;
            lp[i] = saved - eps;
            const double down = ctc_loss(lp, target).loss;
            lp[i] = saved;
            const double fd = (up - down) / (2.0 * eps);
            const double ad = res.grad[i];
            CHECK(std::fabs(fd - ad) <= 1e-4 * std::max({1.0, std::fabs(fd), std::fabs(ad)}));
        }
    }
}

TEST_CASE("gradient rows sum to minus one for feasible instances") {
    Rng rng(3004);
    for (int trial = 0; trial < 30; ++trial) {
        const int t = rng.uniform_int(3, 7);
        const int v = rng.uniform_int(2, 5);
        Tensor lp = random_log_probs(rng, t, v + 1);
        UnitSeq target = random_target(rng, 3, v);
        CtcResult res = ctc_loss(lp, target, true);
        if (std::isinf(res.loss)) continue;
        for (int r = 0; r < t; ++r) {
            double s = 0.0;
            for (int j = 0; j <= v; ++j) s += res.grad.at2(r, j);
            CHECK(s == doctest::Approx(-1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("loss stays finite and NaN-free at extreme log probabilities") {
    const int t = 30, v = 3;
    Tensor lp({t, v + 1});
    // Nearly deterministic rows: one symbol near certainty, others at e^-100.
    UnitSeq target;
    for (int r = 0; r < t; ++r) {
        const int hot = (r / 3) % v;
        if (target.empty() || target.back() != hot) target.push_back(hot);
        for (int j = 0; j <= v; ++j) lp.at2(r, j) = -100.0;
        lp.at2(r, hot) = -3e-42;  // ~log(1)
    }
    CtcResult res = ctc_loss(lp, target, true);
    CHECK(std::isfinite(res.loss));
    CHECK(res.loss >= 0.0);
    CHECK(res.grad.all_finite());
    CHECK(std::exp(-res.loss) <= 1.0);
    CHECK(std::exp(-res.loss) > 0.0);
}

TEST_CASE("loss maps to a probability in (0, 1]") {
    Rng rng(3005);
    for (int trial = 0; trial < 50; ++trial) {
        const int t = rng.uniform_int(1, 7);
        const int v = rng.uniform_int(1, 4);
        Tensor lp = random_log_probs(rng, t, v + 1, 2.0);
        UnitSeq target = random_target(rng, 4, v);
        CtcResult res = ctc_loss(lp, target);
        if (std::isinf(res.loss)) continue;
        const double p = std::exp(-res.loss);
        CHECK(p > 0.0);
        CHECK(p <= 1.0 + 1e-12);
    }
}

TEST_CASE("input validation") {
    Tensor raw({2, 3});  // all zeros: rows are not log-distributions
    CHECK_THROWS_AS(ctc_loss(raw, {0}), UsageError);

    Tensor lp({2, 3}, std::log(1.0 / 3.0));
    CHECK_THROWS_AS(ctc_loss(lp, {2}), UsageError);  // blank in target
    CHECK_THROWS_AS(ctc_loss(lp, {-1}), UsageError);
}

TEST_CASE("best path decoding") {
    const double hi = std::log(0.7), lo = std::log(0.15);
    // Symbols: 0=A, 1=B, 2=blank.
    auto frame = [&](int hot) {
        std::vector<double> row(3, lo);
        row[static_cast<std::size_t>(hot)] = hi;
        return row;
    };
    auto build = [&](const std::vector<int>& hots) {
        Tensor lp({static_cast<int>(hots.size()), 3});
        for (std::size_t r = 0; r < hots.size(); ++r) {
            auto row = frame(hots[r]);
            for (int j = 0; j < 3; ++j) lp.at2(static_cast<int>(r), j) = row[static_cast<std::size_t>(j)];
        }
        return lp;
    };

    CHECK(best_path_decode(build({0, 0, 2, 1})) == UnitSeq{0, 1});
    CHECK(best_path_decode(build({2, 2, 2})).empty());
    CHECK(best_path_decode(build({0, 2, 0})) == UnitSeq{0, 0});
    CHECK(best_path_decode(Tensor()).empty());

    // Ties resolve to the lowest index.
    Tensor tie({1, 3}, std::log(1.0 / 3.0));
    CHECK(best_path_decode(tie) == UnitSeq{0});
}

TEST_CASE("graph node backpropagates the cached analytic gradient") {
    Rng rng(3006);
    const int t = 5, v = 3;
    Tensor logits({t, v + 1});
    for (int i = 0; i < logits.numel(); ++i) logits[i] = rng.gauss();
    UnitSeq target = {1, 0, 2};

    Var x = numcore::leaf(logits, true);
    auto build = [&] { return ctc_loss_node(numcore::log_row_softmax(x), target); };

    x->zero_grad();
    Var loss = build();
    CHECK(std::isfinite(loss->value[0]));
    numcore::backward(loss);

    const double eps = 1e-6;
    for (int i = 0; i < logits.numel(); ++i) {
        const double saved = x->value[i];
        x->value[i] = saved + eps;
        const double up = build()->value[0];
        x->value[i] = saved - eps;
        const double down = build()->value[0];
        x->value[i] = saved;
        const double fd = (up - down) / (2.0 * eps);
        CHECK(std::fabs(fd - x->grad[i]) <= 1e-4 * std::max({1.0, std::fabs(fd), std::fabs(x->grad[i])}));
    }

    // Infeasible target: infinite forward value, zero gradient, no NaNs.
    Var y = numcore::leaf(logits, true);
    Var bad = ctc_loss_node(numcore::log_row_softmax(y), {0, 1, 0, 1, 0, 1});
    CHECK(std::isinf(bad->value[0]));
    y->zero_grad();
    numcore::backward(bad);
    if (y->grad.same_shape(y->value))
        for (int i = 0; i < y->grad.numel(); ++i) CHECK(y->grad[i] == 0.0);
}
